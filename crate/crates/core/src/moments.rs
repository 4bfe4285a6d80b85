//! Sample power moments, Hankel matrices and the positive-definiteness check
//! that certifies the truncated Hamburger problem is solvable.
//!
//! All estimators work on the monomial vector `[1, x, ..., x^n]`, so the
//! moment matrix of order `2n` is the `(n+1) x (n+1)` Hankel matrix with
//! entry `(i, j) = mu_{i+j}`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Power moments `mu_0..=mu_order`, with `mu_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSequence {
    order: usize,
    values: Vec<f64>,
    /// Number of samples the moments were averaged over; `None` for
    /// population (analytic) moments.
    sample_count: Option<usize>,
}

impl MomentSequence {
    /// Builds a sequence from explicit values (population moments, tests).
    ///
    /// `values[0]` must be 1 and `values.len() - 1` must be an even order >= 2.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.len() < 3 || (values.len() - 1) % 2 != 0 {
            return Err(Error::InvalidOrder(values.len().saturating_sub(1)));
        }
        if values[0] != 1.0 {
            return Err(Error::InvalidArgument(format!(
                "mu_0 must equal 1, got {}",
                values[0]
            )));
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFiniteSample { index, value });
        }
        Ok(Self {
            order: values.len() - 1,
            values,
            sample_count: None,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Half the order, i.e. the degree of the monomial vector.
    pub fn half_order(&self) -> usize {
        self.order / 2
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn sample_count(&self) -> Option<usize> {
        self.sample_count
    }

    pub fn mean(&self) -> f64 {
        self.values[1]
    }

    /// `mu_2 - mu_1^2`, clamped at zero.
    pub fn variance(&self) -> f64 {
        (self.values[2] - self.values[1] * self.values[1]).max(0.0)
    }

    /// Keeps only the moments up to `order`.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        check_order(order)?;
        if order > self.order {
            return Err(Error::InvalidOrder(order));
        }
        Ok(Self {
            order,
            values: self.values[..=order].to_vec(),
            sample_count: self.sample_count,
        })
    }

    /// Moments of `a X + b`, from the moments of `X`, by binomial expansion.
    pub fn affine_image(&self, a: f64, b: f64) -> Self {
        let binom = binomial_table(self.order);
        let mut a_pow = vec![1.0; self.order + 1];
        let mut b_pow = vec![1.0; self.order + 1];
        for k in 1..=self.order {
            a_pow[k] = a_pow[k - 1] * a;
            b_pow[k] = b_pow[k - 1] * b;
        }
        let values = (0..=self.order)
            .map(|k| {
                let mut acc = KahanSum::default();
                for j in 0..=k {
                    acc.add(binom[k][j] * a_pow[j] * b_pow[k - j] * self.values[j]);
                }
                acc.total()
            })
            .collect::<Vec<_>>();
        let mut values = values;
        values[0] = 1.0;
        Self {
            order: self.order,
            values,
            sample_count: self.sample_count,
        }
    }

    /// Relative size of `residual` at order `k`: the residual divided by
    /// `max(|mu_k|, mu_2^{k/2})`, the natural magnitude of `x^k` for this data.
    pub fn relative_residual(&self, k: usize, residual: f64) -> f64 {
        let scale = self.values[2].max(f64::MIN_POSITIVE).powf(k as f64 / 2.0);
        residual.abs() / self.values[k].abs().max(scale)
    }
}

fn check_order(order: usize) -> Result<()> {
    if order < 2 || order % 2 != 0 {
        Err(Error::InvalidOrder(order))
    } else {
        Ok(())
    }
}

pub(crate) fn binomial_table(n: usize) -> Vec<Vec<f64>> {
    let mut table = vec![vec![0.0; n + 1]; n + 1];
    for k in 0..=n {
        table[k][0] = 1.0;
        for j in 1..=k {
            table[k][j] = table[k - 1][j - 1] + if j < k { table[k - 1][j] } else { 0.0 };
        }
    }
    table
}

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct KahanSum {
    sum: f64,
    compensation: f64,
}

impl KahanSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

fn validate_samples(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::EmptyOrTiny(samples.len()));
    }
    if let Some((index, &value)) = samples.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFiniteSample { index, value });
    }
    Ok(())
}

/// `mu_k = (1/m) sum_j X_j^k` for `k = 0..=order`, accumulated with
/// compensated summation.
pub fn compute_sample_moments(samples: &[f64], order: usize) -> Result<MomentSequence> {
    validate_samples(samples)?;
    check_order(order)?;
    let mut sums = vec![KahanSum::default(); order + 1];
    for &x in samples {
        let mut power = 1.0;
        for sum in sums.iter_mut() {
            sum.add(power);
            power *= x;
        }
    }
    let m = samples.len() as f64;
    let mut values: Vec<f64> = sums.iter().map(|s| s.total() / m).collect();
    values[0] = 1.0;
    Ok(MomentSequence {
        order,
        values,
        sample_count: Some(samples.len()),
    })
}

/// Sample quantile of sorted data by linear interpolation between order
/// statistics (`h = (m - 1) q`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Interquartile range of unsorted data.
pub fn interquartile_range(samples: &[f64]) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile(&sorted, 0.75) - quantile(&sorted, 0.25)
}

/// Affine change of coordinates `y = (x - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: f64,
    pub scale: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self {
        shift: 0.0,
        scale: 1.0,
    };

    /// Mean and (population) standard deviation of the samples.
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        validate_samples(samples)?;
        let m = samples.len() as f64;
        let mut mean = KahanSum::default();
        samples.iter().for_each(|&x| mean.add(x));
        let mean = mean.total() / m;
        let mut var = KahanSum::default();
        samples
            .iter()
            .for_each(|&x| var.add((x - mean) * (x - mean)));
        let std = (var.total() / m).sqrt();
        Self::checked(mean, std)
    }

    /// Mean and standard deviation implied by `mu_1` and `mu_2`.
    pub fn from_moments(moments: &MomentSequence) -> Result<Self> {
        Self::checked(moments.mean(), moments.variance().sqrt())
    }

    fn checked(shift: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::HankelNotPd {
                min_eigenvalue: 0.0,
            });
        }
        Ok(Self { shift, scale })
    }

    pub fn forward(&self, x: f64) -> f64 {
        (x - self.shift) / self.scale
    }

    pub fn inverse(&self, y: f64) -> f64 {
        y * self.scale + self.shift
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    /// Moments in standardized coordinates from raw-coordinate moments.
    pub fn apply_to_moments(&self, moments: &MomentSequence) -> MomentSequence {
        moments.affine_image(1.0 / self.scale, -self.shift / self.scale)
    }
}

/// Sample moments computed in standardized coordinates, together with the
/// map that produced them and the raw-coordinate moments.
#[derive(Debug, Clone)]
pub struct StandardizedMoments {
    pub raw: MomentSequence,
    pub standardized: MomentSequence,
    pub transform: Standardization,
}

impl StandardizedMoments {
    /// Standardizes the samples first, then averages powers; this avoids the
    /// cancellation of the binomial route for data far from the origin.
    pub fn from_samples(samples: &[f64], order: usize, standardize: bool) -> Result<Self> {
        let raw = compute_sample_moments(samples, order)?;
        if !standardize {
            return Ok(Self {
                standardized: raw.clone(),
                raw,
                transform: Standardization::IDENTITY,
            });
        }
        let transform = Standardization::from_samples(samples)?;
        let scaled: Vec<f64> = samples.iter().map(|&x| transform.forward(x)).collect();
        let standardized = compute_sample_moments(&scaled, order)?;
        Ok(Self {
            raw,
            standardized,
            transform,
        })
    }

    /// Standardization of known moments (population moments, no samples).
    pub fn from_moments(raw: &MomentSequence, standardize: bool) -> Result<Self> {
        let transform = if standardize {
            Standardization::from_moments(raw)?
        } else {
            Standardization::IDENTITY
        };
        Ok(Self {
            raw: raw.clone(),
            standardized: transform.apply_to_moments(raw),
            transform,
        })
    }
}

/// `(n+1) x (n+1)` Hankel matrix of a moment sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelMatrix {
    entries: DMatrix<f64>,
}

impl HankelMatrix {
    pub fn size(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.size())
            .map(|i| (0..self.size()).map(|j| self.entries[(i, j)]).collect())
            .collect()
    }

    /// `1e-12` times the largest diagonal entry.
    pub fn default_tolerance(&self) -> f64 {
        1e-12 * self.entries.diagonal().max()
    }
}

pub fn build_hankel(moments: &MomentSequence) -> HankelMatrix {
    let size = moments.half_order() + 1;
    HankelMatrix {
        entries: DMatrix::from_fn(size, size, |i, j| moments.get(i + j)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PdCertificate {
    pub is_pd: bool,
    pub min_eigenvalue: f64,
}

impl PdCertificate {
    /// Converts a failed certificate into [`Error::HankelNotPd`].
    pub fn require(self) -> Result<Self> {
        if self.is_pd {
            Ok(self)
        } else {
            Err(Error::HankelNotPd {
                min_eigenvalue: self.min_eigenvalue,
            })
        }
    }
}

/// Positive definiteness with the smallest eigenvalue reported.
///
/// `tol = None` selects [`HankelMatrix::default_tolerance`].
pub fn certify_positive_definite(h: &HankelMatrix, tol: Option<f64>) -> PdCertificate {
    let tol = tol.unwrap_or_else(|| h.default_tolerance());
    let min_eigenvalue = SymmetricEigen::new(h.entries.clone()).eigenvalues.min();
    PdCertificate {
        is_pd: min_eigenvalue > tol,
        min_eigenvalue,
    }
}

/// Parses a one-column CSV or newline-delimited list of decimal numbers.
///
/// Blank lines and `#` comments are skipped; a non-numeric first line is
/// treated as a header; only the first comma-separated field is read.
pub fn parse_samples(text: &str) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => samples.push(v),
            Err(_) if samples.is_empty() && line_no == 0 => continue,
            Err(_) => {
                return Err(Error::InvalidArgument(format!(
                    "line {}: cannot parse {field:?} as a number",
                    line_no + 1
                )))
            }
        }
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_pair() {
        let m = compute_sample_moments(&[1.0, -1.0], 2).unwrap();
        assert_eq!(m.values(), &[1.0, 0.0, 1.0]);
    }

    #[test]
    fn constant_samples() {
        let m = compute_sample_moments(&[2.0, 2.0, 2.0], 2).unwrap();
        assert_eq!(m.values(), &[1.0, 2.0, 4.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            compute_sample_moments(&[1.0], 2),
            Err(Error::EmptyOrTiny(1))
        );
        assert_eq!(compute_sample_moments(&[], 2), Err(Error::EmptyOrTiny(0)));
        assert!(matches!(
            compute_sample_moments(&[1.0, f64::NAN], 2),
            Err(Error::NonFiniteSample { index: 1, .. })
        ));
        assert_eq!(
            compute_sample_moments(&[1.0, 2.0], 3),
            Err(Error::InvalidOrder(3))
        );
        assert_eq!(
            compute_sample_moments(&[1.0, 2.0], 0),
            Err(Error::InvalidOrder(0))
        );
    }

    #[test]
    fn hankel_layout() {
        let h = build_hankel(&MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap());
        assert_eq!(h.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let h = build_hankel(&MomentSequence::from_values(vec![1.0, 2.0, 4.0]).unwrap());
        assert_eq!(h.to_rows(), vec![vec![1.0, 2.0], vec![2.0, 4.0]]);
        let h = build_hankel(&MomentSequence::from_values(vec![1.0, 0.0, 1.0, 0.0, 3.0]).unwrap());
        assert_eq!(
            h.to_rows(),
            vec![
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 3.0]
            ]
        );
    }

    #[test]
    fn identity_is_pd() {
        let h = build_hankel(&MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap());
        let cert = certify_positive_definite(&h, None);
        assert!(cert.is_pd);
        assert!((cert.min_eigenvalue - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_samples_are_degenerate() {
        let m = compute_sample_moments(&[2.0, 2.0, 2.0], 2).unwrap();
        let cert = certify_positive_definite(&build_hankel(&m), None);
        assert!(!cert.is_pd);
        assert!(matches!(cert.require(), Err(Error::HankelNotPd { .. })));
        assert!(Standardization::from_samples(&[2.0, 2.0, 2.0]).is_err());
    }

    #[test]
    fn gaussian_population_hankel_min_eigenvalue() {
        // Characteristic polynomial of [[1,0,1],[0,1,0],[1,0,3]] factors as
        // (1 - t) (t^2 - 4t + 2); smallest root is 2 - sqrt(2).
        let h = build_hankel(&MomentSequence::from_values(vec![1.0, 0.0, 1.0, 0.0, 3.0]).unwrap());
        let cert = certify_positive_definite(&h, None);
        assert!(cert.is_pd);
        assert!((cert.min_eigenvalue - (2.0 - 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn kahan_beats_naive_accumulation() {
        let mut acc = KahanSum::default();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.total(), 1000.0);
    }

    #[test]
    fn binomial_rows() {
        let t = binomial_table(6);
        assert_eq!(t[4], vec![1.0, 4.0, 6.0, 4.0, 1.0, 0.0, 0.0]);
        assert_eq!(t[6][3], 20.0);
    }

    #[test]
    fn standardized_moments_have_unit_variance() {
        let samples = [1.0, 2.0, 4.0, 7.0, 11.0];
        let sm = StandardizedMoments::from_samples(&samples, 4, true).unwrap();
        assert!(sm.standardized.mean().abs() < 1e-14);
        assert!((sm.standardized.get(2) - 1.0).abs() < 1e-14);
        let via_moments = StandardizedMoments::from_moments(&sm.raw, true).unwrap();
        for k in 0..=4 {
            assert!((via_moments.standardized.get(k) - sm.standardized.get(k)).abs() < 1e-10);
        }
    }

    #[test]
    fn parse_csv_with_header_and_comments() {
        let text = "value,extra\n1.5,a\n# comment\n\n-2e-1\n3\n";
        assert_eq!(parse_samples(text).unwrap(), vec![1.5, -0.2, 3.0]);
        assert!(parse_samples("1\nabc\n").is_err());
    }
}
