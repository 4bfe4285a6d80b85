//! Gaussian reference densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{MomentSequence, Standardization};

pub const DEFAULT_INFLATION: f64 = 4.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrior {
    pub mean: f64,
    pub std_dev: f64,
}

impl GaussianPrior {
    pub fn new(mean: f64, std_dev: f64) -> Result<Self> {
        if !(std_dev > 0.0) || !std_dev.is_finite() || !mean.is_finite() {
            return Err(Error::InvalidPrior(format!(
                "need finite mean and positive std_dev, got N({mean}, {std_dev}^2)"
            )));
        }
        Ok(Self { mean, std_dev })
    }

    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }

    pub fn pdf(&self, x: f64) -> f64 {
        eval_prior(self, x)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.std_dev;
        FRAC_1_SQRT_2PI.ln() - self.std_dev.ln() - 0.5 * z * z
    }

    /// Raw population moments `E[X^k]`, `k = 0..=order`.
    pub fn population_moments(&self, order: usize) -> Result<MomentSequence> {
        let central = gaussian_central_moments(self.std_dev, order);
        let values = (0..=order)
            .map(|k| {
                // E[(mean + Z)^k] with Z centred
                let mut acc = 0.0;
                let mut binom = 1.0;
                for j in 0..=k {
                    acc += binom * self.mean.powi((k - j) as i32) * central[j];
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
                acc
            })
            .collect();
        MomentSequence::from_values(values)
    }

    /// The same density expressed in the coordinates `y = (x - shift) / scale`.
    pub fn standardized(&self, transform: &Standardization) -> Self {
        Self {
            mean: transform.forward(self.mean),
            std_dev: self.std_dev / transform.scale,
        }
    }

    /// Inverse of [`GaussianPrior::standardized`].
    pub fn destandardized(&self, transform: &Standardization) -> Self {
        Self {
            mean: transform.inverse(self.mean),
            std_dev: self.std_dev * transform.scale,
        }
    }
}

/// `E[(sigma Z)^k]` for standard normal `Z`: zero for odd `k`, `sigma^k (k-1)!!` for even.
pub(crate) fn gaussian_central_moments(sigma: f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; order + 1];
    out[0] = 1.0;
    let mut k = 2;
    while k <= order {
        out[k] = out[k - 2] * (k - 1) as f64 * sigma * sigma;
        k += 2;
    }
    out
}

/// `r = N(mu_1, sigma^2)` with `sigma^2 = inflation * max(mu_2, mu_2 - mu_1^2)`,
/// which always satisfies `sigma^2 > mu_2` for `inflation > 1`.
pub fn default_prior(moments: &MomentSequence, inflation: f64) -> Result<GaussianPrior> {
    if !(inflation > 1.0) || !inflation.is_finite() {
        return Err(Error::InvalidPrior(format!(
            "inflation must exceed 1, got {inflation}"
        )));
    }
    let mu2 = moments.get(2);
    if !(mu2 > 0.0) {
        return Err(Error::InvalidPrior(format!(
            "second moment must be positive, got {mu2}"
        )));
    }
    let variance = inflation * mu2.max(moments.variance());
    GaussianPrior::new(moments.mean(), variance.sqrt())
}

pub fn eval_prior(prior: &GaussianPrior, x: f64) -> f64 {
    let z = (x - prior.mean) / prior.std_dev;
    FRAC_1_SQRT_2PI / prior.std_dev * (-0.5 * z * z).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, GridSpec};

    #[test]
    fn default_prior_examples() {
        let p = default_prior(
            &MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap(),
            4.0,
        )
        .unwrap();
        assert_eq!(p.mean, 0.0);
        assert!((p.std_dev - 2.0).abs() < 1e-15);
        let p = default_prior(
            &MomentSequence::from_values(vec![1.0, 2.0, 5.0]).unwrap(),
            4.0,
        )
        .unwrap();
        assert_eq!(p.mean, 2.0);
        assert!((p.std_dev - 20f64.sqrt()).abs() < 1e-14);
        assert!(p.variance() > 5.0);
    }

    #[test]
    fn default_prior_rejects_bad_input() {
        let m = MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap();
        assert!(default_prior(&m, 1.0).is_err());
        assert!(default_prior(&m, 0.5).is_err());
        let m = MomentSequence::from_values(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(default_prior(&m, 4.0).is_err());
    }

    #[test]
    fn pdf_values() {
        let std = GaussianPrior::new(0.0, 1.0).unwrap();
        assert!((eval_prior(&std, 0.0) - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-16);
        assert_eq!(eval_prior(&std, 1.3), eval_prior(&std, -1.3));
        let p = GaussianPrior::new(2.0, 3.0).unwrap();
        assert!(
            (eval_prior(&p, 2.0) - 1.0 / (3.0 * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-16
        );
        assert!((p.ln_pdf(0.7) - eval_prior(&p, 0.7).ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_invalid_std() {
        assert!(GaussianPrior::new(0.0, 0.0).is_err());
        assert!(GaussianPrior::new(0.0, -1.0).is_err());
        assert!(GaussianPrior::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn integrates_to_one_on_default_grid() {
        for (m, s) in [(0.0, 6.7), (-0.7, 6.2), (0.5, 3.5), (100.0, 0.01)] {
            let p = GaussianPrior::new(m, s).unwrap();
            let g = GridSpec::default().build(m, s).unwrap();
            assert!((integrate(|x| eval_prior(&p, x), &g).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn population_moments_of_shifted_gaussian() {
        let p = GaussianPrior::new(1.0, 2.0).unwrap();
        let m = p.population_moments(4).unwrap();
        // mean 1, var 4: E X^2 = 5, E X^3 = 1 + 3*4 = 13, E X^4 = 1 + 6*4 + 3*16 = 73
        assert_eq!(m.values(), &[1.0, 1.0, 5.0, 13.0, 73.0]);
    }
}
