//! Maximum-entropy densities with prescribed moments and the error bound
//! they yield for a moment-matched estimate.
//!
//! The fit minimizes the convex potential
//! `G(m) = int exp(-sum_i m_i y^i) dy + sum_i m_i mu_i` in standardized
//! coordinates, where the exponential stays representable. At the optimum
//! every moment constraint holds, so the entropy is exactly `sum_i m_i mu_i`
//! there, and `H[aX + b] = H[X] + ln a` maps it back.

use serde::{Deserialize, Serialize};

use crate::dual::{self, Kernel, MomentDual, NewtonOptions};
use crate::error::{Error, Result};
use crate::hellinger::DensityEstimate;
use crate::moments::{
    build_hankel, certify_positive_definite, interquartile_range, MomentSequence, Standardization,
    StandardizedMoments,
};
use crate::quadrature::{GridSpec, QuadratureGrid};

/// Slack below zero tolerated when an entropy difference should be a KL divergence.
pub const KL_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxEntOptions {
    pub max_iter: usize,
    pub tol_grad: f64,
    /// Relative moment tolerance at the optimum.
    pub tol_mom: f64,
    pub grid: GridSpec,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_grad: 1e-10,
            tol_mom: 1e-6,
            grid: GridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntDiagnostics {
    pub iterations: usize,
    /// Residuals `int y^k p - mu_k` in the standardized coordinates of the fit.
    pub moment_residuals: Vec<f64>,
    pub max_relative_residual: f64,
}

/// `p(x) = exp(-sum_i m_i y^i) / scale` with `y = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntDensity {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub standardization: Standardization,
    /// Entropy in raw coordinates, from the moment identity.
    pub entropy: f64,
    pub diagnostics: MaxEntDiagnostics,
}

impl MaxEntDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        let y = self.standardization.forward(x);
        let s = self
            .coefficients
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * y + c);
        (-s).exp() / self.standardization.scale
    }
}

/// Fits the maximum-entropy density with the given raw moments.
pub fn fit_maxent(moments: &MomentSequence, opts: &MaxEntOptions) -> Result<MaxEntDensity> {
    let sm = StandardizedMoments::from_moments(moments, true)?;
    let std_moments = &sm.standardized;
    certify_positive_definite(&build_hankel(std_moments), None).require()?;
    let grid = opts.grid.build(0.0, 1.0)?;
    let dual = MomentDual::new(
        Kernel::MaxEntropy,
        std_moments.values(),
        |_| 1.0,
        &grid,
        0.0,
    );
    // standard normal: exp(-(ln(2 pi)/2 + y^2/2))
    let mut start = vec![0.0; moments.order() + 1];
    start[0] = 0.5 * (2.0 * std::f64::consts::PI).ln();
    start[2] = 0.5;
    let newton = NewtonOptions {
        max_iter: opts.max_iter,
        tol_grad: opts.tol_grad,
        ..NewtonOptions::default()
    };
    let outcome = dual::minimize_with_continuation(&dual, &start, &newton, |gradient| {
        gradient
            .iter()
            .enumerate()
            .all(|(k, g)| std_moments.relative_residual(k, *g) <= opts.tol_mom)
    })?;
    let leading = *outcome.coeffs.last().expect("order >= 2");
    if leading < -1e-10 {
        return Err(Error::NonIntegrable);
    }
    let residuals: Vec<f64> = outcome.gradient.iter().map(|g| -g).collect();
    let max_relative_residual = residuals
        .iter()
        .enumerate()
        .map(|(k, r)| std_moments.relative_residual(k, *r))
        .fold(0.0, f64::max);
    let standardized_entropy: f64 = outcome
        .coeffs
        .iter()
        .zip(std_moments.values())
        .map(|(m, mu)| m * mu)
        .sum();
    Ok(MaxEntDensity {
        order: moments.order(),
        coefficients: outcome.coeffs,
        standardization: sm.transform,
        entropy: standardized_entropy + sm.transform.scale.ln(),
        diagnostics: MaxEntDiagnostics {
            iterations: outcome.iterations,
            moment_residuals: residuals,
            max_relative_residual,
        },
    })
}

/// `-int p ln p` with `0 ln 0 = 0`.
pub fn entropy<P: Fn(f64) -> f64>(density: P, grid: &QuadratureGrid) -> f64 {
    let values = grid.evaluate(|x| {
        let p = density(x);
        if p > 0.0 {
            -p * p.ln()
        } else {
            0.0
        }
    });
    grid.integrate_values(&values)
}

/// `KL(p || maxent) = H[maxent] - H[p]` for a density `p` sharing its moments.
///
/// Values in `[-KL_SLACK, 0)` are rounding and return zero; anything more
/// negative means the moments did not match.
pub fn kl_via_entropy_identity(maxent: &MaxEntDensity, target_entropy: f64) -> Result<f64> {
    clamp_kl(maxent.entropy - target_entropy, KL_SLACK)
}

fn clamp_kl(kl: f64, slack: f64) -> Result<f64> {
    if kl >= 0.0 {
        Ok(kl)
    } else if kl >= -slack {
        Ok(0.0)
    } else {
        Err(Error::NegativeResult(kl))
    }
}

/// `3 sqrt(sqrt(1 + 4 kl / 9) - 1)`, an upper bound on the sup-CDF distance
/// between two densities at divergence `kl`.
pub fn tv_upper_bound(kl: f64) -> f64 {
    3.0 * ((1.0 + 4.0 * kl.max(0.0) / 9.0).sqrt() - 1.0).sqrt()
}

/// Entropy of the data-generating density, or a stand-in for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TargetEntropy {
    /// Computed from the true density.
    Exact(f64),
    /// Histogram plug-in estimate from samples.
    PlugIn(f64),
    /// `-sum r_i ln r_i` over the empirical distribution, i.e. `ln m`.
    Empirical(f64),
    /// Computed from the true density, but paired with sample moments the
    /// truth does not share, so the entropy identity holds only as the
    /// sample grows.
    Asymptotic(f64),
}

impl TargetEntropy {
    pub fn from_density<P: Fn(f64) -> f64>(density: P, grid: &QuadratureGrid) -> Self {
        Self::Exact(entropy(density, grid))
    }

    /// Histogram entropy with Freedman–Diaconis bins; falls back to Scott's
    /// width when the interquartile range is zero.
    pub fn histogram(samples: &[f64]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::EmptyOrTiny(samples.len()));
        }
        let m = samples.len() as f64;
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        if !(hi > lo) {
            return Err(Error::HankelNotPd {
                min_eigenvalue: 0.0,
            });
        }
        let iqr = interquartile_range(samples);
        let mut width = 2.0 * iqr * m.powf(-1.0 / 3.0);
        if !(width > 0.0) {
            let mean = samples.iter().sum::<f64>() / m;
            let sd = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m).sqrt();
            width = 3.49 * sd * m.powf(-1.0 / 3.0);
        }
        let bins = (((hi - lo) / width).ceil() as usize).max(1);
        let mut counts = vec![0usize; bins];
        for &x in samples {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let h = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let frac = c as f64 / m;
                -frac * (frac / width).ln()
            })
            .sum();
        Ok(Self::PlugIn(h))
    }

    pub fn empirical(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyOrTiny(0));
        }
        Ok(Self::Empirical((samples.len() as f64).ln()))
    }

    pub fn value(&self) -> f64 {
        match *self {
            Self::Exact(v) | Self::PlugIn(v) | Self::Empirical(v) | Self::Asymptotic(v) => v,
        }
    }

    pub fn is_approximate(&self) -> bool {
        !matches!(self, Self::Exact(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub maxent_entropy: f64,
    pub estimate_entropy: f64,
    pub target: TargetEntropy,
    pub bound_estimate_term: f64,
    pub bound_true_term: f64,
    pub total: f64,
    pub approximate: bool,
}

/// Upper bound on `sup_x |F_est - F_true|` through the maximum-entropy
/// density with the same moments.
///
/// The estimate matches its moments only to the solver tolerance, so its
/// entropy gap may come out slightly negative; `moment_slack` bounds how much
/// is forgiven. With an approximate target entropy a negative gap is simply
/// clamped to zero.
pub fn error_bound_report(
    estimate: &DensityEstimate,
    moments: &MomentSequence,
    target: TargetEntropy,
    opts: &MaxEntOptions,
    moment_slack: f64,
) -> Result<BoundReport> {
    let maxent = fit_maxent(moments, opts)?;
    let grid = opts
        .grid
        .build(estimate.prior.mean, estimate.prior.std_dev)?;
    let estimate_entropy = entropy(|x| estimate.pdf(x), &grid);
    let kl_estimate = clamp_kl(
        maxent.entropy - estimate_entropy,
        moment_slack.max(KL_SLACK),
    )?;
    let kl_true = if target.is_approximate() {
        (maxent.entropy - target.value()).max(0.0)
    } else {
        kl_via_entropy_identity(&maxent, target.value())?
    };
    let bound_estimate_term = tv_upper_bound(kl_estimate);
    let bound_true_term = tv_upper_bound(kl_true);
    Ok(BoundReport {
        maxent_entropy: maxent.entropy,
        estimate_entropy,
        target,
        bound_estimate_term,
        bound_true_term,
        total: bound_estimate_term + bound_true_term,
        approximate: target.is_approximate(),
    })
}
