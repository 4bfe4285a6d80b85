//! Comparison estimators: Gaussian kernel density estimation, Gaussian
//! mixtures fitted by EM, and the Kullback–Leibler moment parametrization
//! `p = r / omega`.
//!
//! The last one is a reconstruction of a known baseline: it minimizes
//! `sum_k b_k mu_k - int r ln(sum_k b_k x^k)`, whose stationarity conditions
//! are `int x^k r / omega = mu_k`. There is no `+1` offset; the `k = 0`
//! constraint carries the normalization.

use serde::{Deserialize, Serialize};

use crate::dual::{self, Kernel, MomentDual};
use crate::error::{Error, Result};
use crate::hellinger::{moment_check, Diagnostics, EstimatorConfig, SolveOptions};
use crate::moments::{
    build_hankel, certify_positive_definite, interquartile_range, MomentSequence, Standardization,
    StandardizedMoments,
};
use crate::priors::{eval_prior, GaussianPrior};
use crate::quadrature::QuadratureGrid;
use crate::sampling::{derive_seed, SeededRng};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z - LN_SQRT_2PI).exp() / sd
}

fn mean_and_var(samples: &[f64]) -> (f64, f64) {
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    (mean, var)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeModel {
    pub centers: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeModel {
    pub fn with_bandwidth(centers: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::EmptyOrTiny(0));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidArgument(format!("bandwidth {bandwidth}")));
        }
        Ok(Self { centers, bandwidth })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let sum: f64 = self
            .centers
            .iter()
            .map(|&c| normal_pdf(x, c, self.bandwidth))
            .sum();
        sum / self.centers.len() as f64
    }

    /// `ln pdf(x)`, finite far into the tails where `pdf` underflows.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let terms: Vec<f64> = self
            .centers
            .iter()
            .map(|&c| {
                let z = (x - c) / h;
                -0.5 * z * z
            })
            .collect();
        log_sum_exp(&terms) - h.ln() - LN_SQRT_2PI - (self.centers.len() as f64).ln()
    }
}

/// Silverman's robust rule `0.9 min(sd, IQR / 1.34) m^(-1/5)`, with `sd` the
/// unbiased sample standard deviation. A zero IQR falls back to `sd`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::EmptyOrTiny(samples.len()));
    }
    let m = samples.len() as f64;
    let (_, var) = mean_and_var(samples);
    let sd = (var * m / (m - 1.0)).sqrt();
    let iqr = interquartile_range(samples) / 1.34;
    let spread = if iqr > 0.0 { sd.min(iqr) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::InvalidArgument("samples have zero spread".into()));
    }
    Ok(0.9 * spread * m.powf(-0.2))
}

pub fn kde_fit(samples: &[f64]) -> Result<KdeModel> {
    let h = silverman_bandwidth(samples)?;
    KdeModel::with_bandwidth(samples.to_vec(), h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub std_devs: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, std_devs: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || std_devs.len() != k {
            return Err(Error::InvalidMixture(
                "component arrays differ in length".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        if std_devs.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidMixture("non-positive std_dev".into()));
        }
        Ok(Self {
            weights,
            means,
            std_devs,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        (0..self.components())
            .map(|j| self.weights[j] * normal_pdf(x, self.means[j], self.std_devs[j]))
            .sum()
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|&x| self.ln_pdf(x)).sum()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = (0..self.components())
            .map(|j| self.log_component(j, x))
            .collect();
        log_sum_exp(&terms)
    }

    fn log_component(&self, j: usize, x: f64) -> f64 {
        let z = (x - self.means[j]) / self.std_devs[j];
        self.weights[j].ln() - self.std_devs[j].ln() - LN_SQRT_2PI - 0.5 * z * z
    }
}

pub(crate) fn log_sum_exp(terms: &[f64]) -> f64 {
    let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub restarts: usize,
    pub max_iter: usize,
    /// Stop once the log-likelihood gain falls below `tol * (1 + |ll|)`.
    pub tol: f64,
    /// Component re-seeds allowed per restart after a variance collapse.
    pub reseeds: usize,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 500,
            tol: 1e-10,
            reseeds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihood: f64,
    /// Log-likelihood after each EM iteration of the winning run.
    pub trace: Vec<f64>,
}

/// Best of `opts.restarts` EM runs by log-likelihood, each seeded by
/// k-means++ from its own child stream of `seed`.
pub fn gmm_fit(samples: &[f64], k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one component".into()));
    }
    if samples.len() < 2 * k {
        return Err(Error::EmptyOrTiny(samples.len()));
    }
    let (_, var) = mean_and_var(samples);
    if !(var > 0.0) {
        return Err(Error::InvalidArgument("samples have zero spread".into()));
    }
    let floor = 1e-6 * var;
    let mut best: Option<GmmFit> = None;
    for restart in 0..opts.restarts.max(1) {
        let mut rng = SeededRng::new(derive_seed(seed, &[restart as u64]));
        let init = kmeans_pp(samples, k, var, &mut rng);
        match run_em(samples, init, floor, opts, &mut rng) {
            Ok(fit) => {
                if best
                    .as_ref()
                    .is_none_or(|b| fit.log_likelihood > b.log_likelihood)
                {
                    best = Some(fit);
                }
            }
            Err(Error::CollapsedComponent(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    best.ok_or(Error::CollapsedComponent(k))
}

fn kmeans_pp(samples: &[f64], k: usize, var: f64, rng: &mut SeededRng) -> GmmModel {
    let mut means = vec![samples[rng.index(samples.len())]];
    while means.len() < k {
        let dist: Vec<f64> = samples
            .iter()
            .map(|&x| {
                means
                    .iter()
                    .map(|&c| (x - c) * (x - c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            dist.iter()
                .position(|d| {
                    acc += d;
                    acc >= target
                })
                .unwrap_or(samples.len() - 1)
        } else {
            rng.index(samples.len())
        };
        means.push(samples[next]);
    }
    let sd = (var / k as f64).sqrt();
    GmmModel {
        weights: vec![1.0 / k as f64; k],
        means,
        std_devs: vec![sd; k],
    }
}

/// EM from `model`. A component whose variance falls below `floor` is
/// re-seeded at a random sample (the trace restarts, since the likelihood
/// jumps); once `opts.reseeds` are spent the M-step keeps the variance at the
/// floor, which is still a monotone EM for the constrained likelihood.
fn run_em(
    samples: &[f64],
    mut model: GmmModel,
    floor: f64,
    opts: &GmmOptions,
    rng: &mut SeededRng,
) -> Result<GmmFit> {
    let k = model.components();
    let m = samples.len();
    let (_, total_var) = mean_and_var(samples);
    let mut resp = vec![0.0; m * k];
    let mut ll = f64::NEG_INFINITY;
    let mut trace = Vec::new();
    let mut reseeds_left = opts.reseeds;
    for _ in 0..opts.max_iter {
        // E-step; the log-likelihood is that of the current parameters
        let mut current = 0.0;
        let mut logs = vec![0.0; k];
        for (i, &x) in samples.iter().enumerate() {
            for (j, l) in logs.iter_mut().enumerate() {
                *l = model.log_component(j, x);
            }
            let norm = log_sum_exp(&logs);
            current += norm;
            for j in 0..k {
                resp[i * k + j] = (logs[j] - norm).exp();
            }
        }
        trace.push(current);
        let converged = current - ll <= opts.tol * (1.0 + current.abs());
        ll = current;
        if converged {
            break;
        }
        // M-step
        let mut reseeded = false;
        for j in 0..k {
            let nj: f64 = (0..m).map(|i| resp[i * k + j]).sum();
            if !(nj > 0.0) {
                return Err(Error::CollapsedComponent(j));
            }
            let mean = (0..m).map(|i| resp[i * k + j] * samples[i]).sum::<f64>() / nj;
            let var = (0..m)
                .map(|i| resp[i * k + j] * (samples[i] - mean).powi(2))
                .sum::<f64>()
                / nj;
            model.weights[j] = nj / m as f64;
            if var < floor && reseeds_left > 0 {
                reseeds_left -= 1;
                reseeded = true;
                model.means[j] = samples[rng.index(m)];
                model.std_devs[j] = (total_var / k as f64).sqrt();
            } else {
                model.means[j] = mean;
                model.std_devs[j] = var.max(floor).sqrt();
            }
        }
        let total: f64 = model.weights.iter().sum();
        model.weights.iter_mut().for_each(|w| *w /= total);
        if reseeded {
            trace.clear();
            ll = f64::NEG_INFINITY;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: ll,
        trace,
    })
}

/// `p(x) = r(x) / omega(y)` with `omega(y) = sum_k b_k y^k`, `y` standardized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub order: usize,
    pub prior: GaussianPrior,
    pub b: Vec<f64>,
    pub standardization: Standardization,
    pub diagnostics: Diagnostics,
}

impl KlEstimate {
    pub fn pdf(&self, x: f64) -> f64 {
        let y = self.standardization.forward(x);
        let omega = self.b.iter().rev().fold(0.0, |acc, &c| acc * y + c);
        if omega > 0.0 {
            eval_prior(&self.prior, x) / omega
        } else {
            0.0
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let y = self.standardization.forward(x);
        let omega = self.b.iter().rev().fold(0.0, |acc, &c| acc * y + c);
        if omega > 0.0 {
            self.prior.ln_pdf(x) - omega.ln()
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// The Kullback–Leibler dual for `moments` against `prior` on `grid`.
pub fn kl_dual(
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
    eps_feas: f64,
) -> MomentDual {
    MomentDual::new(
        Kernel::KullbackLeibler,
        moments.values(),
        |x| eval_prior(prior, x),
        grid,
        eps_feas,
    )
}

/// Solves the dual from `omega = 1` in the coordinates of `moments`.
pub fn dpmkl_solve(
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
    opts: &SolveOptions,
) -> Result<KlEstimate> {
    certify_positive_definite(&build_hankel(moments), None).require()?;
    let dual = kl_dual(moments, prior, grid, opts.eps_feas);
    let mut start = vec![0.0; moments.order() + 1];
    start[0] = 1.0;
    let outcome = dual::minimize_with_continuation(&dual, &start, &opts.newton(), |gradient| {
        gradient
            .iter()
            .enumerate()
            .all(|(k, g)| moments.relative_residual(k, *g) <= opts.tol_mom)
    })?;
    if *outcome.coeffs.last().expect("order >= 2") < 0.0 {
        return Err(Error::NonIntegrable);
    }
    let mut est = KlEstimate {
        order: moments.order(),
        prior: *prior,
        b: outcome.coeffs,
        standardization: Standardization::IDENTITY,
        diagnostics: Diagnostics {
            iterations: outcome.iterations,
            final_gradient_norm: dual::max_norm(&outcome.gradient),
            dual_objective: outcome.objective,
            moment_residuals: vec![],
            max_relative_residual: 0.0,
            grid_refinement_delta: 0.0,
            objective_trace: outcome.objective_trace,
        },
    };
    finish_kl(&mut est, moments, grid);
    Ok(est)
}

fn finish_kl(est: &mut KlEstimate, moments: &MomentSequence, grid: &QuadratureGrid) {
    let check = moment_check(|x| est.pdf(x), moments, grid);
    est.diagnostics.moment_residuals = check.residuals;
    est.diagnostics.max_relative_residual = check.max_relative_residual;
    est.diagnostics.grid_refinement_delta = check.grid_refinement_delta;
}

/// Same pipeline as the squared-Hellinger estimator, with the KL dual.
pub fn dpmkl_from_standardized(
    sm: &StandardizedMoments,
    cfg: &EstimatorConfig,
) -> Result<KlEstimate> {
    let prior = cfg.prior.resolve(sm)?;
    let local_prior = prior.standardized(&sm.transform);
    let grid = cfg.grid.build(local_prior.mean, local_prior.std_dev)?;
    let mut est = dpmkl_solve(&sm.standardized, &local_prior, &grid, &cfg.solve)?;
    est.prior = prior;
    est.standardization = sm.transform;
    let raw_grid = cfg.grid.build(prior.mean, prior.std_dev)?;
    finish_kl(&mut est, &sm.raw, &raw_grid);
    Ok(est)
}

pub fn dpmkl_from_samples(
    samples: &[f64],
    order: usize,
    cfg: &EstimatorConfig,
) -> Result<KlEstimate> {
    let sm = StandardizedMoments::from_samples(samples, order, cfg.standardize)?;
    dpmkl_from_standardized(&sm, cfg)
}

pub fn dpmkl_from_moments(moments: &MomentSequence, cfg: &EstimatorConfig) -> Result<KlEstimate> {
    let sm = StandardizedMoments::from_moments(moments, cfg.standardize)?;
    dpmkl_from_standardized(&sm, cfg)
}
