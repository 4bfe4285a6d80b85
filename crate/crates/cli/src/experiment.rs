//! Monte Carlo harness: draw samples, fit every estimator, score it against
//! the truth.
//!
//! Run `r` at sample count `m` draws from the stream
//! `derive_seed(seed, [m, r])`, so results do not depend on the number of
//! workers or the order in which runs finish; EM restarts use the child
//! stream `derive_seed(that, [1])`. Aggregation walks the runs in index
//! order.

use moment_density::metrics::{kl_divergence_ln, tv_distance};
use moment_density::sampling::{derive_seed, sample_mixture, MixtureSpec};
use moment_density::{build_grid, QuadratureGrid};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{EstimatorKind, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::estimators::{fit, FitSettings};

/// Points on which density curves are tabulated.
pub const CURVE_POINTS: usize = 1000;
/// Half-width of the curve table in prior standard deviations.
pub const CURVE_HALF_WIDTH: f64 = 10.0;
/// Truth mass left out on each side of the divergence grid.
pub const KL_TAIL_MASS: f64 = 1e-12;

/// `CURVE_POINTS` equally spaced points over prior mean ± 10 prior sd.
pub fn curve_points(mean: f64, std_dev: f64) -> Vec<f64> {
    let lo = mean - CURVE_HALF_WIDTH * std_dev;
    let step = 2.0 * CURVE_HALF_WIDTH * std_dev / (CURVE_POINTS - 1) as f64;
    (0..CURVE_POINTS).map(|i| lo + i as f64 * step).collect()
}

/// Quadrature grids for scoring against the truth.
#[derive(Debug, Clone)]
pub struct ScoringGrids {
    /// Around the prior, split at the truth's kinks.
    pub distance: QuadratureGrid,
    /// The truth's effective support, all but `KL_TAIL_MASS` in each tail.
    pub divergence: QuadratureGrid,
}

impl ScoringGrids {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let kinks = cfg.truth.kinks();
        let distance = cfg
            .grid
            .build(cfg.prior.mean, cfg.prior.std_dev)?
            .with_breakpoints(&kinks);
        let (lo, hi) = support_interval(&cfg.truth, KL_TAIL_MASS);
        let divergence = build_grid(
            0.5 * (lo + hi),
            0.5 * (hi - lo),
            cfg.grid.panels,
            cfg.grid.nodes_per_panel,
        )?
        .with_breakpoints(&kinks);
        Ok(Self {
            distance,
            divergence,
        })
    }
}

/// Quantiles `tail` and `1 - tail` of the mixture, by bisection.
pub fn support_interval(spec: &MixtureSpec, tail: f64) -> (f64, f64) {
    let (mean, sd) = spec.mean_std();
    let lower = crossing(mean, sd, |x| spec.cdf(x) - tail);
    let upper = crossing(mean, sd, |x| tail - spec.survival(x));
    (lower, upper)
}

/// Root of a nondecreasing `f`, bracketed by doubling outwards from
/// `center ± spread`.
fn crossing(center: f64, spread: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (center - spread, center + spread);
    while f(lo) > 0.0 {
        lo -= hi - lo;
    }
    while f(hi) < 0.0 {
        hi += hi - lo;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Scores of one fitted estimator on one run.
#[derive(Debug, Clone)]
struct RunScore {
    tv: f64,
    kl: f64,
    residual: Option<f64>,
    curve: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub run: usize,
    pub error: String,
}

/// Aggregate of one estimator at one sample count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub estimator: EstimatorKind,
    pub sample_count: usize,
    pub runs: usize,
    pub succeeded: usize,
    pub tv_mean: f64,
    pub tv_std: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
    /// Worst relative moment residual over the runs, moment-matching estimators only.
    pub moment_residual_max: Option<f64>,
    pub failures: Vec<RunFailure>,
}

impl Summary {
    pub fn is_complete(&self) -> bool {
        self.succeeded == self.runs
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarlo {
    pub sample_count: usize,
    pub summaries: Vec<Summary>,
    /// Per estimator, the run-averaged density at the curve points (empty
    /// when curves were not requested or no run succeeded).
    pub mean_curves: Vec<Vec<f64>>,
}

/// Runs `cfg.mc_runs` replications at sample count `m`, indexed by run and
/// then by estimator.
fn replicate(
    cfg: &ExperimentConfig,
    m: usize,
    points: Option<&[f64]>,
    grids: &ScoringGrids,
) -> Vec<Vec<std::result::Result<RunScore, String>>> {
    let truth = |x: f64| cfg.truth.pdf(x);
    let ln_truth = |x: f64| cfg.truth.ln_pdf(x);
    let settings = FitSettings::for_experiment(cfg);
    (0..cfg.mc_runs)
        .into_par_iter()
        .map(|run| {
            let seed = derive_seed(cfg.seed, &[m as u64, run as u64]);
            let samples = sample_mixture(&cfg.truth, m, seed);
            cfg.estimators
                .iter()
                .map(|&kind| {
                    let fitted = fit(kind, &samples, &settings, derive_seed(seed, &[1]))
                        .map_err(|e| e.to_string())?;
                    let pdf = |x: f64| fitted.pdf(x);
                    Ok(RunScore {
                        tv: tv_distance(truth, pdf, &grids.distance),
                        kl: kl_divergence_ln(ln_truth, |x| fitted.ln_pdf(x), &grids.divergence)
                            .map_err(|e| e.to_string())?,
                        residual: fitted.moment_residual(),
                        curve: points.map(|xs| xs.iter().map(|&x| fitted.pdf(x)).collect()),
                    })
                })
                .collect()
        })
        .collect()
}

/// Runs and aggregates one sample count. With `points`, the estimated
/// densities are also tabulated there and averaged over the runs.
pub fn monte_carlo(cfg: &ExperimentConfig, m: usize, points: Option<&[f64]>) -> Result<MonteCarlo> {
    let grids = ScoringGrids::new(cfg)?;
    let raw = replicate(cfg, m, points, &grids);
    let mut summaries = Vec::with_capacity(cfg.estimators.len());
    let mut mean_curves = Vec::with_capacity(cfg.estimators.len());
    for (e, &kind) in cfg.estimators.iter().enumerate() {
        let mut scores = Vec::new();
        let mut failures = Vec::new();
        for (run, per_run) in raw.iter().enumerate() {
            match &per_run[e] {
                Ok(score) => scores.push(score),
                Err(error) => failures.push(RunFailure {
                    run,
                    error: error.clone(),
                }),
            }
        }
        let (tv_mean, tv_std) = mean_std(scores.iter().map(|s| s.tv));
        let (kl_mean, kl_std) = mean_std(scores.iter().map(|s| s.kl));
        let moment_residual_max = scores
            .iter()
            .filter_map(|s| s.residual)
            .fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.max(r)))
            });
        mean_curves.push(mean_curve(&scores, points.map_or(0, <[f64]>::len)));
        summaries.push(Summary {
            estimator: kind,
            sample_count: m,
            runs: cfg.mc_runs,
            succeeded: scores.len(),
            tv_mean,
            tv_std,
            kl_mean,
            kl_std,
            moment_residual_max,
            failures,
        });
    }
    Ok(MonteCarlo {
        sample_count: m,
        summaries,
        mean_curves,
    })
}

fn mean_curve(scores: &[&RunScore], len: usize) -> Vec<f64> {
    if scores.is_empty() || len == 0 {
        return Vec::new();
    }
    let mut acc = vec![0.0; len];
    for s in scores {
        if let Some(curve) = &s.curve {
            acc.iter_mut().zip(curve).for_each(|(a, v)| *a += v);
        }
    }
    acc.iter().map(|a| a / scores.len() as f64).collect()
}

/// Mean and sample standard deviation; NaN for no values, std 0 for one.
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// The sweep: one Monte Carlo per configured sample count.
pub fn sweep(cfg: &ExperimentConfig) -> Result<Vec<MonteCarlo>> {
    cfg.sample_counts
        .iter()
        .map(|&m| monte_carlo(cfg, m, None))
        .collect()
}

/// Runs `f` on a pool of `workers` threads (all cores when `None`).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
