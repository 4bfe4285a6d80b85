//! Output documents. Everything written here is a function of the resolved
//! configuration, so equal configurations give byte-identical files: floats
//! use Rust's shortest round-trip formatting and nothing records wall-clock
//! time.

use std::path::Path;

use moment_density::maxent::BoundReport;
use moment_density::sampling::GENERATOR_VERSION;
use serde::Serialize;

use crate::config::{EstimatorKind, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::experiment::{MonteCarlo, RunFailure};

pub const SCHEMA_VERSION: u32 = 1;
pub const METRICS_HEADER: [&str; 6] = ["estimator", "m", "tv_mean", "tv_std", "kl_mean", "kl_std"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub generator_version: &'static str,
    pub package_version: &'static str,
}

impl Provenance {
    pub fn new(seed: u64, config_hash: String) -> Self {
        Self {
            seed,
            config_hash,
            generator_version: GENERATOR_VERSION,
            package_version: env!("CARGO_PKG_VERSION"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub sample_count: usize,
    pub runs: usize,
    pub succeeded: usize,
    pub tv_mean: f64,
    pub tv_std: f64,
    pub kl_mean: f64,
    pub kl_std: f64,
    pub failures: Vec<RunFailure>,
}

/// Everything reported about one estimator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorBlock {
    pub estimator: EstimatorKind,
    pub metrics: Vec<MetricRow>,
    pub moment_residual_max: Option<f64>,
}

/// The bound for the configured order, from the truth's population moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundBlock {
    pub order: usize,
    pub moments: &'static str,
    #[serde(flatten)]
    pub report: BoundReport,
    pub measured_tv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: ExperimentConfig,
    pub provenance: Provenance,
    pub estimators: Vec<EstimatorBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_error: Option<String>,
    /// Some estimator failed on some run.
    pub partial: bool,
}

impl ExperimentReport {
    pub fn new(command: &'static str, cfg: &ExperimentConfig, results: &[MonteCarlo]) -> Self {
        let estimators: Vec<EstimatorBlock> = cfg
            .estimators
            .iter()
            .enumerate()
            .map(|(e, &estimator)| {
                let summaries = results.iter().map(|mc| &mc.summaries[e]);
                EstimatorBlock {
                    estimator,
                    metrics: summaries
                        .clone()
                        .map(|s| MetricRow {
                            sample_count: s.sample_count,
                            runs: s.runs,
                            succeeded: s.succeeded,
                            tv_mean: s.tv_mean,
                            tv_std: s.tv_std,
                            kl_mean: s.kl_mean,
                            kl_std: s.kl_std,
                            failures: s.failures.clone(),
                        })
                        .collect(),
                    moment_residual_max: summaries
                        .filter_map(|s| s.moment_residual_max)
                        .reduce(f64::max),
                }
            })
            .collect();
        let partial = estimators
            .iter()
            .flat_map(|b| &b.metrics)
            .any(|row| row.succeeded < row.runs);
        Self {
            schema_version: SCHEMA_VERSION,
            command,
            config: cfg.clone(),
            provenance: Provenance::new(cfg.seed, cfg.hash()),
            estimators,
            bound: None,
            bound_error: None,
            partial,
        }
    }
}

/// `estimator,m,tv_mean,tv_std,kl_mean,kl_std`, estimators in configured
/// order, sample counts ascending within each.
pub fn metrics_csv(cfg: &ExperimentConfig, results: &[MonteCarlo]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    for (e, kind) in cfg.estimators.iter().enumerate() {
        let mut rows: Vec<_> = results.iter().map(|mc| &mc.summaries[e]).collect();
        rows.sort_by_key(|s| s.sample_count);
        for s in rows {
            w.write_record([
                kind.name().to_string(),
                s.sample_count.to_string(),
                number(s.tv_mean),
                number(s.tv_std),
                number(s.kl_mean),
                number(s.kl_std),
            ])?;
        }
    }
    finish(w)
}

/// `x,truth,<estimator>...`; an estimator with no successful run has an
/// empty column.
pub fn curves_csv(
    xs: &[f64],
    truth: &[f64],
    kinds: &[EstimatorKind],
    curves: &[Vec<f64>],
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["x".to_string(), "truth".to_string()];
    header.extend(kinds.iter().map(|k| k.name().to_string()));
    w.write_record(&header)?;
    for (i, (&x, &t)) in xs.iter().zip(truth).enumerate() {
        let mut row = vec![number(x), number(t)];
        row.extend(
            curves
                .iter()
                .map(|c| c.get(i).map_or(String::new(), |&v| number(v))),
        );
        w.write_record(&row)?;
    }
    finish(w)
}

/// `x,density` for a single fitted model.
pub fn density_csv(xs: &[f64], density: &[f64]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["x", "density"])?;
    for (&x, &p) in xs.iter().zip(density) {
        w.write_record([number(x), number(p)])?;
    }
    finish(w)
}

/// Shortest decimal that round-trips; `NaN` for missing values.
pub fn number(v: f64) -> String {
    format!("{v:?}")
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0, -2.5e-300, 1.0 / 3.0, 6.02e23] {
            assert_eq!(number(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(number(f64::NAN), "NaN");
        assert_eq!(number(1.0), "1.0");
    }

    #[test]
    fn curves_table_shape() {
        let text = curves_csv(
            &[0.0, 1.0],
            &[0.5, 0.25],
            &[EstimatorKind::Dpmsh, EstimatorKind::Gmm],
            &[vec![0.4, 0.3], vec![]],
        )
        .unwrap();
        assert_eq!(text, "x,truth,dpmsh,gmm\n0.0,0.5,0.4,\n1.0,0.25,0.3,\n");
    }
}
