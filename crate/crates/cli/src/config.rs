//! Experiment configuration: a JSON file whose fields can each be overridden
//! by a command-line flag, resolved into a fully specified [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use moment_density::priors::DEFAULT_INFLATION;
use moment_density::sampling::{benchmark_example, MixtureSpec};
use moment_density::{EstimatorConfig, GaussianPrior, GridSpec, PriorChoice};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::estimators::FitSettings;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_SWEEP: [usize; 4] = [50, 100, 200, 400];
/// Mixture components for a GMM fitted to a sample file.
pub const DEFAULT_FIT_COMPONENTS: usize = 2;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, ValueEnum,
)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Squared-Hellinger moment matching
    Dpmsh,
    /// Kullback–Leibler moment matching
    Dpmkl,
    /// Gaussian kernel density estimate
    Kde,
    /// Gaussian mixture fitted by EM
    Gmm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 4] = [Self::Dpmsh, Self::Dpmkl, Self::Kde, Self::Gmm];

    pub fn name(self) -> &'static str {
        match self {
            Self::Dpmsh => "dpmsh",
            Self::Dpmkl => "dpmkl",
            Self::Kde => "kde",
            Self::Gmm => "gmm",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Stand-in for the unknown entropy of the data when bounding from samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EntropyChoice {
    /// Histogram plug-in with Freedman–Diaconis bins
    #[default]
    Histogram,
    /// `-sum r_i ln r_i` over the empirical distribution, which is `ln m`
    Empirical,
}

/// A ground truth not among the built-in examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomTruth {
    pub spec: MixtureSpec,
    pub prior: GaussianPrior,
    pub order: usize,
    pub sample_count: usize,
}

/// Everything that can appear in a config file. Every field is optional;
/// command-line flags fill the same structure and take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub example: Option<u32>,
    pub custom: Option<CustomTruth>,
    pub order: Option<usize>,
    pub sample_count: Option<usize>,
    pub sample_counts: Option<Vec<usize>>,
    pub mc_runs: Option<usize>,
    pub seed: Option<u64>,
    pub prior: Option<GaussianPrior>,
    pub inflation: Option<f64>,
    pub standardize: Option<bool>,
    pub grid: Option<GridSpec>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub gmm_components: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    /// Sample file for `fit` and `bound`.
    pub input: Option<PathBuf>,
    /// Estimator for `fit`.
    pub estimator: Option<EstimatorKind>,
    /// Entropy stand-in for `bound` on a sample file.
    pub entropy: Option<EntropyChoice>,
    /// `bound` on an example: use sample moments of seeded draws instead of
    /// population moments.
    pub sampled: Option<bool>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Fields set in `flags` replace those in `self`.
    pub fn overridden_by(self, flags: ConfigFile) -> ConfigFile {
        ConfigFile {
            example: flags.example.or(self.example),
            custom: flags.custom.or(self.custom),
            order: flags.order.or(self.order),
            sample_count: flags.sample_count.or(self.sample_count),
            sample_counts: flags.sample_counts.or(self.sample_counts),
            mc_runs: flags.mc_runs.or(self.mc_runs),
            seed: flags.seed.or(self.seed),
            prior: flags.prior.or(self.prior),
            inflation: flags.inflation.or(self.inflation),
            standardize: flags.standardize.or(self.standardize),
            grid: flags.grid.or(self.grid),
            estimators: flags.estimators.or(self.estimators),
            gmm_components: flags.gmm_components.or(self.gmm_components),
            output_dir: flags.output_dir.or(self.output_dir),
            workers: flags.workers.or(self.workers),
            input: flags.input.or(self.input),
            estimator: flags.estimator.or(self.estimator),
            entropy: flags.entropy.or(self.entropy),
            sampled: flags.sampled.or(self.sampled),
        }
    }

    /// Resolves a Monte Carlo experiment. Output directory and worker
    /// count are not part of it: they do not change any result.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let (label, truth, prior, order, sample_count, mc_runs) = match (self.example, &self.custom)
        {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either an example id or a custom truth, not both".into(),
                ))
            }
            (None, None) => {
                return Err(CliError::Config(
                    "an example id or a custom truth is required".into(),
                ))
            }
            (Some(id), None) => {
                let ex = benchmark_example(id)?;
                (
                    format!("example{id}"),
                    ex.spec,
                    ex.prior,
                    ex.order,
                    ex.sample_count,
                    ex.mc_runs,
                )
            }
            (None, Some(c)) => {
                c.spec.validate()?;
                (
                    "custom".to_string(),
                    c.spec.clone(),
                    c.prior,
                    c.order,
                    c.sample_count,
                    50,
                )
            }
        };
        if self.inflation.is_some() {
            return Err(CliError::Config(
                "inflation only applies to sample files; experiments use a fixed prior".into(),
            ));
        }
        let prior = match self.prior {
            Some(p) => GaussianPrior::new(p.mean, p.std_dev)?,
            None => prior,
        };
        let order = self.order.unwrap_or(order);
        if order < 2 || order % 2 != 0 {
            return Err(moment_density::Error::InvalidOrder(order).into());
        }
        let cfg = ExperimentConfig {
            label,
            gmm_components: self.gmm_components.unwrap_or(truth.components.len()),
            truth,
            prior,
            order,
            sample_count: self.sample_count.unwrap_or(sample_count),
            sample_counts: self
                .sample_counts
                .clone()
                .unwrap_or_else(|| DEFAULT_SWEEP.to_vec()),
            mc_runs: self.mc_runs.unwrap_or(mc_runs),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            grid: self.grid.unwrap_or_default(),
            standardize: self.standardize.unwrap_or(true),
            estimators: self
                .estimators
                .clone()
                .unwrap_or_else(|| EstimatorKind::ALL.to_vec()),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves a fit of the sample file in `input`.
    pub fn fit(&self) -> Result<FitConfig> {
        let input = self
            .input
            .clone()
            .ok_or_else(|| CliError::Config("a sample file is required".into()))?;
        let order = self.order.ok_or_else(|| {
            CliError::Config("the moment order is required for a sample file".into())
        })?;
        if order < 2 || order % 2 != 0 {
            return Err(moment_density::Error::InvalidOrder(order).into());
        }
        let prior = match (self.prior, self.inflation) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either a fixed prior or an inflation, not both".into(),
                ))
            }
            (Some(p), None) => PriorChoice::Fixed(GaussianPrior::new(p.mean, p.std_dev)?),
            (None, inflation) => PriorChoice::Default {
                inflation: inflation.unwrap_or(DEFAULT_INFLATION),
            },
        };
        let gmm_components = self.gmm_components.unwrap_or(DEFAULT_FIT_COMPONENTS);
        if gmm_components == 0 {
            return Err(CliError::Config("gmm_components must be at least 1".into()));
        }
        Ok(FitConfig {
            input,
            estimator: self.estimator.unwrap_or(EstimatorKind::Dpmsh),
            settings: FitSettings {
                order,
                estimator: EstimatorConfig {
                    prior,
                    grid: self.grid.unwrap_or_default(),
                    standardize: self.standardize.unwrap_or(true),
                    ..EstimatorConfig::default()
                },
                gmm_components,
            },
            seed: self.seed.unwrap_or(DEFAULT_SEED),
        })
    }
}

/// A fully specified fit of one sample file.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub input: PathBuf,
    pub estimator: EstimatorKind,
    pub settings: FitSettings,
    /// Seeds the EM restarts; the other estimators are deterministic.
    pub seed: u64,
}

/// A fully specified Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub label: String,
    pub truth: MixtureSpec,
    pub prior: GaussianPrior,
    pub order: usize,
    pub sample_count: usize,
    pub sample_counts: Vec<usize>,
    pub mc_runs: usize,
    pub seed: u64,
    pub grid: GridSpec,
    pub standardize: bool,
    pub estimators: Vec<EstimatorKind>,
    pub gmm_components: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mc_runs == 0 {
            return Err(CliError::Config("mc_runs must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(CliError::Config("no estimators selected".into()));
        }
        if self.sample_counts.is_empty() {
            return Err(CliError::Config("sample_counts is empty".into()));
        }
        if self.sample_count < 2 || self.sample_counts.iter().any(|&m| m < 2) {
            return Err(CliError::Config("sample counts must be at least 2".into()));
        }
        if self.gmm_components == 0 {
            return Err(CliError::Config("gmm_components must be at least 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON encoding, hex.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
