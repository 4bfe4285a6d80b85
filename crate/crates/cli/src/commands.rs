//! Subcommands. Flags fill a [`ConfigFile`] that overrides the file given
//! with `--config`, so every flag has a config-file equivalent.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use moment_density::maxent::{error_bound_report, MaxEntOptions, TargetEntropy};
use moment_density::metrics::tv_distance;
use moment_density::moments::{parse_samples, StandardizedMoments};
use moment_density::sampling::{derive_seed, sample_mixture};
use moment_density::{
    compute_sample_moments, estimate_from_moments, estimate_from_samples, EstimatorConfig,
    GaussianPrior,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ConfigFile, EntropyChoice, EstimatorKind, ExperimentConfig};
use crate::error::{CliError, Result};
use crate::estimators::{fit, FitSettings, FittedDensity};
use crate::experiment::{curve_points, monte_carlo, sweep, with_workers, MonteCarlo, ScoringGrids};
use crate::plot::{metric_svg, overlay_svg};
use crate::report::{
    curves_csv, density_csv, metrics_csv, to_json, write_file, BoundBlock, ExperimentReport,
    SCHEMA_VERSION,
};

/// Output directory when none is configured: `momdens-output/<label>/<command>`.
pub const DEFAULT_OUTPUT_ROOT: &str = "momdens-output";
/// Entropy-gap slack for bounds from sample moments, which the estimate
/// matches only to the solver tolerance.
pub const SAMPLE_MOMENT_SLACK: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(
    name = "momdens",
    version,
    about = "Density estimation from sample power moments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one estimator to a sample file; writes the model as JSON and its
    /// density on 1000 points as CSV
    Fit(FitArgs),
    /// Monte Carlo experiment at one sample count: mean curves, metrics,
    /// the error bound and an overlay plot
    Example(ExperimentArgs),
    /// Monte Carlo experiment over several sample counts: metrics against
    /// the number of samples
    Sweep(ExperimentArgs),
    /// Maximum-entropy error bound for an example truth or a sample file
    Bound(BoundArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct SharedArgs {
    /// JSON config file; flags override its fields
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Highest matched moment order (even)
    #[arg(long)]
    pub order: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mean of a fixed Gaussian prior
    #[arg(long, requires = "prior_std", allow_hyphen_values = true)]
    pub prior_mean: Option<f64>,
    /// Standard deviation of a fixed Gaussian prior
    #[arg(long, requires = "prior_mean")]
    pub prior_std: Option<f64>,
    /// Solve in raw coordinates instead of standardized ones
    #[arg(long)]
    pub no_standardize: bool,
    /// Quadrature panels
    #[arg(long)]
    pub panels: Option<usize>,
    /// Gauss–Legendre nodes per panel
    #[arg(long)]
    pub nodes_per_panel: Option<usize>,
    /// Quadrature half-width in prior standard deviations
    #[arg(long)]
    pub half_width_sigmas: Option<f64>,
    /// Components of the Gaussian mixture baseline
    #[arg(long)]
    pub gmm_components: Option<usize>,
    /// Directory for the output files
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Samples: one-column CSV or one number per line
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Estimator to fit
    #[arg(long, value_enum)]
    pub estimator: Option<EstimatorKind>,
    /// Default prior variance as a multiple of the second sample moment
    #[arg(long)]
    pub inflation: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ExperimentArgs {
    /// Built-in example, 1 to 5
    pub example: Option<u32>,
    #[command(flatten)]
    pub shared: SharedArgs,
    /// Estimators to run, comma separated
    #[arg(long, value_enum, value_delimiter = ',')]
    pub estimators: Option<Vec<EstimatorKind>>,
    /// Monte Carlo replications per sample count
    #[arg(long)]
    pub mc_runs: Option<usize>,
    /// Samples per run for `example`
    #[arg(long, short = 'm')]
    pub sample_count: Option<usize>,
    /// Sample counts for `sweep`, comma separated
    #[arg(long, value_delimiter = ',')]
    pub sample_counts: Option<Vec<usize>>,
    /// Worker threads (default: all cores); results do not depend on it
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    /// Sample file; the true entropy is then replaced by an estimate
    pub input: Option<PathBuf>,
    /// Built-in example whose truth is known
    #[arg(long)]
    pub example: Option<u32>,
    #[command(flatten)]
    pub shared: SharedArgs,
    /// With --example: sample moments of one seeded draw instead of
    /// population moments
    #[arg(long)]
    pub sampled: bool,
    /// Samples drawn with --sampled
    #[arg(long, short = 'm')]
    pub sample_count: Option<usize>,
    /// Entropy stand-in for a sample file
    #[arg(long, value_enum)]
    pub entropy: Option<EntropyChoice>,
    /// Default prior variance as a multiple of the second sample moment
    #[arg(long)]
    pub inflation: Option<f64>,
}

impl SharedArgs {
    /// The config file (if any) overridden by `flags` and these shared flags.
    fn resolve(&self, flags: ConfigFile) -> Result<ConfigFile> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let grid = if self.panels.is_some()
            || self.nodes_per_panel.is_some()
            || self.half_width_sigmas.is_some()
        {
            let mut grid = file.grid.unwrap_or_default();
            grid.panels = self.panels.unwrap_or(grid.panels);
            grid.nodes_per_panel = self.nodes_per_panel.unwrap_or(grid.nodes_per_panel);
            grid.half_width_sigmas = self.half_width_sigmas.unwrap_or(grid.half_width_sigmas);
            Some(grid)
        } else {
            None
        };
        let prior = match (self.prior_mean, self.prior_std) {
            (Some(mean), Some(sd)) => Some(GaussianPrior::new(mean, sd)?),
            _ => None,
        };
        let shared = ConfigFile {
            order: self.order,
            seed: self.seed,
            prior,
            standardize: self.no_standardize.then_some(false),
            grid,
            gmm_components: self.gmm_components,
            output_dir: self.output_dir.clone(),
            ..flags
        };
        Ok(file.overridden_by(shared))
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let flags = ConfigFile {
                input: args.input,
                estimator: args.estimator,
                inflation: args.inflation,
                ..ConfigFile::default()
            };
            cmd_fit(&args.shared.resolve(flags)?)
        }
        Command::Example(args) => cmd_example(&args.shared.resolve(experiment_flags(&args))?),
        Command::Sweep(args) => cmd_sweep(&args.shared.resolve(experiment_flags(&args))?),
        Command::Bound(args) => {
            let flags = ConfigFile {
                input: args.input,
                example: args.example,
                sampled: args.sampled.then_some(true),
                sample_count: args.sample_count,
                entropy: args.entropy,
                inflation: args.inflation,
                ..ConfigFile::default()
            };
            cmd_bound(&args.shared.resolve(flags)?)
        }
    }
}

fn experiment_flags(args: &ExperimentArgs) -> ConfigFile {
    ConfigFile {
        example: args.example,
        estimators: args.estimators.clone(),
        mc_runs: args.mc_runs,
        sample_count: args.sample_count,
        sample_counts: args.sample_counts.clone(),
        workers: args.workers,
        ..ConfigFile::default()
    }
}

fn output_dir(file: &ConfigFile, label: &str, command: &str) -> PathBuf {
    file.output_dir
        .clone()
        .unwrap_or_else(|| Path::new(DEFAULT_OUTPUT_ROOT).join(label).join(command))
}

fn emit(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    write_file(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn read_samples(path: &Path) -> Result<(Vec<f64>, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let samples = parse_samples(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok((samples, hex::encode(Sha256::digest(text.as_bytes()))))
}

#[derive(Serialize)]
struct EstimateFile<'a> {
    schema_version: u32,
    input_sha256: String,
    sample_count: usize,
    seed: u64,
    #[serde(flatten)]
    model: &'a FittedDensity,
}

pub fn cmd_fit(file: &ConfigFile) -> Result<()> {
    let cfg = file.fit()?;
    let (samples, input_sha256) = read_samples(&cfg.input)?;
    let model = fit(cfg.estimator, &samples, &cfg.settings, cfg.seed)?;
    // the baselines have no prior of their own; they are tabulated on the
    // range the moment estimators would use
    let sm = StandardizedMoments::from_samples(
        &samples,
        cfg.settings.order,
        cfg.settings.estimator.standardize,
    )?;
    let prior = cfg.settings.estimator.prior.resolve(&sm)?;
    let xs = curve_points(prior.mean, prior.std_dev);
    let density: Vec<f64> = xs.iter().map(|&x| model.pdf(x)).collect();

    let dir = file
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT).join("fit"));
    let doc = EstimateFile {
        schema_version: SCHEMA_VERSION,
        input_sha256,
        sample_count: samples.len(),
        seed: cfg.seed,
        model: &model,
    };
    emit(&dir, "estimate.json", &to_json(&doc)?)?;
    emit(&dir, "density.csv", &density_csv(&xs, &density)?)?;
    Ok(())
}

pub fn cmd_example(file: &ConfigFile) -> Result<()> {
    let cfg = file.experiment()?;
    let xs = curve_points(cfg.prior.mean, cfg.prior.std_dev);
    let mc = with_workers(file.workers, || {
        monte_carlo(&cfg, cfg.sample_count, Some(&xs))
    })??;
    let results = [mc];
    let mut report = ExperimentReport::new("example", &cfg, &results);
    match population_bound(&cfg) {
        Ok(block) => report.bound = Some(block),
        Err(e) => report.bound_error = Some(e.to_string()),
    }

    let dir = output_dir(file, &cfg.label, "example");
    let truth: Vec<f64> = xs.iter().map(|&x| cfg.truth.pdf(x)).collect();
    let curves = curves_csv(&xs, &truth, &cfg.estimators, &results[0].mean_curves)?;
    emit(&dir, "report.json", &to_json(&report)?)?;
    emit(&dir, "metrics.csv", &metrics_csv(&cfg, &results)?)?;
    emit(&dir, "curves.csv", &curves)?;
    emit(&dir, "overlay.svg", &overlay_svg(&curves)?)?;
    if let Some(bound) = &report.bound {
        emit(
            &dir,
            "bound.json",
            &to_json(&bound_file(&cfg.label, bound))?,
        )?;
    }
    finish(&report)
}

pub fn cmd_sweep(file: &ConfigFile) -> Result<()> {
    let cfg = file.experiment()?;
    let results: Vec<MonteCarlo> = with_workers(file.workers, || sweep(&cfg))??;
    let report = ExperimentReport::new("sweep", &cfg, &results);

    let dir = output_dir(file, &cfg.label, "sweep");
    let metrics = metrics_csv(&cfg, &results)?;
    emit(&dir, "report.json", &to_json(&report)?)?;
    emit(&dir, "metrics.csv", &metrics)?;
    for column in ["tv_mean", "kl_mean"] {
        emit(
            &dir,
            &format!("{column}.svg"),
            &metric_svg(&metrics, column)?,
        )?;
    }
    finish(&report)
}

fn finish(report: &ExperimentReport) -> Result<()> {
    let failed: usize = report
        .estimators
        .iter()
        .flat_map(|b| &b.metrics)
        .map(|row| row.runs - row.succeeded)
        .sum();
    if report.partial {
        return Err(CliError::Partial(format!(
            "{failed} estimator runs failed; see report.json"
        )));
    }
    Ok(())
}

/// Bound for the truth's population moments at the configured order.
pub fn population_bound(cfg: &ExperimentConfig) -> Result<BoundBlock> {
    let moments = cfg.truth.population_moments(cfg.order)?;
    let estimator = estimator_config(cfg);
    let estimate = estimate_from_moments(&moments, &estimator)?;
    truth_bound(cfg, &estimate, &moments, "population", 0.0)
}

fn estimator_config(cfg: &ExperimentConfig) -> EstimatorConfig {
    FitSettings::for_experiment(cfg).estimator
}

fn truth_bound(
    cfg: &ExperimentConfig,
    estimate: &moment_density::DensityEstimate,
    moments: &moment_density::MomentSequence,
    kind: &'static str,
    slack: f64,
) -> Result<BoundBlock> {
    let grids = ScoringGrids::new(cfg)?;
    let exact = TargetEntropy::from_density(|x| cfg.truth.pdf(x), &grids.distance);
    let target = match kind {
        "population" => exact,
        _ => TargetEntropy::Asymptotic(exact.value()),
    };
    let report = error_bound_report(estimate, moments, target, &MaxEntOptions::default(), slack)?;
    let measured = tv_distance(|x| estimate.pdf(x), |x| cfg.truth.pdf(x), &grids.distance);
    Ok(BoundBlock {
        order: moments.order(),
        moments: kind,
        report,
        measured_tv: Some(measured),
    })
}

#[derive(Serialize)]
struct BoundFile<'a> {
    schema_version: u32,
    source: String,
    #[serde(flatten)]
    bound: &'a BoundBlock,
}

fn bound_file<'a>(source: &str, bound: &'a BoundBlock) -> BoundFile<'a> {
    BoundFile {
        schema_version: SCHEMA_VERSION,
        source: source.to_string(),
        bound,
    }
}

pub fn cmd_bound(file: &ConfigFile) -> Result<()> {
    let (source, block, dir) = match (&file.input, file.example.is_some() || file.custom.is_some())
    {
        (Some(_), true) => {
            return Err(CliError::Config(
                "give either a sample file or an example, not both".into(),
            ))
        }
        (None, false) => {
            return Err(CliError::Config(
                "a sample file or an example is required".into(),
            ))
        }
        (None, true) => {
            if file.entropy.is_some() {
                return Err(CliError::Config(
                    "the entropy stand-in applies to sample files only".into(),
                ));
            }
            let cfg = file.experiment()?;
            let block = if file.sampled.unwrap_or(false) {
                let m = cfg.sample_count;
                let samples = sample_mixture(&cfg.truth, m, derive_seed(cfg.seed, &[m as u64, 0]));
                let moments = compute_sample_moments(&samples, cfg.order)?;
                let estimate = estimate_from_samples(&samples, cfg.order, &estimator_config(&cfg))?;
                truth_bound(&cfg, &estimate, &moments, "sample", SAMPLE_MOMENT_SLACK)?
            } else {
                population_bound(&cfg)?
            };
            let dir = output_dir(file, &cfg.label, "bound");
            (cfg.label, block, dir)
        }
        (Some(path), false) => {
            if file.sampled.is_some() {
                return Err(CliError::Config(
                    "--sampled applies to examples only".into(),
                ));
            }
            let cfg = file.fit()?;
            let (samples, _) = read_samples(path)?;
            let moments = compute_sample_moments(&samples, cfg.settings.order)?;
            let estimate =
                estimate_from_samples(&samples, cfg.settings.order, &cfg.settings.estimator)?;
            let target = match file.entropy.unwrap_or_default() {
                EntropyChoice::Histogram => TargetEntropy::histogram(&samples)?,
                EntropyChoice::Empirical => TargetEntropy::empirical(&samples)?,
            };
            let report = error_bound_report(
                &estimate,
                &moments,
                target,
                &MaxEntOptions::default(),
                SAMPLE_MOMENT_SLACK,
            )?;
            let block = BoundBlock {
                order: cfg.settings.order,
                moments: "sample",
                report,
                measured_tv: None,
            };
            let dir = file
                .output_dir
                .clone()
                .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT).join("bound"));
            (path.display().to_string(), block, dir)
        }
    };
    emit(&dir, "bound.json", &to_json(&bound_file(&source, &block))?)
}
