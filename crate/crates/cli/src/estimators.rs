//! The four estimators behind one interface.

use moment_density::baselines::{
    dpmkl_from_samples, gmm_fit, kde_fit, GmmModel, GmmOptions, KdeModel, KlEstimate,
};
use moment_density::{
    estimate_from_samples, DensityEstimate, EstimatorConfig, PriorChoice, Result,
};
use serde::Serialize;

use crate::config::{EstimatorKind, ExperimentConfig};

/// A fitted model; serializes with an `estimator` tag next to the model's fields.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "estimator", rename_all = "lowercase")]
pub enum FittedDensity {
    Dpmsh(DensityEstimate),
    Dpmkl(KlEstimate),
    Kde(KdeModel),
    Gmm(GmmModel),
}

impl FittedDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Dpmsh(e) => e.pdf(x),
            Self::Dpmkl(e) => e.pdf(x),
            Self::Kde(k) => k.pdf(x),
            Self::Gmm(g) => g.pdf(x),
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        match self {
            Self::Dpmsh(e) => e.ln_pdf(x),
            Self::Dpmkl(e) => e.ln_pdf(x),
            Self::Kde(k) => k.ln_pdf(x),
            Self::Gmm(g) => g.ln_pdf(x),
        }
    }

    /// Worst relative moment residual, for the moment-matching estimators.
    pub fn moment_residual(&self) -> Option<f64> {
        match self {
            Self::Dpmsh(e) => Some(e.diagnostics.max_relative_residual),
            Self::Dpmkl(e) => Some(e.diagnostics.max_relative_residual),
            _ => None,
        }
    }
}

/// What a fit needs besides the samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub order: usize,
    pub estimator: EstimatorConfig,
    pub gmm_components: usize,
}

impl FitSettings {
    pub fn for_experiment(cfg: &ExperimentConfig) -> Self {
        Self {
            order: cfg.order,
            estimator: EstimatorConfig {
                grid: cfg.grid,
                standardize: cfg.standardize,
                ..EstimatorConfig::default()
            }
            .with_prior(PriorChoice::Fixed(cfg.prior)),
            gmm_components: cfg.gmm_components,
        }
    }
}

/// Fits `kind` to `samples`; `seed` drives the EM restarts.
pub fn fit(
    kind: EstimatorKind,
    samples: &[f64],
    settings: &FitSettings,
    seed: u64,
) -> Result<FittedDensity> {
    let order = settings.order;
    Ok(match kind {
        EstimatorKind::Dpmsh => {
            FittedDensity::Dpmsh(estimate_from_samples(samples, order, &settings.estimator)?)
        }
        EstimatorKind::Dpmkl => {
            FittedDensity::Dpmkl(dpmkl_from_samples(samples, order, &settings.estimator)?)
        }
        EstimatorKind::Kde => FittedDensity::Kde(kde_fit(samples)?),
        EstimatorKind::Gmm => FittedDensity::Gmm(
            gmm_fit(
                samples,
                settings.gmm_components,
                seed,
                &GmmOptions::default(),
            )?
            .model,
        ),
    })
}
