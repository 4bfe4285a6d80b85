//! Probability density estimation on the real line from sample power moments.
//!
//! The primary estimator ([`hellinger`]) returns the density closest to a
//! reference density in squared Hellinger distance among all densities whose
//! moments up to an even order `2n` equal the sample moments exactly. It is
//! obtained from a strictly convex dual problem in `2n + 1` unknowns.
//!
//! Around it sit the pieces needed to use and evaluate it: sample moments and
//! the Hankel solvability check ([`moments`]), a shared quadrature engine
//! ([`quadrature`]), Gaussian reference densities ([`priors`]), the
//! maximum-entropy error bound ([`maxent`]), comparison estimators
//! ([`baselines`]), distances between densities ([`metrics`]) and seeded
//! mixture sampling ([`sampling`]).

pub mod baselines;
pub mod dual;
pub mod error;
pub mod hellinger;
pub mod maxent;
pub mod metrics;
pub mod moments;
pub mod priors;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use hellinger::{
    estimate_from_moments, estimate_from_samples, eval_density, DensityEstimate, EstimatorConfig,
    OmegaCoefficients, PriorChoice, SolveOptions,
};
pub use moments::{compute_sample_moments, MomentSequence, Standardization};
pub use priors::GaussianPrior;
pub use quadrature::{build_grid, GridSpec, QuadratureGrid};
