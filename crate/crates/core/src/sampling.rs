//! Ground-truth mixtures, their exact densities and moments, and seeded sampling.
//!
//! Random numbers come from ChaCha20 keyed by a 64-bit seed expanded with
//! SplitMix64 ([`GENERATOR_VERSION`]). Independent streams, one per Monte
//! Carlo run, are derived with [`derive_seed`], a SplitMix64 hash over the
//! master seed and a counter path, so results do not depend on how runs are
//! scheduled.

use libm::erfc;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::log_sum_exp;
use crate::error::{Error, Result};
use crate::moments::{binomial_table, MomentSequence};
use crate::priors::{gaussian_central_moments, GaussianPrior};
use crate::quadrature::{GridSpec, QuadratureGrid};

/// Identifier of the seed expansion and generator, recorded in experiment provenance.
pub const GENERATOR_VERSION: &str = "chacha20-splitmix64-v1";

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// One SplitMix64 output step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for the stream addressed by `path` (e.g. `[sample_count, run]`).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(master), |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Seeded uniform source on the open interval `(0, 1)`.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: ChaCha20Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed;
        for chunk in key.chunks_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        Self {
            inner: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// 53-bit uniform strictly inside `(0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        ((self.inner.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    /// Standard normal by Box–Muller (cosine branch; two uniforms per draw).
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplace,
    Gumbel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub family: Family,
    pub weight: f64,
    pub location: f64,
    pub scale: f64,
}

impl Component {
    pub fn new(family: Family, weight: f64, location: f64, scale: f64) -> Self {
        Self {
            family,
            weight,
            location,
            scale,
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let s = self.scale;
        let z = (x - self.location) / s;
        match self.family {
            Family::Gaussian => (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt()),
            Family::Laplace => (-z.abs()).exp() / (2.0 * s),
            Family::Gumbel => (-(z + (-z).exp())).exp() / s,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let s = self.scale;
        let z = (x - self.location) / s;
        let shape = match self.family {
            Family::Gaussian => -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln(),
            Family::Laplace => -z.abs() - std::f64::consts::LN_2,
            Family::Gumbel => -(z + (-z).exp()),
        };
        shape - s.ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        match self.family {
            Family::Gaussian => 0.5 * erfc(-z / std::f64::consts::SQRT_2),
            Family::Laplace => {
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Family::Gumbel => (-(-z).exp()).exp(),
        }
    }

    /// `1 - cdf(x)`, without cancellation in the upper tail.
    pub fn survival(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        match self.family {
            Family::Gaussian => 0.5 * erfc(z / std::f64::consts::SQRT_2),
            Family::Laplace => {
                if z < 0.0 {
                    1.0 - 0.5 * z.exp()
                } else {
                    0.5 * (-z).exp()
                }
            }
            Family::Gumbel => -libm::expm1(-(-z).exp()),
        }
    }

    fn sample(&self, rng: &mut SeededRng) -> f64 {
        let standard = match self.family {
            Family::Gaussian => rng.standard_normal(),
            Family::Laplace => {
                let u = rng.uniform();
                if u < 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            Family::Gumbel => -(-rng.uniform().ln()).ln(),
        };
        self.location + self.scale * standard
    }

    /// Raw moments `E[X^k]`, `k = 0..=order`.
    pub fn raw_moments(&self, order: usize) -> Vec<f64> {
        let standard = standard_moments(self.family, order);
        let binom = binomial_table(order);
        (0..=order)
            .map(|k| {
                (0..=k)
                    .map(|j| {
                        binom[k][j]
                            * self.location.powi((k - j) as i32)
                            * self.scale.powi(j as i32)
                            * standard[j]
                    })
                    .sum()
            })
            .collect()
    }
}

/// Moments of the unit-scale, zero-location member of each family.
fn standard_moments(family: Family, order: usize) -> Vec<f64> {
    match family {
        Family::Gaussian => gaussian_central_moments(1.0, order),
        Family::Laplace => {
            let mut out = vec![0.0; order + 1];
            let mut factorial = 1.0;
            for k in 0..=order {
                if k > 0 {
                    factorial *= k as f64;
                }
                if k % 2 == 0 {
                    out[k] = factorial;
                }
            }
            out
        }
        Family::Gumbel => {
            // cumulants: kappa_1 = gamma, kappa_n = (n-1)! zeta(n)
            let mut kappa = vec![0.0; order + 1];
            let mut factorial = 1.0;
            for n in 1..=order {
                if n >= 2 {
                    factorial *= (n - 1) as f64;
                }
                kappa[n] = if n == 1 {
                    EULER_GAMMA
                } else {
                    factorial * zeta(n)
                };
            }
            let binom = binomial_table(order.max(1));
            let mut mu = vec![0.0; order + 1];
            mu[0] = 1.0;
            for n in 1..=order {
                mu[n] = (1..=n)
                    .map(|j| binom[n - 1][j - 1] * kappa[j] * mu[n - j])
                    .sum();
            }
            mu
        }
    }
}

/// Riemann zeta for integer `s >= 2`, by direct summation with an
/// Euler–Maclaurin tail.
fn zeta(s: usize) -> f64 {
    let n = 1000usize;
    let s_f = s as f64;
    let head: f64 = (1..n).rev().map(|k| (k as f64).powf(-s_f)).sum();
    let nf = n as f64;
    let tail =
        nf.powf(1.0 - s_f) / (s_f - 1.0) + 0.5 * nf.powf(-s_f) + s_f / 12.0 * nf.powf(-s_f - 1.0)
            - s_f * (s_f + 1.0) * (s_f + 2.0) / 720.0 * nf.powf(-s_f - 3.0);
    head + tail
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
}

impl MixtureSpec {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let spec = Self { components };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::InvalidMixture("no components".into()));
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidMixture(format!("weights sum to {total}")));
        }
        for c in &self.components {
            if !(c.weight > 0.0) || !(c.scale > 0.0) || !c.location.is_finite() {
                return Err(Error::InvalidMixture(format!("bad component {c:?}")));
            }
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        eval_mixture(self, x)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.weight.ln() + c.ln_pdf(x))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.components.iter().map(|c| c.weight * c.cdf(x)).sum()
    }

    pub fn survival(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| c.weight * c.survival(x))
            .sum()
    }

    /// Population moments up to `order`.
    pub fn population_moments(&self, order: usize) -> Result<MomentSequence> {
        let mut values = vec![0.0; order + 1];
        for c in &self.components {
            for (acc, m) in values.iter_mut().zip(c.raw_moments(order)) {
                *acc += c.weight * m;
            }
        }
        values[0] = 1.0;
        MomentSequence::from_values(values)
    }

    /// Points where the density is not smooth (Laplace cusps); quadrature
    /// panels should be split there.
    pub fn kinks(&self) -> Vec<f64> {
        self.components
            .iter()
            .filter(|c| c.family == Family::Laplace)
            .map(|c| c.location)
            .collect()
    }

    /// Mean and standard deviation of the mixture.
    pub fn mean_std(&self) -> (f64, f64) {
        let m: Vec<f64> = self.components.iter().fold(vec![0.0; 3], |mut acc, c| {
            for (a, v) in acc.iter_mut().zip(c.raw_moments(2)) {
                *a += c.weight * v;
            }
            acc
        });
        (m[1], (m[2] - m[1] * m[1]).sqrt())
    }
}

pub fn eval_mixture(spec: &MixtureSpec, x: f64) -> f64 {
    spec.components.iter().map(|c| c.weight * c.pdf(x)).sum()
}

/// `m` i.i.d. draws. The component is picked by inverse CDF on one uniform,
/// then one family-specific draw is made.
pub fn sample_mixture(spec: &MixtureSpec, m: usize, seed: u64) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    let cumulative: Vec<f64> = spec
        .components
        .iter()
        .scan(0.0, |acc, c| {
            *acc += c.weight;
            Some(*acc)
        })
        .collect();
    (0..m)
        .map(|_| {
            let u = rng.uniform() * cumulative.last().copied().unwrap_or(1.0);
            let idx = cumulative
                .iter()
                .position(|&c| u <= c)
                .unwrap_or(spec.components.len() - 1);
            spec.components[idx].sample(&mut rng)
        })
        .collect()
}

/// One of the five benchmark configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleConfig {
    pub id: u32,
    pub spec: MixtureSpec,
    pub prior: GaussianPrior,
    pub order: usize,
    pub sample_count: usize,
    pub mc_runs: usize,
}

impl ExampleConfig {
    /// Grid around the prior, with panels split at the truth's kinks.
    pub fn truth_grid(&self, grid: &GridSpec) -> Result<QuadratureGrid> {
        Ok(grid
            .build(self.prior.mean, self.prior.std_dev)?
            .with_breakpoints(&self.spec.kinks()))
    }
}

/// Benchmark configurations 1..=5.
///
/// 3 uses Laplace components with scale 1/2 so each is a proper density;
/// 4 places the Gumbel components at +1 and -1; 5 gives the wide Gaussian
/// a standard deviation of 2.
pub fn benchmark_example(id: u32) -> Result<ExampleConfig> {
    use Family::*;
    let (components, mean, std, order, m) = match id {
        1 => (
            vec![
                Component::new(Gaussian, 0.5, 2.0, 1.0),
                Component::new(Gaussian, 0.5, -2.0, 1.0),
            ],
            0.0,
            6.7,
            4,
            100,
        ),
        2 => (
            vec![
                Component::new(Gaussian, 0.7, 2.0, 1.0),
                Component::new(Gaussian, 0.3, -2.0, 1.0),
            ],
            -0.7,
            6.2,
            4,
            100,
        ),
        3 => (
            vec![
                Component::new(Laplace, 0.5, 2.0, 0.5),
                Component::new(Laplace, 0.5, -2.0, 0.5),
            ],
            0.0,
            6.5,
            4,
            200,
        ),
        4 => (
            vec![
                Component::new(Gumbel, 0.5, 1.0, 1.0),
                Component::new(Gumbel, 0.5, -1.0, 1.0),
            ],
            0.5,
            3.5,
            6,
            200,
        ),
        5 => (
            vec![
                Component::new(Gaussian, 0.3, 3.0, 1.0),
                Component::new(Gaussian, 0.3, -3.0, 1.0),
                Component::new(Gaussian, 0.4, 1.0, 2.0),
            ],
            0.3,
            5.0,
            6,
            200,
        ),
        other => return Err(Error::UnknownExample(other)),
    };
    Ok(ExampleConfig {
        id,
        spec: MixtureSpec::new(components)?,
        prior: GaussianPrior::new(mean, std)?,
        order,
        sample_count: m,
        mc_runs: 50,
    })
}
