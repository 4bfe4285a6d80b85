//! Distances between densities evaluated on a quadrature grid.
//!
//! [`tv_distance`] is the sup-CDF (Kolmogorov) distance
//! `sup_x |F_p(x) - F_q(x)|`, not the textbook `1/2 ∫|p - q|`. It is the
//! figure of merit used throughout the experiments.

use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

/// Densities below this are treated as zero when checking KL support.
pub const SUPPORT_THRESHOLD: f64 = 1e-300;

/// Cumulative distribution of a density tabulated at the grid nodes.
#[derive(Debug, Clone)]
pub struct CdfTable {
    xs: Vec<f64>,
    values: Vec<f64>,
    density: Vec<f64>,
    grid: QuadratureGrid,
}

impl CdfTable {
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `F(x)` at an arbitrary point, clamped to `[0, 1]`.
    pub fn at(&self, x: f64) -> f64 {
        self.grid.partial_integral(&self.density, x).clamp(0.0, 1.0)
    }

    /// Total mass on the grid.
    pub fn total(&self) -> f64 {
        self.grid.integrate_values(&self.density)
    }
}

pub fn cdf<P: Fn(f64) -> f64>(density: P, grid: &QuadratureGrid) -> CdfTable {
    let values_at_nodes = grid.evaluate(density);
    let mut running = 0.0f64;
    let values = grid
        .cumulative_at_nodes(&values_at_nodes)
        .into_iter()
        .map(|v| {
            // interpolation can dip slightly; keep the table monotone
            running = running.max(v.clamp(0.0, 1.0));
            running
        })
        .collect();
    CdfTable {
        xs: grid.nodes().to_vec(),
        values,
        density: values_at_nodes,
        grid: grid.clone(),
    }
}

/// `sup_x |F_p(x) - F_q(x)|`.
///
/// The maximum over nodes is polished with a golden-section search between
/// the neighbouring nodes, so the value is stable under grid refinement.
pub fn tv_distance<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> f64
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let diff: Vec<f64> = grid.nodes().iter().map(|&x| p(x) - q(x)).collect();
    let cumulative = grid.cumulative_at_nodes(&diff);
    let (best, best_val) = cumulative
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.abs()))
        .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
    let nodes = grid.nodes();
    let lo = if best == 0 {
        grid.lower()
    } else {
        nodes[best - 1]
    };
    let hi = nodes.get(best + 1).copied().unwrap_or(grid.upper());
    let refined = golden_max(|x| grid.partial_integral(&diff, x).abs(), lo, hi);
    best_val.max(refined).min(1.0)
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if (b - a).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd)
}

/// `∫ p ln(p / q)`, with `0 ln(0 / q) = 0`.
pub fn kl_divergence<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> Result<f64>
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let mut values = Vec::with_capacity(grid.len());
    for &x in grid.nodes() {
        let px = p(x);
        if px <= SUPPORT_THRESHOLD {
            values.push(0.0);
            continue;
        }
        let qx = q(x);
        if !(qx > SUPPORT_THRESHOLD) {
            return Err(Error::SupportMismatch { x, p: px });
        }
        values.push(px * (px / qx).ln());
    }
    Ok(grid.integrate_values(&values))
}

/// [`kl_divergence`] from log densities. Where `q` is tiny but positive,
/// `ln q` stays finite even though `q` itself underflows, so the divergence
/// is still computed exactly; only `ln q = -inf` (or NaN) where `p` is
/// non-negligible is a support mismatch.
pub fn kl_divergence_ln<P, Q>(ln_p: P, ln_q: Q, grid: &QuadratureGrid) -> Result<f64>
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let mut values = Vec::with_capacity(grid.len());
    for &x in grid.nodes() {
        let lp = ln_p(x);
        let px = lp.exp();
        if !(px > SUPPORT_THRESHOLD) {
            values.push(0.0);
            continue;
        }
        let lq = ln_q(x);
        if !lq.is_finite() {
            return Err(Error::SupportMismatch { x, p: px });
        }
        values.push(px * (lp - lq));
    }
    Ok(grid.integrate_values(&values))
}

/// Squared Hellinger distance `∫ (sqrt p - sqrt q)^2`, in `[0, 2]`.
pub fn hellinger_sq<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> f64
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let values = grid.evaluate(|x| {
        let d = p(x).max(0.0).sqrt() - q(x).max(0.0).sqrt();
        d * d
    });
    grid.integrate_values(&values)
}

/// `∫ (p - q)^2`.
pub fn l2_distance<P, Q>(p: P, q: Q, grid: &QuadratureGrid) -> f64
where
    P: Fn(f64) -> f64,
    Q: Fn(f64) -> f64,
{
    let values = grid.evaluate(|x| {
        let d = p(x) - q(x);
        d * d
    });
    grid.integrate_values(&values)
}
