//! Composite Gauss–Legendre quadrature on a truncated interval of the real line.
//!
//! Every integral over the real line in this crate goes through a
//! [`QuadratureGrid`]. The grid is built once per solve and reused, which
//! keeps the discretized dual objectives smooth and deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::KahanSum;

pub const MAX_NODES_PER_PANEL: usize = 64;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n`, ascending.
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi's initial guess for the i-th largest root.
            let mut t = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut derivative = 0.0;
            for _ in 0..100 {
                let (p, dp) = legendre_with_derivative(n, t);
                derivative = dp;
                let step = p / dp;
                t -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            let (_, dp) = legendre_with_derivative(n, t);
            if dp != 0.0 {
                derivative = dp;
            }
            let w = 2.0 / ((1.0 - t * t) * derivative * derivative);
            nodes[n - 1 - i] = t;
            nodes[i] = -t;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Weights `s_j(t)` such that `sum_j s_j(t) f(t_j)` is the integral over
    /// `[-1, t]` of the polynomial interpolating `f` at the nodes.
    pub fn partial_weights(&self, t: f64) -> Vec<f64> {
        let n = self.len();
        // j_k(t) = (2k+1)/2 * int_{-1}^t P_k
        let p_t = legendre_all(n, t);
        let mut antiderivative = vec![0.0; n];
        antiderivative[0] = 0.5 * (t + 1.0);
        for k in 1..n {
            antiderivative[k] = 0.5 * (p_t[k + 1] - p_t[k - 1]);
        }
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&tj, &wj)| {
                let p_j = legendre_all(n - 1, tj);
                wj * p_j
                    .iter()
                    .zip(&antiderivative)
                    .map(|(p, a)| p * a)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// `(P_n(t), P_n'(t))` by the three-term recurrence.
fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = t;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * t * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, dp)
}

/// `[P_0(t), ..., P_n(t)]`.
fn legendre_all(n: usize, t: f64) -> Vec<f64> {
    let mut p = vec![1.0; n + 1];
    if n >= 1 {
        p[1] = t;
    }
    for k in 2..=n {
        let kf = k as f64;
        p[k] = ((2.0 * kf - 1.0) * t * p[k - 1] - (kf - 1.0) * p[k - 2]) / kf;
    }
    p
}

/// Nodes and weights of a composite rule.
///
/// Panels are equal-width unless extra edges were inserted with
/// [`QuadratureGrid::with_breakpoints`], which is how densities with kinks
/// (Laplace cusps) are integrated accurately.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    center: f64,
    half_width: f64,
    /// Panel edges, ascending; `edges.len() == panels + 1`.
    edges: Vec<f64>,
    reference: GaussLegendre,
}

/// Resolution settings for grids built around a Gaussian reference density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Half-width of the truncated domain in units of the reference std-dev.
    pub half_width_sigmas: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            half_width_sigmas: 12.0,
            panels: 40,
            nodes_per_panel: 16,
        }
    }
}

impl GridSpec {
    pub fn build(&self, center: f64, sigma: f64) -> Result<QuadratureGrid> {
        build_grid(
            center,
            self.half_width_sigmas * sigma,
            self.panels,
            self.nodes_per_panel,
        )
    }
}

/// Composite Gauss–Legendre rule on `[center - half_width, center + half_width]`.
pub fn build_grid(
    center: f64,
    half_width: f64,
    panels: usize,
    nodes_per_panel: usize,
) -> Result<QuadratureGrid> {
    if !(half_width > 0.0) || !half_width.is_finite() || !center.is_finite() {
        return Err(Error::InvalidGrid(format!(
            "half_width must be positive and finite (center {center}, half_width {half_width})"
        )));
    }
    if panels == 0 {
        return Err(Error::InvalidGrid("panels must be >= 1".into()));
    }
    if !(2..=MAX_NODES_PER_PANEL).contains(&nodes_per_panel) {
        return Err(Error::InvalidGrid(format!(
            "nodes_per_panel must be in 2..={MAX_NODES_PER_PANEL}, got {nodes_per_panel}"
        )));
    }
    let lo = center - half_width;
    let panel_width = 2.0 * half_width / panels as f64;
    let mut edges: Vec<f64> = (0..panels).map(|p| lo + p as f64 * panel_width).collect();
    edges.push(center + half_width);
    Ok(QuadratureGrid::from_edges(
        center,
        half_width,
        edges,
        GaussLegendre::new(nodes_per_panel),
    ))
}

impl QuadratureGrid {
    fn from_edges(center: f64, half_width: f64, edges: Vec<f64>, reference: GaussLegendre) -> Self {
        let q = reference.len();
        let panels = edges.len() - 1;
        let mut nodes = Vec::with_capacity(panels * q);
        let mut weights = Vec::with_capacity(panels * q);
        for pair in edges.windows(2) {
            let mid = 0.5 * (pair[0] + pair[1]);
            let half = 0.5 * (pair[1] - pair[0]);
            for (t, w) in reference.nodes.iter().zip(&reference.weights) {
                nodes.push(mid + half * t);
                weights.push(half * w);
            }
        }
        Self {
            nodes,
            weights,
            center,
            half_width,
            edges,
            reference,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn center(&self) -> f64 {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn panels(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.reference.len()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.edges[0]
    }

    pub fn upper(&self) -> f64 {
        self.edges[self.edges.len() - 1]
    }

    /// Same interval with every panel split in two.
    pub fn refined(&self) -> Self {
        let mut edges = Vec::with_capacity(2 * self.edges.len() - 1);
        for pair in self.edges.windows(2) {
            edges.push(pair[0]);
            edges.push(0.5 * (pair[0] + pair[1]));
        }
        edges.push(self.upper());
        Self::from_edges(self.center, self.half_width, edges, self.reference.clone())
    }

    /// Same grid with the panels containing `points` split there.
    ///
    /// Points outside the interval or within a relative 1e-9 of an existing
    /// edge are ignored.
    pub fn with_breakpoints(&self, points: &[f64]) -> Self {
        let tol = 1e-9 * (self.upper() - self.lower());
        let mut edges = self.edges.clone();
        for &x in points {
            if x.is_finite()
                && x > self.lower() + tol
                && x < self.upper() - tol
                && edges.iter().all(|e| (e - x).abs() > tol)
            {
                edges.push(x);
            }
        }
        edges.sort_by(f64::total_cmp);
        Self::from_edges(self.center, self.half_width, edges, self.reference.clone())
    }

    /// `f` evaluated at every node.
    pub fn evaluate<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Weighted sum of precomputed node values.
    pub fn integrate_values(&self, values: &[f64]) -> f64 {
        let mut acc = KahanSum::default();
        for (w, v) in self.weights.iter().zip(values) {
            acc.add(w * v);
        }
        acc.total()
    }

    /// Integral from the left end of the grid up to each node, using the
    /// per-panel interpolating polynomial of `values`.
    pub fn cumulative_at_nodes(&self, values: &[f64]) -> Vec<f64> {
        let q = self.nodes_per_panel();
        let partial: Vec<Vec<f64>> = self
            .reference
            .nodes
            .iter()
            .map(|&t| self.reference.partial_weights(t))
            .collect();
        let mut out = Vec::with_capacity(self.len());
        let mut before = KahanSum::default();
        for (p, pair) in self.edges.windows(2).enumerate() {
            let half = 0.5 * (pair[1] - pair[0]);
            let panel = &values[p * q..(p + 1) * q];
            for s in &partial {
                let inside: f64 = s.iter().zip(panel).map(|(a, b)| a * b).sum();
                out.push(before.total() + half * inside);
            }
            for (w, v) in self.weights[p * q..(p + 1) * q].iter().zip(panel) {
                before.add(w * v);
            }
        }
        out
    }

    /// Integral from the left end of the grid to `x`, interpolating the
    /// node values inside the panel that contains `x`. Clamped to the grid.
    pub fn partial_integral(&self, values: &[f64], x: f64) -> f64 {
        if x <= self.lower() {
            return 0.0;
        }
        if x >= self.upper() {
            return self.integrate_values(values);
        }
        let q = self.nodes_per_panel();
        let p = (self.edges.partition_point(|&e| e <= x) - 1).min(self.panels() - 1);
        let (a, b) = (self.edges[p], self.edges[p + 1]);
        let half = 0.5 * (b - a);
        let t = ((x - 0.5 * (a + b)) / half).clamp(-1.0, 1.0);
        let mut acc = KahanSum::default();
        for (w, v) in self.weights[..p * q].iter().zip(&values[..p * q]) {
            acc.add(w * v);
        }
        let s = self.reference.partial_weights(t);
        let inside: f64 = s
            .iter()
            .zip(&values[p * q..(p + 1) * q])
            .map(|(a, b)| a * b)
            .sum();
        acc.total() + half * inside
    }
}

/// `sum_i w_i f(x_i)`; fails if `f` is not finite at a node.
pub fn integrate<F: Fn(f64) -> f64>(f: F, grid: &QuadratureGrid) -> Result<f64> {
    let mut acc = KahanSum::default();
    for (&x, &w) in grid.nodes.iter().zip(&grid.weights) {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteIntegrand { x });
        }
        acc.add(w * v);
    }
    Ok(acc.total())
}
