//! Convex moment-matching duals on a fixed quadrature grid and the damped
//! Newton method that minimizes them.
//!
//! All three estimators in this crate share the same structure: the unknown
//! is a coefficient vector `c` of a degree-`2n` polynomial `s(x) = sum_k c_k x^k`
//! (plus an offset for the Hellinger case), and the dual objective is
//!
//! ```text
//! J(c) = sum_k c_k mu_k + int phi(s(x)) r(x) dx
//! ```
//!
//! whose gradient is `mu_k - int x^k p_c(x) dx`, i.e. the moment residual of
//! the primal density `p_c`. Only the scalar kernel `phi` differs.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::QuadratureGrid;

/// Which primal density the dual belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `omega = 1 + s`, `p = r / omega^2`, objective term `r / omega`.
    Hellinger,
    /// `omega = s`, `p = r / omega`, objective term `-r ln omega`.
    KullbackLeibler,
    /// `p = exp(-s)` against Lebesgue measure, objective term `exp(-s)`.
    MaxEntropy,
}

impl Kernel {
    /// Polynomial value mapped to `omega` (or `s` for max-entropy).
    fn offset(self) -> f64 {
        match self {
            Kernel::Hellinger => 1.0,
            _ => 0.0,
        }
    }
}

/// Result of one pass over the grid.
#[derive(Debug, Clone)]
pub struct DualEval {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

/// A dual objective bound to its moments, base density and grid.
#[derive(Debug, Clone)]
pub struct MomentDual {
    kernel: Kernel,
    moments: Vec<f64>,
    /// `x_i^j` for `j = 0..=2 * order`, row-major per node.
    powers: Vec<f64>,
    /// quadrature weight times base density at each node
    weighted_base: Vec<f64>,
    nodes: Vec<f64>,
    eps_feas: f64,
    /// Weight `t` of the barrier `-t int ln omega dx / L` over the grid length `L`.
    barrier: f64,
    /// quadrature weight over grid length at each node
    barrier_weights: Vec<f64>,
}

impl MomentDual {
    /// `base` is the reference density `r` (ignored for max-entropy, whose
    /// base measure is Lebesgue).
    pub fn new<F: Fn(f64) -> f64>(
        kernel: Kernel,
        moments: &[f64],
        base: F,
        grid: &QuadratureGrid,
        eps_feas: f64,
    ) -> Self {
        let order = moments.len() - 1;
        let width = 2 * order + 1;
        let mut powers = Vec::with_capacity(grid.len() * width);
        for &x in grid.nodes() {
            let mut p = 1.0;
            for _ in 0..width {
                powers.push(p);
                p *= x;
            }
        }
        let weighted_base = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&x, &w)| match kernel {
                Kernel::MaxEntropy => w,
                _ => w * base(x),
            })
            .collect();
        let length = grid.upper() - grid.lower();
        Self {
            kernel,
            moments: moments.to_vec(),
            powers,
            weighted_base,
            nodes: grid.nodes().to_vec(),
            eps_feas,
            barrier: 0.0,
            barrier_weights: grid.weights().iter().map(|w| w / length).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.moments.len()
    }

    pub fn moments(&self) -> &[f64] {
        &self.moments
    }

    /// The same problem plus the barrier `-t int ln omega dx / L`, which keeps
    /// `omega` away from zero where the base density is negligible. Ignored
    /// for max-entropy.
    pub fn with_barrier(&self, t: f64) -> Self {
        Self {
            barrier: t,
            ..self.clone()
        }
    }

    fn width(&self) -> usize {
        2 * (self.moments.len() - 1) + 1
    }

    fn has_barrier(&self) -> bool {
        self.barrier > 0.0 && self.kernel != Kernel::MaxEntropy
    }

    /// Polynomial (with offset) at node `i`.
    fn poly_at(&self, coeffs: &[f64], i: usize) -> f64 {
        let x = self.nodes[i];
        coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c) + self.kernel.offset()
    }

    /// Domain of the discretized objective: `omega >= eps_feas` at every node
    /// for the rational kernels, a finite `exp(-s)` for max-entropy.
    ///
    /// The leading coefficient is left free here. Starting points such as
    /// `b = 0` sit on the boundary `b_2n = 0`, and the grid positivity already
    /// bounds how negative it can get; callers check its sign at the optimum.
    pub fn is_feasible(&self, coeffs: &[f64]) -> bool {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return false;
        }
        match self.kernel {
            Kernel::MaxEntropy => (0..self.nodes.len()).all(|i| self.poly_at(coeffs, i) > -700.0),
            _ => (0..self.nodes.len()).all(|i| self.poly_at(coeffs, i) >= self.eps_feas),
        }
    }

    /// Objective only; cheaper than [`MomentDual::evaluate`].
    pub fn objective(&self, coeffs: &[f64]) -> Result<f64> {
        if !self.is_feasible(coeffs) {
            return Err(Error::InfeasiblePoint);
        }
        let mut total: f64 = coeffs.iter().zip(&self.moments).map(|(c, m)| c * m).sum();
        let mut integral = 0.0;
        for i in 0..self.nodes.len() {
            let v = self.poly_at(coeffs, i);
            let wb = self.weighted_base[i];
            integral += match self.kernel {
                Kernel::Hellinger => wb / v,
                Kernel::KullbackLeibler => -wb * v.ln(),
                Kernel::MaxEntropy => wb * (-v).exp(),
            };
            if self.has_barrier() {
                integral -= self.barrier * self.barrier_weights[i] * v.ln();
            }
        }
        total += integral;
        Ok(total)
    }

    /// Objective, gradient `mu_k - int x^k p` and optionally the Hessian.
    pub fn evaluate(&self, coeffs: &[f64], with_hessian: bool) -> Result<DualEval> {
        if !self.is_feasible(coeffs) {
            return Err(Error::InfeasiblePoint);
        }
        let dim = self.dim();
        let width = self.width();
        let mut integral = 0.0;
        // density moments int x^j p, and curvature moments int x^j kappa
        let mut density_moments = vec![0.0; dim];
        let mut curvature = vec![0.0; if with_hessian { width } else { 0 }];
        for i in 0..self.nodes.len() {
            let v = self.poly_at(coeffs, i);
            let wb = self.weighted_base[i];
            let (mut term, mut density, mut kappa) = match self.kernel {
                Kernel::Hellinger => {
                    let inv = 1.0 / v;
                    (wb * inv, wb * inv * inv, 2.0 * wb * inv * inv * inv)
                }
                Kernel::KullbackLeibler => {
                    let inv = 1.0 / v;
                    (-wb * v.ln(), wb * inv, wb * inv * inv)
                }
                Kernel::MaxEntropy => {
                    let e = wb * (-v).exp();
                    (e, e, e)
                }
            };
            if self.has_barrier() {
                let bw = self.barrier * self.barrier_weights[i];
                term -= bw * v.ln();
                density += bw / v;
                kappa += bw / (v * v);
            }
            integral += term;
            let row = &self.powers[i * width..(i + 1) * width];
            for (acc, p) in density_moments.iter_mut().zip(row) {
                *acc += density * p;
            }
            for (acc, p) in curvature.iter_mut().zip(row) {
                *acc += kappa * p;
            }
        }
        let objective = coeffs
            .iter()
            .zip(&self.moments)
            .map(|(c, m)| c * m)
            .sum::<f64>()
            + integral;
        let gradient = self
            .moments
            .iter()
            .zip(&density_moments)
            .map(|(m, d)| m - d)
            .collect();
        let hessian = with_hessian.then(|| DMatrix::from_fn(dim, dim, |k, l| curvature[k + l]));
        Ok(DualEval {
            objective,
            gradient,
            hessian,
        })
    }

    /// Moments `int x^k p` of the primal density at `coeffs`.
    pub fn primal_moments(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        let eval = self.evaluate(coeffs, false)?;
        Ok(self
            .moments
            .iter()
            .zip(&eval.gradient)
            .map(|(m, g)| m - g)
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub max_iter: usize,
    /// Gradient max-norm at which the iteration may stop.
    pub tol_grad: f64,
    /// Step shrink factor in the backtracking line search.
    pub ls_shrink: f64,
    pub armijo: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_grad: 1e-9,
            ls_shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub coeffs: Vec<f64>,
    pub iterations: usize,
    pub gradient: Vec<f64>,
    pub objective: f64,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
}

pub fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Newton direction `-(H + lambda D)^{-1} g` where `D = diag(H)`, using a
/// Jacobi-scaled Cholesky factorization. A Tikhonov ridge is added when the
/// factorization fails.
pub fn newton_direction(hessian: &DMatrix<f64>, gradient: &[f64], lambda: f64) -> Vec<f64> {
    let dim = gradient.len();
    let scale: Vec<f64> = (0..dim)
        .map(|i| 1.0 / hessian[(i, i)].abs().max(f64::MIN_POSITIVE).sqrt())
        .collect();
    let scaled = DMatrix::from_fn(dim, dim, |i, j| hessian[(i, j)] * scale[i] * scale[j]);
    let rhs = DVector::from_fn(dim, |i, _| -gradient[i] * scale[i]);
    let mut shift = lambda;
    let ridge = 1e-12 * scaled.trace() / dim as f64;
    for _ in 0..12 {
        let mut m = scaled.clone();
        for i in 0..dim {
            m[(i, i)] += shift;
        }
        if let Some(chol) = m.cholesky() {
            let y = chol.solve(&rhs);
            if y.iter().all(|v| v.is_finite()) {
                return (0..dim).map(|i| y[i] * scale[i]).collect();
            }
        }
        shift = if shift < ridge { ridge } else { shift * 100.0 };
    }
    // steepest descent in the scaled metric
    (0..dim)
        .map(|i| -gradient[i] * scale[i] * scale[i])
        .collect()
}

const MAX_DAMPING: f64 = 1e10;

/// Damped Newton from a feasible `start`.
///
/// Each step is shrunk until the trial point is feasible and satisfies the
/// Armijo condition. Far from the optimum the quadratic model can point out
/// of the feasible region; short accepted steps therefore raise a
/// Levenberg–Marquardt damping term, and full steps lower it back to zero.
/// `accept` is an extra stopping test evaluated once the gradient is below
/// `tol_grad`.
pub fn minimize<A>(
    dual: &MomentDual,
    start: &[f64],
    opts: &NewtonOptions,
    accept: A,
) -> Result<NewtonOutcome>
where
    A: Fn(&[f64]) -> bool,
{
    let mut x = start.to_vec();
    if !dual.is_feasible(&x) {
        return Err(Error::InfeasiblePoint);
    }
    let mut eval = dual.evaluate(&x, true)?;
    let mut trace = vec![eval.objective];
    let mut lambda = 0.0_f64;
    for iteration in 0..=opts.max_iter {
        let gnorm = max_norm(&eval.gradient);
        if gnorm <= opts.tol_grad && accept(&eval.gradient) {
            return Ok(NewtonOutcome {
                coeffs: x,
                iterations: iteration,
                gradient: eval.gradient,
                objective: eval.objective,
                objective_trace: trace,
            });
        }
        if iteration == opts.max_iter {
            return Err(Error::NotConverged {
                iterations: iteration,
                gradient_norm: gnorm,
            });
        }
        let hessian = eval.hessian.as_ref().expect("hessian requested");
        let mut accepted = None;
        while accepted.is_none() {
            let direction = newton_direction(hessian, &eval.gradient, lambda);
            let (step, t) = line_search(dual, &x, &eval, &direction, opts)?;
            match step {
                Some(next) => {
                    lambda = if t >= 0.5 {
                        if lambda < 1e-8 {
                            0.0
                        } else {
                            lambda * 0.1
                        }
                    } else if t < 0.1 {
                        (lambda * 10.0).max(1e-4)
                    } else {
                        lambda
                    };
                    accepted = Some(next);
                }
                None if lambda < MAX_DAMPING => lambda = (lambda * 10.0).max(1e-4),
                None => {
                    return Err(Error::LineSearchStalled {
                        iteration,
                        gradient_norm: gnorm,
                    })
                }
            }
        }
        x = accepted.expect("loop exits with a step");
        eval = dual.evaluate(&x, true)?;
        trace.push(eval.objective);
    }
    unreachable!("loop returns on the final iteration")
}

/// Iterations allowed for the direct attempt before the barrier path takes over.
const DIRECT_SHARE: usize = 4;
const DIRECT_CAP: usize = 50;
/// Barrier weights of the interior path, followed by an exact solve.
const BARRIER_PATH: [f64; 8] = [1.0, 1e-1, 1e-2, 1e-3, 1e-4, 1e-6, 1e-8, 1e-10];

/// [`minimize`] with an interior-point fallback.
///
/// A quarter of the budget, at most 50 iterations, goes to plain damped
/// Newton from `start`. Where
/// the base density is negligible, `omega` can approach zero at almost no
/// cost in the objective, and Newton then crawls along that boundary. If the
/// direct attempt does not converge, the problem is re-solved along a
/// decreasing sequence of barrier weights, each stage warm-started from the
/// last, and finished with an exact solve. `opts.max_iter` bounds the total
/// iteration count. The returned objective trace covers the last solve on the
/// exact objective only.
pub fn minimize_with_continuation<A>(
    dual: &MomentDual,
    start: &[f64],
    opts: &NewtonOptions,
    accept: A,
) -> Result<NewtonOutcome>
where
    A: Fn(&[f64]) -> bool,
{
    let direct = NewtonOptions {
        max_iter: (opts.max_iter / DIRECT_SHARE).clamp(1, DIRECT_CAP),
        ..*opts
    };
    let mut used = match minimize(dual, start, &direct, &accept) {
        Ok(outcome) => return Ok(outcome),
        Err(Error::NotConverged { .. } | Error::LineSearchStalled { .. })
            if dual.kernel != Kernel::MaxEntropy && opts.max_iter > direct.max_iter =>
        {
            direct.max_iter
        }
        Err(e) => return Err(e),
    };
    let mut x = start.to_vec();
    for &t in &BARRIER_PATH {
        let stage_opts = NewtonOptions {
            max_iter: opts.max_iter.saturating_sub(used),
            tol_grad: 1e-8,
            ..*opts
        };
        if stage_opts.max_iter == 0 {
            break;
        }
        let out = match minimize(&dual.with_barrier(t), &x, &stage_opts, |_| true) {
            Ok(out) => out,
            Err(Error::NotConverged { iterations, .. }) => {
                used += iterations;
                break;
            }
            Err(e) => return Err(e),
        };
        used += out.iterations;
        x = out.coeffs;
    }
    let remaining = opts.max_iter.saturating_sub(used);
    let finish = NewtonOptions {
        max_iter: remaining,
        ..*opts
    };
    match minimize(dual, &x, &finish, &accept) {
        Ok(mut out) => {
            out.iterations += used;
            Ok(out)
        }
        Err(Error::NotConverged { gradient_norm, .. }) => Err(Error::NotConverged {
            iterations: opts.max_iter,
            gradient_norm,
        }),
        Err(e) => Err(e),
    }
}

/// Backtracking along `direction`; returns the accepted point and step length.
fn line_search(
    dual: &MomentDual,
    x: &[f64],
    eval: &DualEval,
    direction: &[f64],
    opts: &NewtonOptions,
) -> Result<(Option<Vec<f64>>, f64)> {
    let slope: f64 = direction
        .iter()
        .zip(&eval.gradient)
        .map(|(d, g)| d * g)
        .sum();
    if !(slope < 0.0) {
        return Ok((None, 0.0));
    }
    // Below this decrement the objective difference is pure rounding noise.
    let roundoff = -slope <= 1e-14 * eval.objective.abs().max(1.0);
    let mut t = 1.0;
    while t > 1e-20 {
        let trial: Vec<f64> = x.iter().zip(direction).map(|(a, d)| a + t * d).collect();
        if dual.is_feasible(&trial) {
            let f = dual.objective(&trial)?;
            if f <= eval.objective + opts.armijo * t * slope || (roundoff && f.is_finite()) {
                return Ok((Some(trial), t));
            }
        }
        t *= opts.ls_shrink;
    }
    Ok((None, t))
}
