//! Moment-matching density estimation under the squared Hellinger distance.
//!
//! Among all densities whose power moments up to order `2n` equal the given
//! ones, the one closest to a reference density `r` in squared Hellinger
//! distance has the form
//!
//! ```text
//! p(x) = r(x) / omega(x)^2,   omega(x) = 1 + F(x)^T Omega F(x),   F(x) = [1, x, ..., x^n]
//! ```
//!
//! where `Omega` minimizes the strictly convex dual
//! `J(Omega) = tr(Omega M) + int r / omega`. Because `F^T Omega F` only
//! depends on the anti-diagonal sums of `Omega`, the solver works with the
//! `2n + 1` polynomial coefficients `b_k = sum_{i+j=k} Omega_ij` of
//! `omega - 1`. For a Hankel `Omega` with entries `a_{i+j}` this is
//! `b_k = c_k a_k`, where `c_k` counts the pairs `(i, j)` with `i + j = k`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dual::{self, Kernel, MomentDual, NewtonOptions};
use crate::error::{Error, Result};
use crate::moments::{
    build_hankel, certify_positive_definite, MomentSequence, Standardization, StandardizedMoments,
};
use crate::priors::{default_prior, eval_prior, GaussianPrior, DEFAULT_INFLATION};
use crate::quadrature::{GridSpec, QuadratureGrid};

/// Coefficients `b_0..=b_2n` of `omega(x) - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaCoefficients {
    pub order: usize,
    pub b: Vec<f64>,
}

impl OmegaCoefficients {
    pub fn zeros(order: usize) -> Self {
        Self {
            order,
            b: vec![0.0; order + 1],
        }
    }

    pub fn new(b: Vec<f64>) -> Result<Self> {
        if b.len() < 3 || (b.len() - 1) % 2 != 0 {
            return Err(Error::InvalidOrder(b.len().saturating_sub(1)));
        }
        Ok(Self {
            order: b.len() - 1,
            b,
        })
    }

    /// Number of index pairs `(i, j)`, `0 <= i, j <= n`, with `i + j = k`.
    pub fn multiplicity(order: usize, k: usize) -> usize {
        let n = order / 2;
        if k > 2 * n {
            0
        } else {
            k.min(2 * n - k) + 1
        }
    }

    /// The Hankel representative `Omega_ij = b_{i+j} / c_{i+j}`.
    pub fn hankel_representative(&self) -> DMatrix<f64> {
        let size = self.order / 2 + 1;
        DMatrix::from_fn(size, size, |i, j| {
            self.b[i + j] / Self::multiplicity(self.order, i + j) as f64
        })
    }

    /// Coefficients from a Hankel `Omega` (anti-diagonal sums).
    pub fn from_hankel(omega: &DMatrix<f64>) -> Result<Self> {
        let size = omega.nrows();
        let mut b = vec![0.0; 2 * size - 1];
        for i in 0..size {
            for j in 0..size {
                b[i + j] += omega[(i, j)];
            }
        }
        Self::new(b)
    }

    /// `omega` expressed in raw coordinates, i.e. the coefficients of
    /// `x -> omega((x - shift) / scale) - 1`.
    pub fn destandardized(&self, transform: &Standardization) -> Self {
        let a = 1.0 / transform.scale;
        let c = -transform.shift / transform.scale;
        // expand sum_k b_k (a x + c)^k
        let binom = crate::moments::binomial_table(self.order);
        let mut out = vec![0.0; self.order + 1];
        for (k, &bk) in self.b.iter().enumerate() {
            for j in 0..=k {
                out[j] += bk * binom[k][j] * a.powi(j as i32) * c.powi((k - j) as i32);
            }
        }
        Self {
            order: self.order,
            b: out,
        }
    }
}

/// `1 + sum_k b_k x^k` by Horner's rule.
pub fn omega_eval(coeffs: &OmegaCoefficients, x: f64) -> f64 {
    1.0 + coeffs.b.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// `omega(node) >= eps` at every grid node and a non-negative leading coefficient.
pub fn is_feasible(coeffs: &OmegaCoefficients, grid: &QuadratureGrid, eps: f64) -> bool {
    coeffs.b.iter().all(|c| c.is_finite())
        && *coeffs.b.last().unwrap() >= 0.0
        && grid.nodes().iter().all(|&x| omega_eval(coeffs, x) >= eps)
}

/// Real roots of `omega` via companion-matrix eigenvalues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityCertificate {
    pub real_roots: Vec<f64>,
    pub positive_on_real_line: bool,
}

/// Post-hoc certificate that `omega > 0` on all of the real line, not just on
/// the quadrature nodes.
pub fn certify_omega_positive(coeffs: &OmegaCoefficients) -> PositivityCertificate {
    let mut poly: Vec<f64> = coeffs.b.clone();
    poly[0] += 1.0;
    while poly.len() > 1 && *poly.last().unwrap() == 0.0 {
        poly.pop();
    }
    let degree = poly.len() - 1;
    if degree == 0 {
        return PositivityCertificate {
            real_roots: vec![],
            positive_on_real_line: poly[0] > 0.0,
        };
    }
    let lead = poly[degree];
    let companion = DMatrix::from_fn(degree, degree, |i, j| {
        if i == 0 {
            -poly[degree - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let mut real_roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    real_roots.sort_by(f64::total_cmp);
    PositivityCertificate {
        positive_on_real_line: real_roots.is_empty() && lead > 0.0 && degree % 2 == 0,
        real_roots,
    }
}

fn hellinger_dual(
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
    eps_feas: f64,
) -> MomentDual {
    MomentDual::new(
        Kernel::Hellinger,
        moments.values(),
        |x| eval_prior(prior, x),
        grid,
        eps_feas,
    )
}

fn check_dims(coeffs: &OmegaCoefficients, moments: &MomentSequence) -> Result<()> {
    if coeffs.b.len() != moments.values().len() {
        return Err(Error::InvalidArgument(format!(
            "coefficient order {} does not match moment order {}",
            coeffs.order,
            moments.order()
        )));
    }
    Ok(())
}

fn check_point(
    coeffs: &OmegaCoefficients,
    moments: &MomentSequence,
    grid: &QuadratureGrid,
) -> Result<()> {
    check_dims(coeffs, moments)?;
    if is_feasible(coeffs, grid, f64::MIN_POSITIVE) {
        Ok(())
    } else {
        Err(Error::InfeasiblePoint)
    }
}

/// `sum_k b_k mu_k + int r / omega`.
pub fn dual_objective(
    coeffs: &OmegaCoefficients,
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
) -> Result<f64> {
    check_point(coeffs, moments, grid)?;
    hellinger_dual(moments, prior, grid, f64::MIN_POSITIVE).objective(&coeffs.b)
}

/// `mu_k - int x^k r / omega^2`.
pub fn dual_gradient(
    coeffs: &OmegaCoefficients,
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
) -> Result<Vec<f64>> {
    check_point(coeffs, moments, grid)?;
    Ok(hellinger_dual(moments, prior, grid, f64::MIN_POSITIVE)
        .evaluate(&coeffs.b, false)?
        .gradient)
}

/// `H_kl = int 2 x^{k+l} r / omega^3`.
pub fn dual_hessian(
    coeffs: &OmegaCoefficients,
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
) -> Result<DMatrix<f64>> {
    check_point(coeffs, moments, grid)?;
    Ok(hellinger_dual(moments, prior, grid, f64::MIN_POSITIVE)
        .evaluate(&coeffs.b, true)?
        .hessian
        .expect("hessian requested"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub max_iter: usize,
    pub tol_grad: f64,
    /// Per-order relative moment residual required at termination.
    pub tol_mom: f64,
    pub eps_feas: f64,
    pub ls_shrink: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_grad: 1e-9,
            tol_mom: 1e-6,
            eps_feas: 1e-8,
            ls_shrink: 0.5,
        }
    }
}

impl SolveOptions {
    pub(crate) fn newton(&self) -> NewtonOptions {
        NewtonOptions {
            max_iter: self.max_iter,
            tol_grad: self.tol_grad,
            ls_shrink: self.ls_shrink,
            ..NewtonOptions::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub dual_objective: f64,
    /// `int x^k p - mu_k` in the caller's coordinates.
    pub moment_residuals: Vec<f64>,
    pub max_relative_residual: f64,
    /// Largest change of any `int x^k p` when the grid panels are doubled,
    /// relative to the moment scale.
    pub grid_refinement_delta: f64,
    pub objective_trace: Vec<f64>,
}

/// Solved estimate `p(x) = r(x) / omega(y)^2`, `y = (x - shift) / scale`.
///
/// `prior` is in the caller's (raw) coordinates; `b` are coefficients in the
/// standardized coordinate `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub order: usize,
    pub prior: GaussianPrior,
    pub b: Vec<f64>,
    pub standardization: Standardization,
    pub diagnostics: Diagnostics,
}

impl DensityEstimate {
    pub fn coefficients(&self) -> OmegaCoefficients {
        OmegaCoefficients {
            order: self.order,
            b: self.b.clone(),
        }
    }

    /// `omega` coefficients in raw coordinates.
    pub fn raw_coefficients(&self) -> OmegaCoefficients {
        self.coefficients().destandardized(&self.standardization)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        eval_density(self, x)
    }

    /// `ln pdf(x)`, finite wherever `omega` is nonzero.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        let y = self.standardization.forward(x);
        let omega = 1.0 + self.b.iter().rev().fold(0.0, |acc, &c| acc * y + c);
        self.prior.ln_pdf(x) - 2.0 * omega.abs().ln()
    }
}

/// `r(x) / omega(y)^2`; the prior is evaluated in raw coordinates, which
/// absorbs the Jacobian of the standardization.
pub fn eval_density(est: &DensityEstimate, x: f64) -> f64 {
    let y = est.standardization.forward(x);
    let omega = 1.0 + est.b.iter().rev().fold(0.0, |acc, &c| acc * y + c);
    eval_prior(&est.prior, x) / (omega * omega)
}

/// `int x^k p - mu_k` for `k = 0..=order`.
pub fn verify_moments(
    est: &DensityEstimate,
    moments: &MomentSequence,
    grid: &QuadratureGrid,
) -> Vec<f64> {
    let values = grid.evaluate(|x| eval_density(est, x));
    primal_moments_from_values(grid, &values, moments.order())
        .iter()
        .zip(moments.values())
        .map(|(p, m)| p - m)
        .collect()
}

pub(crate) fn primal_moments_from_values(
    grid: &QuadratureGrid,
    values: &[f64],
    order: usize,
) -> Vec<f64> {
    (0..=order)
        .map(|k| {
            let weighted: Vec<f64> = grid
                .nodes()
                .iter()
                .zip(values)
                .map(|(&x, &v)| x.powi(k as i32) * v)
                .collect();
            grid.integrate_values(&weighted)
        })
        .collect()
}

/// Minimizes the dual from `b = 0` in the coordinates of `moments`.
pub fn solve(
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
    opts: &SolveOptions,
) -> Result<DensityEstimate> {
    solve_from(
        moments,
        prior,
        grid,
        opts,
        &OmegaCoefficients::zeros(moments.order()),
    )
}

/// Minimizes the dual from a feasible warm start.
pub fn solve_from(
    moments: &MomentSequence,
    prior: &GaussianPrior,
    grid: &QuadratureGrid,
    opts: &SolveOptions,
    start: &OmegaCoefficients,
) -> Result<DensityEstimate> {
    check_dims(start, moments)?;
    certify_positive_definite(&build_hankel(moments), None).require()?;
    let dual = hellinger_dual(moments, prior, grid, opts.eps_feas);
    let outcome = dual::minimize_with_continuation(&dual, &start.b, &opts.newton(), |gradient| {
        gradient
            .iter()
            .enumerate()
            .all(|(k, g)| moments.relative_residual(k, *g) <= opts.tol_mom)
    })?;
    let mut est = DensityEstimate {
        order: moments.order(),
        prior: *prior,
        b: outcome.coeffs,
        standardization: Standardization::IDENTITY,
        diagnostics: Diagnostics {
            iterations: outcome.iterations,
            final_gradient_norm: dual::max_norm(&outcome.gradient),
            dual_objective: outcome.objective,
            moment_residuals: vec![],
            max_relative_residual: 0.0,
            grid_refinement_delta: 0.0,
            objective_trace: outcome.objective_trace,
        },
    };
    finish_diagnostics(&mut est, moments, grid);
    Ok(est)
}

fn finish_diagnostics(est: &mut DensityEstimate, moments: &MomentSequence, grid: &QuadratureGrid) {
    let check = moment_check(|x| eval_density(est, x), moments, grid);
    est.diagnostics.max_relative_residual = check.max_relative_residual;
    est.diagnostics.grid_refinement_delta = check.grid_refinement_delta;
    est.diagnostics.moment_residuals = check.residuals;
}

/// Moment residuals of a density on `grid` and their sensitivity to doubling
/// the panel count.
pub(crate) struct MomentCheck {
    pub residuals: Vec<f64>,
    pub max_relative_residual: f64,
    pub grid_refinement_delta: f64,
}

pub(crate) fn moment_check<P: Fn(f64) -> f64>(
    pdf: P,
    moments: &MomentSequence,
    grid: &QuadratureGrid,
) -> MomentCheck {
    let values = grid.evaluate(&pdf);
    let residuals: Vec<f64> = primal_moments_from_values(grid, &values, moments.order())
        .iter()
        .zip(moments.values())
        .map(|(p, m)| p - m)
        .collect();
    let max_relative_residual = residuals
        .iter()
        .enumerate()
        .map(|(k, r)| moments.relative_residual(k, *r))
        .fold(0.0, f64::max);
    let fine = grid.refined();
    let fine_values = fine.evaluate(&pdf);
    let fine_moments = primal_moments_from_values(&fine, &fine_values, moments.order());
    let grid_refinement_delta = residuals
        .iter()
        .zip(moments.values())
        .zip(&fine_moments)
        .enumerate()
        .map(|(k, ((r, m), f))| moments.relative_residual(k, (r + m) - f))
        .fold(0.0, f64::max);
    MomentCheck {
        residuals,
        max_relative_residual,
        grid_refinement_delta,
    }
}

/// How the reference density is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PriorChoice {
    /// Fixed `N(mean, std^2)` in raw coordinates.
    Fixed(GaussianPrior),
    /// `N(mu_1, inflation * mu_2)` computed in the solve coordinates.
    Default { inflation: f64 },
}

impl Default for PriorChoice {
    fn default() -> Self {
        PriorChoice::Default {
            inflation: DEFAULT_INFLATION,
        }
    }
}

impl PriorChoice {
    /// The prior in raw coordinates for a standardized problem.
    pub fn resolve(&self, sm: &StandardizedMoments) -> Result<GaussianPrior> {
        match *self {
            PriorChoice::Fixed(p) => GaussianPrior::new(p.mean, p.std_dev),
            PriorChoice::Default { inflation } => {
                Ok(default_prior(&sm.standardized, inflation)?.destandardized(&sm.transform))
            }
        }
    }
}

/// End-to-end configuration of a squared-Hellinger fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub prior: PriorChoice,
    pub grid: GridSpec,
    pub solve: SolveOptions,
    /// Solve in standardized coordinates (default on).
    pub standardize: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            prior: PriorChoice::default(),
            grid: GridSpec::default(),
            solve: SolveOptions::default(),
            standardize: true,
        }
    }
}

impl EstimatorConfig {
    pub fn with_prior(mut self, prior: PriorChoice) -> Self {
        self.prior = prior;
        self
    }
}

/// Fits from samples: moments are taken after standardizing the samples
/// (when enabled) and the result is mapped back to raw coordinates.
pub fn estimate_from_samples(
    samples: &[f64],
    order: usize,
    cfg: &EstimatorConfig,
) -> Result<DensityEstimate> {
    let sm = StandardizedMoments::from_samples(samples, order, cfg.standardize)?;
    estimate_standardized(&sm, cfg)
}

/// Fits from known raw-coordinate moments.
pub fn estimate_from_moments(
    moments: &MomentSequence,
    cfg: &EstimatorConfig,
) -> Result<DensityEstimate> {
    let sm = StandardizedMoments::from_moments(moments, cfg.standardize)?;
    estimate_standardized(&sm, cfg)
}

pub fn estimate_standardized(
    sm: &StandardizedMoments,
    cfg: &EstimatorConfig,
) -> Result<DensityEstimate> {
    certify_positive_definite(&build_hankel(&sm.raw), None).require()?;
    let prior = cfg.prior.resolve(sm)?;
    let local_prior = prior.standardized(&sm.transform);
    let grid = cfg.grid.build(local_prior.mean, local_prior.std_dev)?;
    let mut est = solve(&sm.standardized, &local_prior, &grid, &cfg.solve)?;
    est.prior = prior;
    est.standardization = sm.transform;
    let raw_grid = cfg.grid.build(prior.mean, prior.std_dev)?;
    finish_diagnostics(&mut est, &sm.raw, &raw_grid);
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::build_grid;

    fn std_grid() -> QuadratureGrid {
        GridSpec::default().build(0.0, 1.0).unwrap()
    }

    #[test]
    fn omega_values() {
        let zero = OmegaCoefficients::zeros(2);
        assert_eq!(omega_eval(&zero, 3.7), 1.0);
        let c = OmegaCoefficients::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(omega_eval(&c, 2.0), 5.0);
        let c = OmegaCoefficients::new(vec![1.0, -1.0, 0.5]).unwrap();
        assert_eq!(omega_eval(&c, 1.0), 1.5);
    }

    #[test]
    fn feasibility_checks() {
        let g = std_grid();
        assert!(is_feasible(&OmegaCoefficients::zeros(4), &g, 1e-8));
        assert!(!is_feasible(
            &OmegaCoefficients::new(vec![-2.0, 0.0, 0.0]).unwrap(),
            &g,
            1e-8
        ));
        assert!(!is_feasible(
            &OmegaCoefficients::new(vec![0.0, 0.0, 0.0, 0.0, -1.0]).unwrap(),
            &g,
            1e-8
        ));
    }

    #[test]
    fn multiplicities_and_hankel_round_trip() {
        assert_eq!(
            (0..=4)
                .map(|k| OmegaCoefficients::multiplicity(4, k))
                .collect::<Vec<_>>(),
            vec![1, 2, 3, 2, 1]
        );
        let c = OmegaCoefficients::new(vec![0.3, -0.2, 0.6, 0.1, 0.05]).unwrap();
        let omega = c.hankel_representative();
        let back = OmegaCoefficients::from_hankel(&omega).unwrap();
        for (a, b) in back.b.iter().zip(&c.b) {
            assert!((a - b).abs() < 1e-15);
        }
        // F^T Omega F + 1 equals omega_eval
        let x: f64 = 0.7;
        let f = nalgebra::DVector::from_fn(3, |i, _| x.powi(i as i32));
        let quad = (f.transpose() * &omega * &f)[(0, 0)] + 1.0;
        assert!((quad - omega_eval(&c, x)).abs() < 1e-14);
    }

    #[test]
    fn trace_term_equals_coefficient_dot_moments() {
        let c = OmegaCoefficients::new(vec![0.3, -0.2, 0.6, 0.1, 0.05]).unwrap();
        let m = MomentSequence::from_values(vec![1.0, 0.2, 1.3, 0.4, 3.1]).unwrap();
        let trace = (c.hankel_representative() * build_hankel(&m).as_matrix()).trace();
        let dot: f64 = c.b.iter().zip(m.values()).map(|(a, b)| a * b).sum();
        assert!((trace - dot).abs() < 1e-14);
    }

    #[test]
    fn objective_at_simple_points() {
        let prior = GaussianPrior::new(0.0, 1.0).unwrap();
        let g = std_grid();
        let m = MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap();
        let j0 = dual_objective(&OmegaCoefficients::zeros(2), &m, &prior, &g).unwrap();
        assert!((j0 - 1.0).abs() < 1e-12);
        let j1 = dual_objective(
            &OmegaCoefficients::new(vec![1.0, 0.0, 0.0]).unwrap(),
            &m,
            &prior,
            &g,
        )
        .unwrap();
        assert!((j1 - 1.5).abs() < 1e-12);
        assert_eq!(
            dual_objective(
                &OmegaCoefficients::new(vec![-2.0, 0.0, 0.0]).unwrap(),
                &m,
                &prior,
                &g
            ),
            Err(Error::InfeasiblePoint)
        );
    }

    #[test]
    fn gradient_at_zero_is_moment_gap() {
        let prior = GaussianPrior::new(0.0, 2.0).unwrap();
        let g = GridSpec::default().build(0.0, 2.0).unwrap();
        let m = MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap();
        let grad = dual_gradient(&OmegaCoefficients::zeros(2), &m, &prior, &g).unwrap();
        let expected = [0.0, 0.0, -3.0];
        for (a, b) in grad.iter().zip(expected) {
            assert!((a - b).abs() < 1e-11, "{grad:?}");
        }
    }

    #[test]
    fn hessian_at_zero_is_scaled_gaussian_hankel() {
        let prior = GaussianPrior::new(0.0, 1.0).unwrap();
        let m = prior.population_moments(2).unwrap();
        let h = dual_hessian(&OmegaCoefficients::zeros(2), &m, &prior, &std_grid()).unwrap();
        let expected = [[2.0, 0.0, 2.0], [0.0, 2.0, 0.0], [2.0, 0.0, 6.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((h[(i, j)] - expected[i][j]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn solve_recovers_prior_from_its_own_moments() {
        let prior = GaussianPrior::new(0.0, 1.5).unwrap();
        let m = prior.population_moments(4).unwrap();
        let g = GridSpec::default().build(0.0, 1.5).unwrap();
        let est = solve(&m, &prior, &g, &SolveOptions::default()).unwrap();
        assert!(est.b.iter().all(|b| b.abs() < 1e-8), "{:?}", est.b);
        for x in [-3.0, 0.0, 0.4, 5.0] {
            assert!((eval_density(&est, x) - eval_prior(&prior, x)).abs() < 1e-9);
        }
    }

    #[test]
    fn solve_rejects_degenerate_moments() {
        let prior = GaussianPrior::new(0.0, 1.0).unwrap();
        let m = MomentSequence::from_values(vec![1.0, 2.0, 4.0]).unwrap();
        assert!(matches!(
            solve(&m, &prior, &std_grid(), &SolveOptions::default()),
            Err(Error::HankelNotPd { .. })
        ));
    }

    #[test]
    fn solve_rejects_infeasible_start() {
        let prior = GaussianPrior::new(0.0, 1.0).unwrap();
        let m = MomentSequence::from_values(vec![1.0, 0.0, 1.0]).unwrap();
        let start = OmegaCoefficients::new(vec![-2.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            solve_from(&m, &prior, &std_grid(), &SolveOptions::default(), &start),
            Err(Error::InfeasiblePoint)
        );
    }

    #[test]
    fn iteration_cap_reports_not_converged() {
        let prior = GaussianPrior::new(0.0, 3.0).unwrap();
        let m = MomentSequence::from_values(vec![1.0, 0.0, 1.0, 0.0, 1.5]).unwrap();
        let g = GridSpec::default().build(0.0, 3.0).unwrap();
        let opts = SolveOptions {
            max_iter: 1,
            ..SolveOptions::default()
        };
        let r = solve(&m, &prior, &g, &opts);
        assert!(
            matches!(r, Err(Error::NotConverged { iterations: 1, .. })),
            "{r:?}"
        );
        let full = solve(&m, &prior, &g, &SolveOptions::default());
        assert!(full.is_ok(), "{full:?}");
    }

    #[test]
    fn companion_certificate() {
        let pos = OmegaCoefficients::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert!(certify_omega_positive(&pos).positive_on_real_line);
        // 1 - 2x^2 + x^4 has double roots at +-1
        let touch = OmegaCoefficients::new(vec![0.0, 0.0, -2.0, 0.0, 1.0]).unwrap();
        let cert = certify_omega_positive(&touch);
        assert!(!cert.positive_on_real_line);
        // 1 - 5x^2 + x^4 has four simple real roots
        let neg = OmegaCoefficients::new(vec![0.0, 0.0, -5.0, 0.0, 1.0]).unwrap();
        assert_eq!(certify_omega_positive(&neg).real_roots.len(), 4);
        assert!(certify_omega_positive(&OmegaCoefficients::zeros(4)).positive_on_real_line);
    }

    #[test]
    fn destandardized_coefficients_agree_pointwise() {
        let c = OmegaCoefficients::new(vec![0.1, -0.3, 0.4, 0.02, 0.05]).unwrap();
        let t = Standardization {
            shift: 1.7,
            scale: 2.5,
        };
        let raw = c.destandardized(&t);
        for x in [-3.0, 0.0, 1.7, 4.2] {
            assert!((omega_eval(&raw, x) - omega_eval(&c, t.forward(x))).abs() < 1e-12);
        }
    }

    #[test]
    fn small_custom_grid_works() {
        let prior = GaussianPrior::new(0.0, 1.0).unwrap();
        let g = build_grid(0.0, 12.0, 60, 12).unwrap();
        let m = MomentSequence::from_values(vec![1.0, 0.1, 0.8]).unwrap();
        let est = solve(&m, &prior, &g, &SolveOptions::default()).unwrap();
        assert!(est.diagnostics.max_relative_residual < 1e-8);
    }
}
