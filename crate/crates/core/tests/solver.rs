use libm::erfc;
use moment_density::hellinger::{
    dual_gradient, dual_hessian, dual_objective, estimate_standardized, is_feasible, solve,
    solve_from, verify_moments,
};
use moment_density::moments::StandardizedMoments;
use moment_density::priors::default_prior;
use moment_density::sampling::{
    benchmark_example, sample_mixture, Component, Family, MixtureSpec, SeededRng,
};
use moment_density::*;
use nalgebra::DMatrix;

/// `omega = 1 + F^T A A^T F` for a random `A`, feasible by construction.
fn random_feasible(order: usize, scale: f64, rng: &mut SeededRng) -> OmegaCoefficients {
    let size = order / 2 + 1;
    let a = DMatrix::from_fn(size, size, |_, _| scale * (2.0 * rng.uniform() - 1.0));
    OmegaCoefficients::from_hankel(&(&a * a.transpose())).unwrap()
}

/// Fourth-order central difference of `f` along coordinate `k`.
fn richardson<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], k: usize, h: f64) -> f64 {
    let at = |t: f64| {
        let mut y = x.to_vec();
        y[k] += t;
        f(&y)
    };
    (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h)
}

fn max_abs(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |a, b| a.max(b.abs()))
}

fn mixture_moments(order: usize) -> MomentSequence {
    MixtureSpec::new(vec![
        Component::new(Family::Gaussian, 0.4, -1.0, 0.7),
        Component::new(Family::Gaussian, 0.6, 0.8, 1.1),
    ])
    .unwrap()
    .population_moments(order)
    .unwrap()
}

#[test]
fn gradient_and_hessian_match_finite_differences() {
    let prior = GaussianPrior::new(0.0, 2.0).unwrap();
    let grid = GridSpec::default().build(0.0, 2.0).unwrap();
    let mut rng = SeededRng::new(2024);
    for n in 1..=3 {
        let order = 2 * n;
        let moments = mixture_moments(order);
        for _ in 0..100 {
            let point = random_feasible(order, 0.6, &mut rng);
            let objective = |b: &[f64]| {
                dual_objective(
                    &OmegaCoefficients::new(b.to_vec()).unwrap(),
                    &moments,
                    &prior,
                    &grid,
                )
                .unwrap()
            };
            let gradient = dual_gradient(&point, &moments, &prior, &grid).unwrap();
            let hessian = dual_hessian(&point, &moments, &prior, &grid).unwrap();
            let h = 1e-5;
            let fd: Vec<f64> = (0..=order)
                .map(|k| richardson(objective, &point.b, k, h))
                .collect();
            let err = max_abs(fd.iter().zip(&gradient).map(|(a, b)| a - b));
            let scale = max_abs(gradient.iter().copied()).max(1.0);
            assert!(
                err / scale <= 1e-5,
                "n={n} gradient error {err} scale {scale}"
            );

            for l in 0..=order {
                let column: Vec<f64> = (0..=order)
                    .map(|k| {
                        richardson(
                            |b: &[f64]| {
                                dual_gradient(
                                    &OmegaCoefficients::new(b.to_vec()).unwrap(),
                                    &moments,
                                    &prior,
                                    &grid,
                                )
                                .unwrap()[k]
                            },
                            &point.b,
                            l,
                            h,
                        )
                    })
                    .collect();
                let err = max_abs((0..=order).map(|k| column[k] - hessian[(k, l)]));
                let scale = max_abs((0..=order).map(|k| hessian[(k, l)])).max(1.0);
                assert!(err / scale <= 1e-4, "n={n} hessian column {l} error {err}");
            }
            assert!((&hessian - hessian.transpose()).amax() == 0.0);
            let min_eig = hessian.symmetric_eigen().eigenvalues.min();
            assert!(min_eig > 0.0, "n={n} min eigenvalue {min_eig}");
        }
    }
}

#[test]
fn dual_objective_closed_form() {
    // int phi(x) / (1 + x^2) dx = sqrt(pi / 2) e^{1/2} erfc(1 / sqrt 2)
    let prior = GaussianPrior::new(0.0, 1.0).unwrap();
    let grid = GridSpec::default().build(0.0, 1.0).unwrap();
    let moments = prior.population_moments(2).unwrap();
    let point = OmegaCoefficients::new(vec![0.0, 0.0, 1.0]).unwrap();
    let expected = 1.0
        + (std::f64::consts::PI / 2.0).sqrt()
            * 0.5f64.exp()
            * erfc(std::f64::consts::FRAC_1_SQRT_2);
    // 50-digit reference for the integral
    assert!((expected - 1.655_679_542_418_798_5).abs() < 1e-15);
    let got = dual_objective(&point, &moments, &prior, &grid).unwrap();
    assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    assert!((got - 1.6557).abs() < 1e-4);
}

#[test]
fn solutions_do_not_depend_on_the_start() {
    let mut rng = SeededRng::new(77);
    for case in 0..20 {
        let components = 2 + case % 2;
        let raw: Vec<(f64, f64, f64)> = (0..components)
            .map(|_| {
                (
                    0.2 + rng.uniform(),
                    6.0 * rng.uniform() - 3.0,
                    0.5 + rng.uniform(),
                )
            })
            .collect();
        let total: f64 = raw.iter().map(|c| c.0).sum();
        let spec = MixtureSpec::new(
            raw.iter()
                .map(|&(w, loc, sd)| Component::new(Family::Gaussian, w / total, loc, sd))
                .collect(),
        );
        // weights may miss 1 by rounding; renormalize the last one
        let spec = spec.unwrap_or_else(|_| {
            let mut comps: Vec<Component> = raw
                .iter()
                .map(|&(w, loc, sd)| Component::new(Family::Gaussian, w / total, loc, sd))
                .collect();
            let head: f64 = comps[..components - 1].iter().map(|c| c.weight).sum();
            comps[components - 1].weight = 1.0 - head;
            MixtureSpec::new(comps).unwrap()
        });
        let order = if case < 10 { 4 } else { 6 };
        let samples = sample_mixture(&spec, 300, 1000 + case as u64);
        let sm = StandardizedMoments::from_samples(&samples, order, true).unwrap();
        let prior = default_prior(&sm.standardized, 4.0).unwrap();
        let grid = GridSpec::default()
            .build(prior.mean, prior.std_dev)
            .unwrap();
        let opts = SolveOptions::default();
        let from_zero = solve(&sm.standardized, &prior, &grid, &opts).unwrap();
        let start = random_feasible(order, 0.3, &mut rng);
        assert!(is_feasible(&start, &grid, opts.eps_feas));
        let from_start = solve_from(&sm.standardized, &prior, &grid, &opts, &start).unwrap();
        for (a, b) in from_zero.b.iter().zip(&from_start.b) {
            assert!(
                (a - b).abs() <= 1e-6,
                "case {case}: {:?} vs {:?}",
                from_zero.b,
                from_start.b
            );
        }
    }
}

#[test]
fn prior_moments_recover_the_prior() {
    for (mean, sd, order) in [(0.0, 1.0, 2), (0.3, 2.0, 4), (-1.5, 0.7, 6)] {
        let prior = GaussianPrior::new(mean, sd).unwrap();
        let moments = prior.population_moments(order).unwrap();
        let cfg = EstimatorConfig::default().with_prior(PriorChoice::Fixed(prior));
        let est = estimate_from_moments(&moments, &cfg).unwrap();
        assert!(est.b.iter().all(|b| b.abs() <= 1e-8), "{:?}", est.b);
        let grid = GridSpec::default().build(mean, sd).unwrap();
        let gap = grid
            .nodes()
            .iter()
            .map(|&x| (est.pdf(x) - prior.pdf(x)).abs())
            .fold(0.0, f64::max);
        assert!(gap <= 1e-9, "sup gap {gap}");
    }
}

#[test]
fn benchmark_configurations_match_their_moments() {
    for id in 1..=5 {
        let ex = benchmark_example(id).unwrap();
        let cfg = EstimatorConfig::default().with_prior(PriorChoice::Fixed(ex.prior));
        for run in 0..5 {
            let samples = sample_mixture(&ex.spec, ex.sample_count, 9000 + run);
            let est = estimate_from_samples(&samples, ex.order, &cfg).unwrap();
            assert!(
                est.diagnostics.max_relative_residual <= 1e-6,
                "example {id} run {run}: {:?}",
                est.diagnostics
            );
            assert!(est.diagnostics.iterations <= 200);
            // independent residual check in raw coordinates on the default grid
            let moments = compute_sample_moments(&samples, ex.order).unwrap();
            let grid = GridSpec::default()
                .build(ex.prior.mean, ex.prior.std_dev)
                .unwrap();
            let residuals = verify_moments(&est, &moments, &grid);
            for (k, r) in residuals.iter().enumerate() {
                assert!(
                    moments.relative_residual(k, *r) <= 1e-6,
                    "example {id} k={k} residual {r}"
                );
            }
            assert!((grid.integrate_values(&grid.evaluate(|x| est.pdf(x))) - 1.0).abs() <= 1e-6);
            // a 4x finer grid agrees up to the default grid's quadrature error
            let fine = GridSpec {
                panels: 160,
                ..GridSpec::default()
            }
            .build(ex.prior.mean, ex.prior.std_dev)
            .unwrap();
            for (k, r) in verify_moments(&est, &moments, &fine).iter().enumerate() {
                assert!(
                    moments.relative_residual(k, *r) <= 1e-4,
                    "example {id} k={k} fine residual {r}"
                );
            }
        }
    }
}

#[test]
fn density_is_nonnegative_and_normalized() {
    let ex = benchmark_example(2).unwrap();
    let samples = sample_mixture(&ex.spec, 150, 5);
    let est = estimate_from_samples(&samples, 4, &EstimatorConfig::default()).unwrap();
    let grid = GridSpec::default()
        .build(est.prior.mean, est.prior.std_dev)
        .unwrap();
    assert!(grid.nodes().iter().all(|&x| est.pdf(x) >= 0.0));
    assert!((grid.integrate_values(&grid.evaluate(|x| eval_density(&est, x))) - 1.0).abs() < 1e-6);
}

#[test]
fn standardized_and_raw_solves_agree() {
    let ex = benchmark_example(1).unwrap();
    let samples = sample_mixture(&ex.spec, 100, 3);
    let prior = PriorChoice::Fixed(ex.prior);
    let on = EstimatorConfig {
        standardize: true,
        ..EstimatorConfig::default().with_prior(prior)
    };
    let off = EstimatorConfig {
        standardize: false,
        ..on
    };
    let a = estimate_from_samples(&samples, 4, &on).unwrap();
    let b = estimate_from_samples(&samples, 4, &off).unwrap();
    let grid = GridSpec::default()
        .build(ex.prior.mean, ex.prior.std_dev)
        .unwrap();
    let gap = grid
        .nodes()
        .iter()
        .map(|&x| (a.pdf(x) - b.pdf(x)).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn degenerate_samples_are_rejected() {
    let err = estimate_from_samples(&[2.5; 40], 4, &EstimatorConfig::default()).unwrap_err();
    assert!(matches!(err, Error::HankelNotPd { .. }), "{err:?}");
    // two distinct values cannot support order 4
    let two: Vec<f64> = (0..40)
        .map(|i| if i % 2 == 0 { -1.0 } else { 1.0 })
        .collect();
    let m = compute_sample_moments(&two, 4).unwrap();
    let err = estimate_standardized(
        &StandardizedMoments::from_moments(&m, true).unwrap(),
        &EstimatorConfig::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::HankelNotPd { .. }), "{err:?}");
}

#[test]
fn estimate_json_round_trip() {
    let ex = benchmark_example(3).unwrap();
    let samples = sample_mixture(&ex.spec, 200, 11);
    let est = estimate_from_samples(&samples, 4, &EstimatorConfig::default()).unwrap();
    let json = serde_json::to_string(&est).unwrap();
    let back: DensityEstimate = serde_json::from_str(&json).unwrap();
    assert_eq!(back, est);
    assert_eq!(back.pdf(0.37), est.pdf(0.37));
}

#[test]
fn accepted_steps_never_increase_the_objective() {
    for id in 1..=5 {
        let ex = benchmark_example(id).unwrap();
        let cfg = EstimatorConfig::default().with_prior(PriorChoice::Fixed(ex.prior));
        let samples = sample_mixture(&ex.spec, ex.sample_count, 300 + id as u64);
        let est = estimate_from_samples(&samples, ex.order, &cfg).unwrap();
        let trace = &est.diagnostics.objective_trace;
        assert!(trace.len() >= 2);
        for w in trace.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-14 * w[0].abs(),
                "example {id}: {} then {}",
                w[0],
                w[1]
            );
        }
    }
}

#[test]
fn one_newton_step_leaves_larger_residuals() {
    let ex = benchmark_example(1).unwrap();
    let samples = sample_mixture(&ex.spec, ex.sample_count, 21);
    let sm = StandardizedMoments::from_samples(&samples, 4, true).unwrap();
    let prior = ex.prior.standardized(&sm.transform);
    let grid = GridSpec::default()
        .build(prior.mean, prior.std_dev)
        .unwrap();
    let converged = solve(&sm.standardized, &prior, &grid, &SolveOptions::default()).unwrap();

    // a single damped Newton step from b = 0, halved until feasible
    let zero = OmegaCoefficients::zeros(4);
    let g = dual_gradient(&zero, &sm.standardized, &prior, &grid).unwrap();
    let h = dual_hessian(&zero, &sm.standardized, &prior, &grid).unwrap();
    let step = h.cholesky().unwrap().solve(&nalgebra::DVector::from_vec(g));
    let mut t = 1.0;
    let one_step = loop {
        let b: Vec<f64> = step.iter().map(|d| -t * d).collect();
        let candidate = OmegaCoefficients::new(b).unwrap();
        if is_feasible(&candidate, &grid, 1e-8) {
            break candidate;
        }
        t *= 0.5;
    };
    let partial = DensityEstimate {
        b: one_step.b,
        ..converged.clone()
    };
    let worst = |est: &DensityEstimate| {
        verify_moments(est, &sm.standardized, &grid)
            .iter()
            .fold(0.0f64, |a, r| a.max(r.abs()))
    };
    assert!(
        worst(&partial) > worst(&converged),
        "{} vs {}",
        worst(&partial),
        worst(&converged)
    );
}
