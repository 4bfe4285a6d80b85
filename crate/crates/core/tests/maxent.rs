use moment_density::maxent::{
    entropy, error_bound_report, fit_maxent, kl_via_entropy_identity, tv_upper_bound,
    MaxEntDensity, MaxEntOptions, TargetEntropy,
};
use moment_density::metrics::tv_distance;
use moment_density::sampling::{benchmark_example, sample_mixture, ExampleConfig};
use moment_density::*;
use std::f64::consts::{E, PI};

/// Coefficients of `-ln p(x)` as a polynomial in raw `x`.
fn raw_log_coefficients(fit: &MaxEntDensity) -> Vec<f64> {
    let (shift, scale) = (fit.standardization.shift, fit.standardization.scale);
    let n = fit.coefficients.len();
    let mut out = vec![0.0; n];
    // (x - shift)^i / scale^i, expanded term by term
    let mut power = vec![1.0];
    for (i, &c) in fit.coefficients.iter().enumerate() {
        if i > 0 {
            let mut next = vec![0.0; power.len() + 1];
            for (j, &a) in power.iter().enumerate() {
                next[j] -= a * shift / scale;
                next[j + 1] += a / scale;
            }
            power = next;
        }
        for (j, &a) in power.iter().enumerate() {
            out[j] += c * a;
        }
    }
    out[0] += scale.ln();
    out
}

fn population_estimate(ex: &ExampleConfig, order: usize) -> (DensityEstimate, MomentSequence) {
    let moments = ex.spec.population_moments(order).unwrap();
    let cfg = EstimatorConfig::default().with_prior(PriorChoice::Fixed(ex.prior));
    (estimate_from_moments(&moments, &cfg).unwrap(), moments)
}

#[test]
fn order_two_recovers_any_gaussian() {
    for (mu, sigma) in [(0.0, 1.0), (1.5, 0.3), (-4.0, 2.5), (10.0, 7.0)] {
        let moments = MomentSequence::from_values(vec![1.0, mu, sigma * sigma + mu * mu]).unwrap();
        let fit = fit_maxent(&moments, &MaxEntOptions::default()).unwrap();
        let got = raw_log_coefficients(&fit);
        let v = sigma * sigma;
        let want = [
            0.5 * (2.0 * PI * v).ln() + mu * mu / (2.0 * v),
            -mu / v,
            1.0 / (2.0 * v),
        ];
        for (g, w) in got.iter().zip(want) {
            assert!(
                (g - w).abs() <= 1e-8 * w.abs().max(1.0),
                "mu={mu} sigma={sigma}: {got:?} vs {want:?}"
            );
        }
    }
}

#[test]
fn gaussian_entropy() {
    let g = GridSpec::default().build(0.0, 1.0).unwrap();
    let unit = GaussianPrior::new(0.0, 1.0).unwrap();
    let h = entropy(|x| unit.pdf(x), &g);
    assert!((h - 0.5 * (2.0 * PI * E).ln()).abs() <= 1e-8, "{h}");
    let g = GridSpec::default().build(0.0, 3.0).unwrap();
    let wide = GaussianPrior::new(0.0, 3.0).unwrap();
    let h = entropy(|x| wide.pdf(x), &g);
    assert!((h - 0.5 * (2.0 * PI * E * 9.0).ln()).abs() <= 1e-8);
}

#[test]
fn plateau_entropy_is_log_width() {
    for w in [0.5, 2.0, 7.0] {
        // panel edges fall on 0 and w, so the indicator is integrated exactly
        let g = build_grid(0.5 * w, w, 40, 16).unwrap();
        assert!(g.edges().iter().any(|&e| e.abs() < 1e-12));
        let plateau = |x: f64| if (0.0..=w).contains(&x) { 1.0 / w } else { 0.0 };
        assert!((entropy(plateau, &g) - w.ln()).abs() < 1e-12);
    }
}

#[test]
fn sample_moments_are_matched() {
    let ex = benchmark_example(1).unwrap();
    let samples = sample_mixture(&ex.spec, ex.sample_count, 12);
    let moments = compute_sample_moments(&samples, 4).unwrap();
    let fit = fit_maxent(&moments, &MaxEntOptions::default()).unwrap();
    assert!(fit.diagnostics.max_relative_residual <= 1e-6);
    let t = fit.standardization;
    let grid = GridSpec::default().build(t.shift, t.scale).unwrap();
    for k in 0..=4 {
        let numeric = grid.integrate_values(&grid.evaluate(|x| x.powi(k as i32) * fit.pdf(x)));
        let r = numeric - moments.get(k);
        assert!(
            moments.relative_residual(k, r) <= 1e-6,
            "k={k} residual {r}"
        );
    }
    // normalization agrees with the moment-matching estimator on a shared grid
    let est = estimate_from_samples(&samples, 4, &EstimatorConfig::default()).unwrap();
    let shared = GridSpec::default()
        .build(est.prior.mean, est.prior.std_dev)
        .unwrap();
    let mass_maxent = shared.integrate_values(&shared.evaluate(|x| fit.pdf(x)));
    let mass_estimate = shared.integrate_values(&shared.evaluate(|x| est.pdf(x)));
    assert!((mass_maxent - 1.0).abs() <= 1e-6);
    assert!((mass_estimate - 1.0).abs() <= 1e-6);
}

#[test]
fn entropy_identity_matches_direct_divergence() {
    for id in [1, 3, 5] {
        let ex = benchmark_example(id).unwrap();
        let moments = ex.spec.population_moments(4).unwrap();
        let fit = fit_maxent(&moments, &MaxEntOptions::default()).unwrap();
        let grid = ex.truth_grid(&GridSpec::default()).unwrap();
        let h_true = entropy(|x| ex.spec.pdf(x), &grid);
        let identity = kl_via_entropy_identity(&fit, h_true).unwrap();
        // int p ln(p / maxent) with ln(maxent) taken from its exponent, so
        // nothing underflows in the tails
        let t = fit.standardization;
        let ln_maxent = |x: f64| {
            let y = t.forward(x);
            -fit.coefficients
                .iter()
                .rev()
                .fold(0.0, |acc, &c| acc * y + c)
                - t.scale.ln()
        };
        let integrand = grid.evaluate(|x| {
            let p = ex.spec.pdf(x);
            if p > 0.0 {
                p * (p.ln() - ln_maxent(x))
            } else {
                0.0
            }
        });
        let direct = grid.integrate_values(&integrand);
        assert!(
            (identity - direct).abs() <= 1e-7,
            "example {id}: {identity} vs {direct}"
        );
        if id == 3 {
            assert!(identity > 1e-3, "{identity}");
        }
    }
}

#[test]
fn maxent_dominates_densities_with_the_same_moments() {
    for id in 1..=5 {
        let ex = benchmark_example(id).unwrap();
        let order = ex.order;
        let (est, moments) = population_estimate(&ex, order);
        let fit = fit_maxent(&moments, &MaxEntOptions::default()).unwrap();
        let grid = ex.truth_grid(&GridSpec::default()).unwrap();
        let h_truth = entropy(|x| ex.spec.pdf(x), &grid);
        let h_estimate = entropy(|x| est.pdf(x), &grid);
        assert!(fit.entropy >= h_truth - 1e-8, "example {id}");
        assert!(fit.entropy >= h_estimate - 1e-8, "example {id}");
    }
}

#[test]
fn bound_covers_the_measured_distance() {
    for id in 1..=5 {
        let ex = benchmark_example(id).unwrap();
        let (est, moments) = population_estimate(&ex, ex.order);
        let grid = ex.truth_grid(&GridSpec::default()).unwrap();
        let target = TargetEntropy::from_density(|x| ex.spec.pdf(x), &grid);
        let report =
            error_bound_report(&est, &moments, target, &MaxEntOptions::default(), 0.0).unwrap();
        let measured = tv_distance(|x| est.pdf(x), |x| ex.spec.pdf(x), &grid);
        assert!(!report.approximate);
        assert!(
            measured <= report.total,
            "example {id}: {measured} > {}",
            report.total
        );
        let sum = tv_upper_bound(
            kl_via_entropy_identity(
                &fit_maxent(&moments, &MaxEntOptions::default()).unwrap(),
                target.value(),
            )
            .unwrap(),
        );
        assert!((sum - report.bound_true_term).abs() < 1e-12);
    }
}

#[test]
fn bound_vanishes_when_everything_is_gaussian() {
    let truth = GaussianPrior::new(0.4, 1.3).unwrap();
    let moments = truth.population_moments(2).unwrap();
    let cfg = EstimatorConfig::default().with_prior(PriorChoice::Fixed(truth));
    let est = estimate_from_moments(&moments, &cfg).unwrap();
    let grid = GridSpec::default()
        .build(truth.mean, truth.std_dev)
        .unwrap();
    let target = TargetEntropy::from_density(|x| truth.pdf(x), &grid);
    let report =
        error_bound_report(&est, &moments, target, &MaxEntOptions::default(), 0.0).unwrap();
    assert!(report.total <= 1e-4, "{report:?}");
}

fn bound_totals(id: u32, orders: &[usize]) -> Vec<f64> {
    let ex = benchmark_example(id).unwrap();
    let grid = ex.truth_grid(&GridSpec::default()).unwrap();
    let target = TargetEntropy::from_density(|x| ex.spec.pdf(x), &grid);
    orders
        .iter()
        .map(|&order| {
            let (est, moments) = population_estimate(&ex, order);
            error_bound_report(&est, &moments, target, &MaxEntOptions::default(), 0.0)
                .unwrap()
                .total
        })
        .collect()
}

#[test]
fn bound_does_not_grow_with_the_order() {
    let totals = bound_totals(1, &[2, 4]);
    assert!(totals[1] <= totals[0], "{totals:?}");
    for id in [4, 5] {
        let totals = bound_totals(id, &[2, 4, 6]);
        assert!(
            totals.windows(2).all(|w| w[1] <= w[0]),
            "example {id}: {totals:?}"
        );
    }
}

#[test]
fn order_six_maxent_does_not_exist_for_the_symmetric_two_mode_truths() {
    // The order-4 maxent already carries less sixth moment than the truth;
    // adding more would need a non-positive leading coefficient.
    for id in [1, 3] {
        let ex = benchmark_example(id).unwrap();
        let moments = ex.spec.population_moments(6).unwrap();
        let quartic =
            fit_maxent(&moments.truncated(4).unwrap(), &MaxEntOptions::default()).unwrap();
        let wide = build_grid(0.0, 30.0, 400, 16).unwrap();
        let sixth = wide.integrate_values(&wide.evaluate(|x| x.powi(6) * quartic.pdf(x)));
        assert!(
            sixth < moments.get(6),
            "example {id}: {sixth} vs {}",
            moments.get(6)
        );
        let err = fit_maxent(&moments, &MaxEntOptions::default()).unwrap_err();
        assert_eq!(err, Error::NonIntegrable);
    }
}

#[test]
fn approximate_targets_are_flagged() {
    let ex = benchmark_example(2).unwrap();
    let samples = sample_mixture(&ex.spec, 400, 3);
    let moments = compute_sample_moments(&samples, 4).unwrap();
    let est = estimate_from_samples(&samples, 4, &EstimatorConfig::default()).unwrap();
    let opts = MaxEntOptions::default();
    let plug_in = TargetEntropy::histogram(&samples).unwrap();
    let report = error_bound_report(&est, &moments, plug_in, &opts, 1e-6).unwrap();
    assert!(report.approximate && report.total.is_finite());
    let json = serde_json::to_string(&report.target).unwrap();
    assert!(json.contains("\"kind\":\"plug_in\""));
    let empirical = TargetEntropy::empirical(&samples).unwrap();
    assert!((empirical.value() - 400f64.ln()).abs() < 1e-15);
    // the true entropy of this mixture is close to the histogram estimate
    let grid = ex.truth_grid(&GridSpec::default()).unwrap();
    let h_true = entropy(|x| ex.spec.pdf(x), &grid);
    assert!((plug_in.value() - h_true).abs() < 0.15);
    // the true entropy against sample moments is approximate too
    let paired = TargetEntropy::Asymptotic(h_true);
    let report = error_bound_report(&est, &moments, paired, &opts, 1e-6).unwrap();
    assert!(report.approximate && report.total.is_finite());
    assert!(serde_json::to_string(&paired)
        .unwrap()
        .contains("\"kind\":\"asymptotic\""));
}
