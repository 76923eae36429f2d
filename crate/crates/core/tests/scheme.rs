use proptest::prelude::*;
use tcbm::experiment::{strong_error_one_sample, Scheme};
use tcbm::timechange::{sup_inverse_gap, sup_phi_gap};
use tcbm::{builtin_coefficient, em_simulate, BrownianPath, ExperimentConfig, SamplePath, TimeChangePath};

fn smooth_sin() -> tcbm::DiffusionCoefficient {
    builtin_coefficient("smooth-sin", &[2.0, 1.0]).unwrap()
}

/// Straight-line evaluation of ξ⁽ⁿ⁾(τₙ(t)) from knot values, written without
/// the library's search or interpolation helpers.
fn straight_line(values: &[f64], n: usize, sigma: impl Fn(f64) -> f64, horizon: f64, t: f64) -> f64 {
    let nf = n as f64;
    let mut phi = vec![0.0f64];
    while *phi.last().unwrap() < horizon {
        let k = phi.len() - 1;
        let s = sigma(values[k]);
        phi.push(phi[k] + 1.0 / (nf * s * s));
    }
    let j = phi.iter().rposition(|&p| p <= t).unwrap();
    if j == phi.len() - 1 {
        return values[j];
    }
    let tau = j as f64 / nf + (t - phi[j]) / (phi[j + 1] - phi[j]) / nf;
    let k = (tau * nf).floor() as usize;
    values[k] + (tau - k as f64 / nf) * nf * (values[k + 1] - values[k])
}

#[test]
fn pinned_smooth_sin_value() {
    // Reproduced by an independent scripted reimplementation from the dumped
    // knot values of this path.
    let xi = BrownianPath::generate(16, 10.0, 0.0, 2024, 0).unwrap();
    let sp = SamplePath::build(xi, &smooth_sin(), 1.0).unwrap();
    assert_eq!(sp.time_change().last_knot(), 72);
    let x = sp.evaluate(0.5).unwrap();
    assert!((x - 3.887_081_607_662_565).abs() < 1e-12, "{x}");
}

#[test]
fn evaluate_matches_straight_line_oracle() {
    let sigma = smooth_sin();
    for seed in 0..20 {
        let xi = BrownianPath::generate(32, 11.0, 0.5, seed, seed).unwrap();
        let values = xi.values().to_vec();
        let sp = SamplePath::build(xi, &sigma, 1.0).unwrap();
        for i in 0..=200 {
            let t = i as f64 / 200.0;
            let oracle = straight_line(&values, 32, |x| 2.0 + x.sin(), 1.0, t);
            assert!((sp.evaluate(t).unwrap() - oracle).abs() < 1e-12, "seed {seed} t {t}");
        }
    }
}

#[test]
fn brownian_increment_variance() {
    // n = 4: increments are N(0, 1/4)
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut count = 0.0;
    for i in 0..1_000_000u64 {
        let p = BrownianPath::generate(4, 1.0, 0.0, 31, i).unwrap();
        for w in p.values().windows(2) {
            let d = w[1] - w[0];
            sum += d;
            sum_sq += d * d;
            count += 1.0;
        }
    }
    let mean = sum / count;
    let var = sum_sq / count - mean * mean;
    assert!((var / 0.25 - 1.0).abs() < 0.01, "{var}");
}

#[test]
fn brownian_terminal_moments() {
    let terminal: Vec<f64> = (0..100_000u64)
        .map(|i| *BrownianPath::generate(16, 1.0, 0.0, 5, i).unwrap().values().last().unwrap())
        .collect();
    let m = terminal.len() as f64;
    let mean = terminal.iter().sum::<f64>() / m;
    let var = terminal.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
    assert!(mean.abs() < 0.02, "{mean}");
    assert!((0.97..=1.03).contains(&var), "{var}");
}

#[test]
fn constant_sigma_is_exact_time_change() {
    let sigma = builtin_coefficient("constant", &[2.0]).unwrap();
    for seed in 0..10 {
        let xi = BrownianPath::generate(64, 5.0, 0.0, seed, 0).unwrap();
        let sp = SamplePath::build(xi.clone(), &sigma, 1.0).unwrap();
        let sup = sp
            .breakpoints()
            .into_iter()
            .map(|t| (sp.evaluate(t).unwrap() - xi.interpolate(4.0 * t).unwrap()).abs())
            .fold(0.0f64, f64::max);
        assert_eq!(sup, 0.0);
    }
}

#[test]
fn discrete_time_change_bound() {
    // sup |τ_a - τ_b| <= C2² sup |φ_a - φ_b| for coarse/fine paths on one
    // realization.
    for (name, params) in [
        ("smooth-sin", vec![2.0, 1.0]),
        ("holder-root", vec![1.0, 1.0, 0.3, 0.0]),
        ("step-mollified", vec![1.0, 2.0, 0.0, 0.1]),
    ] {
        let sigma = builtin_coefficient(name, &params).unwrap();
        let c2sq = sigma.upper_bound().powi(2);
        for seed in 0..30 {
            let fine = BrownianPath::generate(1024, 1.1 * c2sq + 1.0, 0.0, seed, 0).unwrap();
            let coarse = fine.subsample(32).unwrap();
            let a = TimeChangePath::build(&coarse, &sigma, 1.0).unwrap();
            let b = TimeChangePath::build(&fine, &sigma, 1.0).unwrap();
            let a_ext = TimeChangePath::build_through(&coarse, &sigma, c2sq).unwrap();
            let b_ext = TimeChangePath::build_through(&fine, &sigma, c2sq).unwrap();
            let tau_gap = sup_inverse_gap(&a, &b, 1.0).unwrap();
            let phi_gap = sup_phi_gap(&a_ext, &b_ext, c2sq).unwrap();
            assert!(tau_gap <= c2sq * phi_gap + 1e-10, "{name} seed {seed}: {tau_gap} > {c2sq} * {phi_gap}");
        }
    }
}

#[test]
fn constant_sigma_strong_error_is_interpolation_gap() {
    // With σ ≡ c both paths are ξ(c² t) read through their own interpolants,
    // so the sup-error is the largest gap between the fine path and its
    // coarse chord, evaluated directly here.
    let config = ExperimentConfig {
        coefficient: "constant".into(),
        params: vec![2.0],
        horizon: 1.0,
        x0: 0.0,
        resolutions: vec![8, 32],
        ref_resolution: 256,
        p: 2.0,
        samples: 4,
        master_seed: 17,
        scheme: Scheme::TimeChange,
        compare: false,
    };
    let errors = strong_error_one_sample(&config, 3).unwrap();
    let fine = BrownianPath::generate(256, 10.0, 0.0, 17, 3).unwrap();
    for (j, &n) in [8usize, 32].iter().enumerate() {
        let m = 256 / n;
        let v = fine.values();
        let mut expected = 0.0f64;
        for k in 0..=(256 * 4) {
            let cell = k / m;
            let chord = if k % m == 0 {
                v[k]
            } else {
                let w = (k % m) as f64 / m as f64;
                v[cell * m] + w * (v[(cell + 1) * m] - v[cell * m])
            };
            expected = expected.max((v[k] - chord).abs());
        }
        assert!(errors[j] > 0.0);
        assert!((errors[j] - expected).abs() < 1e-12, "n={n}: {} vs {expected}", errors[j]);
    }
}

#[test]
fn em_self_convergence_is_roughly_half() {
    let config = ExperimentConfig {
        coefficient: "smooth-sin".into(),
        params: vec![2.0, 1.0],
        horizon: 1.0,
        x0: 0.0,
        resolutions: vec![16, 32, 64, 128, 256],
        ref_resolution: 4096,
        p: 2.0,
        samples: 400,
        master_seed: 11,
        scheme: Scheme::EulerMaruyama,
        compare: false,
    };
    let report = tcbm::run_experiment(&config).unwrap();
    let order = report.fitted_order.unwrap();
    assert!((0.4..=0.6).contains(&order), "{order}");
}

#[test]
fn em_median_error_decreases_along_ladder() {
    let config = ExperimentConfig {
        coefficient: "holder-root".into(),
        params: vec![1.0, 1.0, 0.6, 0.0],
        horizon: 1.0,
        x0: 0.0,
        resolutions: vec![8, 16, 32, 64],
        ref_resolution: 1024,
        p: 1.0,
        samples: 200,
        master_seed: 3,
        scheme: Scheme::EulerMaruyama,
        compare: false,
    };
    let errs: Vec<Vec<f64>> = (0..200).map(|i| strong_error_one_sample(&config, i).unwrap()).collect();
    let medians: Vec<f64> = (0..4)
        .map(|j| {
            let mut col: Vec<f64> = errs.iter().map(|e| e[j]).collect();
            col.sort_by(f64::total_cmp);
            col[100]
        })
        .collect();
    assert!(medians.windows(2).all(|w| w[1] <= w[0]), "{medians:?}");
}

#[test]
fn coupled_errors_mostly_shrink_when_doubling_n() {
    let config = ExperimentConfig {
        coefficient: "smooth-sin".into(),
        params: vec![2.0, 1.0],
        horizon: 1.0,
        x0: 0.0,
        resolutions: vec![16, 32, 64, 128],
        ref_resolution: 2048,
        p: 2.0,
        samples: 200,
        master_seed: 8,
        scheme: Scheme::TimeChange,
        compare: false,
    };
    let errs: Vec<Vec<f64>> = (0..200).map(|i| strong_error_one_sample(&config, i).unwrap()).collect();
    for j in 0..3 {
        let shrink = errs.iter().filter(|e| e[j] >= e[j + 1]).count();
        assert!(shrink as f64 >= 0.6 * 200.0, "pair {j}: {shrink}/200");
    }
}

#[test]
fn em_constant_sigma_matches_brownian_increments() {
    let sigma = builtin_coefficient("constant", &[2.0]).unwrap();
    let driver = BrownianPath::generate(64, 1.5, 0.0, 4, 1).unwrap();
    let em = em_simulate(&sigma, &driver, 1.0, 0.25).unwrap();
    assert_eq!(em.values().len(), 65);
    for (k, x) in em.values().iter().enumerate() {
        assert!((x - (0.25 + 2.0 * driver.values()[k])).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inversion_round_trip(seed in any::<u64>(), which in 0usize..4, n_pow in 2u32..8) {
        let coeffs = [
            builtin_coefficient("smooth-sin", &[2.0, 1.0]).unwrap(),
            builtin_coefficient("time-smooth", &[1.5, 1.0]).unwrap(),
            builtin_coefficient("holder-root", &[0.5, 2.0, 0.25, 0.1]).unwrap(),
            builtin_coefficient("step-mollified", &[2.0, 0.5, 0.0, 0.05]).unwrap(),
        ];
        let sigma = &coeffs[which];
        let n = 1usize << n_pow;
        let c2sq = sigma.upper_bound().powi(2);
        let xi = BrownianPath::generate(n, 1.1 * c2sq + 1.0, 0.0, seed, 0).unwrap();
        let phi = TimeChangePath::build(&xi, sigma, 1.0).unwrap();
        let top = phi.knots_phi()[phi.last_knot()];
        let mut previous = -1.0;
        for i in 0..=200 {
            let t = top * i as f64 / 200.0;
            let s = phi.invert(t).unwrap();
            prop_assert!(s > previous);
            previous = s;
            prop_assert!(s <= c2sq * t * (1.0 + 1e-12) + 1e-15);
            if t > 0.0 {
                prop_assert!(((phi.phi_at(s).unwrap() - t) / t).abs() <= 1e-12);
            }
        }
        let c1sq = sigma.lower_bound().powi(2);
        for (k, p) in phi.knots_phi().iter().enumerate() {
            let s = k as f64 / n as f64;
            prop_assert!(*p >= s / c2sq * (1.0 - 1e-12));
            prop_assert!(*p <= s / c1sq * (1.0 + 1e-12));
        }
    }

    #[test]
    fn subsampling_is_coupled(seed in any::<u64>(), idx in 0u64..1000, m_pow in 0u32..5) {
        let p = BrownianPath::generate(64, 2.0, 0.3, seed, idx).unwrap();
        let m = 1usize << m_pow;
        let q = p.subsample(m).unwrap();
        let nq = q.n();
        for k in 0..q.values().len() {
            prop_assert_eq!(
                q.interpolate(k as f64 / nq as f64).unwrap(),
                p.interpolate((k * m) as f64 / 64.0).unwrap()
            );
        }
    }
}
