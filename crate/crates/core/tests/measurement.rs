use approx::assert_relative_eq;
use proptest::prelude::*;
use purcell_core::device::{fast_readout_specs, promotion_spec, BUDGET_INDIVIDUAL};
use purcell_core::measurement::*;

/// `½ erfc(x)` by Simpson integration of the Gaussian tail, independent of
/// any special-function library.
fn half_erfc(x: f64) -> f64 {
    let (a, b, n) = (x, x + 12.0, 20_000);
    let h = (b - a) / n as f64;
    let g = |t: f64| (-t * t).exp();
    let mut s = g(a) + g(b);
    for i in 1..n {
        s += g(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / std::f64::consts::PI.sqrt()
}

/// Root of a decreasing function on `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..100 {
        let m = 0.5 * (lo + hi);
        if f(m) > 0.0 {
            lo = m;
        } else {
            hi = m;
        }
    }
    0.5 * (lo + hi)
}

fn spec(snr: f64, t1: f64) -> ReadoutPulseSpec {
    ReadoutPulseSpec {
        pulse_length: 100e-9,
        demod_length: 200e-9,
        total_length: 250e-9,
        n_r0: 0.0,
        n_r1: 0.0,
        t1_readout: t1,
        snr,
    }
}

/// Binomial 3σ half-width for the mean of two proportions.
fn three_sigma(p: f64, n: usize) -> f64 {
    3.0 * (p * (1.0 - p) / (2.0 * n as f64)).sqrt()
}

fn mc_fidelity(s: &ReadoutPulseSpec, n: usize, seed: u64) -> f64 {
    let g = simulate_shots(s, PreparedState::Ground, n, seed).unwrap();
    let e = simulate_shots(s, PreparedState::Excited, n, seed).unwrap();
    fidelity(&g, &e, &s.discriminator()).unwrap()
}

#[test]
fn separation_error_matches_erfc_oracle() {
    assert_eq!(separation_error(0.0).unwrap(), 0.5);
    for snr in [1.0, 4.0, 9.0, 16.0, 22.9, 36.0] {
        assert_relative_eq!(separation_error(snr).unwrap(), half_erfc(snr.sqrt() / 2.0), max_relative = 1e-7);
    }
    assert!((separation_error(16.0).unwrap() - 2.34e-3).abs() < 0.005e-3);
    // 0.03% as printed (two significant digits) needs SNR in about [23.0, 24.2]
    let printed = |snr: f64| (separation_error(snr).unwrap() * 1e4).round() / 1e4;
    assert_eq!(printed(23.55), 3e-4);
    assert_eq!(printed(22.9), 4e-4);
    assert!(separation_error(-1.0).is_err());
}

#[test]
fn separation_error_inverts() {
    for eps in [0.4, 0.1, 3e-4, 1.7e-4, 4e-5] {
        let snr = snr_for_separation_error(eps).unwrap();
        assert_relative_eq!(separation_error(snr).unwrap(), eps, max_relative = 1e-9);
    }
    let x = 2.0 * bisect(|x| half_erfc(x) - 3e-4, 1.0, 4.0);
    assert_relative_eq!(snr_for_separation_error(3e-4).unwrap(), x * x, max_relative = 1e-6);
    assert!((x * x - 23.55).abs() < 0.01);
    assert!(snr_for_separation_error(0.0).is_err());
}

#[test]
fn relaxation_error_examples() {
    let e = relaxation_error(200e-9, 26e-6).unwrap();
    assert!((e - 0.0038).abs() < 0.00005, "{e}");
    assert_eq!(relaxation_error(0.0, 26e-6).unwrap(), 0.0);
    assert_relative_eq!(relaxation_error(26e-6 * 2f64.ln(), 26e-6).unwrap(), 0.25, max_relative = 1e-12);
    assert_relative_eq!(relaxation_error(26e-6 * 4f64.ln(), 26e-6).unwrap(), 0.375, max_relative = 1e-12);
    assert!(relaxation_error(1e-7, 0.0).is_err());
    let t1 = t1_for_relaxation_error(200e-9, 0.0046).unwrap();
    assert_relative_eq!(relaxation_error(200e-9, t1).unwrap(), 0.0046, max_relative = 1e-12);
}

#[test]
fn high_snr_misassignment_matches_erfc() {
    let s = spec(25.0, 1e9);
    let n = 1_000_000;
    let g = simulate_shots(&s, PreparedState::Ground, n, 7).unwrap();
    let p = g.iter().filter(|r| r.assigned == 1).count() as f64 / n as f64;
    let oracle = half_erfc(2.5);
    let sigma = (oracle * (1.0 - oracle) / n as f64).sqrt();
    assert!((p - oracle).abs() < 3.0 * sigma, "{p} vs {oracle}");
    assert!((oracle - 2.03e-4).abs() < 0.01e-4);
}

#[test]
fn zero_snr_is_a_coin() {
    let f = mc_fidelity(&spec(0.0, 1e9), 200_000, 3);
    assert!((f - 0.5).abs() < three_sigma(0.5, 200_000), "{f}");
}

#[test]
fn separated_clouds_are_perfect() {
    assert_eq!(mc_fidelity(&spec(2000.0, 1e9), 20_000, 4), 1.0);
}

#[test]
fn q2_budget_fidelity() {
    let q2 = BUDGET_INDIVIDUAL.iter().find(|r| r.label == "Q2").unwrap();
    let s = q2.spec(false).unwrap();
    let n = 400_000;
    let f = mc_fidelity(&s, n, 11);
    assert!((f - 0.996).abs() < 0.0005, "{f}");
    let b = error_budget(&s, n, 11).unwrap();
    assert_relative_eq!(b.fidelity, f);
    assert_relative_eq!(b.separation_error, 0.00017, max_relative = 1e-6);
    assert!((b.relaxation_error - 0.0038).abs() < 0.0001);
    assert!(b.residual.abs() < 3.0 * b.readout_error_stderr() + 1e-5);
}

#[test]
fn fast_q2_fidelity() {
    let specs = fast_readout_specs().unwrap();
    let s = specs[1];
    assert_eq!(s.pulse_length, 45e-9);
    assert_relative_eq!(expected_fidelity(&s), 0.9952, max_relative = 1e-9);
    let n = 400_000;
    let f = mc_fidelity(&s, n, 12);
    assert!((f - 0.9952).abs() < three_sigma(0.0048, n), "{f}");
}

#[test]
fn promotion_examples() {
    let s = promotion_spec().unwrap();
    assert_relative_eq!(expected_multilevel_fidelity(&s), 0.9987, max_relative = 1e-9);
    let n = 400_000;
    let on = multilevel_fidelity(&s, true, n, 5).unwrap();
    let off = multilevel_fidelity(&s, false, n, 5).unwrap();
    assert!((on - 0.9987).abs() < three_sigma(0.0013, n), "{on}");
    assert!(off < on);
    // without promotion the loss is bounded below by the relaxation error
    let relax = relaxation_error(s.demod_length, s.t1_readout).unwrap();
    assert!(1.0 - off > relax - three_sigma(relax, n));
    let no_decay = ReadoutPulseSpec { t1_readout: 1e12, ..s };
    assert_relative_eq!(
        expected_multilevel_fidelity(&no_decay),
        expected_fidelity(&no_decay),
        max_relative = 1e-9
    );
}

#[test]
fn determinism_across_thread_counts() {
    let s = spec(9.0, 20e-6);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| simulate_shots(&s, PreparedState::Excited, 50_000, 99).unwrap())
    };
    let a = run(1);
    let b = run(4);
    assert_eq!(a, b);
    assert_eq!(a, simulate_shots(&s, PreparedState::Excited, 50_000, 99).unwrap());
    assert_ne!(a, simulate_shots(&s, PreparedState::Excited, 50_000, 100).unwrap());
    let specs = vec![s, spec(16.0, 30e-6)];
    let xt = vec![vec![0.0, 0.01], vec![0.02, 0.0]];
    let m1 = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| multiplexed_assignment(&specs, &xt, 10_000, 1).unwrap());
    assert_eq!(m1, multiplexed_assignment(&specs, &xt, 10_000, 1).unwrap());
}

#[test]
fn assignment_ignores_true_state() {
    let s = spec(4.0, 5e-6);
    let e = simulate_shots(&s, PreparedState::Excited, 5000, 1).unwrap();
    let disc = s.discriminator();
    assert!(e.iter().all(|r| r.assigned == disc.assign(r.iq)));
    assert!(e.iter().all(|r| r.true_initial_state == PreparedState::Excited));
}

#[test]
fn shot_validation() {
    assert!(simulate_shots(&spec(9.0, 0.0), PreparedState::Ground, 10, 0).is_err());
    assert!(simulate_shots(&spec(9.0, -1.0), PreparedState::Ground, 10, 0).is_err());
    assert!(simulate_shots(&spec(9.0, 1e-5), PreparedState::Ground, 0, 0).is_err());
    let mut bad = spec(9.0, 1e-5);
    bad.demod_length = 300e-9;
    assert!(bad.validate().is_err());
    assert!(fidelity(&[], &[], &bad.discriminator()).is_err());
}

#[test]
fn histogram_counts_every_shot() {
    let s = spec(9.0, 20e-6);
    let g = simulate_shots(&s, PreparedState::Ground, 3000, 2).unwrap();
    let e = simulate_shots(&s, PreparedState::Excited, 2000, 2).unwrap();
    let h = histogram(&g, &e, &s.discriminator(), 50);
    assert_eq!(h.len(), 50);
    assert_eq!(h.iter().map(|b| b.1).sum::<u64>(), 3000);
    assert_eq!(h.iter().map(|b| b.2).sum::<u64>(), 2000);
    assert!(h.windows(2).all(|w| w[0].0 < w[1].0));
}

#[test]
fn median_discriminator_recovers_means() {
    let s = spec(25.0, 20e-6);
    let g = simulate_shots(&s, PreparedState::Ground, 50_000, 8).unwrap();
    let e = simulate_shots(&s, PreparedState::Excited, 50_000, 8).unwrap();
    let d = Discriminator::from_shots(&g, &e).unwrap();
    assert!((d.mu0 - s.discriminator().mu0).norm() < 0.05);
    assert!((d.mu1 - s.discriminator().mu1).norm() < 0.05);
}

#[test]
fn zero_crosstalk_factorizes() {
    let specs = fast_readout_specs().unwrap();
    let zero = vec![vec![0.0; 3]; 3];
    let exact = analytic_assignment_matrix(&specs, &zero).unwrap();
    for (i, s) in specs.iter().enumerate() {
        assert_relative_eq!(exact.qubit_fidelity(i), expected_fidelity(s), max_relative = 1e-12);
    }
    let (p10, p11): (Vec<f64>, Vec<f64>) = specs.iter().map(|s| analytic_assignment(s, 0.0)).unzip();
    for state in 0..8 {
        for a in 0..8 {
            let product: f64 = (0..3)
                .map(|j| {
                    let p1 = if exact.bit(state, j) == 1 { p11[j] } else { p10[j] };
                    if exact.bit(a, j) == 1 { p1 } else { 1.0 - p1 }
                })
                .product();
            assert_relative_eq!(exact.probs[state][a], product, max_relative = 1e-12);
        }
    }
    let n = 100_000;
    let mc = multiplexed_assignment(&specs, &zero, n, 21).unwrap();
    for s in 0..8 {
        let p = exact.probs[s][s];
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((mc.probs[s][s] - p).abs() < 3.0 * sigma, "state {s}");
    }
}

#[test]
fn one_qubit_matrix_reduces_to_fidelity() {
    let s = spec(16.0, 20e-6);
    let n = 200_000;
    let m = multiplexed_assignment(&[s], &[vec![0.0]], n, 31).unwrap();
    assert_eq!(m.dim(), 2);
    let f_matrix = m.qubit_fidelity(0);
    let f_direct = mc_fidelity(&s, n, 31);
    let e = 1.0 - expected_fidelity(&s);
    assert!((f_matrix - f_direct).abs() < 2.0 * three_sigma(e, n));
    assert_eq!(m.label(1), "1");
}

#[test]
fn small_crosstalk_for_cross_fidelity_target() {
    let specs: Vec<_> = fast_readout_specs().unwrap().into_iter().take(2).collect();
    let c = uniform_crosstalk_for_cross_fidelity(&specs, 2e-4).unwrap();
    let xt = vec![vec![0.0, c], vec![c, 0.0]];
    let with = analytic_assignment_matrix(&specs, &xt).unwrap();
    let without = analytic_assignment_matrix(&specs, &[vec![0.0; 2], vec![0.0; 2]]).unwrap();
    assert_relative_eq!(with.mean_cross_fidelity(), 2e-4, max_relative = 1e-6);
    let worst = (0..4)
        .flat_map(|s| (0..4).map(move |a| (s, a)))
        .filter(|(s, a)| s != a)
        .map(|(s, a)| (with.probs[s][a] - without.probs[s][a]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-3, "{worst}");
}

#[test]
fn crosstalk_validation() {
    let specs = vec![spec(9.0, 1e-5), spec(9.0, 1e-5)];
    assert!(multiplexed_assignment(&specs, &vec![vec![0.0; 3]; 3], 10, 0).is_err());
    assert!(multiplexed_assignment(&specs, &[vec![0.1, 0.0], vec![0.0, 0.0]], 10, 0).is_err());
    assert!(multiplexed_assignment(&specs, &[vec![0.0, -0.1], vec![0.0, 0.0]], 10, 0).is_err());
    assert!(multiplexed_assignment(&[], &[], 10, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn separation_error_decreasing(a in 0.0..100.0f64, d in 1e-3..10.0f64) {
        let x = separation_error(a).unwrap();
        prop_assert!(x > separation_error(a + d).unwrap());
        prop_assert!(x > 0.0 && x <= 0.5);
    }

    #[test]
    fn relaxation_approximation_bound(tau in 1e-9..1e-6f64, t1 in 1e-6..1e-3f64) {
        let exact = relaxation_error(tau, t1).unwrap();
        let x = tau / t1;
        prop_assert!((exact - x / 2.0).abs() < x * x / 4.0);
    }

    #[test]
    fn monte_carlo_converges_to_budget(snr in 9.0..40.0f64, t1 in 2e-6..60e-6f64, seed in 0u64..1000) {
        let s = spec(snr, t1);
        let n = 40_000;
        let f = mc_fidelity(&s, n, seed);
        let e = 1.0 - expected_fidelity(&s);
        // 3σ family-wise over 100 cases (Bonferroni) is 4.2σ per case
        prop_assert!(((1.0 - f) - e).abs() < 1.4 * three_sigma(e, n) + 1.0 / n as f64);
        // leading-order budget: ε_sep + ε_relax up to the cross term
        let lead = separation_error(snr).unwrap() + relaxation_error(s.demod_length, t1).unwrap();
        prop_assert!((e - lead).abs() <= lead * lead * 2.0 + 1e-12);
    }

    #[test]
    fn rows_sum_to_one(n in 1usize..4, c in 0.0..0.05f64, seed in 0u64..1000) {
        let specs = vec![spec(9.0, 10e-6); n];
        let xt: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { c }).collect()).collect();
        let mc = multiplexed_assignment(&specs, &xt, 500, seed).unwrap();
        let ex = analytic_assignment_matrix(&specs, &xt).unwrap();
        for m in [mc, ex] {
            for row in &m.probs {
                prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|p| (0.0..=1.0).contains(p)));
            }
        }
    }

    #[test]
    fn label_swap_keeps_fidelity(snr in 0.5..30.0f64, seed in 0u64..1000) {
        let s = spec(snr, 15e-6);
        let g = simulate_shots(&s, PreparedState::Ground, 2000, seed).unwrap();
        let e = simulate_shots(&s, PreparedState::Excited, 2000, seed).unwrap();
        let d = s.discriminator();
        prop_assert_eq!(fidelity(&g, &e, &d).unwrap(), fidelity(&e, &g, &d.swapped()).unwrap());
    }

    #[test]
    fn shots_deterministic(seed in 0u64..u64::MAX, n in 1usize..5000) {
        let s = spec(9.0, 15e-6);
        prop_assert_eq!(
            simulate_shots(&s, PreparedState::Excited, n, seed).unwrap(),
            simulate_shots(&s, PreparedState::Excited, n, seed).unwrap()
        );
    }
}
