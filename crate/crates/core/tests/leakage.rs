use approx::assert_relative_eq;
use proptest::prelude::*;
use purcell_core::leakage::*;

mod common;
use common::oracle_pi_qnd;

fn noisy_chain() -> LeakageChain {
    LeakageChain {
        readout_error: [0.01, 0.02],
        ..LeakageChain::new(0.05, 0.1)
    }
}

#[test]
fn exact_conditionals_match_matrix_oracle() {
    for chain in [noisy_chain(), LeakageChain::new(0.0008, 0.017), LeakageChain::new(0.0591, 0.0049)] {
        let exact = exact_pi_qnd(&chain, &SequenceSchedule::pi_qnd(40)).unwrap();
        let oracle = oracle_pi_qnd(&chain, 40);
        for (a, b) in exact.iter().zip(&oracle) {
            assert!((a.0 - b.0).abs() < 1e-13 && (a.1 - b.1).abs() < 1e-13);
        }
    }
}

#[test]
fn monte_carlo_matches_exact_for_first_ten_cycles() {
    let chain = noisy_chain();
    let sched = SequenceSchedule::pi_qnd(10);
    let mc = simulate_pi_qnd(&chain, &sched, 200_000, 17).unwrap();
    let exact = exact_pi_qnd(&chain, &sched).unwrap();
    for (i, (p01, p10)) in exact.iter().enumerate() {
        for (stat, p) in [(mc.p0_given_1[i], *p01), (mc.p1_given_0[i], *p10)] {
            let sigma = (p * (1.0 - p) / stat.trials as f64).sqrt();
            assert!((stat.p() - p).abs() < 3.0 * sigma, "m = {} {} vs {p}", stat.m, stat.p());
        }
    }
}

#[test]
fn frozen_chain_keeps_its_distribution() {
    let chain = LeakageChain { initial: [0.2, 0.5, 0.3], ..LeakageChain::new(0.0, 0.0) };
    for m in [0, 1, 10, 1000] {
        assert_eq!(propagate_exact(&chain, m).unwrap(), [0.2, 0.5, 0.3]);
    }
    assert!(chain.steady_state().is_none());
}

#[test]
fn steady_state_value() {
    let chain = LeakageChain::new(0.0008, 0.017);
    let b = chain.steady_state().unwrap();
    assert_relative_eq!(b, 0.017 / 0.0178, max_relative = 1e-12);
    assert!((b - 0.955).abs() < 0.001);
    let stationary = LeakageChain { initial: [b, 0.0, 1.0 - b], ..chain };
    for m in [1, 7, 500] {
        let d = propagate_exact(&stationary, m).unwrap();
        assert_relative_eq!(d[0] + d[1], b, max_relative = 1e-12);
    }
}

#[test]
fn ideal_sequence_flips_perfectly() {
    let chain = LeakageChain::new(0.0, 0.0);
    let s = simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(20), 5000, 1).unwrap();
    assert!(s.p0_given_1.iter().all(|c| c.p() == 1.0));
    assert!(s.p1_given_0.iter().all(|c| c.p() == 1.0));
    let rc = simulate_random_circuit(&chain, &SequenceSchedule::random_circuit(20), 20, 50, 1).unwrap();
    assert!(rc.mean.iter().all(|&c| c == 1.0));
}

#[test]
fn one_given_zero_does_not_decay() {
    // a leaked shot reads "1", so shots expected at 0 that leak still flip
    let chain = LeakageChain { readout_error: [0.004, 0.006], ..LeakageChain::new(0.0043, 0.0051) };
    let exact = exact_pi_qnd(&chain, &SequenceSchedule::pi_qnd(150)).unwrap();
    let p10: Vec<f64> = exact.iter().map(|e| e.1).collect();
    let spread = p10.iter().cloned().fold(f64::MIN, f64::max) - p10.iter().cloned().fold(f64::MAX, f64::min);
    let p01: Vec<f64> = exact.iter().map(|e| e.0).collect();
    let decay = p01[0] - p01[p01.len() - 1];
    assert!(spread < 0.1 * decay, "{spread} vs {decay}");
    let mc = simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(150), 4000, 3).unwrap();
    let pooled = |cs: &[CycleStat]| {
        let (k, n) = cs.iter().fold((0u64, 0u64), |a, c| (a.0 + c.successes, a.1 + c.trials));
        let p = k as f64 / n as f64;
        (p, (p * (1.0 - p) / n as f64).sqrt())
    };
    let (early, se_e) = pooled(&mc.p1_given_0[..20]);
    let (late, se_l) = pooled(&mc.p1_given_0[130..]);
    // no decay: leaked shots read "1" and can only push this series up
    assert!(late >= early - 3.0 * (se_e * se_e + se_l * se_l).sqrt(), "{early} vs {late}");
    let (e01, _) = pooled(&mc.p0_given_1[..20]);
    let (l01, _) = pooled(&mc.p0_given_1[130..]);
    assert!(e01 - l01 > 0.1);
}

#[test]
fn fit_recovers_exact_curve() {
    let chain = LeakageChain::new(0.0008, 0.017);
    let exact = exact_pi_qnd(&chain, &SequenceSchedule::pi_qnd(200)).unwrap();
    let m: Vec<f64> = (1..=200).map(|i| i as f64).collect();
    let p: Vec<f64> = exact.iter().map(|e| e.0).collect();
    let fit = fit_pi_qnd(&m, &p, None).unwrap();
    assert_relative_eq!(fit.rate_sum, 0.0178, max_relative = 1e-10);
    assert_relative_eq!(fit.leak_rate, 0.0008, max_relative = 1e-8);
    assert_relative_eq!(fit.seep_rate, 0.017, max_relative = 1e-10);
    assert_relative_eq!(fit.b * fit.rate_sum, fit.seep_rate, max_relative = 1e-12);
}

#[test]
fn correlation_fit_recovers_model_curve() {
    let m: Vec<f64> = (0..=150).map(|i| i as f64).collect();
    for (a, up, down) in [(0.99, 0.0008, 0.0212), (0.97, 0.0227, 0.0037), (0.995, 0.0043, 0.0051)] {
        let c: Vec<f64> = m.iter().map(|&x| correlation_model(x, a, up, down)).collect();
        let fit = fit_random_circuit(&m, &c, None).unwrap();
        assert_relative_eq!(fit.a, a, max_relative = 1e-8);
        assert_relative_eq!(fit.leak_rate, up, max_relative = 1e-8);
        assert_relative_eq!(fit.seep_rate, down, max_relative = 1e-8);
    }
}

#[test]
fn flat_series_give_zero_rate() {
    let m: Vec<f64> = (1..=20).map(|i| i as f64).collect();
    let fit = fit_pi_qnd(&m, &vec![0.97; 20], None).unwrap();
    assert!(fit.zero_rate);
    assert_eq!(fit.rate_sum, 0.0);
    assert_eq!(fit.b, 0.97);
    let ones = fit_random_circuit(&m, &vec![1.0; 20], None).unwrap();
    assert!(ones.zero_rate);
    assert_eq!(ones.leak_rate, 0.0);
}

#[test]
fn fit_input_validation() {
    let m = [1.0, 2.0, 3.0];
    assert!(fit_pi_qnd(&m, &[0.9, 0.8, 0.7], None).is_err());
    assert!(fit_pi_qnd(&[1.0, 2.0, 3.0, 4.0], &[0.9, 1.2, 0.7, 0.6], None).is_err());
    assert!(fit_random_circuit(&[1.0, 2.0, 3.0, 4.0], &[0.9, 0.8], None).is_err());
}

#[test]
fn chain_and_schedule_validation() {
    assert!(LeakageChain::new(0.7, 0.6).validate().is_err());
    assert!(LeakageChain::new(-0.1, 0.1).validate().is_err());
    assert!(LeakageChain { initial: [0.5, 0.4, 0.0], ..LeakageChain::new(0.1, 0.1) }.validate().is_err());
    let chain = LeakageChain::new(0.01, 0.01);
    assert!(simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(1), 100, 0).is_err());
    assert!(simulate_pi_qnd(&chain, &SequenceSchedule::random_circuit(10), 100, 0).is_err());
    assert!(simulate_random_circuit(&chain, &SequenceSchedule::pi_qnd(10), 10, 10, 0).is_err());
    assert!(simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(10), 50, 0).unwrap().low_statistics);
    assert!(!simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(10), 100, 0).unwrap().low_statistics);
}

#[test]
fn absorbing_leak_decorrelates_to_half() {
    let chain = LeakageChain { leak_readout: LeakReadout::Half, ..LeakageChain::new(0.05, 0.0) };
    let rc = simulate_random_circuit(&chain, &SequenceSchedule::random_circuit(200), 50, 200, 9).unwrap();
    let last = rc.mean[rc.mean.len() - 1];
    assert!((last - 0.5).abs() < 4.0 * rc.stderr[rc.mean.len() - 1] + 1e-4, "{last}");
    assert_relative_eq!(correlation_model(1e6, 1.0, 0.05, 0.0), 0.5, epsilon = 1e-12);
}

#[test]
fn random_circuit_is_deterministic_across_thread_counts() {
    let chain = noisy_chain();
    let sched = SequenceSchedule::random_circuit(30);
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| simulate_random_circuit(&chain, &sched, 16, 300, 5).unwrap())
    };
    assert_eq!(run(1), run(3));
    let pi = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(30), 9000, 5).unwrap())
    };
    assert_eq!(pi(1), pi(4));
}

#[test]
fn sum_rate_at_45ns_within_two_sigma() {
    let chain = LeakageChain::new(0.0043, 0.0051);
    let s = planted_experiment(&chain, &PlantedConfig::default()).unwrap();
    assert_eq!(s.failures, 0);
    let sums: Vec<f64> = s.pi_up.iter().zip(&s.pi_down).map(|(u, d)| u + d).collect();
    assert!(PlantedSummary::within(&sums, 0.0094, 2.0), "{:?}", mean_std(&sums));
}

#[test]
fn hundred_ns_rates_within_two_sigma() {
    let chain = LeakageChain::new(0.0008, 0.017);
    let s = planted_experiment(&chain, &PlantedConfig { seed: 77, ..PlantedConfig::default() }).unwrap();
    assert!(PlantedSummary::within(&s.pi_up, 0.0008, 2.0), "{:?}", mean_std(&s.pi_up));
    assert!(PlantedSummary::within(&s.pi_down, 0.017, 2.0), "{:?}", mean_std(&s.pi_down));
}

#[test]
fn two_hundred_ns_rates_from_random_circuits() {
    let chain = LeakageChain::new(0.0008, 0.0212);
    let s = planted_experiment(&chain, &PlantedConfig { seed: 78, ..PlantedConfig::default() }).unwrap();
    assert!(PlantedSummary::within(&s.rc_up, 0.0008, 2.0), "{:?}", mean_std(&s.rc_up));
    assert!(PlantedSummary::within(&s.rc_down, 0.0212, 2.0), "{:?}", mean_std(&s.rc_down));
    assert!(s.methods_agree(2.0));
}

#[test]
fn median_error_over_rate_grid() {
    let ups = [1e-4, 1e-3, 0.01, 0.06];
    let downs = [1e-3, 0.01, 0.03];
    let mut errs = Vec::new();
    for (i, &u) in ups.iter().enumerate() {
        for (j, &d) in downs.iter().enumerate() {
            let chain = LeakageChain::new(u, d);
            let s = simulate_pi_qnd(&chain, &SequenceSchedule::pi_qnd(200), 40_000, (10 * i + j) as u64).unwrap();
            let rel = match fit_pi_qnd_series(&s) {
                Ok(f) => (f.leak_rate - u).abs() / u,
                Err(_) => f64::INFINITY,
            };
            errs.push(rel);
        }
    }
    errs.sort_by(f64::total_cmp);
    let median = 0.5 * (errs[5] + errs[6]);
    assert!(median < 0.25, "median relative error {median}, all {errs:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_form_matches_recurrence(
        u in 0.0..0.5f64,
        d in 0.0..0.5f64,
        p0 in 0.0..1.0f64,
        split in 0.0..1.0f64,
        uniform in any::<bool>(),
        m in 0u32..300,
    ) {
        let chain = LeakageChain {
            initial: [p0 * split, p0 * (1.0 - split), 1.0 - p0],
            seepage: if uniform { SeepageMode::Uniform } else { SeepageMode::Restore },
            ..LeakageChain::new(u, d)
        };
        let a = propagate_exact(&chain, m).unwrap();
        let b = propagate_steps(&chain, m);
        for k in 0..3 {
            prop_assert!((a[k] - b[k]).abs() < 1e-14, "{a:?} {b:?}");
        }
    }

    #[test]
    fn leakage_moves_monotonically_to_steady_state(u in 1e-4..0.3f64, d in 1e-4..0.3f64, p0 in 0.0..1.0f64) {
        let chain = LeakageChain { initial: [p0, 0.0, 1.0 - p0], ..LeakageChain::new(u, d) };
        let target = 1.0 - chain.steady_state().unwrap();
        let mut prev = (1.0 - p0 - target).abs();
        for m in 1..60 {
            let leak = propagate_exact(&chain, m).unwrap()[2];
            let gap = (leak - target).abs();
            prop_assert!(gap <= prev + 1e-15);
            prev = gap;
        }
    }

    #[test]
    fn pi_qnd_oracle_equivalence(u in 0.0..0.2f64, d in 0.0..0.2f64, e0 in 0.0..0.05f64, e1 in 0.0..0.05f64) {
        let chain = LeakageChain { readout_error: [e0, e1], ..LeakageChain::new(u, d) };
        let exact = exact_pi_qnd(&chain, &SequenceSchedule::pi_qnd(12)).unwrap();
        let oracle = oracle_pi_qnd(&chain, 12);
        for (a, b) in exact.iter().zip(&oracle) {
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_split_obeys_steady_state_identity(u in 1e-3..0.05f64, d in 1e-3..0.05f64) {
        let chain = LeakageChain::new(u, d);
        let exact = exact_pi_qnd(&chain, &SequenceSchedule::pi_qnd(150)).unwrap();
        let m: Vec<f64> = (1..=150).map(|i| i as f64).collect();
        let p: Vec<f64> = exact.iter().map(|e| e.0).collect();
        let f = fit_pi_qnd(&m, &p, None).unwrap();
        prop_assert!((f.b * f.rate_sum - f.seep_rate).abs() <= 1e-12 + 3.0 * f.seep_stderr);
        prop_assert!((f.b * f.leak_rate - (1.0 - f.b) * f.seep_rate).abs() < 1e-12);
    }
}
