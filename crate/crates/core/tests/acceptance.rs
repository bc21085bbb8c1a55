//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use purcell_core::channel::*;
use purcell_core::consts::{ang, hz};
use purcell_core::device::*;
use purcell_core::fit::extract_resonance;
use purcell_core::leakage::*;
use purcell_core::measurement::*;
use purcell_core::multiplex::*;
use purcell_core::network::linspace;
use purcell_core::spectroscopy::{branch_resonance, ZoomOptions};
use purcell_core::tuning::*;
use purcell_core::Complex64;

mod common;
use common::{network_strategy, oracle_pi_qnd, spectrum, window};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(x: f64, target: f64, rel: f64) -> bool {
    (x / target - 1.0).abs() <= rel
}

fn q2() -> ReadoutChannel {
    qubit_channels().into_iter().find(|c| c.label == "Q2").unwrap()
}

fn filter_tuning() -> Outcome {
    let t = Instant::now();
    let p = FilterParams::calibrated();
    let biases: Vec<FluxBias> = linspace(-0.45, 0.45, 1801).into_iter().map(FluxBias::from_phi0).collect();
    let curve: Vec<TuningPoint> = tuning_curve(&p, &biases).into_iter().filter_map(|r| r.ok()).collect();
    let off = curve
        .iter()
        .min_by(|a, b| a.phi_over_phi0.abs().total_cmp(&b.phi_over_phi0.abs()))
        .unwrap();
    let band = (6.28e9, 6.45e9);
    let in_band: Vec<&TuningPoint> = curve
        .iter()
        .filter(|q| (band.0..=band.1).contains(&hz(q.omega_f)))
        .collect();
    let on = curve
        .iter()
        .min_by(|a, b| (hz(a.omega_f) - 6.362e9).abs().total_cmp(&(hz(b.omega_f) - 6.362e9).abs()))
        .unwrap();
    let k_on = hz(on.kappa_f);
    let k_off = hz(off.kappa_f);
    let secs = t.elapsed().as_secs_f64();
    let pass = within(k_on, 900e6, 0.2) && within(k_off, 170e6, 0.2) && !in_band.is_empty() && secs < 5.0;
    outcome(
        pass,
        format!(
            "κ_f on {:.0} MHz at {:.3} GHz, off {:.0} MHz at {:.3} GHz, {} points in 6.28-6.45 GHz, {secs:.2} s",
            k_on / 1e6,
            hz(on.omega_f) / 1e9,
            k_off / 1e6,
            hz(off.omega_f) / 1e9,
            in_band.len()
        ),
    )
}

fn on_off_ratio() -> Outcome {
    let ch = q2();
    let p = FilterParams::calibrated();
    let (w_off, k_off, _) = tuning_at_inductance(&p, READ_OFF_INDUCTANCE).unwrap();
    let detuning = w_off - ch.resonator_frequency;
    let (k_on_hz, k_off_hz) = (900e6, 170e6);
    let on = effective_linewidth(&ch, ch.resonator_frequency, ang(k_on_hz)).unwrap();
    let off = effective_linewidth(&ch, ch.resonator_frequency + detuning, ang(k_off_hz)).unwrap();
    let ratio = on / off;
    let d = hz(detuning);
    let oracle = (1.0 + (2.0 * d / k_off_hz).powi(2)) * k_off_hz / k_on_hz;
    let formula_ok = (ratio / oracle - 1.0).abs() < 1e-9;

    let geom = DeviceGeometry::calibrated();
    let idx = geom.branch_index("Q2").unwrap();
    let line = |l_s: f64| {
        branch_resonance(&geom.network(l_s).unwrap(), idx, None, ZoomOptions::default())
            .unwrap()
            .linewidth_hz
    };
    let (s_on, s_off) = (line(READ_ON_INDUCTANCE), line(READ_OFF_INDUCTANCE));
    let measured = s_on / s_off;
    let pass = formula_ok && (d - 587e6).abs() < 1e6 && within(ratio, 9.0, 0.2) && within(measured, 9.0, 0.2);
    outcome(
        pass,
        format!(
            "Δ_off {:.1} MHz (κ_f^off {:.0} MHz), formula ratio {ratio:.4} (oracle {oracle:.4}), \
             S21 ratio {measured:.2} ({:.2} / {:.3} MHz)",
            d / 1e6,
            hz(k_off) / 1e6,
            s_on / 1e6,
            s_off / 1e6
        ),
    )
}

fn dephasing_factor() -> Outcome {
    let mut ch = q2();
    ch.dispersive_shift = ang(13e6 / 2.0);
    let n = 5e-4;
    let rate = |k_mhz: f64| photon_dephasing_rate(&ch, ang(k_mhz * 1e6), n).unwrap();
    let t_slow = 1.0 / rate(2.0);
    let t_fast = 1.0 / rate(20.0);
    let ratio = t_slow / t_fast;
    outcome(
        (ratio - 7.0).abs() <= 1.0,
        format!(
            "T_φ(2 MHz) {:.0} µs, T_φ(20 MHz) {:.0} µs, ratio {ratio:.2} (target 7 ± 1)",
            t_slow * 1e6,
            t_fast * 1e6
        ),
    )
}

fn margins() -> Outcome {
    let st = PhotonState { n_r: 50.0, n_f: 0.0, probe_detuning: ang(6e6), filter_capacitance: 1e-15 };
    let n_f = filter_photon_number(&st, ang(G_RF_HZ)).unwrap();
    let w_f = ang(6e9);
    let c_f = (capacitance_for_current(n_f, w_f, 18.5e-9) * 1e15).round() * 1e-15;
    let current = filter_current(&PhotonState { n_f, filter_capacitance: c_f, ..st }, w_f).unwrap();
    let m = squid_current_margin(0.5e-9, current).unwrap();
    let pass = (n_f - 0.72).abs() < 1e-12
        && (current - 18.5e-9).abs() <= 0.1e-9
        && (m.critical_current - 0.66e-6).abs() <= 0.01e-6
        && m.margin > 10.0;
    outcome(
        pass,
        format!(
            "n_f {n_f:.4}, C_f {:.0} fF, I_f {:.2} nA, I_c {:.3} µA, margin {:.1}",
            c_f * 1e15,
            current * 1e9,
            m.critical_current * 1e6,
            m.margin
        ),
    )
}

fn purcell_scaling() -> Outcome {
    let ch = q2();
    let w_f = ch.resonator_frequency;
    let k_eff = ang(11e6);
    let t7 = purcell_t1(&ch, w_f, 7.0, k_eff).unwrap();
    let t14 = purcell_t1(&ch, w_f, 14.0, k_eff).unwrap();
    let kappa_f = w_f / READ_ON_Q_F;
    let k_cal = effective_linewidth(&ch, w_f, kappa_f).unwrap();
    let t_cal = purcell_t1(&ch, w_f, READ_ON_Q_F, k_cal).unwrap();
    let pass = (t14 / t7 - 4.0).abs() < 1e-12 && within(t_cal, 25e-6, 0.1);
    outcome(
        pass,
        format!(
            "T1(Q_f=14)/T1(Q_f=7) = {:.12}, calibrated T1 at Q_f=7 {:.2} µs (κ_eff {:.2} MHz)",
            t14 / t7,
            t_cal * 1e6,
            hz(k_cal) / 1e6
        ),
    )
}

fn three_sig(x: f64) -> String {
    format!("{:.*e}", 2, x)
}

fn error_budget_check() -> Outcome {
    let t = Instant::now();
    let relax = relaxation_error(200e-9, Q2_READOUT_T1).unwrap();
    let mut inversion_ok = true;
    for row in BUDGET_INDIVIDUAL.iter().chain(BUDGET_SIMULTANEOUS.iter()) {
        let snr = snr_for_separation_error(row.separation_error).unwrap();
        let back = separation_error(snr).unwrap();
        inversion_ok &= three_sig(back) == three_sig(row.separation_error);
    }
    let q2 = BUDGET_INDIVIDUAL.iter().find(|r| r.label == "Q2").unwrap();
    let spec = q2.spec(false).unwrap();
    let b = error_budget(&spec, 1_000_000, 2024).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let pass = (relax - 0.0038).abs() <= 0.0001 && inversion_ok && (b.fidelity - 0.996).abs() <= 0.001 && secs < 60.0;
    outcome(
        pass,
        format!(
            "relaxation {:.3}%, separation inversions {}, Q2 Monte Carlo F {:.3}% ± {:.3}%, {secs:.1} s",
            relax * 100.0,
            if inversion_ok { "all match" } else { "mismatch" },
            b.fidelity * 100.0,
            b.readout_error_stderr() * 100.0
        ),
    )
}

fn leakage_grid() -> Outcome {
    let t = Instant::now();
    let mut pass = true;
    let mut notes = Vec::new();
    for (k, (label, up, down)) in REFERENCE_RATES.iter().enumerate() {
        let chain = LeakageChain::new(*up, *down);
        let cfg = PlantedConfig { seed: 500 + k as u64, ..PlantedConfig::default() };
        let s = planted_experiment(&chain, &cfg).unwrap();
        let ok = s.recovers(2.0) && s.methods_agree(2.0);
        pass &= ok;
        let (pu, _) = mean_std(&s.pi_up);
        let (ru, _) = mean_std(&s.rc_up);
        notes.push(format!(
            "{label} {}: L↑ {:.4}/{:.4}",
            if ok { "ok" } else { "miss" },
            pu,
            ru
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    outcome(pass, format!("{}; {secs:.1} s", notes.join(", ")))
}

const REFERENCE_MEANS_MHZ: [(Variant, [f64; 3], [f64; 3]); 2] = [
    (Variant::VariableBandwidth, [15.3, 1.3, 0.1], [0.3, 4.7, 1.3]),
    (Variant::FixedBandwidth, [13.4, 1.2, 0.6], [0.6, 6.3, 2.8]),
];

fn multiplex_study() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let mut ratios = Vec::new();
    for (kind, anc, dat) in REFERENCE_MEANS_MHZ {
        let cal = calibrate_couplings(
            kind,
            &MultiplexGeometry::default_for(kind),
            &default_regimes(kind),
            default_targets(kind),
            0.05,
            8,
        )
        .unwrap();
        let rep = &cal.report;
        let names = [RegimeName::AncillaReadOn, RegimeName::DataReadOn, RegimeName::ReadOff];
        let a: Vec<f64> = names.iter().map(|&n| rep.mean(Band::Ancilla, n).unwrap() / 1e6).collect();
        let d: Vec<f64> = names.iter().map(|&n| rep.mean(Band::Data, n).unwrap() / 1e6).collect();
        let order = rep.ordering_holds(Band::Ancilla) && rep.ordering_holds(Band::Data);
        let factor2 = |x: f64, y: f64| (0.5..=2.0).contains(&(x / y));
        let on_ok = factor2(a[0], anc[0]) && factor2(d[1], dat[1]);
        pass &= order && on_ok;
        let ratio = rep.on_off_ratio(Band::Ancilla).unwrap();
        ratios.push(ratio);
        notes.push(format!(
            "{}: ancilla {:.2}/{:.2}/{:.2} (reference {}/{}/{}), data {:.2}/{:.2}/{:.2} (reference {}/{}/{}) MHz, ratio {ratio:.1}",
            kind.name(),
            a[0], a[1], a[2], anc[0], anc[1], anc[2],
            d[0], d[1], d[2], dat[0], dat[1], dat[2]
        ));
    }
    pass &= ratios[0] > ratios[1];
    outcome(pass, notes.join("; "))
}

fn property_suites() -> Outcome {
    let runner = || {
        TestRunner::new_with_rng(
            Config { cases: 100, failure_persistence: None, ..Config::default() },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        )
    };
    let mut failures = Vec::new();
    let mut check = |name: &str, r: std::result::Result<(), String>| {
        if let Err(e) = r {
            failures.push(format!("{name}: {e}"));
        }
    };

    check(
        "ABCD reciprocity/passivity",
        runner()
            .run(&(network_strategy(), 4e9..9e9f64), |(net, f)| {
                let det = net.total_abcd(Complex64::from(f)).determinant();
                let (s11, s21) = net.s_params(f);
                if det.is_finite() && s11.is_finite() && s21.is_finite() {
                    prop_assert!((det - Complex64::from(1.0)).norm() < 1e-6);
                    prop_assert!((s11.norm_sqr() + s21.norm_sqr() - 1.0).abs() < 1e-6);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "Lorentzian round trip",
        runner()
            .run(&(5.5e9..7.5e9f64, 0.2e6..50e6f64), |(f0, fwhm)| {
                let p = extract_resonance(&spectrum(f0, fwhm, 601), window(f0, fwhm))
                    .map_err(|e| TestCaseError::fail(e.to_string()))?;
                prop_assert!((p.center_frequency - f0).abs() < fwhm * 1e-4);
                prop_assert!((p.linewidth_fwhm / fwhm - 1.0).abs() < 1e-3);
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "Markov oracle equivalence",
        runner()
            .run(&(0.0..0.2f64, 0.0..0.2f64, 0.0..0.05f64, 0.0..0.05f64), |(u, d, e0, e1)| {
                let chain = LeakageChain { readout_error: [e0, e1], ..LeakageChain::new(u, d) };
                let exact = exact_pi_qnd(&chain, &SequenceSchedule::pi_qnd(12)).unwrap();
                for (a, b) in exact.iter().zip(&oracle_pi_qnd(&chain, 12)) {
                    prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let spec = ReadoutPulseSpec {
        pulse_length: 100e-9,
        demod_length: 200e-9,
        total_length: 250e-9,
        n_r0: 0.0,
        n_r1: 0.0,
        t1_readout: 15e-6,
        snr: 9.0,
    };
    check(
        "seed determinism",
        runner()
            .run(&(any::<u64>(), 1usize..2000), |(seed, n)| {
                let a = simulate_shots(&spec, PreparedState::Excited, n, seed).unwrap();
                let b = simulate_shots(&spec, PreparedState::Excited, n, seed).unwrap();
                prop_assert_eq!(a, b);
                let chain = LeakageChain::new(0.01, 0.05);
                let sched = SequenceSchedule::pi_qnd(10);
                prop_assert_eq!(
                    simulate_pi_qnd(&chain, &sched, 200, seed).unwrap(),
                    simulate_pi_qnd(&chain, &sched, 200, seed).unwrap()
                );
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    check(
        "assignment row sums",
        runner()
            .run(&(1usize..4, 0.0..0.3f64, any::<u64>()), |(n, c, seed)| {
                let specs = vec![spec; n];
                let xt: Vec<Vec<f64>> =
                    (0..n).map(|i| (0..n).map(|j| if i == j { 0.0 } else { c }).collect()).collect();
                for m in [
                    multiplexed_assignment(&specs, &xt, 500, seed).unwrap(),
                    analytic_assignment_matrix(&specs, &xt).unwrap(),
                ] {
                    for row in &m.probs {
                        prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                }
                Ok(())
            })
            .map_err(|e| e.to_string()),
    );
    let n_fail = failures.len();
    outcome(
        n_fail == 0,
        if n_fail == 0 {
            "5 suites × 100 instances, 0 failures".to_string()
        } else {
            failures.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("filter tuning", filter_tuning),
        ("ON/OFF linewidth ratio", on_off_ratio),
        ("dephasing factor", dephasing_factor),
        ("photon/current margins", margins),
        ("Purcell scaling", purcell_scaling),
        ("error budget", error_budget_check),
        ("leakage benchmarking", leakage_grid),
        ("multiplex study", multiplex_study),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} criterion {} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
