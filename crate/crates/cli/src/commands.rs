//! The four pipelines. Each turns a validated config into an output bundle;
//! recoverable numerical failures are recorded in the bundle, fatal ones
//! abort before anything is written.

use purcell_core::leakage::*;
use purcell_core::measurement::*;
use purcell_core::multiplex::*;
use purcell_core::network::s21_sweep;
use purcell_core::spectroscopy::filter_peak;
use purcell_core::tuning::{flux_for_inductance, squid_inductance, tuning_at_inductance};
use serde_json::{json, Value};

use crate::config::{BiasPoint, RunConfig};
use crate::output::{num, Bundle, Table};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

fn numerical(e: impl std::fmt::Display) -> Failure {
    Failure::Numerical(e.to_string())
}

fn missing(section: &str) -> Failure {
    Failure::Config(format!("config has no [{section}] section"))
}

fn file_label(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn mhz(w: f64) -> f64 {
    w / (2.0 * std::f64::consts::PI) / 1e6
}

pub fn sweep(cfg: &RunConfig) -> Result<Bundle, Failure> {
    let plan = cfg.sweep.as_ref().ok_or_else(|| missing("sweep"))?;
    let mut b = Bundle::default();
    let mut tuning = Table::new(&["index", "phi_over_phi0", "squid_inductance_nh", "f_ghz", "kappa_mhz", "q"]);
    let mut fits = Table::new(&["index", "squid_inductance_nh", "center_ghz", "kappa_mhz", "q"]);
    let (lo, hi) = (plan.freqs[0], plan.freqs[plan.freqs.len() - 1]);
    let mut kappas = Vec::new();
    for (i, p) in plan.points.iter().enumerate() {
        let (phi, l_s) = match *p {
            BiasPoint::Flux(bias) => match squid_inductance(&cfg.filter, bias) {
                Ok(l) => (bias.in_phi0(), l),
                Err(e) => {
                    eprintln!("sweep: skipping point {i} at {} Φ0: {e}", bias.in_phi0());
                    b.skipped.push(json!({ "index": i, "phi_over_phi0": bias.in_phi0(), "reason": e.to_string() }));
                    continue;
                }
            },
            BiasPoint::Inductance(l) => (flux_for_inductance(&cfg.filter, l).unwrap_or(f64::NAN), l),
        };
        let (w, k, q) = tuning_at_inductance(&cfg.filter, l_s).map_err(numerical)?;
        tuning.push(vec![
            i.to_string(),
            num(phi),
            num(l_s * 1e9),
            num(mhz(w) / 1e3),
            num(mhz(k)),
            num(q),
        ]);

        let net = cfg.geometry.network(l_s).map_err(numerical)?;
        let mut s21 = Table::new(&["freq_hz", "re_s21", "im_s21", "mag_db", "singular"]);
        for pt in s21_sweep(&net, &plan.freqs).map_err(numerical)? {
            s21.push(vec![
                num(pt.freq_hz),
                num(pt.s21.re),
                num(pt.s21.im),
                num(pt.mag_db()),
                u8::from(pt.singular).to_string(),
            ]);
        }
        b.table(format!("s21_{i:03}.csv"), &s21);

        let filter = cfg.geometry.filter_network(l_s).map_err(numerical)?;
        match filter_peak(&filter, lo, hi, plan.freqs.len()) {
            Ok(pk) => {
                kappas.push(pk.linewidth_fwhm);
                fits.push(vec![
                    i.to_string(),
                    num(l_s * 1e9),
                    num(pk.center_frequency / 1e9),
                    num(pk.linewidth_fwhm / 1e6),
                    num(pk.center_frequency / pk.linewidth_fwhm),
                ]);
            }
            Err(e) => {
                b.failures.push(format!("filter fit at point {i}: {e}"));
                fits.push(vec![i.to_string(), num(l_s * 1e9), num(f64::NAN), num(f64::NAN), num(f64::NAN)]);
            }
        }
    }
    b.table("tuning.csv", &tuning);
    b.table("filter_fits.csv", &fits);
    b.summary.insert("points".into(), json!(plan.points.len()));
    b.summary.insert("skipped".into(), json!(b.skipped.len()));
    b.summary.insert("spectrum_points".into(), json!(plan.freqs.len()));
    if kappas.len() >= 2 {
        let max = kappas.iter().copied().fold(f64::MIN, f64::max);
        let min = kappas.iter().copied().fold(f64::MAX, f64::min);
        b.summary.insert("filter_kappa_ratio".into(), json!(max / min));
    }
    Ok(b)
}

pub fn readout(cfg: &RunConfig) -> Result<Bundle, Failure> {
    let plan = cfg.readout.as_ref().ok_or_else(|| missing("readout"))?;
    let mut b = Bundle::default();
    b.seeds.insert("readout".into(), json!(plan.seed));
    let mut budget = Table::new(&[
        "label",
        "fidelity",
        "readout_error",
        "readout_error_stderr",
        "separation_error",
        "relaxation_error",
        "separation_error_mc",
        "relaxation_error_mc",
        "residual",
        "snr",
        "t1_readout_ns",
    ]);
    let mut fids = Vec::new();
    for (i, (label, spec)) in plan.labels.iter().zip(&plan.specs).enumerate() {
        let seed = plan.seed.wrapping_add(i as u64);
        let g = simulate_shots(spec, PreparedState::Ground, plan.shots, seed).map_err(numerical)?;
        let e = simulate_shots(spec, PreparedState::Excited, plan.shots, seed).map_err(numerical)?;
        let mut hist = Table::new(&["bin_center", "count_g", "count_e"]);
        for (c, ng, ne) in histogram(&g, &e, &spec.discriminator(), plan.bins) {
            hist.push(vec![num(c), ng.to_string(), ne.to_string()]);
        }
        b.table(format!("histogram_{}.csv", file_label(label)), &hist);
        let eb = error_budget(spec, plan.shots, seed).map_err(numerical)?;
        fids.push(eb.fidelity);
        budget.push(vec![
            label.clone(),
            num(eb.fidelity),
            num(eb.readout_error),
            num(eb.readout_error_stderr()),
            num(eb.separation_error),
            num(eb.relaxation_error),
            num(eb.separation_error_mc),
            num(eb.relaxation_error_mc),
            num(eb.residual),
            num(spec.snr),
            num(spec.t1_readout * 1e9),
        ]);
    }
    b.table("budget.csv", &budget);
    if plan.specs.len() > 1 {
        let m = multiplexed_assignment(&plan.specs, &plan.crosstalk, plan.shots, plan.seed).map_err(numerical)?;
        let ket = |s: usize| format!("|{}>", m.label(s));
        let mut header = vec![format!("prepared ({})", plan.labels.join(" "))];
        header.extend((0..m.dim()).map(ket));
        let mut t = Table::with_header(header);
        for s in 0..m.dim() {
            let mut row = vec![ket(s)];
            row.extend(m.probs[s].iter().map(|&p| num(p)));
            t.push(row);
        }
        b.table("assignment.csv", &t);
        b.summary.insert("mean_cross_fidelity".into(), json!(m.mean_cross_fidelity()));
    }
    let avg = fids.iter().sum::<f64>() / fids.len() as f64;
    b.summary.insert("average_fidelity".into(), json!(avg));
    b.summary.insert(
        "fidelity".into(),
        Value::Object(plan.labels.iter().cloned().zip(fids.iter().map(|f| json!(f))).collect()),
    );
    Ok(b)
}

fn fit_row(label: &str, method: &str, chain: &LeakageChain, fit: &Result<DecayFit, purcell_core::Error>) -> Vec<String> {
    let head = vec![label.to_string(), method.to_string(), num(chain.leak_rate), num(chain.seep_rate)];
    let tail = match fit {
        Ok(f) => vec![
            num(f.leak_rate),
            num(f.leak_stderr),
            num(f.seep_rate),
            num(f.seep_stderr),
            u8::from(f.zero_rate).to_string(),
            "ok".into(),
        ],
        Err(e) => {
            let nan = num(f64::NAN);
            vec![nan.clone(), nan.clone(), nan.clone(), nan, "0".into(), format!("failed: {e}")]
        }
    };
    head.into_iter().chain(tail).collect()
}

fn agree(a: f64, sa: f64, b: f64, sb: f64) -> bool {
    (a - b).abs() <= 2.0 * (sa * sa + sb * sb).sqrt()
}

pub fn leakage(cfg: &RunConfig) -> Result<Bundle, Failure> {
    let plan = cfg.leakage.as_ref().ok_or_else(|| missing("leakage"))?;
    let mut b = Bundle::default();
    b.seeds.insert("leakage".into(), json!(plan.seed));
    let mut fits = Table::new(&[
        "label",
        "method",
        "planted_leak_rate",
        "planted_seep_rate",
        "leak_rate",
        "leak_stderr",
        "seep_rate",
        "seep_stderr",
        "zero_rate",
        "status",
    ]);
    let mut agreement = Table::new(&["label", "sigma_source", "leak_agree_2sigma", "seep_agree_2sigma"]);
    let mut repeats = Table::new(&[
        "label",
        "method",
        "leak_mean",
        "leak_std",
        "seep_mean",
        "seep_std",
        "recovers_2sigma",
        "methods_agree_2sigma",
        "failed_repeats",
    ]);
    for (k, (label, chain)) in plan.points.iter().enumerate() {
        let seed = plan.seed.wrapping_add(k as u64);
        let pi = simulate_pi_qnd(chain, &SequenceSchedule::pi_qnd(plan.m_max), plan.shots, seed).map_err(numerical)?;
        let rc = simulate_random_circuit(
            chain,
            &SequenceSchedule::random_circuit(plan.m_max),
            plan.n_random,
            plan.shots_per_random,
            seed,
        )
        .map_err(numerical)?;
        let mut t = Table::new(&["m", "p_cond", "stderr", "p1_given_0", "p1_given_0_stderr"]);
        for (a, c) in pi.p0_given_1.iter().zip(&pi.p1_given_0) {
            t.push(vec![a.m.to_string(), num(a.p()), num(a.stderr()), num(c.p()), num(c.stderr())]);
        }
        let name = file_label(label);
        b.table(format!("pi_qnd_{name}.csv"), &t);
        let mut t = Table::new(&["m", "correlation", "stderr"]);
        for (m, (c, s)) in rc.mean.iter().zip(&rc.stderr).enumerate() {
            t.push(vec![m.to_string(), num(*c), num(*s)]);
        }
        b.table(format!("correlation_{name}.csv"), &t);

        let fp = fit_pi_qnd_series(&pi);
        let fc = fit_correlation_series(&rc);
        fits.push(fit_row(label, "pi-qnd", chain, &fp));
        fits.push(fit_row(label, "random-circuit", chain, &fc));
        for (m, f) in [("pi-qnd", &fp), ("random-circuit", &fc)] {
            if let Err(e) = f {
                b.failures.push(format!("{label} {m} fit: {e}"));
            }
        }

        if plan.repeats == 1 {
            if let (Ok(p), Ok(c)) = (&fp, &fc) {
                agreement.push(vec![
                    label.clone(),
                    "fit-covariance".into(),
                    agree(p.leak_rate, p.leak_stderr, c.leak_rate, c.leak_stderr).to_string(),
                    agree(p.seep_rate, p.seep_stderr, c.seep_rate, c.seep_stderr).to_string(),
                ]);
            }
        } else {
            let pc = PlantedConfig {
                repeats: plan.repeats,
                shots: plan.shots,
                n_random: plan.n_random,
                shots_per_random: plan.shots_per_random,
                m_max: plan.m_max,
                seed,
            };
            let s = planted_experiment(chain, &pc).map_err(numerical)?;
            if s.failures > 0 {
                b.failures.push(format!("{label}: {} of {} repeats failed to fit", s.failures, plan.repeats));
            }
            let spread = |a: &[f64], b: &[f64]| {
                let (ma, sa) = mean_std(a);
                let (mb, sb) = mean_std(b);
                agree(ma, sa, mb, sb).to_string()
            };
            agreement.push(vec![
                label.clone(),
                "across-repeats".into(),
                spread(&s.pi_up, &s.rc_up),
                spread(&s.pi_down, &s.rc_down),
            ]);
            for (method, up, down) in [("pi-qnd", &s.pi_up, &s.pi_down), ("random-circuit", &s.rc_up, &s.rc_down)] {
                let (um, us) = mean_std(up);
                let (dm, ds) = mean_std(down);
                let rec = PlantedSummary::within(up, s.planted_up, 2.0) && PlantedSummary::within(down, s.planted_down, 2.0);
                repeats.push(vec![
                    label.clone(),
                    method.into(),
                    num(um),
                    num(us),
                    num(dm),
                    num(ds),
                    rec.to_string(),
                    s.methods_agree(2.0).to_string(),
                    s.failures.to_string(),
                ]);
            }
        }
    }
    b.table("fits.csv", &fits);
    b.table("agreement.csv", &agreement);
    if plan.repeats > 1 {
        b.table("repeats.csv", &repeats);
    }
    b.summary.insert("points".into(), json!(plan.points.len()));
    b.summary.insert("repeats".into(), json!(plan.repeats));
    Ok(b)
}

pub fn multiplex(cfg: &RunConfig) -> Result<Bundle, Failure> {
    let plan = cfg.multiplex.as_ref().ok_or_else(|| missing("multiplex"))?;
    let mut b = Bundle::default();
    for v in &plan.variants {
        let (report, geom, iterations) = if plan.calibrate {
            let cal = calibrate_couplings(v.kind, &v.geometry, &v.regimes, v.targets, plan.rel_tol, plan.max_iter)
                .map_err(numerical)?;
            (cal.report, cal.geometry, Some(cal.iterations))
        } else {
            (regime_report(v.kind, &v.geometry, &v.regimes).map_err(numerical)?, v.geometry.clone(), None)
        };
        let name = v.kind.name();
        let mut header = vec!["label".to_string(), "band".into(), "frequency_ghz".into()];
        for r in &report.regimes {
            header.push(format!("{}_linewidth_mhz", r.name.name()));
            header.push(format!("{}_upper_bound", r.name.name()));
        }
        let mut t = Table::with_header(header);
        for r in &report.resonators {
            let mut row = vec![r.label.clone(), r.band.name().into(), num(r.frequency_hz / 1e9)];
            for (w, ub) in r.linewidth_hz.iter().zip(&r.upper_bound) {
                row.push(num(w / 1e6));
                row.push(u8::from(*ub).to_string());
            }
            t.push(row);
        }
        b.table(format!("multiplex_{name}.csv"), &t);
        b.text(format!("multiplex_{name}.txt"), report.table());

        let rows = protection_summary(&report, &geom, &cfg.channels, plan.noise_photons).map_err(numerical)?;
        let mut p = Table::new(&[
            "band",
            "on_off_ratio",
            "idle_linewidth_mhz",
            "idle_dephasing_rate_per_s",
            "idle_purcell_t1_us",
        ]);
        for r in &rows {
            p.push(vec![
                r.band.name().into(),
                num(r.on_off_ratio),
                num(r.idle_linewidth_hz / 1e6),
                num(r.idle_dephasing_rate),
                num(r.idle_purcell_t1.map_or(f64::NAN, |t| t * 1e6)),
            ]);
        }
        b.table(format!("protection_{name}.csv"), &p);
        b.summary.insert(
            name.into(),
            json!({
                "ancilla_on_off_ratio": report.on_off_ratio(Band::Ancilla),
                "data_on_off_ratio": report.on_off_ratio(Band::Data),
                "ancilla_ordering_holds": report.ordering_holds(Band::Ancilla),
                "data_ordering_holds": report.ordering_holds(Band::Data),
                "degenerate": report.degenerate,
                "ancilla_coupling_ff": geom.ancilla_coupling * 1e15,
                "data_coupling_ff": geom.data_coupling * 1e15,
                "calibration_iterations": iterations,
            }),
        );
    }
    Ok(b)
}
