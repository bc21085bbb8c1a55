//! Run configuration: one TOML file with optional sections. Frequencies are
//! given in GHz, inductances in nH, capacitances in fF, impedances in Ω and
//! times in ns; everything is converted to SI on load.

use std::collections::HashSet;
use std::f64::consts::PI;

use purcell_core::channel::ReadoutChannel;
use purcell_core::device::{qubit_channels, DeviceGeometry, ResonatorTap, G_QR_HZ, G_RF_HZ};
use purcell_core::leakage::{LeakageChain, REFERENCE_RATES};
use purcell_core::measurement::{
    snr_for_separation_error, t1_for_relaxation_error, ReadoutPulseSpec,
};
use purcell_core::multiplex::{
    default_regimes, default_targets, MultiplexGeometry, RegimeName, RegimeSpec, Variant,
};
use purcell_core::network::linspace;
use purcell_core::tuning::{FilterParams, FluxBias};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

fn ghz(x: f64) -> f64 {
    x * 1e9
}

fn ang_ghz(x: f64) -> f64 {
    2.0 * PI * x * 1e9
}

fn positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        err(format!("{name} = {v} must be finite and > 0"))
    }
}

fn probability(name: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        err(format!("{name} = {v} must lie in [0, 1]"))
    }
}

fn unique<'a>(what: &str, labels: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
    let mut seen = HashSet::new();
    for l in labels {
        if l.is_empty() {
            return err(format!("{what}: empty label"));
        }
        if !seen.insert(l) {
            return err(format!("{what}: duplicate label '{l}'"));
        }
    }
    Ok(())
}

// ---- raw TOML layout ----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    device: Option<RawDevice>,
    sweep: Option<RawSweep>,
    readout: Option<RawReadout>,
    leakage: Option<RawLeakage>,
    multiplex: Option<RawMultiplex>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDevice {
    filter: Option<RawFilter>,
    netlist: Option<RawNetlist>,
    qubits: Option<Vec<RawQubit>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFilter {
    critical_current_ua: Option<f64>,
    bare_frequency_ghz: Option<f64>,
    bare_inductance_nh: Option<f64>,
    length_mm: Option<f64>,
    impedance_ohm: Option<f64>,
    port_ohm: Option<f64>,
    input_quality: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetlist {
    bare_frequency_ghz: Option<f64>,
    impedance_ohm: Option<f64>,
    input_stub_rad: Option<f64>,
    port_ohm: Option<f64>,
    resonator_impedance_ohm: Option<f64>,
    resonators: Option<Vec<RawResonator>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResonator {
    label: String,
    frequency_ghz: f64,
    coupling_ff: f64,
    tap_fraction: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQubit {
    label: String,
    qubit_ghz: f64,
    resonator_ghz: f64,
    two_chi_ghz: f64,
    anharmonicity_ghz: f64,
    t1_ns: f64,
    efficiency: f64,
    g_qr_ghz: Option<f64>,
    g_rf_ghz: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    flux_biases: Option<Vec<f64>>,
    squid_inductances_nh: Option<Vec<f64>>,
    f_start_ghz: Option<f64>,
    f_stop_ghz: Option<f64>,
    points: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawReadout {
    seed: Option<u64>,
    shots: Option<usize>,
    histogram_bins: Option<usize>,
    crosstalk: Option<Vec<Vec<f64>>>,
    qubits: Vec<RawPulse>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPulse {
    label: String,
    pulse_ns: f64,
    demod_ns: f64,
    total_ns: f64,
    snr: Option<f64>,
    separation_error: Option<f64>,
    t1_ns: Option<f64>,
    relaxation_error: Option<f64>,
    n_r0: Option<f64>,
    n_r1: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeakage {
    seed: Option<u64>,
    shots: Option<usize>,
    repeats: Option<usize>,
    m_max: Option<usize>,
    n_random: Option<usize>,
    shots_per_random: Option<usize>,
    readout_error: Option<[f64; 2]>,
    grid: Option<String>,
    points: Option<Vec<RawRates>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRates {
    label: String,
    leak_rate: f64,
    seep_rate: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMultiplex {
    variants: Option<Vec<String>>,
    calibrate: Option<bool>,
    rel_tol: Option<f64>,
    max_iter: Option<usize>,
    noise_photons: Option<f64>,
    per_band: Option<usize>,
    band_span_ghz: Option<f64>,
    ancilla_center_ghz: Option<f64>,
    data_center_ghz: Option<f64>,
    regimes: Option<Vec<RawRegime>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegime {
    variant: String,
    name: String,
    inductance_nh: f64,
}

// ---- resolved plans ----

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub filter: FilterParams,
    pub geometry: DeviceGeometry,
    pub channels: Vec<ReadoutChannel>,
    pub sweep: Option<SweepPlan>,
    pub readout: Option<ReadoutPlan>,
    pub leakage: Option<LeakagePlan>,
    pub multiplex: Option<MultiplexPlan>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BiasPoint {
    Flux(FluxBias),
    Inductance(f64),
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub points: Vec<BiasPoint>,
    pub freqs: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ReadoutPlan {
    pub seed: u64,
    pub shots: usize,
    pub bins: usize,
    pub labels: Vec<String>,
    pub specs: Vec<ReadoutPulseSpec>,
    pub crosstalk: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct LeakagePlan {
    pub seed: u64,
    pub shots: usize,
    pub repeats: usize,
    pub m_max: usize,
    pub n_random: usize,
    pub shots_per_random: usize,
    pub points: Vec<(String, LeakageChain)>,
}

#[derive(Debug, Clone)]
pub struct VariantPlan {
    pub kind: Variant,
    pub geometry: MultiplexGeometry,
    pub regimes: Vec<RegimeSpec>,
    pub targets: (f64, f64),
}

#[derive(Debug, Clone)]
pub struct MultiplexPlan {
    pub variants: Vec<VariantPlan>,
    pub calibrate: bool,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub noise_photons: f64,
}

impl RunConfig {
    /// Parses and validates every section present. `seed_override`
    /// replaces the seed of each stochastic section.
    pub fn from_toml(text: &str, seed_override: Option<u64>) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError(format!("parse error: {e}")))?;
        if raw.device.is_none()
            && raw.sweep.is_none()
            && raw.readout.is_none()
            && raw.leakage.is_none()
            && raw.multiplex.is_none()
        {
            return err("config has no sections");
        }
        let device = raw.device.unwrap_or_default();
        let filter = resolve_filter(device.filter.unwrap_or_default())?;
        let geometry = resolve_netlist(device.netlist.unwrap_or_default())?;
        let channels = match device.qubits {
            Some(q) => resolve_qubits(q)?,
            None => qubit_channels(),
        };
        Ok(Self {
            filter,
            geometry,
            channels,
            sweep: raw.sweep.map(resolve_sweep).transpose()?,
            readout: raw.readout.map(|r| resolve_readout(r, seed_override)).transpose()?,
            leakage: raw.leakage.map(|l| resolve_leakage(l, seed_override)).transpose()?,
            multiplex: raw.multiplex.map(resolve_multiplex).transpose()?,
        })
    }
}

fn resolve_filter(f: RawFilter) -> Result<FilterParams, ConfigError> {
    let c = FilterParams::calibrated();
    let ic = f.critical_current_ua.map_or(c.critical_current, |x| x * 1e-6);
    let f0 = f.bare_frequency_ghz.map_or(c.bare_frequency / (2.0 * PI), ghz);
    let lf0 = f.bare_inductance_nh.map_or(c.bare_inductance, |x| x * 1e-9);
    let lp = f.length_mm.map_or(c.physical_length, |x| x * 1e-3);
    let zf = f.impedance_ohm.unwrap_or(c.filter_impedance);
    let r0 = f.port_ohm.unwrap_or(c.port_resistance);
    let q_in = f.input_quality.unwrap_or(c.input_quality);
    for (name, v) in [
        ("device.filter.critical_current_ua", ic),
        ("device.filter.bare_frequency_ghz", f0),
        ("device.filter.bare_inductance_nh", lf0),
        ("device.filter.length_mm", lp),
        ("device.filter.impedance_ohm", zf),
        ("device.filter.port_ohm", r0),
        ("device.filter.input_quality", q_in),
    ] {
        positive(name, v)?;
    }
    FilterParams::identified(ic, f0, lf0, lp, zf, r0, q_in).map_err(|e| ConfigError(format!("device.filter: {e}")))
}

fn resolve_netlist(n: RawNetlist) -> Result<DeviceGeometry, ConfigError> {
    let mut g = DeviceGeometry::calibrated();
    if let Some(x) = n.bare_frequency_ghz {
        g.bare_frequency_hz = ghz(x);
    }
    if let Some(x) = n.impedance_ohm {
        g.filter_impedance = x;
    }
    if let Some(x) = n.input_stub_rad {
        g.input_stub_theta = x;
    }
    if let Some(x) = n.port_ohm {
        g.port_impedance = x;
    }
    if let Some(x) = n.resonator_impedance_ohm {
        g.resonator_impedance = x;
    }
    if let Some(rs) = n.resonators {
        unique("device.netlist.resonators", rs.iter().map(|r| r.label.as_str()))?;
        g.resonators = rs
            .into_iter()
            .map(|r| ResonatorTap {
                label: r.label,
                frequency_hz: ghz(r.frequency_ghz),
                coupling_capacitance: r.coupling_ff * 1e-15,
                tap_fraction: r.tap_fraction,
            })
            .collect();
    }
    g.validate().map_err(|e| ConfigError(format!("device.netlist: {e}")))?;
    Ok(g)
}

fn resolve_qubits(qs: Vec<RawQubit>) -> Result<Vec<ReadoutChannel>, ConfigError> {
    unique("device.qubits", qs.iter().map(|q| q.label.as_str()))?;
    qs.into_iter()
        .map(|q| {
            let ch = ReadoutChannel {
                label: q.label.clone(),
                qubit_frequency: ang_ghz(q.qubit_ghz),
                resonator_frequency: ang_ghz(q.resonator_ghz),
                dispersive_shift: ang_ghz(0.5 * q.two_chi_ghz),
                g_qr: q.g_qr_ghz.map_or(2.0 * PI * G_QR_HZ, ang_ghz),
                g_rf: q.g_rf_ghz.map_or(2.0 * PI * G_RF_HZ, ang_ghz),
                intrinsic_t1: positive(&format!("device.qubits '{}' t1_ns", q.label), q.t1_ns)? * 1e-9,
                readout_efficiency: q.efficiency,
                anharmonicity: ang_ghz(q.anharmonicity_ghz),
            };
            ch.validate().map_err(|e| ConfigError(format!("device.qubits '{}': {e}", q.label)))?;
            Ok(ch)
        })
        .collect()
}

fn resolve_sweep(s: RawSweep) -> Result<SweepPlan, ConfigError> {
    let mut points: Vec<BiasPoint> = Vec::new();
    for &phi in s.flux_biases.iter().flatten() {
        if !phi.is_finite() {
            return err(format!("sweep.flux_biases: {phi} is not finite"));
        }
        points.push(BiasPoint::Flux(FluxBias::from_phi0(phi)));
    }
    for &l in s.squid_inductances_nh.iter().flatten() {
        positive("sweep.squid_inductances_nh", l)?;
        points.push(BiasPoint::Inductance(l * 1e-9));
    }
    if points.is_empty() {
        return err("sweep: give flux_biases and/or squid_inductances_nh");
    }
    let lo = positive("sweep.f_start_ghz", s.f_start_ghz.unwrap_or(5.5))?;
    let hi = positive("sweep.f_stop_ghz", s.f_stop_ghz.unwrap_or(8.0))?;
    let n = s.points.unwrap_or(2001);
    if hi <= lo {
        return err("sweep: f_stop_ghz must exceed f_start_ghz");
    }
    if n < 11 {
        return err("sweep.points must be at least 11");
    }
    Ok(SweepPlan { points, freqs: linspace(ghz(lo), ghz(hi), n) })
}

fn required_seed(section: &str, seed: Option<u64>, seed_override: Option<u64>) -> Result<u64, ConfigError> {
    match seed_override.or(seed) {
        Some(s) => Ok(s),
        None => err(format!("{section}.seed is required")),
    }
}

fn resolve_readout(r: RawReadout, seed_override: Option<u64>) -> Result<ReadoutPlan, ConfigError> {
    let seed = required_seed("readout", r.seed, seed_override)?;
    let shots = r.shots.unwrap_or(100_000);
    if shots == 0 {
        return err("readout.shots must be >= 1");
    }
    let bins = r.histogram_bins.unwrap_or(100);
    if bins == 0 {
        return err("readout.histogram_bins must be >= 1");
    }
    if r.qubits.is_empty() {
        return err("readout: at least one [[readout.qubits]] entry required");
    }
    unique("readout.qubits", r.qubits.iter().map(|q| q.label.as_str()))?;
    let mut specs = Vec::new();
    for q in &r.qubits {
        let name = |field: &str| format!("readout qubit '{}': {field}", q.label);
        let demod = q.demod_ns * 1e-9;
        let snr = match (q.snr, q.separation_error) {
            (Some(_), Some(_)) => return err(name("give snr or separation_error, not both")),
            (Some(s), None) => s,
            (None, Some(e)) => {
                if !(e > 0.0 && e < 0.5) {
                    return err(name("separation_error must lie in (0, 0.5)"));
                }
                snr_for_separation_error(e).map_err(|e| ConfigError(name(&e.to_string())))?
            }
            (None, None) => return err(name("missing snr")),
        };
        let t1 = match (q.t1_ns, q.relaxation_error) {
            (Some(_), Some(_)) => return err(name("give t1_ns or relaxation_error, not both")),
            (Some(t), None) => positive(&name("t1_ns"), t)? * 1e-9,
            (None, Some(e)) => {
                if !(e > 0.0 && e < 0.5) {
                    return err(name("relaxation_error must lie in (0, 0.5)"));
                }
                t1_for_relaxation_error(demod, e).map_err(|e| ConfigError(name(&e.to_string())))?
            }
            (None, None) => return err(name("missing t1_ns or relaxation_error")),
        };
        let spec = ReadoutPulseSpec {
            pulse_length: q.pulse_ns * 1e-9,
            demod_length: demod,
            total_length: q.total_ns * 1e-9,
            n_r0: q.n_r0.unwrap_or(0.0),
            n_r1: q.n_r1.unwrap_or(0.0),
            t1_readout: t1,
            snr,
        };
        spec.validate().map_err(|e| ConfigError(name(&e.to_string())))?;
        specs.push(spec);
    }
    let n = specs.len();
    let crosstalk = r.crosstalk.unwrap_or_else(|| vec![vec![0.0; n]; n]);
    if crosstalk.len() != n || crosstalk.iter().any(|row| row.len() != n) {
        return err(format!("readout.crosstalk must be {n}×{n}"));
    }
    for (i, row) in crosstalk.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if !(c.is_finite() && c >= 0.0) || (i == j && c != 0.0) {
                return err(format!("readout.crosstalk[{i}][{j}] = {c}: need >= 0 with a zero diagonal"));
            }
        }
    }
    Ok(ReadoutPlan {
        seed,
        shots,
        bins,
        labels: r.qubits.into_iter().map(|q| q.label).collect(),
        specs,
        crosstalk,
    })
}

fn resolve_leakage(l: RawLeakage, seed_override: Option<u64>) -> Result<LeakagePlan, ConfigError> {
    let seed = required_seed("leakage", l.seed, seed_override)?;
    let readout_error = l.readout_error.unwrap_or([0.0, 0.0]);
    probability("leakage.readout_error[0]", readout_error[0])?;
    probability("leakage.readout_error[1]", readout_error[1])?;
    let mut points: Vec<(String, f64, f64)> = match l.grid.as_deref() {
        None => Vec::new(),
        Some("reference") => REFERENCE_RATES.iter().map(|(s, u, d)| (s.to_string(), *u, *d)).collect(),
        Some(other) => return err(format!("leakage.grid: unknown grid '{other}' (expected \"reference\")")),
    };
    for p in l.points.into_iter().flatten() {
        points.push((p.label, p.leak_rate, p.seep_rate));
    }
    if points.is_empty() {
        return err("leakage: give grid = \"reference\" and/or [[leakage.points]]");
    }
    unique("leakage.points", points.iter().map(|p| p.0.as_str()))?;
    let points = points
        .into_iter()
        .map(|(label, u, d)| {
            let chain = LeakageChain { readout_error, ..LeakageChain::new(u, d) };
            chain.validate().map_err(|e| ConfigError(format!("leakage point '{label}': {e}")))?;
            Ok((label, chain))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let plan = LeakagePlan {
        seed,
        shots: l.shots.unwrap_or(4000),
        repeats: l.repeats.unwrap_or(1),
        m_max: l.m_max.unwrap_or(150),
        n_random: l.n_random.unwrap_or(200),
        shots_per_random: l.shots_per_random.unwrap_or(20),
        points,
    };
    for (name, v) in [
        ("shots", plan.shots),
        ("repeats", plan.repeats),
        ("n_random", plan.n_random),
        ("shots_per_random", plan.shots_per_random),
    ] {
        if v == 0 {
            return err(format!("leakage.{name} must be >= 1"));
        }
    }
    if plan.m_max < 4 {
        return err("leakage.m_max must be >= 4");
    }
    Ok(plan)
}

fn parse_variant(s: &str) -> Result<Variant, ConfigError> {
    match s {
        "variable-bandwidth" | "variable" => Ok(Variant::VariableBandwidth),
        "fixed-bandwidth" | "fixed" => Ok(Variant::FixedBandwidth),
        _ => err(format!("multiplex: unknown variant '{s}'")),
    }
}

fn parse_regime(s: &str) -> Result<RegimeName, ConfigError> {
    match s {
        "ancilla-read-on" => Ok(RegimeName::AncillaReadOn),
        "data-read-on" => Ok(RegimeName::DataReadOn),
        "read-off" => Ok(RegimeName::ReadOff),
        _ => err(format!("multiplex: unknown regime '{s}'")),
    }
}

fn resolve_multiplex(m: RawMultiplex) -> Result<MultiplexPlan, ConfigError> {
    let names = m
        .variants
        .unwrap_or_else(|| vec!["variable-bandwidth".into(), "fixed-bandwidth".into()]);
    if names.is_empty() {
        return err("multiplex.variants is empty");
    }
    let kinds = names.iter().map(|s| parse_variant(s)).collect::<Result<Vec<_>, _>>()?;
    if kinds.iter().collect::<HashSet<_>>().len() != kinds.len() {
        return err("multiplex.variants lists a variant twice");
    }
    let mut custom: Vec<(Variant, RegimeSpec)> = Vec::new();
    for r in m.regimes.into_iter().flatten() {
        let kind = parse_variant(&r.variant)?;
        let name = parse_regime(&r.name)?;
        let spec = RegimeSpec::new(name, positive("multiplex.regimes.inductance_nh", r.inductance_nh)? * 1e-9)
            .map_err(|e| ConfigError(format!("multiplex: {e}")))?;
        if custom.iter().any(|(k, s)| *k == kind && s.name == name) {
            return err(format!("multiplex: regime '{}' given twice for {}", r.name, kind.name()));
        }
        custom.push((kind, spec));
    }
    let mut variants = Vec::new();
    for kind in kinds {
        let mut g = MultiplexGeometry::default_for(kind);
        if let Some(n) = m.per_band {
            g.per_band = n;
        }
        if let Some(x) = m.band_span_ghz {
            g.band_span_hz = ghz(x);
        }
        if let Some(x) = m.ancilla_center_ghz {
            g.ancilla_center_hz = ghz(x);
        }
        if let Some(x) = m.data_center_ghz {
            g.data_center_hz = ghz(x);
        }
        g.validate().map_err(|e| ConfigError(format!("multiplex ({}): {e}", kind.name())))?;
        let mine: Vec<RegimeSpec> = custom.iter().filter(|(k, _)| *k == kind).map(|(_, s)| *s).collect();
        let regimes = if mine.is_empty() { default_regimes(kind) } else { mine };
        variants.push(VariantPlan { kind, geometry: g, regimes, targets: default_targets(kind) });
    }
    let rel_tol = positive("multiplex.rel_tol", m.rel_tol.unwrap_or(0.05))?;
    let noise_photons = m.noise_photons.unwrap_or(5e-4);
    if !(noise_photons.is_finite() && noise_photons >= 0.0) {
        return err("multiplex.noise_photons must be >= 0");
    }
    Ok(MultiplexPlan {
        variants,
        calibrate: m.calibrate.unwrap_or(true),
        rel_tol,
        max_iter: m.max_iter.unwrap_or(8),
        noise_photons,
    })
}
