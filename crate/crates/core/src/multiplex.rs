//! Dual-band multiplexed readout: ancilla and data resonator groups on one
//! filter, compared between a variable-bandwidth filter (SQUID next to the
//! output port) and a fixed-bandwidth one (SQUID at the far shorted end, port
//! tapped at a fixed electrical position).

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::channel::{photon_dephasing_rate, purcell_t1, ReadoutChannel};
use crate::consts::ang;
use crate::device::{resonator_branch, tapped_line, Tap};
use crate::error::{Error, Result};
use crate::fit::ResonancePeak;
use crate::network::{CircuitNetwork, Element, LumpedKind, SideBranch};
use crate::spectroscopy::{branch_resonance, filter_peak, ZoomOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    VariableBandwidth,
    FixedBandwidth,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::VariableBandwidth => "variable-bandwidth",
            Variant::FixedBandwidth => "fixed-bandwidth",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    Ancilla,
    Data,
}

impl Band {
    pub fn name(self) -> &'static str {
        match self {
            Band::Ancilla => "ancilla",
            Band::Data => "data",
        }
    }

    fn prefix(self) -> char {
        match self {
            Band::Ancilla => 'A',
            Band::Data => 'D',
        }
    }

    pub fn other(self) -> Band {
        match self {
            Band::Ancilla => Band::Data,
            Band::Data => Band::Ancilla,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegimeName {
    AncillaReadOn,
    DataReadOn,
    ReadOff,
}

impl RegimeName {
    pub fn name(self) -> &'static str {
        match self {
            RegimeName::AncillaReadOn => "ancilla-read-on",
            RegimeName::DataReadOn => "data-read-on",
            RegimeName::ReadOff => "read-off",
        }
    }

    /// The regime in which `band` is read out.
    pub fn read_on(band: Band) -> Self {
        match band {
            Band::Ancilla => RegimeName::AncillaReadOn,
            Band::Data => RegimeName::DataReadOn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeSpec {
    pub name: RegimeName,
    pub squid_inductance: f64,
}

impl RegimeSpec {
    pub fn new(name: RegimeName, squid_inductance: f64) -> Result<Self> {
        if !(squid_inductance.is_finite() && squid_inductance > 0.0) {
            return Err(Error::param(format!(
                "{}: inductance {squid_inductance} must be > 0",
                name.name()
            )));
        }
        Ok(Self { name, squid_inductance })
    }
}

/// Regime inductances of the dual-band study for each variant.
pub fn default_regimes(kind: Variant) -> Vec<RegimeSpec> {
    let l = match kind {
        Variant::VariableBandwidth => [0.65e-9, 0.18e-9, 0.04e-9],
        Variant::FixedBandwidth => [0.48e-9, 0.16e-9, 0.04e-9],
    };
    vec![
        RegimeSpec { name: RegimeName::AncillaReadOn, squid_inductance: l[0] },
        RegimeSpec { name: RegimeName::DataReadOn, squid_inductance: l[1] },
        RegimeSpec { name: RegimeName::ReadOff, squid_inductance: l[2] },
    ]
}

/// Read-on linewidth means (Hz) the coupling calibration aims for.
pub fn default_targets(kind: Variant) -> (f64, f64) {
    match kind {
        Variant::VariableBandwidth => (15.3e6, 4.7e6),
        Variant::FixedBandwidth => (13.4e6, 6.3e6),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexGeometry {
    /// Frequency at which the filter is half a wavelength.
    pub bare_frequency_hz: f64,
    pub filter_impedance: f64,
    /// Shorted stub length: input stub (variable) or port-to-short
    /// section (fixed), radians at the bare frequency.
    pub stub_theta: f64,
    /// Weak input coupling of the fixed variant, farads.
    pub input_capacitance: f64,
    pub port_impedance: f64,
    pub resonator_impedance: f64,
    pub ancilla_center_hz: f64,
    pub data_center_hz: f64,
    pub per_band: usize,
    /// Full spread of each band's resonator frequencies.
    pub band_span_hz: f64,
    /// Tap fractions spanned by the resonators, interleaved ancilla/data.
    pub tap_range: (f64, f64),
    pub ancilla_coupling: f64,
    pub data_coupling: f64,
    pub include_ancilla: bool,
    pub include_data: bool,
}

/// One resonator of the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorSlot {
    pub label: String,
    pub band: Band,
    pub frequency_hz: f64,
    pub tap_fraction: f64,
    pub coupling_capacitance: f64,
}

impl MultiplexGeometry {
    pub fn default_for(kind: Variant) -> Self {
        let common = Self {
            bare_frequency_hz: 7.5e9,
            filter_impedance: 33.0,
            stub_theta: 0.2,
            input_capacitance: 3e-15,
            port_impedance: 50.0,
            resonator_impedance: 50.0,
            ancilla_center_hz: 6.25e9,
            data_center_hz: 6.95e9,
            per_band: 4,
            band_span_hz: 200e6,
            tap_range: (0.35, 0.65),
            ancilla_coupling: 14e-15,
            data_coupling: 5e-15,
            include_ancilla: true,
            include_data: true,
        };
        match kind {
            Variant::VariableBandwidth => common,
            Variant::FixedBandwidth => Self {
                bare_frequency_hz: 7.4e9,
                filter_impedance: 36.6,
                stub_theta: 0.5,
                ancilla_coupling: 9e-15,
                data_coupling: 6e-15,
                ..common
            },
        }
    }

    pub fn coupling(&self, band: Band) -> f64 {
        match band {
            Band::Ancilla => self.ancilla_coupling,
            Band::Data => self.data_coupling,
        }
    }

    pub fn center(&self, band: Band) -> f64 {
        match band {
            Band::Ancilla => self.ancilla_center_hz,
            Band::Data => self.data_center_hz,
        }
    }

    /// Frequency step between neighbors within a band.
    pub fn in_band_spacing(&self) -> f64 {
        if self.per_band > 1 {
            self.band_span_hz / (self.per_band - 1) as f64
        } else {
            f64::INFINITY
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bare_frequency_hz", self.bare_frequency_hz),
            ("filter_impedance", self.filter_impedance),
            ("stub_theta", self.stub_theta),
            ("input_capacitance", self.input_capacitance),
            ("port_impedance", self.port_impedance),
            ("resonator_impedance", self.resonator_impedance),
            ("ancilla_center_hz", self.ancilla_center_hz),
            ("data_center_hz", self.data_center_hz),
            ("ancilla_coupling", self.ancilla_coupling),
            ("data_coupling", self.data_coupling),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} = {v} must be > 0")));
            }
        }
        if self.per_band == 0 {
            return Err(Error::param("per_band must be at least 1"));
        }
        if !(self.band_span_hz >= 0.0) {
            return Err(Error::param("band_span_hz must be >= 0"));
        }
        if self.stub_theta >= PI {
            return Err(Error::param("stub longer than the filter"));
        }
        let (lo, hi) = self.tap_range;
        if !(lo > 0.0 && hi < 1.0 && lo < hi) {
            return Err(Error::param(format!("tap range ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
        }
        let gap = (self.data_center_hz - self.ancilla_center_hz).abs();
        if gap <= self.band_span_hz {
            return Err(Error::param(format!(
                "bands overlap: centers {gap} Hz apart with {} Hz span",
                self.band_span_hz
            )));
        }
        if !(self.include_ancilla || self.include_data) {
            return Err(Error::param("at least one band must be included"));
        }
        Ok(())
    }

    /// Resonators sorted by tap position. Ancilla and data alternate along
    /// the line, each band ascending in frequency.
    pub fn resonators(&self) -> Vec<ResonatorSlot> {
        let n = 2 * self.per_band;
        let (lo, hi) = self.tap_range;
        let frac = |k: usize| {
            if n == 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        };
        let freq = |band: Band, i: usize| {
            if self.per_band == 1 {
                self.center(band)
            } else {
                self.center(band) - 0.5 * self.band_span_hz + self.in_band_spacing() * i as f64
            }
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..self.per_band {
            for (band, k, keep) in [
                (Band::Ancilla, 2 * i, self.include_ancilla),
                (Band::Data, 2 * i + 1, self.include_data),
            ] {
                if keep {
                    out.push(ResonatorSlot {
                        label: format!("{}{i}", band.prefix()),
                        band,
                        frequency_hz: freq(band, i),
                        tap_fraction: frac(k),
                        coupling_capacitance: self.coupling(band),
                    });
                }
            }
        }
        out
    }

    /// Same layout with one band's resonators removed.
    pub fn without_band(&self, band: Band) -> Self {
        let mut g = self.clone();
        match band {
            Band::Ancilla => g.include_ancilla = false,
            Band::Data => g.include_data = false,
        }
        g
    }
}

/// Network of `kind` at SQUID inductance `l_s`.
pub fn build_variant(kind: Variant, geom: &MultiplexGeometry, l_s: f64) -> Result<CircuitNetwork> {
    geom.validate()?;
    if !(l_s.is_finite() && l_s > 0.0) {
        return Err(Error::param(format!("SQUID inductance {l_s} must be > 0")));
    }
    let taps: Vec<Tap> = geom
        .resonators()
        .iter()
        .map(|r| {
            Ok(Tap {
                fraction: r.tap_fraction,
                branch: resonator_branch(
                    &r.label,
                    r.frequency_hz,
                    r.coupling_capacitance,
                    geom.resonator_impedance,
                )?,
            })
        })
        .collect::<Result<_>>()?;
    let f0 = geom.bare_frequency_hz;
    let z = geom.filter_impedance;
    let main = PI - geom.stub_theta;
    let net = match kind {
        Variant::VariableBandwidth => {
            let mut net = tapped_line(Vec::new(), z, main, f0, taps, geom.port_impedance);
            net.side_branches
                .insert(0, SideBranch::shorted_stub("stub", 0, z, geom.stub_theta, f0));
            net.elements.push(Element::lumped(LumpedKind::ShuntInductor, l_s));
            net
        }
        Variant::FixedBandwidth => {
            let prefix = vec![
                Element::lumped(LumpedKind::SeriesCapacitor, geom.input_capacitance),
                Element::lumped(LumpedKind::ShuntInductor, l_s),
            ];
            let mut net = tapped_line(prefix, z, main, f0, taps, geom.port_impedance);
            let end = net.elements.len();
            net.side_branches
                .push(SideBranch::shorted_stub("stub", end, z, geom.stub_theta, f0));
            net
        }
    };
    net.validate()?;
    Ok(net)
}

/// The filter of `kind` without any resonators.
pub fn build_filter(kind: Variant, geom: &MultiplexGeometry, l_s: f64) -> Result<CircuitNetwork> {
    let net = build_variant(kind, geom, l_s)?;
    Ok(net.without_branches(|b| b.label == "stub"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorLines {
    pub label: String,
    pub band: Band,
    pub frequency_hz: f64,
    /// Extracted FWHM per regime, in the report's regime order.
    pub linewidth_hz: Vec<f64>,
    /// Per regime: the line was not resolved and the value is an upper bound.
    pub upper_bound: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub variant: Variant,
    pub regimes: Vec<RegimeSpec>,
    pub resonators: Vec<ResonatorLines>,
    /// Filter passband per regime, when a fit succeeded.
    pub filter: Vec<Option<ResonancePeak>>,
    /// All regimes share one inductance.
    pub degenerate: bool,
}

impl BandReport {
    pub fn regime_index(&self, name: RegimeName) -> Option<usize> {
        self.regimes.iter().position(|r| r.name == name)
    }

    /// Arithmetic mean of the band's linewidths in a regime, Hz.
    pub fn mean(&self, band: Band, regime: RegimeName) -> Option<f64> {
        let k = self.regime_index(regime)?;
        let v: Vec<f64> = self
            .resonators
            .iter()
            .filter(|r| r.band == band)
            .map(|r| r.linewidth_hz[k])
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Own read-on mean over read-off mean.
    pub fn on_off_ratio(&self, band: Band) -> Option<f64> {
        Some(self.mean(band, RegimeName::read_on(band))? / self.mean(band, RegimeName::ReadOff)?)
    }

    /// Any line of the band flagged as unresolved in the regime.
    pub fn has_upper_bound(&self, band: Band, regime: RegimeName) -> bool {
        self.regime_index(regime).is_some_and(|k| {
            self.resonators
                .iter()
                .any(|r| r.band == band && r.upper_bound[k])
        })
    }

    /// The band is broadest in its own read-on regime and narrowest in the
    /// other band's read-on regime (ancilla: own on > data on > off; data:
    /// own on > off > ancilla on).
    pub fn ordering_holds(&self, band: Band) -> bool {
        let own = self.mean(band, RegimeName::read_on(band));
        let other = self.mean(band, RegimeName::read_on(band.other()));
        let off = self.mean(band, RegimeName::ReadOff);
        match (own, other, off) {
            (Some(own), Some(other), Some(off)) => match band {
                Band::Ancilla => own > other && other > off,
                Band::Data => own > off && off > other,
            },
            _ => false,
        }
    }

    /// The band idles narrower than it reads out, in the other band's read-on.
    pub fn protects(&self, band: Band) -> bool {
        match (
            self.mean(band, RegimeName::read_on(band.other())),
            self.mean(band, RegimeName::read_on(band)),
        ) {
            (Some(idle), Some(own)) => idle < own,
            _ => false,
        }
    }

    /// Band × regime grid of mean linewidths in MHz; `<` marks upper bounds.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<10}", self.variant.name().split('-').next().unwrap_or(""));
        for r in &self.regimes {
            let _ = write!(s, "{:>18}", r.name.name());
        }
        s.push('\n');
        for band in [Band::Ancilla, Band::Data] {
            if !self.resonators.iter().any(|r| r.band == band) {
                continue;
            }
            let _ = write!(s, "{:<10}", band.name());
            for r in &self.regimes {
                let m = self.mean(band, r.name).unwrap_or(f64::NAN) / 1e6;
                let flag = if self.has_upper_bound(band, r.name) { "<" } else { "" };
                let _ = write!(s, "{:>18}", format!("{flag}{m:.3} MHz"));
            }
            s.push('\n');
        }
        s
    }
}

/// Each named regime may appear at most once; a partial list gives a report
/// with fewer columns. Returns whether all inductances coincide.
fn check_regimes(regimes: &[RegimeSpec]) -> Result<bool> {
    if regimes.is_empty() {
        return Err(Error::param("at least one regime required"));
    }
    for name in [RegimeName::AncillaReadOn, RegimeName::DataReadOn, RegimeName::ReadOff] {
        let n = regimes.iter().filter(|r| r.name == name).count();
        if n > 1 {
            return Err(Error::param(format!("regime '{}' given {n} times", name.name())));
        }
    }
    for r in regimes {
        RegimeSpec::new(r.name, r.squid_inductance)?;
    }
    let l0 = regimes[0].squid_inductance;
    Ok(regimes.iter().all(|r| r.squid_inductance == l0))
}

/// Window and resolution for resonator lines: the zoom never reaches past
/// the midpoint to a neighbor within the band.
pub fn zoom_options(geom: &MultiplexGeometry) -> ZoomOptions {
    let d = ZoomOptions::default();
    ZoomOptions {
        max_half_span_hz: d.max_half_span_hz.min(0.45 * geom.in_band_spacing()),
        ..d
    }
}

/// Sweeps every resonator in every regime and extracts its linewidth.
pub fn regime_report(kind: Variant, geom: &MultiplexGeometry, regimes: &[RegimeSpec]) -> Result<BandReport> {
    let degenerate = check_regimes(regimes)?;
    geom.validate()?;
    let slots = geom.resonators();
    let opts = zoom_options(geom);
    let nets: Vec<CircuitNetwork> = regimes
        .iter()
        .map(|r| build_variant(kind, geom, r.squid_inductance))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> = (0..regimes.len())
        .flat_map(|k| (0..slots.len()).map(move |j| (k, j)))
        .collect();
    let lines = jobs
        .par_iter()
        .map(|&(k, j)| {
            let net = &nets[k];
            let idx = net
                .side_branches
                .iter()
                .position(|b| b.label == slots[j].label)
                .expect("resonator branch present");
            branch_resonance(net, idx, None, opts)
        })
        .collect::<Result<Vec<_>>>()?;
    let filter = regimes
        .par_iter()
        .map(|r| {
            let net = build_filter(kind, geom, r.squid_inductance).ok()?;
            let hi = 1.3 * geom.bare_frequency_hz;
            filter_peak(&net, 0.5 * geom.bare_frequency_hz, hi, 4001).ok()
        })
        .collect();
    let resonators = slots
        .iter()
        .enumerate()
        .map(|(j, s)| {
            let per: Vec<_> = (0..regimes.len()).map(|k| &lines[k * slots.len() + j]).collect();
            ResonatorLines {
                label: s.label.clone(),
                band: s.band,
                frequency_hz: s.frequency_hz,
                linewidth_hz: per.iter().map(|l| l.linewidth_hz).collect(),
                upper_bound: per.iter().map(|l| l.upper_bound).collect(),
            }
        })
        .collect();
    Ok(BandReport {
        variant: kind,
        regimes: regimes.to_vec(),
        resonators,
        filter,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub geometry: MultiplexGeometry,
    pub report: BandReport,
    pub iterations: usize,
}

/// Scales each band's coupling capacitor (one knob per band) until its
/// read-on mean linewidth matches `targets = (ancilla, data)` in Hz within
/// `rel_tol`. Linewidths scale close to `C_c²`, so each step applies
/// `C ← C·√(target/measured)`.
pub fn calibrate_couplings(
    kind: Variant,
    geom: &MultiplexGeometry,
    regimes: &[RegimeSpec],
    targets: (f64, f64),
    rel_tol: f64,
    max_iter: usize,
) -> Result<Calibration> {
    if !(targets.0 > 0.0 && targets.1 > 0.0) {
        return Err(Error::param("calibration targets must be > 0"));
    }
    let mut g = geom.clone();
    let mut report = regime_report(kind, &g, regimes)?;
    for it in 0..max_iter {
        let mut done = true;
        for (band, target) in [(Band::Ancilla, targets.0), (Band::Data, targets.1)] {
            let Some(m) = report.mean(band, RegimeName::read_on(band)) else {
                continue;
            };
            if (m / target - 1.0).abs() > rel_tol {
                done = false;
                let scale = (target / m).sqrt();
                match band {
                    Band::Ancilla => g.ancilla_coupling *= scale,
                    Band::Data => g.data_coupling *= scale,
                }
            }
        }
        if done {
            return Ok(Calibration { geometry: g, report, iterations: it });
        }
        report = regime_report(kind, &g, regimes)?;
    }
    Ok(Calibration { geometry: g, report, iterations: max_iter })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtectionRow {
    pub band: Band,
    pub on_off_ratio: f64,
    /// Mean linewidth while the other band is read out, Hz.
    pub idle_linewidth_hz: f64,
    /// Photon-shot-noise dephasing rate while idle, 1/s.
    pub idle_dephasing_rate: f64,
    /// Purcell-limited T1 while idle, when the filter passband was fitted.
    pub idle_purcell_t1: Option<f64>,
}

/// Per band: ON/OFF ratio and the idle-qubit dephasing and Purcell T1 during
/// the other band's read-on. Each band borrows the channel whose resonator
/// lies nearest its center, moved rigidly (qubit and resonator together) so
/// the resonator sits at the band center.
pub fn protection_summary(
    report: &BandReport,
    geom: &MultiplexGeometry,
    channels: &[ReadoutChannel],
    n_noise: f64,
) -> Result<Vec<ProtectionRow>> {
    let mut rows = Vec::new();
    for band in [Band::Ancilla, Band::Data] {
        let Some(ratio) = report.on_off_ratio(band) else {
            continue;
        };
        let idle_regime = RegimeName::read_on(band.other());
        let idle = report.mean(band, idle_regime).unwrap_or(f64::NAN);
        let center = ang(geom.center(band));
        let ch = channels
            .iter()
            .min_by(|a, b| {
                let da = (a.resonator_frequency - center).abs();
                let db = (b.resonator_frequency - center).abs();
                da.total_cmp(&db)
            })
            .map(|c| {
                let shift = center - c.resonator_frequency;
                ReadoutChannel {
                    qubit_frequency: c.qubit_frequency + shift,
                    resonator_frequency: center,
                    ..c.clone()
                }
            });
        let (rate, t1) = match ch {
            Some(ch) => {
                let rate = photon_dephasing_rate(&ch, ang(idle), n_noise)?;
                let t1 = report
                    .regime_index(idle_regime)
                    .and_then(|k| report.filter[k])
                    .map(|p| {
                        let q_f = p.center_frequency / p.linewidth_fwhm;
                        purcell_t1(&ch, ang(p.center_frequency), q_f, ang(idle))
                    })
                    .transpose()?;
                (rate, t1)
            }
            None => (f64::NAN, None),
        };
        rows.push(ProtectionRow {
            band,
            on_off_ratio: ratio,
            idle_linewidth_hz: idle,
            idle_dephasing_rate: rate,
            idle_purcell_t1: t1,
        });
    }
    Ok(rows)
}
