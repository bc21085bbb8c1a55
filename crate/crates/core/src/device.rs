//! Distributed-element model of the three-qubit chip: a λ/2 filter shorted
//! to ground through a short input stub on one end and through the SQUID on
//! the output-port end, with λ/4 readout resonators tapped near its center.

use std::f64::consts::PI;

use crate::channel::ReadoutChannel;
use crate::consts::ang;
use crate::error::{Error, Result};
use crate::measurement::{
    snr_for_fidelity, snr_for_multilevel_fidelity, snr_for_separation_error, t1_for_relaxation_error,
    ReadoutPulseSpec,
};
use crate::network::{branch_series_zero, CircuitNetwork, Element, LumpedKind, SideBranch};

/// SQUID inductance of the network's read-on setting (0.399 Φ0 at I_c = 0.66 µA).
pub const READ_ON_INDUCTANCE: f64 = 0.8e-9;

/// SQUID inductance at zero flux for I_c = 0.66 µA.
pub const READ_OFF_INDUCTANCE: f64 = 2.493_227e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ResonatorTap {
    pub label: String,
    /// Series resonance of the isolated branch, Hz.
    pub frequency_hz: f64,
    pub coupling_capacitance: f64,
    /// Position along the main filter line, 0 at the input end.
    pub tap_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceGeometry {
    /// Frequency at which stub plus main line are half a wavelength.
    pub bare_frequency_hz: f64,
    pub filter_impedance: f64,
    /// Electrical length of the shorted input stub at the bare frequency.
    pub input_stub_theta: f64,
    pub port_impedance: f64,
    pub resonator_impedance: f64,
    pub resonators: Vec<ResonatorTap>,
}

impl DeviceGeometry {
    /// Geometry calibrated so the filter passband spans ≈ 960 MHz at
    /// [`READ_ON_INDUCTANCE`] and ≈ 180 MHz at [`READ_OFF_INDUCTANCE`], with
    /// the three resonators of the chip near the voltage antinode.
    pub fn calibrated() -> Self {
        let tap = |label: &str, f: f64, frac: f64| ResonatorTap {
            label: label.into(),
            frequency_hz: f,
            coupling_capacitance: 3e-15,
            tap_fraction: frac,
        };
        Self {
            bare_frequency_hz: 7.4e9,
            filter_impedance: 55.0,
            input_stub_theta: 0.03,
            port_impedance: 50.0,
            resonator_impedance: 50.0,
            resonators: vec![
                tap("Q1", 6.284e9, 0.45),
                tap("Q2", 6.362e9, 0.5),
                tap("Q3", 6.449e9, 0.55),
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bare_frequency_hz", self.bare_frequency_hz),
            ("filter_impedance", self.filter_impedance),
            ("input_stub_theta", self.input_stub_theta),
            ("port_impedance", self.port_impedance),
            ("resonator_impedance", self.resonator_impedance),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} = {v} must be > 0")));
            }
        }
        if self.input_stub_theta >= PI {
            return Err(Error::param("input stub longer than the filter"));
        }
        for r in &self.resonators {
            if !(r.tap_fraction > 0.0 && r.tap_fraction < 1.0) {
                return Err(Error::param(format!(
                    "{}: tap fraction {} outside (0, 1)",
                    r.label, r.tap_fraction
                )));
            }
            if !(r.coupling_capacitance > 0.0 && r.frequency_hz > 0.0) {
                return Err(Error::param(format!("{}: coupling and frequency must be > 0", r.label)));
            }
        }
        Ok(())
    }

    /// Full network at SQUID inductance `l_s`.
    pub fn network(&self, l_s: f64) -> Result<CircuitNetwork> {
        self.validate()?;
        let taps: Vec<Tap> = self
            .resonators
            .iter()
            .map(|r| {
                Ok(Tap {
                    fraction: r.tap_fraction,
                    branch: resonator_branch(
                        &r.label,
                        r.frequency_hz,
                        r.coupling_capacitance,
                        self.resonator_impedance,
                    )?,
                })
            })
            .collect::<Result<_>>()?;
        let f0 = self.bare_frequency_hz;
        let main = PI - self.input_stub_theta;
        let mut net = tapped_line(Vec::new(), self.filter_impedance, main, f0, taps, self.port_impedance);
        net.side_branches.insert(
            0,
            SideBranch::shorted_stub("input-stub", 0, self.filter_impedance, self.input_stub_theta, f0),
        );
        net.elements.push(Element::lumped(LumpedKind::ShuntInductor, l_s));
        net.validate()?;
        Ok(net)
    }

    /// The filter alone, without resonators.
    pub fn filter_network(&self, l_s: f64) -> Result<CircuitNetwork> {
        let mut g = self.clone();
        g.resonators.clear();
        g.network(l_s)
    }

    /// Index of the resonator branch labelled `label` in [`Self::network`].
    pub fn branch_index(&self, label: &str) -> Option<usize> {
        self.resonators.iter().position(|r| r.label == label).map(|_| {
            let mut sorted: Vec<&ResonatorTap> = self.resonators.iter().collect();
            sorted.sort_by(|a, b| a.tap_fraction.total_cmp(&b.tap_fraction));
            1 + sorted.iter().position(|r| r.label == label).expect("present")
        })
    }
}

pub(crate) struct Tap {
    pub fraction: f64,
    pub branch: SideBranch,
}

/// Line of total electrical length `theta_total` (at `f_ref`) with branches
/// tapped at fractional positions, appended after `prefix`. Branch positions
/// are filled in here.
pub(crate) fn tapped_line(
    prefix: Vec<Element>,
    z: f64,
    theta_total: f64,
    f_ref: f64,
    mut taps: Vec<Tap>,
    port: f64,
) -> CircuitNetwork {
    taps.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    let mut elements = prefix;
    let mut branches = Vec::new();
    let mut pos = 0.0;
    for t in taps {
        elements.push(Element::line(z, (t.fraction - pos) * theta_total, f_ref));
        pos = t.fraction;
        let mut b = t.branch;
        b.position = elements.len();
        branches.push(b);
    }
    elements.push(Element::line(z, (1.0 - pos) * theta_total, f_ref));
    CircuitNetwork {
        elements,
        input_port_impedance: port,
        output_port_impedance: port,
        side_branches: branches,
    }
}

/// λ/4 branch whose isolated series resonance (coupling capacitor plus
/// shorted line) sits at `f_target`.
pub fn resonator_branch(label: &str, f_target: f64, c_c: f64, z_r: f64) -> Result<SideBranch> {
    let mut f_q = f_target;
    for _ in 0..60 {
        let b = SideBranch::quarter_wave_resonator(label, 0, c_c, z_r, f_q);
        let fz = branch_series_zero(&b, 0.7 * f_q, f_q * (1.0 - 1e-12)).ok_or_else(|| {
            Error::NotFound(format!("{label}: no series resonance below {f_q} Hz"))
        })?;
        let err = f_target - fz;
        f_q += err;
        if err.abs() < 1e-3 {
            break;
        }
    }
    Ok(SideBranch::quarter_wave_resonator(label, 0, c_c, z_r, f_q))
}

/// One row of the qubit parameter table, in the units it is printed in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QubitRow {
    pub label: &'static str,
    pub qubit_ghz: f64,
    pub resonator_ghz: f64,
    /// Full dispersive shift `2χ`, MHz.
    pub two_chi_mhz: f64,
    pub anharmonicity_mhz: f64,
    pub t1_us: f64,
    pub efficiency: f64,
}

pub const QUBIT_TABLE: [QubitRow; 3] = [
    QubitRow { label: "Q1", qubit_ghz: 4.696, resonator_ghz: 6.284, two_chi_mhz: 15.0, anharmonicity_mhz: -196.0, t1_us: 47.24, efficiency: 0.18 },
    QubitRow { label: "Q2", qubit_ghz: 4.615, resonator_ghz: 6.362, two_chi_mhz: 13.0, anharmonicity_mhz: -206.0, t1_us: 47.78, efficiency: 0.29 },
    QubitRow { label: "Q3", qubit_ghz: 4.681, resonator_ghz: 6.449, two_chi_mhz: 13.0, anharmonicity_mhz: -193.0, t1_us: 36.11, efficiency: 0.32 },
];

/// Resonator-filter coupling `g_rf/2π`, Hz.
pub const G_RF_HZ: f64 = 50e6;

/// Filter quality factor in the read-on setting.
pub const READ_ON_Q_F: f64 = 7.0;

/// `g_qr/2π` (Hz) that puts Q2's Purcell-limited T1 at 25 µs with `Q_f = 7`,
/// the filter centered on the resonator, and `κ_eff` the read-on effective
/// linewidth. Shared by all three qubits.
pub const G_QR_HZ: f64 = 222.705_024e6;

impl QubitRow {
    pub fn channel(&self) -> ReadoutChannel {
        ReadoutChannel {
            label: self.label.into(),
            qubit_frequency: ang(self.qubit_ghz * 1e9),
            resonator_frequency: ang(self.resonator_ghz * 1e9),
            dispersive_shift: ang(0.5 * self.two_chi_mhz * 1e6),
            g_qr: ang(G_QR_HZ),
            g_rf: ang(G_RF_HZ),
            intrinsic_t1: self.t1_us * 1e-6,
            readout_efficiency: self.efficiency,
            anharmonicity: ang(self.anharmonicity_mhz * 1e6),
        }
    }
}

pub fn qubit_channels() -> Vec<ReadoutChannel> {
    QUBIT_TABLE.iter().map(QubitRow::channel).collect()
}

/// Error-budget row: fractions, not percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetRow {
    pub label: &'static str,
    pub readout_error: f64,
    pub relaxation_error: f64,
    pub separation_error: f64,
}

/// Individual readout with 100 ns pulses, 200 ns demodulation, 250 ns total.
pub const BUDGET_INDIVIDUAL: [BudgetRow; 3] = [
    BudgetRow { label: "Q1", readout_error: 0.0040, relaxation_error: 0.0046, separation_error: 0.0003 },
    BudgetRow { label: "Q2", readout_error: 0.0039, relaxation_error: 0.0038, separation_error: 0.00017 },
    BudgetRow { label: "Q3", readout_error: 0.0046, relaxation_error: 0.0040, separation_error: 0.00004 },
];

/// Simultaneous three-qubit readout, same timings.
pub const BUDGET_SIMULTANEOUS: [BudgetRow; 3] = [
    BudgetRow { label: "Q1", readout_error: 0.0044, relaxation_error: 0.0050, separation_error: 0.0017 },
    BudgetRow { label: "Q2", readout_error: 0.0050, relaxation_error: 0.0042, separation_error: 0.0004 },
    BudgetRow { label: "Q3", readout_error: 0.0048, relaxation_error: 0.0040, separation_error: 0.00006 },
];

/// Measured T1 of Q2 during the 100 ns readout.
pub const Q2_READOUT_T1: f64 = 26e-6;

impl BudgetRow {
    /// Pulse spec with SNR inverted from the separation error and `T1_r`
    /// from the relaxation error (Q2 individual uses its measured 26 µs).
    pub fn spec(&self, simultaneous: bool) -> Result<ReadoutPulseSpec> {
        let demod = 200e-9;
        let t1 = if self.label == "Q2" && !simultaneous {
            Q2_READOUT_T1
        } else {
            t1_for_relaxation_error(demod, self.relaxation_error)?
        };
        let (n_r0, n_r1) = if self.label == "Q2" { (9.6, 1.8) } else { (0.0, 0.0) };
        let spec = ReadoutPulseSpec {
            pulse_length: 100e-9,
            demod_length: demod,
            total_length: 250e-9,
            n_r0,
            n_r1,
            t1_readout: t1,
            snr: snr_for_separation_error(self.separation_error)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Single-shot fidelities with 45 ns pulses and 200 ns demodulation and
/// total length: `(label, fidelity, n_r0, n_r1)`.
pub const FAST_READOUT: [(&str, f64, f64, f64); 3] = [
    ("Q1", 0.9956, 17.3, 2.0),
    ("Q2", 0.9952, 13.8, 2.7),
    ("Q3", 0.9934, 8.5, 3.8),
];

/// Specs for the 45 ns profile. No readout-induced T1 was characterized for
/// these pulses, so `T1_r` is the qubit's idle T1; SNR is solved for the
/// printed fidelity.
pub fn fast_readout_specs() -> Result<Vec<ReadoutPulseSpec>> {
    FAST_READOUT
        .iter()
        .zip(QUBIT_TABLE.iter())
        .map(|(&(_, f, n0, n1), row)| {
            let base = ReadoutPulseSpec {
                pulse_length: 45e-9,
                demod_length: 200e-9,
                total_length: 200e-9,
                n_r0: n0,
                n_r1: n1,
                t1_readout: row.t1_us * 1e-6,
                snr: 0.0,
            };
            Ok(ReadoutPulseSpec { snr: snr_for_fidelity(&base, f)?, ..base })
        })
        .collect()
}

/// Q2 with `|1⟩ → |2⟩` promotion: 50 ns pulse, 120 ns demodulation, SNR
/// solved so the promoted fidelity is 99.87%.
pub fn promotion_spec() -> Result<ReadoutPulseSpec> {
    let base = ReadoutPulseSpec {
        pulse_length: 50e-9,
        demod_length: 120e-9,
        total_length: 250e-9,
        n_r0: 0.0,
        n_r1: 0.0,
        t1_readout: Q2_READOUT_T1,
        snr: 0.0,
    };
    let snr = snr_for_multilevel_fidelity(&base, 0.9987)?;
    Ok(ReadoutPulseSpec { snr, ..base })
}
