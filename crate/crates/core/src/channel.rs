//! Per-qubit readout-channel physics in closed form. Frequencies and rates
//! are angular (rad/s) unless a name says otherwise.

use crate::consts::{HBAR, PHI0};
use crate::error::{Error, Result};
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutChannel {
    pub label: String,
    pub qubit_frequency: f64,
    pub resonator_frequency: f64,
    /// Half of the full state-dependent shift `2χ`.
    pub dispersive_shift: f64,
    pub g_qr: f64,
    pub g_rf: f64,
    pub intrinsic_t1: f64,
    pub readout_efficiency: f64,
    /// Carried as metadata only.
    pub anharmonicity: f64,
}

impl ReadoutChannel {
    pub fn validate(&self) -> Result<()> {
        if !(self.qubit_frequency > 0.0 && self.qubit_frequency < self.resonator_frequency) {
            return Err(Error::param(format!(
                "{}: need 0 < ω_q < ω_r",
                self.label
            )));
        }
        if !(self.readout_efficiency > 0.0 && self.readout_efficiency <= 1.0) {
            return Err(Error::param(format!("{}: η must lie in (0, 1]", self.label)));
        }
        if self.dispersive_shift == 0.0 || !self.dispersive_shift.is_finite() {
            return Err(Error::param(format!("{}: χ must be non-zero", self.label)));
        }
        if !(self.intrinsic_t1 > 0.0) {
            return Err(Error::param(format!("{}: T1 must be > 0", self.label)));
        }
        Ok(())
    }
}

/// `κ_r = (4 g_rf²/κ_f) / (1 + [2(ω_r − ω_f)/κ_f]²)`.
pub fn effective_linewidth(ch: &ReadoutChannel, omega_f: f64, kappa_f: f64) -> Result<f64> {
    if !(kappa_f > 0.0) {
        return Err(Error::param(format!("κ_f = {kappa_f} must be > 0")));
    }
    let x = 2.0 * (ch.resonator_frequency - omega_f) / kappa_f;
    Ok(4.0 * ch.g_rf * ch.g_rf / kappa_f / (1.0 + x * x))
}

/// `T1 = 4 Δ_qr² Δ_qf² Q_f² / (g_qr² ω_q² κ_eff)`.
pub fn purcell_t1(ch: &ReadoutChannel, omega_f: f64, q_f: f64, kappa_eff: f64) -> Result<f64> {
    let d_qr = ch.qubit_frequency - ch.resonator_frequency;
    let d_qf = ch.qubit_frequency - omega_f;
    if d_qr == 0.0 || d_qf == 0.0 {
        return Err(Error::Divergence {
            what: ch.label.clone(),
            detail: "qubit on resonance with resonator or filter".into(),
        });
    }
    if !(kappa_eff > 0.0 && q_f > 0.0) {
        return Err(Error::param("κ_eff and Q_f must be > 0"));
    }
    let wq = ch.qubit_frequency;
    Ok(4.0 * d_qr * d_qr * d_qf * d_qf * q_f * q_f / (ch.g_qr * ch.g_qr * wq * wq * kappa_eff))
}

/// `g_qr` that makes [`purcell_t1`] equal `target_t1`.
pub fn g_qr_for_t1(ch: &ReadoutChannel, omega_f: f64, q_f: f64, kappa_eff: f64, target_t1: f64) -> Result<f64> {
    let mut unit = ch.clone();
    unit.g_qr = 1.0;
    let t1_at_unit = purcell_t1(&unit, omega_f, q_f, kappa_eff)?;
    Ok((t1_at_unit / target_t1).sqrt())
}

/// `Γ_φ = n κ χ² / (χ² + κ²/4)`.
pub fn photon_dephasing_rate(ch: &ReadoutChannel, kappa_r: f64, n_noise: f64) -> Result<f64> {
    if !(n_noise >= 0.0) {
        return Err(Error::param(format!("n_noise = {n_noise} must be >= 0")));
    }
    if !(kappa_r > 0.0) {
        return Err(Error::param(format!("κ_r = {kappa_r} must be > 0")));
    }
    let chi2 = ch.dispersive_shift * ch.dispersive_shift;
    Ok(n_noise * kappa_r * chi2 / (chi2 + 0.25 * kappa_r * kappa_r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonState {
    pub n_r: f64,
    pub n_f: f64,
    /// Probe detuning `Δ_rd`, rad/s.
    pub probe_detuning: f64,
    /// `C_f` in farads.
    pub filter_capacitance: f64,
}

/// `n_f = (Δ_rd / g_rf)² n_r`.
pub fn filter_photon_number(st: &PhotonState, g_rf: f64) -> Result<f64> {
    if g_rf == 0.0 {
        return Err(Error::param("g_rf must be non-zero"));
    }
    let r = st.probe_detuning / g_rf;
    Ok(r * r * st.n_r)
}

/// Current from `n_f ħ ω_f = I² / (4 ω_f² C_f)`: `I = 2 ω_f √(n_f ħ ω_f C_f)`.
pub fn filter_current(st: &PhotonState, omega_f: f64) -> Result<f64> {
    if !(omega_f > 0.0 && st.filter_capacitance > 0.0) {
        return Err(Error::param("ω_f and C_f must be > 0"));
    }
    if !(st.n_f >= 0.0) {
        return Err(Error::param("n_f must be >= 0"));
    }
    Ok(2.0 * omega_f * (st.n_f * HBAR * omega_f * st.filter_capacitance).sqrt())
}

/// Inverse of [`filter_current`] for `C_f`.
pub fn capacitance_for_current(n_f: f64, omega_f: f64, current: f64) -> f64 {
    current * current / (4.0 * omega_f * omega_f * n_f * HBAR * omega_f)
}

/// Inverse of [`filter_current`] for `n_f`.
pub fn photons_for_current(current: f64, omega_f: f64, c_f: f64) -> f64 {
    current * current / (4.0 * omega_f * omega_f * HBAR * omega_f * c_f)
}

/// `I_c = Φ0 / (2π L_S)`, the inverse estimate used for the current margin.
/// Note the factor 2 relative to the zero-flux SQUID inductance formula.
pub fn critical_current_estimate(l_s: f64) -> Result<f64> {
    if !(l_s > 0.0) {
        return Err(Error::param(format!("L_S = {l_s} must be > 0")));
    }
    Ok(PHI0 / (2.0 * PI * l_s))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurrentMargin {
    pub critical_current: f64,
    pub operational_current: f64,
    /// `I_c / I_op`; `+∞` when the operating current is zero.
    pub margin: f64,
}

impl CurrentMargin {
    pub fn is_safe(&self) -> bool {
        self.margin > 1.0
    }
}

pub fn squid_current_margin(l_s: f64, i_operational: f64) -> Result<CurrentMargin> {
    let ic = critical_current_estimate(l_s)?;
    if !(i_operational >= 0.0) {
        return Err(Error::param("operational current must be >= 0"));
    }
    let margin = if i_operational == 0.0 {
        f64::INFINITY
    } else {
        ic / i_operational
    };
    Ok(CurrentMargin {
        critical_current: ic,
        operational_current: i_operational,
        margin,
    })
}
