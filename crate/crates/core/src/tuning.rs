//! Closed-form flux tuning of the SQUID-terminated λ/2 filter.

use std::f64::consts::PI;

use crate::consts::{ang, PHI0};
use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};

/// Evaluations closer than this (in units of Φ0) to half flux are rejected.
pub const HALF_FLUX_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterParams {
    /// Critical current `I_c` in amperes.
    pub critical_current: f64,
    /// Bare filter frequency `ω_f0` in rad/s.
    pub bare_frequency: f64,
    /// Bare filter inductance `L_f0` in henries.
    pub bare_inductance: f64,
    /// `L_u` in H/m.
    pub per_unit_length_inductance: f64,
    /// `l_p` in meters.
    pub physical_length: f64,
    /// `Z_f` in ohms.
    pub filter_impedance: f64,
    /// `R_0` in ohms.
    pub port_resistance: f64,
    /// `Q_fin`.
    pub input_quality: f64,
}

impl FilterParams {
    /// Builds parameters with `L_u · l_p = L_f0`.
    pub fn identified(
        critical_current: f64,
        bare_frequency_hz: f64,
        bare_inductance: f64,
        physical_length: f64,
        filter_impedance: f64,
        port_resistance: f64,
        input_quality: f64,
    ) -> Result<Self> {
        let p = Self {
            critical_current,
            bare_frequency: ang(bare_frequency_hz),
            bare_inductance,
            per_unit_length_inductance: bare_inductance / physical_length,
            physical_length,
            filter_impedance,
            port_resistance,
            input_quality,
        };
        p.validate()?;
        Ok(p)
    }

    /// Calibrated to the read-on (6.362 GHz, κ_f = 900 MHz) and read-off
    /// (κ_f = 170 MHz, 587 MHz above) filter settings with I_c = 0.66 µA and
    /// the read-off bias at zero flux. `Q_fin` is held at 1000.
    pub fn calibrated() -> Self {
        Self::identified(
            0.66e-6,
            7.392_338_1e9,
            3.907_950_8e-9,
            8.1e-3,
            50.0 / 1.689_276_6,
            50.0,
            1000.0,
        )
        .expect("calibrated parameters are valid")
    }

    /// `Q_f0 = R_0 / Z_f`.
    pub fn q_f0(&self) -> f64 {
        self.port_resistance / self.filter_impedance
    }

    /// `L_u · l_p`, identified with `L_f0`.
    pub fn total_inductance(&self) -> f64 {
        self.per_unit_length_inductance * self.physical_length
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("critical_current", self.critical_current),
            ("bare_frequency", self.bare_frequency),
            ("bare_inductance", self.bare_inductance),
            ("per_unit_length_inductance", self.per_unit_length_inductance),
            ("physical_length", self.physical_length),
            ("filter_impedance", self.filter_impedance),
            ("port_resistance", self.port_resistance),
            ("input_quality", self.input_quality),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::param(format!("{name} = {v} must be finite and > 0")));
            }
        }
        if self.input_quality < self.q_f0() {
            return Err(Error::param(format!(
                "Q_fin = {} below Q_f0 = {}",
                self.input_quality,
                self.q_f0()
            )));
        }
        let rel = (self.total_inductance() - self.bare_inductance).abs() / self.bare_inductance;
        if rel > 1e-9 {
            return Err(Error::param(format!(
                "L_u·l_p = {} differs from L_f0 = {}",
                self.total_inductance(),
                self.bare_inductance
            )));
        }
        Ok(())
    }
}

/// External flux through the SQUID loop, in webers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxBias {
    pub phi_ext: f64,
}

impl FluxBias {
    pub fn from_phi0(x: f64) -> Self {
        Self { phi_ext: x * PHI0 }
    }

    pub fn in_phi0(&self) -> f64 {
        self.phi_ext / PHI0
    }
}

/// `L_S = Φ0 / (4π I_c |cos(π φ/Φ0)|)`.
pub fn squid_inductance(p: &FilterParams, phi: FluxBias) -> Result<f64> {
    let x = phi.in_phi0();
    let dist = (x - 0.5 - (x - 0.5).round()).abs();
    if !x.is_finite() || dist < HALF_FLUX_GUARD {
        return Err(Error::Divergence {
            what: format!("flux bias {x} Φ0"),
            detail: "SQUID inductance diverges at half flux quantum".into(),
        });
    }
    Ok(PHI0 / (4.0 * PI * p.critical_current * (PI * x).cos().abs()))
}

/// Flux (in Φ0, on `[0, ½)`) at which the SQUID inductance equals `l_s`.
pub fn flux_for_inductance(p: &FilterParams, l_s: f64) -> Result<f64> {
    let l_min = PHI0 / (4.0 * PI * p.critical_current);
    if !(l_s >= l_min) {
        return Err(Error::param(format!(
            "inductance {l_s} below the zero-flux minimum {l_min}"
        )));
    }
    Ok((l_min / l_s).acos() / PI)
}

/// `ω_f = ω_f0 / (1 + L_S/L_f0)` in rad/s.
pub fn filter_frequency(p: &FilterParams, l_s: f64) -> Result<f64> {
    if !(l_s.is_finite() && l_s >= 0.0) {
        return Err(Error::param(format!("L_S = {l_s} must be >= 0")));
    }
    Ok(p.bare_frequency / (1.0 + l_s / p.bare_inductance))
}

/// `Q_fout = Q_f0 / sin²(π L_S / (L_u l_p))`.
pub fn output_quality(p: &FilterParams, l_s: f64) -> Result<f64> {
    let arg = PI * l_s / p.total_inductance();
    if !(arg > 0.0 && arg < PI) {
        return Err(Error::Divergence {
            what: format!("L_S = {l_s} H"),
            detail: format!("sine argument {arg} outside (0, π)"),
        });
    }
    let s = arg.sin();
    Ok(p.q_f0() / (s * s))
}

/// `1/Q_f = 1/Q_fout + 1/Q_fin`.
pub fn total_quality(q_out: f64, q_in: f64) -> Result<f64> {
    if !(q_out > 0.0 && q_in > 0.0) {
        return Err(Error::param(format!(
            "quality factors {q_out}, {q_in} must be > 0"
        )));
    }
    if q_in.is_infinite() {
        return Ok(q_out);
    }
    Ok(1.0 / (1.0 / q_out + 1.0 / q_in))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningPoint {
    pub phi_over_phi0: f64,
    pub squid_inductance: f64,
    /// rad/s
    pub omega_f: f64,
    /// rad/s
    pub kappa_f: f64,
    pub q_f: f64,
}

/// Filter frequency, linewidth and Q at one inductance.
pub fn tuning_at_inductance(p: &FilterParams, l_s: f64) -> Result<(f64, f64, f64)> {
    let omega_f = filter_frequency(p, l_s)?;
    let q_f = total_quality(output_quality(p, l_s)?, p.input_quality)?;
    Ok((omega_f, omega_f / q_f, q_f))
}

/// Tuning curve over flux biases. Singular biases come back as `Err` in
/// place, without aborting the sweep.
pub fn tuning_curve(p: &FilterParams, biases: &[FluxBias]) -> Vec<Result<TuningPoint>> {
    biases
        .iter()
        .map(|&b| {
            let l_s = squid_inductance(p, b)?;
            let (omega_f, kappa_f, q_f) = tuning_at_inductance(p, l_s)?;
            Ok(TuningPoint {
                phi_over_phi0: b.in_phi0(),
                squid_inductance: l_s,
                omega_f,
                kappa_f,
                q_f,
            })
        })
        .collect()
}

/// One filter observation: inductance (H), center (Hz), FWHM (Hz).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningSample {
    pub squid_inductance: f64,
    pub frequency_hz: f64,
    pub fwhm_hz: f64,
}

/// Fits `ω_f0, L_f0, Q_f0, Q_fin` of the closed form to filter observations
/// (e.g. peaks extracted from simulated spectra). `template` supplies the
/// starting point and the fixed fields (`I_c`, `l_p`, `R_0`).
pub fn fit_filter_params(samples: &[TuningSample], template: &FilterParams) -> Result<FilterParams> {
    if samples.len() < 2 {
        return Err(Error::param("need at least two tuning samples"));
    }
    let n = samples.len();
    let model = |x: f64, q: &[f64]| -> f64 {
        let i = x as usize;
        let s = &samples[i % n];
        let f0 = q[0] * 1e9;
        let lf0 = q[1].exp() * 1e-9;
        let qf0 = q[2].exp();
        let qfin = q[3].exp();
        let f = f0 / (1.0 + s.squid_inductance / lf0);
        if i < n {
            return f / s.frequency_hz;
        }
        let sn = (PI * s.squid_inductance / lf0).sin();
        let qout = qf0 / (sn * sn);
        let qf = 1.0 / (1.0 / qout + 1.0 / qfin);
        (f / qf) / s.fwhm_hz
    };
    let x: Vec<f64> = (0..2 * n).map(|i| i as f64).collect();
    let y = vec![1.0; 2 * n];
    let p0 = linear_start(samples).unwrap_or([
        template.bare_frequency / (2.0 * PI) / 1e9,
        (template.bare_inductance * 1e9).ln(),
        template.q_f0().ln(),
        template.input_quality.ln(),
    ]);
    // centers are far better determined than widths: 1% vs 15% relative scatter
    let w: Vec<f64> = (0..2 * n)
        .map(|i| if i < n { 1.0 / (0.01 * 0.01) } else { 1.0 / (0.15 * 0.15) })
        .collect();
    let fit = levenberg_marquardt(&x, &y, Some(&w), &p0, model, LmOptions::default())?;
    let q = &fit.params;
    let lf0 = q[1].exp() * 1e-9;
    FilterParams::identified(
        template.critical_current,
        q[0] * 1e9,
        lf0,
        template.physical_length,
        template.port_resistance / q[2].exp(),
        template.port_resistance,
        q[3].exp(),
    )
}

/// Straight-line fit `y = a + b x`.
fn line_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    Some((my - b * mx, b))
}

/// Starting point from the two linear sub-problems: `1/f = (1 + L_S/L_f0)/f0`
/// is a line in `L_S`, and given `L_f0`, `1/Q_f = sin²(·)/Q_f0 + 1/Q_fin` is a
/// line in `sin²`.
fn linear_start(samples: &[TuningSample]) -> Option<[f64; 4]> {
    let l: Vec<f64> = samples.iter().map(|s| s.squid_inductance).collect();
    let inv_f: Vec<f64> = samples.iter().map(|s| 1.0 / s.frequency_hz).collect();
    let (a, b) = line_fit(&l, &inv_f)?;
    if !(a > 0.0 && b > 0.0) {
        return None;
    }
    let f0 = 1.0 / a;
    let lf0 = a / b;
    let s2: Vec<f64> = l.iter().map(|v| (PI * v / lf0).sin().powi(2)).collect();
    let inv_q: Vec<f64> = samples.iter().map(|s| s.fwhm_hz / s.frequency_hz).collect();
    let (c, d) = line_fit(&s2, &inv_q)?;
    if !(d > 0.0) {
        return None;
    }
    let q_f0 = 1.0 / d;
    let q_fin = if c > 0.0 { (1.0 / c).max(q_f0) } else { 1e4 * q_f0 };
    Some([f0 / 1e9, (lf0 * 1e9).ln(), q_f0.ln(), q_fin.ln()])
}
