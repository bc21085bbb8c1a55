//! Linewidths of side-branch resonances read off simulated transmission.
//!
//! The complex pole of the branch mode only places the zoom window; the
//! reported center and FWHM come from a line-shape fit to `|S21|²` inside it.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fit::{extract_line, extract_resonance, ResonancePeak};
use crate::network::{branch_series_zero, linspace, resonance_pole, s21_sweep, CircuitNetwork, Element, PoleOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZoomOptions {
    /// Half-width of the window in units of the pole linewidth.
    pub zoom: f64,
    pub points: usize,
    pub min_half_span_hz: f64,
    pub max_half_span_hz: f64,
    /// A fitted FWHM narrower than this many grid steps is unresolved.
    pub min_steps_per_fwhm: f64,
}

impl Default for ZoomOptions {
    fn default() -> Self {
        Self {
            zoom: 6.0,
            points: 2001,
            min_half_span_hz: 20e3,
            max_half_span_hz: 60e6,
            min_steps_per_fwhm: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchResonance {
    pub label: String,
    /// Complex pole in Hz.
    pub pole: Complex64,
    pub center_hz: f64,
    /// Fitted FWHM, or the resolution limit when `upper_bound` is set.
    pub linewidth_hz: f64,
    /// The fit did not resolve the line; `linewidth_hz` is an upper bound.
    pub upper_bound: bool,
    pub fit: Option<ResonancePeak>,
}

impl BranchResonance {
    pub fn pole_linewidth_hz(&self) -> f64 {
        2.0 * self.pole.im.abs()
    }
}

/// Unloaded quarter-wave frequency of a branch ending in a line.
pub fn branch_line_frequency(net: &CircuitNetwork, branch: usize) -> Option<f64> {
    match net.side_branches.get(branch)?.elements.last()? {
        Element::Line(l) if l.theta_ref > 0.0 => Some(l.f_ref * (std::f64::consts::FRAC_PI_2 / l.theta_ref)),
        _ => None,
    }
}

/// Resonance of `branch`, searched below `hint_hz` (the branch's
/// unloaded quarter-wave frequency when `None`).
pub fn branch_resonance(
    net: &CircuitNetwork,
    branch: usize,
    hint_hz: Option<f64>,
    opts: ZoomOptions,
) -> Result<BranchResonance> {
    let b = net
        .side_branches
        .get(branch)
        .ok_or_else(|| Error::param(format!("no branch {branch}")))?;
    let hint = hint_hz
        .or_else(|| branch_line_frequency(net, branch))
        .ok_or_else(|| Error::param(format!("no frequency hint for branch '{}'", b.label)))?;
    let guess = branch_series_zero(b, 0.7 * hint, hint * (1.0 - 1e-9)).unwrap_or(hint);
    let pole = resonance_pole(net, branch, guess, PoleOptions::default())?;
    let kappa = 2.0 * pole.im.abs();
    let half = (opts.zoom * kappa).clamp(opts.min_half_span_hz, opts.max_half_span_hz);
    let freqs = linspace(pole.re - half, pole.re + half, opts.points);
    let step = 2.0 * half / (opts.points - 1) as f64;
    let spectrum: Vec<(f64, Complex64)> = s21_sweep(net, &freqs)?
        .into_iter()
        .map(|p| (p.freq_hz, p.s21))
        .collect();
    let limit = opts.min_steps_per_fwhm * step;
    match extract_line(&spectrum, (freqs[0], freqs[freqs.len() - 1])) {
        Ok(peak) if peak.linewidth_fwhm >= limit && (peak.center_frequency - pole.re).abs() < half => {
            Ok(BranchResonance {
                label: b.label.clone(),
                pole,
                center_hz: peak.center_frequency,
                linewidth_hz: peak.linewidth_fwhm,
                upper_bound: false,
                fit: Some(peak),
            })
        }
        Ok(peak) => Ok(BranchResonance {
            label: b.label.clone(),
            pole,
            center_hz: pole.re,
            linewidth_hz: limit.max(peak.linewidth_fwhm.min(2.0 * half)),
            upper_bound: true,
            fit: Some(peak),
        }),
        Err(_) => Ok(BranchResonance {
            label: b.label.clone(),
            pole,
            center_hz: pole.re,
            linewidth_hz: limit,
            upper_bound: true,
            fit: None,
        }),
    }
}

/// Filter passband fitted over `[lo, hi]` on an `n`-point grid.
pub fn filter_peak(net: &CircuitNetwork, lo: f64, hi: f64, n: usize) -> Result<ResonancePeak> {
    let freqs = linspace(lo, hi, n);
    let spectrum: Vec<(f64, Complex64)> = s21_sweep(net, &freqs)?
        .into_iter()
        .map(|p| (p.freq_hz, p.s21))
        .collect();
    extract_resonance(&spectrum, (lo, hi))
}
