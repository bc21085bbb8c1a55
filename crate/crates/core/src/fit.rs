//! Nonlinear least squares and resonance line-shape extraction.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when an accepted step lowers χ² by less than this fraction.
    pub ftol: f64,
    /// Stop when every parameter moves by less than this (relative + absolute).
    pub xtol: f64,
    pub lambda0: f64,
    /// Scale the covariance by the reduced χ².
    pub scale_covariance: bool,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            ftol: 1e-15,
            xtol: 1e-13,
            lambda0: 1e-3,
            scale_covariance: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: Vec<f64>,
    /// Row-major `p × p` covariance.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
    /// χ² after each accepted step, starting with the initial value.
    pub residual_trace: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
}

impl FitOutcome {
    pub fn stderr(&self, i: usize) -> f64 {
        self.covariance[i][i].max(0.0).sqrt()
    }

    /// RMS of unweighted residuals is not stored; this is `sqrt(χ²/n)`.
    pub fn rms(&self) -> f64 {
        let n = self.dof + self.params.len();
        (self.chi2 / n.max(1) as f64).sqrt()
    }
}

fn jacobian<F>(x: &[f64], p: &[f64], model: &F) -> DMatrix<f64>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let (n, k) = (x.len(), p.len());
    let mut jac = DMatrix::zeros(n, k);
    let mut pp = p.to_vec();
    for j in 0..k {
        let h = 1e-7 * p[j].abs().max(1e-6);
        pp[j] = p[j] + h;
        let up: Vec<f64> = x.iter().map(|&xi| model(xi, &pp)).collect();
        pp[j] = p[j] - h;
        for (i, &xi) in x.iter().enumerate() {
            jac[(i, j)] = (up[i] - model(xi, &pp)) / (2.0 * h);
        }
        pp[j] = p[j];
    }
    jac
}

fn chi2<F>(x: &[f64], y: &[f64], w: &[f64], p: &[f64], model: &F) -> f64
where
    F: Fn(f64, &[f64]) -> f64,
{
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = yi - model(xi, p);
            wi * r * r
        })
        .sum()
}

/// Levenberg–Marquardt fit of `y ≈ model(x, p)`. `weights` are inverse
/// variances; `None` means unit weights.
pub fn levenberg_marquardt<F>(
    x: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    p0: &[f64],
    model: F,
    opts: LmOptions,
) -> Result<FitOutcome>
where
    F: Fn(f64, &[f64]) -> f64,
{
    let n = x.len();
    let k = p0.len();
    if n != y.len() || weights.is_some_and(|w| w.len() != n) {
        return Err(Error::param("x, y and weights must have equal length"));
    }
    if n < k {
        return Err(Error::param(format!("{n} samples for {k} parameters")));
    }
    let unit = vec![1.0; n];
    let w = weights.unwrap_or(&unit);

    let mut p = p0.to_vec();
    let mut c2 = chi2(x, y, w, &p, &model);
    if !c2.is_finite() {
        return Err(Error::Fit {
            iterations: 0,
            reason: "non-finite χ² at the initial point".into(),
            residual_trace: vec![c2],
        });
    }
    let mut trace = vec![c2];
    let mut lambda = opts.lambda0;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let jac = jacobian(x, &p, &model);
        let mut jtwj = DMatrix::<f64>::zeros(k, k);
        let mut jtwr = DVector::<f64>::zeros(k);
        for i in 0..n {
            let r = y[i] - model(x[i], &p);
            for a in 0..k {
                let wa = w[i] * jac[(i, a)];
                jtwr[a] += wa * r;
                for b in a..k {
                    jtwj[(a, b)] += wa * jac[(i, b)];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                jtwj[(a, b)] = jtwj[(b, a)];
            }
        }

        let mut accepted = false;
        let mut converged = false;
        for _ in 0..60 {
            let mut lhs = jtwj.clone();
            for a in 0..k {
                lhs[(a, a)] += lambda * jtwj[(a, a)].max(1e-300);
            }
            let Some(delta) = lhs.lu().solve(&jtwr) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let c2_trial = chi2(x, y, w, &trial, &model);
            if c2_trial.is_finite() && c2_trial <= c2 {
                let small_step = p
                    .iter()
                    .zip(delta.iter())
                    .all(|(a, d)| d.abs() <= opts.xtol * (a.abs() + opts.xtol));
                let small_gain = c2 - c2_trial <= opts.ftol * c2;
                p = trial;
                c2 = c2_trial;
                trace.push(c2);
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                converged = small_step || small_gain || c2 == 0.0;
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                break;
            }
        }
        if !accepted || converged {
            break;
        }
    }

    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit {
            iterations,
            reason: "non-finite parameters".into(),
            residual_trace: trace,
        });
    }

    let jac = jacobian(x, &p, &model);
    let mut jtwj = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        for a in 0..k {
            for b in 0..k {
                jtwj[(a, b)] += w[i] * jac[(i, a)] * jac[(i, b)];
            }
        }
    }
    let dof = n - k;
    let s2 = if opts.scale_covariance && dof > 0 {
        c2 / dof as f64
    } else {
        1.0
    };
    let cov = jtwj
        .try_inverse()
        .map(|m| m * s2)
        .unwrap_or_else(|| DMatrix::from_element(k, k, f64::INFINITY));
    let covariance = (0..k)
        .map(|a| (0..k).map(|b| cov[(a, b)]).collect())
        .collect();

    Ok(FitOutcome {
        params: p,
        covariance,
        iterations,
        residual_trace: trace,
        chi2: c2,
        dof,
    })
}

/// Extracted resonance from a transmission spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonancePeak {
    pub center_frequency: f64,
    pub linewidth_fwhm: f64,
    /// `|S21|` of the fitted model at its maximum.
    pub peak_magnitude: f64,
    /// RMS of `|S21|²` data minus model.
    pub fit_residual: f64,
    /// Fano asymmetry `γ/β` of the fitted shape; zero for a pure Lorentzian.
    pub asymmetry: f64,
    pub iterations: usize,
}

/// Line shapes for `|S21|²`, with `x = 2(f − f0)/FWHM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineShape {
    /// `α + β/(1+x²)`.
    Lorentzian,
    /// `α + δ·u + (β + γx)/(1+x²)`: Lorentzian denominator with a dispersive
    /// numerator and a sloped background. Covers peaks, notches and the
    /// peak-plus-dip of a resonator seen through a filter.
    Fano,
}

fn shape_value(shape: LineShape, u: f64, p: &[f64]) -> f64 {
    match shape {
        LineShape::Lorentzian => {
            let x = (u - p[2]) / p[3];
            p[0] + p[1] / (1.0 + x * x)
        }
        LineShape::Fano => {
            let x = (u - p[4]) / p[5];
            p[0] + p[1] * u + (p[2] + p[3] * x) / (1.0 + x * x)
        }
    }
}

/// Lorentzian `|S21|²` fit with the default [`LineShape::Fano`] family.
pub fn extract_resonance(spectrum: &[(f64, Complex64)], window: (f64, f64)) -> Result<ResonancePeak> {
    extract_resonance_with(spectrum, window, LineShape::Fano)
}

pub fn extract_resonance_with(
    spectrum: &[(f64, Complex64)],
    window: (f64, f64),
    shape: LineShape,
) -> Result<ResonancePeak> {
    fit_line(spectrum, window, shape, true)
}

/// Like [`extract_resonance`] but without requiring an interior maximum, for
/// lines that appear as a pure dip on a sloped background.
pub fn extract_line(spectrum: &[(f64, Complex64)], window: (f64, f64)) -> Result<ResonancePeak> {
    fit_line(spectrum, window, LineShape::Fano, false)
}

fn fit_line(
    spectrum: &[(f64, Complex64)],
    window: (f64, f64),
    shape: LineShape,
    require_peak: bool,
) -> Result<ResonancePeak> {
    let (lo, hi) = window;
    if !(hi > lo) {
        return Err(Error::param(format!("empty window [{lo}, {hi}]")));
    }
    let pts: Vec<(f64, f64)> = spectrum
        .iter()
        .filter(|(f, s)| *f >= lo && *f <= hi && s.is_finite())
        .map(|(f, s)| (*f, s.norm_sqr()))
        .collect();
    if pts.len() < 20 {
        return Err(Error::param(format!(
            "window holds {} samples, need at least 20",
            pts.len()
        )));
    }

    let mid = 0.5 * (pts[0].0 + pts[pts.len() - 1].0);
    let half = 0.5 * (pts[pts.len() - 1].0 - pts[0].0);
    let u: Vec<f64> = pts.iter().map(|(f, _)| (f - mid) / half).collect();
    let y: Vec<f64> = pts.iter().map(|(_, v)| *v).collect();
    let n = y.len();

    // global interior maximum, lowest frequency on ties
    let mut imax = None;
    for i in 1..n - 1 {
        if y[i] > y[i - 1] && y[i] >= y[i + 1] && imax.is_none_or(|m: usize| y[i] > y[m]) {
            imax = Some(i);
        }
    }
    let imax = match imax {
        Some(i) => i,
        None if !require_peak => (0..n).fold(0, |m, i| if y[i] > y[m] { i } else { m }),
        None => {
            return Err(Error::NotFound(format!(
                "no local maximum of |S21| in [{lo:.6e}, {hi:.6e}] Hz"
            )))
        }
    };
    let imin = (0..n).fold(0, |m, i| if y[i] < y[m] { i } else { m });

    let edge = (n / 10).max(2);
    let mut edges: Vec<f64> = y[..edge].iter().chain(&y[n - edge..]).copied().collect();
    edges.sort_by(f64::total_cmp);
    let base = edges[edges.len() / 2];

    let hw_from_crossings = |center: usize, level: f64, above: bool| -> f64 {
        let crosses = |v: f64| if above { v < level } else { v > level };
        let mut l = center;
        while l > 0 && !crosses(y[l]) {
            l -= 1;
        }
        let mut r = center;
        while r < n - 1 && !crosses(y[r]) {
            r += 1;
        }
        (0.5 * (u[r] - u[l])).max(2.0 * (u[1] - u[0]))
    };
    let peak_level = 0.5 * (y[imax] + base.min(y[imin]));
    let hw_peak = hw_from_crossings(imax, peak_level, true);
    let dip_level = 0.5 * (y[imin] + base);
    let hw_dip = hw_from_crossings(imin, dip_level, false);
    let hw_pair = (0.5 * (u[imax] - u[imin]).abs()).max(2.0 * (u[1] - u[0]));

    let mut starts: Vec<Vec<f64>> = Vec::new();
    match shape {
        LineShape::Lorentzian => {
            let a0 = base.min(y[imin]);
            starts.push(vec![a0, y[imax] - a0, u[imax], hw_peak]);
        }
        LineShape::Fano => {
            starts.push(vec![base, 0.0, y[imax] - base, 0.0, u[imax], hw_peak]);
            if imin != imax {
                starts.push(vec![base, 0.0, y[imin] - base, 0.0, u[imin], hw_dip]);
                let c = 0.5 * (u[imax] + u[imin]);
                let b = 0.5 * (y[imax] + y[imin]) - base;
                let g = if u[imax] > u[imin] { 1.0 } else { -1.0 } * 0.5 * (y[imax] - y[imin]);
                starts.push(vec![base, 0.0, b, g, c, hw_pair]);
            }
        }
    }

    let model = |uu: f64, p: &[f64]| shape_value(shape, uu, p);
    let mut best: Option<FitOutcome> = None;
    let mut last_err = None;
    for p0 in starts {
        match levenberg_marquardt(&u, &y, None, &p0, model, LmOptions::default()) {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.chi2 < b.chi2) {
                    best = Some(fit);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let fit = match best {
        Some(f) => f,
        None => return Err(last_err.expect("at least one start")),
    };
    let (ic, iw) = match shape {
        LineShape::Lorentzian => (2, 3),
        LineShape::Fano => (4, 5),
    };
    let p = &fit.params;
    let center = mid + p[ic] * half;
    let fwhm = 2.0 * p[iw].abs() * half;
    if !(fwhm > 0.0 && fwhm.is_finite() && center.is_finite()) {
        return Err(Error::Fit {
            iterations: fit.iterations,
            reason: format!("degenerate width {fwhm}"),
            residual_trace: fit.residual_trace,
        });
    }
    let model_max = u.iter().map(|&uu| model(uu, p)).fold(f64::MIN, f64::max);
    let asymmetry = match shape {
        LineShape::Lorentzian => 0.0,
        LineShape::Fano => {
            if p[2] != 0.0 {
                p[3] / p[2]
            } else {
                f64::INFINITY
            }
        }
    };
    Ok(ResonancePeak {
        center_frequency: center,
        linewidth_fwhm: fwhm,
        peak_magnitude: model_max.max(0.0).sqrt(),
        fit_residual: fit.rms(),
        asymmetry,
        iterations: fit.iterations,
    })
}

/// Full width at half maximum read directly from samples around the global
/// maximum of `|S21|²`, with linear interpolation at the crossings.
pub fn half_max_width(spectrum: &[(f64, Complex64)]) -> Option<(f64, f64)> {
    let y: Vec<f64> = spectrum.iter().map(|(_, s)| s.norm_sqr()).collect();
    let f: Vec<f64> = spectrum.iter().map(|(f, _)| *f).collect();
    let imax = (0..y.len()).fold(0, |m, i| if y[i] > y[m] { i } else { m });
    let half = 0.5 * y[imax];
    let mut l = imax;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let mut r = imax;
    while r + 1 < y.len() && y[r] > half {
        r += 1;
    }
    if y[l] > half || y[r] > half {
        return None;
    }
    let interp = |a: usize, b: usize| f[a] + (half - y[a]) * (f[b] - f[a]) / (y[b] - y[a]);
    let fl = interp(l, l + 1);
    let fr = interp(r - 1, r);
    Some((f[imax], fr - fl))
}
