//! Distributed-element two-port network engine.
//!
//! A [`CircuitNetwork`] is an ordered cascade of lines and lumped elements
//! between two resistive ports. Side branches (resonator taps, shorted stubs)
//! hang off the cascade at a given position and enter the chain as a shunt
//! admittance `1/Z_in`. Everything is evaluated at a complex frequency
//! internally so the same code serves real sweeps and pole searches.

use std::f64::consts::PI;
use std::ops::Mul;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::consts::TWO_PI;
use crate::error::{Error, Result};

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// ABCD transfer matrix of a two-port.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Abcd {
    pub a: Complex64,
    pub b: Complex64,
    pub c: Complex64,
    pub d: Complex64,
}

impl Abcd {
    #[must_use]
    pub const fn new(a: Complex64, b: Complex64, c: Complex64, d: Complex64) -> Self {
        Self { a, b, c, d }
    }

    #[must_use]
    pub const fn identity() -> Self {
        Self::new(ONE, ZERO, ZERO, ONE)
    }

    #[must_use]
    pub fn series_impedance(z: Complex64) -> Self {
        Self::new(ONE, z, ZERO, ONE)
    }

    #[must_use]
    pub fn shunt_admittance(y: Complex64) -> Self {
        Self::new(ONE, ZERO, y, ONE)
    }

    #[must_use]
    pub fn determinant(&self) -> Complex64 {
        self.a * self.d - self.b * self.c
    }

    /// Matrix inverse, `None` when the determinant vanishes.
    #[must_use]
    pub fn inverse(&self) -> Option<Self> {
        let det = self.determinant();
        if det.norm() == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Self::new(self.d / det, -self.b / det, -self.c / det, self.a / det))
    }

    /// Largest entrywise modulus of `self - other`.
    #[must_use]
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        [
            self.a - other.a,
            self.b - other.b,
            self.c - other.c,
            self.d - other.d,
        ]
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite() && self.d.is_finite()
    }
}

impl Mul for Abcd {
    type Output = Abcd;

    fn mul(self, r: Abcd) -> Abcd {
        Abcd::new(
            self.a * r.a + self.b * r.c,
            self.a * r.b + self.b * r.d,
            self.c * r.a + self.d * r.c,
            self.c * r.b + self.d * r.d,
        )
    }
}

/// Uniform TEM line. Phase scales linearly with frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionLineSegment {
    /// Characteristic impedance in ohms.
    pub z0: f64,
    /// Electrical length in radians at `f_ref`.
    pub theta_ref: f64,
    /// Reference frequency in Hz.
    pub f_ref: f64,
    /// Internal quality factor; `None` means lossless. Attenuation is
    /// `αl = βl / (2 Q_i)`.
    pub q_internal: Option<f64>,
}

impl TransmissionLineSegment {
    pub fn lossless(z0: f64, theta_ref: f64, f_ref: f64) -> Self {
        Self {
            z0,
            theta_ref,
            f_ref,
            q_internal: None,
        }
    }

    /// Line that is a quarter wavelength long at `f`.
    pub fn quarter_wave(z0: f64, f: f64) -> Self {
        Self::lossless(z0, PI / 2.0, f)
    }

    fn validate(&self) -> Result<()> {
        if !(self.z0.is_finite() && self.z0 > 0.0) {
            return Err(Error::param(format!("line impedance {} must be > 0", self.z0)));
        }
        if !(self.f_ref.is_finite() && self.f_ref > 0.0) {
            return Err(Error::param(format!(
                "line reference frequency {} must be > 0",
                self.f_ref
            )));
        }
        if !(self.theta_ref.is_finite() && self.theta_ref >= 0.0) {
            return Err(Error::param(format!(
                "line electrical length {} must be >= 0",
                self.theta_ref
            )));
        }
        if let Some(q) = self.q_internal {
            if !(q.is_finite() && q > 0.0) {
                return Err(Error::param(format!("line internal Q {q} must be > 0")));
            }
        }
        Ok(())
    }

    fn abcd_at(&self, f: Complex64) -> Abcd {
        let beta_l = f * (self.theta_ref / self.f_ref);
        let gamma_l = match self.q_internal {
            Some(q) => beta_l * Complex64::new(1.0 / (2.0 * q), 1.0),
            None => beta_l * J,
        };
        let (ch, sh) = (gamma_l.cosh(), gamma_l.sinh());
        let z = Complex64::from(self.z0);
        Abcd::new(ch, z * sh, sh / z, ch)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LumpedKind {
    SeriesInductor,
    ShuntInductor,
    SeriesCapacitor,
    ShuntCapacitor,
    ShuntResistor,
}

/// Single lumped component. `value` is in H, F or Ω according to `kind`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumpedElement {
    pub kind: LumpedKind,
    pub value: f64,
}

impl LumpedElement {
    pub fn new(kind: LumpedKind, value: f64) -> Self {
        Self { kind, value }
    }

    fn validate(&self) -> Result<()> {
        if !(self.value.is_finite() && self.value > 0.0) {
            return Err(Error::param(format!(
                "{:?} value {} must be finite and > 0",
                self.kind, self.value
            )));
        }
        Ok(())
    }

    fn abcd_at(&self, f: Complex64) -> Abcd {
        let jw = J * f * TWO_PI;
        match self.kind {
            LumpedKind::SeriesInductor => Abcd::series_impedance(jw * self.value),
            LumpedKind::ShuntInductor => Abcd::shunt_admittance(ONE / (jw * self.value)),
            LumpedKind::SeriesCapacitor => Abcd::series_impedance(ONE / (jw * self.value)),
            LumpedKind::ShuntCapacitor => Abcd::shunt_admittance(jw * self.value),
            LumpedKind::ShuntResistor => Abcd::shunt_admittance(Complex64::from(1.0 / self.value)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Element {
    Line(TransmissionLineSegment),
    Lumped(LumpedElement),
}

impl Element {
    pub fn line(z0: f64, theta_ref: f64, f_ref: f64) -> Self {
        Element::Line(TransmissionLineSegment::lossless(z0, theta_ref, f_ref))
    }

    pub fn lumped(kind: LumpedKind, value: f64) -> Self {
        Element::Lumped(LumpedElement::new(kind, value))
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Element::Line(l) => l.validate(),
            Element::Lumped(e) => e.validate(),
        }
    }

    /// ABCD matrix at a (possibly complex) frequency in Hz. No validation.
    pub fn abcd_at(&self, f: Complex64) -> Abcd {
        match self {
            Element::Line(l) => l.abcd_at(f),
            Element::Lumped(e) => e.abcd_at(f),
        }
    }

    fn is_lossless(&self) -> bool {
        match self {
            Element::Line(l) => l.q_internal.is_none(),
            Element::Lumped(e) => e.kind != LumpedKind::ShuntResistor,
        }
    }
}

impl From<TransmissionLineSegment> for Element {
    fn from(l: TransmissionLineSegment) -> Self {
        Element::Line(l)
    }
}

impl From<LumpedElement> for Element {
    fn from(e: LumpedElement) -> Self {
        Element::Lumped(e)
    }
}

/// ABCD matrix of one element at a real frequency.
pub fn abcd_of_element(elem: &Element, freq: f64) -> Result<Abcd> {
    if !(freq.is_finite() && freq > 0.0) {
        return Err(Error::param(format!("frequency {freq} must be > 0")));
    }
    elem.validate()?;
    Ok(elem.abcd_at(Complex64::from(freq)))
}

/// Ordered product of ABCD matrices.
pub fn cascade(matrices: &[Abcd]) -> Result<Abcd> {
    let (first, rest) = matrices
        .split_first()
        .ok_or_else(|| Error::param("cascade of an empty list"))?;
    Ok(rest.iter().fold(*first, |acc, m| acc * *m))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Short,
    Open,
}

/// Sub-network hanging off the main cascade to ground.
#[derive(Debug, Clone, PartialEq)]
pub struct SideBranch {
    pub label: String,
    /// Tap node index: the branch sits just before `elements[position]`;
    /// `position == elements.len()` means at the output port.
    pub position: usize,
    /// Cascade from the tap node toward the termination.
    pub elements: Vec<Element>,
    pub termination: Termination,
}

impl SideBranch {
    /// Input impedance seen from the tap node.
    pub fn input_impedance(&self, f: Complex64) -> Complex64 {
        let m = self
            .elements
            .iter()
            .fold(Abcd::identity(), |acc, e| acc * e.abcd_at(f));
        match self.termination {
            Termination::Short => m.b / m.d,
            Termination::Open => m.a / m.c,
        }
    }

    fn abcd_at(&self, f: Complex64) -> Abcd {
        Abcd::shunt_admittance(ONE / self.input_impedance(f))
    }

    /// λ/4 readout resonator: series coupling capacitor into a shorted line
    /// that is a quarter wave at `f_quarter`.
    pub fn quarter_wave_resonator(
        label: impl Into<String>,
        position: usize,
        coupling_capacitance: f64,
        z_r: f64,
        f_quarter: f64,
    ) -> Self {
        Self {
            label: label.into(),
            position,
            elements: vec![
                Element::lumped(LumpedKind::SeriesCapacitor, coupling_capacitance),
                TransmissionLineSegment::quarter_wave(z_r, f_quarter).into(),
            ],
            termination: Termination::Short,
        }
    }

    /// Shorted stub of electrical length `theta` at `f_ref`.
    pub fn shorted_stub(label: impl Into<String>, position: usize, z0: f64, theta: f64, f_ref: f64) -> Self {
        Self {
            label: label.into(),
            position,
            elements: vec![Element::line(z0, theta, f_ref)],
            termination: Termination::Short,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Element(usize),
    Branch(usize),
}

/// Two-port cascade with optional side branches.
#[derive(Debug, Clone, PartialEq)]
pub struct CircuitNetwork {
    pub elements: Vec<Element>,
    pub input_port_impedance: f64,
    pub output_port_impedance: f64,
    pub side_branches: Vec<SideBranch>,
}

impl CircuitNetwork {
    pub fn new(elements: Vec<Element>, r1: f64, r2: f64) -> Self {
        Self {
            elements,
            input_port_impedance: r1,
            output_port_impedance: r2,
            side_branches: Vec::new(),
        }
    }

    pub fn with_branch(mut self, b: SideBranch) -> Self {
        self.side_branches.push(b);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::param("network has no elements"));
        }
        for r in [self.input_port_impedance, self.output_port_impedance] {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::param(format!("port impedance {r} must be > 0")));
            }
        }
        for e in &self.elements {
            e.validate()?;
        }
        for b in &self.side_branches {
            if b.position > self.elements.len() {
                return Err(Error::param(format!(
                    "branch '{}' position {} beyond {} elements",
                    b.label,
                    b.position,
                    self.elements.len()
                )));
            }
            if b.elements.is_empty() {
                return Err(Error::param(format!("branch '{}' is empty", b.label)));
            }
            for e in &b.elements {
                e.validate()?;
            }
        }
        Ok(())
    }

    /// True when no element or branch dissipates.
    pub fn is_lossless(&self) -> bool {
        self.elements.iter().all(Element::is_lossless)
            && self
                .side_branches
                .iter()
                .all(|b| b.elements.iter().all(Element::is_lossless))
    }

    fn stages(&self) -> Vec<Stage> {
        let mut out = Vec::with_capacity(self.elements.len() + self.side_branches.len());
        for pos in 0..=self.elements.len() {
            for (j, b) in self.side_branches.iter().enumerate() {
                if b.position == pos {
                    out.push(Stage::Branch(j));
                }
            }
            if pos < self.elements.len() {
                out.push(Stage::Element(pos));
            }
        }
        out
    }

    fn stage_abcd(&self, s: Stage, f: Complex64) -> Abcd {
        match s {
            Stage::Element(i) => self.elements[i].abcd_at(f),
            Stage::Branch(j) => self.side_branches[j].abcd_at(f),
        }
    }

    /// Total ABCD matrix with all branches folded in.
    pub fn total_abcd(&self, f: Complex64) -> Abcd {
        self.stages()
            .into_iter()
            .fold(Abcd::identity(), |acc, s| acc * self.stage_abcd(s, f))
    }

    /// S11 and S21 at a real frequency.
    pub fn s_params(&self, freq: f64) -> (Complex64, Complex64) {
        s_from_abcd(
            &self.total_abcd(Complex64::from(freq)),
            self.input_port_impedance,
            self.output_port_impedance,
        )
    }

    /// Admittance seen at the tap of `branch` looking into the rest of the
    /// circuit (both ports terminated), excluding the branch itself.
    pub fn environment_admittance(&self, branch: usize, f: Complex64) -> Complex64 {
        let stages = self.stages();
        let k = stages
            .iter()
            .position(|s| *s == Stage::Branch(branch))
            .expect("branch index in range");
        let left = stages[..k]
            .iter()
            .fold(Abcd::identity(), |acc, s| acc * self.stage_abcd(*s, f));
        let right = stages[k + 1..]
            .iter()
            .fold(Abcd::identity(), |acc, s| acc * self.stage_abcd(*s, f));
        let r1 = Complex64::from(self.input_port_impedance);
        let r2 = Complex64::from(self.output_port_impedance);
        let y_right = (right.c * r2 + right.d) / (right.a * r2 + right.b);
        // left half seen backwards (reciprocal), source impedance at its far end
        let y_left = (left.c * r1 + left.a) / (left.d * r1 + left.b);
        y_left + y_right
    }

    /// Network with the given branches removed.
    pub fn without_branches(&self, keep: impl Fn(&SideBranch) -> bool) -> Self {
        let mut n = self.clone();
        n.side_branches.retain(|b| keep(b));
        n
    }
}

/// S11, S21 for real port resistances `r1`, `r2`.
pub fn s_from_abcd(m: &Abcd, r1: f64, r2: f64) -> (Complex64, Complex64) {
    let den = m.a * r2 + m.b + m.c * (r1 * r2) + m.d * r1;
    let s21 = Complex64::from(2.0 * (r1 * r2).sqrt()) / den;
    let s11 = (m.a * r2 + m.b - m.c * (r1 * r2) - m.d * r1) / den;
    (s11, s21)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub freq_hz: f64,
    pub s21: Complex64,
    /// Set when the total matrix was singular or non-finite at this point.
    pub singular: bool,
}

impl SweepPoint {
    pub fn mag_db(&self) -> f64 {
        20.0 * self.s21.norm().log10()
    }
}

/// S21 at each frequency, in input order.
pub fn s21_sweep(net: &CircuitNetwork, freqs: &[f64]) -> Result<Vec<SweepPoint>> {
    net.validate()?;
    if freqs.is_empty() {
        return Err(Error::param("empty frequency list"));
    }
    if freqs.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(Error::param("frequencies must be finite and > 0"));
    }
    if freqs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("frequencies must be strictly increasing"));
    }
    Ok(freqs
        .par_iter()
        .map(|&f| {
            let (_, s21) = net.s_params(f);
            let singular = !s21.is_finite();
            SweepPoint {
                freq_hz: f,
                s21: if singular {
                    Complex64::new(f64::NAN, f64::NAN)
                } else {
                    s21
                },
                singular,
            }
        })
        .collect())
}

/// `n` evenly spaced points over `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Default sweep resolution.
pub const DEFAULT_GRID_POINTS: usize = 2001;

/// Options for [`resonance_pole`].
#[derive(Debug, Clone, Copy)]
pub struct PoleOptions {
    /// Largest Newton step in Hz.
    pub max_step_hz: f64,
    pub max_iter: usize,
    pub tol_hz: f64,
}

impl Default for PoleOptions {
    fn default() -> Self {
        Self {
            max_step_hz: 20e6,
            max_iter: 400,
            tol_hz: 1e-3,
        }
    }
}

/// Complex natural frequency of the mode living mostly in `branch`, found as
/// a root of `1 + Z_branch · Y_env` by damped Newton from `guess_hz`. The
/// energy decay rate (FWHM in Hz) is `2 |Im f|`.
pub fn resonance_pole(
    net: &CircuitNetwork,
    branch: usize,
    guess_hz: f64,
    opts: PoleOptions,
) -> Result<Complex64> {
    net.validate()?;
    if branch >= net.side_branches.len() {
        return Err(Error::param(format!("no branch {branch}")));
    }
    let b = &net.side_branches[branch];
    let g = |f: Complex64| ONE + b.input_impedance(f) * net.environment_admittance(branch, f);
    let h = Complex64::from(guess_hz.abs() * 1e-8);
    let mut z = Complex64::from(guess_hz);
    for _ in 0..opts.max_iter {
        let gz = g(z);
        let dg = (g(z + h) - g(z - h)) / (h * 2.0);
        let mut step = gz / dg;
        if !step.is_finite() {
            break;
        }
        if step.norm() > opts.max_step_hz {
            step *= opts.max_step_hz / step.norm();
        }
        z -= step;
        if step.norm() < opts.tol_hz {
            return Ok(z);
        }
    }
    Err(Error::NotFound(format!(
        "pole search for branch '{}' did not converge from {guess_hz} Hz",
        b.label
    )))
}

/// Real frequency in `(lo, hi)` where `Im Z_in` of a branch crosses zero
/// (series resonance of the isolated branch), by bisection.
pub fn branch_series_zero(b: &SideBranch, lo: f64, hi: f64) -> Option<f64> {
    let im = |f: f64| b.input_impedance(Complex64::from(f)).im;
    let n = 400;
    let grid = linspace(lo, hi, n);
    for w in grid.windows(2) {
        let (fa, fb) = (im(w[0]), im(w[1]));
        // reject poles (sign flip through infinity)
        if fa.is_finite() && fb.is_finite() && fa < 0.0 && fb >= 0.0 {
            let (mut a, mut c) = (w[0], w[1]);
            for _ in 0..80 {
                let m = 0.5 * (a + c);
                if im(m) < 0.0 {
                    a = m;
                } else {
                    c = m;
                }
            }
            return Some(0.5 * (a + c));
        }
    }
    None
}
