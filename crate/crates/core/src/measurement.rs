//! Monte Carlo single-shot dispersive readout.
//!
//! IQ points are unit-variance circular Gaussians. The ground mean sits at the
//! origin and the excited mean at `√(2·SNR)` on the real axis, so the
//! midpoint discriminator misassigns with probability `½ erfc(√SNR/2)`.
//! An excited shot that relaxes before the end of the demodulation window
//! lands on the ground mean.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::rng::{blocks, substream, tag};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadoutPulseSpec {
    /// `τ_ro`, seconds.
    pub pulse_length: f64,
    /// `τ_demod`, seconds.
    pub demod_length: f64,
    /// `τ_m`, seconds.
    pub total_length: f64,
    /// Metadata linking the spec to leakage settings.
    pub n_r0: f64,
    pub n_r1: f64,
    /// `T1` during readout, seconds. `f64::INFINITY` disables relaxation.
    pub t1_readout: f64,
    pub snr: f64,
}

impl ReadoutPulseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1_readout > 0.0) {
            return Err(Error::param(format!(
                "T1 during readout {} must be > 0",
                self.t1_readout
            )));
        }
        if !(self.snr >= 0.0 && self.snr.is_finite()) {
            return Err(Error::param(format!("SNR {} must be >= 0", self.snr)));
        }
        for (name, v) in [
            ("pulse_length", self.pulse_length),
            ("demod_length", self.demod_length),
            ("total_length", self.total_length),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::param(format!("{name} = {v} must be >= 0")));
            }
        }
        if self.demod_length > self.total_length || self.pulse_length > self.total_length {
            return Err(Error::param(
                "pulse and demodulation lengths must not exceed the total length",
            ));
        }
        Ok(())
    }

    /// Distance between the two cloud centers in units of σ.
    pub fn separation(&self) -> f64 {
        (2.0 * self.snr).sqrt()
    }

    pub fn discriminator(&self) -> Discriminator {
        Discriminator::new(Complex64::new(0.0, 0.0), Complex64::new(self.separation(), 0.0))
    }

    /// Probability that an excited shot has relaxed within the window.
    pub fn decay_probability(&self) -> f64 {
        -(-self.demod_length / self.t1_readout).exp_m1()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PreparedState {
    Ground,
    Excited,
    /// `|2⟩`, reached by an extra 1→2 pulse before readout.
    Second,
}

impl PreparedState {
    fn index(self) -> u64 {
        match self {
            PreparedState::Ground => 0,
            PreparedState::Excited => 1,
            PreparedState::Second => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub iq: Complex64,
    pub true_initial_state: PreparedState,
    pub assigned: u8,
    pub qubit_id: usize,
}

/// Linear discriminant: projection on the line joining the two means,
/// threshold at their midpoint, ties to 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discriminator {
    pub mu0: Complex64,
    pub mu1: Complex64,
}

impl Discriminator {
    pub fn new(mu0: Complex64, mu1: Complex64) -> Self {
        Self { mu0, mu1 }
    }

    /// Means estimated as component-wise medians of each cloud, which
    /// ignores the relaxation tail of the excited cloud.
    pub fn from_shots(g: &[ShotRecord], e: &[ShotRecord]) -> Result<Self> {
        if g.is_empty() || e.is_empty() {
            return Err(Error::param("both shot lists must be non-empty"));
        }
        Ok(Self::new(median_iq(g), median_iq(e)))
    }

    /// Signed coordinate along the axis, with the threshold at 0.
    pub fn project(&self, iq: Complex64) -> f64 {
        let axis = self.mu1 - self.mu0;
        let n = axis.norm();
        if n == 0.0 {
            return 0.0;
        }
        let mid = (self.mu0 + self.mu1) * 0.5;
        ((iq - mid) * axis.conj()).re / n
    }

    pub fn assign(&self, iq: Complex64) -> u8 {
        u8::from(self.project(iq) > 0.0)
    }

    /// Same partition with labels exchanged and the axis reversed.
    pub fn swapped(&self) -> Self {
        Self::new(self.mu1, self.mu0)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn median_iq(shots: &[ShotRecord]) -> Complex64 {
    Complex64::new(
        median(shots.iter().map(|s| s.iq.re).collect()),
        median(shots.iter().map(|s| s.iq.im).collect()),
    )
}

/// Whether the excited-side signal survives the window (`true`) or the shot
/// has reached `|0⟩` (`false`).
fn survives<R: Rng>(rng: &mut R, state: PreparedState, spec: &ReadoutPulseSpec) -> bool {
    let t1 = spec.t1_readout;
    match state {
        PreparedState::Ground => false,
        PreparedState::Excited => {
            let t: f64 = Exp1.sample(rng);
            t * t1 >= spec.demod_length
        }
        PreparedState::Second => {
            let t21: f64 = Exp1.sample(rng);
            let t10: f64 = Exp1.sample(rng);
            // 2→1 at rate 2/T1, then 1→0 at rate 1/T1
            0.5 * t21 * t1 + t10 * t1 >= spec.demod_length
        }
    }
}

fn gaussian_iq<R: Rng>(rng: &mut R, mean: Complex64) -> Complex64 {
    let i: f64 = StandardNormal.sample(rng);
    let q: f64 = StandardNormal.sample(rng);
    mean + Complex64::new(i, q)
}

/// Single-qubit shots, deterministic in `seed` and independent of thread count.
pub fn simulate_shots(
    spec: &ReadoutPulseSpec,
    prepared: PreparedState,
    n_shots: usize,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    spec.validate()?;
    if n_shots == 0 {
        return Err(Error::param("n_shots must be >= 1"));
    }
    let disc = spec.discriminator();
    let stream = tag(&[1, prepared.index()]);
    let chunks: Vec<Vec<ShotRecord>> = blocks(n_shots)
        .into_par_iter()
        .map(|(b, _, len)| {
            let mut rng = substream(seed, stream, b);
            (0..len)
                .map(|_| {
                    let excited_signal = survives(&mut rng, prepared, spec);
                    let mean = if excited_signal { disc.mu1 } else { disc.mu0 };
                    let iq = gaussian_iq(&mut rng, mean);
                    ShotRecord {
                        iq,
                        true_initial_state: prepared,
                        assigned: disc.assign(iq),
                        qubit_id: 0,
                    }
                })
                .collect()
        })
        .collect();
    Ok(chunks.concat())
}

/// `F = [P(0|g) + P(1|e)] / 2` under `disc`.
pub fn fidelity(shots_g: &[ShotRecord], shots_e: &[ShotRecord], disc: &Discriminator) -> Result<f64> {
    if shots_g.is_empty() || shots_e.is_empty() {
        return Err(Error::param("both shot lists must be non-empty"));
    }
    let p0g = shots_g.iter().filter(|s| disc.assign(s.iq) == 0).count() as f64 / shots_g.len() as f64;
    let p1e = shots_e.iter().filter(|s| disc.assign(s.iq) == 1).count() as f64 / shots_e.len() as f64;
    Ok(0.5 * (p0g + p1e))
}

/// `ε_sep = ½ erfc(√SNR / 2)`.
pub fn separation_error(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::param(format!("SNR {snr} must be >= 0")));
    }
    Ok(0.5 * erfc(snr.sqrt() / 2.0))
}

/// Inverse of [`separation_error`].
pub fn snr_for_separation_error(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::param(format!("separation error {eps} outside (0, 0.5]")));
    }
    let x = 2.0 * erfc_inv(2.0 * eps);
    Ok(x * x)
}

/// `0.5 (1 − e^{−τ/T1})`.
pub fn relaxation_error(tau_demod: f64, t1_readout: f64) -> Result<f64> {
    if !(tau_demod >= 0.0 && t1_readout > 0.0) {
        return Err(Error::param("need τ >= 0 and T1 > 0"));
    }
    Ok(-0.5 * (-tau_demod / t1_readout).exp_m1())
}

/// `T1_r` at which [`relaxation_error`] equals `eps`.
pub fn t1_for_relaxation_error(tau_demod: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 0.5 && tau_demod > 0.0) {
        return Err(Error::param(format!("relaxation error {eps} outside (0, 0.5)")));
    }
    Ok(-tau_demod / (-2.0 * eps).ln_1p())
}

/// Exact `(P(1|0), P(1|1))` for one qubit whose means are both shifted by
/// `shift` (in units of the separation) toward the excited side.
pub fn analytic_assignment(spec: &ReadoutPulseSpec, shift: f64) -> (f64, f64) {
    let d = spec.separation();
    // P(project > 0) for a unit Gaussian centered at c on the axis
    let above = |c: f64| 0.5 * erfc(-c / std::f64::consts::SQRT_2);
    let p10 = above(-0.5 * d + shift * d);
    let p11_signal = above(0.5 * d + shift * d);
    let keep = 1.0 - spec.decay_probability();
    (p10, keep * p11_signal + (1.0 - keep) * p10)
}

/// Expected fidelity of the Gaussian-plus-relaxation model.
pub fn expected_fidelity(spec: &ReadoutPulseSpec) -> f64 {
    let (p10, p11) = analytic_assignment(spec, 0.0);
    0.5 * ((1.0 - p10) + p11)
}

/// Expected fidelity with `|1⟩` promoted to `|2⟩` before readout.
pub fn expected_multilevel_fidelity(spec: &ReadoutPulseSpec) -> f64 {
    let eps = 0.5 * erfc(spec.snr.sqrt() / 2.0);
    let (a, b) = (2.0 / spec.t1_readout, 1.0 / spec.t1_readout);
    let t = spec.demod_length;
    // P(2→1→0 completes within t) for sequential exponentials
    let reach0 = if spec.t1_readout.is_infinite() {
        0.0
    } else {
        1.0 - (a * (-b * t).exp() - b * (-a * t).exp()) / (a - b)
    };
    let p11 = (1.0 - reach0) * (1.0 - eps) + reach0 * eps;
    0.5 * ((1.0 - eps) + p11)
}

/// SNR at which [`expected_fidelity`] equals `target`, by bisection.
pub fn snr_for_fidelity(spec: &ReadoutPulseSpec, target: f64) -> Result<f64> {
    let f = |snr: f64| expected_fidelity(&ReadoutPulseSpec { snr, ..*spec });
    if target <= f(0.0) || target >= f(1e4) {
        return Err(Error::param(format!("fidelity {target} unreachable")));
    }
    let (mut lo, mut hi) = (0.0, 1e4);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// SNR at which [`expected_multilevel_fidelity`] equals `target`.
pub fn snr_for_multilevel_fidelity(spec: &ReadoutPulseSpec, target: f64) -> Result<f64> {
    let f = |snr: f64| expected_multilevel_fidelity(&ReadoutPulseSpec { snr, ..*spec });
    if target <= f(0.0) || target >= f(1e4) {
        return Err(Error::param(format!("fidelity {target} unreachable")));
    }
    let (mut lo, mut hi) = (0.0, 1e4);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Monte Carlo fidelity, optionally with `|1⟩ → |2⟩` promotion before readout.
pub fn multilevel_fidelity(
    spec: &ReadoutPulseSpec,
    use_12_promotion: bool,
    n_shots: usize,
    seed: u64,
) -> Result<f64> {
    let excited = if use_12_promotion {
        PreparedState::Second
    } else {
        PreparedState::Excited
    };
    let g = simulate_shots(spec, PreparedState::Ground, n_shots, seed)?;
    let e = simulate_shots(spec, excited, n_shots, seed)?;
    fidelity(&g, &e, &spec.discriminator())
}

/// Misassignment decomposition for one qubit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBudget {
    /// `1 − F` from Monte Carlo.
    pub readout_error: f64,
    pub separation_error: f64,
    pub relaxation_error: f64,
    /// `P(1|g)`, the Monte Carlo estimate of the separation error.
    pub separation_error_mc: f64,
    /// `[P(0|e) − P(1|g)] / 2`, the Monte Carlo estimate of the relaxation error.
    pub relaxation_error_mc: f64,
    /// `readout_error − separation_error − relaxation_error`.
    pub residual: f64,
    pub fidelity: f64,
    pub shots_per_state: usize,
}

impl ErrorBudget {
    /// Binomial standard error of `1 − F`.
    pub fn readout_error_stderr(&self) -> f64 {
        let e = self.readout_error;
        (e * (1.0 - e) / (2.0 * self.shots_per_state as f64)).sqrt()
    }
}

pub fn error_budget(spec: &ReadoutPulseSpec, n_shots: usize, seed: u64) -> Result<ErrorBudget> {
    let g = simulate_shots(spec, PreparedState::Ground, n_shots, seed)?;
    let e = simulate_shots(spec, PreparedState::Excited, n_shots, seed)?;
    let disc = spec.discriminator();
    let f = fidelity(&g, &e, &disc)?;
    let p1g = g.iter().filter(|s| s.assigned == 1).count() as f64 / n_shots as f64;
    let p0e = e.iter().filter(|s| s.assigned == 0).count() as f64 / n_shots as f64;
    let sep = separation_error(spec.snr)?;
    let relax = relaxation_error(spec.demod_length, spec.t1_readout)?;
    Ok(ErrorBudget {
        readout_error: 1.0 - f,
        separation_error: sep,
        relaxation_error: relax,
        separation_error_mc: p1g,
        relaxation_error_mc: 0.5 * (p0e - p1g),
        residual: (1.0 - f) - sep - relax,
        fidelity: f,
        shots_per_state: n_shots,
    })
}

/// Histogram of the projections of both clouds on the discriminator axis.
/// Returns `(bin_center, count_g, count_e)`.
pub fn histogram(
    shots_g: &[ShotRecord],
    shots_e: &[ShotRecord],
    disc: &Discriminator,
    bins: usize,
) -> Vec<(f64, u64, u64)> {
    let pg: Vec<f64> = shots_g.iter().map(|s| disc.project(s.iq)).collect();
    let pe: Vec<f64> = shots_e.iter().map(|s| disc.project(s.iq)).collect();
    let lo = pg.iter().chain(&pe).copied().fold(f64::INFINITY, f64::min);
    let hi = pg.iter().chain(&pe).copied().fold(f64::NEG_INFINITY, f64::max);
    if bins == 0 || !(hi > lo) {
        return Vec::new();
    }
    let width = (hi - lo) / bins as f64;
    let mut out: Vec<(f64, u64, u64)> = (0..bins)
        .map(|i| (lo + (i as f64 + 0.5) * width, 0, 0))
        .collect();
    let idx = |x: f64| (((x - lo) / width) as usize).min(bins - 1);
    for x in pg {
        out[idx(x)].1 += 1;
    }
    for x in pe {
        out[idx(x)].2 += 1;
    }
    out
}

/// Conditional probabilities `P(assigned | prepared)` over `2^N` basis states.
/// Qubit 0 is the most significant bit of a state index.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    pub n_qubits: usize,
    /// `probs[prepared][assigned]`.
    pub probs: Vec<Vec<f64>>,
    /// Shots per prepared state; 0 for an analytic matrix.
    pub shots_per_state: usize,
}

impl AssignmentMatrix {
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn bit(&self, state: usize, qubit: usize) -> usize {
        (state >> (self.n_qubits - 1 - qubit)) & 1
    }

    /// `P(outcome_i = 1 | prepared_j = b)` averaged uniformly over the
    /// other prepared bits.
    pub fn marginal_one(&self, i: usize, j: usize, b: usize) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        let mut count = 0;
        for s in 0..d {
            if self.bit(s, j) != b {
                continue;
            }
            count += 1;
            acc += (0..d)
                .filter(|&a| self.bit(a, i) == 1)
                .map(|a| self.probs[s][a])
                .sum::<f64>();
        }
        acc / count as f64
    }

    /// Cross-fidelity `F_ij = 1 − [P(1_i|0_j) + P(0_i|1_j)]`.
    pub fn cross_fidelity(&self) -> Vec<Vec<f64>> {
        let n = self.n_qubits;
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| 1.0 - (self.marginal_one(i, j, 0) + 1.0 - self.marginal_one(i, j, 1)))
                    .collect()
            })
            .collect()
    }

    /// Mean `|F_ij|` over `i ≠ j`.
    pub fn mean_cross_fidelity(&self) -> f64 {
        let f = self.cross_fidelity();
        let n = self.n_qubits;
        if n < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, row) in f.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    acc += v.abs();
                }
            }
        }
        acc / (n * (n - 1)) as f64
    }

    /// Single-qubit fidelity of qubit `i`, averaged over the other qubits.
    pub fn qubit_fidelity(&self, i: usize) -> f64 {
        0.5 * ((1.0 - self.marginal_one(i, i, 0)) + self.marginal_one(i, i, 1))
    }

    pub fn label(&self, state: usize) -> String {
        (0..self.n_qubits)
            .map(|q| char::from(b'0' + self.bit(state, q) as u8))
            .collect()
    }
}

fn check_crosstalk(n: usize, crosstalk: &[Vec<f64>]) -> Result<()> {
    if crosstalk.len() != n || crosstalk.iter().any(|r| r.len() != n) {
        return Err(Error::param(format!(
            "crosstalk must be {n}×{n} to match the pulse specs"
        )));
    }
    for (i, row) in crosstalk.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i == j && c != 0.0 {
                return Err(Error::param("crosstalk diagonal must be 0"));
            }
            if !(c >= 0.0 && c.is_finite()) {
                return Err(Error::param("crosstalk entries must be finite and >= 0"));
            }
        }
    }
    Ok(())
}

fn shifts(n: usize, crosstalk: &[Vec<f64>], state: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            (0..n)
                .map(|k| crosstalk[j][k] * ((state >> (n - 1 - k)) & 1) as f64)
                .sum()
        })
        .collect()
}

/// Joint shots for every basis state. Qubit `j`'s means move toward its
/// excited side by `Σ_k c_jk · s_k` separations, where `s_k` is the
/// prepared bit of qubit `k`.
pub fn multiplexed_assignment(
    specs: &[ReadoutPulseSpec],
    crosstalk: &[Vec<f64>],
    n_shots: usize,
    seed: u64,
) -> Result<AssignmentMatrix> {
    let n = specs.len();
    if n == 0 || n > 10 {
        return Err(Error::param("need between 1 and 10 qubits"));
    }
    if n_shots == 0 {
        return Err(Error::param("n_shots must be >= 1"));
    }
    check_crosstalk(n, crosstalk)?;
    for s in specs {
        s.validate()?;
    }
    let dim = 1usize << n;
    let probs = (0..dim)
        .into_par_iter()
        .map(|state| {
            let shift = shifts(n, crosstalk, state);
            let stream = tag(&[2, state as u64]);
            let counts = blocks(n_shots)
                .into_par_iter()
                .map(|(b, _, len)| {
                    let mut rng = substream(seed, stream, b);
                    let mut c = vec![0u64; dim];
                    for _ in 0..len {
                        let mut outcome = 0usize;
                        for (j, spec) in specs.iter().enumerate() {
                            let prepared = if (state >> (n - 1 - j)) & 1 == 1 {
                                PreparedState::Excited
                            } else {
                                PreparedState::Ground
                            };
                            let d = spec.separation();
                            let signal = survives(&mut rng, prepared, spec);
                            let base = if signal { d } else { 0.0 };
                            let iq = gaussian_iq(&mut rng, Complex64::new(base + shift[j] * d, 0.0));
                            let a = spec.discriminator().assign(iq) as usize;
                            outcome |= a << (n - 1 - j);
                        }
                        c[outcome] += 1;
                    }
                    c
                })
                .reduce(
                    || vec![0u64; dim],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                );
            counts
                .into_iter()
                .map(|c| c as f64 / n_shots as f64)
                .collect::<Vec<f64>>()
        })
        .collect();
    Ok(AssignmentMatrix {
        n_qubits: n,
        probs,
        shots_per_state: n_shots,
    })
}

/// Exact assignment matrix of the same model.
pub fn analytic_assignment_matrix(
    specs: &[ReadoutPulseSpec],
    crosstalk: &[Vec<f64>],
) -> Result<AssignmentMatrix> {
    let n = specs.len();
    if n == 0 || n > 10 {
        return Err(Error::param("need between 1 and 10 qubits"));
    }
    check_crosstalk(n, crosstalk)?;
    let dim = 1usize << n;
    let probs = (0..dim)
        .map(|state| {
            let shift = shifts(n, crosstalk, state);
            let p_one: Vec<f64> = (0..n)
                .map(|j| {
                    let (p10, p11) = analytic_assignment(&specs[j], shift[j]);
                    if (state >> (n - 1 - j)) & 1 == 1 {
                        p11
                    } else {
                        p10
                    }
                })
                .collect();
            (0..dim)
                .map(|a| {
                    (0..n)
                        .map(|j| {
                            if (a >> (n - 1 - j)) & 1 == 1 {
                                p_one[j]
                            } else {
                                1.0 - p_one[j]
                            }
                        })
                        .product()
                })
                .collect()
        })
        .collect();
    Ok(AssignmentMatrix {
        n_qubits: n,
        probs,
        shots_per_state: 0,
    })
}

/// Uniform off-diagonal coupling giving a target mean cross-fidelity, by
/// bisection on the analytic matrix.
pub fn uniform_crosstalk_for_cross_fidelity(specs: &[ReadoutPulseSpec], target: f64) -> Result<f64> {
    let n = specs.len();
    if n < 2 {
        return Err(Error::param("cross-fidelity needs at least two qubits"));
    }
    let mean_cf = |c: f64| -> Result<f64> {
        let m: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { c }).collect())
            .collect();
        Ok(analytic_assignment_matrix(specs, &m)?.mean_cross_fidelity())
    };
    let base = mean_cf(0.0)?;
    let (mut lo, mut hi) = (0.0, 0.5);
    if mean_cf(hi)? < target || base > target {
        return Err(Error::param(format!("cross-fidelity {target} unreachable")));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_cf(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
