//! Leakage and seepage under repeated measurement.
//!
//! The qubit carries a latent computational bit and a leak flag. Each
//! measurement reports the state present when it starts and is followed by a
//! transition: computational → leaked with probability `L↑`, leaked →
//! computational with `L↓`. X gates flip the latent bit even while leaked, so
//! a seeping shot rejoins the trajectory it left (the default
//! [`SeepageMode::Restore`]).

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fit::{levenberg_marquardt, LmOptions};
use crate::rng::{blocks, substream, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeepageMode {
    /// Return to the latent bit.
    Restore,
    /// Return to 0 or 1 with equal probability.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeakReadout {
    /// Leaked state always reads "1".
    One,
    /// Leaked state reads "1" with probability ½.
    Half,
}

impl LeakReadout {
    fn p_one(self) -> f64 {
        match self {
            LeakReadout::One => 1.0,
            LeakReadout::Half => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakageChain {
    /// `L↑` per measurement.
    pub leak_rate: f64,
    /// `L↓` per measurement.
    pub seep_rate: f64,
    /// `[P(read 1 | 0), P(read 0 | 1)]`.
    pub readout_error: [f64; 2],
    pub leak_readout: LeakReadout,
    pub seepage: SeepageMode,
    /// Distribution over `{0, 1, leak}` before the first gate.
    pub initial: [f64; 3],
}

impl LeakageChain {
    pub fn new(leak_rate: f64, seep_rate: f64) -> Self {
        Self {
            leak_rate,
            seep_rate,
            readout_error: [0.0, 0.0],
            leak_readout: LeakReadout::One,
            seepage: SeepageMode::Restore,
            initial: [1.0, 0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (u, d) = (self.leak_rate, self.seep_rate);
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&d) || u + d > 1.0 {
            return Err(Error::param(format!(
                "rates L↑ = {u}, L↓ = {d} need 0 ≤ each and sum ≤ 1"
            )));
        }
        if self.readout_error.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(Error::param("readout errors must lie in [0, 1]"));
        }
        if self.initial.iter().any(|p| !(*p >= 0.0)) || (self.initial.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::param("initial distribution must be non-negative and sum to 1"));
        }
        Ok(())
    }

    pub fn rate_sum(&self) -> f64 {
        self.leak_rate + self.seep_rate
    }

    /// Stationary computational population `B = L↓ / (L↑ + L↓)`; `None` for a frozen chain.
    pub fn steady_state(&self) -> Option<f64> {
        let l = self.rate_sum();
        (l > 0.0).then(|| self.seep_rate / l)
    }

    /// `P(read 1 | state)` for computational 0, 1 and leaked.
    fn p_read_one(&self) -> [f64; 3] {
        [
            self.readout_error[0],
            1.0 - self.readout_error[1],
            self.leak_readout.p_one(),
        ]
    }
}

/// Joint populations over latent bit × leak flag.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChainState {
    pub comp: [f64; 2],
    pub leak: [f64; 2],
}

impl ChainState {
    /// Leaked population starts with its latent bit split evenly.
    pub fn from_distribution(d: [f64; 3]) -> Self {
        Self {
            comp: [d[0], d[1]],
            leak: [0.5 * d[2], 0.5 * d[2]],
        }
    }

    pub fn distribution(&self) -> [f64; 3] {
        [self.comp[0], self.comp[1], self.leak[0] + self.leak[1]]
    }

    pub fn x_gate(&self) -> Self {
        Self {
            comp: [self.comp[1], self.comp[0]],
            leak: [self.leak[1], self.leak[0]],
        }
    }

    /// Equal superposition of the latent bit (X/2 followed by projection).
    pub fn x_half(&self) -> Self {
        let c = 0.5 * (self.comp[0] + self.comp[1]);
        let l = 0.5 * (self.leak[0] + self.leak[1]);
        Self {
            comp: [c, c],
            leak: [l, l],
        }
    }

    /// Leakage transition of one measurement.
    pub fn transition(&self, chain: &LeakageChain) -> Self {
        let (u, d) = (chain.leak_rate, chain.seep_rate);
        let mut out = Self::default();
        for b in 0..2 {
            out.comp[b] += self.comp[b] * (1.0 - u);
            out.leak[b] += self.leak[b] * (1.0 - d) + self.comp[b] * u;
            match chain.seepage {
                SeepageMode::Restore => out.comp[b] += self.leak[b] * d,
                SeepageMode::Uniform => {
                    let back = 0.5 * (self.leak[0] + self.leak[1]) * d;
                    out.comp[b] += back;
                }
            }
        }
        out
    }

    fn total(&self) -> f64 {
        self.comp[0] + self.comp[1] + self.leak[0] + self.leak[1]
    }
}

/// Distribution over `{0, 1, leak}` after `m` measurements without gates,
/// from the closed form `P_m = A(1 − L↑ − L↓)^m + B`.
pub fn propagate_exact(chain: &LeakageChain, m: u32) -> Result<[f64; 3]> {
    chain.validate()?;
    let s0 = ChainState::from_distribution(chain.initial);
    let l = chain.rate_sum();
    let lam = (1.0 - l).powi(m as i32);
    let Some(b) = chain.steady_state() else {
        return Ok(chain.initial);
    };
    let tot = s0.total();
    let comp_total = (s0.comp[0] + s0.comp[1] - b * tot) * lam + b * tot;
    let comp = match chain.seepage {
        SeepageMode::Restore => {
            let c = |bit: usize| {
                let t = s0.comp[bit] + s0.leak[bit];
                (s0.comp[bit] - b * t) * lam + b * t
            };
            [c(0), c(1)]
        }
        SeepageMode::Uniform => {
            let diff = (s0.comp[0] - s0.comp[1]) * (1.0 - chain.leak_rate).powi(m as i32);
            [0.5 * (comp_total + diff), 0.5 * (comp_total - diff)]
        }
    };
    Ok([comp[0], comp[1], tot - comp_total])
}

/// Same as [`propagate_exact`] by iterating the one-step map.
pub fn propagate_steps(chain: &LeakageChain, m: u32) -> [f64; 3] {
    let mut s = ChainState::from_distribution(chain.initial);
    for _ in 0..m {
        s = s.transition(chain);
    }
    s.distribution()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Interleave {
    XGate,
    RandomBitflip,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialGate {
    XHalf,
    X,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SequenceSchedule {
    /// Last measurement index; measurements run `0..=m_max`.
    pub m_max: usize,
    pub interleave: Interleave,
    pub initial_gate: InitialGate,
}

impl SequenceSchedule {
    pub fn pi_qnd(m_max: usize) -> Self {
        Self {
            m_max,
            interleave: Interleave::XGate,
            initial_gate: InitialGate::XHalf,
        }
    }

    pub fn random_circuit(m_max: usize) -> Self {
        Self {
            m_max,
            interleave: Interleave::RandomBitflip,
            initial_gate: InitialGate::Identity,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.m_max < 2 {
            return Err(Error::param("m_max must be >= 2"));
        }
        Ok(())
    }
}

/// Conditional outcome statistics at one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleStat {
    pub m: usize,
    pub successes: u64,
    pub trials: u64,
}

impl CycleStat {
    pub fn p(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.successes as f64 / self.trials as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        let p = self.p();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiQndSeries {
    /// `P^m_X(0|1)` for `m = 1..=m_max`.
    pub p0_given_1: Vec<CycleStat>,
    /// `P^m_X(1|0)` for `m = 1..=m_max`.
    pub p1_given_0: Vec<CycleStat>,
    /// Set when fewer than 100 shots were simulated.
    pub low_statistics: bool,
}

#[derive(Debug, Clone, Copy)]
struct Shot {
    bit: u8,
    leaked: bool,
}

impl Shot {
    fn read<R: Rng>(&self, chain: &LeakageChain, rng: &mut R) -> u8 {
        let p1 = if self.leaked {
            chain.leak_readout.p_one()
        } else if self.bit == 1 {
            1.0 - chain.readout_error[1]
        } else {
            chain.readout_error[0]
        };
        u8::from(rng.random::<f64>() < p1)
    }

    fn transition<R: Rng>(&mut self, chain: &LeakageChain, rng: &mut R) {
        let u: f64 = rng.random();
        if self.leaked {
            if u < chain.seep_rate {
                self.leaked = false;
                if chain.seepage == SeepageMode::Uniform {
                    self.bit = u8::from(rng.random::<bool>());
                }
            }
        } else if u < chain.leak_rate {
            self.leaked = true;
        }
    }

    fn initial<R: Rng>(chain: &LeakageChain, rng: &mut R) -> Self {
        let u: f64 = rng.random();
        let [p0, p1, _] = chain.initial;
        if u < p0 {
            Shot { bit: 0, leaked: false }
        } else if u < p0 + p1 {
            Shot { bit: 1, leaked: false }
        } else {
            Shot {
                bit: u8::from(rng.random::<bool>()),
                leaked: true,
            }
        }
    }

    fn apply(&mut self, gate: InitialGate, rng: &mut impl Rng) {
        match gate {
            InitialGate::Identity => {}
            InitialGate::X => self.bit ^= 1,
            InitialGate::XHalf => self.bit = u8::from(rng.random::<bool>()),
        }
    }
}

/// π-QND sequence: initial gate, herald measurement `m = 0`, then X and a
/// measurement per cycle. The herald outcome `h` fixes the ideal outcome
/// `h ⊕ (m mod 2)`; `P^m_X(0|1)` collects shots whose ideal outcome at
/// `m−1` was 1, and `P^m_X(1|0)` those whose ideal outcome was 0.
pub fn simulate_pi_qnd(
    chain: &LeakageChain,
    sched: &SequenceSchedule,
    n_shots: usize,
    seed: u64,
) -> Result<PiQndSeries> {
    chain.validate()?;
    sched.validate()?;
    if sched.interleave != Interleave::XGate {
        return Err(Error::param("π-QND needs X-gate interleaving"));
    }
    if n_shots == 0 {
        return Err(Error::param("n_shots must be >= 1"));
    }
    let mm = sched.m_max;
    let stream = tag(&[3]);
    let (s01, t01, s10, t10) = blocks(n_shots)
        .into_par_iter()
        .map(|(b, _, len)| {
            let mut rng = substream(seed, stream, b);
            let mut s01 = vec![0u64; mm];
            let mut t01 = vec![0u64; mm];
            let mut s10 = vec![0u64; mm];
            let mut t10 = vec![0u64; mm];
            for _ in 0..len {
                let mut q = Shot::initial(chain, &mut rng);
                q.apply(sched.initial_gate, &mut rng);
                let herald = q.read(chain, &mut rng);
                q.transition(chain, &mut rng);
                for m in 1..=mm {
                    q.bit ^= 1;
                    let out = q.read(chain, &mut rng);
                    q.transition(chain, &mut rng);
                    let ideal_prev = herald ^ ((m - 1) % 2) as u8;
                    if ideal_prev == 1 {
                        t01[m - 1] += 1;
                        s01[m - 1] += u64::from(out == 0);
                    } else {
                        t10[m - 1] += 1;
                        s10[m - 1] += u64::from(out == 1);
                    }
                }
            }
            (s01, t01, s10, t10)
        })
        .reduce(
            || (vec![0; mm], vec![0; mm], vec![0; mm], vec![0; mm]),
            |mut a, b| {
                for i in 0..mm {
                    a.0[i] += b.0[i];
                    a.1[i] += b.1[i];
                    a.2[i] += b.2[i];
                    a.3[i] += b.3[i];
                }
                a
            },
        );
    let stats = |s: &[u64], t: &[u64]| {
        (0..mm)
            .map(|i| CycleStat {
                m: i + 1,
                successes: s[i],
                trials: t[i],
            })
            .collect()
    };
    Ok(PiQndSeries {
        p0_given_1: stats(&s01, &t01),
        p1_given_0: stats(&s10, &t10),
        low_statistics: n_shots < 100,
    })
}

/// Exact `(P^m_X(0|1), P^m_X(1|0))` for `m = 1..=m_max`, by propagating the
/// joint populations of each herald branch.
pub fn exact_pi_qnd(chain: &LeakageChain, sched: &SequenceSchedule) -> Result<Vec<(f64, f64)>> {
    chain.validate()?;
    sched.validate()?;
    let r1 = chain.p_read_one();
    let mut start = ChainState::from_distribution(chain.initial);
    start = match sched.initial_gate {
        InitialGate::Identity => start,
        InitialGate::X => start.x_gate(),
        InitialGate::XHalf => start.x_half(),
    };
    let weight_one = |s: &ChainState| {
        s.comp[0] * r1[0] + s.comp[1] * r1[1] + (s.leak[0] + s.leak[1]) * r1[2]
    };
    // branch h: populations jointly with herald outcome h
    let mut branch = [ChainState::default(); 2];
    for (h, br) in branch.iter_mut().enumerate() {
        let w = |p1: f64| if h == 1 { p1 } else { 1.0 - p1 };
        *br = ChainState {
            comp: [start.comp[0] * w(r1[0]), start.comp[1] * w(r1[1])],
            leak: [start.leak[0] * w(r1[2]), start.leak[1] * w(r1[2])],
        }
        .transition(chain);
    }
    let mut out = Vec::with_capacity(sched.m_max);
    for m in 1..=sched.m_max {
        for br in branch.iter_mut() {
            *br = br.x_gate();
        }
        let mut p01 = f64::NAN;
        let mut p10 = f64::NAN;
        for (h, br) in branch.iter().enumerate() {
            let norm = br.total();
            let one = weight_one(br) / norm;
            if (h ^ ((m - 1) % 2)) == 1 {
                p01 = 1.0 - one;
            } else {
                p10 = one;
            }
        }
        out.push((p01, p10));
        for br in branch.iter_mut() {
            *br = br.transition(chain);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    /// `⟨C_m⟩` for `m = 0..=m_max`.
    pub mean: Vec<f64>,
    /// Binomial standard error of each point.
    pub stderr: Vec<f64>,
    pub trials_per_point: u64,
}

/// Random-circuit benchmark: measurements interleaved with random bit flips;
/// `C_m = 1` when the outcome equals the ideal bit.
pub fn simulate_random_circuit(
    chain: &LeakageChain,
    sched: &SequenceSchedule,
    n_random: usize,
    n_shots: usize,
    seed: u64,
) -> Result<CorrelationSeries> {
    chain.validate()?;
    sched.validate()?;
    if sched.interleave != Interleave::RandomBitflip {
        return Err(Error::param("random circuit needs random bit-flip interleaving"));
    }
    if n_random == 0 || n_shots == 0 {
        return Err(Error::param("n_random and n_shots must be >= 1"));
    }
    let mm = sched.m_max;
    let hits: Vec<u64> = (0..n_random)
        .into_par_iter()
        .map(|r| {
            let mut seq_rng = substream(seed, tag(&[4]), r as u64);
            let flips: Vec<u8> = (0..mm).map(|_| u8::from(seq_rng.random::<bool>())).collect();
            let mut hits = vec![0u64; mm + 1];
            for (b, _, len) in blocks(n_shots) {
                let mut rng = substream(seed, tag(&[5, r as u64]), b);
                for _ in 0..len {
                    let mut q = Shot::initial(chain, &mut rng);
                    let mut ideal = q.bit;
                    q.apply(sched.initial_gate, &mut rng);
                    if sched.initial_gate == InitialGate::X {
                        ideal ^= 1;
                    }
                    for m in 0..=mm {
                        let out = q.read(chain, &mut rng);
                        hits[m] += u64::from(out == ideal);
                        q.transition(chain, &mut rng);
                        if m < mm && flips[m] == 1 {
                            q.bit ^= 1;
                            ideal ^= 1;
                        }
                    }
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; mm + 1],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let trials = (n_random * n_shots) as u64;
    let mean: Vec<f64> = hits.iter().map(|&h| h as f64 / trials as f64).collect();
    let stderr = mean
        .iter()
        .map(|&p| (p * (1.0 - p) / trials as f64).sqrt())
        .collect();
    Ok(CorrelationSeries {
        mean,
        stderr,
        trials_per_point: trials,
    })
}

/// Result of either leakage fit.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub a: f64,
    pub b: f64,
    /// `L = L↑ + L↓`.
    pub rate_sum: f64,
    pub leak_rate: f64,
    pub seep_rate: f64,
    /// From the fit covariance with binomial weights, which treat cycles as
    /// independent. Cycles of one run share shots, so these understate the
    /// run-to-run spread (about threefold at 4000 shots).
    pub leak_stderr: f64,
    pub seep_stderr: f64,
    pub rate_sum_stderr: f64,
    /// Covariance of the fitted parameters, in the fitter's own order.
    pub covariance: Vec<Vec<f64>>,
    /// Series indistinguishable from a constant; rates reported as 0.
    pub zero_rate: bool,
    pub iterations: usize,
    pub residual_trace: Vec<f64>,
}

fn weights_from_counts(p: &[f64], trials: Option<&[u64]>) -> Option<Vec<f64>> {
    trials.map(|t| {
        p.iter()
            .zip(t)
            .map(|(&pi, &n)| {
                let n = n as f64;
                // add-one smoothing keeps all-success points finite
                let ps = (pi * n + 1.0) / (n + 2.0);
                (n + 2.0) / (ps * (1.0 - ps))
            })
            .collect()
    })
}

fn is_flat(y: &[f64]) -> bool {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    hi - lo < 1e-12
}

fn zero_rate_fit(mean: f64, a: f64) -> DecayFit {
    DecayFit {
        a,
        b: mean,
        rate_sum: 0.0,
        leak_rate: 0.0,
        seep_rate: 0.0,
        leak_stderr: 0.0,
        seep_stderr: 0.0,
        rate_sum_stderr: 0.0,
        covariance: Vec::new(),
        zero_rate: true,
        iterations: 0,
        residual_trace: Vec::new(),
    }
}

/// Decay constant guess: first index where the excursion from the tail
/// falls below 1/e of its initial value.
fn rate_guess(m: &[f64], y: &[f64], tail: f64) -> f64 {
    let amp = y[0] - tail;
    let target = amp / std::f64::consts::E;
    for (mi, yi) in m.iter().zip(y) {
        if (yi - tail).abs() <= target.abs() && *mi > m[0] {
            return (1.0 / (mi - m[0])).clamp(1e-4, 0.5);
        }
    }
    (1.0 / (m[m.len() - 1] - m[0]).max(1.0)).clamp(1e-4, 0.5)
}

/// Fits `P_m = A(1 − L)^m + B` to cycles `m` and splits
/// `L↑ = L(1 − B)`, `L↓ = L B`.
pub fn fit_pi_qnd(m: &[f64], p: &[f64], trials: Option<&[u64]>) -> Result<DecayFit> {
    if m.len() < 4 || m.len() != p.len() {
        return Err(Error::param("need at least 4 cycles with matching lengths"));
    }
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::param("probabilities must lie in [0, 1]"));
    }
    if is_flat(p) {
        return Ok(zero_rate_fit(p[0], 0.0));
    }
    let w = weights_from_counts(p, trials);
    let q = p.len() / 4;
    let tail = p[p.len() - q.max(1)..].iter().sum::<f64>() / q.max(1) as f64;
    let l0 = rate_guess(m, p, tail);
    let a0 = (p[0] - tail) / (1.0 - l0).powf(m[0]);
    let model = |x: f64, th: &[f64]| th[0] * (1.0 - th[2]).powf(x) + th[1];
    let fit = levenberg_marquardt(m, p, w.as_deref(), &[a0, tail, l0], model, LmOptions::default())?;
    let (a, b, l) = (fit.params[0], fit.params[1], fit.params[2]);
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::Fit {
            iterations: fit.iterations,
            reason: format!("rate sum {l} outside [0, 1]"),
            residual_trace: fit.residual_trace,
        });
    }
    let c = &fit.covariance;
    let (var_b, var_l, cov_bl) = (c[1][1], c[2][2], c[1][2]);
    let var_up = (1.0 - b).powi(2) * var_l + l * l * var_b - 2.0 * l * (1.0 - b) * cov_bl;
    let var_down = b * b * var_l + l * l * var_b + 2.0 * l * b * cov_bl;
    Ok(DecayFit {
        a,
        b,
        rate_sum: l,
        leak_rate: l * (1.0 - b),
        seep_rate: l * b,
        leak_stderr: var_up.max(0.0).sqrt(),
        seep_stderr: var_down.max(0.0).sqrt(),
        rate_sum_stderr: var_l.max(0.0).sqrt(),
        covariance: fit.covariance.clone(),
        zero_rate: false,
        iterations: fit.iterations,
        residual_trace: fit.residual_trace,
    })
}

/// `⟨C_m⟩ = [L↑(A − ½)(1 − L)^m + A L↓ + ½ L↑] / L`.
pub fn correlation_model(m: f64, a: f64, up: f64, down: f64) -> f64 {
    let l = up + down;
    if l <= 0.0 {
        return a;
    }
    (up * (a - 0.5) * (1.0 - l).powf(m) + a * down + 0.5 * up) / l
}

/// Fits the random-circuit correlation model for `(A, L↑, L↓)`.
pub fn fit_random_circuit(m: &[f64], c: &[f64], trials: Option<&[u64]>) -> Result<DecayFit> {
    if m.len() < 4 || m.len() != c.len() {
        return Err(Error::param("need at least 4 cycles with matching lengths"));
    }
    if is_flat(c) {
        return Ok(zero_rate_fit(c[0], c[0]));
    }
    let w = weights_from_counts(c, trials);
    let q = (c.len() / 4).max(1);
    let tail = c[c.len() - q..].iter().sum::<f64>() / q as f64;
    let a0 = c[0].max(0.5 + 1e-3);
    let l0 = rate_guess(m, c, tail);
    // asymptote (A L↓ + ½ L↑)/L = tail fixes the split
    let frac_up = ((a0 - tail) / (a0 - 0.5)).clamp(1e-4, 1.0 - 1e-4);
    let p0 = [a0, l0 * frac_up, l0 * (1.0 - frac_up)];
    let model = |x: f64, th: &[f64]| correlation_model(x, th[0], th[1], th[2]);
    let fit = levenberg_marquardt(m, c, w.as_deref(), &p0, model, LmOptions::default())?;
    let (a, up, down) = (fit.params[0], fit.params[1], fit.params[2]);
    let l = up + down;
    if !(l > 0.0 && l <= 1.0) || up < -1e-9 || down < -1e-9 {
        return Err(Error::Fit {
            iterations: fit.iterations,
            reason: format!("rates L↑ = {up}, L↓ = {down} outside the valid range"),
            residual_trace: fit.residual_trace,
        });
    }
    let cv = &fit.covariance;
    Ok(DecayFit {
        a,
        b: down / l,
        rate_sum: l,
        leak_rate: up,
        seep_rate: down,
        leak_stderr: cv[1][1].max(0.0).sqrt(),
        seep_stderr: cv[2][2].max(0.0).sqrt(),
        rate_sum_stderr: (cv[1][1] + cv[2][2] + 2.0 * cv[1][2]).max(0.0).sqrt(),
        covariance: fit.covariance.clone(),
        zero_rate: false,
        iterations: fit.iterations,
        residual_trace: fit.residual_trace,
    })
}

/// [`fit_pi_qnd`] on the `P^m_X(0|1)` series with binomial weights.
pub fn fit_pi_qnd_series(s: &PiQndSeries) -> Result<DecayFit> {
    let m: Vec<f64> = s.p0_given_1.iter().map(|c| c.m as f64).collect();
    let p: Vec<f64> = s.p0_given_1.iter().map(CycleStat::p).collect();
    let t: Vec<u64> = s.p0_given_1.iter().map(|c| c.trials).collect();
    fit_pi_qnd(&m, &p, Some(&t))
}

/// [`fit_random_circuit`] with binomial weights.
pub fn fit_correlation_series(s: &CorrelationSeries) -> Result<DecayFit> {
    let m: Vec<f64> = (0..s.mean.len()).map(|i| i as f64).collect();
    let t = vec![s.trials_per_point; s.mean.len()];
    fit_random_circuit(&m, &s.mean, Some(&t))
}

/// Outcome of a planted-rate experiment repeated several times.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedSummary {
    pub planted_up: f64,
    pub planted_down: f64,
    pub pi_up: Vec<f64>,
    pub pi_down: Vec<f64>,
    pub rc_up: Vec<f64>,
    pub rc_down: Vec<f64>,
    pub failures: usize,
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl PlantedSummary {
    /// `|mean − planted| ≤ k σ` for one recovered series, σ the spread
    /// across repeats.
    pub fn within(values: &[f64], planted: f64, k: f64) -> bool {
        let (m, s) = mean_std(values);
        (m - planted).abs() <= k * s
    }

    /// Both fitters recover both rates within `k σ`.
    pub fn recovers(&self, k: f64) -> bool {
        self.failures == 0
            && Self::within(&self.pi_up, self.planted_up, k)
            && Self::within(&self.pi_down, self.planted_down, k)
            && Self::within(&self.rc_up, self.planted_up, k)
            && Self::within(&self.rc_down, self.planted_down, k)
    }

    /// `|x̄_pi − x̄_rc| ≤ k √(σ_pi² + σ_rc²)` for both rates.
    pub fn methods_agree(&self, k: f64) -> bool {
        let agree = |a: &[f64], b: &[f64]| {
            let (ma, sa) = mean_std(a);
            let (mb, sb) = mean_std(b);
            (ma - mb).abs() <= k * (sa * sa + sb * sb).sqrt()
        };
        self.failures == 0 && agree(&self.pi_up, &self.rc_up) && agree(&self.pi_down, &self.rc_down)
    }
}

/// Settings for [`planted_experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantedConfig {
    pub repeats: usize,
    /// π-QND shots per repeat.
    pub shots: usize,
    /// Random-circuit randomizations and shots each, per repeat.
    pub n_random: usize,
    pub shots_per_random: usize,
    pub m_max: usize,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            repeats: 10,
            shots: 4000,
            n_random: 200,
            shots_per_random: 20,
            m_max: 150,
            seed: 2025,
        }
    }
}

/// Simulates and fits both benchmarks `repeats` times on a chain.
pub fn planted_experiment(chain: &LeakageChain, cfg: &PlantedConfig) -> Result<PlantedSummary> {
    chain.validate()?;
    let results: Vec<Option<(DecayFit, DecayFit)>> = (0..cfg.repeats)
        .into_par_iter()
        .map(|r| {
            let seed = cfg.seed.wrapping_add(tag(&[6, r as u64]));
            let pi = simulate_pi_qnd(chain, &SequenceSchedule::pi_qnd(cfg.m_max), cfg.shots, seed).ok()?;
            let rc = simulate_random_circuit(
                chain,
                &SequenceSchedule::random_circuit(cfg.m_max),
                cfg.n_random,
                cfg.shots_per_random,
                seed,
            )
            .ok()?;
            Some((fit_pi_qnd_series(&pi).ok()?, fit_correlation_series(&rc).ok()?))
        })
        .collect();
    let mut s = PlantedSummary {
        planted_up: chain.leak_rate,
        planted_down: chain.seep_rate,
        pi_up: Vec::new(),
        pi_down: Vec::new(),
        rc_up: Vec::new(),
        rc_down: Vec::new(),
        failures: 0,
    };
    for r in results {
        match r {
            Some((p, c)) => {
                s.pi_up.push(p.leak_rate);
                s.pi_down.push(p.seep_rate);
                s.rc_up.push(c.leak_rate);
                s.rc_down.push(c.seep_rate);
            }
            None => s.failures += 1,
        }
    }
    Ok(s)
}

/// Measured Q2 rate pairs `(pulse label, L↑, L↓)` for the seven readout
/// pulse settings, longest pulse first.
pub const REFERENCE_RATES: [(&str, f64, f64); 7] = [
    ("200ns", 0.0008, 0.0212),
    ("100ns-a", 0.0008, 0.0170),
    ("100ns-b", 0.0010, 0.0127),
    ("60ns", 0.0015, 0.0064),
    ("45ns", 0.0043, 0.0051),
    ("40ns", 0.0227, 0.0037),
    ("30ns", 0.0591, 0.0049),
];
