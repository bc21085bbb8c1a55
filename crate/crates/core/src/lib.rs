//! Simulation and estimation toolkit for a flux-tunable broadband Purcell
//! filter used in multiplexed dispersive qubit readout.
//!
//! Modules, roughly bottom-up:
//!
//! * [`network`]: ABCD two-port engine, S-parameters and complex resonance poles.
//! * [`fit`]: small Levenberg–Marquardt solver and resonance line-shape extraction.
//! * [`tuning`]: closed-form SQUID inductance and filter frequency/quality versus flux.
//! * [`channel`]: per-qubit linewidth, Purcell T1, photon dephasing, filter current.
//! * [`measurement`]: Monte Carlo single-shot readout, error budget, assignment matrices.
//! * [`leakage`]: leakage/seepage Markov chain, π-QND and random-circuit benchmarks.
//! * [`device`]: calibrated device network for the three-qubit chip.
//! * [`multiplex`]: dual-band variable/fixed bandwidth architecture study.

pub mod channel;
pub mod consts;
pub mod device;
pub mod error;
pub mod fit;
pub mod leakage;
pub mod measurement;
pub mod multiplex;
pub mod network;
pub mod rng;
pub mod spectroscopy;
pub mod tuning;

pub use error::{Error, Result};
pub use num_complex::Complex64;
