//! Physical constants (SI).

use std::f64::consts::PI;

/// Magnetic flux quantum h/2e in webers.
pub const PHI0: f64 = 2.067_833_848e-15;

/// Reduced Planck constant in J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

pub const TWO_PI: f64 = 2.0 * PI;

/// Converts a frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn ang(f_hz: f64) -> f64 {
    TWO_PI * f_hz
}

/// Converts an angular frequency in rad/s to Hz.
#[inline]
pub fn hz(omega: f64) -> f64 {
    omega / TWO_PI
}
