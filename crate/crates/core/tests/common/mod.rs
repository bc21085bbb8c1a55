//! Oracles and generators shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{Matrix4, Vector4};
use proptest::prelude::*;
use purcell_core::leakage::LeakageChain;
use purcell_core::network::{linspace, CircuitNetwork, Element, LumpedKind, SideBranch};
use purcell_core::Complex64;

/// Joint state vector `[0, 1, leak(latent 0), leak(latent 1)]`.
pub fn step_matrix(u: f64, d: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0 - u, 0.0, d, 0.0,
        0.0, 1.0 - u, 0.0, d,
        u, 0.0, 1.0 - d, 0.0,
        0.0, u, 0.0, 1.0 - d,
    )
}

pub fn x_matrix() -> Matrix4<f64> {
    Matrix4::new(
        0.0, 1.0, 0.0, 0.0,
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 1.0,
        0.0, 0.0, 1.0, 0.0,
    )
}

/// π-QND conditionals by matrix propagation of the two herald branches.
pub fn oracle_pi_qnd(chain: &LeakageChain, m_max: usize) -> Vec<(f64, f64)> {
    let t = step_matrix(chain.leak_rate, chain.seep_rate);
    let x = x_matrix();
    let r1 = Vector4::new(chain.readout_error[0], 1.0 - chain.readout_error[1], 1.0, 1.0);
    let p = chain.initial;
    // X/2 then projection: latent bit uniform
    let start = Vector4::new(0.5 * (p[0] + p[1]), 0.5 * (p[0] + p[1]), 0.5 * p[2], 0.5 * p[2]);
    let mut br: Vec<Vector4<f64>> = (0..2)
        .map(|h| {
            let w = if h == 1 { r1 } else { Vector4::repeat(1.0) - r1 };
            t * start.component_mul(&w)
        })
        .collect();
    let mut out = Vec::new();
    for m in 1..=m_max {
        let mut pair = (0.0, 0.0);
        for (h, v) in br.iter_mut().enumerate() {
            *v = x * *v;
            let one = r1.dot(v) / v.sum();
            if (h ^ ((m - 1) % 2)) == 1 {
                pair.0 = 1.0 - one;
            } else {
                pair.1 = one;
            }
            *v = t * *v;
        }
        out.push(pair);
    }
    out
}

pub fn lorentz(f: f64, f0: f64, fwhm: f64) -> Complex64 {
    Complex64::new(1.0, 0.0) / Complex64::new(1.0, 2.0 * (f - f0) / fwhm)
}

pub fn spectrum(f0: f64, fwhm: f64, n: usize) -> Vec<(f64, Complex64)> {
    linspace(f0 - 5.0 * fwhm, f0 + 5.0 * fwhm, n)
        .into_iter()
        .map(|f| (f, lorentz(f, f0, fwhm)))
        .collect()
}

pub fn window(f0: f64, fwhm: f64) -> (f64, f64) {
    (f0 - 5.0 * fwhm, f0 + 5.0 * fwhm)
}

pub fn element_strategy() -> impl Strategy<Value = Element> {
    prop_oneof![
        (10.0..120.0f64, 0.0..3.0f64).prop_map(|(z, th)| Element::line(z, th, 6e9)),
        (0.05..5.0f64).prop_map(|l| Element::lumped(LumpedKind::SeriesInductor, l * 1e-9)),
        (0.05..5.0f64).prop_map(|l| Element::lumped(LumpedKind::ShuntInductor, l * 1e-9)),
        (1.0..500.0f64).prop_map(|cf| Element::lumped(LumpedKind::SeriesCapacitor, cf * 1e-15)),
        (1.0..500.0f64).prop_map(|cf| Element::lumped(LumpedKind::ShuntCapacitor, cf * 1e-15)),
    ]
}

pub fn network_strategy() -> impl Strategy<Value = CircuitNetwork> {
    (
        prop::collection::vec(element_strategy(), 1..6),
        prop::collection::vec((0usize..6, 1.0..30.0f64, 5.5e9..7.5e9), 0..3),
    )
        .prop_map(|(elems, branches)| {
            let n = elems.len();
            let mut net = CircuitNetwork::new(elems, 50.0, 50.0);
            for (i, (pos, cc, fq)) in branches.into_iter().enumerate() {
                net = net.with_branch(SideBranch::quarter_wave_resonator(
                    format!("r{i}"),
                    pos.min(n),
                    cc * 1e-15,
                    50.0,
                    fq,
                ));
            }
            net
        })
}
