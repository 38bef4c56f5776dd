//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::f64::consts::PI;

use mixedlattice_core::resonance::eps_resonance;
use num_complex::Complex64;

/// Brillouin-zone Fourier coefficient `t_n = int_0^1 eps(beta) exp(2 pi i n beta) dbeta`
/// of a single resonance term centred at `beta0`, by composite Simpson
/// quadrature. The term is odd about `beta0`, so only the sine transform over
/// `[0, 1/2]` is integrated; the jump at the crossing sits on the panel edge.
pub fn resonance_fourier_coefficient(
    n: usize,
    beta0: f64,
    w: f64,
    alpha: f64,
    panels: usize,
) -> Complex64 {
    let panels = panels + panels % 2;
    let h = 0.5 / panels as f64;
    let k = 2.0 * PI * n as f64;
    let f = |u: f64| eps_resonance(u, w, alpha) * (k * u).sin();
    let mut s = f(0.0) + f(0.5);
    for j in 1..panels {
        let weight = if j % 2 == 1 { 4.0 } else { 2.0 };
        s += weight * f(j as f64 * h);
    }
    let sine = s * h / 3.0;
    Complex64::from_polar(1.0, k * beta0) * Complex64::new(0.0, 2.0 * sine)
}
