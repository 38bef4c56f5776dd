//! Classical stroboscopic dynamics of the driven pendulum lattice.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{drive_period, lattice_period, LatticeParams};
use crate::scalar::Real;

/// RK4 steps per drive period used by the stroboscopic map.
pub const STEPS_PER_PERIOD: usize = 1000;
/// Finite-time Lyapunov threshold (per drive period) separating chaotic orbits.
pub const CHAOS_THRESHOLD: f64 = 0.01;
/// Default classification horizon in drive periods.
pub const DEFAULT_HORIZON: usize = 500;
/// Shortest horizon accepted by the island estimator.
pub const MIN_HORIZON: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalState<T = f64> {
    /// Unreduced position; use [`ClassicalState::x_mod`] for display.
    pub x: T,
    pub p: T,
    pub t: T,
}

impl<T: Real> ClassicalState<T> {
    pub fn new(x: T, p: T) -> Self {
        Self { x, p, t: T::zero() }
    }

    /// Position reduced to `[-pi, pi)`.
    pub fn x_mod(&self) -> T {
        wrap_cell(self.x)
    }

    /// Unmodulated energy `p^2/2 - gamma cos x`.
    pub fn energy(&self, params: &LatticeParams<T>) -> T {
        self.p * self.p / T::lit(2.0) - params.gamma * self.x.cos()
    }
}

/// Reduces `x` to the cell `[-pi, pi)`.
pub fn wrap_cell<T: Real>(x: T) -> T {
    let l = lattice_period::<T>();
    let half = l / T::lit(2.0);
    let r = (x + half) % l;
    if r < T::zero() {
        r + l - half
    } else {
        r - half
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitLabel {
    Regular,
    Chaotic,
}

impl OrbitLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrbitLabel::Regular => "regular",
            OrbitLabel::Chaotic => "chaotic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitClassification<T = f64> {
    pub label: OrbitLabel,
    /// Finite-time Lyapunov exponent per drive period, clamped at zero.
    pub lyapunov_estimate: T,
    /// Whether the orbit stayed inside its starting cell for the whole horizon.
    pub librating: bool,
    /// Only populated on aggregate results.
    pub island_area: Option<T>,
}

/// `p' = -gamma (1 + epsilon cos t) sin x`.
#[inline]
pub fn force<T: Real>(x: T, t: T, params: &LatticeParams<T>) -> T {
    -params.gamma * (T::one() + params.epsilon * t.cos()) * x.sin()
}

#[inline]
fn curvature<T: Real>(x: T, t: T, params: &LatticeParams<T>) -> T {
    -params.gamma * (T::one() + params.epsilon * t.cos()) * x.cos()
}

pub fn rk4_step<T: Real>(
    state: ClassicalState<T>,
    dt: T,
    params: &LatticeParams<T>,
) -> ClassicalState<T> {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let half = dt / two;
    let ClassicalState { x, p, t } = state;

    let k1x = p;
    let k1p = force(x, t, params);
    let k2x = p + half * k1p;
    let k2p = force(x + half * k1x, t + half, params);
    let k3x = p + half * k2p;
    let k3p = force(x + half * k2x, t + half, params);
    let k4x = p + dt * k3p;
    let k4p = force(x + dt * k3x, t + dt, params);

    ClassicalState {
        x: x + dt / six * (k1x + two * k2x + two * k3x + k4x),
        p: p + dt / six * (k1p + two * k2p + two * k3p + k4p),
        t: t + dt,
    }
}

/// RK4 step of the orbit together with a tangent vector `(dx, dp)`.
fn rk4_tangent_step<T: Real>(
    state: ClassicalState<T>,
    tangent: (T, T),
    dt: T,
    params: &LatticeParams<T>,
) -> (ClassicalState<T>, (T, T)) {
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let half = dt / two;
    let ClassicalState { x, p, t } = state;
    let (u, v) = tangent;

    let rhs =
        |x: T, p: T, u: T, v: T, t: T| (p, force(x, t, params), v, curvature(x, t, params) * u);

    let k1 = rhs(x, p, u, v, t);
    let k2 = rhs(
        x + half * k1.0,
        p + half * k1.1,
        u + half * k1.2,
        v + half * k1.3,
        t + half,
    );
    let k3 = rhs(
        x + half * k2.0,
        p + half * k2.1,
        u + half * k2.2,
        v + half * k2.3,
        t + half,
    );
    let k4 = rhs(
        x + dt * k3.0,
        p + dt * k3.1,
        u + dt * k3.2,
        v + dt * k3.3,
        t + dt,
    );

    let comb = |a: T, b: T, c: T, d: T| dt / six * (a + two * b + two * c + d);
    (
        ClassicalState {
            x: x + comb(k1.0, k2.0, k3.0, k4.0),
            p: p + comb(k1.1, k2.1, k3.1, k4.1),
            t: t + dt,
        },
        (
            u + comb(k1.2, k2.2, k3.2, k4.2),
            v + comb(k1.3, k2.3, k3.3, k4.3),
        ),
    )
}

pub fn stroboscopic_map<T: Real>(
    state: ClassicalState<T>,
    params: &LatticeParams<T>,
    n_periods: usize,
) -> ClassicalState<T> {
    stroboscopic_map_with(state, params, n_periods, STEPS_PER_PERIOD)
}

pub fn stroboscopic_map_with<T: Real>(
    state: ClassicalState<T>,
    params: &LatticeParams<T>,
    n_periods: usize,
    steps_per_period: usize,
) -> ClassicalState<T> {
    let period = drive_period::<T>();
    let dt = period / T::from_usize(steps_per_period).unwrap();
    let mut s = state;
    for j in 0..n_periods {
        for _ in 0..steps_per_period {
            s = rk4_step(s, dt, params);
        }
        // pin sampling times to exact multiples of the period
        s.t = state.t + T::from_usize(j + 1).unwrap() * period;
    }
    s
}

/// Stroboscopic points `(x mod lambda, p)` for each seed, one entry per period
/// (the seed itself is index 0).
pub fn phase_portrait<T: Real>(
    seeds: &[ClassicalState<T>],
    n_periods: usize,
    params: &LatticeParams<T>,
) -> Vec<Vec<(T, T)>> {
    seeds
        .par_iter()
        .map(|seed| {
            let mut s = *seed;
            let mut pts = Vec::with_capacity(n_periods + 1);
            pts.push((s.x_mod(), s.p));
            for _ in 0..n_periods {
                s = stroboscopic_map(s, params, 1);
                pts.push((s.x_mod(), s.p));
            }
            pts
        })
        .collect()
}

/// Finite-time Lyapunov classification.
///
/// The exponent compares the mean log tangent norm over the last quarter of
/// the horizon with its mean over the second quarter, divided by the half
/// horizon between them. Skipping the first quarter suppresses the
/// logarithmic transient of linear (shear) growth on regular tori; averaging
/// removes the oscillation of the norm along slow near-separatrix orbits.
pub fn classify_orbit<T: Real>(
    seed: ClassicalState<T>,
    params: &LatticeParams<T>,
    horizon: usize,
) -> OrbitClassification<T> {
    let period = drive_period::<T>();
    let dt = period / T::from_usize(STEPS_PER_PERIOD).unwrap();
    let half_cell = lattice_period::<T>() / T::lit(2.0);
    let x_lo = seed.x - seed.x_mod() - half_cell;
    let x_hi = x_lo + lattice_period::<T>();

    let mut s = seed;
    let mut tangent = (T::one(), T::zero());
    let mut log_growth = T::zero();
    let mut early = T::zero();
    let mut late = T::zero();
    let mut librating = true;
    let horizon = horizon.max(4);
    let q = horizon / 4;

    for j in 0..horizon {
        for _ in 0..STEPS_PER_PERIOD {
            let (ns, nt) = rk4_tangent_step(s, tangent, dt, params);
            s = ns;
            tangent = nt;
        }
        if s.x < x_lo || s.x >= x_hi {
            librating = false;
        }
        let norm = (tangent.0 * tangent.0 + tangent.1 * tangent.1).sqrt();
        log_growth = log_growth + norm.ln();
        tangent = (tangent.0 / norm, tangent.1 / norm);
        if (q..2 * q).contains(&j) {
            early = early + log_growth;
        } else if j >= horizon - q {
            late = late + log_growth;
        }
    }

    let qf = T::from_usize(q).unwrap();
    let span = T::from_usize(horizon - 2 * q).unwrap();
    let lyapunov = ((late - early) / (qf * span)).max(T::zero());
    let label = if lyapunov > T::lit(CHAOS_THRESHOLD) {
        OrbitLabel::Chaotic
    } else {
        OrbitLabel::Regular
    };
    OrbitClassification {
        label,
        lyapunov_estimate: lyapunov,
        librating,
        island_area: None,
    }
}

/// Area of the central regular island estimated on a seed grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IslandArea<T = f64> {
    pub area: T,
    /// Fraction of the sampled window that belongs to the island.
    pub fraction: T,
    /// Half-height of the sampled momentum window.
    pub p_max: T,
    pub resolution: usize,
    /// Row-major (momentum-major) classification of every seed.
    pub seeds: Vec<(ClassicalState<T>, OrbitClassification<T>)>,
    pub island_mask: Vec<bool>,
}

/// Seeds at cell centres of a `resolution x resolution` grid over
/// `[-pi, pi) x [-p_max, p_max)`.
pub fn seed_grid<T: Real>(resolution: usize, p_max: T) -> Vec<ClassicalState<T>> {
    let n = T::from_usize(resolution).unwrap();
    let l = lattice_period::<T>();
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let p = -p_max + (T::from_usize(i).unwrap() + half) * T::lit(2.0) * p_max / n;
        for j in 0..resolution {
            let x = -l / T::lit(2.0) + (T::from_usize(j).unwrap() + half) * l / n;
            out.push(ClassicalState::new(x, p));
        }
    }
    out
}

/// Default momentum half-window for island sampling: 1.5 times the
/// separatrix half-height `2 sqrt(gamma)`.
pub fn default_p_window<T: Real>(params: &LatticeParams<T>) -> T {
    T::lit(3.0) * params.gamma.sqrt()
}

/// Island area from a grid of classified seeds, flood-filled from the seed
/// containing `(0, 0)`. A seed belongs to the island when it is regular and
/// never leaves its starting cell.
pub fn island_area_estimate<T: Real>(
    params: &LatticeParams<T>,
    resolution: usize,
    horizon: usize,
) -> Result<IslandArea<T>> {
    if resolution < 50 {
        return Err(Error::InvalidParams(format!(
            "resolution must be >= 50, got {resolution}"
        )));
    }
    if horizon < MIN_HORIZON {
        return Err(Error::InvalidParams(format!(
            "horizon must be >= {MIN_HORIZON} periods, got {horizon}"
        )));
    }
    let p_max = default_p_window(params);
    let seeds = seed_grid(resolution, p_max);
    let classes: Vec<OrbitClassification<T>> = seeds
        .par_iter()
        .map(|s| classify_orbit(*s, params, horizon))
        .collect();

    let inside: Vec<bool> = classes
        .iter()
        .map(|c| c.label == OrbitLabel::Regular && c.librating)
        .collect();
    let n_inside = inside.iter().filter(|&&b| b).count();
    if n_inside == 0 || n_inside == inside.len() {
        let label = if n_inside == 0 {
            "outside the island"
        } else {
            "inside the island"
        };
        return Err(Error::DegenerateClassification {
            count: inside.len(),
            label: label.into(),
        });
    }

    let centre = (resolution / 2) * resolution + resolution / 2;
    let mut mask = vec![false; inside.len()];
    let mut stack = vec![centre];
    while let Some(k) = stack.pop() {
        if mask[k] || !inside[k] {
            continue;
        }
        mask[k] = true;
        let (i, j) = (k / resolution, k % resolution);
        if i > 0 {
            stack.push(k - resolution);
        }
        if i + 1 < resolution {
            stack.push(k + resolution);
        }
        if j > 0 {
            stack.push(k - 1);
        }
        if j + 1 < resolution {
            stack.push(k + 1);
        }
    }

    let count = mask.iter().filter(|&&b| b).count();
    let fraction = T::from_usize(count).unwrap() / T::from_usize(mask.len()).unwrap();
    let window_area = lattice_period::<T>() * T::lit(2.0) * p_max;
    let area = fraction * window_area;
    let seeds = seeds
        .into_iter()
        .zip(classes)
        .map(|(s, mut c)| {
            c.island_area = Some(area);
            (s, c)
        })
        .collect();
    Ok(IslandArea {
        area,
        fraction,
        p_max,
        resolution,
        seeds,
        island_mask: mask,
    })
}

/// Area enclosed by the unmodulated pendulum separatrix, `16 sqrt(gamma)`.
pub fn separatrix_area<T: Real>(gamma: T) -> T {
    T::lit(16.0) * gamma.sqrt()
}
