//! Discretised wavefunctions on the lattice grid and the observables built on them.
//!
//! States are stored as unit vectors of grid amplitudes: the integration
//! measure `dx` (or `dp`) is absorbed in the amplitudes, so
//! `sum |psi_i|^2 = 1` in either representation.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const DEFAULT_POINTS_PER_CELL: usize = 32;

/// Position/momentum grid of `n_cells` lattice cells with `n_points_per_cell`
/// samples each. Cells are centred on the potential minima `x = 2 pi k`;
/// samples sit at the midpoints of the `dx` partition, so none lies on a cell
/// boundary and for odd `n_cells` the grid is symmetric about `x = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub n_cells: usize,
    pub n_points_per_cell: usize,
    pub heff: f64,
}

impl Grid {
    pub fn new(n_cells: usize, n_points_per_cell: usize, heff: f64) -> Result<Self> {
        if n_cells == 0 {
            return Err(Error::InvalidParams("n_cells must be >= 1".into()));
        }
        if n_points_per_cell < 2 || n_points_per_cell % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "n_points_per_cell must be even and >= 2, got {n_points_per_cell}"
            )));
        }
        if !(heff > 0.0) {
            return Err(Error::InvalidParams(format!(
                "heff must be > 0, got {heff}"
            )));
        }
        Ok(Self {
            n_cells,
            n_points_per_cell,
            heff,
        })
    }

    /// Single lattice cell, as used for the Floquet-Bloch problem.
    pub fn cell(n_points_per_cell: usize, heff: f64) -> Result<Self> {
        Self::new(1, n_points_per_cell, heff)
    }

    pub fn len(&self) -> usize {
        self.n_cells * self.n_points_per_cell
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        2.0 * PI / self.n_points_per_cell as f64
    }

    pub fn dp(&self) -> f64 {
        self.heff / self.n_cells as f64
    }

    /// Left edge of cell 0.
    pub fn left_edge(&self) -> f64 {
        -PI - 2.0 * PI * (self.n_cells / 2) as f64
    }

    /// First sample point.
    pub fn x_start(&self) -> f64 {
        self.left_edge() + 0.5 * self.dx()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_start() + i as f64 * self.dx()
    }

    /// Centred momentum grid value `(k - N/2) dp`.
    pub fn p(&self, k: usize) -> f64 {
        (k as f64 - (self.len() / 2) as f64) * self.dp()
    }

    /// Momentum of FFT bin `k` in natural (unshifted) order.
    pub fn fft_p(&self, k: usize) -> f64 {
        let n = self.len();
        let signed = if k < n / 2 {
            k as isize
        } else {
            k as isize - n as isize
        };
        signed as f64 * self.dp()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.x(i)).collect()
    }

    pub fn momenta(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.p(k)).collect()
    }

    /// Centre of cell `n` (a multiple of `2 pi`).
    pub fn cell_centre(&self, n: usize) -> f64 {
        self.left_edge() + PI + 2.0 * PI * n as f64
    }

    /// Index of the cell centred on `x = 0`.
    pub fn central_cell(&self) -> usize {
        self.n_cells / 2
    }

    pub fn total_length(&self) -> f64 {
        2.0 * PI * self.n_cells as f64
    }

    /// Minimum-image displacement `x - x0` on the periodic grid.
    pub fn periodic_displacement(&self, x: f64, x0: f64) -> f64 {
        let l = self.total_length();
        let d = (x - x0 + l / 2.0).rem_euclid(l);
        d - l / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    Position,
    Momentum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    pub amplitudes: Vec<Complex64>,
    pub representation: Representation,
    pub time: f64,
}

impl WaveState {
    pub fn position(amplitudes: Vec<Complex64>) -> Self {
        Self {
            amplitudes,
            representation: Representation::Position,
            time: 0.0,
        }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
    }

    /// `<self|other>`; both states must share a representation.
    pub fn inner(&self, other: &WaveState) -> Complex64 {
        debug_assert_eq!(self.representation, other.representation);
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check(&self, grid: &Grid) -> Result<()> {
        if self.amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                found: self.amplitudes.len(),
            });
        }
        Ok(())
    }
}

/// Unitary transform with kernel `exp(-i x p / heff) / sqrt(N)` between the
/// position and the centred momentum grid. Already-momentum states pass through.
pub fn to_momentum(state: &WaveState, grid: &Grid) -> Result<WaveState> {
    state.check(grid)?;
    if state.representation == Representation::Momentum {
        return Ok(state.clone());
    }
    let n = grid.len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut buf: Vec<Complex64> = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(i, a)| if i % 2 == 0 { *a } else { -*a })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let x0 = grid.x_start();
    for (k, b) in buf.iter_mut().enumerate() {
        let phase = -x0 * grid.p(k) / grid.heff;
        *b *= Complex64::from_polar(scale, phase);
    }
    Ok(WaveState {
        amplitudes: buf,
        representation: Representation::Momentum,
        time: state.time,
    })
}

pub fn to_position(state: &WaveState, grid: &Grid) -> Result<WaveState> {
    state.check(grid)?;
    if state.representation == Representation::Position {
        return Ok(state.clone());
    }
    let n = grid.len();
    let scale = 1.0 / (n as f64).sqrt();
    let x0 = grid.x_start();
    let mut buf: Vec<Complex64> = state
        .amplitudes
        .iter()
        .enumerate()
        .map(|(k, a)| a * Complex64::from_polar(scale, x0 * grid.p(k) / grid.heff))
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    for (i, b) in buf.iter_mut().enumerate() {
        if i % 2 == 1 {
            *b = -*b;
        }
    }
    Ok(WaveState {
        amplitudes: buf,
        representation: Representation::Position,
        time: state.time,
    })
}

/// Probability carried by each lattice cell, normalised to sum to one.
pub fn site_probabilities(state: &WaveState, grid: &Grid) -> Result<Vec<f64>> {
    let pos = to_position(state, grid)?;
    let np = grid.n_points_per_cell;
    let mut probs: Vec<f64> = pos
        .amplitudes
        .chunks(np)
        .map(|cell| cell.iter().map(|a| a.norm_sqr()).sum())
        .collect();
    let total: f64 = probs.iter().sum();
    if total > 0.0 {
        probs.iter_mut().for_each(|p| *p /= total);
    }
    Ok(probs)
}

/// Minimal distance between sites `a` and `b` on a ring of `n` sites.
pub fn periodic_distance(a: usize, b: usize, n: usize) -> usize {
    let d = a.abs_diff(b) % n;
    d.min(n - d)
}

/// `sum_n d(n, n0)^2 p_n` with the periodic site distance.
pub fn spread_variance<T: Real>(probs: &[T], n0: usize) -> T {
    let n = probs.len();
    probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let d = T::from_usize(periodic_distance(k, n0, n)).unwrap();
            d * d * p
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Width of the harmonic ground state of a well of depth `gamma`:
/// `sqrt(heff / sqrt(gamma))`.
pub fn harmonic_width(heff: f64, gamma: f64) -> f64 {
    (heff / gamma.sqrt()).sqrt()
}

/// Normalised Gaussian centred at `(x0, p0)` with position width `sigma`,
/// carrying the symmetric phase `exp(i p0 (x - x0/2) / heff)`. The envelope
/// uses the minimum-image displacement so it is periodic on the grid.
pub fn gaussian_reference(grid: &Grid, x0: f64, p0: f64, sigma: f64) -> WaveState {
    let mut amps: Vec<Complex64> = (0..grid.len())
        .map(|i| {
            let d = grid.periodic_displacement(grid.x(i), x0);
            let env = (-d * d / (2.0 * sigma * sigma)).exp();
            Complex64::from_polar(env, p0 * (d + x0 / 2.0) / grid.heff)
        })
        .collect();
    let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|a| *a /= norm);
    WaveState::position(amps)
}

/// Rectangular `(x, p)` sampling mesh for phase-space densities.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpaceMesh {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
}

impl PhaseSpaceMesh {
    pub fn uniform(x_range: (f64, f64), nx: usize, p_range: (f64, f64), np: usize) -> Self {
        let lin = |(a, b): (f64, f64), n: usize| -> Vec<f64> {
            if n == 1 {
                return vec![0.5 * (a + b)];
            }
            (0..n)
                .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                .collect()
        };
        Self {
            xs: lin(x_range, nx),
            ps: lin(p_range, np),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HusimiPoint {
    pub x: f64,
    pub p: f64,
    pub density: f64,
}

/// Husimi density `|<x0,p0|psi>|^2` using Gaussian coherent states of width `sigma`.
pub fn husimi(
    state: &WaveState,
    grid: &Grid,
    mesh: &PhaseSpaceMesh,
    sigma: f64,
) -> Result<Vec<HusimiPoint>> {
    let psi = to_position(state, grid)?;
    let mut out = Vec::with_capacity(mesh.xs.len() * mesh.ps.len());
    for &p in &mesh.ps {
        for &x in &mesh.xs {
            let coherent = gaussian_reference(grid, x, p, sigma);
            out.push(HusimiPoint {
                x,
                p,
                density: coherent.inner(&psi).norm_sqr(),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(5, 16, 0.4).unwrap()
    }

    #[test]
    fn grid_consistency() {
        for &(nc, np) in &[(1, 32), (4, 32), (7, 16)] {
            let g = Grid::new(nc, np, 0.4).unwrap();
            let prod = g.dx() * g.dp() * g.len() as f64;
            assert!((prod - 2.0 * PI * 0.4).abs() < 1e-12);
            assert!((g.cell_centre(g.central_cell())).abs() < 1e-12);
            assert_eq!(g.p(g.len() / 2), 0.0);
        }
        let odd = Grid::new(7, 16, 0.4).unwrap();
        // mirror-symmetric samples, none on a cell edge
        assert!((odd.x(0) + odd.x(odd.len() - 1)).abs() < 1e-12);
        assert!((odd.x(0) - odd.left_edge() - 0.5 * odd.dx()).abs() < 1e-15);
    }

    #[test]
    fn constant_state_peaks_at_zero_momentum() {
        let g = grid();
        let n = g.len();
        let s = WaveState::position(vec![Complex64::new(1.0 / (n as f64).sqrt(), 0.0); n]);
        let m = to_momentum(&s, &g).unwrap();
        assert!((m.amplitudes[n / 2].norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_wave_maps_to_delta() {
        let g = grid();
        let n = g.len();
        let k = 7usize;
        let p = g.p(k);
        let amps = (0..n)
            .map(|i| Complex64::from_polar(1.0 / (n as f64).sqrt(), p * g.x(i) / g.heff))
            .collect();
        let m = to_momentum(&WaveState::position(amps), &g).unwrap();
        assert!((m.amplitudes[k].norm_sqr() - 1.0).abs() < 1e-12);
        // kernel phase convention: <p|x> = exp(-i x p / heff) / sqrt(N)
        assert!((m.amplitudes[k] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let s = WaveState::position(vec![Complex64::new(1.0, 0.0); 3]);
        assert!(matches!(
            to_momentum(&s, &grid()),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn site_probabilities_cases() {
        let g = grid();
        let np = g.n_points_per_cell;
        let mut amps = vec![Complex64::new(0.0, 0.0); g.len()];
        for a in &mut amps[3 * np..4 * np] {
            *a = Complex64::new(0.25, 0.0);
        }
        let p = site_probabilities(&WaveState::position(amps), &g).unwrap();
        assert!((p[3] - 1.0).abs() < 1e-14);
        assert!(p.iter().enumerate().all(|(i, v)| i == 3 || *v == 0.0));

        let uni = WaveState::position(vec![Complex64::new(1.0, 0.0); g.len()]);
        let p = site_probabilities(&uni, &g).unwrap();
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-14));
    }

    #[test]
    fn spread_variance_cases() {
        let mut p = vec![0.0; 9];
        p[4] = 1.0;
        assert_eq!(spread_variance(&p, 4), 0.0);
        let mut p = vec![0.0; 9];
        p[3] = 0.5;
        p[5] = 0.5;
        assert_eq!(spread_variance(&p, 4), 1.0);
        // periodic distance wraps
        let mut p = vec![0.0; 9];
        p[0] = 1.0;
        assert_eq!(spread_variance(&p, 8), 1.0);
    }

    #[test]
    fn uniform_spread_matches_closed_form() {
        for &n in &[3usize, 9, 21, 101] {
            let p = vec![1.0 / n as f64; n];
            // sum over d=-(n-1)/2..(n-1)/2 of d^2 / n
            let brute: f64 = (0..n)
                .map(|k| {
                    let d = k as f64 - ((n - 1) / 2) as f64;
                    d * d / n as f64
                })
                .sum();
            let closed = ((n * n - 1) as f64) / 12.0;
            assert!((brute - closed).abs() < 1e-10);
            assert!((spread_variance(&p, n / 2) - closed).abs() < 1e-10);
            assert!((spread_variance(&p, 0) - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn gaussian_moments_and_overlaps() {
        let g = Grid::new(3, 32, 0.4).unwrap();
        let sigma = harmonic_width(0.4, 0.2);
        let s = gaussian_reference(&g, 0.3, 0.4, sigma);
        assert!((s.norm_sqr() - 1.0).abs() < 1e-12);
        let mean_x: f64 = (0..g.len())
            .map(|i| g.x(i) * s.amplitudes[i].norm_sqr())
            .sum();
        assert!((mean_x - 0.3).abs() < g.dx());
        let m = to_momentum(&s, &g).unwrap();
        let mean_p: f64 = (0..g.len())
            .map(|k| g.p(k) * m.amplitudes[k].norm_sqr())
            .sum();
        assert!((mean_p - 0.4).abs() < g.dp());
        assert!((s.inner(&s).norm() - 1.0).abs() < 1e-12);

        // |<g(x1)|g(x2)>| = exp(-(x1-x2)^2 / (4 sigma^2)) for equal momenta
        let a = gaussian_reference(&g, 0.0, 0.0, sigma);
        for &shift in &[0.5, 1.0, 2.0 * PI] {
            let b = gaussian_reference(&g, shift, 0.0, sigma);
            let expect = (-shift * shift / (4.0 * sigma * sigma)).exp();
            assert!((a.inner(&b).norm() - expect).abs() < 1e-6, "shift {shift}");
        }
        let far = gaussian_reference(&g, 2.0 * PI, 0.0, sigma);
        assert!(a.inner(&far).norm() < 1e-3);
    }

    #[test]
    fn husimi_peaks_on_coherent_state() {
        let g = Grid::cell(32, 0.4).unwrap();
        let sigma = harmonic_width(0.4, 0.2);
        let s = gaussian_reference(&g, 0.5, 0.4, sigma);
        let mesh = PhaseSpaceMesh::uniform((-1.0, 2.0), 31, (-1.0, 1.8), 29);
        let h = husimi(&s, &g, &mesh, sigma).unwrap();
        assert!(h.iter().all(|q| q.density >= 0.0));
        let best = h
            .iter()
            .max_by(|a, b| a.density.total_cmp(&b.density))
            .unwrap();
        assert!((best.x - 0.5).abs() < 0.11 && (best.p - 0.4).abs() < 0.11);
    }
}
