//! Time evolution under the driven lattice Hamiltonian: symmetric split-step
//! propagation, Floquet matrices of the Bloch problem and the Wannier basis
//! of the unmodulated lattice.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::linalg::{eig_normal, unitarity_residual, CMatrix};
use crate::params::LatticeParams;
use crate::scalar::Real;
use crate::wave::{gaussian_reference, harmonic_width, Grid, Representation, WaveState};

/// Residual above which a Floquet matrix is rejected.
pub const UNITARITY_TOLERANCE: f64 = 1e-6;
/// Minimum Gaussian overlap for selecting the regular Wannier state.
pub const WANNIER_MIN_OVERLAP: f64 = 0.5;

/// `V(x, t) = -gamma (1 + epsilon cos t) cos x`.
#[inline]
pub fn potential<T: Real>(x: T, t: T, params: &LatticeParams<T>) -> T {
    -params.gamma * (T::one() + params.epsilon * t.cos()) * x.cos()
}

/// Symmetric split-step propagator `U_P F U_X F^-1 U_P` on a grid, with an
/// optional Bloch shift `p -> p - heff beta` in the kinetic term.
///
/// Consecutive half kinetic steps are fused, so `n` steps cost `n + 1` FFT
/// pairs. The potential is evaluated at the midpoint of each step. The buffer
/// may hold several states back to back (one per grid length).
pub struct SplitStepper {
    params: LatticeParams,
    n: usize,
    n_points_per_cell: usize,
    cos_cell: Vec<f64>,
    kinetic_half: Vec<Complex64>,
    kinetic_full: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
}

impl SplitStepper {
    pub fn new(params: &LatticeParams, grid: &Grid, beta: f64) -> Self {
        let n = grid.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        let h = params.heff;
        let dt = params.dt;
        // 1/n restores the unnormalised inverse FFT
        let kin = |k: usize, factor: f64| {
            let p = grid.fft_p(k) - h * beta;
            Complex64::from_polar(1.0 / n as f64, -p * p * dt * factor / h)
        };
        let cos_cell = (0..grid.n_points_per_cell)
            .map(|j| grid.x(j).cos())
            .collect();
        Self {
            params: *params,
            n,
            n_points_per_cell: grid.n_points_per_cell,
            cos_cell,
            kinetic_half: (0..n).map(|k| kin(k, 0.25)).collect(),
            kinetic_full: (0..n).map(|k| kin(k, 0.5)).collect(),
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            potential_phase: vec![Complex64::new(0.0, 0.0); grid.n_points_per_cell],
        }
    }

    pub fn params(&self) -> &LatticeParams {
        &self.params
    }

    fn kinetic(&mut self, buf: &mut [Complex64], full: bool) {
        self.forward.process_with_scratch(buf, &mut self.scratch);
        let phases = if full {
            &self.kinetic_full
        } else {
            &self.kinetic_half
        };
        for chunk in buf.chunks_mut(self.n) {
            for (a, k) in chunk.iter_mut().zip(phases) {
                *a *= k;
            }
        }
        self.inverse.process_with_scratch(buf, &mut self.scratch);
    }

    fn potential_kick(&mut self, buf: &mut [Complex64], t: f64) {
        let p = &self.params;
        let amp = p.gamma * (1.0 + p.epsilon * t.cos()) * p.dt / p.heff;
        for (ph, c) in self.potential_phase.iter_mut().zip(&self.cos_cell) {
            // exp(-i V dt / heff) with V = -amp' cos x
            *ph = Complex64::from_polar(1.0, amp * c);
        }
        for cell in buf.chunks_mut(self.n_points_per_cell) {
            for (a, ph) in cell.iter_mut().zip(&self.potential_phase) {
                *a *= ph;
            }
        }
    }

    /// Advances every state in `buf` (position representation) by `steps`
    /// time steps starting at time `t0`.
    pub fn advance(&mut self, buf: &mut [Complex64], t0: f64, steps: usize) {
        debug_assert_eq!(buf.len() % self.n, 0);
        if steps == 0 {
            return;
        }
        let dt = self.params.dt;
        self.kinetic(buf, false);
        for s in 0..steps {
            self.potential_kick(buf, t0 + (s as f64 + 0.5) * dt);
            self.kinetic(buf, s + 1 < steps);
        }
    }
}

/// One split step of a normalised state from `t` to `t + dt`.
pub fn split_step(
    state: &WaveState,
    t: f64,
    params: &LatticeParams,
    grid: &Grid,
) -> Result<WaveState> {
    let mut psi = crate::wave::to_position(state, grid)?;
    let mut stepper = SplitStepper::new(params, grid, 0.0);
    stepper.advance(&mut psi.amplitudes, t, 1);
    psi.time = t + params.dt;
    Ok(psi)
}

/// Propagates `state` from `t0` over `duration`, calling `observer` at every
/// stroboscopic time `t0 + j T_F` (including the initial and, if it falls on
/// the stroboscope, the final time).
pub fn propagate<F>(
    state: &WaveState,
    t0: f64,
    duration: f64,
    params: &LatticeParams,
    grid: &Grid,
    mut observer: F,
) -> Result<WaveState>
where
    F: FnMut(f64, &WaveState),
{
    params.validate()?;
    let total_steps = (duration / params.dt).round() as usize;
    if ((total_steps as f64) * params.dt - duration).abs() > 1e-9 * duration.max(1.0) {
        return Err(Error::InvalidParams(format!(
            "duration {duration} is not a multiple of dt {}",
            params.dt
        )));
    }
    let per_floquet = params.steps_per_floquet();
    let mut psi = crate::wave::to_position(state, grid)?;
    psi.time = t0;
    let mut stepper = SplitStepper::new(params, grid, 0.0);
    observer(t0, &psi);
    let mut done = 0usize;
    while done < total_steps {
        let chunk = per_floquet.min(total_steps - done);
        stepper.advance(&mut psi.amplitudes, t0 + done as f64 * params.dt, chunk);
        done += chunk;
        psi.time = t0 + done as f64 * params.dt;
        if chunk == per_floquet {
            observer(psi.time, &psi);
        }
    }
    Ok(psi)
}

/// Floquet operator of the Bloch problem in the position basis of one cell.
#[derive(Debug, Clone)]
pub struct FloquetMatrix {
    pub entries: CMatrix,
    pub beta: f64,
    pub params: LatticeParams,
}

impl FloquetMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn unitarity_residual(&self) -> f64 {
        unitarity_residual(&self.entries)
    }
}

/// Reduces a quasi-momentum into the Brillouin zone `[0, 1)`.
pub fn reduce_beta(beta: f64) -> f64 {
    let r = beta.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

fn floquet_entries(params: &LatticeParams, beta: f64, n_points: usize) -> Result<CMatrix> {
    let grid = Grid::cell(n_points, params.heff)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); n_points * n_points];
    for j in 0..n_points {
        buf[j * n_points + j] = Complex64::new(1.0, 0.0);
    }
    let mut stepper = SplitStepper::new(params, &grid, beta);
    stepper.advance(&mut buf, 0.0, params.steps_per_floquet());
    Ok(DMatrix::from_vec(n_points, n_points, buf))
}

/// Propagates the `n_points` grid delta states of a single cell over one
/// Floquet time `T_F` under `H_beta = (p - heff beta)^2 / 2 + V(x, t)`.
/// Quasi-momenta are in units of `2 pi / lambda` and reduced into `[0, 1)`.
/// Columns are not re-orthogonalised.
pub fn build_floquet_matrix(
    params: &LatticeParams,
    beta: f64,
    n_points: usize,
) -> Result<FloquetMatrix> {
    params.validate()?;
    let beta = reduce_beta(beta);
    let entries = floquet_entries(params, beta, n_points)?;
    let m = FloquetMatrix {
        entries,
        beta,
        params: *params,
    };
    let residual = m.unitarity_residual();
    if residual > UNITARITY_TOLERANCE {
        return Err(Error::UnitarityLoss { beta, residual });
    }
    Ok(m)
}

/// Quasi-momenta `beta_m = m / N_c` (in units of `2 pi / lambda = 1`).
pub fn bloch_betas(n_cells: usize) -> Vec<f64> {
    (0..n_cells).map(|m| m as f64 / n_cells as f64).collect()
}

/// Overlap reference for the regular state of the Bloch problem at `beta`: a
/// Gaussian of harmonic width centred on the island at `(0, heff beta)`.
pub fn regular_reference(params: &LatticeParams, beta: f64, n_points: usize) -> Result<WaveState> {
    let grid = Grid::cell(n_points, params.heff)?;
    let sigma = harmonic_width(params.heff, params.gamma);
    Ok(gaussian_reference(&grid, 0.0, params.heff * beta, sigma))
}

/// Wannier basis of the unmodulated lattice, stored through its Bloch
/// components `u_m(x)` on one cell.
#[derive(Debug, Clone)]
pub struct WannierBasis {
    pub grid: Grid,
    pub betas: Vec<f64>,
    /// Gauge-fixed periodic parts, one `n_points_per_cell` vector per beta.
    pub bloch_cells: Vec<Vec<Complex64>>,
    /// Winning Gaussian overlap per beta.
    pub overlaps: Vec<f64>,
}

/// Builds the Wannier states `|n_reg>` of the unmodulated lattice (epsilon
/// is forced to zero). For each `beta_m` the Floquet eigenstate with the
/// largest overlap with the regular reference is taken, its phase fixed so the
/// sum of the two amplitudes straddling `x = 0` is real and positive.
pub fn wannier_states(params: &LatticeParams, grid: &Grid) -> Result<WannierBasis> {
    let params = params.unmodulated();
    let np = grid.n_points_per_cell;
    let betas = bloch_betas(grid.n_cells);
    let centre = np / 2;
    let cells: Vec<Result<(Vec<Complex64>, f64)>> = betas
        .par_iter()
        .map(|&beta| {
            let u = build_floquet_matrix(&params, beta, np)?;
            let (_, vecs) = eig_normal(&u.entries).ok_or(Error::ConvergenceFailure { beta })?;
            let reference = regular_reference(&params, beta, np)?;
            let (best, overlap) = (0..np)
                .map(|k| {
                    let ov: Complex64 = vecs
                        .column(k)
                        .iter()
                        .zip(&reference.amplitudes)
                        .map(|(v, r)| r.conj() * v)
                        .sum();
                    (k, ov.norm_sqr())
                })
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            if overlap < WANNIER_MIN_OVERLAP {
                return Err(Error::BandMixing {
                    beta,
                    overlap,
                    threshold: WANNIER_MIN_OVERLAP,
                });
            }
            let col: Vec<Complex64> = vecs.column(best).iter().copied().collect();
            let mid = col[centre - 1] + col[centre];
            let gauge = mid.conj() / mid.norm();
            Ok((col.into_iter().map(|v| v * gauge).collect(), overlap))
        })
        .collect();
    let mut bloch_cells = Vec::with_capacity(betas.len());
    let mut overlaps = Vec::with_capacity(betas.len());
    for c in cells {
        let (u, o) = c?;
        bloch_cells.push(u);
        overlaps.push(o);
    }
    Ok(WannierBasis {
        grid: *grid,
        betas,
        bloch_cells,
        overlaps,
    })
}

impl WannierBasis {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Wannier state localised in cell `n`, in the position representation:
    /// `w_n(x) = (1/N_c) sum_m exp(-i beta_m (x - X_n)) u_m(x)`.
    pub fn state(&self, n: usize) -> WaveState {
        let g = &self.grid;
        let np = g.n_points_per_cell;
        let nc = g.n_cells;
        let xn = g.cell_centre(n);
        let mut amps = vec![Complex64::new(0.0, 0.0); g.len()];
        for (beta, u) in self.betas.iter().zip(&self.bloch_cells) {
            for c in 0..nc {
                for j in 0..np {
                    let i = c * np + j;
                    let phase = -beta * (g.x(i) - xn);
                    amps[i] += u[j] * Complex64::from_polar(1.0, phase);
                }
            }
        }
        let scale = 1.0 / nc as f64;
        amps.iter_mut().for_each(|a| *a *= scale);
        WaveState::position(amps)
    }

    pub fn states(&self) -> Vec<WaveState> {
        (0..self.len()).map(|n| self.state(n)).collect()
    }

    /// `sum_n |<n_reg|psi>|^2`, evaluated in the Bloch basis with one
    /// inverse DFT over cells per intra-cell point.
    pub fn regular_projection(&self, state: &WaveState) -> Result<f64> {
        let g = &self.grid;
        let psi = crate::wave::to_position(state, g)?;
        let np = g.n_points_per_cell;
        let nc = g.n_cells;
        let ifft = FftPlanner::new().plan_fft_inverse(nc);
        // a[j][m] = sum_c exp(2 pi i m c / N_c) psi(c, j)
        let mut columns = vec![Complex64::new(0.0, 0.0); np * nc];
        for c in 0..nc {
            for j in 0..np {
                columns[j * nc + c] = psi.amplitudes[c * np + j];
            }
        }
        ifft.process(&mut columns);
        let x0 = g.cell_centre(0);
        let mut total = 0.0;
        for (m, (beta, u)) in self.betas.iter().zip(&self.bloch_cells).enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..np {
                // x = X_c + xi_j with xi_j = x(j) - X_0 on the cell grid
                let xi = g.x(j) - x0;
                let phase = beta * (x0 + xi);
                acc += u[j].conj() * Complex64::from_polar(1.0, phase) * columns[j * nc + m];
            }
            total += acc.norm_sqr() / nc as f64;
        }
        Ok(total)
    }
}

/// `P_ch = 1 - sum_n |<n_reg|psi>|^2`.
pub fn chaotic_fraction(state: &WaveState, basis: &WannierBasis) -> Result<f64> {
    if state.representation == Representation::Momentum {
        let pos = crate::wave::to_position(state, &basis.grid)?;
        return Ok(1.0 - basis.regular_projection(&pos)?);
    }
    Ok(1.0 - basis.regular_projection(state)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{site_probabilities, to_momentum};
    use std::f64::consts::PI;

    fn reference() -> LatticeParams {
        LatticeParams::reference()
    }

    #[test]
    fn potential_values() {
        let p = reference();
        assert!((potential(0.0, 0.0, &p) + 0.23).abs() < 1e-15);
        assert!((potential(PI, 0.0, &p) - 0.23).abs() < 1e-15);
        for &(x, t) in &[(0.4, 1.3), (2.2, -3.0)] {
            let v = potential(x, t, &p);
            assert!((potential(x + 2.0 * PI, t, &p) - v).abs() < 1e-14);
            assert!((potential(x, t + 2.0 * PI, &p) - v).abs() < 1e-14);
        }
    }

    #[test]
    fn free_plane_wave_phase() {
        let p = LatticeParams {
            gamma: 0.0,
            ..reference()
        };
        let g = Grid::new(3, 16, 0.4).unwrap();
        let k = 29;
        let mut m = vec![Complex64::new(0.0, 0.0); g.len()];
        m[k] = Complex64::new(1.0, 0.0);
        let s = WaveState {
            amplitudes: m,
            representation: Representation::Momentum,
            time: 0.0,
        };
        let out = to_momentum(&split_step(&s, 0.0, &p, &g).unwrap(), &g).unwrap();
        let pk = g.p(k);
        let want = Complex64::from_polar(1.0, -pk * pk * p.dt / (2.0 * p.heff));
        assert!((out.amplitudes[k] - want).norm() < 1e-12);
    }

    #[test]
    fn floquet_is_unitary_and_bz_periodic() {
        let p = reference();
        let a = build_floquet_matrix(&p, 0.3, 32).unwrap();
        assert!(a.unitarity_residual() < 1e-8);
        let b = build_floquet_matrix(&p, 1.3, 32).unwrap();
        let mut ea: Vec<f64> = eig_normal(&a.entries)
            .unwrap()
            .0
            .iter()
            .map(|z| z.arg())
            .collect();
        let mut eb: Vec<f64> = eig_normal(&b.entries)
            .unwrap()
            .0
            .iter()
            .map(|z| z.arg())
            .collect();
        ea.sort_by(f64::total_cmp);
        eb.sort_by(f64::total_cmp);
        for (x, y) in ea.iter().zip(&eb) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn free_floquet_is_diagonal_in_momentum() {
        let p = LatticeParams {
            gamma: 0.0,
            epsilon: 0.0,
            ..reference()
        };
        let beta = 0.37;
        let u = FloquetMatrix {
            entries: floquet_entries(&p, beta, 16).unwrap(),
            beta,
            params: p,
        };
        let g = Grid::cell(16, p.heff).unwrap();
        let tf = p.floquet_time();
        for k in 0..16 {
            let mut amps = vec![Complex64::new(0.0, 0.0); 16];
            amps[k] = Complex64::new(1.0, 0.0);
            let pw = crate::wave::to_position(
                &WaveState {
                    amplitudes: amps,
                    representation: Representation::Momentum,
                    time: 0.0,
                },
                &g,
            )
            .unwrap();
            let v = nalgebra::DVector::from_vec(pw.amplitudes.clone());
            let out = &u.entries * v;
            let pm = g.p(k) - p.heff * beta;
            let phase = Complex64::from_polar(1.0, -pm * pm * tf / (2.0 * p.heff));
            for (o, i) in out.iter().zip(&pw.amplitudes) {
                assert!((o - i * phase).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn wannier_basis_is_localised_and_orthonormal() {
        let p = reference();
        let g = Grid::new(7, 32, p.heff).unwrap();
        let basis = wannier_states(&p, &g).unwrap();
        let states = basis.states();
        for a in 0..7 {
            for b in 0..7 {
                let ov = states[a].inner(&states[b]);
                let want = if a == b { 1.0 } else { 0.0 };
                assert!(
                    (ov - Complex64::new(want, 0.0)).norm() < 1e-10,
                    "{a} {b} {ov}"
                );
            }
        }
        let probs = site_probabilities(&states[3], &g).unwrap();
        assert!(probs[3] > 0.99, "{probs:?}");
        // translation covariance
        for i in 0..g.len() - 32 {
            assert!((states[4].amplitudes[i + 32] - states[3].amplitudes[i]).norm() < 1e-10);
        }
        assert!(chaotic_fraction(&states[2], &basis).unwrap().abs() < 1e-10);
    }
}
