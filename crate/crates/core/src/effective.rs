//! Effective long-range tight-binding model on the regular Wannier sites and
//! the exact-vs-effective dynamics harness.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::band::BlochBand;
use crate::error::{Error, Result};
use crate::linalg::CMatrix;
use crate::params::LatticeParams;
use crate::propagator::{chaotic_fraction, propagate, wannier_states, WannierBasis};
use crate::wave::{site_probabilities, spread_variance, Grid, DEFAULT_POINTS_PER_CELL};

/// Tolerance of the Hermiticity check `t_{N-n} = conj(t_n)`.
pub const HERMITICITY_TOLERANCE: f64 = 1e-10;

/// Hoppings `t_n` (cyclic index) of a translation-invariant lattice model.
/// `H = sum_{a,b} t_{(a-b) mod N} |a><b|`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel {
    pub hoppings: Vec<Complex64>,
    pub heff: f64,
    pub t_f: f64,
}

impl EffectiveModel {
    pub fn from_hoppings(hoppings: Vec<Complex64>, heff: f64, t_f: f64) -> Result<Self> {
        let n = hoppings.len();
        if n == 0 {
            return Err(Error::InvalidParams("empty hopping list".into()));
        }
        let worst = (0..n)
            .map(|k| (hoppings[(n - k) % n] - hoppings[k].conj()).norm())
            .fold(0.0, f64::max);
        if worst > HERMITICITY_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "hoppings are not Hermitian (defect {worst:e})"
            )));
        }
        Ok(Self {
            hoppings,
            heff,
            t_f,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.hoppings.len()
    }

    /// `eps(beta_m) = sum_n t_n exp(-2 pi i m n / N)`.
    pub fn band_energies(&self) -> Vec<f64> {
        let mut buf = self.hoppings.clone();
        FftPlanner::new()
            .plan_fft_forward(buf.len())
            .process(&mut buf);
        buf.into_iter().map(|z| z.re).collect()
    }

    pub fn dense_hamiltonian(&self) -> CMatrix {
        let n = self.n_sites();
        CMatrix::from_fn(n, n, |a, b| self.hoppings[(a + n - b) % n])
    }
}

fn check_canonical(betas: &[f64]) -> Result<()> {
    let n = betas.len();
    let matching = betas
        .iter()
        .enumerate()
        .take_while(|(m, b)| (**b - *m as f64 / n as f64).abs() < 1e-12)
        .count();
    if matching != n {
        return Err(Error::GridMismatch {
            expected: n,
            found: matching,
        });
    }
    Ok(())
}

/// `t_n = (1/N) sum_m eps(beta_m) exp(2 pi i m n / N)` on the canonical
/// grid `beta_m = m / N`.
pub fn hoppings_from_band(band: &BlochBand) -> Result<EffectiveModel> {
    check_canonical(&band.betas)?;
    let n = band.len();
    let mut buf: Vec<Complex64> = band
        .energies
        .iter()
        .map(|&e| Complex64::new(e, 0.0))
        .collect();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    EffectiveModel::from_hoppings(buf, band.heff, band.t_f)
}

/// One-Floquet-step map `exp(-i H T_F / heff)` applied by circulant
/// diagonalisation.
pub struct EffectivePropagator {
    phases: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl EffectivePropagator {
    pub fn n_sites(&self) -> usize {
        self.phases.len()
    }

    pub fn apply(&self, psi: &mut [Complex64]) {
        self.forward.process(psi);
        for (a, ph) in psi.iter_mut().zip(&self.phases) {
            *a *= ph;
        }
        self.inverse.process(psi);
    }

    pub fn dense(&self) -> CMatrix {
        let n = self.n_sites();
        let mut m = CMatrix::zeros(n, n);
        for b in 0..n {
            let mut col = vec![Complex64::new(0.0, 0.0); n];
            col[b] = Complex64::new(1.0, 0.0);
            self.apply(&mut col);
            for (a, v) in col.into_iter().enumerate() {
                m[(a, b)] = v;
            }
        }
        m
    }
}

pub fn effective_propagator(model: &EffectiveModel) -> EffectivePropagator {
    let n = model.n_sites();
    let mut planner = FftPlanner::new();
    let scale = 1.0 / n as f64;
    let phases = model
        .band_energies()
        .into_iter()
        .map(|e| Complex64::from_polar(scale, -e * model.t_f / model.heff))
        .collect();
    EffectivePropagator {
        phases,
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

/// Stroboscopic record of a lattice run.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsRecord {
    pub n0: usize,
    pub times: Vec<f64>,
    /// One row per sample time, one column per site.
    pub site_probabilities: Vec<Vec<f64>>,
    pub spread: Vec<f64>,
    /// Only recorded by exact runs.
    pub chaotic_fraction: Option<Vec<f64>>,
}

impl DynamicsRecord {
    pub fn n_sites(&self) -> usize {
        self.site_probabilities.first().map_or(0, Vec::len)
    }

    pub fn n_samples(&self) -> usize {
        self.times.len()
    }
}

pub fn run_effective_dynamics(
    model: &EffectiveModel,
    n0: usize,
    n_periods: usize,
) -> Result<DynamicsRecord> {
    let n = model.n_sites();
    if n0 >= n {
        return Err(Error::InvalidParams(format!("n0 = {n0} outside {n} sites")));
    }
    let prop = effective_propagator(model);
    let mut psi = vec![Complex64::new(0.0, 0.0); n];
    psi[n0] = Complex64::new(1.0, 0.0);
    let mut rec = DynamicsRecord {
        n0,
        times: Vec::with_capacity(n_periods + 1),
        site_probabilities: Vec::with_capacity(n_periods + 1),
        spread: Vec::with_capacity(n_periods + 1),
        chaotic_fraction: None,
    };
    for j in 0..=n_periods {
        if j > 0 {
            prop.apply(&mut psi);
        }
        let probs: Vec<f64> = psi.iter().map(|z| z.norm_sqr()).collect();
        rec.times.push(j as f64 * model.t_f);
        rec.spread.push(spread_variance(&probs, n0));
        rec.site_probabilities.push(probs);
    }
    Ok(rec)
}

/// Split-step propagation of the Wannier state `|n0_reg>` on the full grid
/// under the driven Hamiltonian, sampled every Floquet step.
pub fn run_exact_dynamics_with(
    params: &LatticeParams,
    basis: &WannierBasis,
    n0: usize,
    n_periods: usize,
) -> Result<DynamicsRecord> {
    let grid = basis.grid;
    if n0 >= grid.n_cells {
        return Err(Error::InvalidParams(format!(
            "n0 = {n0} outside {} cells",
            grid.n_cells
        )));
    }
    let psi0 = basis.state(n0);
    let mut rec = DynamicsRecord {
        n0,
        times: Vec::with_capacity(n_periods + 1),
        site_probabilities: Vec::with_capacity(n_periods + 1),
        spread: Vec::with_capacity(n_periods + 1),
        chaotic_fraction: Some(Vec::with_capacity(n_periods + 1)),
    };
    let mut failure = None;
    let duration = n_periods as f64 * params.floquet_time();
    propagate(&psi0, 0.0, duration, params, &grid, |t, psi| {
        if failure.is_some() {
            return;
        }
        let step = site_probabilities(psi, &grid).and_then(|probs| {
            let pch = chaotic_fraction(psi, basis)?;
            Ok((probs, pch))
        });
        match step {
            Ok((probs, pch)) => {
                rec.times.push(t);
                rec.spread.push(spread_variance(&probs, n0));
                rec.site_probabilities.push(probs);
                if let Some(c) = rec.chaotic_fraction.as_mut() {
                    c.push(pch);
                }
            }
            Err(e) => failure = Some(e),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(rec),
    }
}

/// As [`run_exact_dynamics_with`], building the Wannier basis on an
/// `n_cells` grid with the default cell resolution.
pub fn run_exact_dynamics(
    params: &LatticeParams,
    n_cells: usize,
    n0: usize,
    n_periods: usize,
) -> Result<DynamicsRecord> {
    let grid = Grid::new(n_cells, DEFAULT_POINTS_PER_CELL, params.heff)?;
    let basis = wannier_states(params, &grid)?;
    run_exact_dynamics_with(params, &basis, n0, n_periods)
}

/// Per-sample divergence between two records.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsComparison {
    pub times: Vec<f64>,
    /// `sum_n |p_n^a - p_n^b|`.
    pub l1: Vec<f64>,
    /// `|dn2^a - dn2^b| / dn2^a`, zero where both spreads vanish.
    pub spread_rel_error: Vec<f64>,
}

impl DynamicsComparison {
    pub fn max_l1(&self) -> f64 {
        self.l1.iter().copied().fold(0.0, f64::max)
    }
}

pub fn compare_dynamics(
    exact: &DynamicsRecord,
    effective: &DynamicsRecord,
) -> Result<DynamicsComparison> {
    if exact.n0 != effective.n0 {
        return Err(Error::ShapeMismatch(format!(
            "initial sites differ: {} vs {}",
            exact.n0, effective.n0
        )));
    }
    if exact.n_samples() != effective.n_samples() || exact.n_sites() != effective.n_sites() {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} samples vs {}x{}",
            exact.n_samples(),
            exact.n_sites(),
            effective.n_samples(),
            effective.n_sites()
        )));
    }
    for (a, b) in exact.times.iter().zip(&effective.times) {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::ShapeMismatch(format!(
                "sample times differ: {a} vs {b}"
            )));
        }
    }
    let l1 = exact
        .site_probabilities
        .iter()
        .zip(&effective.site_probabilities)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
        .collect();
    let spread_rel_error = exact
        .spread
        .iter()
        .zip(&effective.spread)
        .map(|(&a, &b)| {
            if a == 0.0 && b == 0.0 {
                0.0
            } else {
                (a - b).abs() / a.abs().max(f64::MIN_POSITIVE)
            }
        })
        .collect();
    Ok(DynamicsComparison {
        times: exact.times.clone(),
        l1,
        spread_rel_error,
    })
}

/// Least-squares slope of `ln(dn2(t) - dn2(0))` against `ln t` over the
/// samples with `t >= t_min`.
pub fn spreading_exponent(record: &DynamicsRecord, t_min: f64) -> Option<f64> {
    let base = *record.spread.first()?;
    let pts: Vec<(f64, f64)> = record
        .times
        .iter()
        .zip(&record.spread)
        .filter(|(t, s)| **t >= t_min && **t > 0.0 && **s > base)
        .map(|(t, s)| (t.ln(), (s - base).ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Mirror defect `max_k |p_{n0+k} - p_{n0-k}|` of one probability row.
pub fn reflection_defect(probs: &[f64], n0: usize) -> f64 {
    let n = probs.len();
    (0..n)
        .map(|k| {
            let a = probs[(n0 + k) % n];
            let b = probs[(n0 + n - k % n) % n];
            (a - b).abs()
        })
        .fold(0.0, f64::max)
}
