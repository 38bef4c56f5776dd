//! Quasi-energy spectra at fixed quasi-momentum, selection of the regular
//! branch and assembly of the effective regular band.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cache::FloquetCache;
use crate::error::{Error, Result};
use crate::linalg::{eig_normal, eigen_residual, CMatrix};
use crate::params::LatticeParams;
use crate::propagator::{
    build_floquet_matrix, reduce_beta, regular_reference, FloquetMatrix, WANNIER_MIN_OVERLAP,
};
use crate::wave::DEFAULT_POINTS_PER_CELL;

/// Bound on eigenpair residuals and on `| |alpha| - 1 |`.
pub const EIGEN_TOLERANCE: f64 = 1e-8;
/// Default floor for the winning overlap during band extraction. Points
/// between this floor and [`WANNIER_MIN_OVERLAP`] are kept and flagged.
pub const BAND_MIN_OVERLAP: f64 = 0.25;
/// Relative distance to the quasi-energy zone edge that triggers `BranchEdge`.
pub const EDGE_MARGIN: f64 = 0.01;
/// Mesh size of each refinement pass.
pub const REFINE_POINTS: usize = 65;
const MAX_REFINE_PASSES: usize = 24;

/// Full eigendecomposition of a Floquet matrix with the regular overlaps of
/// its eigenstates.
#[derive(Debug, Clone)]
pub struct QuasiSpectrum {
    pub beta: f64,
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvectors as columns.
    pub eigenstates: CMatrix,
    pub regular_overlaps: Vec<f64>,
    pub heff: f64,
    pub t_f: f64,
}

impl QuasiSpectrum {
    pub fn quasi_energies(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .map(|a| quasi_energy(*a, self.heff, self.t_f))
            .collect()
    }

    /// Indices of the eigenstates sorted by decreasing regular overlap.
    pub fn by_overlap(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.eigenvalues.len()).collect();
        idx.sort_by(|&a, &b| self.regular_overlaps[b].total_cmp(&self.regular_overlaps[a]));
        idx
    }
}

/// Diagonalises `m` and checks that every eigenvalue lies on the unit
/// circle and every eigenpair residual is below [`EIGEN_TOLERANCE`].
pub fn eig_unitary(m: &FloquetMatrix) -> Result<QuasiSpectrum> {
    let beta = m.beta;
    let (values, vectors) = eig_normal(&m.entries).ok_or(Error::ConvergenceFailure { beta })?;
    let off_circle = values
        .iter()
        .map(|v| (v.norm() - 1.0).abs())
        .fold(0.0, f64::max);
    if off_circle > EIGEN_TOLERANCE
        || eigen_residual(&m.entries, &values, &vectors) > EIGEN_TOLERANCE
    {
        return Err(Error::ConvergenceFailure { beta });
    }
    let reference = regular_reference(&m.params, beta, m.dim())?;
    let regular_overlaps = vectors
        .column_iter()
        .map(|c| {
            c.iter()
                .zip(&reference.amplitudes)
                .map(|(v, r)| r.conj() * v)
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect();
    Ok(QuasiSpectrum {
        beta,
        eigenvalues: values,
        eigenstates: vectors,
        regular_overlaps,
        heff: m.params.heff,
        t_f: m.params.floquet_time(),
    })
}

/// `-(heff / t_f) arg(alpha)` on the branch `(-pi heff / t_f, pi heff / t_f]`.
pub fn quasi_energy(alpha: Complex64, heff: f64, t_f: f64) -> f64 {
    let mut theta = -alpha.arg();
    if theta <= -PI {
        theta += 2.0 * PI;
    }
    heff * theta / t_f
}

/// Half width `pi heff / t_f` of the quasi-energy zone.
pub fn zone_half_width(heff: f64, t_f: f64) -> f64 {
    PI * heff / t_f
}

/// Effective regular band sampled on a set of quasi-momenta.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochBand {
    pub betas: Vec<f64>,
    pub energies: Vec<f64>,
    /// Winning regular overlap per sample.
    pub overlaps: Vec<f64>,
    pub heff: f64,
    pub t_f: f64,
}

impl BlochBand {
    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// True where the winning state is strongly mixed (overlap below the
    /// Wannier threshold), typically at an avoided crossing.
    pub fn branch_flags(&self) -> Vec<bool> {
        self.overlaps
            .iter()
            .map(|&o| o < WANNIER_MIN_OVERLAP)
            .collect()
    }

    pub fn bandwidth(&self) -> f64 {
        let (lo, hi) = self
            .energies
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &e| {
                (lo.min(e), hi.max(e))
            });
        hi - lo
    }

    pub fn min_overlap(&self) -> f64 {
        self.overlaps.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Energies and overlaps of the two eigenstates with the largest regular
/// overlap at one quasi-momentum; index 0 is the winner.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPair {
    pub beta: f64,
    pub energies: [f64; 2],
    pub overlaps: [f64; 2],
}

impl BranchPair {
    pub fn upper(&self) -> f64 {
        self.energies[0].max(self.energies[1])
    }

    pub fn lower(&self) -> f64 {
        self.energies[0].min(self.energies[1])
    }

    pub fn gap(&self) -> f64 {
        (self.energies[0] - self.energies[1]).abs()
    }

    /// Regular share of the upper state within the pair; `1/2` at equal mixing.
    pub fn mixing(&self) -> f64 {
        let up = if self.energies[0] >= self.energies[1] {
            0
        } else {
            1
        };
        let total = self.overlaps[0] + self.overlaps[1];
        if total > 0.0 {
            self.overlaps[up] / total
        } else {
            0.5
        }
    }
}

/// Source of the two leading branches at arbitrary quasi-momentum.
pub trait BranchProbe: Sync {
    fn probe(&self, beta: f64) -> Result<BranchPair>;
}

/// Branch probe backed by Floquet matrices of the driven lattice.
#[derive(Debug, Clone, Copy)]
pub struct FloquetProbe<'a> {
    pub params: LatticeParams,
    pub n_points: usize,
    pub cache: Option<&'a FloquetCache>,
}

impl<'a> FloquetProbe<'a> {
    pub fn new(params: LatticeParams) -> Self {
        Self {
            params,
            n_points: DEFAULT_POINTS_PER_CELL,
            cache: None,
        }
    }

    pub fn spectrum(&self, beta: f64) -> Result<QuasiSpectrum> {
        let m = match self.cache {
            Some(c) => c.get_or_build(&self.params, beta, self.n_points)?,
            None => build_floquet_matrix(&self.params, beta, self.n_points)?,
        };
        eig_unitary(&m)
    }
}

impl BranchProbe for FloquetProbe<'_> {
    fn probe(&self, beta: f64) -> Result<BranchPair> {
        let s = self.spectrum(beta)?;
        let order = s.by_overlap();
        let e = |k: usize| quasi_energy(s.eigenvalues[k], s.heff, s.t_f);
        Ok(BranchPair {
            beta: s.beta,
            energies: [e(order[0]), e(order[1])],
            overlaps: [s.regular_overlaps[order[0]], s.regular_overlaps[order[1]]],
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BandOptions<'a> {
    pub n_points: usize,
    pub min_overlap: f64,
    pub cache: Option<&'a FloquetCache>,
}

impl Default for BandOptions<'_> {
    fn default() -> Self {
        Self {
            n_points: DEFAULT_POINTS_PER_CELL,
            min_overlap: BAND_MIN_OVERLAP,
            cache: None,
        }
    }
}

/// For every quasi-momentum, diagonalises the Floquet matrix and keeps the
/// quasi-energy of the eigenstate with the largest regular overlap.
/// Samples are reduced into `[0, 1)` and sorted.
pub fn extract_effective_band(
    params: &LatticeParams,
    betas: &[f64],
    opts: &BandOptions,
) -> Result<BlochBand> {
    params.validate()?;
    let mut betas: Vec<f64> = betas.iter().map(|&b| reduce_beta(b)).collect();
    betas.sort_by(f64::total_cmp);
    let probe = FloquetProbe {
        params: *params,
        n_points: opts.n_points,
        cache: opts.cache,
    };
    let pairs: Vec<BranchPair> = betas
        .par_iter()
        .map(|&b| probe.probe(b))
        .collect::<Result<_>>()?;
    let t_f = params.floquet_time();
    let edge = zone_half_width(params.heff, t_f) * (1.0 - EDGE_MARGIN);
    for p in &pairs {
        if p.overlaps[0] < opts.min_overlap {
            return Err(Error::BandMixing {
                beta: p.beta,
                overlap: p.overlaps[0],
                threshold: opts.min_overlap,
            });
        }
        if p.energies[0].abs() > edge {
            return Err(Error::BranchEdge {
                beta: p.beta,
                energy: p.energies[0],
            });
        }
    }
    Ok(BlochBand {
        betas,
        energies: pairs.iter().map(|p| p.energies[0]).collect(),
        overlaps: pairs.iter().map(|p| p.overlaps[0]).collect(),
        heff: params.heff,
        t_f,
    })
}

/// Locally refined avoided crossing: both branches on the final mesh and the
/// two-level parameters they imply.
#[derive(Debug, Clone)]
pub struct Crossing {
    pub betas: Vec<f64>,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// Regular share of the upper branch.
    pub mixing: Vec<f64>,
    pub beta0: f64,
    /// Half the minimal gap.
    pub w: f64,
    /// Slope of the chaotic level relative to the regular one; positive when
    /// the chaotic level lies above the regular one for `beta > beta0`.
    pub alpha: f64,
    /// RMS misfit of the hyperbolic gap model, in units of the minimal gap.
    pub fit_residual: f64,
    pub passes: usize,
}

impl Crossing {
    /// `4 |W| / |alpha|`.
    pub fn width(&self) -> f64 {
        4.0 * self.w / self.alpha.abs()
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Minimal share of the weaker state within the pair for a sign change of
/// the mixing to count as a hybridisation rather than a change of partner.
const HYBRID_SHARE: f64 = 0.05;
/// Samples whose gap exceeds this multiple of the smallest gap are left out
/// of the hyperbola fit.
const FIT_GAP_RATIO: f64 = 5.0;
const MAX_ZOOMS: usize = 8;

/// Indices `i` where the mixing crosses `1/2` between samples `i` and `i+1`,
/// split into hybridising crossings and bare partner exchanges.
fn half_crossings(mixing: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let share = |m: f64| m.min(1.0 - m);
    let mut hybrid = Vec::new();
    let mut bare = Vec::new();
    for i in 0..mixing.len() - 1 {
        if (mixing[i] - 0.5).signum() == (mixing[i + 1] - 0.5).signum() {
            continue;
        }
        if share(mixing[i]).max(share(mixing[i + 1])) >= HYBRID_SHARE {
            hybrid.push(i);
        } else {
            bare.push(i);
        }
    }
    (hybrid, bare)
}

struct GapFit {
    beta0: f64,
    w: f64,
    slope: f64,
    residual: f64,
}

/// Least-squares fit of `gap^2 = slope^2 (beta - beta0)^2 + 4 W^2`.
fn fit_gap(betas: &[f64], gaps: &[f64]) -> Option<GapFit> {
    let n = betas.len();
    let c = 0.5 * (betas[0] + betas[n - 1]);
    let h = 0.5 * (betas[n - 1] - betas[0]);
    let a = DMatrix::from_fn(n, 3, |i, j| ((betas[i] - c) / h).powi(j as i32));
    let y = DVector::from_iterator(n, gaps.iter().map(|g| g * g));
    let coef = a.clone().svd(true, true).solve(&y, 1e-14).ok()?;
    let (d, b, q) = (coef[0], coef[1], coef[2]);
    if q <= 0.0 {
        return None;
    }
    let u0 = -b / (2.0 * q);
    let four_w2 = d - b * b / (4.0 * q);
    if four_w2 <= 0.0 || u0.abs() > 1.0 {
        return None;
    }
    let w = 0.5 * four_w2.sqrt();
    let fitted = &a * &coef;
    let rms = (fitted
        .iter()
        .zip(gaps)
        .map(|(f, g)| (f.max(0.0).sqrt() - g).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    Some(GapFit {
        beta0: c + h * u0,
        w,
        slope: q.sqrt() / h,
        residual: rms / (2.0 * w),
    })
}

/// Tracks the two largest-overlap branches over `[lo, hi]`, which must hold
/// exactly one point of equal mixing, and refines the mesh to
/// `beta0 +- 2 dbeta` until the minimal gap is resolved by at least eight
/// points per crossing width.
pub fn refine_crossing(probe: &dyn BranchProbe, lo: f64, hi: f64) -> Result<Crossing> {
    if !(hi > lo) {
        return Err(Error::InvalidParams(format!("empty window [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let mut previous: Option<(f64, f64)> = None;
    let mut zooms = 0;
    for pass in 1..=MAX_REFINE_PASSES {
        let mesh = linspace(a, b, REFINE_POINTS);
        let pairs: Vec<BranchPair> = mesh
            .par_iter()
            .map(|&x| probe.probe(x))
            .collect::<Result<_>>()?;
        let mixing: Vec<f64> = pairs.iter().map(BranchPair::mixing).collect();
        let gaps: Vec<f64> = pairs.iter().map(BranchPair::gap).collect();
        let (hybrid, bare) = half_crossings(&mixing);
        let zoom = |i: usize, a: &mut f64, b: &mut f64| {
            *a = mesh[i.saturating_sub(3)];
            *b = mesh[(i + 4).min(REFINE_POINTS - 1)];
        };
        let i = match hybrid.len() {
            1 => hybrid[0],
            0 => {
                // a crossing narrower than the mesh looks like an exchange
                let Some(&i) = bare.iter().min_by(|&&i, &&j| {
                    gaps[i]
                        .min(gaps[i + 1])
                        .total_cmp(&gaps[j].min(gaps[j + 1]))
                }) else {
                    return Err(Error::NoCrossing { lo: a, hi: b });
                };
                zooms += 1;
                if zooms > MAX_ZOOMS {
                    return Err(Error::NoCrossing { lo: a, hi: b });
                }
                zoom(i, &mut a, &mut b);
                previous = None;
                continue;
            }
            count => return Err(Error::WindowTooWide { count }),
        };
        let g_min = gaps[i].min(gaps[i + 1]);
        let mut first = i;
        while first > 0 && gaps[first - 1] <= FIT_GAP_RATIO * g_min {
            first -= 1;
        }
        let mut last = i + 1;
        while last + 1 < REFINE_POINTS && gaps[last + 1] <= FIT_GAP_RATIO * g_min {
            last += 1;
        }
        let fit = if last - first + 1 >= 5 {
            fit_gap(&mesh[first..=last], &gaps[first..=last])
        } else {
            None
        };
        let Some(fit) = fit else {
            zoom(i, &mut a, &mut b);
            previous = None;
            continue;
        };
        let spacing = (b - a) / (REFINE_POINTS - 1) as f64;
        let dbeta = 4.0 * fit.w / fit.slope;
        let converged = previous.is_some_and(|(b0, w)| {
            (fit.beta0 - b0).abs() < 1e-3 * dbeta && (fit.w - w).abs() < 1e-3 * fit.w
        }) && spacing <= dbeta / 8.0;
        if converged {
            let at = probe.probe(fit.beta0)?;
            let nearest = (0..mesh.len())
                .min_by(|&i, &j| {
                    (mesh[i] - fit.beta0)
                        .abs()
                        .total_cmp(&(mesh[j] - fit.beta0).abs())
                })
                .unwrap();
            if !(0.25..=0.75).contains(&mixing[nearest]) {
                return Err(Error::NoCrossing { lo: a, hi: b });
            }
            let right: Vec<f64> = (first..=last)
                .filter(|&k| mesh[k] > fit.beta0)
                .map(|k| mixing[k])
                .collect();
            let right_mean = right.iter().sum::<f64>() / right.len().max(1) as f64;
            let sign = if right_mean < 0.5 { 1.0 } else { -1.0 };
            return Ok(Crossing {
                betas: mesh,
                upper: pairs.iter().map(BranchPair::upper).collect(),
                lower: pairs.iter().map(BranchPair::lower).collect(),
                mixing,
                beta0: reduce_beta(fit.beta0),
                w: 0.5 * at.gap(),
                alpha: sign * fit.slope,
                fit_residual: fit.residual,
                passes: pass,
            });
        }
        previous = Some((fit.beta0, fit.w));
        a = fit.beta0 - 2.0 * dbeta;
        b = fit.beta0 + 2.0 * dbeta;
    }
    Err(Error::ConvergenceFailure {
        beta: 0.5 * (a + b),
    })
}
