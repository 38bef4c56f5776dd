//! Avoided crossings between the regular band and chaotic levels: two-level
//! algebra, detection and fitting on a fine band, the asymptotic hopping law
//! and the statistics of its fluctuations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::band::{refine_crossing, BlochBand, BranchPair, BranchProbe};
use crate::effective::EffectiveModel;
use crate::error::{Error, Result};
use crate::propagator::reduce_beta;
use crate::scalar::Real;

/// Minimum number of band samples accepted by [`detect_resonances`].
pub const MIN_FINE_SAMPLES: usize = 4096;
/// Minimum number of hoppings in a statistics window.
pub const MIN_STATISTICS_SAMPLES: usize = 200;
/// Number of Monte-Carlo draws of the universal model.
pub const MONTE_CARLO_SAMPLES: usize = 100_000;
/// Widths above this fraction of the Brillouin zone are not sharp.
pub const SHARPNESS_LIMIT: f64 = 0.1;

/// Eigen-solution of the regular/chaotic two-level problem with
/// `eps_reg = 0`, `eps_ch = alpha beta` and coupling `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoLevelResult<T = f64> {
    pub eps_plus: T,
    pub eps_minus: T,
    /// Mixing angle in `[0, pi/2]`; the upper state carries regular weight
    /// `cos^2 theta`.
    pub theta: T,
    /// `(eps_reg - eps_ch) / 2`.
    pub delta: T,
}

impl<T: Real> TwoLevelResult<T> {
    pub fn gap(&self) -> T {
        self.eps_plus - self.eps_minus
    }

    pub fn regular_weight_upper(&self) -> T {
        self.theta.cos().powi(2)
    }

    /// Energy of the state with the larger regular weight.
    pub fn largest_projection(&self) -> T {
        if self.regular_weight_upper() >= T::lit(0.5) {
            self.eps_plus
        } else {
            self.eps_minus
        }
    }
}

pub fn two_level<T: Real>(beta_rel: T, w: T, alpha: T) -> TwoLevelResult<T> {
    let two = T::lit(2.0);
    let eps_ch = alpha * beta_rel;
    let delta = -eps_ch / two;
    let root = delta.hypot(w);
    TwoLevelResult {
        eps_plus: eps_ch / two + root,
        eps_minus: eps_ch / two - root,
        theta: w.abs().atan2(delta) / two,
        delta,
    }
}

fn sign<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Largest-regular-projection branch
/// `(alpha/2) (beta - sgn(beta) sqrt(beta^2 + (2|W|/alpha)^2))`, equal to the
/// midpoint `0` exactly at the crossing.
pub fn eps_resonance<T: Real>(beta_rel: T, w: T, alpha: T) -> T {
    let two = T::lit(2.0);
    let b = two * w.abs() / alpha;
    alpha / two * (beta_rel - sign(beta_rel) * beta_rel.hypot(b))
}

/// Fitted avoided crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub beta0: f64,
    /// Coupling `|W|`.
    pub w: f64,
    /// Slope of the chaotic level relative to the regular band.
    pub alpha: f64,
    /// `4 |W| / |alpha|`.
    pub width: f64,
    pub fit_residual: f64,
}

impl Resonance {
    pub fn new(beta0: f64, w: f64, alpha: f64) -> Self {
        Self {
            beta0: reduce_beta(beta0),
            w: w.abs(),
            alpha,
            width: 4.0 * w.abs() / alpha.abs(),
            fit_residual: 0.0,
        }
    }

    pub fn is_sharp(&self) -> bool {
        self.width <= SHARPNESS_LIMIT
    }
}

/// Offset `beta - beta0` folded into `[-1/2, 1/2)`.
pub fn relative_beta(beta: f64, beta0: f64) -> f64 {
    (beta - beta0 + 0.5).rem_euclid(1.0) - 0.5
}

/// Model band: a smooth periodic background `sum_k a_k cos(2 pi k beta)`
/// coupled to one linear chaotic level per resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBand {
    pub background: Vec<f64>,
    pub resonances: Vec<Resonance>,
    pub heff: f64,
    pub t_f: f64,
}

impl SyntheticBand {
    pub fn new(background: Vec<f64>, resonances: Vec<Resonance>) -> Self {
        Self {
            background,
            resonances,
            heff: 0.4,
            t_f: 4.0 * PI,
        }
    }

    pub fn background_at(&self, beta: f64) -> f64 {
        self.background
            .iter()
            .enumerate()
            .map(|(k, a)| a * (2.0 * PI * k as f64 * beta).cos())
            .sum()
    }

    /// Background plus the independent largest-projection branches.
    pub fn superposed(&self, beta: f64) -> f64 {
        self.background_at(beta)
            + self
                .resonances
                .iter()
                .map(|r| eps_resonance(relative_beta(beta, r.beta0), r.w, r.alpha))
                .sum::<f64>()
    }

    /// Eigenvalues and regular weights of the regular level coupled to
    /// every chaotic level.
    fn levels(&self, beta: f64) -> (Vec<f64>, Vec<f64>) {
        let k = self.resonances.len();
        let e0 = self.background_at(beta);
        let mut h = DMatrix::zeros(k + 1, k + 1);
        h[(0, 0)] = e0;
        for (i, r) in self.resonances.iter().enumerate() {
            h[(i + 1, i + 1)] = e0 + r.alpha * relative_beta(beta, r.beta0);
            h[(0, i + 1)] = r.w;
            h[(i + 1, 0)] = r.w;
        }
        let eig = SymmetricEigen::new(h);
        let weights = (0..=k).map(|j| eig.eigenvectors[(0, j)].powi(2)).collect();
        (eig.eigenvalues.iter().copied().collect(), weights)
    }

    /// Largest-regular-projection energies on the given quasi-momenta.
    pub fn band(&self, betas: &[f64]) -> BlochBand {
        let pairs: Vec<BranchPair> = betas.iter().map(|&b| self.pair(b)).collect();
        BlochBand {
            betas: betas.to_vec(),
            energies: pairs.iter().map(|p| p.energies[0]).collect(),
            overlaps: pairs.iter().map(|p| p.overlaps[0]).collect(),
            heff: self.heff,
            t_f: self.t_f,
        }
    }

    fn pair(&self, beta: f64) -> BranchPair {
        let (energies, weights) = self.levels(beta);
        let mut idx: Vec<usize> = (0..weights.len()).collect();
        idx.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]));
        let second = idx.get(1).copied().unwrap_or(idx[0]);
        BranchPair {
            beta,
            energies: [energies[idx[0]], energies[second]],
            overlaps: [
                weights[idx[0]],
                if idx.len() > 1 { weights[second] } else { 0.0 },
            ],
        }
    }
}

impl BranchProbe for SyntheticBand {
    fn probe(&self, beta: f64) -> Result<BranchPair> {
        Ok(self.pair(beta))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions {
    /// Jump threshold in units of the local median absolute difference.
    pub threshold: f64,
    /// Samples in the median window (odd).
    pub median_window: usize,
    /// Half width of the initial refinement window, in band samples.
    pub refine_half_width: usize,
}

impl Default for DetectOptions {
    fn default() -> Self {
        Self {
            threshold: 5.0,
            median_window: 65,
            refine_half_width: 48,
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Indices `i` where the jump between samples `i` and `i+1` (cyclic)
/// exceeds `threshold` times the local median absolute difference and is
/// the largest difference within the median window.
pub fn jump_candidates(energies: &[f64], opts: &DetectOptions) -> Vec<usize> {
    let n = energies.len();
    let d: Vec<f64> = (0..n)
        .map(|i| (energies[(i + 1) % n] - energies[i]).abs())
        .collect();
    let half = opts.median_window / 2;
    let scale = energies
        .iter()
        .fold(0.0_f64, |m, e| m.max(e.abs()))
        .max(f64::MIN_POSITIVE);
    (0..n)
        .filter(|&i| {
            let mut local: Vec<f64> = (0..opts.median_window)
                .map(|k| d[(i + n + k - half) % n])
                .collect();
            let is_max = local.iter().all(|&v| v <= d[i]);
            let med = median(&mut local);
            is_max && d[i] > opts.threshold * med && d[i] > 1e-12 * scale
        })
        .collect()
}

/// Locates the discontinuities of a fine band and fits each one through
/// [`refine_crossing`] on `probe`. Jumps without a hybridising partner (a
/// change of the second state rather than an avoided crossing) are dropped.
pub fn detect_resonances(
    band: &BlochBand,
    probe: &dyn BranchProbe,
    opts: &DetectOptions,
) -> Result<Vec<Resonance>> {
    let n = band.len();
    if n < MIN_FINE_SAMPLES {
        return Err(Error::InvalidParams(format!(
            "resonance detection needs at least {MIN_FINE_SAMPLES} samples, got {n}"
        )));
    }
    let step = 1.0 / n as f64;
    let mut found: Vec<Resonance> = Vec::new();
    for i in jump_candidates(&band.energies, opts) {
        let centre = band.betas[i] + 0.5 * step;
        let half = opts.refine_half_width as f64 * step;
        let crossing = match refine_crossing(probe, centre - half, centre + half) {
            Ok(c) => c,
            Err(Error::NoCrossing { .. }) => continue,
            Err(Error::WindowTooWide { .. }) => {
                return Err(Error::OverlappingResonances { beta: centre })
            }
            Err(e) => return Err(e),
        };
        let r = Resonance {
            fit_residual: crossing.fit_residual,
            ..Resonance::new(crossing.beta0, crossing.w, crossing.alpha)
        };
        found.push(r);
    }
    found.sort_by(|a, b| a.beta0.total_cmp(&b.beta0));
    let mut merged: Vec<Resonance> = Vec::with_capacity(found.len());
    for r in found {
        if let Some(last) = merged.last_mut() {
            let gap = relative_beta(r.beta0, last.beta0).abs();
            if gap < 0.05 * r.width.min(last.width) {
                if r.fit_residual < last.fit_residual {
                    *last = r;
                }
                continue;
            }
            if gap < 0.5 * (r.width + last.width) {
                return Err(Error::OverlappingResonances { beta: r.beta0 });
            }
        }
        merged.push(r);
    }
    if merged.len() > 1 {
        let (first, last) = (merged[0], merged[merged.len() - 1]);
        let gap = relative_beta(first.beta0, last.beta0).abs();
        if gap < 0.05 * first.width.min(last.width) {
            merged.pop();
        } else if gap < 0.5 * (first.width + last.width) {
            return Err(Error::OverlappingResonances { beta: first.beta0 });
        }
    }
    Ok(merged)
}

/// `t_n = -(i / (pi n)) sum_r sgn(alpha_r) |W_r| exp(2 pi i n beta0_r)`,
/// the large-`n` transform of the resonance terms under the convention
/// `t_n = (1/N) sum_beta eps(beta) exp(2 pi i n beta)`.
pub fn asymptotic_hoppings(resonances: &[Resonance], ns: &[usize]) -> Vec<Complex64> {
    ns.iter()
        .map(|&n| {
            let s: Complex64 = resonances
                .iter()
                .map(|r| {
                    Complex64::from_polar(r.alpha.signum() * r.w, 2.0 * PI * n as f64 * r.beta0)
                })
                .sum();
            -Complex64::i() * s / (PI * n as f64)
        })
        .collect()
}

/// `sqrt(sum W^2) / pi`, the RMS prediction for `n |t_n|`.
pub fn typical_amplitude(resonances: &[Resonance]) -> f64 {
    resonances.iter().map(|r| r.w * r.w).sum::<f64>().sqrt() / PI
}

/// Geometric mean of `|a_n| / |b_n|` over paired series.
pub fn typical_ratio(a: &[Complex64], b: &[Complex64]) -> f64 {
    let logs: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(_, y)| y.norm() > 0.0)
        .map(|(x, y)| (x.norm() / y.norm()).ln())
        .collect();
    (logs.iter().sum::<f64>() / logs.len().max(1) as f64).exp()
}

/// Least-squares slope of `ln |t_n|` against `ln n` for `n` in `[lo, hi]`.
pub fn hopping_slope(hoppings: &[Complex64], lo: usize, hi: usize) -> f64 {
    let pts: Vec<(f64, f64)> = (lo..=hi.min(hoppings.len() - 1))
        .filter(|&n| n > 0 && hoppings[n].norm() > 0.0)
        .map(|n| ((n as f64).ln(), hoppings[n].norm().ln()))
        .collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `n |t_n|` over `n` in `[lo, hi]`, divided by its RMS.
pub fn rescaled_amplitudes(hoppings: &[Complex64], lo: usize, hi: usize) -> Result<Vec<f64>> {
    let hi = hi.min(hoppings.len() / 2);
    let raw: Vec<f64> = (lo.max(1)..=hi)
        .map(|n| n as f64 * hoppings[n].norm())
        .collect();
    if raw.len() < MIN_STATISTICS_SAMPLES {
        return Err(Error::WindowTooSmall {
            samples: raw.len(),
            min: MIN_STATISTICS_SAMPLES,
        });
    }
    let rms = (raw.iter().map(|x| x * x).sum::<f64>() / raw.len() as f64).sqrt();
    if rms == 0.0 {
        return Ok(raw);
    }
    Ok(raw.into_iter().map(|x| x / rms).collect())
}

/// Draws `count` values of `|sum_j g_j exp(i phi_j)|` with Gaussian `g_j` and
/// uniform phases, divided by their theoretical RMS `sqrt(n_res) w`.
pub fn sample_universal_model<R: Rng>(n_res: usize, count: usize, rng: &mut R) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let norm = (n_res.max(1) as f64).sqrt();
    (0..count)
        .map(|_| {
            let s: Complex64 = (0..n_res)
                .map(|_| Complex64::from_polar(normal.sample(rng), rng.random::<f64>() * 2.0 * PI))
                .sum();
            s.norm() / norm
        })
        .collect()
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Two-sample KS critical distance at significance `level`.
pub fn ks_critical(level: f64, n: usize, m: usize) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// One parameter set entering the pooled statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationInput {
    pub rescaled: Vec<f64>,
    pub n_res: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationStats {
    pub ks_distance: f64,
    pub critical_value: f64,
    pub n_samples: usize,
    pub n_model_samples: usize,
    /// `"consistent"` when the KS distance is below the 1% critical value.
    pub verdict: String,
    pub bin_centers: Vec<f64>,
    pub density: Vec<f64>,
}

impl FluctuationStats {
    pub fn is_consistent(&self) -> bool {
        self.verdict == "consistent"
    }
}

/// Normalised histogram on `bins` equal bins over `[0, max]`.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>) {
    let top = values
        .iter()
        .copied()
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let width = top / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let k = ((v / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = values.len().max(1) as f64;
    let centers = (0..bins).map(|k| (k as f64 + 0.5) * width).collect();
    let density = counts.iter().map(|&c| c as f64 / (total * width)).collect();
    (centers, density)
}

/// Compares pooled rescaled `n |t_n|` with the Monte-Carlo universal model;
/// each set contributes model draws in proportion to its sample count.
pub fn fluctuation_statistics(sets: &[FluctuationInput], seed: u64) -> Result<FluctuationStats> {
    let data: Vec<f64> = sets
        .iter()
        .flat_map(|s| s.rescaled.iter().copied())
        .collect();
    if data.len() < MIN_STATISTICS_SAMPLES {
        return Err(Error::WindowTooSmall {
            samples: data.len(),
            min: MIN_STATISTICS_SAMPLES,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Vec::with_capacity(MONTE_CARLO_SAMPLES);
    for s in sets {
        let share = MONTE_CARLO_SAMPLES * s.rescaled.len() / data.len();
        model.extend(sample_universal_model(s.n_res, share, &mut rng));
    }
    let d = ks_distance(&data, &model);
    let crit = ks_critical(0.01, data.len(), model.len());
    let (bin_centers, density) = histogram(&data, 40);
    Ok(FluctuationStats {
        ks_distance: d,
        critical_value: crit,
        n_samples: data.len(),
        n_model_samples: model.len(),
        verdict: if d < crit { "consistent" } else { "rejected" }.to_string(),
        bin_centers,
        density,
    })
}

/// Separation of time scales between Rabi oscillations at the crossings and
/// the induced tunnelling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RabiReport {
    /// `pi heff / max W`.
    pub rabi_bound: f64,
    /// `pi heff / min W`, the slowest Rabi period at equal mixing.
    pub slowest_rabi_period: f64,
    /// `heff / max_n |t_n|`.
    pub fastest_tunnelling_time: f64,
    /// `min_n (heff / |t_n|) / rabi_bound`.
    pub min_margin: f64,
    pub passes: bool,
}

/// Checks `heff / |t_n| >= pi heff / max W` for every `n >= 1`.
pub fn rabi_validity(resonances: &[Resonance], model: &EffectiveModel) -> Result<RabiReport> {
    if resonances.is_empty() {
        return Err(Error::InvalidParams("no resonances".into()));
    }
    let h = model.heff;
    let w_max = resonances.iter().map(|r| r.w).fold(0.0, f64::max);
    let w_min = resonances.iter().map(|r| r.w).fold(f64::INFINITY, f64::min);
    let rabi_bound = PI * h / w_max;
    let t_max = model.hoppings[1..]
        .iter()
        .map(|t| t.norm())
        .fold(0.0, f64::max);
    let fastest = h / t_max;
    let min_margin = fastest / rabi_bound;
    Ok(RabiReport {
        rabi_bound,
        slowest_rabi_period: PI * h / w_min,
        fastest_tunnelling_time: fastest,
        min_margin,
        passes: min_margin >= 1.0,
    })
}
