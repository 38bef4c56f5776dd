use std::f64::consts::PI;

use mixedlattice_core::band::{
    eig_unitary, extract_effective_band, quasi_energy, BandOptions, FloquetProbe,
};
use mixedlattice_core::effective::{reflection_defect, run_exact_dynamics};
use mixedlattice_core::linalg::{expm, CMatrix};
use mixedlattice_core::params::LatticeParams;
use mixedlattice_core::propagator::{
    bloch_betas, build_floquet_matrix, propagate, split_step, wannier_states, SplitStepper,
};
use mixedlattice_core::wave::{
    gaussian_reference, harmonic_width, site_probabilities, Grid, WaveState,
};
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Unnormalised forward DFT matrix `F_kj = exp(-2 pi i j k / n)`.
fn dft(n: usize) -> CMatrix {
    DMatrix::from_fn(n, n, |k, j| {
        Complex64::from_polar(1.0, -2.0 * PI * (j * k) as f64 / n as f64)
    })
}

/// Dense position-basis operator `F^-1 diag(f(p_k)) F`.
fn momentum_operator(grid: &Grid, beta: f64, f: impl Fn(f64) -> Complex64) -> CMatrix {
    let n = grid.len();
    let fwd = dft(n);
    let inv = fwd.adjoint() / c(n as f64, 0.0);
    let diag = DMatrix::from_fn(n, n, |a, b| {
        if a == b {
            f(grid.fft_p(a) - grid.heff * beta)
        } else {
            c(0.0, 0.0)
        }
    });
    inv * diag * fwd
}

fn dense_hamiltonian(p: &LatticeParams, grid: &Grid, beta: f64) -> CMatrix {
    let mut h = momentum_operator(grid, beta, |q| c(q * q / 2.0, 0.0));
    for j in 0..grid.len() {
        h[(j, j)] += c(-p.gamma * grid.x(j).cos(), 0.0);
    }
    h
}

/// Product of dense Strang steps `K_half V(t + dt/2) K_half`.
fn dense_strang(p: &LatticeParams, grid: &Grid, beta: f64, steps: usize) -> CMatrix {
    let h = p.heff;
    let dt = p.dt;
    let k_half = momentum_operator(grid, beta, |q| {
        Complex64::from_polar(1.0, -q * q * dt / (4.0 * h))
    });
    let n = grid.len();
    let mut u = CMatrix::identity(n, n);
    for s in 0..steps {
        let t = (s as f64 + 0.5) * dt;
        let v = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                let pot = -p.gamma * (1.0 + p.epsilon * t.cos()) * grid.x(a).cos();
                Complex64::from_polar(1.0, -pot * dt / h)
            } else {
                c(0.0, 0.0)
            }
        });
        u = &k_half * v * &k_half * u;
    }
    u
}

fn max_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Circular distance between two quasi-energies on the zone of width `2 pi heff / T_F`.
fn zone_distance(a: f64, b: f64, zone: f64) -> f64 {
    let d = (a - b).rem_euclid(zone);
    d.min(zone - d)
}

#[test]
fn floquet_matrix_is_the_product_of_strang_steps() {
    let p = LatticeParams::reference();
    let grid = Grid::cell(32, p.heff).unwrap();
    for &beta in &[0.0, 0.3] {
        let u = build_floquet_matrix(&p, beta, 32).unwrap();
        let oracle = dense_strang(&p, &grid, beta, p.steps_per_floquet());
        let err = max_entry(&(&u.entries - oracle));
        assert!(err < 1e-10, "beta {beta}: {err}");
    }
}

/// Max entry error of one drive period of split steps on an `N_p = 8` cell
/// against the dense exponential.
fn tiny_grid_error(p: &LatticeParams) -> f64 {
    let grid = Grid::cell(8, p.heff).unwrap();
    let n = grid.len();
    let steps = (2.0 * PI / p.dt).round() as usize;
    let mut buf = vec![c(0.0, 0.0); n * n];
    for j in 0..n {
        buf[j * n + j] = c(1.0, 0.0);
    }
    SplitStepper::new(p, &grid, 0.0).advance(&mut buf, 0.0, steps);
    let u = DMatrix::from_vec(n, n, buf);
    let h = dense_hamiltonian(p, &grid, 0.0);
    let oracle = expm(&(h * c(0.0, -2.0 * PI / p.heff)));
    max_entry(&(u - oracle))
}

#[test]
fn tiny_grid_converges_to_dense_exponential_over_one_drive_period() {
    let base = LatticeParams::reference().unmodulated();
    let errs: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|f| tiny_grid_error(&base.with_dt(base.dt / f)))
        .collect();
    eprintln!("N_p = 8 exponential oracle errors at dt, dt/2, dt/4: {errs:?}");
    assert!(errs[0] < 1e-5, "{errs:?}");
    assert!(errs[2] < 1e-6, "{errs:?}");
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "{errs:?}");
    }
}

/// Largest quasi-energy error of the lowest `k` dense eigenstates.
fn low_lying_error(p: &LatticeParams, k: usize) -> f64 {
    let grid = Grid::cell(32, p.heff).unwrap();
    let eig = SymmetricEigen::new(dense_hamiltonian(p, &grid, 0.0));
    let mut energies: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    energies.sort_by(f64::total_cmp);
    let spectrum = eig_unitary(&build_floquet_matrix(p, 0.0, 32).unwrap()).unwrap();
    let t_f = p.floquet_time();
    let zone = 2.0 * PI * p.heff / t_f;
    let quasi = spectrum.quasi_energies();
    energies[..k]
        .iter()
        .map(|&e| {
            let folded = quasi_energy(Complex64::from_polar(1.0, -e * t_f / p.heff), p.heff, t_f);
            quasi
                .iter()
                .map(|&q| zone_distance(q, folded, zone))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

#[test]
fn unmodulated_quasi_energies_converge_to_dense_spectrum() {
    let base = LatticeParams::reference().unmodulated();
    let errs: Vec<f64> = [1.0, 2.0, 4.0]
        .iter()
        .map(|f| low_lying_error(&base.with_dt(base.dt / f), 1))
        .collect();
    assert!(errs[2] < 1e-8, "{errs:?}");
    // second order in dt
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..4.5).contains(&ratio), "{errs:?}");
    }
}

#[test]
fn single_step_versus_two_half_steps_is_third_order() {
    let p = LatticeParams::reference();
    let grid = Grid::new(2, 32, p.heff).unwrap();
    let s0 = gaussian_reference(&grid, 0.3, 0.2, 1.0);
    let defect = |dt: f64| {
        let one = split_step(&s0, 0.7, &p.with_dt(dt), &grid).unwrap();
        let half = p.with_dt(dt / 2.0);
        let mid = split_step(&s0, 0.7, &half, &grid).unwrap();
        let two = split_step(&mid, 0.7 + dt / 2.0, &half, &grid).unwrap();
        one.amplitudes
            .iter()
            .zip(&two.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    let d1 = defect(0.2);
    let d2 = defect(0.1);
    let ratio = d1 / d2;
    assert!((6.0..10.0).contains(&ratio), "{d1} {d2}");
}

#[test]
fn quasi_energy_sum_and_regular_level_are_stable_under_dt_halving() {
    let p = LatticeParams::reference();
    for &beta in &[0.0, 0.25, 0.41] {
        let a = FloquetProbe::new(p).spectrum(beta).unwrap();
        let b = FloquetProbe::new(p.with_dt(p.dt / 2.0))
            .spectrum(beta)
            .unwrap();
        let det_a: Complex64 = a.eigenvalues.iter().product();
        let det_b: Complex64 = b.eigenvalues.iter().product();
        let dphase = (det_a * det_b.conj()).arg().abs() * p.heff / p.floquet_time();
        assert!(dphase < 1e-6, "beta {beta}: {dphase}");
        let reg =
            |s: &mixedlattice_core::band::QuasiSpectrum| s.quasi_energies()[s.by_overlap()[0]];
        let d = (reg(&a) - reg(&b)).abs();
        assert!(d < 1e-6, "beta {beta}: {d}");
    }
}

#[test]
fn zero_duration_is_identity_and_norm_is_kept() {
    let p = LatticeParams::reference();
    let grid = Grid::new(3, 32, p.heff).unwrap();
    let s0 = gaussian_reference(&grid, 0.5, 0.1, 0.8);
    let same = propagate(&s0, 0.0, 0.0, &p, &grid, |_, _| {}).unwrap();
    assert_eq!(same.amplitudes, s0.amplitudes);
    let mut norms = Vec::new();
    propagate(&s0, 0.0, 5.0 * p.floquet_time(), &p, &grid, |_, s| {
        norms.push(s.norm_sqr())
    })
    .unwrap();
    assert_eq!(norms.len(), 6);
    assert!(norms.iter().all(|n| (n - 1.0).abs() < 1e-10));
}

#[test]
fn full_lattice_propagation_commutes_with_cell_shift() {
    let p = LatticeParams::reference();
    let grid = Grid::new(5, 32, p.heff).unwrap();
    let s0 = gaussian_reference(&grid, 0.4, -0.3, 1.1);
    let mut shifted = s0.amplitudes.clone();
    shifted.rotate_right(32);
    let shifted = WaveState::position(shifted);
    let t = p.floquet_time();
    let a = propagate(&s0, 0.0, t, &p, &grid, |_, _| {}).unwrap();
    let b = propagate(&shifted, 0.0, t, &p, &grid, |_, _| {}).unwrap();
    let mut a_shift = a.amplitudes;
    a_shift.rotate_right(32);
    let err = a_shift
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-12, "{err}");
}

#[test]
fn wannier_dynamics_stay_reflection_symmetric() {
    for eps in [0.0, 0.15] {
        let p = LatticeParams::reference().with_epsilon(eps);
        let rec = run_exact_dynamics(&p, 9, 4, 3).unwrap();
        for row in &rec.site_probabilities {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-8);
            assert!(reflection_defect(row, 4) < 1e-10, "eps {eps}: {row:?}");
        }
        let pch = rec.chaotic_fraction.unwrap();
        assert!(pch[0].abs() < 1e-10);
    }
}

#[test]
fn wannier_projector_is_idempotent() {
    let p = LatticeParams::reference();
    let grid = Grid::new(5, 32, p.heff).unwrap();
    let basis = wannier_states(&p, &grid).unwrap();
    let states = basis.states();
    // P = sum |n><n|; P^2 - P restricted to the Gaussian probe
    let probe = gaussian_reference(&grid, 1.0, 0.3, 0.9);
    let proj = |s: &WaveState| {
        let mut out = vec![c(0.0, 0.0); grid.len()];
        for w in &states {
            let a = w.inner(s);
            for (o, x) in out.iter_mut().zip(&w.amplitudes) {
                *o += a * x;
            }
        }
        WaveState::position(out)
    };
    let once = proj(&probe);
    let twice = proj(&once);
    let err = once
        .amplitudes
        .iter()
        .zip(&twice.amplitudes)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    assert!(err < 1e-10, "{err}");
    let reg = basis.regular_projection(&probe).unwrap();
    assert!((reg - once.norm_sqr()).abs() < 1e-10);
    let local = site_probabilities(&states[2], &grid).unwrap();
    assert!(local[2] > 0.99);
}

#[test]
fn band_samples_do_not_depend_on_the_mesh() {
    let p = LatticeParams::reference();
    let coarse = extract_effective_band(&p, &bloch_betas(8), &BandOptions::default()).unwrap();
    let fine = extract_effective_band(&p, &bloch_betas(32), &BandOptions::default()).unwrap();
    for (m, e) in coarse.energies.iter().enumerate() {
        assert_eq!(*e, fine.energies[4 * m]);
    }
}

#[test]
fn band_is_parity_symmetric_away_from_resonances() {
    let p = LatticeParams::reference();
    let band = extract_effective_band(&p, &bloch_betas(64), &BandOptions::default()).unwrap();
    let mut checked = 0;
    for m in 1..32 {
        let (a, b) = (m, 64 - m);
        if band.overlaps[a] < 0.9 || band.overlaps[b] < 0.9 {
            continue;
        }
        checked += 1;
        let d = (band.energies[a] - band.energies[b]).abs();
        assert!(d < 1e-8, "beta {}: {d}", band.betas[a]);
    }
    assert!(checked > 20);
}

#[test]
fn dynamics_grid_band_keeps_a_dominant_regular_state() {
    let p = LatticeParams::reference();
    let band = extract_effective_band(&p, &bloch_betas(269), &BandOptions::default()).unwrap();
    assert!(band.min_overlap() > 0.5, "{}", band.min_overlap());
}

#[test]
fn regular_state_selection_is_stable_to_reference_width() {
    let p = LatticeParams::reference();
    let probe = FloquetProbe::new(p);
    let grid = Grid::cell(32, p.heff).unwrap();
    let sigma = harmonic_width(p.heff, p.gamma);
    for beta in bloch_betas(32) {
        let spectrum = probe.spectrum(beta).unwrap();
        let chosen = spectrum.by_overlap()[0];
        for f in [0.7, 1.3] {
            let g = gaussian_reference(&grid, 0.0, p.heff * beta, f * sigma);
            let best = (0..32)
                .max_by(|&a, &b| {
                    let ov = |k: usize| {
                        spectrum
                            .eigenstates
                            .column(k)
                            .iter()
                            .zip(&g.amplitudes)
                            .map(|(v, r)| r.conj() * v)
                            .sum::<Complex64>()
                            .norm_sqr()
                    };
                    ov(a).total_cmp(&ov(b))
                })
                .unwrap();
            assert_eq!(best, chosen, "beta {beta} width factor {f}");
        }
    }
}
