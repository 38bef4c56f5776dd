//! Dense complex linear algebra used by the Floquet pipeline and its oracles.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;

pub type CMatrix = DMatrix<Complex64>;

/// Largest entry of `U^dagger U - I`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for ((i, j), v) in prod
        .iter()
        .enumerate()
        .map(|(k, v)| ((k % prod.nrows(), k / prod.nrows()), v))
    {
        let target = if i == j {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        worst = worst.max((v - target).norm());
    }
    worst
}

/// Eigendecomposition of a normal (here unitary) matrix through its complex
/// Schur form: for normal input the triangular factor is diagonal and the
/// Schur vectors are orthonormal eigenvectors. Returns `None` if the QR
/// iteration does not converge.
pub fn eig_normal(u: &CMatrix) -> Option<(Vec<Complex64>, CMatrix)> {
    let schur = Schur::try_new(u.clone(), 1e-15, 10_000)?;
    let (q, t) = schur.unpack();
    let values = (0..t.nrows()).map(|i| t[(i, i)]).collect();
    Some((values, q))
}

/// Largest `||U v - lambda v||` over the eigenpairs.
pub fn eigen_residual(u: &CMatrix, values: &[Complex64], vectors: &CMatrix) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(k, lam)| {
            let v: DVector<Complex64> = vectors.column(k).into_owned();
            (u * &v - v * *lam).norm()
        })
        .fold(0.0, f64::max)
}

fn one_norm(m: &CMatrix) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a diagonal [6/6] Padé
/// approximant. Serves as the general-purpose oracle for the structured
/// propagators.
pub fn expm(a: &CMatrix) -> CMatrix {
    const Q: usize = 6;
    let n = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / Complex64::new(2f64.powi(squarings), 0.0);

    // Padé coefficients c_k = (2q-k)! q! / ((2q)! k! (q-k)!)
    let mut coeffs = [0.0f64; Q + 1];
    coeffs[0] = 1.0;
    for k in 1..=Q {
        coeffs[k] = coeffs[k - 1] * (Q + 1 - k) as f64 / (k * (2 * Q + 1 - k)) as f64;
    }
    let id = CMatrix::identity(n, n);
    let mut num = id.clone() * Complex64::new(coeffs[0], 0.0);
    let mut den = num.clone();
    let mut power = id;
    for (k, c) in coeffs.iter().enumerate().skip(1) {
        power = &power * &scaled;
        let term = &power * Complex64::new(*c, 0.0);
        num += &term;
        if k % 2 == 0 {
            den += &term;
        } else {
            den -= &term;
        }
    }
    let mut result = den.lu().solve(&num).expect("Padé denominator is singular");
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Unitary built by composing complex plane rotations and phases.
    pub(crate) fn rotation_unitary(n: usize, seed: u64) -> CMatrix {
        let mut u = CMatrix::identity(n, n);
        let mut state = seed;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..3 {
            for i in 0..n {
                for j in (i + 1)..n {
                    let theta = 2.0 * PI * next();
                    let phi = 2.0 * PI * next();
                    let mut g = CMatrix::identity(n, n);
                    g[(i, i)] = c(theta.cos(), 0.0);
                    g[(j, j)] = c(theta.cos(), 0.0);
                    g[(i, j)] = -Complex64::from_polar(theta.sin(), phi);
                    g[(j, i)] = Complex64::from_polar(theta.sin(), -phi);
                    u = g * u;
                }
            }
        }
        let d = CMatrix::from_diagonal(&DVector::from_iterator(
            n,
            (0..n).map(|_| Complex64::from_polar(1.0, 2.0 * PI * next())),
        ));
        d * u
    }

    #[test]
    fn identity_and_diagonal() {
        let id = CMatrix::identity(6, 6);
        let (vals, _) = eig_normal(&id).unwrap();
        assert!(vals.iter().all(|v| (v - c(1.0, 0.0)).norm() < 1e-14));

        let diag: Vec<Complex64> = (0..6)
            .map(|k| Complex64::from_polar(1.0, 0.7 * k as f64 - 1.0))
            .collect();
        let d = CMatrix::from_diagonal(&DVector::from_vec(diag.clone()));
        let (vals, _) = eig_normal(&d).unwrap();
        for want in &diag {
            assert!(vals.iter().any(|v| (v - want).norm() < 1e-13));
        }
    }

    #[test]
    fn random_unitary_reconstruction() {
        let u = rotation_unitary(8, 42);
        assert!(unitarity_residual(&u) < 1e-13);
        let (vals, vecs) = eig_normal(&u).unwrap();
        let lam = CMatrix::from_diagonal(&DVector::from_vec(vals.clone()));
        let rec = &vecs * lam * vecs.adjoint();
        assert!((rec - &u).camax() < 1e-10);
        assert!(eigen_residual(&u, &vals, &vecs) < 1e-12);
        assert!(vals.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn expm_of_diagonal_and_nilpotent() {
        let d = CMatrix::from_diagonal(&DVector::from_vec(vec![
            c(0.0, 3.0),
            c(-1.0, 0.0),
            c(2.0, -40.0),
        ]));
        let e = expm(&d);
        for i in 0..3 {
            assert!((e[(i, i)] - d[(i, i)].exp()).norm() < 1e-12 * d[(i, i)].exp().norm().max(1.0));
        }
        let mut n = CMatrix::zeros(2, 2);
        n[(0, 1)] = c(5.0, 1.0);
        let e = expm(&n);
        assert!((e[(0, 1)] - c(5.0, 1.0)).norm() < 1e-13);
        assert!((e[(0, 0)] - c(1.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn expm_of_hermitian_generator_is_unitary() {
        let u = rotation_unitary(5, 7);
        let (vals, vecs) = eig_normal(&u).unwrap();
        // H = V diag(arg) V^dagger, exp(-i H) must give back U
        let phases = DVector::from_iterator(5, vals.iter().map(|v| c(-v.arg(), 0.0)));
        let h = &vecs * CMatrix::from_diagonal(&phases) * vecs.adjoint();
        let back = expm(&(h * c(0.0, -1.0)));
        assert!((back - u).camax() < 1e-11);
    }
}
