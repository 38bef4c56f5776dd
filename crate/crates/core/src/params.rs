use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Drive period of the lattice modulation (dimensionless units).
pub fn drive_period<T: Real>() -> T {
    T::two_pi()
}

/// Spatial period of the lattice.
pub fn lattice_period<T: Real>() -> T {
    T::two_pi()
}

/// Physical and numerical parameters of the driven lattice
/// `H = p^2/2 - gamma (1 + epsilon cos t) cos x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams<T = f64> {
    /// Lattice depth.
    pub gamma: T,
    /// Modulation amplitude.
    pub epsilon: T,
    /// Effective Planck constant.
    pub heff: T,
    /// Split-step time step.
    pub dt: T,
    /// Number of drive periods covered by one Floquet step.
    pub floquet_periods: usize,
}

impl<T: Real> LatticeParams<T> {
    pub fn new(gamma: T, epsilon: T, heff: T) -> Self {
        Self {
            gamma,
            epsilon,
            heff,
            dt: T::lit(4.0) * T::PI() / T::lit(1000.0),
            floquet_periods: 2,
        }
    }

    /// gamma = 0.2, epsilon = 0.15, heff = 0.4 with the default numerics.
    pub fn reference() -> Self {
        Self::new(T::lit(0.2), T::lit(0.15), T::lit(0.4))
    }

    pub fn with_epsilon(self, epsilon: T) -> Self {
        Self { epsilon, ..self }
    }

    pub fn unmodulated(self) -> Self {
        self.with_epsilon(T::zero())
    }

    pub fn with_dt(self, dt: T) -> Self {
        Self { dt, ..self }
    }

    /// Duration of one Floquet step, `floquet_periods * 2 pi`.
    pub fn floquet_time(&self) -> T {
        T::from_usize(self.floquet_periods).unwrap() * drive_period::<T>()
    }

    /// Number of split steps per Floquet step. `dt` must divide the Floquet time.
    pub fn steps_per_floquet(&self) -> usize {
        (self.floquet_time() / self.dt)
            .round()
            .to_usize()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.gamma, self.epsilon, self.heff, self.dt]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParams("non-finite value".into()));
        }
        if self.gamma <= T::zero() {
            return Err(Error::InvalidParams(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if self.epsilon < T::zero() {
            return Err(Error::InvalidParams(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.heff <= T::zero() {
            return Err(Error::InvalidParams(format!(
                "heff must be > 0, got {}",
                self.heff
            )));
        }
        if self.dt <= T::zero() {
            return Err(Error::InvalidParams(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.floquet_periods == 0 {
            return Err(Error::InvalidParams("floquet_periods must be >= 1".into()));
        }
        let steps = self.floquet_time() / self.dt;
        let mismatch = (steps - steps.round()).abs();
        if steps.round() < T::one() || mismatch > T::lit(1e-6) * steps {
            return Err(Error::InvalidParams(format!(
                "dt={} does not divide the Floquet time {}",
                self.dt,
                self.floquet_time()
            )));
        }
        Ok(())
    }
}

impl<T: Real> Default for LatticeParams<T> {
    fn default() -> Self {
        Self::reference()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_numerics() {
        let p = LatticeParams::<f64>::default();
        assert_eq!(p.steps_per_floquet(), 1000);
        assert!((p.floquet_time() - 4.0 * std::f64::consts::PI).abs() < 1e-15);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_bad_values() {
        let p = LatticeParams::<f64>::default();
        assert!(LatticeParams { gamma: 0.0, ..p }.validate().is_err());
        assert!(LatticeParams { epsilon: -0.1, ..p }.validate().is_err());
        assert!(LatticeParams { heff: 0.0, ..p }.validate().is_err());
        assert!(LatticeParams {
            floquet_periods: 0,
            ..p
        }
        .validate()
        .is_err());
        assert!(p.with_dt(0.3).validate().is_err());
        assert!(p
            .with_dt(4.0 * std::f64::consts::PI / 2000.0)
            .validate()
            .is_ok());
    }
}
