//! Driven-lattice simulation: classical phase space, split-step quantum
//! propagation, Floquet-Bloch bands, the effective long-range lattice and the
//! resonance analysis of its hoppings.

pub mod band;
pub mod cache;
pub mod classical;
pub mod config;
pub mod effective;
pub mod error;
pub mod io;
pub mod linalg;
pub mod params;
pub mod propagator;
pub mod resonance;
pub mod scalar;
pub mod wave;

pub use error::{Error, Result};
pub use scalar::Real;

pub type LatticeParamsF64 = params::LatticeParams<f64>;
pub type LatticeParamsF32 = params::LatticeParams<f32>;
pub type ClassicalStateF64 = classical::ClassicalState<f64>;
pub type ClassicalStateF32 = classical::ClassicalState<f32>;
pub type TwoLevelF64 = resonance::TwoLevelResult<f64>;
