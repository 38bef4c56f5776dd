use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("grid mismatch: expected {expected} samples, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("Floquet matrix lost unitarity at beta={beta}: residual {residual:e}")]
    UnitarityLoss { beta: f64, residual: f64 },

    #[error("band mixing at beta={beta}: best regular overlap {overlap:.4} below {threshold}")]
    BandMixing {
        beta: f64,
        overlap: f64,
        threshold: f64,
    },

    #[error("eigensolver did not converge at beta={beta}")]
    ConvergenceFailure { beta: f64 },

    #[error(
        "regular band touches the quasi-energy branch edge at beta={beta} (energy {energy:e})"
    )]
    BranchEdge { beta: f64, energy: f64 },

    #[error("degenerate classification: all {count} seeds labelled {label}")]
    DegenerateClassification { count: usize, label: String },

    #[error("refinement window contains {count} discontinuities, expected exactly one")]
    WindowTooWide { count: usize },

    #[error("no avoided crossing between beta={lo} and beta={hi}")]
    NoCrossing { lo: f64, hi: f64 },

    #[error("resonance windows overlap near beta={beta}")]
    OverlappingResonances { beta: f64 },

    #[error("statistics window too small: {samples} samples (need at least {min})")]
    WindowTooSmall { samples: usize, min: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// True for failures of the numerics rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::UnitarityLoss { .. }
                | Error::BandMixing { .. }
                | Error::ConvergenceFailure { .. }
                | Error::BranchEdge { .. }
                | Error::DegenerateClassification { .. }
                | Error::WindowTooWide { .. }
                | Error::NoCrossing { .. }
                | Error::OverlappingResonances { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
