//! Device-independent certification of Bell state measurements.
//!
//! The crate is organised in four layers:
//!
//! - [`linalg`] — dense complex linear algebra: tensor products, partial
//!   trace/transpose, matrix square roots, Uhlmann fidelity, negativity.
//! - [`scenario`] — the physical setup: sources, Bell state measurement
//!   instruments, CHSH tests, analytic and finite-statistics protocols.
//! - [`bounds`] — closed-form certification bounds mapping observed
//!   statistics (CHSH values, outcome probabilities, a four-partite Bell
//!   value) to certified fidelities and rates.
//! - [`verify`] — numerical verification of the underlying operator
//!   inequalities, relabeling covariance, the teleportation-based injection
//!   map, and end-to-end soundness of every bound against brute-force
//!   fidelity oracles.

pub mod bounds;
pub mod linalg;
pub mod scenario;
pub mod tol;
pub mod verify;

pub use bounds::{Bound, BoundConstants, CertificateReport, Flags};
pub use linalg::{CMat, CVec, KetVector, QuantumState, C64};
pub use scenario::{
    BinaryObservableSetting, DeltaModel, ExperimentStatistics, MeasurementInstrument, NoiseModel,
    Relabeling,
};
pub use tol::Tolerances;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("subsystem dimensions {dims:?} do not factor dimension {dim}")]
    BadFactorization { dim: usize, dims: Vec<usize> },

    #[error("subsystem index {0} out of range (have {1} factors)")]
    IndexOutOfRange(usize, usize),

    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix is not positive semi-definite (min eigenvalue {0:.3e})")]
    NotPositive(f64),

    #[error("trace is not 1 (got {0})")]
    InvalidTrace(f64),

    #[error("vector is not normalized (squared norm {0})")]
    NotNormalized(f64),

    #[error("observable is not a binary ±1 observable (‖O²−𝟙‖ = {0:.3e})")]
    NotBinaryObservable(f64),

    #[error("instrument is not trace preserving (‖ΣK†K−𝟙‖ = {0:.3e})")]
    NotTracePreserving(f64),

    #[error("parameter {name} = {value} outside [{min}, {max}]")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("outcome {0} has vanishing probability; conditional state undefined")]
    ZeroProbability(usize),

    #[error("extraction weight g({lambda}) = {g} outside [0, 1]; channel is not completely positive")]
    InvalidExtractionWeight { lambda: f64, g: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
