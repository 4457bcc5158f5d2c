//! Non-Markovian dynamics of a silicon-vacancy center coupled to phonons.

pub mod bath;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod lindblad;
pub mod meanfield;
pub mod measures;
pub mod optimize;
pub mod ode;
pub mod quadrature;
pub mod quantum;
pub mod siv;
pub mod sweep;
pub mod units;
pub mod validation;

pub use error::{Error, Result};
pub use quantum::{DensityMatrix, FockSpace, OperatorMatrix, C64};
