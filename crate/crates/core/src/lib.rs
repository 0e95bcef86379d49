//! Numerical toolkit for classical and quantum chaos in driven transmons.
//!
//! Energies and frequencies are angular (rad per unit time) throughout; the
//! only unit conversion lives in [`model::GHZ`] and is applied by callers.

pub mod chaosmetrics;
pub mod classical;
pub mod cqed;
pub mod dispersion;
pub mod dissipation;
pub mod error;
pub mod floquet;
pub mod linalg;
pub mod model;
pub mod phasespace;
pub mod precise;

pub use error::{Error, Result};
pub use linalg::C64;
