//! Immersed boundary-conformal isogeometric analysis of Kirchhoff-Love and
//! Reissner-Mindlin shells on trimmed spline surfaces.

pub mod assembly;
pub mod bspline;
pub mod cases;
pub mod cli;
pub mod domain;
pub mod error;
pub mod gauss;
pub mod geometry;
pub mod material;
pub mod shell;
pub mod verify;

pub use error::{IbcmError, Result};
