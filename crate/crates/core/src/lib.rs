pub mod classify;
pub mod error;
pub mod estimate;
pub mod multiop;
pub mod normsolver;
pub mod numeric;
pub mod quadrature;
pub mod rng;
pub mod stablelaw;
pub mod suites;
pub mod tensorspace;
pub mod verify;
pub mod witnesses;

pub use error::{MzError, Result};
