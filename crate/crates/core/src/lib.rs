//! Numerical laboratory for `-div(p∇u) = u^{q-1} + λu` with the critical
//! Sobolev exponent `q = 2n/(n-2)` and a radial weight `p`.

pub mod bubbles;
pub mod config;
pub mod constants;
pub mod error;
pub mod experiments;
pub mod family;
pub mod linalg;
pub mod pohozaev;
pub mod quadrature;
pub mod variational;
pub mod weights;

pub use error::{Error, Result};

/// Crate version embedded in run records and cache keys.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
