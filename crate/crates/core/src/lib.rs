//! Magnetic Laplacians on finite Sierpinski gasket graphs.
//!
//! The scalar decimation maps and the butterfly renderer are generic over
//! [`Real`] (`f32` or `f64`); graph, operator and determinant code is `f64`.

pub mod butterfly;
pub mod crsf;
pub mod decimation;
pub mod determinants;
pub mod enumerator;
pub mod error;
pub mod gasket;
pub mod gauge;
pub mod operator;
pub mod scalar;

pub use error::{Result, SgError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub use scalar::Real;

pub type FluxPair64 = gauge::FluxPair<f64>;
pub type FluxPair32 = gauge::FluxPair<f32>;
pub type DecimationStep64 = decimation::DecimationStep<f64>;
pub type DecimationStep32 = decimation::DecimationStep<f32>;
