#![no_std]
extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod copula;
pub mod error;
pub mod estimation;
pub mod likelihood;
pub mod linalg;
pub mod margins;
pub mod math;
pub mod quadrature;
pub mod simulation;
pub mod sroc;

pub use error::{Error, Result};
