//! Maximum-likelihood fitting of canonical GLMs in diverging dimensions,
//! conventional Wald p-values, and Monte Carlo experiments measuring when those
//! p-values stop being uniform under the null.

pub mod design;
pub mod error;
pub mod fit;
pub mod glm;
pub mod harness;
pub mod numerics;
pub mod uniformity;

pub use error::{Error, Result};
