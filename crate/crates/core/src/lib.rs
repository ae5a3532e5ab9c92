//! Numerical verification of the trace theory of `W^{1,p}` on bounded
//! Lipschitz domains: graph charts and flattening maps, area-formula
//! quadrature, discrete Sobolev norms, the trace operator with empirical
//! trace constants, and the cutoff-plus-mollification approximation of
//! trace-zero functions.

pub mod approx;
pub mod catalog;
pub mod error;
pub mod experiment;
pub mod field;
pub mod geometry;
pub mod grid;
pub mod measure;
pub mod trace;

pub use error::{Error, Result};
