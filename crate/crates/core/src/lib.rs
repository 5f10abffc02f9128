//! Causal structure learning with monotone triangular transport maps.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN on purpose

pub mod ci;
pub mod data;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod hermite;
pub mod io;
pub mod linalg;
pub mod optim;
pub mod pcot;
pub mod scalar;
pub mod scores;
pub mod sem;
pub mod transport;

pub use data::{SampleMatrix, Standardization};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use transport::{fit_map, FitOptions, FittedMap, ParamVector, TriangularMapSpec};

pub type SampleMatrix64 = SampleMatrix<f64>;
pub type FittedMap64 = FittedMap<f64>;
pub type ParamVector64 = ParamVector<f64>;
