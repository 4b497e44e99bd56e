//! Numerics for q-deformed bosons: q-calculus, truncated Fock-space
//! operators, q-coherent states, diagonal (P) representations of density
//! matrices, normal ordering and the coherent-state reproducing kernels.

pub mod coherent;
pub mod error;
pub mod fock;
pub mod kernels;
pub mod numeric;
pub mod qcalc;
pub mod representations;
pub mod verify;

pub use error::{Error, Result};
pub use fock::{DensityMatrix, FockOperator, FockTruncation};
pub use qcalc::DeformationParam;
