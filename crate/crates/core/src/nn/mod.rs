//! Minimal define-by-run neural-network machinery in 64-bit floats.
//!
//! No external autodiff backend: the models here are small enough that a
//! plain tape over `ndarray` keeps every run bitwise deterministic and lets
//! the objectives be gradient-checked against finite differences.

pub mod adam;
pub mod graph;
pub mod init;
pub mod ops;
pub mod store;

pub use adam::Adam;
pub use graph::{Graph, Var};
pub use store::ParamStore;
