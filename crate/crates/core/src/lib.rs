//! Numerical laboratory for a coupled Hitchin system with a boundary-collar
//! deformation on the flat cylinder.

pub mod abelian;
pub mod config;
pub mod continuation;
pub mod embed;
pub mod hhcore;
pub mod lapack;
pub mod laxpair;
pub mod linalg;
pub mod persist;
pub mod pipelines;
pub mod probes;
pub mod surface;

pub use num_complex::Complex64 as C64;
