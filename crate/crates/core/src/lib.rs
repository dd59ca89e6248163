//! Thermodynamic Cucker–Smale flocking on directed graphs: graph
//! connectivity, matrix contraction tools, communication kernels, the
//! continuous and discrete dynamics, and closed-form flocking certificates.

// `!(x > 0.0)` style guards deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certificate;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod matrix;

pub use certificate::{CertificateInputs, ContinuousParams, DiscreteParams, FlockingCertificate, Mode};
pub use dynamics::{EnsembleState, ModelSpec, Trajectory};
pub use error::{Error, Result};
pub use graph::Digraph;
pub use kernel::CommKernel;
pub use matrix::Matrix;
