//! Stabilized SQP for degenerate constrained problems with mass-matrix metrics.

// `!(x > 0.0)` style checks deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod model;
pub mod solver;
pub mod spaces;
pub mod subproblem;

pub use error::{Error, Result};
pub use model::{ConeSpec, KktResidual, ProblemDef};
pub use spaces::{Functional, InnerProductSpace, MassSpec, PrimalVec, ProductSpace};
pub use subproblem::{SaddleSystem, SubproblemSolution};
