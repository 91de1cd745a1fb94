//! Finsler geometry engine: model files, metric data, sprays and
//! connections, and a verification harness for the change
//! F -> F² / (F - Φ) driven by a vector field φ.

// NaN must fail domain and tolerance checks, so `!(a > b)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod connections;
pub mod error;
pub mod expr;
pub mod harness;
pub mod matsumoto;
pub mod metric;
pub mod models;
pub mod numkit;

pub use error::{Error, Result};
pub use expr::{parse_expr, Ast, ModelDef};
pub use numkit::{DiffConfig, Jet, Mat, Scalar, Tensor3};
