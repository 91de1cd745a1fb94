//! Expression language for model files.

mod ast;
mod model;
mod parser;

pub use ast::{Ast, BinOp, EvalContext, Func, Var};
pub use model::ModelDef;
pub use parser::parse_expr;
