use std::collections::BTreeMap;
use std::fmt;

use crate::numkit::Scalar;
use crate::{Error, Result};

/// A coordinate variable; indices are zero-based (`x1` is `X(0)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    X(usize),
    Y(usize),
}

impl Var {
    pub fn index(self) -> usize {
        match self {
            Var::X(i) | Var::Y(i) => i,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::X(i) => write!(f, "x{}", i + 1),
            Var::Y(i) => write!(f, "y{}", i + 1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Abs,
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" | "ln" => Func::Log,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

/// Expression tree produced by the parser. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub enum Ast {
    Num(f64),
    Var(Var),
    Param(String),
    Neg(Box<Ast>),
    Call(Func, Box<Ast>),
    Binary(BinOp, Box<Ast>, Box<Ast>),
}

/// Values bound to the free symbols of an expression.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a, S> {
    pub x: &'a [S],
    pub y: &'a [S],
    pub params: &'a BTreeMap<String, f64>,
}

impl Ast {
    /// Longest root-to-leaf path counted in edges.
    pub fn depth(&self) -> usize {
        match self {
            Ast::Num(_) | Ast::Var(_) | Ast::Param(_) => 0,
            Ast::Neg(a) | Ast::Call(_, a) => 1 + a.depth(),
            Ast::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn for_each_var(&self, f: &mut impl FnMut(Var)) {
        match self {
            Ast::Var(v) => f(*v),
            Ast::Num(_) | Ast::Param(_) => {}
            Ast::Neg(a) | Ast::Call(_, a) => a.for_each_var(f),
            Ast::Binary(_, a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    pub fn for_each_param(&self, f: &mut impl FnMut(&str)) {
        match self {
            Ast::Param(p) => f(p),
            Ast::Num(_) | Ast::Var(_) => {}
            Ast::Neg(a) | Ast::Call(_, a) => a.for_each_param(f),
            Ast::Binary(_, a, b) => {
                a.for_each_param(f);
                b.for_each_param(f);
            }
        }
    }

    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.for_each_var(&mut |v| out.push(v));
        out.sort();
        out.dedup();
        out
    }

    /// Value of a variable-free subtree.
    pub fn const_value(&self, params: &BTreeMap<String, f64>) -> Option<f64> {
        let mut has_var = false;
        self.for_each_var(&mut |_| has_var = true);
        if has_var {
            return None;
        }
        let ctx = EvalContext::<f64> {
            x: &[],
            y: &[],
            params,
        };
        self.eval(&ctx).ok()
    }

    pub fn eval<S: Scalar>(&self, ctx: &EvalContext<'_, S>) -> Result<S> {
        match self {
            Ast::Num(v) => Ok(S::from_f64(*v)),
            Ast::Var(v) => {
                let slot = match v {
                    Var::X(i) => ctx.x.get(*i),
                    Var::Y(i) => ctx.y.get(*i),
                };
                slot.cloned()
                    .ok_or_else(|| Error::Eval(format!("variable {v} is not bound")))
            }
            Ast::Param(p) => ctx
                .params
                .get(p)
                .map(|v| S::from_f64(*v))
                .ok_or_else(|| Error::Eval(format!("parameter {p} is not bound"))),
            Ast::Neg(a) => Ok(-a.eval(ctx)?),
            Ast::Call(func, a) => {
                let v = a.eval(ctx)?;
                match func {
                    Func::Sqrt => v.try_sqrt(),
                    Func::Abs => Ok(v.abs()),
                    Func::Sin => Ok(v.sin()),
                    Func::Cos => Ok(v.cos()),
                    Func::Exp => Ok(v.exp()),
                    Func::Log => v.try_ln(),
                }
            }
            Ast::Binary(op, a, b) => {
                if *op == BinOp::Pow {
                    return self.eval_pow(a, b, ctx);
                }
                let (l, r) = (a.eval(ctx)?, b.eval(ctx)?);
                match op {
                    BinOp::Add => Ok(l + r),
                    BinOp::Sub => Ok(l - r),
                    BinOp::Mul => Ok(l * r),
                    BinOp::Div => l.try_div(&r),
                    BinOp::Pow => unreachable!(),
                }
            }
        }
    }

    fn eval_pow<S: Scalar>(&self, base: &Ast, exponent: &Ast, ctx: &EvalContext<'_, S>) -> Result<S> {
        let b = base.eval(ctx)?;
        match exponent.const_value(ctx.params) {
            Some(e) if e.fract() == 0.0 && e.abs() <= 1024.0 => {
                if e < 0.0 && b.value().abs() < 1e-300 {
                    return Err(Error::Eval("zero raised to a negative power".into()));
                }
                Ok(b.powi(e as i32))
            }
            Some(e) => {
                if !(b.value() > 0.0) {
                    return Err(Error::Eval(format!(
                        "non-integer power {e} of non-positive base {:e}",
                        b.value()
                    )));
                }
                Ok((b.ln() * e).exp())
            }
            None => {
                if !(b.value() > 0.0) {
                    return Err(Error::Eval(format!(
                        "variable power of non-positive base {:e}",
                        b.value()
                    )));
                }
                let e = exponent.eval(ctx)?;
                Ok((b.ln() * e).exp())
            }
        }
    }
}

/// Fully parenthesised rendering; parsing it back yields the same tree.
impl fmt::Display for Ast {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ast::Num(v) if *v < 0.0 => write!(f, "(-{:?})", -v),
            Ast::Num(v) => write!(f, "{v:?}"),
            Ast::Var(v) => write!(f, "{v}"),
            Ast::Param(p) => write!(f, "{p}"),
            Ast::Neg(a) => write!(f, "(-{a})"),
            Ast::Call(func, a) => write!(f, "{}({a})", func.name()),
            Ast::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}
