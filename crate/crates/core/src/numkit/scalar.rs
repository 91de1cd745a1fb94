use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::{Error, Result};

/// Smallest magnitude accepted as a divisor.
pub(crate) const TINY: f64 = 1e-300;

/// Arithmetic shared by plain reals and (nested) Taylor jets.
///
/// `value` always reports the innermost real value slot, so sign tests and
/// pivot choices work the same way at every nesting depth.
pub trait Scalar:
    Clone
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn value(&self) -> f64;

    /// `self += other`
    fn add_assign_ref(&mut self, other: &Self);
    /// `self += a * b`, the hot path of jet convolution.
    fn mul_add_assign(&mut self, a: &Self, b: &Self);

    fn recip(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;

    fn abs(&self) -> Self {
        if self.value() < 0.0 {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn powi(&self, n: i32) -> Self {
        if n == 0 {
            return Self::from_f64(1.0);
        }
        let base = if n < 0 { self.recip() } else { self.clone() };
        let mut e = n.unsigned_abs();
        let mut acc: Option<Self> = None;
        let mut sq = base;
        loop {
            if e & 1 == 1 {
                acc = Some(match acc {
                    None => sq.clone(),
                    Some(a) => a * sq.clone(),
                });
            }
            e >>= 1;
            if e == 0 {
                break;
            }
            sq = sq.clone() * sq;
        }
        acc.expect("nonzero exponent")
    }

    fn try_recip(&self) -> Result<Self> {
        if self.value().abs() < TINY || !self.value().is_finite() {
            return Err(Error::Eval(format!(
                "division by a value too close to zero ({:e})",
                self.value()
            )));
        }
        Ok(self.recip())
    }

    fn try_div(&self, other: &Self) -> Result<Self> {
        Ok(self.clone() * other.try_recip()?)
    }

    fn try_sqrt(&self) -> Result<Self> {
        let v = self.value();
        if v < 0.0 || v.is_nan() {
            return Err(Error::Eval(format!("square root of negative value {v:e}")));
        }
        if v < TINY && !self.is_constant() {
            return Err(Error::Eval("square root is not differentiable at zero".into()));
        }
        Ok(self.sqrt())
    }

    fn try_ln(&self) -> Result<Self> {
        let v = self.value();
        if !(v > TINY) {
            return Err(Error::Eval(format!("logarithm of non-positive value {v:e}")));
        }
        Ok(self.ln())
    }

    /// True when no derivative information is carried.
    fn is_constant(&self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn add_assign_ref(&mut self, other: &Self) {
        *self += *other;
    }
    fn mul_add_assign(&mut self, a: &Self, b: &Self) {
        *self += a * b;
    }
    fn recip(&self) -> Self {
        1.0 / self
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn is_constant(&self) -> bool {
        true
    }
}
