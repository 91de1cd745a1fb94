//! Numerical kit: a scalar abstraction, truncated multivariate Taylor jets,
//! small dense linear algebra and a central finite-difference oracle.
//!
//! Derivatives are taken by nesting jets rather than by one deep table. A
//! `Jet<f64>` of total order `k` over the `2n` coordinates `(x, y)` carries
//! every mixed partial up to order `k`; evaluating a model on
//! `Jet<Jet<f64>>` differentiates derivatives again. The geometry layers use
//! order 3 in `y` for the Cartan tensor and two nested order-2 layers for
//! sprays, which provides the `x`-derivatives of the nonlinear connection
//! needed by the curvature.

mod fd;
mod jet;
mod linalg;
mod scalar;
mod tensor;

pub use fd::{central_difference, fd_derivative, FdOracle};
pub use jet::{lift, Jet, Layout};
pub(crate) use jet::{lift_generic, lift_y};
pub use linalg::{det, inverse, solve, Lu};
pub use scalar::Scalar;
pub use tensor::{Mat, Tensor3};

/// Settings shared by the differentiation layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffConfig {
    /// Total Taylor order of the jets used for metric-level objects.
    pub order: usize,
    /// Base step of the central-difference oracle (first-order stencils).
    pub fd_step: f64,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            order: 3,
            fd_step: 1e-5,
        }
    }
}

impl DiffConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.order < 3 {
            return Err(crate::Error::Precondition(format!(
                "jet order {} is below 3, which torsion and Berwald computations need",
                self.order
            )));
        }
        if !(self.fd_step > 0.0) {
            return Err(crate::Error::Precondition("fd_step must be positive".into()));
        }
        Ok(())
    }
}

/// `max |p - d| / max(1, max |d|)`, the scale-free residual used by every report.
pub fn rel_residual(predicted: &[f64], direct: &[f64]) -> f64 {
    assert_eq!(predicted.len(), direct.len());
    if predicted.iter().chain(direct).any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let scale = direct.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let diff = predicted
        .iter()
        .zip(direct)
        .fold(0.0f64, |m, (p, d)| m.max((p - d).abs()));
    diff / scale
}

/// `max |v|` over a slice.
pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}
