//! Central finite differences, used only as an independent oracle for the
//! jet arithmetic.
//!
//! Mixed partials use the tensor product of one-dimensional central stencils
//! followed by one Richardson step, so the error is `O(h^4)` in exact
//! arithmetic. The step grows with the derivative order (`fd_step * 10^(k-1)`
//! for total order `k`) to keep cancellation error below the truncation error.

use super::DiffConfig;
use crate::{Error, Result};

// (offset, weight) pairs of the central stencil for each one-dimensional order
const STENCILS: [&[(i32, f64)]; 4] = [
    &[(0, 1.0)],
    &[(-1, -0.5), (1, 0.5)],
    &[(-1, 1.0), (0, -2.0), (1, 1.0)],
    &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
];

/// Plain tensor-product central difference with step `h`.
pub fn central_difference<F>(f: &F, point: &[f64], alpha: &[u8], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    assert_eq!(point.len(), alpha.len());
    let total: usize = alpha.iter().map(|&a| a as usize).sum();
    if total > 3 || alpha.iter().any(|&a| a > 3) {
        return Err(Error::Precondition(format!(
            "finite differences support total order <= 3, got {total}"
        )));
    }
    let active: Vec<(usize, &[(i32, f64)])> = alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0)
        .map(|(v, &a)| (v, STENCILS[a as usize]))
        .collect();
    let mut acc = 0.0;
    let mut p = point.to_vec();
    let mut counters = vec![0usize; active.len()];
    loop {
        let mut w = 1.0;
        p.copy_from_slice(point);
        for (slot, (v, stencil)) in counters.iter().zip(&active) {
            let (off, wt) = stencil[*slot];
            p[*v] += off as f64 * h;
            w *= wt;
        }
        let value = f(&p).map_err(|e| Error::DomainEscape {
            t: None,
            detail: format!("finite-difference stencil point {p:?} rejected: {e}"),
        })?;
        acc += w * value;
        // odometer over the stencil product
        let mut i = 0;
        loop {
            if i == counters.len() {
                return Ok(acc / h.powi(total as i32));
            }
            counters[i] += 1;
            if counters[i] < active[i].1.len() {
                break;
            }
            counters[i] = 0;
            i += 1;
        }
    }
}

/// Richardson-extrapolated central difference at the order-dependent step.
pub fn fd_derivative<F>(f: &F, point: &[f64], alpha: &[u8], cfg: &DiffConfig) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    FdOracle::from(*cfg).derivative(f, point, alpha)
}

/// Finite-difference oracle with a fixed base step.
#[derive(Debug, Clone, Copy)]
pub struct FdOracle {
    pub step: f64,
}

impl From<DiffConfig> for FdOracle {
    fn from(cfg: DiffConfig) -> Self {
        FdOracle { step: cfg.fd_step }
    }
}

impl Default for FdOracle {
    fn default() -> Self {
        DiffConfig::default().into()
    }
}

impl FdOracle {
    pub fn step_for(&self, total_order: usize) -> f64 {
        self.step * 10f64.powi(total_order.saturating_sub(1) as i32)
    }

    pub fn derivative<F>(&self, f: &F, point: &[f64], alpha: &[u8]) -> Result<f64>
    where
        F: Fn(&[f64]) -> Result<f64>,
    {
        let total: usize = alpha.iter().map(|&a| a as usize).sum();
        if total == 0 {
            return f(point);
        }
        let h = self.step_for(total);
        let coarse = central_difference(f, point, alpha, h)?;
        let fine = central_difference(f, point, alpha, h / 2.0)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok<F: Fn(&[f64]) -> f64>(f: F) -> impl Fn(&[f64]) -> Result<f64> {
        move |p| Ok(f(p))
    }

    #[test]
    fn derivative_of_square() {
        let f = ok(|p| p[0] * p[0]);
        let d = FdOracle::default().derivative(&f, &[3.0], &[1]).unwrap();
        assert!((d - 6.0).abs() < 1e-9);
    }

    #[test]
    fn constant_has_zero_derivatives() {
        let f = ok(|_| 4.2);
        let o = FdOracle::default();
        for alpha in [[1u8, 0], [0, 2], [1, 2], [3, 0], [1, 1]] {
            assert_eq!(o.derivative(&f, &[0.3, -1.0], &alpha).unwrap(), 0.0);
        }
    }

    #[test]
    fn mixed_third_order_of_polynomial() {
        // d^3/dx^2 dy of x^3 y^2 = 6 x * 2 y
        let f = ok(|p| p[0].powi(3) * p[1].powi(2));
        let d = FdOracle::default().derivative(&f, &[1.3, 0.7], &[2, 1]).unwrap();
        let exact = 12.0 * 1.3 * 0.7;
        assert!((d - exact).abs() / exact < 1e-5, "{d}");
    }

    #[test]
    fn rejected_stencil_point_is_domain_escape() {
        let f = |p: &[f64]| {
            if p[0] > 0.0 {
                Ok(p[0].ln())
            } else {
                Err(Error::Eval("log".into()))
            }
        };
        let r = FdOracle::default().derivative(&f, &[1e-7], &[1]);
        assert!(matches!(r, Err(Error::DomainEscape { .. })));
    }
}
