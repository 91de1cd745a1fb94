//! Dense LU with partial pivoting, generic over [`Scalar`] so that metric
//! inverses can be differentiated through.

use super::scalar::{Scalar, TINY};
use crate::{Error, Result};

/// Row-major LU factors of an `n x n` matrix with the row permutation.
#[derive(Debug, Clone)]
pub struct Lu<S> {
    n: usize,
    lu: Vec<S>,
    perm: Vec<usize>,
    sign: f64,
}

impl<S: Scalar> Lu<S> {
    pub fn new(a: &[S], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut lu = a.to_vec();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| {
                    lu[i * n + k]
                        .value()
                        .abs()
                        .total_cmp(&lu[j * n + k].value().abs())
                })
                .expect("non-empty pivot range");
            let pivot = lu[p * n + k].value();
            if pivot.abs() < TINY || !pivot.is_finite() {
                return Err(Error::SingularMetric {
                    det: 0.0,
                    threshold: TINY,
                });
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
                sign = -sign;
            }
            let inv = lu[k * n + k].recip();
            for i in (k + 1)..n {
                let factor = lu[i * n + k].clone() * inv.clone();
                for c in (k + 1)..n {
                    let t = factor.clone() * lu[k * n + c].clone();
                    lu[i * n + c] = lu[i * n + c].clone() - t;
                }
                lu[i * n + k] = factor;
            }
        }
        Ok(Lu { n, lu, perm, sign })
    }

    pub fn solve(&self, b: &[S]) -> Vec<S> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<S> = self.perm.iter().map(|&p| b[p].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let t = self.lu[i * n + j].clone() * x[j].clone();
                x[i] = x[i].clone() - t;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let t = self.lu[i * n + j].clone() * x[j].clone();
                x[i] = x[i].clone() - t;
            }
            x[i] = x[i].clone() / self.lu[i * n + i].clone();
        }
        x
    }

    pub fn det(&self) -> S {
        let n = self.n;
        let mut d = S::from_f64(self.sign);
        for i in 0..n {
            d = d * self.lu[i * n + i].clone();
        }
        d
    }

    pub fn inverse(&self) -> Vec<S> {
        let n = self.n;
        let mut inv = vec![S::from_f64(0.0); n * n];
        for c in 0..n {
            let mut e = vec![S::from_f64(0.0); n];
            e[c] = S::from_f64(1.0);
            let col = self.solve(&e);
            for (r, v) in col.into_iter().enumerate() {
                inv[r * n + c] = v;
            }
        }
        inv
    }
}

pub fn solve<S: Scalar>(a: &[S], n: usize, b: &[S]) -> Result<Vec<S>> {
    Ok(Lu::new(a, n)?.solve(b))
}

pub fn inverse<S: Scalar>(a: &[S], n: usize) -> Result<Vec<S>> {
    Ok(Lu::new(a, n)?.inverse())
}

/// Determinant; a matrix with an exactly vanishing pivot has determinant zero.
pub fn det<S: Scalar>(a: &[S], n: usize) -> S {
    match Lu::new(a, n) {
        Ok(lu) => lu.det(),
        Err(_) => S::from_f64(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_and_inverts_with_pivoting() {
        // zero leading entry forces a row swap
        let a = [0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let lu = Lu::new(&a, 3).unwrap();
        let x = lu.solve(&[3.0, 2.0, 4.0]);
        for (xi, e) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - e).abs() < 1e-14);
        }
        assert!((lu.det() - (-5.0)).abs() < 1e-14);
        let inv = lu.inverse();
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| a[i * 3 + k] * inv[k * 3 + j]).sum();
                assert!((s - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singular_matrix_is_an_error() {
        let a = [1.0, 2.0, 2.0, 4.0];
        assert!(matches!(Lu::new(&a, 2), Err(Error::SingularMetric { .. })));
        assert_eq!(det(&a, 2), 0.0);
    }
}
