//! Zeroth-order Finsler objects at a tangent sample: F, E, g, its inverse,
//! ℓ, ħ and the Cartan tensor, plus homogeneity diagnostics.
//!
//! Second and third y-derivatives are taken from jets of F² rather than of F,
//! so no square root sits between the model and the metric tensor.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::expr::{Ast, Func, ModelDef};
use crate::numkit::lift_y;
use crate::numkit::{Jet, Lu, Mat, Scalar, Tensor3};
use crate::{Error, Result};

/// Anything that provides a Finsler function on an open conic domain.
///
/// `finsler` is generic over the scalar type so the same definition can be
/// evaluated on reals and on (nested) jets.
pub trait Structure: Sync {
    fn dim(&self) -> usize;
    fn label(&self) -> String;
    fn finsler<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S>;

    /// F², overridable when it is available without a square root.
    fn finsler_sq<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let f = self.finsler(x, y)?;
        Ok(f.clone() * f)
    }

    /// One flag per domain constraint; all must hold.
    fn domain_flags(&self, x: &[f64], y: &[f64]) -> Vec<bool>;

    fn sample(&self, x: &[f64], y: &[f64]) -> TangentSample {
        let mut flags = self.domain_flags(x, y);
        let f_ok = self.finsler::<f64>(x, y).is_ok_and(|f| f.is_finite() && f > 0.0);
        flags.push(f_ok);
        TangentSample {
            x: x.to_vec(),
            y: y.to_vec(),
            in_domain: flags,
        }
    }
}

impl Structure for ModelDef {
    fn dim(&self) -> usize {
        self.dim
    }

    fn label(&self) -> String {
        self.name.clone()
    }

    fn finsler<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        self.eval_f(x, y)
    }

    fn finsler_sq<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        if let Ast::Call(Func::Sqrt, radicand) = &self.f {
            let q = radicand.eval(&self.context(x, y))?;
            if !(q.value() > 0.0) {
                return Err(Error::domain(format!("F² = {:e} is not positive", q.value())));
            }
            return Ok(q);
        }
        let f = self.eval_f(x, y)?;
        Ok(f.clone() * f)
    }

    fn domain_flags(&self, x: &[f64], y: &[f64]) -> Vec<bool> {
        match self.domain_values(x, y) {
            Ok(v) => v.iter().map(|d| *d > 0.0).collect(),
            Err(_) => vec![false; self.domain.len().max(1)],
        }
    }
}

/// A point of the slit tangent bundle with its domain flags. The last flag
/// records that F is finite and positive there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub in_domain: Vec<bool>,
}

impl TangentSample {
    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn is_admissible(&self) -> bool {
        self.y.iter().any(|v| *v != 0.0) && self.in_domain.iter().all(|b| *b)
    }

    pub fn require_admissible(&self) -> Result<()> {
        if self.y.iter().all(|v| *v == 0.0) {
            return Err(Error::domain("direction y is zero"));
        }
        if let Some(k) = self.in_domain.iter().position(|b| !b) {
            return Err(Error::domain(format!(
                "constraint {k} fails at x = {:?}, y = {:?}",
                self.x, self.y
            )));
        }
        Ok(())
    }

    pub fn scaled(&self, lambda: f64) -> (Vec<f64>, Vec<f64>) {
        (self.x.clone(), self.y.iter().map(|v| lambda * v).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricData {
    pub f: f64,
    pub e: f64,
    pub g: Mat,
    pub ginv: Mat,
    pub det: f64,
    /// ℓ_i = ∂F/∂yⁱ from jets of F.
    pub ell: Vec<f64>,
    /// g_ij yʲ / F, an independent route to ℓ.
    pub ell_from_g: Vec<f64>,
    pub hbar: Mat,
    pub cartan: Tensor3,
    pub signature: Signature,
    /// Ratio of extreme eigenvalue magnitudes of g.
    pub condition: f64,
}

/// Threshold below which |det g| counts as singular.
pub fn singular_threshold(g: &Mat) -> f64 {
    let n = g.n;
    let logs: f64 = (0..n).map(|i| g.get(i, i).abs().max(1e-300).ln()).sum();
    let mut scale = (logs / n as f64).exp();
    if !(scale > 1e-200) {
        scale = g.max_abs();
    }
    1e-12 * scale.powi(n as i32)
}

fn signature_and_condition(g: &Mat) -> (Signature, f64) {
    let m = DMatrix::from_row_slice(g.n, g.n, g.as_slice());
    let eig = m.symmetric_eigenvalues();
    let top = eig.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = 1e-12 * top.max(1e-300);
    let mut sig = Signature {
        positive: 0,
        negative: 0,
        zero: 0,
    };
    let mut bottom = f64::INFINITY;
    for v in eig.iter() {
        bottom = bottom.min(v.abs());
        if *v > tol {
            sig.positive += 1;
        } else if *v < -tol {
            sig.negative += 1;
        } else {
            sig.zero += 1;
        }
    }
    (sig, if bottom > 0.0 { top / bottom } else { f64::INFINITY })
}

pub fn metric_data<M: Structure>(model: &M, s: &TangentSample) -> Result<MetricData> {
    s.require_admissible()?;
    let n = model.dim();
    let f: f64 = model.finsler(&s.x, &s.y)?;
    if !(f > 0.0) {
        return Err(Error::domain(format!("F = {f:e} is not positive")));
    }
    let (xs, ys) = lift_y(&s.x, &s.y, 3);
    let l2: Jet<f64> = model.finsler_sq(&xs, &ys)?;
    let (xs1, ys1) = lift_y(&s.x, &s.y, 1);
    let fj: Jet<f64> = model.finsler(&xs1, &ys1)?;

    let g = Mat::from_fn(n, |i, j| 0.5 * l2.deriv(&[i, j]));
    let cartan = Tensor3::from_fn(n, |i, j, k| 0.25 * l2.deriv(&[i, j, k]));
    let ell: Vec<f64> = (0..n).map(|i| fj.deriv(&[i])).collect();
    let ell_from_g: Vec<f64> = g.apply(&s.y).iter().map(|v| v / f).collect();

    let lu = Lu::new(g.as_slice(), n)?;
    let det = lu.det();
    let threshold = singular_threshold(&g);
    if det.abs() < threshold {
        return Err(Error::SingularMetric { det, threshold });
    }
    let ginv = Mat {
        n,
        data: lu.inverse(),
    };
    let hbar = Mat::from_fn(n, |i, j| g.get(i, j) - ell[i] * ell[j]);
    let (signature, condition) = signature_and_condition(&g);
    if condition > 1e8 {
        log::debug!("g is ill-conditioned at x = {:?}, y = {:?}: {condition:e}", s.x, s.y);
    }
    Ok(MetricData {
        f,
        e: 0.5 * f * f,
        g,
        ginv,
        det,
        ell,
        ell_from_g,
        hbar,
        cartan,
        signature,
        condition,
    })
}

/// F, F², its y-gradient and g_ij = ½∂²F²/∂yⁱ∂yʲ over an arbitrary scalar,
/// so that the results can themselves carry derivative data.
pub struct MetricFields<S> {
    pub f: S,
    pub l2: S,
    pub grad_l2: Vec<S>,
    /// Row-major n×n.
    pub g: Vec<S>,
}

impl<S: Scalar> MetricFields<S> {
    /// ℓ_i = ½ ∂F²/∂yⁱ / F.
    pub fn ell(&self) -> Result<Vec<S>> {
        let inv = self.f.try_recip()?;
        Ok(self.grad_l2.iter().map(|d| d.clone() * inv.clone() * 0.5).collect())
    }

    /// g_ij uⁱ vʲ.
    pub fn bilinear(&self, u: &[S], v: &[S]) -> S {
        let n = u.len();
        let mut acc = S::from_f64(0.0);
        for i in 0..n {
            for j in 0..n {
                acc.add_assign_ref(&(self.g[i * n + j].clone() * u[i].clone() * v[j].clone()));
            }
        }
        acc
    }

    /// g_ij vʲ.
    pub fn lower(&self, v: &[S]) -> Vec<S> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let mut acc = S::from_f64(0.0);
                for j in 0..n {
                    acc.mul_add_assign(&self.g[i * n + j], &v[j]);
                }
                acc
            })
            .collect()
    }
}

pub fn metric_fields<M: Structure, S: Scalar>(model: &M, x: &[S], y: &[S]) -> Result<MetricFields<S>> {
    let n = model.dim();
    let (xs, ys) = lift_y(x, y, 2);
    let l2: Jet<S> = model.finsler_sq(&xs, &ys)?;
    let lv = l2.val().clone();
    if !(lv.value() > 0.0) {
        return Err(Error::domain(format!("F² = {:e} is not positive", lv.value())));
    }
    let grad_l2 = (0..n).map(|i| l2.deriv(&[i])).collect();
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            g.push(l2.deriv(&[i, j]) * 0.5);
        }
    }
    Ok(MetricFields {
        f: lv.try_sqrt()?,
        l2: lv,
        grad_l2,
        g,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityEntry {
    pub lambda: f64,
    /// |F(x,λy) − λF(x,y)| / max(1, λF).
    pub f_residual: f64,
    pub g_residual: f64,
    pub c_residual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub entries: Vec<HomogeneityEntry>,
}

impl HomogeneityReport {
    pub fn max_residual(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.f_residual.max(e.g_residual).max(e.c_residual))
            .fold(0.0, f64::max)
    }
}

pub const HOMOGENEITY_SCALES: [f64; 3] = [0.5, 2.0, 3.0];

pub fn homogeneity_report<M: Structure>(model: &M, s: &TangentSample) -> Result<HomogeneityReport> {
    let base = metric_data(model, s)?;
    let mut entries = Vec::new();
    for &lambda in &HOMOGENEITY_SCALES {
        let (x, y) = s.scaled(lambda);
        let scaled = model.sample(&x, &y);
        scaled.require_admissible()?;
        let m = metric_data(model, &scaled)?;
        let f_residual = (m.f - lambda * base.f).abs() / (lambda * base.f).max(1.0);
        let g_scale = base.g.max_abs().max(1.0);
        let g_residual = (0..base.g.data.len())
            .map(|k| (m.g.data[k] - base.g.data[k]).abs())
            .fold(0.0, f64::max)
            / g_scale;
        let c_scale = base.cartan.max_abs().max(1.0);
        let c_residual = (0..base.cartan.data.len())
            .map(|k| (lambda * m.cartan.data[k] - base.cartan.data[k]).abs())
            .fold(0.0, f64::max)
            / c_scale;
        entries.push(HomogeneityEntry {
            lambda,
            f_residual,
            g_residual,
            c_residual,
        });
    }
    Ok(HomogeneityReport { entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid() -> ModelDef {
        ModelDef::parse("name=e\ndim=2\nF = sqrt(y1^2 + y2^2)\nphi1 = -x1\nphi2 = -x2\n").unwrap()
    }

    #[test]
    fn euclid_metric_is_identity() {
        let m = euclid();
        let s = m.sample(&[0.3, -0.2], &[3.0, 4.0]);
        let d = metric_data(&m, &s).unwrap();
        assert!((d.f - 5.0).abs() < 1e-14);
        assert_eq!(d.g, Mat::identity(2));
        assert!(d.cartan.max_abs() < 1e-14);
        assert!((d.ell[0] - 0.6).abs() < 1e-15 && (d.ell[1] - 0.8).abs() < 1e-15);
        assert_eq!(d.signature.positive, 2);
        let hy = d.hbar.apply(&s.y);
        assert!(hy.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn zero_direction_is_rejected() {
        let m = euclid();
        let s = m.sample(&[0.0, 0.0], &[0.0, 0.0]);
        assert!(matches!(metric_data(&m, &s), Err(Error::DomainEscape { .. })));
    }

    #[test]
    fn non_homogeneous_model_is_flagged() {
        let m = ModelDef::parse("name=b\ndim=2\nF = y1^2 + y2^2 + 1\nphi1 = x1\nphi2 = x2\n").unwrap();
        let s = m.sample(&[1.0, 1.0], &[1.0, 1.0]);
        let r = homogeneity_report(&m, &s).unwrap();
        assert!(r.max_residual() > 0.1);
        let e = euclid();
        let r = homogeneity_report(&e, &e.sample(&[1.0, 1.0], &[0.3, 0.7])).unwrap();
        assert!(r.max_residual() < 1e-15);
    }

    #[test]
    fn generic_fields_match_metric_data() {
        let m = ModelDef::parse(
            "name=r\ndim=2\nF = sqrt(y1^2 + y2^2) + 0.3*x1*y1\nphi1 = x1\nphi2 = x2\n",
        )
        .unwrap();
        let s = m.sample(&[0.5, 0.1], &[1.0, 0.4]);
        let d = metric_data(&m, &s).unwrap();
        let fields = metric_fields::<_, f64>(&m, &s.x, &s.y).unwrap();
        for k in 0..4 {
            assert!((fields.g[k] - d.g.data[k]).abs() < 1e-13);
        }
        let ell = fields.ell().unwrap();
        for i in 0..2 {
            assert!((ell[i] - d.ell[i]).abs() < 1e-13);
            assert!((d.ell_from_g[i] - d.ell[i]).abs() < 1e-13);
        }
    }
}
