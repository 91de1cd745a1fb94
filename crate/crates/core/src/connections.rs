//! Spray and connection coefficients, covariant derivatives of x-vector
//! fields, and a fixed-step geodesic integrator.
//!
//! Convention: Gⁱ = ¼ gⁱˡ (yᵏ ∂²F²/∂yˡ∂xᵏ − ∂F²/∂xˡ), so geodesics solve
//! ẍⁱ + 2Gⁱ(x, ẋ) = 0. Then Nⁱⱼ = ∂Gⁱ/∂yʲ, Gⁱⱼₖ = ∂Nⁱⱼ/∂yᵏ,
//! δⱼ = ∂/∂xʲ − Nᵐⱼ ∂/∂yᵐ and Rⁱⱼₖ = δⱼNⁱₖ − δₖNⁱⱼ.
//!
//! All derivatives of G come from evaluating the spray itself on jets
//! (order 2 in all 2n coordinates), so nothing is differenced numerically.

use serde::{Deserialize, Serialize};

use crate::expr::ModelDef;
use crate::metric::{metric_data, MetricData, Structure, TangentSample};
use crate::numkit::{lift, lift_generic, Jet, Lu, Mat, Scalar, Tensor3};
use crate::{Error, Result};

/// An x-dependent vector field that can be evaluated on any scalar type.
pub trait VectorField: Sync {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>>;
}

impl VectorField for ModelDef {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.phi_at(x)
    }
}

/// A field multiplied by ±1.
#[derive(Debug, Clone, Copy)]
pub struct Scaled<'a, V> {
    pub field: &'a V,
    pub factor: f64,
}

impl<V: VectorField> VectorField for Scaled<'_, V> {
    fn eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        Ok(self.field.eval(x)?.into_iter().map(|v| v * self.factor).collect())
    }
}

/// Spray coefficients over an arbitrary scalar type.
pub fn spray_generic<M: Structure, S: Scalar>(model: &M, x: &[S], y: &[S]) -> Result<Vec<S>> {
    let n = model.dim();
    let (xs, ys) = lift_generic(x, y, 2);
    let l2: Jet<S> = model.finsler_sq(&xs, &ys)?;
    let mut g = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            g.push(l2.deriv(&[n + i, n + j]) * 0.5);
        }
    }
    let rhs: Vec<S> = (0..n)
        .map(|l| {
            let mut acc = -l2.deriv(&[l]);
            for k in 0..n {
                acc.mul_add_assign(&y[k], &l2.deriv(&[k, n + l]));
            }
            acc
        })
        .collect();
    let z = Lu::new(&g, n)?.solve(&rhs);
    Ok(z.into_iter().map(|v| v * 0.25).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConnectionData {
    pub spray: Vec<f64>,
    /// Nⁱⱼ stored at (i, j).
    pub nonlinear: Mat,
    /// Gⁱⱼₖ stored at (i, j, k).
    pub berwald: Tensor3,
    /// Rⁱⱼₖ stored at (i, j, k).
    pub curvature: Tensor3,
    /// Γⁱⱼₖ stored at (i, j, k).
    pub cartan_gamma: Tensor3,
    /// max_i |g_il 2Gˡ − ½(yᵏ∂²F²/∂yⁱ∂xᵏ − ∂F²/∂xⁱ)|, relative.
    pub spray_residual: f64,
}

/// Spray jets: Gⁱ as order-2 jets in all 2n coordinates.
pub fn spray_jets<M: Structure>(model: &M, s: &TangentSample) -> Result<Vec<Jet<f64>>> {
    s.require_admissible()?;
    let (xs, ys) = lift(&s.x, &s.y, 2);
    spray_generic(model, &xs, &ys)
}

/// (N, Berwald, R) from spray jets; `n` is the dimension.
pub fn connection_from_spray(n: usize, g_jets: &[Jet<f64>]) -> (Vec<f64>, Mat, Tensor3, Tensor3) {
    let spray = g_jets.iter().map(|j| *j.val()).collect();
    let nonlinear = Mat::from_fn(n, |i, j| g_jets[i].deriv(&[n + j]));
    let berwald = Tensor3::from_fn(n, |i, j, k| g_jets[i].deriv(&[n + j, n + k]));
    let curvature = curvature_from(n, g_jets, &nonlinear, &berwald);
    (spray, nonlinear, berwald, curvature)
}

/// Rⁱⱼₖ from jets of a connection whose Nⁱⱼ are supplied separately; the
/// jets must carry ∂²/∂xʲ∂yᵏ of the spray.
fn curvature_from(n: usize, g_jets: &[Jet<f64>], nl: &Mat, berwald: &Tensor3) -> Tensor3 {
    // δⱼNⁱₖ = ∂²Gⁱ/∂xʲ∂yᵏ − Nᵐⱼ Gⁱₖₘ
    let delta = |i: usize, j: usize, k: usize| {
        let mut v = g_jets[i].deriv(&[j, n + k]);
        for m in 0..n {
            v -= nl.get(m, j) * berwald.get(i, k, m);
        }
        v
    };
    Tensor3::from_fn(n, |i, j, k| delta(i, j, k) - delta(i, k, j))
}

/// Rⁱⱼₖ for a nonlinear connection given as order-2 jets Nⁱⱼ over the
/// 2n coordinates (used when N does not come from a computed spray).
pub fn curvature_of_connection(n: usize, n_jets: &[Jet<f64>]) -> Tensor3 {
    let nij = |i: usize, j: usize| &n_jets[i * n + j];
    let delta = |i: usize, j: usize, k: usize| {
        let mut v = nij(i, k).deriv(&[j]);
        for m in 0..n {
            v -= nij(m, j).val() * nij(i, k).deriv(&[n + m]);
        }
        v
    };
    Tensor3::from_fn(n, |i, j, k| delta(i, j, k) - delta(i, k, j))
}

/// Γⁱⱼₖ = ½gⁱˢ(δⱼg_sk + δₖg_js − δ_s g_jk) with δⱼg_ab = ∂ⱼg_ab − Nᵐⱼ 2C_abm.
pub fn cartan_from<M: Structure>(model: &M, s: &TangentSample, md: &MetricData, nl: &Mat) -> Result<Tensor3> {
    let n = model.dim();
    let (xs, ys) = lift(&s.x, &s.y, 3);
    let l2: Jet<f64> = model.finsler_sq(&xs, &ys)?;
    let dg = Tensor3::from_fn(n, |j, a, b| {
        let mut v = 0.5 * l2.deriv(&[j, n + a, n + b]);
        for m in 0..n {
            v -= nl.get(m, j) * 2.0 * md.cartan.get(a, b, m);
        }
        v
    });
    // dg(j, a, b) = δⱼ g_ab
    Ok(Tensor3::from_fn(n, |i, j, k| {
        let mut acc = 0.0;
        for sdx in 0..n {
            let lowered = dg.get(j, sdx, k) + dg.get(k, j, sdx) - dg.get(sdx, j, k);
            acc += md.ginv.get(i, sdx) * lowered;
        }
        0.5 * acc
    }))
}

pub fn connection_data<M: Structure>(model: &M, s: &TangentSample, md: &MetricData) -> Result<ConnectionData> {
    let n = model.dim();
    let jets = spray_jets(model, s)?;
    let (spray, nonlinear, berwald, curvature) = connection_from_spray(n, &jets);
    let cartan_gamma = cartan_from(model, s, md, &nonlinear)?;
    let spray_residual = spray_substitution_residual(model, s, md, &spray)?;
    Ok(ConnectionData {
        spray,
        nonlinear,
        berwald,
        curvature,
        cartan_gamma,
        spray_residual,
    })
}

/// Plugs G back into its defining linear system.
fn spray_substitution_residual<M: Structure>(model: &M, s: &TangentSample, md: &MetricData, spray: &[f64]) -> Result<f64> {
    let n = model.dim();
    let (xs, ys) = lift(&s.x, &s.y, 2);
    let l2: Jet<f64> = model.finsler_sq(&xs, &ys)?;
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for i in 0..n {
        let mut rhs = -l2.deriv(&[i]);
        for k in 0..n {
            rhs += s.y[k] * l2.deriv(&[k, n + i]);
        }
        rhs *= 0.5;
        let lhs: f64 = (0..n).map(|l| md.g.get(i, l) * 2.0 * spray[l]).sum();
        worst = worst.max((lhs - rhs).abs());
        scale = scale.max(rhs.abs());
    }
    Ok(worst / scale)
}

pub fn spray<M: Structure>(model: &M, s: &TangentSample) -> Result<Vec<f64>> {
    s.require_admissible()?;
    spray_generic(model, &s.x, &s.y)
}

pub fn nonlinear_connection<M: Structure>(model: &M, s: &TangentSample) -> Result<Mat> {
    let jets = spray_jets(model, s)?;
    Ok(connection_from_spray(model.dim(), &jets).1)
}

pub fn berwald_coeffs<M: Structure>(model: &M, s: &TangentSample) -> Result<Tensor3> {
    let jets = spray_jets(model, s)?;
    Ok(connection_from_spray(model.dim(), &jets).2)
}

pub fn barthel_curvature<M: Structure>(model: &M, s: &TangentSample) -> Result<Tensor3> {
    let jets = spray_jets(model, s)?;
    Ok(connection_from_spray(model.dim(), &jets).3)
}

pub fn cartan_hcoeffs<M: Structure>(model: &M, s: &TangentSample) -> Result<Tensor3> {
    let md = metric_data(model, s)?;
    let nl = nonlinear_connection(model, s)?;
    cartan_from(model, s, &md, &nl)
}

/// δⱼf = ∂f/∂xʲ − Nᵐⱼ ∂f/∂yᵐ for a scalar given as a jet over the 2n coordinates.
pub fn horizontal_derivative(f: &Jet<f64>, nl: &Mat) -> Vec<f64> {
    let n = nl.n;
    (0..n)
        .map(|j| {
            let mut v = f.deriv(&[j]);
            for m in 0..n {
                v -= nl.get(m, j) * f.deriv(&[n + m]);
            }
            v
        })
        .collect()
}

/// Covariant derivatives of an x-field at one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldDerivatives {
    /// φⁱ_{|j} stored at (i, j).
    pub hcov: Mat,
    /// φᵏC_kij.
    pub vcov: Mat,
}

pub fn field_derivatives<M: Structure, V: VectorField>(
    model: &M,
    field: &V,
    s: &TangentSample,
    md: &MetricData,
    gamma: &Tensor3,
) -> Result<FieldDerivatives> {
    let n = model.dim();
    let layout = crate::numkit::Layout::get(n, 1);
    let xs: Vec<Jet<f64>> = (0..n).map(|k| Jet::variable(&layout, k, s.x[k])).collect();
    let phi = field.eval(&xs)?;
    let hcov = Mat::from_fn(n, |i, j| {
        let mut v = phi[i].deriv(&[j]);
        for k in 0..n {
            v += phi[k].val() * gamma.get(i, k, j);
        }
        v
    });
    let vcov = Mat::from_fn(n, |i, j| (0..n).map(|k| phi[k].val() * md.cartan.get(k, i, j)).sum());
    Ok(FieldDerivatives { hcov, vcov })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovariantReport {
    /// φⁱ_{|j} at the sample with the largest residual.
    pub hcov_phi: Mat,
    /// φᵏC_kij at the same sample.
    pub vcov_phi_contraction: Mat,
    /// Whichever of ±1 is closer to `trace_mean`.
    pub sigma: f64,
    /// Mean of tr(φⁱ_{|j})/n over the batch.
    pub trace_mean: f64,
    /// max over the batch of max|φⁱ_{|j} − σδⁱⱼ|.
    pub residual: f64,
    /// max over the batch of max|φᵏC_kij|.
    pub vcov_max: f64,
    pub samples: usize,
    pub worst_sample: usize,
}

pub fn concurrency_probe<M: Structure, V: VectorField>(
    model: &M,
    field: &V,
    batch: &[TangentSample],
) -> Result<CovariantReport> {
    if batch.is_empty() {
        return Err(Error::Precondition("concurrency probe needs at least one sample".into()));
    }
    let n = model.dim();
    let per_sample: Vec<FieldDerivatives> = batch
        .iter()
        .map(|s| {
            let md = metric_data(model, s)?;
            let nl = nonlinear_connection(model, s)?;
            let gamma = cartan_from(model, s, &md, &nl)?;
            field_derivatives(model, field, s, &md, &gamma)
        })
        .collect::<Result<_>>()?;
    let trace_mean = per_sample
        .iter()
        .map(|d| (0..n).map(|i| d.hcov.get(i, i)).sum::<f64>() / n as f64)
        .sum::<f64>()
        / per_sample.len() as f64;
    let sigma = if trace_mean >= 0.0 { 1.0 } else { -1.0 };
    let mut residual = 0.0f64;
    let mut vcov_max = 0.0f64;
    let mut worst_sample = 0;
    for (idx, d) in per_sample.iter().enumerate() {
        let r = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                (d.hcov.get(i, j) - if i == j { sigma } else { 0.0 }).abs()
            })
            .fold(0.0, f64::max);
        if r > residual || idx == 0 {
            residual = residual.max(r);
            worst_sample = idx;
        }
        vcov_max = vcov_max.max(d.vcov.max_abs());
    }
    let worst = &per_sample[worst_sample];
    Ok(CovariantReport {
        hcov_phi: worst.hcov.clone(),
        vcov_phi_contraction: worst.vcov.clone(),
        sigma,
        trace_mean,
        residual,
        vcov_max,
        samples: batch.len(),
        worst_sample,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub f: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// Time at which the state left the domain, if it did.
    pub exit_time: Option<f64>,
}

impl Trajectory {
    /// Largest |F(t) − F(0)| / F(0).
    pub fn relative_drift(&self) -> f64 {
        let f0 = self.points[0].f;
        self.points.iter().map(|p| (p.f - f0).abs() / f0).fold(0.0, f64::max)
    }

    pub fn escape_error(&self) -> Option<Error> {
        self.exit_time.map(|t| Error::DomainEscape {
            t: Some(t),
            detail: "geodesic left the domain".into(),
        })
    }
}

/// Classical RK4 for ẋ = y, ẏ = −2G(x, y). Stops at the first step whose
/// stages leave the domain and records the time reached.
pub fn integrate_geodesic<M: Structure>(model: &M, s0: &TangentSample, t_end: f64, step: f64) -> Result<Trajectory> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Precondition(format!("step must be positive, got {step}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::Precondition(format!("t_end must be non-negative, got {t_end}")));
    }
    s0.require_admissible()?;
    let n = model.dim();
    let rhs = |state: &[f64]| -> Result<Vec<f64>> {
        let (x, y) = state.split_at(n);
        let sample = model.sample(x, y);
        sample.require_admissible()?;
        let g = spray_generic(model, x, y)?;
        Ok(y.iter().copied().chain(g.iter().map(|v| -2.0 * v)).collect())
    };
    let point = |t: f64, state: &[f64]| -> Result<TrajectoryPoint> {
        let (x, y) = state.split_at(n);
        Ok(TrajectoryPoint {
            t,
            x: x.to_vec(),
            y: y.to_vec(),
            f: model.finsler(x, y)?,
        })
    };
    let mut state: Vec<f64> = s0.x.iter().chain(&s0.y).copied().collect();
    let mut points = vec![point(0.0, &state)?];
    let steps = (t_end / step).round().max(0.0) as usize;
    let steps = if steps == 0 && t_end > 0.0 { 1 } else { steps };
    let h = if steps > 0 { t_end / steps as f64 } else { 0.0 };
    let axpy = |a: &[f64], c: f64, b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(u, v)| u + c * v).collect() };
    for k in 0..steps {
        let t = k as f64 * h;
        let stage = (|| -> Result<Vec<f64>> {
            let k1 = rhs(&state)?;
            let k2 = rhs(&axpy(&state, 0.5 * h, &k1))?;
            let k3 = rhs(&axpy(&state, 0.5 * h, &k2))?;
            let k4 = rhs(&axpy(&state, h, &k3))?;
            let next: Vec<f64> = (0..2 * n)
                .map(|i| state[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect();
            model.sample(&next[..n], &next[n..]).require_admissible()?;
            Ok(next)
        })();
        match stage {
            Ok(next) => {
                state = next;
                points.push(point((k + 1) as f64 * h, &state)?);
            }
            Err(Error::DomainEscape { .. }) | Err(Error::Eval(_)) => {
                return Ok(Trajectory {
                    points,
                    exit_time: Some(t),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Trajectory {
        points,
        exit_time: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclid() -> ModelDef {
        ModelDef::parse("name=e\ndim=2\nF = sqrt(y1^2 + y2^2)\nphi1 = -x1\nphi2 = -x2\n").unwrap()
    }

    #[test]
    fn flat_space_connection_vanishes() {
        let m = euclid();
        let s = m.sample(&[0.4, -0.3], &[0.7, 1.1]);
        let md = metric_data(&m, &s).unwrap();
        let cd = connection_data(&m, &s, &md).unwrap();
        assert!(cd.spray.iter().all(|v| v.abs() < 1e-14));
        assert!(cd.nonlinear.max_abs() < 1e-14);
        assert!(cd.berwald.max_abs() < 1e-14);
        assert!(cd.curvature.max_abs() < 1e-14);
        assert!(cd.cartan_gamma.max_abs() < 1e-14);
    }

    #[test]
    fn flat_radial_field_has_sigma_minus_one() {
        let m = euclid();
        let batch: Vec<_> = [[0.1, 0.2], [0.5, -0.7], [1.5, 0.3]]
            .iter()
            .map(|x| m.sample(x, &[0.3, 0.9]))
            .collect();
        let r = concurrency_probe(&m, &m, &batch).unwrap();
        assert!((r.sigma + 1.0).abs() < 1e-14);
        assert!(r.residual < 1e-14);
        let constant = ModelDef::parse("name=c\ndim=2\nF = sqrt(y1^2 + y2^2) + 0*x2\nphi1 = 1 + 0*x1\nphi2 = 0\n").unwrap();
        let r = concurrency_probe(&constant, &constant, &batch).unwrap();
        assert!(r.trace_mean.abs() < 1e-14);
        assert!((r.residual - 1.0).abs() < 1e-14);
    }

    #[test]
    fn straight_line_geodesic() {
        let m = euclid();
        let s = m.sample(&[0.0, 0.0], &[1.0, 0.0]);
        let tr = integrate_geodesic(&m, &s, 1.0, 1e-2).unwrap();
        let last = tr.points.last().unwrap();
        assert!((last.t - 1.0).abs() < 1e-12);
        assert!((last.x[0] - 1.0).abs() < 1e-12 && last.x[1].abs() < 1e-12);
        assert!(tr.relative_drift() < 1e-14);
        assert!(tr.exit_time.is_none());
        assert!(matches!(integrate_geodesic(&m, &s, 1.0, 0.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn geodesic_stops_at_domain_boundary() {
        let m = ModelDef::parse("name=h\ndim=2\nF = sqrt(y1^2 + y2^2)\nphi1 = x1\nphi2 = x2\ndomain = 1 - x1 > 0\n").unwrap();
        let s = m.sample(&[0.0, 0.0], &[1.0, 0.0]);
        let tr = integrate_geodesic(&m, &s, 2.0, 0.1).unwrap();
        let t = tr.exit_time.expect("must leave the half plane");
        assert!((0.85..1.05).contains(&t), "{t}");
        assert!(matches!(tr.escape_error(), Some(Error::DomainEscape { t: Some(_), .. })));
    }
}
