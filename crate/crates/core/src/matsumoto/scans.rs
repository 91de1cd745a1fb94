//! Batch scans: non-degeneracy of ĝ, projective separation of the two
//! sprays, the concurrency obstruction and the rational decompositions.

use serde::{Deserialize, Serialize};

use super::{change_jets, margin_of, predicted_metric_generic, ChangeJets, ChangeScalars, MatsumotoChange, Orientation, HAT_EPS};
use crate::connections::{spray_generic, VectorField};
use crate::metric::{metric_data, metric_fields, singular_threshold, Structure, TangentSample};
use crate::numkit::{det, fd_derivative, rel_residual, DiffConfig, Mat};
use crate::{Error, Result};

/// (geometric mean of |a_ii|)^n, the determinant scale of a matrix.
fn det_scale(a: &Mat) -> f64 {
    singular_threshold(a) * 1e12
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DegeneracySample {
    pub index: usize,
    pub f: f64,
    pub margin: f64,
    /// det of the Hessian of ½F̂².
    pub det_hat: f64,
    /// det of the predicted ĝ.
    pub det_predicted: f64,
    pub scale: f64,
    /// |margin| > 0.1F yet |det ĝ| < 1e-10·scale.
    pub violation: bool,
    /// |margin| < 1e-6F yet |det ĝ| > 1e-3·scale.
    pub anomaly: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NondegeneracyScan {
    pub samples: Vec<DegeneracySample>,
    pub violations: Vec<usize>,
    pub anomalies: Vec<usize>,
    /// Samples outside F > Φ, not scanned.
    pub skipped: usize,
}

pub fn nondegeneracy_scan<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    batch: &[TangentSample],
    orientation: Orientation,
) -> Result<NondegeneracyScan> {
    let hat = MatsumotoChange::new(base, field, orientation);
    let n = base.dim();
    let mut samples = Vec::new();
    let mut skipped = 0;
    for (index, s) in batch.iter().enumerate() {
        let md = metric_data(base, s)?;
        let phi = hat.effective_field(&s.x)?;
        let phil = md.g.apply(&phi);
        let phi_cap: f64 = phil.iter().zip(&s.y).map(|(a, b)| a * b).sum();
        let p2 = md.g.bilinear(&phi, &phi);
        if !(md.f - phi_cap > HAT_EPS * md.f) {
            skipped += 1;
            continue;
        }
        let margin = margin_of(&md.f, &phi_cap, &p2);
        let gp = predicted_metric_generic(&md.f, &phi_cap, &md.g.data, &md.ell, &phil)?;
        let direct = metric_fields::<_, f64>(&hat, &s.x, &s.y)?;
        let gd = Mat { n, data: direct.g };
        let det_hat = det(&gd.data, n);
        let scale = det_scale(&gd);
        let violation = margin.abs() > 0.1 * md.f && det_hat.abs() < 1e-10 * scale;
        let anomaly = margin.abs() < 1e-6 * md.f && det_hat.abs() > 1e-3 * scale;
        samples.push(DegeneracySample {
            index,
            f: md.f,
            margin,
            det_hat,
            det_predicted: det(&gp, n),
            scale,
            violation,
            anomaly,
        });
    }
    Ok(NondegeneracyScan {
        violations: samples.iter().filter(|d| d.violation).map(|d| d.index).collect(),
        anomalies: samples.iter().filter(|d| d.anomaly).map(|d| d.index).collect(),
        samples,
        skipped,
    })
}

/// A point of ĝ's degeneracy locus where the margin stays away from zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SecondaryDegeneracy {
    pub theta: f64,
    pub y: Vec<f64>,
    pub margin_over_f: f64,
    /// |det ĝ| / scale at the root of F − 2Φ.
    pub relative_det: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RayReport {
    pub x: Vec<f64>,
    pub theta_star: f64,
    /// (target margin, θ, det ĝ) approaching the root from the positive side.
    pub decay: Vec<(f64, f64, f64)>,
    /// |det ĝ| at margin 1e-6 over |det ĝ| at margin 0.5.
    pub det_ratio: Option<f64>,
    /// |det ĝ| strictly decreases over the last decade of margins.
    pub monotone: bool,
    /// max |det ĝ(θ*±1e-4)| / min |det ĝ(θ*±0.3)|.
    pub neighbourhood_ratio: Option<f64>,
    pub secondary: Option<SecondaryDegeneracy>,
}

struct RayPoint {
    f: f64,
    phi: f64,
    margin: f64,
}

const RAY_GRID: usize = 4096;
/// Relative |det ĝ| below which a root of F − 2Φ counts as degenerate.
const SECONDARY_DET: f64 = 1e-8;
pub const DECAY_TARGETS: [f64; 9] = [0.5, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 5e-6, 2e-6, 1e-6];

/// Searches the directions y(θ) = cos θ·u + sin θ·v at base point x for a
/// zero of the margin and measures how det ĝ collapses towards it. Also
/// looks for zeros of F − 2Φ where the margin is large.
pub fn degeneracy_ray<M: Structure, V: VectorField>(
    hat: &MatsumotoChange<'_, M, V>,
    x: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<Option<RayReport>> {
    let n = hat.dim();
    let dir = |t: f64| -> Vec<f64> { (0..n).map(|i| t.cos() * u[i] + t.sin() * v[i]).collect() };
    let point = |t: f64| -> Option<RayPoint> {
        let y = dir(t);
        if !hat.base.sample(x, &y).is_admissible() {
            return None;
        }
        let fields = metric_fields::<M, f64>(hat.base, x, &y).ok()?;
        let phi = hat.effective_field(x).ok()?;
        let phi_cap = fields.bilinear(&phi, &y);
        let p2 = fields.bilinear(&phi, &phi);
        let f = fields.f;
        if !(f - phi_cap > HAT_EPS * f) {
            return None;
        }
        Some(RayPoint {
            f,
            phi: phi_cap,
            margin: margin_of(&f, &phi_cap, &p2),
        })
    };
    let det_at = |t: f64| -> Option<(f64, f64)> {
        let y = dir(t);
        let fields = metric_fields::<_, f64>(hat, x, &y).ok()?;
        let g = Mat { n, data: fields.g };
        Some((det(&g.data, n), det_scale(&g)))
    };
    let bisect = |mut a: f64, mut b: f64, h: &dyn Fn(f64) -> Option<f64>| -> Option<f64> {
        let mut ha = h(a)?;
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            let hm = h(mid)?;
            if (hm > 0.0) == (ha > 0.0) {
                a = mid;
                ha = hm;
            } else {
                b = mid;
            }
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        Some(0.5 * (a + b))
    };
    let step = std::f64::consts::TAU / RAY_GRID as f64;
    let grid: Vec<Option<RayPoint>> = (0..=RAY_GRID).map(|k| point(k as f64 * step)).collect();

    let margin_fn = |t: f64| point(t).map(|p| p.margin);
    let mut root = None;
    for k in 0..RAY_GRID {
        if let (Some(a), Some(b)) = (&grid[k], &grid[k + 1]) {
            if (a.margin > 0.0) != (b.margin > 0.0) {
                let t0 = k as f64 * step;
                if let Some(t) = bisect(t0, t0 + step, &margin_fn) {
                    let positive_side = if a.margin > 0.0 { -1.0 } else { 1.0 };
                    root = Some((t, positive_side));
                    break;
                }
            }
        }
    }

    let secondary = (0..RAY_GRID).find_map(|k| {
        let (a, b) = (grid[k].as_ref()?, grid[k + 1].as_ref()?);
        let ga = a.f - 2.0 * a.phi;
        let gb = b.f - 2.0 * b.phi;
        if (ga > 0.0) == (gb > 0.0) {
            return None;
        }
        let t0 = k as f64 * step;
        let t = bisect(t0, t0 + step, &|t| point(t).map(|p| p.f - 2.0 * p.phi))?;
        let p = point(t)?;
        if p.margin.abs() <= 0.1 * p.f {
            return None;
        }
        let (d, scale) = det_at(t)?;
        if d.abs() > SECONDARY_DET * scale {
            return None;
        }
        Some(SecondaryDegeneracy {
            theta: t,
            y: dir(t),
            margin_over_f: p.margin / p.f,
            relative_det: d.abs() / scale,
        })
    });

    let Some((theta_star, side)) = root else {
        return Ok(secondary.map(|sec| RayReport {
            x: x.to_vec(),
            theta_star: f64::NAN,
            decay: Vec::new(),
            det_ratio: None,
            monotone: false,
            neighbourhood_ratio: None,
            secondary: Some(sec),
        }));
    };

    let mut decay = Vec::new();
    for &target in &DECAY_TARGETS {
        // walk away from the root until the margin reaches the target
        let mut prev = theta_star;
        let mut found = None;
        for k in 0..200 {
            let delta = 1e-10 * 1.2f64.powi(k);
            if delta > std::f64::consts::PI {
                break;
            }
            let t = theta_star + side * delta;
            match margin_fn(t) {
                Some(m) if m >= target => {
                    found = bisect(prev, t, &|s| margin_fn(s).map(|m| m - target));
                    break;
                }
                Some(_) => prev = t,
                None => break,
            }
        }
        if let Some(t) = found {
            if let Some((d, _)) = det_at(t) {
                decay.push((target, t, d));
            }
        }
    }
    let det_for = |target: f64| decay.iter().find(|d| d.0 == target).map(|d| d.2.abs());
    let det_ratio = match (det_for(1e-6), det_for(0.5)) {
        (Some(a), Some(b)) if b > 0.0 => Some(a / b),
        _ => None,
    };
    let last: Vec<f64> = decay.iter().filter(|d| d.0 <= 1e-5).map(|d| d.2.abs()).collect();
    let monotone = last.len() == 4 && last.windows(2).all(|w| w[1] < w[0]);
    let near = [theta_star - 1e-4, theta_star + 1e-4].map(|t| det_at(t).map(|d| d.0.abs()));
    let far = [theta_star - 0.3, theta_star + 0.3].map(|t| det_at(t).map(|d| d.0.abs()));
    let neighbourhood_ratio = match (near, far) {
        ([Some(a), Some(b)], [Some(c), Some(d)]) if c.min(d) > 0.0 => Some(a.max(b) / c.min(d)),
        _ => None,
    };
    Ok(Some(RayReport {
        x: x.to_vec(),
        theta_star,
        decay,
        det_ratio,
        monotone,
        neighbourhood_ratio,
        secondary,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectiveSample {
    pub index: usize,
    /// φ and y are collinear at this point.
    pub parallel: bool,
    /// Euclidean norm of the g-orthogonal-to-y part of Ĝ − G.
    pub orth_norm: f64,
    pub diff_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProjectiveReport {
    pub samples: Vec<ProjectiveSample>,
    /// Smallest ratio over samples where φ is not parallel to y.
    pub min_ratio: Option<f64>,
    pub failures: Vec<usize>,
    pub diagnostic: Option<String>,
}

pub fn projective_check<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    batch: &[TangentSample],
    orientation: Orientation,
) -> Result<ProjectiveReport> {
    let hat = MatsumotoChange::new(base, field, orientation);
    let mut samples = Vec::new();
    let mut any_field = false;
    for (index, s) in batch.iter().enumerate() {
        let phi = hat.effective_field(&s.x)?;
        let phi_norm = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if phi_norm < 1e-300 {
            continue;
        }
        any_field = true;
        let md = metric_data(base, s)?;
        let g0 = spray_generic(base, &s.x, &s.y)?;
        let g1 = spray_generic(&hat, &s.x, &s.y)?;
        let diff: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| a - b).collect();
        let coef = md.g.bilinear(&diff, &s.y) / md.g.bilinear(&s.y, &s.y);
        let orth: Vec<f64> = diff.iter().zip(&s.y).map(|(d, y)| d - coef * y).collect();
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let y_norm = norm(&s.y);
        let dot: f64 = phi.iter().zip(&s.y).map(|(a, b)| a * b).sum();
        let c = dot / (phi_norm * phi_norm);
        let rest: Vec<f64> = s.y.iter().zip(&phi).map(|(y, p)| y - c * p).collect();
        let sin = norm(&rest) / y_norm;
        let diff_norm = norm(&diff);
        let orth_norm = norm(&orth);
        samples.push(ProjectiveSample {
            index,
            parallel: sin < 1e-8,
            orth_norm,
            diff_norm,
            ratio: if diff_norm > 0.0 { orth_norm / diff_norm } else { 0.0 },
        });
    }
    if !any_field {
        return Ok(ProjectiveReport {
            samples,
            min_ratio: None,
            failures: Vec::new(),
            diagnostic: Some("concurrent field required nonvanishing".into()),
        });
    }
    let active = samples.iter().filter(|p| !p.parallel);
    let min_ratio = active.clone().map(|p| p.ratio).reduce(f64::min);
    let failures = active.filter(|p| !(p.ratio > 1e-8)).map(|p| p.index).collect();
    Ok(ProjectiveReport {
        samples,
        min_ratio,
        failures,
        diagnostic: None,
    })
}

/// Oⁱⱼ = [∂f₁/∂yʲ − φᵏ∂²f₂/∂yᵏ∂yʲ]φⁱ − (φᵏ∂f₁/∂yᵏ)δⁱⱼ + (φᵏ∂²f₁/∂yᵏ∂yʲ)yⁱ,
/// which vanishes exactly when φ stays concurrent for F̂.
pub fn concurrency_obstruction(cj: &ChangeJets) -> Mat {
    let n = cj.n;
    let phi: Vec<f64> = cj.phi_up.iter().map(|p| *p.val()).collect();
    let y: Vec<f64> = cj.y.iter().map(|p| *p.val()).collect();
    let dy = |f: &crate::numkit::Jet<f64>, j: usize| f.deriv(&[n + j]);
    let contract2 = |f: &crate::numkit::Jet<f64>, j: usize| -> f64 {
        (0..n).map(|k| phi[k] * f.deriv(&[n + k, n + j])).sum()
    };
    let phi_df1: f64 = (0..n).map(|k| phi[k] * dy(&cj.f1, k)).sum();
    Mat::from_fn(n, |i, j| {
        let mut v = (dy(&cj.f1, j) - contract2(&cj.f2, j)) * phi[i] + contract2(&cj.f1, j) * y[i];
        if i == j {
            v -= phi_df1;
        }
        v
    })
}

/// Largest relative gap between jet and finite-difference values of
/// ∂²f₂/∂yᵏ∂yʲ at one sample.
pub fn obstruction_fd_check<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<f64> {
    let cj = change_jets(base, field, s, orientation)?;
    let n = cj.n;
    let hat = MatsumotoChange::new(base, field, orientation);
    let phi = hat.effective_field(&s.x)?;
    let f2 = |y: &[f64]| -> Result<f64> {
        if !base.sample(&s.x, y).is_admissible() {
            return Err(Error::domain("stencil left the domain"));
        }
        let fields = metric_fields::<M, f64>(base, &s.x, y)?;
        let phi_cap = fields.bilinear(&phi, y);
        let p2 = fields.bilinear(&phi, &phi);
        Ok(super::f1_f2(&fields.f, &phi_cap, &p2)?.1)
    };
    let cfg = DiffConfig::default();
    let mut worst = 0.0f64;
    for j in 0..n {
        for k in j..n {
            let mut alpha = vec![0u8; n];
            alpha[j] += 1;
            alpha[k] += 1;
            let fd = fd_derivative(&f2, &s.y, &alpha, &cfg)?;
            let jet = cj.f2.deriv(&[n + j, n + k]);
            worst = worst.max((jet - fd).abs() / jet.abs().max(1.0));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub samples: usize,
    /// max ‖θ·a − g‖ relative.
    pub base_residual: f64,
    /// max ‖θ̂·â − ĝ‖ relative, ĝ from the Hessian of ½F̂².
    pub hat_residual: f64,
    pub worst_base: usize,
    pub worst_hat: usize,
    pub base_pair: (Vec<f64>, Vec<f64>),
    pub hat_pair: (Vec<f64>, Vec<f64>),
}

/// θ̂ = F²/(F−Φ)⁴ and â = (F²+2Φ²)g + 3F²φφ + 4Φ²ℓℓ − 4ΦF(φℓ+ℓφ)
/// − FΦ(3g + ℓℓ) + F²(φℓ+ℓφ), with φ_i lowered by g.
pub fn hat_decomposition(sc: &ChangeScalars, g: &Mat, ell: &[f64]) -> (f64, Mat) {
    let (f, phi) = (sc.f, sc.phi_cap);
    let p = &sc.phi_low;
    let theta = f * f / (f - phi).powi(4);
    let a = Mat::from_fn(g.n, |i, j| {
        let sym = p[i] * ell[j] + p[j] * ell[i];
        (f * f + 2.0 * phi * phi) * g.get(i, j) + 3.0 * f * f * p[i] * p[j] + 4.0 * phi * phi * ell[i] * ell[j]
            - 4.0 * phi * f * sym
            - f * phi * (3.0 * g.get(i, j) + ell[i] * ell[j])
            + f * f * sym
    });
    (theta, a)
}

pub fn rational_decomposition_check<M, V, D>(
    base: &M,
    field: &V,
    batch: &[TangentSample],
    orientation: Orientation,
    theta_a: D,
) -> Result<DecompositionReport>
where
    M: Structure,
    V: VectorField,
    D: Fn(&[f64], &[f64]) -> (f64, Mat),
{
    let hat = MatsumotoChange::new(base, field, orientation);
    let mut rep = DecompositionReport {
        samples: 0,
        base_residual: 0.0,
        hat_residual: 0.0,
        worst_base: 0,
        worst_hat: 0,
        base_pair: (Vec::new(), Vec::new()),
        hat_pair: (Vec::new(), Vec::new()),
    };
    for (index, s) in batch.iter().enumerate() {
        let md = metric_data(base, s)?;
        let (theta, a) = theta_a(&s.x, &s.y);
        let ta: Vec<f64> = a.data.iter().map(|v| theta * v).collect();
        let r = rel_residual(&ta, &md.g.data);
        if r >= rep.base_residual || rep.samples == 0 {
            rep.base_residual = r;
            rep.worst_base = index;
            rep.base_pair = (ta, md.g.data.clone());
        }
        let sc = ChangeScalars::from_metric(&md, hat.effective_field(&s.x)?, &s.y, orientation)?;
        let (th, ah) = hat_decomposition(&sc, &md.g, &md.ell);
        let tah: Vec<f64> = ah.data.iter().map(|v| th * v).collect();
        let mh = metric_data(&hat, &hat.sample(&s.x, &s.y))?;
        let r = rel_residual(&tah, &mh.g.data);
        if r >= rep.hat_residual || rep.samples == 0 {
            rep.hat_residual = r;
            rep.worst_hat = index;
            rep.hat_pair = (tah, mh.g.data.clone());
        }
        rep.samples += 1;
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::ModelDef;

    fn euclid() -> ModelDef {
        ModelDef::parse("name=e\ndim=2\nF = sqrt(y1^2 + y2^2)\nphi1 = -x1\nphi2 = -x2\n").unwrap()
    }

    #[test]
    fn flat_ray_collapses_at_the_margin_root() {
        let m = euclid();
        let hat = MatsumotoChange::new(&m, &m, Orientation::Plus);
        let r = degeneracy_ray(&hat, &[0.8, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap().unwrap();
        // margin = 2.28 + 2.4 cos θ vanishes at cos θ = -0.95
        assert!((r.theta_star.cos() + 0.95).abs() < 1e-10, "{}", r.theta_star);
        assert!(r.det_ratio.unwrap() < 1e-3);
        assert!(r.monotone);
        // independent oracle: |det ĝ| = 0.3923297 at θ*+1e-4 and 182.76082 at θ*−0.3
        assert!((r.neighbourhood_ratio.unwrap() - 0.3923297283647874 / 182.7608185319648).abs() < 1e-7);
        assert!(r.secondary.is_none());
    }

    #[test]
    fn vanishing_field_skips_projective_check() {
        let m = ModelDef::parse("name=z\ndim=2\nF = sqrt(y1^2 + y2^2)\nphi1 = 0*x1\nphi2 = 0*x2\n").unwrap();
        let batch = vec![m.sample(&[0.3, 0.2], &[1.0, 0.5])];
        let r = projective_check(&m, &m, &batch, Orientation::Plus).unwrap();
        assert!(r.diagnostic.is_some());
        let cj = change_jets(&m, &m, &batch[0], Orientation::Plus).unwrap();
        assert_eq!(concurrency_obstruction(&cj).max_abs(), 0.0);
    }

    #[test]
    fn flat_projective_separation() {
        let m = euclid();
        let batch = vec![m.sample(&[0.3, 0.2], &[1.0, 0.5]), m.sample(&[0.3, 0.2], &[-0.6, -0.4])];
        let r = projective_check(&m, &m, &batch, Orientation::Plus).unwrap();
        assert!(!r.samples[0].parallel && r.samples[0].ratio > 1e-3);
        assert!(r.samples[1].parallel);
        assert!(r.failures.is_empty());
    }
}
