//! The change F̂ = F² / (F − Φ) with Φ = g(φ, y), its scalars
//! f₁ = F(4Φ − F)/m and f₂ = 2F³/m where m = F(1 + 2p²) − 3Φ, and the
//! predicted transformed objects.
//!
//! Every operation takes an [`Orientation`] that multiplies φ before Φ is
//! formed; the direct side recomputes everything from F̂ as a [`Structure`].

mod identities;
mod report;
mod scans;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::connections::{curvature_of_connection, spray_jets, VectorField};
use crate::metric::{metric_data, metric_fields, MetricData, Structure, TangentSample};
use crate::numkit::{lift, lift_y, Jet, Mat, Scalar, Tensor3};
use crate::{Error, Result};

pub use identities::{change_identities, lemma_identities, Comparison};
pub use report::{ChangeReport, IdentityEntry, IdentityKind, IdentitySpec, IDENTITIES};
pub use scans::{
    concurrency_obstruction, degeneracy_ray, nondegeneracy_scan, obstruction_fd_check, projective_check,
    rational_decomposition_check, DecompositionReport, DegeneracySample, NondegeneracyScan, ProjectiveReport,
    ProjectiveSample, RayReport, SecondaryDegeneracy,
};

/// Relative guard used for both F − Φ > 0 and |margin| > 0.
pub const HAT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    #[serde(rename = "+1")]
    Plus,
    #[serde(rename = "-1")]
    Minus,
}

impl Orientation {
    pub const BOTH: [Orientation; 2] = [Orientation::Plus, Orientation::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Orientation::Plus => 1.0,
            Orientation::Minus => -1.0,
        }
    }

    /// The orientation whose effective field has covariant derivative σ·id
    /// with σ = −1, given the σ measured for the unoriented field.
    pub fn matching_sigma(measured_sigma: f64) -> Orientation {
        if measured_sigma > 0.0 {
            Orientation::Minus
        } else {
            Orientation::Plus
        }
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Plus => "+1",
            Orientation::Minus => "-1",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+1" | "1" | "+" | "plus" => Ok(Orientation::Plus),
            "-1" | "-" | "minus" => Ok(Orientation::Minus),
            other => Err(Error::Validation(format!("orientation must be +1 or -1, got `{other}`"))),
        }
    }
}

/// The changed structure F̂ built on a base structure and a field.
pub struct MatsumotoChange<'a, M, V> {
    pub base: &'a M,
    pub field: &'a V,
    pub orientation: Orientation,
}

impl<M, V> Clone for MatsumotoChange<'_, M, V> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<M, V> Copy for MatsumotoChange<'_, M, V> {}

impl<'a, M: Structure, V: VectorField> MatsumotoChange<'a, M, V> {
    pub fn new(base: &'a M, field: &'a V, orientation: Orientation) -> Self {
        MatsumotoChange {
            base,
            field,
            orientation,
        }
    }

    pub fn effective_field<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let sign = self.orientation.sign();
        Ok(self.field.eval(x)?.into_iter().map(|v| v * sign).collect())
    }

    /// F and Φ = ½ φⁱ ∂F²/∂yⁱ over any scalar type.
    pub fn f_and_phi<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<(S, S)> {
        let (xs, ys) = lift_y(x, y, 1);
        let l2: Jet<S> = self.base.finsler_sq(&xs, &ys)?;
        let phi = self.effective_field(x)?;
        let mut cap = S::from_f64(0.0);
        for (i, p) in phi.iter().enumerate() {
            cap.mul_add_assign(p, &l2.deriv(&[i]));
        }
        Ok((l2.val().try_sqrt()?, cap * 0.5))
    }
}

impl<M: Structure, V: VectorField> Structure for MatsumotoChange<'_, M, V> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn label(&self) -> String {
        format!("{} changed by {}·φ", self.base.label(), self.orientation)
    }

    fn finsler<S: Scalar>(&self, x: &[S], y: &[S]) -> Result<S> {
        let (f, phi) = self.f_and_phi(x, y)?;
        let gap = f.clone() - phi;
        if !(gap.value() > HAT_EPS * f.value()) {
            return Err(Error::OutsideHatDomain { gap: gap.value() });
        }
        (f.clone() * f).try_div(&gap)
    }

    fn domain_flags(&self, x: &[f64], y: &[f64]) -> Vec<bool> {
        let mut flags = self.base.domain_flags(x, y);
        let hat = (|| -> Result<(bool, bool)> {
            let fields = metric_fields::<M, f64>(self.base, x, y)?;
            let phi = self.effective_field(x)?;
            let phi_cap = fields.bilinear(&phi, y);
            let p2 = fields.bilinear(&phi, &phi);
            let f = fields.f;
            Ok((f - phi_cap > HAT_EPS * f, margin_of(&f, &phi_cap, &p2).abs() > HAT_EPS * f))
        })();
        let (gap_ok, margin_ok) = hat.unwrap_or((false, false));
        flags.push(gap_ok);
        flags.push(margin_ok);
        flags
    }
}

/// F(1 + 2p²) − 3Φ.
pub fn margin_of<S: Scalar>(f: &S, phi: &S, p2: &S) -> S {
    f.clone() * (p2.clone() * 2.0 + 1.0) - phi.clone() * 3.0
}

/// (f₁, f₂) over any scalar type.
pub fn f1_f2<S: Scalar>(f: &S, phi: &S, p2: &S) -> Result<(S, S)> {
    let m = margin_of(f, phi, p2);
    let inv = m.try_recip()?;
    let f1 = f.clone() * (phi.clone() * 4.0 - f.clone()) * inv.clone();
    let f2 = f.clone() * f.clone() * f.clone() * 2.0 * inv;
    Ok((f1, f2))
}

/// [∂f₁/∂F, ∂f₁/∂Φ, ∂f₂/∂F, ∂f₂/∂Φ] at fixed p², from the closed forms.
pub fn f_partials(f: f64, phi: f64, p2: f64) -> [f64; 4] {
    let q = 1.0 + 2.0 * p2;
    let m = f * q - 3.0 * phi;
    let m2 = m * m;
    [
        (4.0 * phi - 2.0 * f) / m - f * (4.0 * phi - f) * q / m2,
        4.0 * f / m + 3.0 * f * (4.0 * phi - f) / m2,
        6.0 * f * f / m - 2.0 * f.powi(3) * q / m2,
        6.0 * f.powi(3) / m2,
    ]
}

/// ĝ_ij from F, Φ, g, ℓ and φ_i (row-major n×n).
pub fn predicted_metric_generic<S: Scalar>(f: &S, phi: &S, g: &[S], ell: &[S], phil: &[S]) -> Result<Vec<S>> {
    let n = ell.len();
    let d = f.clone() - phi.clone();
    let d_inv = d.try_recip()?;
    let d3 = d_inv.clone() * d_inv.clone() * d_inv.clone();
    let d4 = d3.clone() * d_inv;
    let f2 = f.clone() * f.clone();
    let c_g = f2.clone() * (f.clone() - phi.clone() * 2.0) * d3;
    let c_pp = f2.clone() * f2.clone() * d4.clone() * 3.0;
    let c_ll = f2.clone() * phi.clone() * (phi.clone() * 4.0 - f.clone()) * d4.clone();
    let c_pl = f2 * f.clone() * (f.clone() - phi.clone() * 4.0) * d4;
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut v = c_g.clone() * g[i * n + j].clone();
            v.add_assign_ref(&(c_pp.clone() * phil[i].clone() * phil[j].clone()));
            v.add_assign_ref(&(c_ll.clone() * ell[i].clone() * ell[j].clone()));
            let sym = phil[i].clone() * ell[j].clone() + phil[j].clone() * ell[i].clone();
            v.add_assign_ref(&(c_pl.clone() * sym));
            out.push(v);
        }
    }
    Ok(out)
}

/// Scalars of the change at one sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChangeScalars {
    pub orientation: Orientation,
    pub f: f64,
    /// Φ = g_ij φⁱ yʲ.
    pub phi_cap: f64,
    /// Oriented field components φⁱ.
    pub phi_up: Vec<f64>,
    /// φ_i = g_ij φʲ.
    pub phi_low: Vec<f64>,
    pub p2: f64,
    pub margin: f64,
    pub f1: f64,
    pub f2: f64,
    pub f_hat: f64,
}

impl ChangeScalars {
    pub fn from_metric(md: &MetricData, phi_up: Vec<f64>, y: &[f64], orientation: Orientation) -> Result<Self> {
        let phi_low = md.g.apply(&phi_up);
        let phi_cap: f64 = phi_low.iter().zip(y).map(|(a, b)| a * b).sum();
        let p2: f64 = phi_low.iter().zip(&phi_up).map(|(a, b)| a * b).sum();
        let f = md.f;
        let gap = f - phi_cap;
        if !(gap > HAT_EPS * f) {
            return Err(Error::OutsideHatDomain { gap });
        }
        let margin = margin_of(&f, &phi_cap, &p2);
        if !(margin.abs() > HAT_EPS * f) {
            return Err(Error::DegenerateMargin { margin });
        }
        let (f1, f2) = f1_f2(&f, &phi_cap, &p2)?;
        Ok(ChangeScalars {
            orientation,
            f,
            phi_cap,
            phi_up,
            phi_low,
            p2,
            margin,
            f1,
            f2,
            f_hat: f * f / gap,
        })
    }
}

pub fn change_scalars<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<ChangeScalars> {
    let md = metric_data(base, s)?;
    let hat = MatsumotoChange::new(base, field, orientation);
    ChangeScalars::from_metric(&md, hat.effective_field(&s.x)?, &s.y, orientation)
}

fn coefficient_powers(sc: &ChangeScalars) -> (f64, f64, f64) {
    let d = sc.f - sc.phi_cap;
    (d, d.powi(3), d.powi(4))
}

/// ℓ̂_i = [F(F−2Φ)/(F−Φ)²]ℓ_i + [F²/(F−Φ)²]φ_i.
pub fn predicted_supporting_form(sc: &ChangeScalars, md: &MetricData) -> Vec<f64> {
    let (f, phi) = (sc.f, sc.phi_cap);
    let d2 = (f - phi).powi(2);
    let a = f * (f - 2.0 * phi) / d2;
    let b = f * f / d2;
    md.ell.iter().zip(&sc.phi_low).map(|(l, p)| a * l + b * p).collect()
}

pub fn predicted_metric(sc: &ChangeScalars, md: &MetricData) -> Mat {
    let out = predicted_metric_generic(&sc.f, &sc.phi_cap, &md.g.data, &md.ell, &sc.phi_low)
        .expect("the scalars already exclude F = Φ");
    Mat { n: md.g.n, data: out }
}

/// ħ̂_ij with coefficients F²(F−2Φ)/(F−Φ)³, 2F⁴/(F−Φ)⁴, 2Φ²F²/(F−Φ)⁴, −2ΦF³/(F−Φ)⁴.
pub fn predicted_angular(sc: &ChangeScalars, md: &MetricData) -> Mat {
    let (f, phi) = (sc.f, sc.phi_cap);
    let (_, d3, d4) = coefficient_powers(sc);
    let c_h = f * f * (f - 2.0 * phi) / d3;
    let c_pp = 2.0 * f.powi(4) / d4;
    let c_ll = 2.0 * phi * phi * f * f / d4;
    let c_pl = -2.0 * phi * f.powi(3) / d4;
    let (l, p) = (&md.ell, &sc.phi_low);
    Mat::from_fn(md.g.n, |i, j| {
        c_h * md.hbar.get(i, j) + c_pp * p[i] * p[j] + c_ll * l[i] * l[j] + c_pl * (p[i] * l[j] + p[j] * l[i])
    })
}

/// Ĝⁱ = Gⁱ + ½f₁yⁱ − ½f₂φⁱ.
pub fn predicted_spray(sc: &ChangeScalars, spray: &[f64], y: &[f64]) -> Vec<f64> {
    (0..spray.len())
        .map(|i| spray[i] + 0.5 * sc.f1 * y[i] - 0.5 * sc.f2 * sc.phi_up[i])
        .collect()
}

/// Change scalars as order-2 jets in all 2n coordinates, together with the
/// base spray jets; the predicted connection objects are read off these.
pub struct ChangeJets {
    pub n: usize,
    pub f: Jet<f64>,
    pub phi_cap: Jet<f64>,
    pub p2: Jet<f64>,
    pub f1: Jet<f64>,
    pub f2: Jet<f64>,
    pub g: Vec<Jet<f64>>,
    pub ell: Vec<Jet<f64>>,
    pub phi_low: Vec<Jet<f64>>,
    pub phi_up: Vec<Jet<f64>>,
    pub y: Vec<Jet<f64>>,
    pub spray: Vec<Jet<f64>>,
}

pub fn change_jets<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<ChangeJets> {
    s.require_admissible()?;
    let n = base.dim();
    let (xs, ys) = lift(&s.x, &s.y, 2);
    let fields = metric_fields::<M, Jet<f64>>(base, &xs, &ys)?;
    let hat = MatsumotoChange::new(base, field, orientation);
    let phi_up = hat.effective_field(&xs)?;
    let phi_low = fields.lower(&phi_up);
    let mut phi_cap = Jet::constant(0.0);
    let mut p2 = Jet::constant(0.0);
    for i in 0..n {
        phi_cap.mul_add_assign(&phi_low[i], &ys[i]);
        p2.mul_add_assign(&phi_low[i], &phi_up[i]);
    }
    let gap = fields.f.val() - phi_cap.val();
    if !(gap > HAT_EPS * fields.f.val()) {
        return Err(Error::OutsideHatDomain { gap });
    }
    let margin = margin_of(fields.f.val(), phi_cap.val(), p2.val());
    if !(margin.abs() > HAT_EPS * fields.f.val()) {
        return Err(Error::DegenerateMargin { margin });
    }
    let (f1, f2) = f1_f2(&fields.f, &phi_cap, &p2)?;
    let ell = fields.ell()?;
    Ok(ChangeJets {
        n,
        spray: spray_jets(base, s)?,
        f: fields.f,
        phi_cap,
        p2,
        f1,
        f2,
        g: fields.g,
        ell,
        phi_low,
        phi_up,
        y: ys,
    })
}

/// Predicted connection-level objects of F̂.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictedConnection {
    pub spray: Vec<f64>,
    /// N̂ from N + ½(f₁δ + ∂f₁/∂yʲ yⁱ − ∂f₂/∂yʲ φⁱ).
    pub nonlinear: Mat,
    /// ∂Ĝⁱ/∂yʲ of the predicted spray.
    pub nonlinear_from_spray: Mat,
    pub berwald: Tensor3,
    pub curvature: Tensor3,
}

impl ChangeJets {
    pub fn predicted_spray_jets(&self) -> Vec<Jet<f64>> {
        (0..self.n)
            .map(|i| {
                self.spray[i].clone() + self.f1.clone() * self.y[i].clone() * 0.5
                    - self.f2.clone() * self.phi_up[i].clone() * 0.5
            })
            .collect()
    }

    /// N̂ⁱⱼ as jets accurate to first order, stored row-major.
    pub fn predicted_nonlinear_jets(&self) -> Vec<Jet<f64>> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let mut v = self.spray[i].partial(n + j);
                let mut corr = self.f1.partial(n + j) * self.y[i].clone() - self.f2.partial(n + j) * self.phi_up[i].clone();
                if i == j {
                    corr = corr + self.f1.clone();
                }
                v = v + corr * 0.5;
                out.push(v);
            }
        }
        out
    }

    pub fn predicted_connection(&self) -> PredictedConnection {
        let n = self.n;
        let sj = self.predicted_spray_jets();
        let nj = self.predicted_nonlinear_jets();
        PredictedConnection {
            spray: sj.iter().map(|j| *j.val()).collect(),
            nonlinear: Mat::from_fn(n, |i, j| *nj[i * n + j].val()),
            nonlinear_from_spray: Mat::from_fn(n, |i, j| sj[i].deriv(&[n + j])),
            berwald: Tensor3::from_fn(n, |i, j, k| nj[i * n + j].deriv(&[n + k])),
            curvature: curvature_of_connection(n, &nj),
        }
    }

    /// Predicted ĝ as jets.
    pub fn predicted_metric_jets(&self) -> Result<Vec<Jet<f64>>> {
        predicted_metric_generic(&self.f, &self.phi_cap, &self.g, &self.ell, &self.phi_low)
    }

    /// T̂_ijk = ½ ∂ĝ_ij/∂yᵏ of the predicted metric.
    pub fn predicted_cartan(&self) -> Result<Tensor3> {
        let n = self.n;
        let gh = self.predicted_metric_jets()?;
        Ok(Tensor3::from_fn(n, |i, j, k| 0.5 * gh[i * n + j].deriv(&[n + k])))
    }
}

pub fn predicted_nonlinear_connection<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<Mat> {
    Ok(change_jets(base, field, s, orientation)?.predicted_connection().nonlinear)
}

pub fn predicted_berwald_and_curvature<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<(Tensor3, Tensor3)> {
    let pc = change_jets(base, field, s, orientation)?.predicted_connection();
    Ok((pc.berwald, pc.curvature))
}

pub fn predicted_cartan<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<Tensor3> {
    change_jets(base, field, s, orientation)?.predicted_cartan()
}
