//! Per-sample predicted/direct pairs for the lemma identities and for the
//! transformation laws of the change.

use super::{
    change_jets, predicted_angular, predicted_metric, predicted_spray, predicted_supporting_form, ChangeScalars,
    MatsumotoChange, Orientation,
};
use crate::connections::{connection_data, horizontal_derivative, VectorField};
use crate::metric::{metric_data, Structure, TangentSample};
use crate::numkit::{lift, Jet, Mat};
use crate::Result;

/// A predicted value set and the value set it should equal.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub name: &'static str,
    pub predicted: Vec<f64>,
    pub direct: Vec<f64>,
}

fn cmp(name: &'static str, predicted: Vec<f64>, direct: Vec<f64>) -> Comparison {
    debug_assert_eq!(predicted.len(), direct.len(), "{name}");
    Comparison {
        name,
        predicted,
        direct,
    }
}

fn vals(jets: &[Jet<f64>]) -> Vec<f64> {
    jets.iter().map(|j| *j.val()).collect()
}

/// Identities satisfied by Φ, F, ℓ, p², f₁ and f₂ under the oriented field.
pub fn lemma_identities<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<Vec<Comparison>> {
    let cj = change_jets(base, field, s, orientation)?;
    let n = cj.n;
    let nl = Mat::from_fn(n, |i, j| cj.spray[i].deriv(&[n + j]));
    let f = *cj.f.val();
    let ell = vals(&cj.ell);
    let phil = vals(&cj.phi_low);
    let phiu = vals(&cj.phi_up);
    let spray = vals(&cj.spray);
    let mut out = Vec::new();

    out.push(cmp(
        "phi_vertical_derivative",
        (0..n).map(|j| cj.phi_cap.deriv(&[n + j])).collect(),
        phil.clone(),
    ));
    out.push(cmp(
        "phi_horizontal_derivative",
        horizontal_derivative(&cj.phi_cap, &nl),
        ell.iter().map(|l| -f * l).collect(),
    ));
    let along: f64 = (0..n)
        .map(|j| s.y[j] * cj.phi_cap.deriv(&[j]) - 2.0 * spray[j] * cj.phi_cap.deriv(&[n + j]))
        .sum();
    out.push(cmp("phi_along_spray", vec![along], vec![-f * f]));
    out.push(cmp("finsler_horizontal_derivative", horizontal_derivative(&cj.f, &nl), vec![0.0; n]));

    let mut dl = Vec::with_capacity(n * n);
    let mut hbar = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            dl.push(f * cj.ell[i].deriv(&[n + j]));
            hbar.push(cj.g[i * n + j].val() - ell[i] * ell[j]);
        }
    }
    out.push(cmp("supporting_form_vertical_derivative", dl, hbar));
    out.push(cmp(
        "p2_vertical_derivative",
        (0..n).map(|k| cj.p2.deriv(&[n + k])).collect(),
        vec![0.0; n],
    ));

    let (phi_cap, p2) = (*cj.phi_cap.val(), *cj.p2.val());
    let d = super::f_partials(f, phi_cap, p2);
    for (name, jet, df_df_cap, df_dphi) in [
        ("chain_rule_f1", &cj.f1, d[0], d[1]),
        ("chain_rule_f2", &cj.f2, d[2], d[3]),
    ] {
        out.push(cmp(
            name,
            (0..n).map(|j| jet.deriv(&[n + j])).collect(),
            (0..n).map(|j| df_df_cap * ell[j] + df_dphi * phil[j]).collect(),
        ));
    }
    let ell_phi: f64 = ell.iter().zip(&phiu).map(|(a, b)| a * b).sum();
    out.push(cmp("supporting_form_along_field", vec![ell_phi], vec![phi_cap / f]));
    let hat = MatsumotoChange::new(base, field, orientation);
    let (_, phi_grad) = hat.f_and_phi(&s.x, &s.y)?;
    out.push(cmp("phi_two_routes", vec![phi_cap, p2], vec![phi_grad, base_p2(base, field, s, orientation)?]));
    Ok(out)
}

/// p² as g(φ, φ) straight from the metric tensor.
fn base_p2<M: Structure, V: VectorField>(base: &M, field: &V, s: &TangentSample, o: Orientation) -> Result<f64> {
    let md = metric_data(base, s)?;
    let phi = MatsumotoChange::new(base, field, o).effective_field(&s.x)?;
    Ok(md.g.bilinear(&phi, &phi))
}

/// Predicted transformed objects next to their recomputation from F̂.
pub fn change_identities<M: Structure, V: VectorField>(
    base: &M,
    field: &V,
    s: &TangentSample,
    orientation: Orientation,
) -> Result<Vec<Comparison>> {
    let n = base.dim();
    let md = metric_data(base, s)?;
    let hat = MatsumotoChange::new(base, field, orientation);
    let sc = ChangeScalars::from_metric(&md, hat.effective_field(&s.x)?, &s.y, orientation)?;
    let hs = hat.sample(&s.x, &s.y);
    let mh = metric_data(&hat, &hs)?;
    let ch = connection_data(&hat, &hs, &mh)?;
    let cj = change_jets(base, field, s, orientation)?;
    let pc = cj.predicted_connection();

    let ell_hat = predicted_supporting_form(&sc, &md);
    let g_hat = predicted_metric(&sc, &md);
    let h_hat = predicted_angular(&sc, &md);
    let t_hat = cj.predicted_cartan()?;
    let base_spray = vals(&cj.spray);
    let spray_hat = predicted_spray(&sc, &base_spray, &s.y);

    let mut out = vec![
        cmp("supporting_form", ell_hat.clone(), mh.ell.clone()),
        cmp("angular_metric", h_hat.data.clone(), mh.hbar.data.clone()),
        cmp("metric_tensor", g_hat.data.clone(), mh.g.data.clone()),
        cmp("cartan_torsion", t_hat.data.clone(), mh.cartan.data.clone()),
        cmp("geodesic_spray", spray_hat, ch.spray.clone()),
        cmp("nonlinear_connection", pc.nonlinear.data.clone(), ch.nonlinear.data.clone()),
        cmp("berwald_coefficients", pc.berwald.data.clone(), ch.berwald.data.clone()),
        cmp("barthel_curvature", pc.curvature.data.clone(), ch.curvature.data.clone()),
    ];

    let ly: f64 = ell_hat.iter().zip(&s.y).map(|(a, b)| a * b).sum();
    out.push(cmp("hat_supporting_normalization", vec![ly], vec![sc.f_hat]));
    out.push(cmp(
        "hat_metric_normalization",
        vec![g_hat.bilinear(&s.y, &s.y)],
        vec![sc.f_hat * sc.f_hat],
    ));
    let split: Vec<f64> = (0..n * n)
        .map(|k| h_hat.data[k] + ell_hat[k / n] * ell_hat[k % n])
        .collect();
    out.push(cmp("hat_metric_split", g_hat.data.clone(), split));
    out.push(cmp("hat_angular_annihilates_y", h_hat.apply(&s.y), vec![0.0; n]));
    let mut sym_p = Vec::new();
    let mut sym_d = Vec::new();
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for (a, b, c) in [(j, i, k), (i, k, j), (k, j, i), (j, k, i), (k, i, j)] {
                    sym_p.push(t_hat.get(i, j, k));
                    sym_d.push(t_hat.get(a, b, c));
                }
            }
        }
    }
    out.push(cmp("hat_torsion_symmetry", sym_p, sym_d));
    out.push(cmp(
        "hat_connection_from_spray",
        pc.nonlinear.data.clone(),
        pc.nonlinear_from_spray.data.clone(),
    ));

    // The vertical derivative of an x-field is ∂/∂y for both metrics.
    let (xs, _) = lift(&s.x, &s.y, 1);
    let through_hat = hat.effective_field(&xs)?;
    let through_base: Vec<Jet<f64>> = field.eval(&xs)?.into_iter().map(|v| v * orientation.sign()).collect();
    let dv = |v: &[Jet<f64>]| -> Vec<f64> { (0..n * n).map(|k| v[k / n].deriv(&[n + k % n])).collect() };
    out.push(cmp("vertical_derivative_invariance", dv(&through_hat), dv(&through_base)));
    Ok(out)
}
