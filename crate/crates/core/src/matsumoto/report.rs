//! The verification report: one entry per identity and orientation, each
//! keeping the predicted/direct pair at its worst sample so the residual
//! can be recomputed from the report alone.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{Comparison, Orientation};
use crate::numkit::rel_residual;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentityKind {
    /// Passes when the residual is at most the tolerance.
    Match,
    /// Passes when the value strictly exceeds the tolerance.
    Floor,
    /// Reported only.
    Info,
}

#[derive(Debug, Clone, Copy)]
pub struct IdentitySpec {
    pub name: &'static str,
    pub suite: &'static str,
    pub anchor: &'static str,
    pub tolerance: f64,
    pub kind: IdentityKind,
}

macro_rules! ids {
    ($( $name:literal, $suite:literal, $anchor:literal, $tol:expr, $kind:ident; )*) => {
        &[$( IdentitySpec { name: $name, suite: $suite, anchor: $anchor, tolerance: $tol, kind: IdentityKind::$kind } ),*]
    };
}

pub const IDENTITIES: &[IdentitySpec] = ids![
    "homogeneity", "metric", "F(x,λy) = λF, g(x,λy) = g, λC(x,λy) = C", 1e-9, Match;
    "inverse_metric", "metric", "g_ij g^jk = δ_i^k", 1e-9, Match;
    "supporting_form_two_routes", "metric", "∂F/∂y^i = g_ij y^j / F", 1e-10, Match;
    "supporting_form_normalization", "metric", "ℓ_i y^i = F", 1e-10, Match;
    "angular_annihilates_y", "metric", "ħ_ij y^j = 0", 1e-9, Match;
    "cartan_annihilates_y", "metric", "C_ijk y^k = 0", 1e-9, Match;
    "cartan_symmetry", "metric", "C_ijk totally symmetric", 1e-10, Match;
    "spray_linear_system", "connections", "g_il 2G^l = ½(y^k ∂²F²/∂y^i∂x^k − ∂F²/∂x^i)", 1e-9, Match;
    "spray_homogeneity", "connections", "N^i_j y^j = 2G^i", 1e-9, Match;
    "berwald_homogeneity", "connections", "G^i_jk y^k = N^i_j", 1e-9, Match;
    "spray_degree_two", "connections", "G^i(x,2y) = 4G^i(x,y)", 1e-9, Match;
    "berwald_symmetry", "connections", "G^i_jk = G^i_kj", 1e-10, Match;
    "curvature_antisymmetry", "connections", "R^i_jk = −R^i_kj", 1e-10, Match;
    "cartan_metric_compatibility", "connections", "δ_k g_ij − Γ^l_ik g_lj − Γ^l_jk g_il = 0", 1e-8, Match;
    "concurrency_horizontal", "concurrency", "φ^i_|j = σ δ^i_j, σ = ±1", 1e-8, Match;
    "concurrency_vertical", "concurrency", "φ^k C_kij = 0", 1e-10, Match;
    "closed_form_metric", "closed_form", "g_ij closed form", 1e-8, Match;
    "closed_form_inverse", "closed_form", "g^ij closed form", 1e-8, Match;
    "closed_form_cartan", "closed_form", "C_ijk closed form", 1e-8, Match;
    "closed_form_spray", "closed_form", "G^i closed form", 1e-8, Match;
    "closed_form_cartan_connection", "closed_form", "Γ^1_13 = Γ^2_23 = 1/x3, Γ^3_33 = 0", 1e-8, Match;
    "jet_vs_fd", "numerics", "jet derivatives of F up to order 3 = central differences", 1e-5, Match;
    "geodesic_drift_base", "numerics", "F constant along geodesics of G", 1e-6, Match;
    "geodesic_drift_hat", "numerics", "F̂ constant along geodesics of Ĝ", 1e-6, Match;
    "phi_vertical_derivative", "lemma", "∂Φ/∂y^j = φ_j", 1e-8, Match;
    "phi_horizontal_derivative", "lemma", "δ_jΦ = −F ℓ_j", 1e-8, Match;
    "phi_along_spray", "lemma", "y^j ∂Φ/∂x^j − 2G^j ∂Φ/∂y^j = −F²", 1e-8, Match;
    "finsler_horizontal_derivative", "lemma", "δ_jF = 0", 1e-8, Match;
    "supporting_form_vertical_derivative", "lemma", "F ∂ℓ_i/∂y^j = ħ_ij", 1e-8, Match;
    "p2_vertical_derivative", "lemma", "∂p²/∂y^k = 0", 1e-8, Match;
    "chain_rule_f1", "lemma", "∂f₁/∂y^j = (∂f₁/∂F)ℓ_j + (∂f₁/∂Φ)φ_j", 1e-8, Match;
    "chain_rule_f2", "lemma", "∂f₂/∂y^j = (∂f₂/∂F)ℓ_j + (∂f₂/∂Φ)φ_j", 1e-8, Match;
    "supporting_form_along_field", "lemma", "ℓ_i φ^i = Φ/F", 1e-8, Match;
    "phi_two_routes", "lemma", "Φ = φ_i y^i = ½φ^i ∂F²/∂y^i, p² = φ_iφ^i = g(φ,φ)", 1e-8, Match;
    "supporting_form", "change", "ℓ̂_i = F(F−2Φ)/(F−Φ)² ℓ_i + F²/(F−Φ)² φ_i", 1e-6, Match;
    "angular_metric", "change", "ħ̂ = F²(F−2Φ)/(F−Φ)³ ħ + [2F⁴φφ + 2Φ²F²ℓℓ − 2ΦF³(φℓ+ℓφ)]/(F−Φ)⁴", 1e-6, Match;
    "metric_tensor", "change", "ĝ = F²(F−2Φ)/(F−Φ)³ g + [3F⁴φφ + F²Φ(4Φ−F)ℓℓ + F³(F−4Φ)(φℓ+ℓφ)]/(F−Φ)⁴", 1e-6, Match;
    "cartan_torsion", "change", "T̂_ijk = ½ ∂ĝ_ij/∂y^k", 1e-6, Match;
    "geodesic_spray", "change", "Ĝ^i = G^i + ½f₁y^i − ½f₂φ^i", 1e-6, Match;
    "nonlinear_connection", "change", "N̂^i_j = N^i_j + ½(f₁δ^i_j + ∂_jf₁ y^i − ∂_jf₂ φ^i)", 1e-6, Match;
    "berwald_coefficients", "change", "Ĝ^i_jk = ∂N̂^i_j/∂y^k", 1e-6, Match;
    "barthel_curvature", "change", "R̂ from N̂ = R computed from F̂", 1e-6, Match;
    "hat_supporting_normalization", "change", "ℓ̂_i y^i = F̂", 1e-8, Match;
    "hat_metric_normalization", "change", "ĝ_ij y^i y^j = F̂²", 1e-8, Match;
    "hat_metric_split", "change", "ĝ = ħ̂ + ℓ̂⊗ℓ̂", 1e-10, Match;
    "hat_angular_annihilates_y", "change", "ħ̂_ij y^j = 0", 1e-9, Match;
    "hat_torsion_symmetry", "change", "T̂_ijk totally symmetric", 1e-9, Match;
    "hat_connection_from_spray", "change", "N̂^i_j = ∂Ĝ^i/∂y^j", 1e-9, Match;
    "vertical_derivative_invariance", "change", "vertical derivative of x-fields is ∂/∂y for F and F̂", 1e-12, Match;
    "nondegeneracy_scan", "scan", "|margin| > 0.1F ⇒ |det ĝ| ≥ 1e-10·scale", 0.0, Match;
    "degeneracy_ray", "scan", "|det ĝ| at margin 1e-6 / at margin 0.5 ≤ 1e-3", 1e-3, Match;
    "degeneracy_ray_monotone", "scan", "|det ĝ| strictly decreasing for margin 1e-5 → 1e-6", 0.0, Match;
    "degeneracy_ray_neighbourhood", "scan", "|det ĝ(θ*±1e-4)| / |det ĝ(θ*±0.3)|", 1e-3, Info;
    "degeneracy_off_margin", "scan", "|det ĝ|/scale where F = 2Φ and |margin| > 0.1F", 0.0, Info;
    "projective_separation", "scan", "g-orthogonal part of Ĝ − G over ‖Ĝ − G‖ > 1e-8 where φ ∦ y", 1e-8, Floor;
    "concurrency_obstruction", "scan", "max ‖O‖, O^i_j = [∂_jf₁ − φ^k∂_k∂_jf₂]φ^i − φ^k∂_kf₁ δ^i_j + φ^k∂_k∂_jf₁ y^i", 1e-8, Floor;
    "concurrency_obstruction_fd", "scan", "∂²f₂/∂y∂y jets = central differences", 1e-4, Match;
    "rational_decomposition_base", "rational", "g_ij = θ a_ij, θ = (x3/y1)²", 1e-9, Match;
    "rational_decomposition_hat", "rational", "ĝ_ij = θ̂ â_ij, θ̂ = F²/(F−Φ)⁴", 1e-9, Match;
];

/// Non-finite residuals are stored as `f64::MAX` so reports stay valid JSON.
fn stored(r: f64) -> f64 {
    if r.is_finite() {
        r
    } else {
        f64::MAX
    }
}

pub fn spec(name: &str) -> &'static IdentitySpec {
    IDENTITIES
        .iter()
        .find(|s| s.name == name)
        .unwrap_or_else(|| panic!("identity `{name}` is not registered"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityEntry {
    pub name: String,
    pub suite: String,
    pub anchor: String,
    pub orientation: Option<Orientation>,
    pub kind: IdentityKind,
    pub tolerance: f64,
    pub residual: f64,
    pub passed: bool,
    pub samples_used: usize,
    pub worst_sample: Option<usize>,
    pub predicted: Vec<f64>,
    pub direct: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl IdentityEntry {
    fn from_spec(spec: &IdentitySpec, orientation: Option<Orientation>) -> Self {
        IdentityEntry {
            name: spec.name.to_string(),
            suite: spec.suite.to_string(),
            anchor: spec.anchor.to_string(),
            orientation,
            kind: spec.kind,
            tolerance: spec.tolerance,
            residual: 0.0,
            passed: false,
            samples_used: 0,
            worst_sample: None,
            predicted: Vec::new(),
            direct: Vec::new(),
            note: None,
        }
    }

    /// Max relative residual over samples; keeps the worst pair.
    pub fn aggregate<'a>(
        name: &str,
        orientation: Option<Orientation>,
        per_sample: impl IntoIterator<Item = (usize, &'a Comparison)>,
    ) -> Self {
        let mut e = Self::from_spec(spec(name), orientation);
        for (idx, c) in per_sample {
            let r = stored(rel_residual(&c.predicted, &c.direct));
            if e.worst_sample.is_none() || r > e.residual {
                e.residual = r;
                e.worst_sample = Some(idx);
                e.predicted = c.predicted.clone();
                e.direct = c.direct.clone();
            }
            e.samples_used += 1;
        }
        if e.worst_sample.is_none() {
            e.residual = f64::MAX;
            e.note = Some("no usable samples".into());
        }
        e.passed = e.evaluate();
        e
    }

    /// A single measured value for floor and info entries.
    pub fn value(name: &str, orientation: Option<Orientation>, value: f64, samples_used: usize, worst_sample: Option<usize>) -> Self {
        let mut e = Self::from_spec(spec(name), orientation);
        e.residual = stored(value);
        e.predicted = vec![e.residual];
        e.samples_used = samples_used;
        e.worst_sample = worst_sample;
        e.passed = e.evaluate();
        e
    }

    /// An entry that could not be evaluated.
    pub fn unavailable(name: &str, orientation: Option<Orientation>, why: impl Into<String>) -> Self {
        let mut e = Self::from_spec(spec(name), orientation);
        e.residual = f64::MAX;
        e.note = Some(why.into());
        e.passed = e.kind == IdentityKind::Info;
        e
    }

    /// An entry that does not apply to this model; reported, never gating.
    pub fn not_applicable(name: &str, orientation: Option<Orientation>, why: impl Into<String>) -> Self {
        let mut e = Self::from_spec(spec(name), orientation);
        e.kind = IdentityKind::Info;
        e.note = Some(why.into());
        e.passed = true;
        e
    }

    /// Replaces the tolerance and re-evaluates the outcome.
    pub fn set_tolerance(&mut self, tolerance: f64) {
        self.tolerance = tolerance;
        self.passed = self.evaluate();
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    fn evaluate(&self) -> bool {
        match self.kind {
            IdentityKind::Match => self.residual <= self.tolerance,
            IdentityKind::Floor => self.residual > self.tolerance,
            IdentityKind::Info => true,
        }
    }

    /// Recomputes the residual from the stored pair.
    pub fn audit(&self) -> bool {
        if self.predicted.is_empty() {
            return self.note.is_some();
        }
        let r = if self.direct.is_empty() {
            self.predicted[0]
        } else {
            stored(rel_residual(&self.predicted, &self.direct))
        };
        r == self.residual && self.evaluate() == self.passed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeReport {
    pub model: String,
    /// Orientation used for gating the change-level suites.
    pub orientation: Orientation,
    pub orientation_mode: String,
    /// Summed change and lemma residuals per orientation, used for selection.
    pub orientation_scores: Vec<(Orientation, f64)>,
    pub seed: u64,
    pub n_samples: usize,
    pub rejected_samples: usize,
    pub sampling_box: (f64, f64),
    pub identities: Vec<IdentityEntry>,
    pub notes: Vec<String>,
}

impl ChangeReport {
    /// Entries that decide the exit status: everything not tied to an
    /// orientation plus the selected orientation's entries.
    pub fn gating(&self) -> impl Iterator<Item = &IdentityEntry> {
        self.identities
            .iter()
            .filter(move |e| e.orientation.is_none_or(|o| o == self.orientation))
    }

    pub fn passed(&self) -> bool {
        self.gating().all(|e| e.passed)
    }

    pub fn failures(&self) -> Vec<&IdentityEntry> {
        self.gating().filter(|e| !e.passed).collect()
    }

    pub fn audit(&self) -> bool {
        self.identities.iter().all(IdentityEntry::audit)
    }

    pub fn find(&self, name: &str, orientation: Option<Orientation>) -> Option<&IdentityEntry> {
        self.identities
            .iter()
            .find(|e| e.name == name && (orientation.is_none() || e.orientation == orientation))
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "model {}  orientation {} ({})  samples {}  seed {}",
            self.model, self.orientation, self.orientation_mode, self.n_samples, self.seed
        );
        for (o, s) in &self.orientation_scores {
            let _ = writeln!(out, "  score {o}: {s:.3e}");
        }
        let _ = writeln!(out, "{:<12} {:<38} {:>4} {:>12} {:>10}  status", "suite", "identity", "ori", "residual", "tol");
        for e in &self.identities {
            let status = match (e.kind, e.passed) {
                (IdentityKind::Info, _) => "info",
                (_, true) => "ok",
                (_, false) if e.orientation.is_some_and(|o| o != self.orientation) => "FAIL*",
                (_, false) => "FAIL",
            };
            let ori = e.orientation.map_or("".to_string(), |o| o.to_string());
            let _ = writeln!(
                out,
                "{:<12} {:<38} {:>4} {:>12.3e} {:>10.1e}  {status}",
                e.suite, e.name, ori, e.residual, e.tolerance
            );
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        let _ = writeln!(out, "result: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        for (i, a) in IDENTITIES.iter().enumerate() {
            assert!(IDENTITIES[i + 1..].iter().all(|b| b.name != a.name), "{}", a.name);
        }
    }

    #[test]
    fn aggregate_keeps_worst_pair_and_audits() {
        let a = Comparison {
            name: "metric_tensor",
            predicted: vec![1.0, 2.0],
            direct: vec![1.0, 2.0 + 1e-9],
        };
        let b = Comparison {
            name: "metric_tensor",
            predicted: vec![5.0],
            direct: vec![5.0 + 1e-5],
        };
        let e = IdentityEntry::aggregate("metric_tensor", Some(Orientation::Plus), [(0, &a), (1, &b)]);
        assert_eq!(e.worst_sample, Some(1));
        assert!(!e.passed);
        assert!(e.audit());
        let mut forged = e.clone();
        forged.residual = 0.0;
        assert!(!forged.audit());
    }

    #[test]
    fn floor_entries() {
        let e = IdentityEntry::value("concurrency_obstruction", None, 0.3, 10, Some(2));
        assert!(e.passed && e.audit());
        let e = IdentityEntry::value("concurrency_obstruction", None, 0.0, 10, None);
        assert!(!e.passed);
    }
}
