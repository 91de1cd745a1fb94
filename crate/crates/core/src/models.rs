//! The two shipped models, closed forms for the three-dimensional example
//! and the reference fixtures stored under `fixtures/`.

use serde::{Deserialize, Serialize};

use crate::connections::{cartan_hcoeffs, spray};
use crate::expr::ModelDef;
use crate::matsumoto::{change_scalars, Orientation};
use crate::metric::{metric_data, Structure};
use crate::numkit::Mat;
use crate::{Error, Result};

pub const MATSUMOTO_EXAMPLE: &str = include_str!("../../../models/matsumoto_example.fmod");
pub const EUCLID_CONCURRENT: &str = include_str!("../../../models/euclid_concurrent.fmod");

const EXAMPLE_FIXTURES: &str = include_str!("../../../fixtures/matsumoto_example.tsv");
const EUCLID_FIXTURES: &str = include_str!("../../../fixtures/euclid_concurrent.tsv");

/// The canonical fixture point of the example, (x, y).
pub const P0: ([f64; 3], [f64; 3]) = ([1.0, 0.0, 1.0], [1.0, 1.0, 1.0]);

pub fn builtin_models() -> Vec<ModelDef> {
    [MATSUMOTO_EXAMPLE, EUCLID_CONCURRENT]
        .iter()
        .map(|src| ModelDef::parse(src).expect("shipped model parses"))
        .collect()
}

pub fn builtin(name: &str) -> Option<ModelDef> {
    builtin_models().into_iter().find(|m| m.name == name)
}

/// Closed forms of the example F = sqrt(x3²((x1²y2² + 2y1y2)/y1)² + y3²).
pub mod example {
    use crate::numkit::Mat;

    fn d(x1: f64, y1: f64, y2: f64) -> f64 {
        let a = x1 * x1;
        a.powi(3) * y2.powi(3) + 6.0 * a * a * y1 * y2 * y2 + 12.0 * a * y1 * y1 * y2 + 8.0 * y1.powi(3)
    }

    pub fn metric(x: &[f64], y: &[f64]) -> Mat {
        let (x1, x3, y1, y2) = (x[0], x[2], y[0], y[1]);
        let (a, c) = (x1 * x1, x3 * x3);
        let mut g = Mat::zeros(3);
        g.set(0, 0, c * a * y2.powi(3) * (3.0 * a * y2 + 4.0 * y1) / y1.powi(4));
        let g12 = -2.0 * a * c * y2 * y2 * (2.0 * a * y2 + 3.0 * y1) / y1.powi(3);
        g.set(0, 1, g12);
        g.set(1, 0, g12);
        g.set(1, 1, 2.0 * c * (3.0 * a * a * y2 * y2 + 6.0 * a * y1 * y2 + 2.0 * y1 * y1) / (y1 * y1));
        g.set(2, 2, 1.0);
        g
    }

    pub fn inverse_metric(x: &[f64], y: &[f64]) -> Mat {
        let (x1, x3, y1, y2) = (x[0], x[2], y[0], y[1]);
        let (a, c, dd) = (x1 * x1, x3 * x3, d(x1, y1, y2));
        let mut h = Mat::zeros(3);
        h.set(0, 0, (3.0 * a * a * y2 * y2 + 6.0 * a * y1 * y2 + 2.0 * y1 * y1) * y1.powi(4) / (c * a * y2.powi(3) * dd));
        let h12 = (2.0 * a * y2 + 3.0 * y1) * y1.powi(3) / (c * y2 * dd);
        h.set(0, 1, h12);
        h.set(1, 0, h12);
        h.set(1, 1, 0.5 * (3.0 * a * y2 + 4.0 * y1) * y1 * y1 / (c * dd));
        h.set(2, 2, 1.0);
        h
    }

    /// (C₁₁₁, C₁₁₂, C₁₂₂, C₂₂₂); every other component not obtained from
    /// these by symmetry vanishes.
    pub fn cartan(x: &[f64], y: &[f64]) -> [f64; 4] {
        let (x1, x3, y1, y2) = (x[0], x[2], y[0], y[1]);
        let k = 6.0 * x1 * x1 * x3 * x3 * (x1 * x1 * y2 + y1);
        [-k * y2.powi(3) / y1.powi(5), k * y2 * y2 / y1.powi(4), -k * y2 / y1.powi(3), k / (y1 * y1)]
    }

    pub fn spray(x: &[f64], y: &[f64]) -> [f64; 3] {
        let (x1, x3, y1, y2, y3) = (x[0], x[2], y[0], y[1], y[2]);
        let a = x1 * x1;
        [
            (x1 * y3 - x3 * y1) * y1 / (x1 * x3),
            y2 * y3 / x3,
            -x3 * y2 * y2 * (a * a * y2 * y2 + 4.0 * a * y1 * y2 + 4.0 * y1 * y1) / (2.0 * y1 * y1),
        ]
    }

    /// (Γ¹₁₃, Γ²₂₃, Γ³₃₃).
    pub fn cartan_connection(x: &[f64], _y: &[f64]) -> [f64; 3] {
        [1.0 / x[2], 1.0 / x[2], 0.0]
    }

    /// g = θ·a with θ = (x3/y1)².
    pub fn decomposition(x: &[f64], y: &[f64]) -> (f64, Mat) {
        let (x1, x3, y1, y2) = (x[0], x[2], y[0], y[1]);
        let a = x1 * x1;
        let mut m = Mat::zeros(3);
        m.set(0, 0, a * y2.powi(3) * (3.0 * a * y2 + 4.0 * y1) / (y1 * y1));
        let a12 = -2.0 * a * y2 * y2 * (2.0 * a * y2 + 3.0 * y1) / y1;
        m.set(0, 1, a12);
        m.set(1, 0, a12);
        m.set(1, 1, 2.0 * (3.0 * a * a * y2 * y2 + 6.0 * a * y1 * y2 + 2.0 * y1 * y1));
        m.set(2, 2, (y1 / x3).powi(2));
        ((x3 / y1).powi(2), m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureKind {
    /// A closed-form value evaluated at the point.
    ClosedForm,
    /// A component that vanishes for structural reasons.
    Structural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFixture {
    pub model: String,
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub value: f64,
    pub tolerance: f64,
    pub kind: FixtureKind,
}

impl ReferenceFixture {
    /// Relative error of `computed`, scaled as |c − v| / max(1, |v|).
    pub fn error(&self, computed: f64) -> f64 {
        (computed - self.value).abs() / self.value.abs().max(1.0)
    }
}

fn parse_table(model: &str, text: &str) -> Result<Vec<ReferenceFixture>> {
    let reals = |s: &str| -> Result<Vec<f64>> {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| Error::Validation(format!("fixture value `{t}`: {e}"))))
            .collect()
    };
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#')) {
        let cols: Vec<&str> = line.split('\t').collect();
        let [name, x, y, value, tol, kind] = cols[..] else {
            return Err(Error::Validation(format!("fixture row has {} columns: {line}", cols.len())));
        };
        out.push(ReferenceFixture {
            model: model.to_string(),
            name: name.to_string(),
            x: reals(x)?,
            y: reals(y)?,
            value: reals(value)?[0],
            tolerance: reals(tol)?[0],
            kind: match kind {
                "closed_form" => FixtureKind::ClosedForm,
                "structural" => FixtureKind::Structural,
                other => return Err(Error::Validation(format!("unknown fixture kind `{other}`"))),
            },
        });
    }
    Ok(out)
}

pub fn fixtures() -> Vec<ReferenceFixture> {
    let mut all = parse_table("matsumoto_example", EXAMPLE_FIXTURES).expect("shipped fixtures parse");
    all.extend(parse_table("euclid_concurrent", EUCLID_FIXTURES).expect("shipped fixtures parse"));
    all
}

fn digits(s: &str) -> Result<Vec<usize>> {
    s.chars()
        .map(|c| {
            c.to_digit(10)
                .filter(|d| *d >= 1)
                .map(|d| d as usize - 1)
                .ok_or_else(|| Error::Validation(format!("bad component index `{s}`")))
        })
        .collect()
}

/// The engine's value for a fixture component name such as `g_12`,
/// `ginv_33`, `C_111`, `G_3`, `Gamma_1_13`, `margin[+1]` or `a_12`.
/// Change scalars without a bracketed orientation use +1.
pub fn engine_value(model: &ModelDef, name: &str, x: &[f64], y: &[f64]) -> Result<f64> {
    let s = model.sample(x, y);
    s.require_admissible()?;
    let (base, orientation) = match name.split_once('[') {
        Some((b, o)) => (b, o.trim_end_matches(']').parse::<Orientation>()?),
        None => (name, Orientation::Plus),
    };
    let (head, idx) = match base.split_once('_') {
        Some((h, i)) => (h, i),
        None => (base, ""),
    };
    let md = || metric_data(model, &s);
    let sc = || change_scalars(model, model, &s, orientation);
    Ok(match head {
        "F2" => md()?.f.powi(2),
        "Phi" | "p2" => {
            let md = md()?;
            let phi: Vec<f64> = model.phi_at(x)?.into_iter().map(|v| v * orientation.sign()).collect();
            let other = if head == "Phi" { y.to_vec() } else { phi.clone() };
            md.g.bilinear(&phi, &other)
        }
        "margin" => sc()?.margin,
        "f1" => sc()?.f1,
        "f2" => sc()?.f2,
        "Fhat" => sc()?.f_hat,
        "g" => {
            let i = digits(idx)?;
            md()?.g.get(i[0], i[1])
        }
        "ginv" => {
            let i = digits(idx)?;
            md()?.ginv.get(i[0], i[1])
        }
        "C" => {
            let i = digits(idx)?;
            md()?.cartan.get(i[0], i[1], i[2])
        }
        "G" => spray(model, &s)?[digits(idx)?[0]],
        "Gamma" => {
            let (i, jk) = idx.split_once('_').ok_or_else(|| Error::Validation(format!("bad name `{name}`")))?;
            let (i, jk) = (digits(i)?, digits(jk)?);
            cartan_hcoeffs(model, &s)?.get(i[0], jk[0], jk[1])
        }
        "theta" if model.dim == 3 => example::decomposition(x, y).0,
        "a" if model.dim == 3 => {
            let i = digits(idx)?;
            example::decomposition(x, y).1.get(i[0], i[1])
        }
        _ => return Err(Error::Validation(format!("unknown fixture component `{name}`"))),
    })
}

/// The example's g at P0 from its closed form.
pub fn example_metric_at_p0() -> Mat {
    example::metric(&P0.0, &P0.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::concurrency_probe;
    use crate::metric::homogeneity_report;

    #[test]
    fn shipped_models_parse_and_are_homogeneous() {
        let models = builtin_models();
        assert_eq!(models.len(), 2);
        for m in &models {
            let s = if m.dim == 3 {
                m.sample(&P0.0, &P0.1)
            } else {
                m.sample(&[0.3, -0.2], &[0.7, 1.1])
            };
            assert!(homogeneity_report(m, &s).unwrap().max_residual() < 1e-9);
        }
    }

    #[test]
    fn every_fixture_reproduced() {
        let fx = fixtures();
        assert!(fx.len() > 200);
        for f in &fx {
            let m = builtin(&f.model).unwrap();
            let v = engine_value(&m, &f.name, &f.x, &f.y).unwrap();
            assert!(f.error(v) <= f.tolerance, "{} {} at {:?} {:?}: {v} vs {}", f.model, f.name, f.x, f.y, f.value);
        }
    }

    #[test]
    fn fixtures_cover_three_points_and_x2_independence() {
        let fx = fixtures();
        let mut points: Vec<(Vec<f64>, Vec<f64>)> = fx
            .iter()
            .filter(|f| f.model == "matsumoto_example" && f.name == "g_11")
            .map(|f| (f.x.clone(), f.y.clone()))
            .collect();
        points.dedup();
        assert!(points.len() >= 3);
        assert!(points.iter().any(|p| p.0[1] == 7.0));
        let at = |x2: f64| {
            fx.iter()
                .filter(|f| f.model == "matsumoto_example" && f.x == [1.0, x2, 1.0] && f.y == [1.0, 1.0, 1.0])
                .map(|f| (f.name.clone(), f.value))
                .collect::<Vec<_>>()
        };
        assert_eq!(at(0.0), at(7.0));
    }

    #[test]
    fn p0_values() {
        let g = example_metric_at_p0();
        assert_eq!((g.get(0, 0), g.get(0, 1), g.get(1, 1), g.get(2, 2)), (7.0, -10.0, 22.0, 1.0));
        assert!((example::inverse_metric(&P0.0, &P0.1).get(1, 1) - 3.5 / 27.0).abs() < 1e-15);
        assert_eq!(example::cartan(&P0.0, &P0.1)[3], 12.0);
        assert_eq!(example::spray(&P0.0, &P0.1), [0.0, 1.0, -4.5]);
        let (theta, a) = example::decomposition(&P0.0, &P0.1);
        assert_eq!((theta, a.get(0, 0), a.get(2, 2)), (1.0, 7.0, 1.0));
    }

    #[test]
    fn closed_forms_are_mutually_inverse() {
        let (x, y) = ([0.7, 3.0, -1.3], [1.4, -0.6, 0.9]);
        let p = example::metric(&x, &y).mul(&example::inverse_metric(&x, &y));
        for i in 0..3 {
            for j in 0..3 {
                assert!((p.get(i, j) - f64::from(i == j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn probe_signs() {
        let ex = builtin("matsumoto_example").unwrap();
        let eu = builtin("euclid_concurrent").unwrap();
        let b1 = vec![ex.sample(&P0.0, &P0.1), ex.sample(&[1.5, 7.0, 0.8], &[0.7, 1.3, -0.4])];
        let r = concurrency_probe(&ex, &ex, &b1).unwrap();
        assert_eq!(r.sigma, 1.0);
        assert!(r.residual <= 1e-8);
        let b2 = vec![eu.sample(&[0.8, 0.0], &[1.0, 0.0]), eu.sample(&[0.3, -0.5], &[-0.6, 1.4])];
        let r = concurrency_probe(&eu, &eu, &b2).unwrap();
        assert_eq!(r.sigma, -1.0);
        assert!(r.residual <= 1e-12);
    }

    #[test]
    fn malformed_fixture_rows_rejected() {
        assert!(parse_table("m", "g_11\t1,2\t3\n").is_err());
        assert!(parse_table("m", "g_11\t1\t1\tx\t1e-8\tclosed_form\n").is_err());
        assert!(parse_table("m", "g_11\t1\t1\t1\t1e-8\tguess\n").is_err());
    }
}
