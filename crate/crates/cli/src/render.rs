//! Text, JSON and CSV renderings of reports.

use std::fmt::Write as _;

use finslerlab_core::connections::{ConnectionData, Trajectory};
use finslerlab_core::matsumoto::{ChangeReport, ChangeScalars, Orientation};
use finslerlab_core::metric::{MetricData, TangentSample};
use finslerlab_core::{Error, ModelDef, Result};
use serde::Serialize;

pub fn to_json<T: Serialize + ?Sized>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

pub fn report_json(r: &ChangeReport) -> String {
    to_json(r)
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Io(format!("csv: {e}"))
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(csv_error)?;
    String::from_utf8(bytes).map_err(csv_error)
}

pub fn report_csv(r: &ChangeReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["suite", "identity", "orientation", "kind", "residual", "tolerance", "passed", "samples", "worst_sample", "anchor"])
        .map_err(csv_error)?;
    for e in &r.identities {
        w.write_record([
            e.suite.clone(),
            e.name.clone(),
            e.orientation.map(|o| o.to_string()).unwrap_or_default(),
            format!("{:?}", e.kind).to_lowercase(),
            format!("{:e}", e.residual),
            format!("{:e}", e.tolerance),
            e.passed.to_string(),
            e.samples_used.to_string(),
            e.worst_sample.map(|i| i.to_string()).unwrap_or_default(),
            e.anchor.clone(),
        ])
        .map_err(csv_error)?;
    }
    finish(w)
}

pub fn trajectory_csv(t: &Trajectory) -> Result<String> {
    let n = t.points.first().map_or(0, |p| p.x.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("y{i}")));
    header.push("F".into());
    w.write_record(&header).map_err(csv_error)?;
    for p in &t.points {
        let mut row = vec![p.t.to_string()];
        row.extend(p.x.iter().map(f64::to_string));
        row.extend(p.y.iter().map(f64::to_string));
        row.push(p.f.to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    finish(w)
}

#[derive(Serialize)]
struct ChangeView<'a> {
    orientation: Orientation,
    #[serde(skip_serializing_if = "Option::is_none")]
    scalars: Option<&'a ChangeScalars>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct InspectView<'a> {
    model: &'a str,
    x: &'a [f64],
    y: &'a [f64],
    metric: &'a MetricData,
    connection: &'a ConnectionData,
    change: Vec<ChangeView<'a>>,
}

type Change = (Orientation, Result<ChangeScalars>);

fn change_views(change: &[Change]) -> Vec<ChangeView<'_>> {
    change
        .iter()
        .map(|(o, r)| ChangeView {
            orientation: *o,
            scalars: r.as_ref().ok(),
            error: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect()
}

pub fn inspect_json(model: &ModelDef, s: &TangentSample, md: &MetricData, cd: &ConnectionData, change: &[Change]) -> String {
    to_json(&InspectView {
        model: &model.name,
        x: &s.x,
        y: &s.y,
        metric: md,
        connection: cd,
        change: change_views(change),
    })
}

/// `(name, value)` rows shared by the table and CSV forms.
fn inspect_rows(md: &MetricData, cd: &ConnectionData, change: &[Change]) -> Vec<(String, f64)> {
    let n = md.g.n;
    let mut rows = vec![("F".to_string(), md.f), ("E".to_string(), md.e), ("det_g".to_string(), md.det)];
    let pairs = || (0..n).flat_map(move |i| (i..n).map(move |j| (i, j)));
    rows.extend(pairs().map(|(i, j)| (format!("g_{}{}", i + 1, j + 1), md.g.get(i, j))));
    rows.extend(pairs().map(|(i, j)| (format!("ginv_{}{}", i + 1, j + 1), md.ginv.get(i, j))));
    rows.extend((0..n).map(|i| (format!("ell_{}", i + 1), md.ell[i])));
    rows.extend(pairs().map(|(i, j)| (format!("hbar_{}{}", i + 1, j + 1), md.hbar.get(i, j))));
    for i in 0..n {
        for j in i..n {
            for k in j..n {
                rows.push((format!("C_{}{}{}", i + 1, j + 1, k + 1), md.cartan.get(i, j, k)));
            }
        }
    }
    rows.extend((0..n).map(|i| (format!("G_{}", i + 1), cd.spray[i])));
    for i in 0..n {
        for j in 0..n {
            rows.push((format!("N_{}_{}", i + 1, j + 1), cd.nonlinear.get(i, j)));
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                rows.push((format!("Berwald_{}_{}{}", i + 1, j + 1, k + 1), cd.berwald.get(i, j, k)));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in j + 1..n {
                rows.push((format!("R_{}_{}{}", i + 1, j + 1, k + 1), cd.curvature.get(i, j, k)));
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                rows.push((format!("Gamma_{}_{}{}", i + 1, j + 1, k + 1), cd.cartan_gamma.get(i, j, k)));
            }
        }
    }
    for (o, r) in change {
        if let Ok(sc) = r {
            for (name, v) in [
                ("Phi", sc.phi_cap),
                ("p2", sc.p2),
                ("margin", sc.margin),
                ("f1", sc.f1),
                ("f2", sc.f2),
                ("Fhat", sc.f_hat),
            ] {
                rows.push((format!("{name}[{o}]"), v));
            }
        }
    }
    rows
}

pub fn inspect_table(model: &ModelDef, s: &TangentSample, md: &MetricData, cd: &ConnectionData, change: &[Change]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "model {}  x = {:?}  y = {:?}", model.name, s.x, s.y);
    let _ = writeln!(
        out,
        "signature (+{}, -{}, 0:{})  condition {:.3e}",
        md.signature.positive, md.signature.negative, md.signature.zero, md.condition
    );
    for (name, v) in inspect_rows(md, cd, change) {
        let _ = writeln!(out, "{name:<16} = {v}");
    }
    for (o, r) in change {
        if let Err(e) = r {
            let _ = writeln!(out, "change[{o}]: {e}");
        }
    }
    out
}

pub fn inspect_csv(md: &MetricData, cd: &ConnectionData, change: &[Change]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "value"]).map_err(csv_error)?;
    for (name, v) in inspect_rows(md, cd, change) {
        w.write_record([name, v.to_string()]).map_err(csv_error)?;
    }
    finish(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use finslerlab_core::connections::{connection_data, TrajectoryPoint};
    use finslerlab_core::matsumoto::change_scalars;
    use finslerlab_core::metric::{metric_data, Structure};
    use finslerlab_core::models::builtin;

    #[test]
    fn trajectory_header_and_rows() {
        let t = Trajectory {
            points: vec![TrajectoryPoint {
                t: 0.0,
                x: vec![0.0, 1.0],
                y: vec![1.0, 0.0],
                f: 1.0,
            }],
            exit_time: None,
        };
        assert_eq!(trajectory_csv(&t).unwrap(), "t,x1,x2,y1,y2,F\n0,0,1,1,0,1\n");
    }

    #[test]
    fn inspect_rows_cover_upper_triangles_and_change_errors() {
        let m = builtin("euclid_concurrent").unwrap();
        let s = m.sample(&[-1.0, 0.0], &[1.0, 0.0]);
        let md = metric_data(&m, &s).unwrap();
        let cd = connection_data(&m, &s, &md).unwrap();
        let change: Vec<Change> = Orientation::BOTH
            .into_iter()
            .map(|o| (o, change_scalars(&m, &m, &s, o)))
            .collect();
        let table = inspect_table(&m, &s, &md, &cd, &change);
        assert!(table.contains("g_12 "));
        assert!(!table.contains("g_21 "));
        assert!(table.contains("C_222 "));
        // F = Φ under +1 here, so only the -1 scalars are printed.
        assert!(table.contains("change[+1]: outside the changed-metric domain"));
        assert!(table.contains("Fhat[-1]"));
        let csv = inspect_csv(&md, &cd, &change).unwrap();
        assert!(csv.starts_with("name,value\nF,1\n"));
    }
}
