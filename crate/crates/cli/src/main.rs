//! `finslerlab`: inspect a model at a point, verify every identity over a
//! seeded batch, or integrate a geodesic of F or F̂.
//!
//! Exit codes: 0 success, 1 identity failure, 2 domain error, 3 parse error.

mod render;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use finslerlab_core::connections::{concurrency_probe, connection_data, integrate_geodesic};
use finslerlab_core::harness::{verify, OrientationMode, VerifyConfig};
use finslerlab_core::matsumoto::{change_scalars, MatsumotoChange, Orientation};
use finslerlab_core::metric::{metric_data, Structure};
use finslerlab_core::{Error, ModelDef};

#[derive(Parser, Debug)]
#[command(name = "finslerlab", version, about = "Finsler geometry engine and change-of-metric verifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dump metric, connection and change data at one point.
    Inspect {
        #[command(flatten)]
        common: Common,
        /// Base point, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        /// Direction, comma separated.
        #[arg(long, allow_hyphen_values = true)]
        y: String,
    },
    /// Run every suite over a seeded batch.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Samples per suite.
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Sampling interval per coordinate, `lo,hi`.
        #[arg(long = "box", allow_hyphen_values = true)]
        sampling_box: Option<String>,
        /// Tolerance override, `identity=value`; repeatable.
        #[arg(long = "tol")]
        tolerances: Vec<String>,
    },
    /// Integrate a geodesic and write the trajectory as CSV.
    Geodesic {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        y: String,
        #[arg(long, default_value_t = 1.0)]
        t_end: f64,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, value_enum, default_value_t = Which::Base)]
        which: Which,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Model file (.fmod).
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// auto, +1 or -1.
    #[arg(long, default_value = "auto", allow_hyphen_values = true)]
    orientation: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    Base,
    Hat,
}

const EXIT_FAIL: u8 = 1;
const EXIT_DOMAIN: u8 = 2;
const EXIT_PARSE: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Syntax { .. } | Error::Validation(_) | Error::Io(_) => EXIT_PARSE,
        Error::DomainEscape { .. }
        | Error::OutsideHatDomain { .. }
        | Error::DegenerateMargin { .. }
        | Error::SingularMetric { .. } => EXIT_DOMAIN,
        Error::Eval(_) | Error::Precondition(_) => EXIT_FAIL,
    }
}

fn load_model(path: &Path) -> Result<ModelDef, Error> {
    let src = fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ModelDef::parse(&src)
}

fn parse_reals(label: &str, s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| Error::Validation(format!("--{label}: `{}` is not a real number ({e})", t.trim())))
        })
        .collect()
}

fn parse_point(model: &ModelDef, x: &str, y: &str) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let (x, y) = (parse_reals("x", x)?, parse_reals("y", y)?);
    if x.len() != model.dim || y.len() != model.dim {
        return Err(Error::Validation(format!(
            "point needs {} + {} coordinates, got {} + {}",
            model.dim,
            model.dim,
            x.len(),
            y.len()
        )));
    }
    Ok((x, y))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), Error> {
    match out {
        Some(p) => fs::write(p, body).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Inspect { common, x, y } => {
            let model = load_model(&common.model)?;
            let mode: OrientationMode = common.orientation.parse()?;
            let (x, y) = parse_point(&model, &x, &y)?;
            let s = model.sample(&x, &y);
            s.require_admissible()?;
            let md = metric_data(&model, &s)?;
            let cd = connection_data(&model, &s, &md)?;
            let orientations: Vec<Orientation> = match mode {
                OrientationMode::Auto => Orientation::BOTH.to_vec(),
                OrientationMode::Fixed(o) => vec![o],
            };
            let change: Vec<_> = orientations
                .into_iter()
                .map(|o| (o, change_scalars(&model, &model, &s, o)))
                .collect();
            let body = match common.format.unwrap_or(Format::Table) {
                Format::Json => render::inspect_json(&model, &s, &md, &cd, &change),
                Format::Table => render::inspect_table(&model, &s, &md, &cd, &change),
                Format::Csv => render::inspect_csv(&md, &cd, &change)?,
            };
            emit(common.out.as_deref(), &body)?;
            Ok(0)
        }
        Command::Verify {
            common,
            samples,
            sampling_box,
            tolerances,
        } => {
            let model = load_model(&common.model)?;
            let mut cfg = VerifyConfig {
                samples,
                seed: common.seed,
                orientation: common.orientation.parse()?,
                ..VerifyConfig::default()
            };
            if let Some(b) = sampling_box {
                let v = parse_reals("box", &b)?;
                let [lo, hi] = v[..] else {
                    return Err(Error::Validation("--box takes `lo,hi`".into()));
                };
                cfg.sampling_box = Some((lo, hi));
            }
            let mut tol = BTreeMap::new();
            for t in tolerances {
                let (name, v) = t
                    .split_once('=')
                    .ok_or_else(|| Error::Validation(format!("--tol expects name=value, got `{t}`")))?;
                tol.insert(name.trim().to_string(), parse_reals("tol", v)?[0]);
            }
            cfg.tolerances = tol;
            let report = verify(&model, &cfg)?;
            let body = match common.format.unwrap_or(Format::Json) {
                Format::Json => render::report_json(&report),
                Format::Table => report.to_table(),
                Format::Csv => render::report_csv(&report)?,
            };
            emit(common.out.as_deref(), &body)?;
            for f in report.failures() {
                log::error!("{} ({}) residual {:e} tolerance {:e}", f.name, f.suite, f.residual, f.tolerance);
            }
            Ok(if report.passed() { 0 } else { EXIT_FAIL })
        }
        Command::Geodesic {
            common,
            x,
            y,
            t_end,
            step,
            which,
        } => {
            let model = load_model(&common.model)?;
            let mode: OrientationMode = common.orientation.parse()?;
            let (x, y) = parse_point(&model, &x, &y)?;
            let s = model.sample(&x, &y);
            s.require_admissible()?;
            let traj = match which {
                Which::Base => integrate_geodesic(&model, &s, t_end, step)?,
                Which::Hat => {
                    let o = match mode {
                        OrientationMode::Fixed(o) => o,
                        OrientationMode::Auto => {
                            let p = concurrency_probe(&model, &model, std::slice::from_ref(&s))?;
                            Orientation::matching_sigma(p.sigma)
                        }
                    };
                    log::info!("changed metric with orientation {o}");
                    let hat = MatsumotoChange::new(&model, &model, o);
                    integrate_geodesic(&hat, &hat.sample(&x, &y), t_end, step)?
                }
            };
            let body = match common.format.unwrap_or(Format::Csv) {
                Format::Csv | Format::Table => render::trajectory_csv(&traj)?,
                Format::Json => render::to_json(&traj),
            };
            emit(common.out.as_deref(), &body)?;
            match traj.escape_error() {
                Some(e) => {
                    eprintln!("error: {e}");
                    Ok(EXIT_DOMAIN)
                }
                None => Ok(0),
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_PARSE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_classes_map_to_exit_codes() {
        let syntax = Error::Syntax {
            line: 1,
            column: 2,
            message: String::new(),
            expected: vec![],
        };
        assert_eq!(exit_code(&syntax), EXIT_PARSE);
        assert_eq!(exit_code(&Error::Validation(String::new())), EXIT_PARSE);
        assert_eq!(exit_code(&Error::OutsideHatDomain { gap: 0.0 }), EXIT_DOMAIN);
        assert_eq!(exit_code(&Error::SingularMetric { det: 0.0, threshold: 1.0 }), EXIT_DOMAIN);
        assert_eq!(exit_code(&Error::Eval(String::new())), EXIT_FAIL);
    }

    #[test]
    fn reals_and_points_are_validated() {
        assert_eq!(parse_reals("x", "1, -2.5,3e-1").unwrap(), vec![1.0, -2.5, 0.3]);
        assert!(matches!(parse_reals("x", "1,a"), Err(Error::Validation(_))));
        let m = ModelDef::parse("name = t\ndim = 2\nF = sqrt(y1^2 + y2^2)\nphi1 = 0\nphi2 = 0\n").unwrap();
        assert!(parse_point(&m, "0,0", "1,0").is_ok());
        assert!(matches!(parse_point(&m, "0,0,0", "1,0"), Err(Error::Validation(_))));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
