//! `kantlab` command line: every solver and fixture behind a subcommand,
//! reading JSON/CSV files and writing one output file atomically.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::convex_order::{check_convex_order_1d_tol, check_convex_order_lp, ORDER_TOL};
use crate::error::{Error, Result};
use crate::martingale::{build_martingale_coupling, MongeMap};
use crate::measures::{ConditionalKernel, DiscreteMeasure, MomentMap, Point, YMeasure};
use crate::nonattainment::{rows_to_csv, run_example, run_segment_sweep, MapExampleKind, SweepRow};
use crate::nonlinear::{
    eval_j_gp, eval_j_xp, eval_j_xyp, solve_fixed_barycenter, solve_monge_cd, CostKind, CostSpec, Dictionary, MongeMethod,
    MongeOptions,
};
use crate::transport::{kr_norm_with_witness, solve_transport, CostMatrix};

/// Environment variable overriding the default convex-order tolerance.
pub const TOL_ENV: &str = "KANTLAB_TOL";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NO_CONVERGENCE: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "kantlab", version, about = "Nonlinear Kantorovich transport laboratory")]
struct Cli {
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Json, global = true)]
    format: Format,
    /// Output file; standard output when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized steps, echoed into JSON output.
    #[arg(long, default_value_t = 0, global = true)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum EvalKind {
    Xp,
    Xyp,
    Gp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Which {
    Thm2,
    Ex1,
    Ex2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Auto,
    CuttingPlane,
    LocalSearch,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal transport plan for a CSV cost matrix.
    Transport { cost: PathBuf, mu: PathBuf, nu: PathBuf },
    /// Kantorovich–Rubinstein norm of `p − q` with its witness function.
    Krnorm { p: PathBuf, q: PathBuf },
    /// Decides `μ ⪯_c ν`; exits 3 with the separating function when it fails.
    ConvexOrder {
        mu: PathBuf,
        nu: PathBuf,
        /// Potential-test tolerance (default from KANTLAB_TOL, else 1e-9).
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Coupling of ζ and ν with conditional F-barycenters at the ζ atoms.
    Martingale {
        zeta: PathBuf,
        nu: PathBuf,
        /// Moment table `{"atoms": [[..]], "values": [[..]]}`; identity when omitted.
        #[arg(long)]
        moment: Option<PathBuf>,
    },
    /// Fixed-barycenter LP over a finite dictionary.
    Kfix { mu: PathBuf, dict: PathBuf, cost: PathBuf, beta: PathBuf },
    /// Evaluates a nonlinear functional on a kernel.
    Eval {
        #[arg(long, value_enum)]
        kind: EvalKind,
        kernel: PathBuf,
        cost: PathBuf,
        #[arg(long)]
        moment: Option<PathBuf>,
    },
    /// Monge problem with convex dominance against ν∘F⁻¹.
    MongeCd {
        mu: PathBuf,
        nu: PathBuf,
        cost: PathBuf,
        #[arg(long)]
        moment: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        /// Candidate u values as a JSON array of points.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Initial map as a JSON array of points.
        #[arg(long)]
        warm_start: Option<PathBuf>,
    },
    /// Convergence tables of the non-attainment constructions.
    Paper {
        #[arg(long, value_enum)]
        which: Which,
        #[arg(long, default_value_t = 4)]
        nmax: u32,
        /// Grid size exponent offset: 2^(n+grid) cells or points at level n
        /// (default 4 for thm2, 2 for the map examples).
        #[arg(long)]
        grid: Option<u32>,
        /// Record wall time per row instead of 0.
        #[arg(long)]
        timing: bool,
    },
}

/// Result of a subcommand: the text to write and the exit code to return.
struct Output {
    text: String,
    code: i32,
}

impl Output {
    fn ok(text: String) -> Self {
        Self { text, code: EXIT_OK }
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the process exit code. Diagnostics go to standard error.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(out) = &cli.out {
        if let Err(e) = check_out_path(out) {
            eprintln!("kantlab: {e}");
            return EXIT_INPUT;
        }
    }
    match run(&cli) {
        Ok(out) => match emit(cli.out.as_deref(), &out.text) {
            Ok(()) => out.code,
            Err(e) => {
                eprintln!("kantlab: cannot write output: {e}");
                EXIT_INTERNAL
            }
        },
        Err(e) => {
            eprintln!("kantlab: {e}");
            exit_code(&e)
        }
    }
}

/// Exit code for an error that escaped a subcommand.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_)
        | Error::InvalidMeasure(_)
        | Error::Representation(_)
        | Error::Dimension { .. }
        | Error::Balance { .. }
        | Error::Alignment(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_INPUT,
        Error::Infeasible { .. } | Error::OrderViolation(_) => EXIT_INFEASIBLE,
        Error::NoConvergence { .. } => EXIT_NO_CONVERGENCE,
        Error::Contract(_) | Error::Unbounded => EXIT_INTERNAL,
    }
}

fn check_out_path(out: &Path) -> Result<()> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    if !parent.is_dir() {
        return Err(Error::Parse(format!("output directory {} does not exist", parent.display())));
    }
    if out.is_dir() {
        return Err(Error::Parse(format!("output path {} is a directory", out.display())));
    }
    Ok(())
}

fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()
        }
        Some(path) => {
            let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(text.as_bytes())?;
            tmp.persist(path).map_err(|e| e.error)?;
            Ok(())
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn read_cost(path: &Path) -> Result<CostSpec> {
    let v: Value = read_json(path)?;
    CostSpec::from_json(&v)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentRepr {
    atoms: Vec<Point>,
    values: Vec<Point>,
}

fn read_moment(path: Option<&Path>, dim: usize) -> Result<MomentMap> {
    match path {
        None => Ok(MomentMap::identity(dim)),
        Some(p) => {
            let r: MomentRepr = read_json(p)?;
            MomentMap::table(r.atoms, r.values)
        }
    }
}

/// Adds the seed to a JSON object and formats it.
fn with_seed<T: Serialize>(payload: &T, seed: u64) -> Result<String> {
    let mut v = serde_json::to_value(payload)?;
    match &mut v {
        Value::Object(map) => {
            map.insert("seed".into(), json!(seed));
        }
        other => {
            v = json!({ "result": other.take(), "seed": seed });
        }
    }
    crate::json::to_string(&v)
}

fn csv_unsupported(what: &str) -> Error {
    Error::Parse(format!("--format csv is not available for {what}"))
}

fn order_tol(flag: Option<f64>) -> Result<f64> {
    let tol = match flag {
        Some(t) => t,
        None => match std::env::var(TOL_ENV) {
            Ok(s) => s
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("{TOL_ENV}={s:?} is not a number")))?,
            Err(_) => ORDER_TOL,
        },
    };
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::Parse(format!("tolerance {tol} must be finite and nonnegative")));
    }
    Ok(tol)
}

fn run(cli: &Cli) -> Result<Output> {
    let seed = cli.seed;
    let csv = cli.format == Format::Csv;
    match &cli.command {
        Command::Transport { cost, mu, nu } => {
            let c = CostMatrix::from_csv(&read_text(cost)?)?;
            let mu: DiscreteMeasure = read_json(mu)?;
            let nu: DiscreteMeasure = read_json(nu)?;
            let plan = solve_transport(&c, &mu, &nu)?;
            let value = plan.cost(&c);
            if csv {
                let mut text = String::new();
                for i in 0..plan.rows() {
                    let row: Vec<String> = plan.row(i).iter().map(|v| crate::json::fmt_f64(*v)).collect();
                    text.push_str(&row.join(","));
                    text.push('\n');
                }
                return Ok(Output::ok(text));
            }
            Ok(Output::ok(with_seed(&plan.json(Some(value)), seed)?))
        }
        Command::Krnorm { p, q } => {
            let p: DiscreteMeasure = read_json(p)?;
            let q: DiscreteMeasure = read_json(q)?;
            let w = kr_norm_with_witness(&p, &q)?;
            if csv {
                return Ok(Output::ok(format!("value\n{}\n", crate::json::fmt_f64(w.value))));
            }
            let atoms: Vec<&[f64]> = w.atoms.iter().map(|a| a.coords()).collect();
            Ok(Output::ok(with_seed(&json!({ "value": w.value, "atoms": atoms, "f": w.f }), seed)?))
        }
        Command::ConvexOrder { mu, nu, tol } => {
            if csv {
                return Err(csv_unsupported("convex-order"));
            }
            let tol = order_tol(*tol)?;
            let mu: DiscreteMeasure = read_json(mu)?;
            let nu: DiscreteMeasure = read_json(nu)?;
            let cert = if mu.dim() == 1 && nu.dim() == 1 {
                check_convex_order_1d_tol(&mu, &nu, tol)?
            } else {
                check_convex_order_lp(&mu, &nu)?
            };
            let text = with_seed(&cert.json(), seed)?;
            let code = if cert.is_dominated() { EXIT_OK } else { EXIT_INFEASIBLE };
            Ok(Output { text, code })
        }
        Command::Martingale { zeta, nu, moment } => {
            if csv {
                return Err(csv_unsupported("martingale"));
            }
            let zeta: DiscreteMeasure = read_json(zeta)?;
            let nu: DiscreteMeasure = read_json(nu)?;
            let f = read_moment(moment.as_deref(), nu.dim())?;
            match build_martingale_coupling(&zeta, &nu, &f) {
                Ok(c) => Ok(Output::ok(with_seed(&c.json(), seed)?)),
                Err(Error::OrderViolation(cert)) => {
                    eprintln!("kantlab: convex order violated by {:e}", cert.violation());
                    Ok(Output { text: with_seed(&cert.json(), seed)?, code: EXIT_INFEASIBLE })
                }
                Err(e) => Err(e),
            }
        }
        Command::Kfix { mu, dict, cost, beta } => {
            if csv {
                return Err(csv_unsupported("kfix"));
            }
            let mu: DiscreteMeasure = read_json(mu)?;
            let dict = Dictionary::new(read_json::<Vec<YMeasure>>(dict)?)?;
            let h = read_cost(cost)?;
            let beta: YMeasure = read_json(beta)?;
            match solve_fixed_barycenter(&mu, &dict, &h, &beta) {
                Ok(plan) => {
                    let m = dict.len();
                    let rows: Vec<&[f64]> = plan.weights().chunks(m).collect();
                    let payload = json!({
                        "weights": rows,
                        "value": plan.value(),
                        "barycenter_defect": plan.barycenter_defect(),
                        "row_defect": plan.row_defect(),
                    });
                    Ok(Output::ok(with_seed(&payload, seed)?))
                }
                Err(Error::Infeasible { constraint, label, residual }) => {
                    eprintln!("kantlab: infeasible: {label} (residual {residual:e})");
                    let payload = json!({
                        "verdict": "infeasible",
                        "constraint": constraint,
                        "label": label,
                        "residual": residual,
                    });
                    Ok(Output { text: with_seed(&payload, seed)?, code: EXIT_INFEASIBLE })
                }
                Err(e) => Err(e),
            }
        }
        Command::Eval { kind, kernel, cost, moment } => {
            let k: ConditionalKernel = read_json(kernel)?;
            let h = read_cost(cost)?;
            let wanted = match kind {
                EvalKind::Xp => CostKind::Xp,
                EvalKind::Xyp => CostKind::Xyp,
                EvalKind::Gp => CostKind::Xu,
            };
            if h.kind() != wanted {
                return Err(Error::Parse(format!("--kind needs a {wanted} cost, got {}", h.kind())));
            }
            let value = match kind {
                EvalKind::Xp => eval_j_xp(&k, &h)?,
                EvalKind::Xyp => eval_j_xyp(&k, &h)?,
                EvalKind::Gp => {
                    let dim = k.conditionals()[0].dim();
                    eval_j_gp(&k, &h, &read_moment(moment.as_deref(), dim)?)?
                }
            };
            if csv {
                return Ok(Output::ok(format!("value\n{}\n", crate::json::fmt_f64(value))));
            }
            let kind = format!("{kind:?}").to_lowercase();
            Ok(Output::ok(with_seed(&json!({ "kind": kind, "value": value }), seed)?))
        }
        Command::MongeCd { mu, nu, cost, moment, method, max_iters, grid, warm_start } => {
            let mu: DiscreteMeasure = read_json(mu)?;
            let nu: DiscreteMeasure = read_json(nu)?;
            let h = read_cost(cost)?;
            let f = read_moment(moment.as_deref(), nu.dim())?;
            let grid = grid.as_deref().map(read_json::<Vec<Point>>).transpose()?;
            let warm: Vec<MongeMap> = warm_start.as_deref().map(read_json::<MongeMap>).transpose()?.into_iter().collect();
            let opts = MongeOptions {
                method: match method {
                    Method::Auto => MongeMethod::Auto,
                    Method::CuttingPlane => MongeMethod::CuttingPlane,
                    Method::LocalSearch => MongeMethod::LocalSearch,
                },
                max_iters: *max_iters,
                grid,
                warm_starts: warm,
                seed,
                ..Default::default()
            };
            let sol = solve_monge_cd(&mu, &nu, &f, &h, &opts)?;
            let code = if sol.converged { EXIT_OK } else { EXIT_NO_CONVERGENCE };
            if !sol.converged {
                eprintln!("kantlab: no convergence after {} iterations; writing best map found", sol.iterations);
            }
            let text = if csv {
                let mut t = String::new();
                for p in sol.map.values() {
                    let row: Vec<String> = p.coords().iter().map(|v| crate::json::fmt_f64(*v)).collect();
                    t.push_str(&row.join(","));
                    t.push('\n');
                }
                t
            } else {
                with_seed(
                    &json!({
                        "map": sol.map,
                        "value": sol.value,
                        "converged": sol.converged,
                        "method": sol.method,
                        "iterations": sol.iterations,
                        "lower_bound": sol.lower_bound,
                        "exhaustive": sol.exhaustive,
                    }),
                    seed,
                )?
            };
            Ok(Output { text, code })
        }
        Command::Paper { which, nmax, grid, timing } => {
            let rows: Vec<SweepRow> = match which {
                Which::Thm2 => {
                    let off = grid.unwrap_or(4);
                    run_segment_sweep(*nmax, |n| 1usize << (n + off))?
                }
                Which::Ex1 | Which::Ex2 => {
                    let off = grid.unwrap_or(2);
                    let kind = if *which == Which::Ex1 { MapExampleKind::TwoLine } else { MapExampleKind::SquareGap };
                    run_example(kind, *nmax, |n| 1usize << (n + off))?
                }
            };
            if csv {
                return Ok(Output::ok(rows_to_csv(&rows, *timing)));
            }
            let rows: Vec<SweepRow> = rows
                .into_iter()
                .map(|mut r| {
                    if !timing {
                        r.seconds = 0.0;
                    }
                    r
                })
                .collect();
            let which = format!("{which:?}").to_lowercase();
            Ok(Output::ok(with_seed(&json!({ "which": which, "rows": rows }), seed)?))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_classes() {
        assert_eq!(exit_code(&Error::Parse("x".into())), EXIT_INPUT);
        assert_eq!(exit_code(&Error::NoConvergence { iterations: 3 }), EXIT_NO_CONVERGENCE);
        assert_eq!(
            exit_code(&Error::Infeasible { constraint: 0, label: "row".into(), residual: 1.0 }),
            EXIT_INFEASIBLE
        );
        assert_eq!(exit_code(&Error::Contract("bug".into())), EXIT_INTERNAL);
    }

    #[test]
    fn unknown_flags_are_input_errors() {
        assert_eq!(dispatch(["kantlab", "paper", "--which", "thm2", "--bogus"]), EXIT_INPUT);
        assert_eq!(dispatch(["kantlab", "nosuch"]), EXIT_INPUT);
    }

    #[test]
    fn seed_is_echoed() {
        let s = with_seed(&json!({ "value": 1.0 }), 7).unwrap();
        let v: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["seed"], 7);
    }
}
