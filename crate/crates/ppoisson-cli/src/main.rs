//! `ppoisson`: batch driver for the p-Poisson solver, p-eigenpairs and the
//! verification suites. Reports go to stdout as JSON; with an output directory
//! (flag, config or `PPOISSON_OUT_DIR`) the report, CSV summaries and fields
//! are written there too.
//!
//! Exit codes: 0 ok, 1 a check failed, 2 a solver diverged, 3 configuration error.

mod config;
mod domain_spec;
mod error;
mod output;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use ppoisson::calculus::{center, ScalarField};
use ppoisson::eigen::p_eigenpair;
use ppoisson::io::{read_binary, read_csv};
use ppoisson::spectral::{BochnerFactor, GeometryConstants};
use ppoisson::verify::algebra::algebra_suite;
use ppoisson::verify::estimates::{dipole_source, estimate_suite, layout, smooth_source};
use ppoisson::verify::{refinement_drift, DriftReport, EstimateReport};
use ppoisson::{Domain, Solver};
use serde::Serialize;
use serde_json::json;

use config::{FieldFormat, RunConfig};
use domain_spec::parse_domain;
use error::{CliError, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_OK};
use output::{csv_real, Envelope, Sink, OUT_DIR_ENV};

#[derive(Parser, Debug)]
#[command(name = "ppoisson", version, about = "p-Poisson solver and estimate verification")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory; overrides the config and $PPOISSON_OUT_DIR.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Field dump format.
    #[arg(long, global = true, value_enum)]
    field_format: Option<FieldFormat>,
    /// Report format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Algebra,
    Estimates,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Bochner {
    InverseGap,
    ProductGap,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Spectral gap, defect and regularity interval of a domain.
    Interval {
        #[arg(long)]
        domain: String,
        #[arg(long, value_enum, default_value_t = Bochner::InverseGap)]
        bochner: Bochner,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
    /// Solve Δ_p u = f by ε-continuation.
    Solve {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        domain: String,
        /// `smooth`, `dipole`, `spike`, or a field file (`.csv` or `.bin`).
        #[arg(long, default_value = "smooth")]
        rhs: String,
        /// Subtract the mean of a file source before solving.
        #[arg(long)]
        center_rhs: bool,
    },
    /// First nontrivial p-eigenpair.
    Eigen {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        domain: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Run the algebraic and/or estimate suites.
    Verify {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        /// Exponents for the estimate suite.
        #[arg(long, num_args = 1.., default_values_t = [2.5])]
        p: Vec<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Samples per algebraic family.
        #[arg(long)]
        samples: Option<usize>,
        /// Torus resolution for the estimate suite.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate suite on torus(2, n), torus(2, 2n), torus(2, 4n) with drift tables.
    Study {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        limit: Option<f64>,
    },
}

struct Ctx {
    cfg: RunConfig,
    sink: Sink,
    format: Format,
}

/// Outcome of a subcommand: whether every check passed.
type Outcome = Result<bool, CliError>;

fn emit<T: Serialize>(ctx: &Ctx, command: &str, inputs: serde_json::Value, result: T, csv: Option<String>) -> Result<(), CliError> {
    let doc = Envelope::new(command, inputs, result);
    ctx.sink.json(command, &doc)?;
    if let Some(c) = &csv {
        ctx.sink.text(&format!("{command}.csv"), c)?;
    }
    match (ctx.format, csv) {
        (Format::Csv, Some(c)) => print!("{c}"),
        _ => println!("{}", serde_json::to_string_pretty(&doc).expect("reports serialize")),
    }
    Ok(())
}

fn check_p(p: f64) -> Result<(), CliError> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("p = {p} must lie in (1, ∞)")))
    }
}

fn load_rhs(domain: &Domain, spec: &str, center_rhs: bool) -> Result<ScalarField, CliError> {
    let need_grid = || domain.grid().map(|_| ()).ok_or_else(|| CliError::Config(format!("builtin source `{spec}` needs a grid domain")));
    let f = match spec {
        "smooth" => {
            need_grid()?;
            return Ok(smooth_source(domain));
        }
        "dipole" => {
            need_grid()?;
            return Ok(dipole_source(domain, layout::DIPOLE_WIDTH, layout::DIPOLE_AMPLITUDE));
        }
        "spike" => {
            let mut s = vec![0.0; domain.num_vertices()];
            s[0] = 1.0 / domain.measure[0];
            return Ok(center(domain, &s));
        }
        path => {
            let file = File::open(path).map_err(|e| CliError::Config(format!("{path}: {e}")))?;
            let data = if Path::new(path).extension().is_some_and(|e| e == "bin") {
                read_binary(BufReader::new(file))
            } else {
                read_csv(BufReader::new(file))
            }
            .map_err(|e| CliError::Config(format!("{path}: {e}")))?;
            if data.components != 1 || data.vertices() != domain.num_vertices() {
                return Err(CliError::Config(format!(
                    "{path}: expected a scalar field on {} vertices, found {} x {}",
                    domain.num_vertices(),
                    data.vertices(),
                    data.components
                )));
            }
            ScalarField(data.values)
        }
    };
    Ok(if center_rhs { center(domain, &f) } else { f })
}

fn interval(ctx: &Ctx, domain: &str, bochner: Bochner, tol: f64) -> Outcome {
    let d = parse_domain(domain)?;
    let factor = match bochner {
        Bochner::InverseGap => BochnerFactor::InverseGap,
        Bochner::ProductGap => BochnerFactor::ProductGap,
    };
    let g = GeometryConstants::compute(&d, tol, factor)?;
    emit(ctx, "interval", json!({ "domain": domain, "tol": tol }), g, None)?;
    Ok(true)
}

fn solve(ctx: &Ctx, p: f64, domain: &str, rhs: &str, center_rhs: bool) -> Outcome {
    check_p(p)?;
    let d = parse_domain(domain)?;
    let f = load_rhs(&d, rhs, center_rhs)?;
    let solver = Solver::new(&d, ctx.cfg.solver(p))?;
    let rec = solver.continuation(&f)?;
    ctx.sink.field("solve_u", &rec.u)?;
    emit(ctx, "solve", json!({ "p": p, "domain": domain, "rhs": rhs }), &rec, None)?;
    Ok(true)
}

fn eigen(ctx: &Ctx, p: f64, domain: &str, seed: Option<u64>, restarts: Option<usize>) -> Outcome {
    check_p(p)?;
    let d = parse_domain(domain)?;
    let mut opts = ctx.cfg.eigen();
    opts.seed = seed.unwrap_or(opts.seed);
    opts.restarts = restarts.unwrap_or(opts.restarts);
    let rec = p_eigenpair(&d, p, &opts)?;
    ctx.sink.field("eigen_u", &rec.u)?;
    emit(ctx, "eigen", json!({ "p": p, "domain": domain, "seed": opts.seed, "restarts": opts.restarts }), &rec, None)?;
    Ok(true)
}

fn reports_csv(reports: &[EstimateReport]) -> String {
    let mut s = String::from("name,p,lhs,rhs,fitted_constant,pass\n");
    for r in reports {
        let p = r.get("p").map(csv_real).unwrap_or_default();
        s += &format!("{},{p},{},{},{},{}\n", r.name, csv_real(r.lhs), csv_real(r.rhs), csv_real(r.fitted_constant), r.pass);
    }
    s
}

const DEFAULT_SAMPLES: usize = 1_000_000;
const DEFAULT_N: usize = 32;

fn verify(ctx: &Ctx, suite: Suite, ps: &[f64], seed: Option<u64>, samples: Option<usize>, n: Option<usize>) -> Outcome {
    let v = &ctx.cfg.verify;
    let seed = seed.or(v.seed).unwrap_or(0);
    let samples = samples.or(v.samples).unwrap_or(DEFAULT_SAMPLES);
    let n = n.or(v.n).unwrap_or(DEFAULT_N);
    ps.iter().try_for_each(|&p| check_p(p))?;
    let mut reports = Vec::new();
    if matches!(suite, Suite::Algebra | Suite::All) {
        reports.extend(algebra_suite(samples, seed));
    }
    if matches!(suite, Suite::Estimates | Suite::All) {
        for &p in ps {
            reports.extend(estimate_suite(n, p, seed)?.into_iter().map(|r| r.with("p", p)));
        }
    }
    let pass = reports.iter().all(|r| r.pass);
    let suite_name = format!("{suite:?}").to_lowercase();
    let inputs = json!({ "suite": suite_name, "p": ps, "seed": seed, "samples": samples, "n": n });
    emit(ctx, "verify", inputs, &reports, Some(reports_csv(&reports)))?;
    Ok(pass)
}

#[derive(Serialize)]
struct StudyResult {
    p: f64,
    sizes: Vec<usize>,
    drifts: Vec<DriftReport>,
    reports: BTreeMap<usize, Vec<EstimateReport>>,
}

fn study(ctx: &Ctx, p: f64, n: Option<usize>, seed: Option<u64>, limit: Option<f64>) -> Outcome {
    check_p(p)?;
    let v = &ctx.cfg.verify;
    let n = n.or(v.n).unwrap_or(DEFAULT_N);
    let seed = seed.or(v.seed).unwrap_or(0);
    let limit = limit.or(v.drift_limit).unwrap_or(2.0);
    let sizes = vec![n, 2 * n, 4 * n];
    let runs: Vec<_> = std::thread::scope(|s| {
        let hs: Vec<_> = sizes.iter().map(|&k| s.spawn(move || estimate_suite(k, p, seed))).collect();
        hs.into_iter().map(|h| h.join().expect("study member panicked")).collect()
    });
    let mut reports = BTreeMap::new();
    for (&k, r) in sizes.iter().zip(runs) {
        reports.insert(k, r?);
    }
    let names: Vec<String> = reports[&n].iter().map(|r| r.name.clone()).collect();
    let drifts: Vec<DriftReport> = names
        .iter()
        .map(|name| {
            let cs: Vec<f64> =
                sizes.iter().map(|k| reports[k].iter().find(|r| &r.name == name).map_or(f64::NAN, |r| r.fitted_constant)).collect();
            refinement_drift(name, &sizes, &cs, limit)
        })
        .collect();
    let mut csv = format!("name,C_{},C_{},C_{},max_ratio,pass\n", sizes[0], sizes[1], sizes[2]);
    for d in &drifts {
        let cs: Vec<String> = d.constants.iter().map(|&c| csv_real(c)).collect();
        csv += &format!("{},{},{},{}\n", d.name, cs.join(","), csv_real(d.max_ratio), d.pass);
    }
    let pass = drifts.iter().all(|d| d.pass);
    let inputs = json!({ "p": p, "n": n, "seed": seed, "limit": limit });
    emit(ctx, "study", inputs, StudyResult { p, sizes, drifts, reports }, Some(csv))?;
    Ok(pass)
}

fn run(cli: Cli) -> Outcome {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.output.dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from));
    let field_format = cli.field_format.or(cfg.output.field_format).unwrap_or_default();
    let ctx = Ctx { cfg, sink: Sink { dir, field_format }, format: cli.format };
    match cli.command {
        Command::Interval { domain, bochner, tol } => interval(&ctx, &domain, bochner, tol),
        Command::Solve { p, domain, rhs, center_rhs } => solve(&ctx, p, &domain, &rhs, center_rhs),
        Command::Eigen { p, domain, seed, restarts } => eigen(&ctx, p, &domain, seed, restarts),
        Command::Verify { suite, p, seed, samples, n } => verify(&ctx, suite, &p, seed, samples, n),
        Command::Study { p, n, seed, limit } => study(&ctx, p, n, seed, limit),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_CHECK_FAILED,
        Err(e) => {
            eprintln!("ppoisson: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
