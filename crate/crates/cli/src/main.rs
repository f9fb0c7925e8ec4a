//! Command-line front end: load a problem file, sweep relaxation orders and
//! print the table of bounds.
//!
//! Exit codes: 0 success, 1 input error, 2 solver stopped short of
//! optimality, 3 internal error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use switched_sos::extraction::LpMethod;
use switched_sos::problem::load_problem;
use switched_sos::relaxation::first_order;
use switched_sos::report::{run, ExtractOptions, Format, HierarchyReport, RunOptions};
use switched_sos::sdp::SolverSettings;
use switched_sos::Error;

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    Centered,
    InteriorPoint,
    Simplex,
}

/// Lower bounds, SOS certificates and extracted arcs for switched-system
/// optimal control via the moment-SOS hierarchy.
#[derive(Debug, Parser)]
#[command(name = "switched-sos", version)]
struct Cli {
    /// Problem file (TOML).
    problem: PathBuf,
    /// First relaxation order (defaults to the problem's first order).
    #[arg(long)]
    order: Option<u32>,
    /// Last relaxation order (defaults to the first).
    #[arg(long)]
    max_order: Option<u32>,
    /// Gap and feasibility tolerance of the SDP solver.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
    /// Write each relaxation as an SDPA sparse file into this directory.
    #[arg(long, value_name = "DIR")]
    export_sdpa: Option<PathBuf>,
    /// Extract way points and duty cycles at the last order and simulate them.
    #[arg(long)]
    extract: bool,
    /// Mesh resolution of the extraction, in scaled units.
    #[arg(long, default_value_t = 1.0 / 40.0)]
    mesh_eps: f64,
    /// Moment order of the extraction LP (defaults to the relaxation order).
    #[arg(long)]
    extract_order: Option<u32>,
    #[arg(long, value_enum, default_value_t = Method::Centered)]
    lp_method: Method,
    /// Step of the validating simulation.
    #[arg(long, default_value_t = 1e-3)]
    simulate_dt: f64,
    /// Write the extracted way points and duty cycles as CSV.
    #[arg(long, value_name = "FILE")]
    arc_csv: Option<PathBuf>,
    /// Skip the certificate check of each bound.
    #[arg(long)]
    no_certify: bool,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Output file (defaults to standard output).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

enum Failure {
    Input(String),
    Solver(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Solver(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Solver(m) | Failure::Internal(m) => m,
        }
    }
}

fn classify(e: Error) -> Failure {
    let msg = e.to_string();
    match e {
        Error::Poly(_) | Error::Problem(_) | Error::Relaxation(_) => Failure::Input(msg),
        Error::Solver(_) => Failure::Solver(msg),
        _ => Failure::Internal(msg),
    }
}

fn open_out(path: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match path {
        Some(p) => File::create(p)
            .map(|f| Box::new(BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| Failure::Internal(format!("creating {}: {e}", p.display()))),
        None => Ok(Box::new(io::stdout().lock())),
    }
}

/// Text reports on standard output already list the warnings.
fn warnings_shown(cli: &Cli) -> bool {
    matches!(cli.format, OutputFormat::Text) && cli.out.is_none()
}

fn execute(cli: &Cli) -> Result<HierarchyReport, Failure> {
    let p = load_problem(&cli.problem).map_err(|e| Failure::Input(e.to_string()))?;
    let d_min = cli.order.unwrap_or_else(|| first_order(&p));
    let d_max = cli.max_order.unwrap_or(d_min).max(d_min);
    let opts = RunOptions {
        d_min: Some(d_min),
        d_max,
        settings: SolverSettings {
            gap_tol: cli.tol,
            feas_tol: cli.tol,
            max_iters: cli.max_iters,
            ..SolverSettings::default()
        },
        certify: !cli.no_certify,
        extract: cli.extract.then(|| ExtractOptions {
            eps: cli.mesh_eps,
            r: cli.extract_order,
            method: match cli.lp_method {
                Method::Centered => LpMethod::Centered,
                Method::InteriorPoint => LpMethod::InteriorPoint,
                Method::Simplex => LpMethod::Simplex,
            },
            dt: cli.simulate_dt,
        }),
        export_sdpa: cli.export_sdpa.clone(),
    };
    if !(cli.mesh_eps > 0.0 && cli.simulate_dt > 0.0) {
        return Err(Failure::Input("--mesh-eps and --simulate-dt must be positive".into()));
    }
    let report = run(&p, &opts).map_err(classify)?;
    let format = match cli.format {
        OutputFormat::Text => Format::Text,
        OutputFormat::Csv => Format::Csv,
        OutputFormat::Json => Format::Json,
    };
    let mut out = open_out(&cli.out)?;
    report.emit(format, &mut out).map_err(classify)?;
    out.flush().map_err(|e| Failure::Internal(format!("writing report: {e}")))?;
    if let (Some(path), Some(ex)) = (&cli.arc_csv, &report.extraction) {
        let f = File::create(path).map_err(|e| Failure::Internal(format!("creating {}: {e}", path.display())))?;
        ex.write_csv(&report.states, BufWriter::new(f)).map_err(classify)?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(report) => {
            if !warnings_shown(&cli) {
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
            }
            if report.all_optimal() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
