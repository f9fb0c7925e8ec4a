//! Order sweeps and their tables.
//!
//! [`run`] solves the relaxations `d_min..=d_max` of a problem in sequence,
//! optionally certifies each bound and extracts an arc at the last order.
//! Costs, masses and arcs are reported in the problem's original units.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::certificate::recover;
use crate::extraction::{extract, simulate_relaxed, ExtractionResult, LpMethod};
use crate::problem::{augment_ball, scale, SwitchedProblem};
use crate::relaxation::{assemble, first_order, MeasureRole};
use crate::sdp::{export_sdpa, solve, SolveStatus, SolverSettings};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Mesh resolution in scaled units (each variable spans `[-1, 1]`).
    pub eps: f64,
    /// Moment order of the LP; defaults to the relaxation order.
    pub r: Option<u32>,
    pub method: LpMethod,
    /// Step of the validating simulation, in original time units.
    pub dt: f64,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            eps: 1.0 / 40.0,
            r: None,
            method: LpMethod::default(),
            dt: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// First order; raised to the problem's first relaxation order if lower.
    pub d_min: Option<u32>,
    pub d_max: u32,
    pub settings: SolverSettings,
    pub certify: bool,
    pub extract: Option<ExtractOptions>,
    /// Directory receiving one SDPA file per order.
    pub export_sdpa: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            d_min: None,
            d_max: 3,
            settings: SolverSettings::default(),
            certify: true,
            extract: None,
            export_sdpa: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateRow {
    /// Largest per-mode identity residual (scaled problem coefficients).
    pub max_residual: f64,
    pub min_gram_eigenvalue: f64,
    pub dual_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub order: u32,
    /// The bound `p*_d`, i.e. the primal objective.
    pub bound: f64,
    pub dual_objective: f64,
    pub nbar: usize,
    /// Mass `y_{j,0}` of each modal measure (time spent in mode `j`).
    pub masses: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    pub relative_gap: f64,
    pub certificate: Option<CertificateRow>,
    /// Seconds; kept out of csv and json so reruns are byte-identical.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionSummary {
    pub order: u32,
    pub r: u32,
    pub eps: f64,
    pub mismatch: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub bounds: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub duty: Vec<Vec<f64>>,
    /// Cost of the simulated arc: an upper bound on the optimal value.
    pub simulated_cost: Option<f64>,
    pub final_state: Option<Vec<f64>>,
    pub max_violation: Option<f64>,
}

impl ExtractionSummary {
    /// Way points and duty cycles as CSV (`t, <states>, d1, ..., dm`).
    pub fn write_csv(&self, state_names: &[String], w: impl Write) -> Result<()> {
        ExtractionResult {
            times: self.times.clone(),
            bounds: self.bounds.clone(),
            states: self.states.clone(),
            duty: self.duty.clone(),
            mismatch: self.mismatch,
            horizon: self.horizon,
        }
        .write_csv(state_names, w)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyReport {
    pub problem: String,
    pub modes: Vec<String>,
    pub states: Vec<String>,
    pub first_order: u32,
    pub rows: Vec<OrderRow>,
    pub extraction: Option<ExtractionSummary>,
    pub warnings: Vec<String>,
}

impl HierarchyReport {
    pub fn empty(p: &SwitchedProblem) -> Self {
        HierarchyReport {
            problem: p.name.clone(),
            modes: p.modes.iter().map(|m| m.name.clone()).collect(),
            states: p.state_indices().iter().map(|&i| p.space.name(i).to_string()).collect(),
            first_order: first_order(p),
            rows: Vec::new(),
            extraction: None,
            warnings: Vec::new(),
        }
    }

    pub fn all_optimal(&self) -> bool {
        self.rows.iter().all(|r| r.status.is_optimal())
    }

    /// Largest drop `p*_d - p*_{d+1}` between consecutive orders (0 when the
    /// sequence is non-decreasing).
    pub fn worst_decrease(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| w[0].bound - w[1].bound)
            .fold(0.0, f64::max)
    }

    pub fn last_bound(&self) -> Option<f64> {
        self.rows.last().map(|r| r.bound)
    }

    pub fn emit(&self, format: Format, w: impl Write) -> Result<()> {
        match format {
            Format::Text => write_all(w, self.to_text().as_bytes()),
            Format::Csv => self.write_csv(w),
            Format::Json => {
                let mut s = serde_json::to_string_pretty(self)
                    .map_err(|e| Error::Format(format!("serializing report: {e}")))?;
                s.push('\n');
                write_all(w, s.as_bytes())
            }
        }
    }

    pub fn from_json(r: impl Read) -> Result<Self> {
        serde_json::from_reader(r).map_err(|e| Error::Format(format!("reading report: {e}")))
    }

    /// Paper-style table: order, bound, moment count and masses, then the
    /// solver columns.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "problem {} (first order {})", self.problem, self.first_order);
        let mut head = format!("{:>3}  {:>14}  {:>6}", "d", "p*_d", "nbar");
        for m in &self.modes {
            let _ = write!(head, "  {:>10}", format!("y({m})"));
        }
        let _ = write!(head, "  {:>14}  {:>19}  {:>5}  {:>8}", "dual", "status", "iters", "time[s]");
        let certified = self.rows.iter().any(|r| r.certificate.is_some());
        if certified {
            let _ = write!(head, "  {:>9}", "residual");
        }
        let _ = writeln!(s, "{head}");
        for r in &self.rows {
            let _ = write!(s, "{:>3}  {:>14.7e}  {:>6}", r.order, r.bound, r.nbar);
            for m in &r.masses {
                let _ = write!(s, "  {m:>10.5}");
            }
            let _ = write!(
                s,
                "  {:>14.7e}  {:>19}  {:>5}  {:>8.2}",
                r.dual_objective,
                r.status.as_str(),
                r.iterations,
                r.wall_time
            );
            if let Some(c) = &r.certificate {
                let _ = write!(s, "  {:>9.2e}", c.max_residual);
            }
            let _ = writeln!(s);
        }
        if let Some(e) = &self.extraction {
            let _ = writeln!(
                s,
                "extraction at d = {}, r = {}, eps = {}: mismatch {:.3e}, horizon {:.6}",
                e.order, e.r, e.eps, e.mismatch, e.horizon
            );
            if let Some(c) = e.simulated_cost {
                let _ = writeln!(s, "simulated cost {c:.7e}");
            }
            if let (Some(x), Some(v)) = (&e.final_state, e.max_violation) {
                let _ = writeln!(s, "final state {x:?}, constraint violation {v:.2e}");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }

    /// Header `d,p_d,nbar,mass_1,...,mass_m,dual,status,iterations`.
    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let fmt_err = |e: csv::Error| Error::Format(format!("writing report csv: {e}"));
        let mut header = vec!["d".to_string(), "p_d".into(), "nbar".into()];
        header.extend((1..=self.modes.len()).map(|j| format!("mass_{j}")));
        header.extend(["dual".to_string(), "status".into(), "iterations".into()]);
        wr.write_record(&header).map_err(fmt_err)?;
        for r in &self.rows {
            let mut rec = vec![r.order.to_string(), r.bound.to_string(), r.nbar.to_string()];
            rec.extend(r.masses.iter().map(f64::to_string));
            rec.extend([r.dual_objective.to_string(), r.status.as_str().into(), r.iterations.to_string()]);
            wr.write_record(&rec).map_err(fmt_err)?;
        }
        wr.flush().map_err(|source| Error::Io {
            context: "writing report csv".into(),
            source,
        })
    }
}

fn write_all(mut w: impl Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes).map_err(|source| Error::Io {
        context: "writing report".into(),
        source,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Format {
    #[default]
    Text,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Format::Text),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Format(format!("unknown format '{s}' (text, csv or json)"))),
        }
    }
}

/// Solves orders `d_min..=d_max` of `p` (in original units, as loaded).
/// Non-optimal solver statuses are recorded on their row; every other error
/// aborts the sweep.
pub fn run(p: &SwitchedProblem, opts: &RunOptions) -> Result<HierarchyReport> {
    opts.settings.validate()?;
    let mut report = HierarchyReport::empty(p);
    let d0 = report.first_order;
    let d_min = match opts.d_min {
        Some(d) if d < d0 => {
            report
                .warnings
                .push(format!("order {d} is below the first relaxation order; starting at {d0}"));
            d0
        }
        Some(d) => d,
        None => d0,
    };
    let (scaled, scaling) = scale(p)?;
    let scaled = augment_ball(&scaled);
    if let Some(dir) = &opts.export_sdpa {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            context: format!("creating {}", dir.display()),
            source,
        })?;
    }
    let mut last = None;
    for d in d_min..=opts.d_max {
        let start = Instant::now();
        let (inst, info) = assemble(&scaled, d)?;
        if let Some(dir) = &opts.export_sdpa {
            export_sdpa(&inst, dir.join(format!("{}_d{d}.dat-s", p.name)))?;
        }
        let sol = solve(&inst, &opts.settings)?;
        let certificate = if opts.certify {
            let c = recover(&sol, &inst, &scaled)?;
            Some(CertificateRow {
                max_residual: c.residuals.iter().copied().fold(0.0, f64::max),
                min_gram_eigenvalue: c.min_gram_eigenvalue(),
                dual_value: scaling.cost_to_original(c.dual_value),
            })
        } else {
            None
        };
        let masses = (0..p.modes.len())
            .map(|j| {
                let m = inst.layout.find(MeasureRole::Modal(j)).expect("modal measure");
                scaling.cost_to_original(sol.y[inst.layout.measures[m].offset])
            })
            .collect();
        if !sol.status.is_optimal() {
            report
                .warnings
                .push(format!("order {d}: solver stopped with status {}", sol.status.as_str()));
        }
        report.rows.push(OrderRow {
            order: d,
            bound: scaling.cost_to_original(sol.primal_obj),
            dual_objective: scaling.cost_to_original(sol.dual_obj),
            nbar: info.moment_count,
            masses,
            status: sol.status,
            iterations: sol.iterations,
            relative_gap: sol.relative_gap,
            certificate,
            wall_time: start.elapsed().as_secs_f64(),
        });
        last = Some((inst, sol));
    }
    if let (Some(ex), Some((inst, sol))) = (&opts.extract, &last) {
        let d = inst.layout.order;
        let r = ex.r.unwrap_or(d).min(d);
        let res = extract(&scaled, &inst.layout, &sol.y, r, ex.eps, ex.method)?.unscaled(&scaled, &scaling);
        let mut summary = ExtractionSummary {
            order: d,
            r,
            eps: ex.eps,
            mismatch: res.mismatch,
            horizon: res.horizon,
            times: res.times.clone(),
            bounds: res.bounds.clone(),
            states: res.states.clone(),
            duty: res.duty.clone(),
            simulated_cost: None,
            final_state: None,
            max_violation: None,
        };
        match simulate_relaxed(p, &res.schedule(), ex.dt) {
            Ok(traj) => {
                summary.simulated_cost = Some(traj.cost);
                summary.final_state = Some(traj.final_state().to_vec());
                summary.max_violation = Some(traj.max_violation);
            }
            Err(e) => report.warnings.push(format!("simulation skipped: {e}")),
        }
        report.extraction = Some(summary);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::parse_problem;

    const TOY: &str = r#"
name = "toy"
[space]
time = "t"
states = [{ name = "x", box = [-1.0, 1.0] }]
[mode.a]
dynamics = ["0"]
lagrangian = "1"
[mode.b]
dynamics = ["0"]
lagrangian = "2"
[boundary]
horizon = { fixed = 2.0 }
initial = { fixed = [0.0] }
terminal = { fixed = [0.0] }
"#;

    #[test]
    fn empty_sweep_is_header_only() {
        let p = parse_problem(TOY).unwrap();
        let r = HierarchyReport::empty(&p);
        let mut out = Vec::new();
        r.emit(Format::Csv, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "d,p_d,nbar,mass_1,mass_2,dual,status,iterations\n");
    }

    #[test]
    fn toy_sweep_reports_original_units() {
        let p = parse_problem(TOY).unwrap();
        let opts = RunOptions {
            d_max: 2,
            ..RunOptions::default()
        };
        let r = run(&p, &opts).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(r.all_optimal());
        for row in &r.rows {
            // all the time goes to the cheaper mode
            assert!((row.bound - 2.0).abs() < 1e-6, "{}", row.bound);
            assert!((row.masses[0] - 2.0).abs() < 1e-5 && row.masses[1].abs() < 1e-5);
            let c = row.certificate.as_ref().unwrap();
            assert!((c.dual_value - row.dual_objective).abs() < 1e-8);
        }
    }

    #[test]
    fn low_order_is_raised_with_a_warning() {
        let p = parse_problem(&TOY.replace("lagrangian = \"2\"", "lagrangian = \"x^4\"")).unwrap();
        let opts = RunOptions {
            d_min: Some(1),
            d_max: 2,
            certify: false,
            ..RunOptions::default()
        };
        let r = run(&p, &opts).unwrap();
        assert_eq!(r.rows.first().unwrap().order, 2);
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn formats_parse() {
        assert_eq!("json".parse::<Format>().unwrap(), Format::Json);
        assert!("xml".parse::<Format>().is_err());
    }
}
