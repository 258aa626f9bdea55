//! File-level runners behind the `fractrack` binary.
//!
//! Every runner is deterministic: the same scenario and flags produce
//! byte-identical files. Floats are written in Rust's shortest round-trip
//! form, so `control_modal.csv` replays a control exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{Layout, ModalTrajectory};
use crate::optimize::{CostBreakdown, Method, OptimizationReport, TrackingMetrics, TrackingProblem};
use crate::scenario::{CompiledScenario, TrackingScenario, REFERENCE_EXAMPLE};
use crate::spectral::SpectralBasis;
use crate::verify::{run_suite, Suite, SuiteReport};

/// Number of uniform spatial points in every exported grid.
pub const EXPORT_POINTS: usize = 101;

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 }).collect()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(csv_error)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Validation(format!("csv: {other:?}")),
    }
}

fn write_record<W: std::io::Write>(w: &mut csv::Writer<W>, fields: &[f64]) -> Result<()> {
    w.write_record(fields.iter().map(|v| v.to_string())).map_err(csv_error)
}

/// Writes a "t,x,value" grid with one block of rows per time node.
fn write_grid(path: &Path, times: &[f64], xs: &[f64], value: impl Fn(usize, &[f64]) -> Result<Vec<f64>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t", "x", "value"]).map_err(csv_error)?;
    for (i, &t) in times.iter().enumerate() {
        let vals = value(i, xs)?;
        for (&x, &v) in xs.iter().zip(&vals) {
            write_record(&mut w, &[t, x, v])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_field_grid(path: &Path, basis: &SpectralBasis, traj: &ModalTrajectory, xs: &[f64]) -> Result<()> {
    let times = traj.grid().nodes();
    write_grid(path, &times, xs, |i, xs| basis.synthesize(&traj.field(i), xs))
}

/// Modal coefficients of a cellwise control, one row per (step, mode).
pub fn write_modal_control(path: &Path, u: &ModalTrajectory) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["step", "mode", "value"]).map_err(csv_error)?;
    for j in 0..u.rows() {
        for k in 0..u.n_modes() {
            w.write_record([j.to_string(), k.to_string(), u.get(j, k).to_string()]).map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_modal_control`] for the given problem shape.
pub fn read_modal_control(path: &Path, problem: &TrackingProblem) -> Result<ModalTrajectory> {
    let mut u = problem.zero_control();
    let (n, m) = (u.rows(), u.n_modes());
    let mut seen = vec![false; n * m];
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let bad = |what: &str| Error::Validation(format!("{}: row {}: {what}", path.display(), line + 2));
        if rec.len() != 3 {
            return Err(bad("expected step,mode,value"));
        }
        let j: usize = rec[0].trim().parse().map_err(|_| bad("step is not an index"))?;
        let k: usize = rec[1].trim().parse().map_err(|_| bad("mode is not an index"))?;
        let v: f64 = rec[2].trim().parse().map_err(|_| bad("value is not a number"))?;
        if j >= n || k >= m {
            return Err(bad(&format!("(step {j}, mode {k}) outside the {n} x {m} control grid")));
        }
        if !v.is_finite() {
            return Err(bad("value is not finite"));
        }
        seen[j * m + k] = true;
        u.set(j, k, v);
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!(
            "{}: control grid incomplete, first missing entry step {}, mode {} ({} x {} expected)",
            path.display(),
            missing / m,
            missing % m,
            n,
            m
        )));
    }
    Ok(u)
}

/// Contents of summary.json.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub status: &'static str,
    pub method: Method,
    pub converged: bool,
    pub alpha: f64,
    pub n_modes: usize,
    pub n_steps: usize,
    pub cost: CostBreakdown,
    pub terminal_error: f64,
    pub trajectory_error_sup: f64,
    pub trajectory_error_l2: f64,
    pub control_norm: f64,
    pub variational_residual: f64,
    pub residual_tolerance: f64,
    /// ‖z̄(0)‖_{L²(Q)}, the scale the residual is judged against.
    pub adjoint_norm_at_zero: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub unknowns: usize,
    pub iterations: Option<usize>,
    pub relaxation: Option<f64>,
    pub linear_residual: Option<f64>,
    pub message: String,
}

impl Summary {
    fn new(scenario: &CompiledScenario, report: &OptimizationReport, adjoint_norm_at_zero: f64) -> Self {
        let TrackingMetrics {
            terminal_error,
            trajectory_error_sup,
            trajectory_error_l2,
            control_norm,
        } = report.metrics;
        Self {
            scenario: scenario.scenario.name.clone(),
            status: if report.converged { "converged" } else { "not_converged" },
            method: report.method,
            converged: report.converged,
            alpha: scenario.scenario.alpha,
            n_modes: scenario.scenario.discretization.n_modes,
            n_steps: scenario.scenario.discretization.n_steps,
            cost: report.cost,
            terminal_error,
            trajectory_error_sup,
            trajectory_error_l2,
            control_norm,
            variational_residual: report.variational_residual,
            residual_tolerance: report.residual_tolerance,
            adjoint_norm_at_zero,
            diagnostics: Diagnostics {
                unknowns: report.unknowns,
                iterations: report.iterations,
                relaxation: report.relaxation,
                linear_residual: report.linear_residual,
                message: report.message.clone(),
            },
        }
    }
}

/// Diagnostic written instead of a summary when the run fails outright.
#[derive(Debug, Clone, Serialize)]
pub struct FailureReport {
    pub status: &'static str,
    pub stage: &'static str,
    pub error: String,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ExportOptions {
    /// Write desired.csv on the whole domain using the piecewise extension
    /// 0.25·y_d(left, 0) left of the region and y_d(left, 0) right of it.
    pub full_domain_desired: bool,
}

/// Outcome of [`run_optimize`]: the summary and whether the run succeeded.
#[derive(Debug, Clone)]
pub struct OptimizeOutcome {
    pub summary: Summary,
    pub files: Vec<PathBuf>,
}

impl OptimizeOutcome {
    pub fn success(&self) -> bool {
        self.summary.converged
    }
}

fn export_state(dir: &Path, scenario: &CompiledScenario, basis: &SpectralBasis, y: &ModalTrajectory) -> Result<Vec<PathBuf>> {
    let length = scenario.scenario.operator.length;
    let region = scenario.region();
    let full = linspace(0.0, length, EXPORT_POINTS);
    let on_region = linspace(region.left, region.right, EXPORT_POINTS);

    let state = dir.join("state.csv");
    write_field_grid(&state, basis, y, &full)?;

    let final_slice = dir.join("final_slice.csv");
    let n = y.grid().n_steps();
    let yt = basis.synthesize(&y.field(n), &on_region)?;
    let mut w = csv_writer(&final_slice)?;
    w.write_record(["x", "state", "target"]).map_err(csv_error)?;
    for (&x, &v) in on_region.iter().zip(&yt) {
        write_record(&mut w, &[x, v, scenario.terminal_at(x)])?;
    }
    w.flush()?;
    Ok(vec![state, final_slice])
}

/// Solves the scenario and writes summary.json, state.csv, desired.csv,
/// error.csv, control.csv, final_slice.csv and control_modal.csv.
///
/// A solver that runs but misses its tolerance still writes every file and
/// reports `status: not_converged`. A hard failure writes summary.json with
/// the error and returns it.
pub fn run_optimize(scenario: &CompiledScenario, out: &Path, export: ExportOptions) -> Result<OptimizeOutcome> {
    fs::create_dir_all(out)?;
    let fail = |stage: &'static str, e: Error| -> Error {
        let _ = write_json(
            &out.join("summary.json"),
            &FailureReport {
                status: "failed",
                stage,
                error: e.to_string(),
            },
        );
        e
    };
    let problem = scenario.problem().map_err(|e| fail("setup", e))?;
    let report = match scenario.scenario.solver.method {
        Method::Direct => problem.solve_direct(scenario.direct_options()),
        Method::FixedPoint => problem.solve_fixed_point(scenario.fixed_point_options()),
    }
    .map_err(|e| fail("solve", e))?;
    let z0 = problem
        .adjoint(&problem.forward(&problem.zero_control())?)?
        .cell_average()
        .l2_norm();
    let summary = Summary::new(scenario, &report, z0);

    let basis = problem.basis();
    let region = scenario.region();
    let length = scenario.scenario.operator.length;
    let full = linspace(0.0, length, EXPORT_POINTS);
    let on_region = linspace(region.left, region.right, EXPORT_POINTS);
    let times = problem.grid().nodes();
    let mut files = export_state(out, scenario, basis, &report.state)?;

    let desired = out.join("desired.csv");
    if export.full_domain_desired {
        let anchor = scenario.desired.eval(region.left, 0.0);
        write_grid(&desired, &times, &full, |i, xs| {
            Ok(xs
                .iter()
                .map(|&x| {
                    if x < region.left {
                        0.25 * anchor
                    } else if x > region.right {
                        anchor
                    } else {
                        scenario.desired.eval(x, times[i])
                    }
                })
                .collect())
        })?;
    } else {
        write_grid(&desired, &times, &on_region, |i, xs| {
            Ok(xs.iter().map(|&x| scenario.desired.eval(x, times[i])).collect())
        })?;
    }

    let error = out.join("error.csv");
    write_grid(&error, &times, &on_region, |i, xs| {
        let y = basis.synthesize(&report.state.field(i), xs)?;
        Ok(xs.iter().zip(y).map(|(&x, y)| y - scenario.desired.eval(x, times[i])).collect())
    })?;

    let control = out.join("control.csv");
    write_field_grid(&control, basis, &report.control.to_nodal(), &full)?;

    let modal = out.join("control_modal.csv");
    write_modal_control(&modal, &report.control)?;

    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    files.extend([desired, error, control, modal, summary_path]);
    Ok(OptimizeOutcome { summary, files })
}

/// Contents of forward.json.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardSummary {
    pub scenario: String,
    pub cost: CostBreakdown,
    pub terminal_error: f64,
    pub trajectory_error_sup: f64,
    pub trajectory_error_l2: f64,
    pub control_norm: f64,
}

/// Simulates the scenario under a given modal control (or none) and writes
/// state.csv, final_slice.csv and forward.json.
pub fn run_forward(scenario: &CompiledScenario, control: Option<&Path>, out: &Path) -> Result<ForwardSummary> {
    let problem = scenario.problem()?;
    let u = match control {
        Some(path) => read_modal_control(path, &problem)?,
        None => problem.zero_control(),
    };
    debug_assert_eq!(u.layout(), Layout::Cellwise);
    fs::create_dir_all(out)?;
    let y = problem.forward(&u)?;
    export_state(out, scenario, problem.basis(), &y)?;
    let m = problem.metrics(&y, &u)?;
    let summary = ForwardSummary {
        scenario: scenario.scenario.name.clone(),
        cost: problem.cost(&u)?,
        terminal_error: m.terminal_error,
        trajectory_error_sup: m.trajectory_error_sup,
        trajectory_error_l2: m.trajectory_error_l2,
        control_norm: m.control_norm,
    };
    write_json(&out.join("forward.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Runs the given suites (all when empty) and optionally writes the report.
pub fn run_verify(suites: &[Suite], out: Option<&Path>) -> Result<VerifyReport> {
    let chosen: Vec<Suite> = if suites.is_empty() { Suite::ALL.to_vec() } else { suites.to_vec() };
    let suites = chosen.into_iter().map(run_suite).collect::<Result<Vec<_>>>()?;
    let report = VerifyReport {
        passed: suites.iter().all(|s| s.passed),
        suites,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("verify.json"), &report)?;
    }
    Ok(report)
}

/// The shipped scenario, verbatim.
pub fn show_example() -> &'static str {
    REFERENCE_EXAMPLE
}

/// Loads a scenario file, or the shipped one when no path is given, and
/// applies command-line overrides.
pub fn prepare(path: Option<&Path>, n_modes: Option<usize>, n_steps: Option<usize>, method: Option<Method>) -> Result<CompiledScenario> {
    let (scenario, raw) = match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            (TrackingScenario::from_json(&text)?, text)
        }
        None => (TrackingScenario::reference_example(), REFERENCE_EXAMPLE.to_string()),
    };
    scenario.with_overrides(n_modes, n_steps, method).compile_with_source(Some(&raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> CompiledScenario {
        prepare(None, Some(4), Some(12), None).unwrap()
    }

    #[test]
    fn linspace_hits_both_ends() {
        let v = linspace(0.3, 0.7, 101);
        assert_eq!((v[0], v[100], v.len()), (0.3, 0.7, 101));
    }

    #[test]
    fn modal_control_round_trip_is_exact() {
        let sc = small();
        let problem = sc.problem().unwrap();
        let u = crate::verify::random_direction(problem.grid(), problem.n_modes(), 3).scaled(1.0 / 3.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        write_modal_control(&p, &u).unwrap();
        assert_eq!(read_modal_control(&p, &problem).unwrap(), u);
    }

    #[test]
    fn incomplete_or_misshapen_control_is_rejected() {
        let sc = small();
        let problem = sc.problem().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u.csv");
        fs::write(&p, "step,mode,value\n0,0,1.0\n").unwrap();
        assert!(matches!(read_modal_control(&p, &problem), Err(Error::Validation(_))));
        fs::write(&p, "step,mode,value\n12,0,1.0\n").unwrap();
        assert!(matches!(read_modal_control(&p, &problem), Err(Error::Validation(_))));
    }
}
