//! Scenario files: a JSON document describing one tracking problem.
//!
//! Spatial and space-time data are either closed-form expressions (see
//! [`crate::expr`]) or sampled tables interpolated linearly (bilinearly in
//! space-time). The terminal target may be declared as the final slice of
//! the desired trajectory.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adjoint::TrackingData;
use crate::calculus::TimeGrid;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::optimize::{CostWeights, DirectOptions, FixedPointOptions, Method, TrackingProblem};
use crate::spectral::{Region, SpectralBasis};

pub const SCHEMA: &str = "fractrack.scenario/1";

/// The shipped reproduction scenario.
pub const REFERENCE_EXAMPLE: &str = include_str!("../scenarios/reference_example.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    pub diffusivity: f64,
    pub reaction: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Discretization {
    pub n_modes: usize,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSpec {
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
}

/// Samples of f(x) on increasing abscissae.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1d {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
}

/// Samples of f(x, t); `values[i][j]` is f(x[j], t[i]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table2d {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialSource {
    Expression(String),
    Table(Table1d),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpaceTimeSource {
    Expression(String),
    Table(Table2d),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TerminalSource {
    Expression(String),
    Table(Table1d),
    /// y_dT = y_d(·, T)
    FinalSlice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: Method,
    /// Direct: residual ≤ tol·‖z̄(0)‖. Fixed point: relative step tolerance.
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relaxation: Option<f64>,
    pub max_iter: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: Method::Direct,
            tol: 1e-8,
            relaxation: None,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackingScenario {
    pub schema: String,
    pub name: String,
    pub operator: OperatorSpec,
    pub alpha: f64,
    pub horizon: f64,
    pub region: RegionSpec,
    pub discretization: Discretization,
    pub weights: WeightSpec,
    pub initial_state: SpatialSource,
    pub desired: SpaceTimeSource,
    pub terminal: TerminalSource,
    #[serde(default)]
    pub solver: SolverSpec,
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Validation(msg.into()))
}

/// 1-based line and column of byte `offset` in `text`.
fn position(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_expr(field: &str, source: &str, raw: Option<&str>) -> Result<Expr> {
    Expr::parse(source).map_err(|e| match e {
        Error::Parse { line, column, message } => {
            // Report the position inside the scenario file when the literal can be found.
            let located = raw.and_then(|text| {
                let quoted = serde_json::to_string(source).ok()?;
                let start = text.find(&quoted)? + 1;
                let (l, c) = position(text, start);
                Some(if line == 1 { (l, c + column - 1) } else { (l + line - 1, column) })
            });
            let (line, column) = located.unwrap_or((line, column));
            Error::Parse {
                line,
                column,
                message: format!("{field}: {message}"),
            }
        }
        other => other,
    })
}

fn check_increasing(name: &str, v: &[f64]) -> Result<()> {
    if v.len() < 2 {
        return invalid(format!("{name} needs at least two samples"));
    }
    if v.iter().any(|a| !a.is_finite()) || v.windows(2).any(|w| w[0] >= w[1]) {
        return invalid(format!("{name} must be finite and strictly increasing"));
    }
    Ok(())
}

fn check_cover(name: &str, v: &[f64], lo: f64, hi: f64) -> Result<()> {
    let tol = 1e-12 * (hi - lo).abs().max(1.0);
    if v[0] > lo + tol || v[v.len() - 1] < hi - tol {
        return invalid(format!("{name} samples [{}, {}] do not cover [{lo}, {hi}]", v[0], v[v.len() - 1]));
    }
    Ok(())
}

/// Index i with v[i] ≤ s ≤ v[i+1] and the weight of v[i+1]; clamps to the ends.
fn bracket(v: &[f64], s: f64) -> (usize, f64) {
    let n = v.len();
    if s <= v[0] {
        return (0, 0.0);
    }
    if s >= v[n - 1] {
        return (n - 2, 1.0);
    }
    let i = v.partition_point(|&a| a <= s) - 1;
    (i, (s - v[i]) / (v[i + 1] - v[i]))
}

impl Table1d {
    fn validate(&self, name: &str, lo: f64, hi: f64) -> Result<()> {
        check_increasing(&format!("{name}.x"), &self.x)?;
        if self.values.len() != self.x.len() || self.values.iter().any(|v| !v.is_finite()) {
            return invalid(format!("{name}.values must hold one finite value per x sample"));
        }
        check_cover(&format!("{name}.x"), &self.x, lo, hi)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, w) = bracket(&self.x, x);
        (1.0 - w) * self.values[i] + w * self.values[i + 1]
    }
}

impl Table2d {
    fn validate(&self, name: &str, region: (f64, f64), horizon: f64) -> Result<()> {
        check_increasing(&format!("{name}.x"), &self.x)?;
        check_increasing(&format!("{name}.t"), &self.t)?;
        if self.values.len() != self.t.len()
            || self.values.iter().any(|row| row.len() != self.x.len() || row.iter().any(|v| !v.is_finite()))
        {
            return invalid(format!("{name}.values must be a finite {} x {} grid", self.t.len(), self.x.len()));
        }
        check_cover(&format!("{name}.x"), &self.x, region.0, region.1)?;
        check_cover(&format!("{name}.t"), &self.t, 0.0, horizon)
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        let (j, wx) = bracket(&self.x, x);
        let (i, wt) = bracket(&self.t, t);
        let row = |i: usize| (1.0 - wx) * self.values[i][j] + wx * self.values[i][j + 1];
        (1.0 - wt) * row(i) + wt * row(i + 1)
    }
}

/// Evaluable form of a spatial or space-time source.
#[derive(Debug, Clone)]
pub enum Field {
    Expression(Expr),
    Table1d(Table1d),
    Table2d(Table2d),
}

impl Field {
    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match self {
            Field::Expression(e) => e.eval(x, t),
            Field::Table1d(tab) => tab.eval(x),
            Field::Table2d(tab) => tab.eval(x, t),
        }
    }
}

/// Validated scenario with parsed sources.
#[derive(Debug, Clone)]
pub struct CompiledScenario {
    pub scenario: TrackingScenario,
    pub initial_state: Field,
    pub desired: Field,
    /// `None` when the terminal target is the final slice of `desired`.
    pub terminal: Option<Field>,
}

impl CompiledScenario {
    pub fn region(&self) -> Region {
        Region {
            left: self.scenario.region.left,
            right: self.scenario.region.right,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.scenario.horizon, self.scenario.discretization.n_steps)
    }

    pub fn basis(&self) -> Result<SpectralBasis> {
        let op = &self.scenario.operator;
        SpectralBasis::new(op.diffusivity, op.reaction, op.length, self.scenario.discretization.n_modes)
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let w = &self.scenario.weights;
        CostWeights::new(w.r1, w.r2, w.r3)
    }

    pub fn terminal_at(&self, x: f64) -> f64 {
        match &self.terminal {
            Some(f) => f.eval(x, self.scenario.horizon),
            None => self.desired.eval(x, self.scenario.horizon),
        }
    }

    pub fn problem(&self) -> Result<TrackingProblem> {
        let basis = self.basis()?;
        let grid = self.grid()?;
        let y0 = basis.project(|x| self.initial_state.eval(x, 0.0));
        if y0.coefficients.iter().any(|c| !c.is_finite()) {
            return invalid("initial state is not finite on the domain");
        }
        let desired = |x: f64, t: f64| self.desired.eval(x, t);
        let terminal = |x: f64| self.terminal_at(x);
        let data = TrackingData::from_functions(
            &basis,
            grid,
            self.region(),
            desired,
            self.terminal.as_ref().map(|_| &terminal as &dyn Fn(f64) -> f64),
        )?;
        TrackingProblem::new(basis, self.scenario.alpha, y0, data, self.weights()?)
    }

    pub fn direct_options(&self) -> DirectOptions {
        DirectOptions {
            tol: self.scenario.solver.tol,
            ..DirectOptions::default()
        }
    }

    pub fn fixed_point_options(&self) -> FixedPointOptions {
        let s = &self.scenario.solver;
        FixedPointOptions {
            relaxation: s.relaxation,
            max_iter: s.max_iter,
            tol: s.tol,
        }
    }
}

impl TrackingScenario {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn reference_example() -> Self {
        Self::from_json(REFERENCE_EXAMPLE).expect("shipped scenario parses")
    }

    /// Replaces the discretization and solver method where given.
    pub fn with_overrides(mut self, n_modes: Option<usize>, n_steps: Option<usize>, method: Option<Method>) -> Self {
        if let Some(m) = n_modes {
            self.discretization.n_modes = m;
        }
        if let Some(n) = n_steps {
            self.discretization.n_steps = n;
        }
        if let Some(m) = method {
            self.solver.method = m;
        }
        self
    }

    /// Checks every invariant and parses the sources. `raw` is the file text,
    /// used to place expression errors.
    pub fn compile_with_source(&self, raw: Option<&str>) -> Result<CompiledScenario> {
        if self.schema != SCHEMA {
            return invalid(format!("unsupported schema '{}', expected '{SCHEMA}'", self.schema));
        }
        let op = &self.operator;
        SpectralBasis::new(op.diffusivity, op.reaction, op.length, self.discretization.n_modes.max(1))
            .map_err(|e| Error::Validation(e.to_string()))?;
        if self.discretization.n_modes == 0 {
            return invalid("n_modes must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return invalid(format!("alpha must lie in (0, 1], got {}", self.alpha));
        }
        TimeGrid::new(self.horizon, self.discretization.n_steps).map_err(|e| Error::Validation(e.to_string()))?;
        let RegionSpec { left, right } = self.region;
        Region::new(left, right).map_err(|e| Error::Validation(format!("region: {e}")))?;
        if right > op.length {
            return invalid(format!("region [{left}, {right}] exceeds the domain (0, {})", op.length));
        }
        let w = &self.weights;
        CostWeights::new(w.r1, w.r2, w.r3).map_err(|e| Error::Validation(format!("weights: {e}")))?;
        let s = &self.solver;
        if !(s.tol > 0.0) {
            return invalid("solver.tol must be positive");
        }
        if let Some(theta) = s.relaxation {
            if !(theta > 0.0 && theta <= 1.0) {
                return invalid(format!("solver.relaxation must lie in (0, 1], got {theta}"));
            }
        }
        if s.max_iter == 0 {
            return invalid("solver.max_iter must be at least 1");
        }

        let initial_state = match &self.initial_state {
            SpatialSource::Expression(src) => {
                let e = parse_expr("initial_state", src, raw)?;
                if e.uses_t() {
                    return invalid("initial_state may depend on x only");
                }
                Field::Expression(e)
            }
            SpatialSource::Table(tab) => {
                tab.validate("initial_state", 0.0, op.length)?;
                Field::Table1d(tab.clone())
            }
        };
        let desired = match &self.desired {
            SpaceTimeSource::Expression(src) => Field::Expression(parse_expr("desired", src, raw)?),
            SpaceTimeSource::Table(tab) => {
                tab.validate("desired", (left, right), self.horizon)?;
                Field::Table2d(tab.clone())
            }
        };
        let terminal = match &self.terminal {
            TerminalSource::FinalSlice => None,
            TerminalSource::Expression(src) => {
                let e = parse_expr("terminal", src, raw)?;
                if e.uses_t() {
                    return invalid("terminal target may depend on x only");
                }
                Some(Field::Expression(e))
            }
            TerminalSource::Table(tab) => {
                tab.validate("terminal", left, right)?;
                Some(Field::Table1d(tab.clone()))
            }
        };
        Ok(CompiledScenario {
            scenario: self.clone(),
            initial_state,
            desired,
            terminal,
        })
    }

    pub fn compile(&self) -> Result<CompiledScenario> {
        self.compile_with_source(None)
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: &Path) -> Result<CompiledScenario> {
    let text = std::fs::read_to_string(path)?;
    TrackingScenario::from_json(&text)?.compile_with_source(Some(&text))
}
