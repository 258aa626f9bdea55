//! Tracking cost, its exact discrete gradient, and the optimality system.
//!
//! J(u) = (r₁/2)∫‖χ_ω y - y_d‖² dt + (r₂/2)‖χ_ω y(T) - y_dT‖² + (r₃/2)∫‖u‖² dt
//!
//! With cellwise controls and trapezoidal time quadrature J is a strictly
//! convex quadratic in the control coefficients. Its gradient is
//! h·(r₃u + z̄(u)) where z̄ is the step-averaged adjoint state, so the
//! unconstrained optimum solves u = -z̄(u)/r₃.

use faer::linalg::solvers::Solve;
use faer::{Accum, Mat, Par, Side};
use serde::{Deserialize, Serialize};

use crate::adjoint::{solve_adjoint_with, AdjointState, TrackingData};
use crate::calculus::TimeGrid;
use crate::error::{domain, shape, Error, Result};
use crate::forward::{Layout, ModalTrajectory, Propagators};
use crate::spectral::{SpectralBasis, SpectralField};

/// Weights of the tracking, terminal and control terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostWeights {
    r1: f64,
    r2: f64,
    r3: f64,
}

impl CostWeights {
    pub fn new(r1: f64, r2: f64, r3: f64) -> Result<Self> {
        if !(r1.is_finite() && r2.is_finite() && r3.is_finite()) {
            return domain("cost weights must be finite");
        }
        if r1 < 0.0 || r2 < 0.0 {
            return domain(format!("tracking weights must be non-negative, got r1 = {r1}, r2 = {r2}"));
        }
        if !(r3 > 0.0) {
            return domain(format!("control weight r3 must be positive, got {r3}"));
        }
        Ok(Self { r1, r2, r3 })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r2(&self) -> f64 {
        self.r2
    }

    pub fn r3(&self) -> f64 {
        self.r3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub total: f64,
    pub tracking: f64,
    pub terminal: f64,
    pub control: f64,
}

/// Discrete J: trapezoid in time for the tracking term, Gram quadratic forms
/// in space, and the layout's own quadrature for the control.
pub fn evaluate_cost(
    y: &ModalTrajectory,
    u: &ModalTrajectory,
    data: &TrackingData,
    weights: &CostWeights,
) -> Result<CostBreakdown> {
    data.check_state(y)?;
    if u.grid() != y.grid() || u.n_modes() != y.n_modes() {
        return shape("control and state disagree on grid or mode count");
    }
    let omega = y.grid().trapezoid_weights();
    let running: f64 = (0..y.rows()).map(|i| omega[i] * data.running_sq(y.row(i), i)).sum();
    let tracking = 0.5 * weights.r1 * running;
    let terminal = 0.5 * weights.r2 * data.terminal_sq_error(y.row(y.rows() - 1));
    let control = 0.5 * weights.r3 * u.inner(u)?;
    Ok(CostBreakdown {
        total: tracking + terminal + control,
        tracking,
        terminal,
        control,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointOptions {
    /// θ in u ← (1-θ)u + θ·update(u); `None` picks min(1, r₃/(r₁+r₂+r₃)).
    pub relaxation: Option<f64>,
    pub max_iter: usize,
    /// Stop once ‖r₃u + z̄(u)‖ ≤ tol·‖z̄(0)‖.
    pub tol: f64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            relaxation: None,
            max_iter: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    /// Convergence requires a variational residual below tol·‖z̄(0)‖.
    pub tol: f64,
    pub refinement_steps: usize,
}

impl Default for DirectOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            refinement_steps: 2,
        }
    }
}

/// Error measures of a controlled state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrackingMetrics {
    /// ‖χ_ω y(T) - y_dT‖_{L²(ω)}
    pub terminal_error: f64,
    /// max over nodes of ‖χ_ω y(t) - y_d(t)‖_{L²(ω)}
    pub trajectory_error_sup: f64,
    /// ‖χ_ω y - y_d‖_{L²(Q_ω)}, trapezoid in time
    pub trajectory_error_l2: f64,
    /// ‖u‖_{L²(Q)}
    pub control_norm: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub control: ModalTrajectory,
    pub state: ModalTrajectory,
    pub cost: CostBreakdown,
    pub metrics: TrackingMetrics,
    /// ‖r₃u + z̄(u)‖_{L²(Q)}
    pub variational_residual: f64,
    /// Bound that `converged` certifies for `variational_residual`.
    pub residual_tolerance: f64,
    pub method: Method,
    pub converged: bool,
    pub iterations: Option<usize>,
    pub relaxation: Option<f64>,
    pub unknowns: usize,
    /// ‖Hu + b‖/‖b‖ of the assembled normal equations.
    pub linear_residual: Option<f64>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientCheckRow {
    pub step: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    /// ⟨r₃u + z̄(u), d⟩_{L²(Q)}
    pub directional_derivative: f64,
    /// Size of the terms that cancel in the directional derivative, used
    /// to normalize errors: |⟨r₃u, d⟩| + |⟨z̄(u), d⟩|.
    pub scale: f64,
    pub rows: Vec<GradientCheckRow>,
    /// Slope of log error against log step; `None` when every error is at
    /// round-off level, as it should be for a quadratic cost.
    pub observed_order: Option<f64>,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.rows.iter().map(|r| r.relative_error).fold(0.0, f64::max)
    }
}

/// A complete discrete tracking problem with cached propagators.
#[derive(Debug, Clone)]
pub struct TrackingProblem {
    basis: SpectralBasis,
    y0: SpectralField,
    data: TrackingData,
    weights: CostWeights,
    props: Propagators,
    free: ModalTrajectory,
}

impl TrackingProblem {
    pub fn new(
        basis: SpectralBasis,
        alpha: f64,
        y0: SpectralField,
        data: TrackingData,
        weights: CostWeights,
    ) -> Result<Self> {
        if !basis.is_self_adjoint() {
            return Err(Error::Unsupported(
                "optimal control requires a self-adjoint operator".into(),
            ));
        }
        basis.check_field(&y0)?;
        if data.n_modes() != basis.n_modes() {
            return shape("tracking data and basis disagree on the mode count");
        }
        let props = Propagators::new(&basis, alpha, data.grid())?;
        let free = props.propagate_free(&y0)?;
        Ok(Self {
            basis,
            y0,
            data,
            weights,
            props,
            free,
        })
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn alpha(&self) -> f64 {
        self.props.alpha()
    }

    pub fn grid(&self) -> TimeGrid {
        self.props.grid()
    }

    pub fn n_modes(&self) -> usize {
        self.basis.n_modes()
    }

    pub fn initial_state(&self) -> &SpectralField {
        &self.y0
    }

    pub fn data(&self) -> &TrackingData {
        &self.data
    }

    pub fn weights(&self) -> &CostWeights {
        &self.weights
    }

    pub fn propagators(&self) -> &Propagators {
        &self.props
    }

    pub fn zero_control(&self) -> ModalTrajectory {
        ModalTrajectory::zeros(self.grid(), self.n_modes(), Layout::Cellwise)
    }

    fn check_control(&self, u: &ModalTrajectory) -> Result<()> {
        if u.layout() != Layout::Cellwise || u.grid() != self.grid() || u.n_modes() != self.n_modes() {
            return shape("control must be cellwise on the problem grid with matching modes");
        }
        Ok(())
    }

    pub fn forward(&self, u: &ModalTrajectory) -> Result<ModalTrajectory> {
        self.check_control(u)?;
        self.free.axpy(1.0, &self.props.convolve(u)?)
    }

    pub fn adjoint(&self, y: &ModalTrajectory) -> Result<AdjointState> {
        solve_adjoint_with(&self.props, y, &self.data, &self.weights)
    }

    pub fn cost(&self, u: &ModalTrajectory) -> Result<CostBreakdown> {
        evaluate_cost(&self.forward(u)?, u, &self.data, &self.weights)
    }

    /// r₃u + z̄(u), the L²(Q) gradient of J.
    pub fn gradient(&self, u: &ModalTrajectory) -> Result<ModalTrajectory> {
        let z = self.adjoint(&self.forward(u)?)?;
        z.cell_average().axpy(self.weights.r3, u)
    }

    /// -z̄(u)/r₃: one application of the optimality map.
    pub fn control_update(&self, u: &ModalTrajectory) -> Result<ModalTrajectory> {
        let z = self.adjoint(&self.forward(u)?)?;
        Ok(z.cell_average().scaled(-1.0 / self.weights.r3))
    }

    pub fn variational_residual(&self, u: &ModalTrajectory) -> Result<f64> {
        Ok(self.gradient(u)?.l2_norm())
    }

    pub fn metrics(&self, y: &ModalTrajectory, u: &ModalTrajectory) -> Result<TrackingMetrics> {
        let errs = self.data.tracking_errors(y)?;
        let omega = self.grid().trapezoid_weights();
        Ok(TrackingMetrics {
            terminal_error: self.data.terminal_error(y)?,
            trajectory_error_sup: errs.iter().cloned().fold(0.0, f64::max),
            trajectory_error_l2: errs.iter().zip(&omega).map(|(e, w)| w * e * e).sum::<f64>().sqrt(),
            control_norm: u.l2_norm(),
        })
    }

    /// Central differences of J along `direction` against the adjoint gradient.
    pub fn gradient_check(&self, u: &ModalTrajectory, direction: &ModalTrajectory, steps: &[f64]) -> Result<GradientCheck> {
        self.check_control(direction)?;
        if direction.l2_norm() == 0.0 {
            return domain("gradient check needs a nonzero direction");
        }
        let z = self.adjoint(&self.forward(u)?)?;
        let control_part = self.weights.r3 * u.inner(direction)?;
        let adjoint_part = z.cell_average().inner(direction)?;
        let analytic = control_part + adjoint_part;
        let scale = (control_part.abs() + adjoint_part.abs()).max(f64::MIN_POSITIVE);
        let mut rows = Vec::with_capacity(steps.len());
        for &s in steps {
            if !(s > 0.0) {
                return domain(format!("finite-difference steps must be positive, got {s}"));
            }
            let plus = self.cost(&u.axpy(s, direction)?)?.total;
            let minus = self.cost(&u.axpy(-s, direction)?)?.total;
            let fd = (plus - minus) / (2.0 * s);
            rows.push(GradientCheckRow {
                step: s,
                finite_difference: fd,
                relative_error: (fd - analytic).abs() / scale,
            });
        }
        let resolved: Vec<&GradientCheckRow> = rows.iter().filter(|r| r.relative_error > 1e-12).collect();
        let observed_order = (resolved.len() >= 2).then(|| {
            let (a, b) = (resolved[0], resolved[resolved.len() - 1]);
            (b.relative_error / a.relative_error).ln() / (b.step / a.step).ln()
        });
        Ok(GradientCheck {
            directional_derivative: analytic,
            scale,
            rows,
            observed_order,
        })
    }

    fn report(
        &self,
        u: ModalTrajectory,
        method: Method,
        residual_tolerance: f64,
        criterion_met: bool,
        message: String,
    ) -> Result<OptimizationReport> {
        let y = self.forward(&u)?;
        let cost = evaluate_cost(&y, &u, &self.data, &self.weights)?;
        let metrics = self.metrics(&y, &u)?;
        let residual = self.variational_residual(&u)?;
        let converged = criterion_met && residual <= residual_tolerance;
        Ok(OptimizationReport {
            unknowns: u.data().len(),
            control: u,
            state: y,
            cost,
            metrics,
            variational_residual: residual,
            residual_tolerance,
            method,
            converged,
            iterations: None,
            relaxation: None,
            linear_residual: None,
            message,
        })
    }

    /// Damped iteration u ← (1-θ)u + θ·control_update(u) from u = 0.
    pub fn solve_fixed_point(&self, options: FixedPointOptions) -> Result<OptimizationReport> {
        let w = &self.weights;
        let theta = options
            .relaxation
            .unwrap_or_else(|| (w.r3 / (w.r1 + w.r2 + w.r3)).min(1.0));
        if !(theta > 0.0 && theta <= 1.0) {
            return domain(format!("relaxation must lie in (0, 1], got {theta}"));
        }
        if !(options.tol > 0.0) {
            return domain("fixed-point tolerance must be positive");
        }
        let mut u = self.zero_control();
        let mut next = self.control_update(&u)?;
        // ‖z̄(0)‖, the same scale the direct solver is judged against
        let residual_tolerance = options.tol * w.r3 * next.l2_norm();
        let mut iterations = 0;
        let mut outcome = None;
        let mut criterion_met = false;
        loop {
            // r₃u + z̄(u) = r₃(u - update(u))
            let residual = w.r3 * u.axpy(-1.0, &next)?.l2_norm();
            if residual <= residual_tolerance {
                criterion_met = true;
                break;
            }
            if iterations == options.max_iter {
                outcome = Some(format!("iteration limit {} reached, residual {residual:e}", options.max_iter));
                break;
            }
            iterations += 1;
            u = u.scaled(1.0 - theta).axpy(theta, &next)?;
            let size = u.l2_norm();
            if !size.is_finite() || size > 1e12 * next.l2_norm().max(f64::MIN_POSITIVE) {
                outcome = Some(format!("diverged after {iterations} iterations (control norm {size:e})"));
                break;
            }
            next = self.control_update(&u)?;
        }
        let message = outcome.unwrap_or_else(|| format!("variational residual within tolerance after {iterations} iterations"));
        let mut report = self.report(u, Method::FixedPoint, residual_tolerance, criterion_met, message)?;
        report.iterations = Some(iterations);
        report.relaxation = Some(theta);
        Ok(report)
    }

    /// Normal-equation matrix H of the discrete problem, J(u) = ½uᵀHu + bᵀu + c,
    /// with unknowns ordered mode-major (index k·n + j).
    ///
    /// H_{(k,j),(l,j')} = G_kl (S_kᵀS_l)_{jj'} + r₃h δ, where S_k has rows
    /// √Ω_i W_k(i-j) and Ω carries the trapezoid and terminal weights.
    pub fn normal_matrix(&self) -> Mat<f64> {
        let grid = self.grid();
        let n = grid.n_steps();
        let m = self.n_modes();
        let h = grid.step();
        let mut omega = grid.trapezoid_weights();
        omega.iter_mut().for_each(|v| *v *= self.weights.r1);
        omega[n] += self.weights.r2;
        let root: Vec<f64> = omega.iter().map(|v| v.sqrt()).collect();

        let mut s = Mat::<f64>::zeros(n + 1, n * m);
        for k in 0..m {
            let w = self.props.weights_of(k);
            for j in 0..n {
                for i in j + 1..=n {
                    s[(i, k * n + j)] = root[i] * w[i - j];
                }
            }
        }
        let mut hess = Mat::<f64>::zeros(n * m, n * m);
        faer::linalg::matmul::matmul(&mut hess, Accum::Replace, s.transpose(), &s, 1.0, Par::Seq);
        let gram = self.data.gram();
        for k in 0..m {
            for l in 0..m {
                let g = gram.get(k, l);
                for j in 0..n {
                    for jp in 0..n {
                        hess[(k * n + j, l * n + jp)] *= g;
                    }
                }
            }
        }
        for d in 0..n * m {
            hess[(d, d)] += self.weights.r3 * h;
        }
        hess
    }

    /// Cholesky solve of the normal equations Hu = -h·z̄(0).
    pub fn solve_direct(&self, options: DirectOptions) -> Result<OptimizationReport> {
        let grid = self.grid();
        let n = grid.n_steps();
        let m = self.n_modes();
        let h = grid.step();
        let zero = self.zero_control();
        let z0 = self.adjoint(&self.forward(&zero)?)?;
        let z0_norm = z0.cell_average().l2_norm();
        let residual_tolerance = options.tol * z0_norm;
        if z0_norm == 0.0 {
            return self.report(zero, Method::Direct, 0.0, true, "zero gradient at u = 0".into());
        }

        let hess = self.normal_matrix();
        let mut rhs = Mat::<f64>::zeros(n * m, 1);
        for k in 0..m {
            for j in 0..n {
                rhs[(k * n + j, 0)] = -h * z0.cell_average().get(j, k);
            }
        }
        let llt = hess
            .llt(Side::Lower)
            .map_err(|e| Error::Solver(format!("Cholesky factorization failed: {e:?}")))?;
        let mut x = llt.solve(&rhs);
        let rhs_norm = rhs.norm_l2();
        let mut linear_residual = f64::NAN;
        for pass in 0..=options.refinement_steps {
            let mut r = rhs.clone();
            faer::linalg::matmul::matmul(&mut r, Accum::Add, &hess, &x, -1.0, Par::Seq);
            linear_residual = r.norm_l2() / rhs_norm;
            if pass == options.refinement_steps {
                break;
            }
            let dx = llt.solve(&r);
            x += &dx;
        }
        if !linear_residual.is_finite() {
            return Err(Error::Solver("normal equations produced a non-finite solution".into()));
        }
        let mut u = zero;
        for k in 0..m {
            for j in 0..n {
                u.set(j, k, x[(k * n + j, 0)]);
            }
        }
        let mut report = self.report(
            u,
            Method::Direct,
            residual_tolerance,
            true,
            format!("Cholesky solve of {} unknowns", n * m),
        )?;
        report.linear_residual = Some(linear_residual);
        Ok(report)
    }
}
