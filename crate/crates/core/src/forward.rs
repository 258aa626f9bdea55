//! Mode-by-mode mild solution of ᶜD^α y = A y + u.
//!
//! y_k(t) = E_α(λ_k t^α) y0_k + ∫₀^t (t-τ)^{α-1} E_{α,α}(λ_k (t-τ)^α) u_k(τ) dτ
//!
//! Controls are piecewise constant per time step. The kernel is then
//! integrated exactly over each step through the moment
//! M(s) = s^α E_{α,α+1}(λ s^α), so the weak singularity at τ = t costs
//! nothing. On a uniform grid every quantity depends only on the lag, and
//! the propagator table holds one row of lags per mode.

use serde::{Deserialize, Serialize};

use crate::calculus::{caputo_left, TimeGrid, TimeSeries};
use crate::error::{domain, shape, Result};
use crate::mittag_leffler::{ml, ml_conv_moment, ml_kernel, MlParams};
use crate::spectral::{SpectralBasis, SpectralField};

/// Where the rows of a trajectory live in time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One row per grid node t_0..t_n.
    Nodal,
    /// One row per step [t_j, t_{j+1}), value held constant on the step.
    Cellwise,
}

/// Time-indexed modal coefficients, row-major (time × mode).
#[derive(Debug, Clone, PartialEq)]
pub struct ModalTrajectory {
    grid: TimeGrid,
    n_modes: usize,
    layout: Layout,
    data: Vec<f64>,
}

impl ModalTrajectory {
    pub fn zeros(grid: TimeGrid, n_modes: usize, layout: Layout) -> Self {
        let rows = Self::rows_for(grid, layout);
        Self {
            grid,
            n_modes,
            layout,
            data: vec![0.0; rows * n_modes],
        }
    }

    pub fn from_data(grid: TimeGrid, n_modes: usize, layout: Layout, data: Vec<f64>) -> Result<Self> {
        let rows = Self::rows_for(grid, layout);
        if data.len() != rows * n_modes {
            return shape(format!(
                "trajectory data has {} entries, expected {rows} x {n_modes}",
                data.len()
            ));
        }
        Ok(Self {
            grid,
            n_modes,
            layout,
            data,
        })
    }

    /// Control that is constant in time.
    pub fn constant(grid: TimeGrid, field: &SpectralField, layout: Layout) -> Self {
        let mut t = Self::zeros(grid, field.len(), layout);
        for i in 0..t.rows() {
            t.row_mut(i).copy_from_slice(&field.coefficients);
        }
        t
    }

    fn rows_for(grid: TimeGrid, layout: Layout) -> usize {
        match layout {
            Layout::Nodal => grid.n_nodes(),
            Layout::Cellwise => grid.n_steps(),
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn rows(&self) -> usize {
        Self::rows_for(self.grid, self.layout)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_modes..(i + 1) * self.n_modes]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.n_modes + k]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.data[i * self.n_modes + k] = v;
    }

    pub fn field(&self, i: usize) -> SpectralField {
        SpectralField::new(self.row(i).to_vec())
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, k)).collect()
    }

    pub fn same_shape(&self, other: &ModalTrajectory) -> bool {
        self.grid == other.grid && self.n_modes == other.n_modes && self.layout == other.layout
    }

    pub(crate) fn check_shape(&self, other: &ModalTrajectory, what: &str) -> Result<()> {
        if !self.same_shape(other) {
            return shape(format!("{what}: trajectories differ in grid, modes or layout"));
        }
        Ok(())
    }

    /// Time quadrature weights matching the layout (trapezoid for nodes, exact for cells).
    pub fn time_weights(&self) -> Vec<f64> {
        match self.layout {
            Layout::Nodal => self.grid.trapezoid_weights(),
            Layout::Cellwise => vec![self.grid.step(); self.grid.n_steps()],
        }
    }

    /// ⟨a, b⟩_{L²(Q)}.
    pub fn inner(&self, other: &ModalTrajectory) -> Result<f64> {
        self.check_shape(other, "inner product")?;
        let w = self.time_weights();
        Ok((0..self.rows())
            .map(|i| {
                w[i] * self
                    .row(i)
                    .iter()
                    .zip(other.row(i))
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum())
    }

    /// ‖·‖_{L²(Q)}.
    pub fn l2_norm(&self) -> f64 {
        self.inner(self).unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// self + s·other
    pub fn axpy(&self, s: f64, other: &ModalTrajectory) -> Result<Self> {
        self.check_shape(other, "axpy")?;
        let mut out = self.clone();
        out.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += s * b);
        Ok(out)
    }

    /// Nodal samples of a cellwise control: average of the adjacent steps,
    /// one-sided at the ends.
    pub fn to_nodal(&self) -> Self {
        if self.layout == Layout::Nodal {
            return self.clone();
        }
        let n = self.grid.n_steps();
        let mut out = Self::zeros(self.grid, self.n_modes, Layout::Nodal);
        for i in 0..=n {
            for k in 0..self.n_modes {
                let v = if i == 0 {
                    self.get(0, k)
                } else if i == n {
                    self.get(n - 1, k)
                } else {
                    0.5 * (self.get(i - 1, k) + self.get(i, k))
                };
                out.set(i, k, v);
            }
        }
        out
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("fractional order must lie in (0, 1], got {alpha}"));
    }
    Ok(())
}

/// Mittag-Leffler quantities for every (mode, lag) pair of a uniform grid.
#[derive(Debug, Clone)]
pub struct Propagators {
    alpha: f64,
    grid: TimeGrid,
    lambdas: Vec<f64>,
    // mode-major, n+1 entries per mode, indexed by node or lag
    free: Vec<f64>,
    weights: Vec<f64>,
    kernel: Vec<f64>,
}

impl Propagators {
    pub fn new(basis: &SpectralBasis, alpha: f64, grid: TimeGrid) -> Result<Self> {
        check_alpha(alpha)?;
        let n = grid.n_steps();
        let h = grid.step();
        let m = basis.n_modes();
        let lambdas = basis.eigenvalues().to_vec();
        let e_alpha = MlParams::new(alpha, 1.0)?;
        let mut free = vec![0.0; m * (n + 1)];
        let mut weights = vec![0.0; m * (n + 1)];
        let mut kernel = vec![0.0; m * (n + 1)];
        for (k, &lam) in lambdas.iter().enumerate() {
            let base = k * (n + 1);
            free[base] = 1.0;
            kernel[base] = if alpha == 1.0 { 1.0 } else { f64::INFINITY };
            let mut prev_moment = 0.0;
            for l in 1..=n {
                let t = l as f64 * h;
                free[base + l] = ml(e_alpha, lam * t.powf(alpha))?;
                let moment = ml_conv_moment(alpha, lam, t)?;
                weights[base + l] = moment - prev_moment;
                prev_moment = moment;
                kernel[base + l] = ml_kernel(alpha, lam, t)?;
            }
        }
        Ok(Self {
            alpha,
            grid,
            lambdas,
            free,
            weights,
            kernel,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambdas
    }

    /// E_α(λ_k t_i^α).
    pub fn free(&self, k: usize, i: usize) -> f64 {
        self.free[k * (self.grid.n_steps() + 1) + i]
    }

    /// ∫ over one step at lag ℓ ≥ 1 of the kernel: M(ℓh) - M((ℓ-1)h).
    pub fn step_weight(&self, k: usize, lag: usize) -> f64 {
        self.weights[k * (self.grid.n_steps() + 1) + lag]
    }

    /// (ℓh)^{α-1} E_{α,α}(λ_k (ℓh)^α); at ℓ = 0 it is 1 for α = 1 and infinite otherwise.
    pub fn kernel(&self, k: usize, lag: usize) -> f64 {
        self.kernel[k * (self.grid.n_steps() + 1) + lag]
    }

    pub(crate) fn weights_of(&self, k: usize) -> &[f64] {
        let n1 = self.grid.n_steps() + 1;
        &self.weights[k * n1..(k + 1) * n1]
    }

    fn check_field(&self, y0: &SpectralField) -> Result<()> {
        if y0.len() != self.n_modes() {
            return shape(format!(
                "initial state has {} modes, propagators have {}",
                y0.len(),
                self.n_modes()
            ));
        }
        Ok(())
    }

    pub fn propagate_free(&self, y0: &SpectralField) -> Result<ModalTrajectory> {
        self.check_field(y0)?;
        let n = self.grid.n_steps();
        let m = self.n_modes();
        let mut out = ModalTrajectory::zeros(self.grid, m, Layout::Nodal);
        for k in 0..m {
            out.set(0, k, y0.coefficients[k]);
            for i in 1..=n {
                out.set(i, k, self.free(k, i) * y0.coefficients[k]);
            }
        }
        Ok(out)
    }

    /// Zero-initial-state response to a cellwise control.
    pub fn convolve(&self, control: &ModalTrajectory) -> Result<ModalTrajectory> {
        if control.grid() != self.grid || control.n_modes() != self.n_modes() {
            return shape("control does not match the propagator grid or mode count");
        }
        if control.layout() != Layout::Cellwise {
            return shape("forward solves take cellwise (piecewise-constant) controls");
        }
        let n = self.grid.n_steps();
        let m = self.n_modes();
        let mut out = ModalTrajectory::zeros(self.grid, m, Layout::Nodal);
        for k in 0..m {
            let w = self.weights_of(k);
            let u = control.mode(k);
            for i in 1..=n {
                let s: f64 = (0..i).map(|j| w[i - j] * u[j]).sum();
                out.set(i, k, s);
            }
        }
        Ok(out)
    }

    pub fn solve_forward(&self, y0: &SpectralField, control: &ModalTrajectory) -> Result<ModalTrajectory> {
        let free = self.propagate_free(y0)?;
        let forced = self.convolve(control)?;
        free.axpy(1.0, &forced)
    }
}

/// Free evolution M_α(t) y0 on the grid.
pub fn propagate_free(
    basis: &SpectralBasis,
    y0: &SpectralField,
    alpha: f64,
    grid: TimeGrid,
) -> Result<ModalTrajectory> {
    basis.check_field(y0)?;
    Propagators::new(basis, alpha, grid)?.propagate_free(y0)
}

/// Mild solution driven by a cellwise control.
pub fn solve_forward(
    basis: &SpectralBasis,
    y0: &SpectralField,
    control: &ModalTrajectory,
    alpha: f64,
) -> Result<ModalTrajectory> {
    basis.check_field(y0)?;
    Propagators::new(basis, alpha, control.grid())?.solve_forward(y0, control)
}

/// max_k ‖ᶜD^α y_k - λ_k y_k - u_k‖ over interior nodes, with the Caputo
/// derivative from the L1 scheme. The norm is the discrete L² norm in time.
///
/// Mild solutions behave like t^α near t = 0, where the L1 truncation error
/// does not shrink with h; this norm therefore converges only at order ~α.
/// Use [`pde_residual_from`] to measure the bulk order.
pub fn pde_residual(
    basis: &SpectralBasis,
    trajectory: &ModalTrajectory,
    control: &ModalTrajectory,
    alpha: f64,
) -> Result<f64> {
    pde_residual_from(basis, trajectory, control, alpha, 0.0)
}

/// [`pde_residual`] restricted to interior nodes with t_i ≥ t_min.
pub fn pde_residual_from(
    basis: &SpectralBasis,
    trajectory: &ModalTrajectory,
    control: &ModalTrajectory,
    alpha: f64,
    t_min: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if trajectory.layout() != Layout::Nodal {
        return shape("state trajectory must be nodal");
    }
    if trajectory.n_modes() != basis.n_modes() || control.n_modes() != basis.n_modes() {
        return shape("trajectory, control and basis disagree on the mode count");
    }
    if trajectory.grid() != control.grid() {
        return shape("trajectory and control live on different grids");
    }
    let grid = trajectory.grid();
    let n = grid.n_steps();
    let h = grid.step();
    let u = control.to_nodal();
    let mut worst = 0.0f64;
    for (k, &lam) in basis.eigenvalues().iter().enumerate() {
        let series = TimeSeries::new(grid, trajectory.mode(k))?;
        let d = caputo_left(&series, alpha)?;
        let sq: f64 = (1..n)
            .filter(|&i| grid.node(i) >= t_min)
            .map(|i| {
                let r = d.values()[i] - lam * series.values()[i] - u.get(i, k);
                r * r
            })
            .sum();
        worst = worst.max((h * sq).sqrt());
    }
    Ok(worst)
}
