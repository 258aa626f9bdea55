//! Backward (adjoint) system and the tracking data it is driven by.
//!
//! For a self-adjoint operator the adjoint state is
//!
//! z(t) = r₂ K(T-t) g + r₁ ∫_t^T K(ς-t) m(ς) dς,   K(s) = s^{α-1} E_{α,α}(λ s^α),
//!
//! with terminal mismatch g = p_ω y(T) - χ*_ω y_dT and running mismatch
//! m = p_ω y - χ*_ω y_d. The first term blows up like (T-t)^{α-1}, so it is
//! kept as a coefficient of the known kernel and never sampled at t = T.

use crate::calculus::TimeGrid;
use crate::error::{shape, Error, Result};
use crate::forward::{Layout, ModalTrajectory, Propagators};
use crate::optimize::CostWeights;
use crate::spectral::{CompositeGauss, Region, RegionGram, SpectralBasis, SpectralField, DEFAULT_PANELS};

/// Desired trajectory and terminal target, restricted to ω, in modal form.
#[derive(Debug, Clone)]
pub struct TrackingData {
    gram: RegionGram,
    desired: ModalTrajectory,
    desired_sq: Vec<f64>,
    terminal: SpectralField,
    terminal_sq: f64,
}

impl TrackingData {
    /// `desired` row i holds (y_d(t_i), ξ_k)_{L²(ω)} and `desired_sq[i]` the
    /// squared region norm ‖y_d(t_i)‖²_{L²(ω)}; likewise for the terminal target.
    pub fn new(
        gram: RegionGram,
        desired: ModalTrajectory,
        desired_sq: Vec<f64>,
        terminal: SpectralField,
        terminal_sq: f64,
    ) -> Result<Self> {
        let n = gram.n_modes();
        if desired.layout() != Layout::Nodal {
            return shape("desired trajectory must be nodal");
        }
        if desired.n_modes() != n || terminal.len() != n {
            return shape(format!("tracking data must have {n} modes to match the Gram matrix"));
        }
        if desired_sq.len() != desired.rows() {
            return shape("one squared target norm per time node is required");
        }
        Ok(Self {
            gram,
            desired,
            desired_sq,
            terminal,
            terminal_sq,
        })
    }

    /// Projects y_d(x, t) and y_dT(x) over the region with composite
    /// Gauss-Legendre quadrature. Without `terminal` the final slice y_d(·, T)
    /// is used.
    pub fn from_functions(
        basis: &SpectralBasis,
        grid: TimeGrid,
        region: Region,
        desired: impl Fn(f64, f64) -> f64,
        terminal: Option<&dyn Fn(f64) -> f64>,
    ) -> Result<Self> {
        let gram = basis.region_gram(region)?;
        let q = CompositeGauss::new(region.left, region.right, DEFAULT_PANELS);
        let m = basis.n_modes();
        let project = |f: &dyn Fn(f64) -> f64| -> (Vec<f64>, f64) {
            let fx: Vec<f64> = q.nodes().iter().map(|&x| f(x)).collect();
            let sq = q.weights().iter().zip(&fx).map(|(w, v)| w * v * v).sum();
            let c = (0..m)
                .map(|k| {
                    q.nodes()
                        .iter()
                        .zip(q.weights())
                        .zip(&fx)
                        .map(|((&x, &w), &v)| w * v * basis.eigenfunction(k, x))
                        .sum()
                })
                .collect();
            (c, sq)
        };
        let mut traj = ModalTrajectory::zeros(grid, m, Layout::Nodal);
        let mut desired_sq = Vec::with_capacity(grid.n_nodes());
        for i in 0..grid.n_nodes() {
            let t = grid.node(i);
            let (c, sq) = project(&|x| desired(x, t));
            traj.row_mut(i).copy_from_slice(&c);
            desired_sq.push(sq);
        }
        let (terminal, terminal_sq) = match terminal {
            Some(f) => project(f),
            None => (traj.row(grid.n_steps()).to_vec(), desired_sq[grid.n_steps()]),
        };
        let data = Self::new(gram, traj, desired_sq, SpectralField::new(terminal), terminal_sq)?;
        for (i, sq) in data.desired_sq.iter().enumerate() {
            if !sq.is_finite() || !data.desired.row(i).iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "desired trajectory is not finite at t = {}",
                    grid.node(i)
                )));
            }
        }
        if !data.terminal_sq.is_finite() {
            return Err(Error::Validation("terminal target is not finite".into()));
        }
        Ok(data)
    }

    /// Targets given as modal fields on the whole domain, observed on ω.
    pub fn from_modal(gram: RegionGram, desired: &ModalTrajectory, terminal: &SpectralField) -> Result<Self> {
        let n = gram.n_modes();
        if desired.n_modes() != n || terminal.len() != n {
            return shape(format!("targets must have {n} modes to match the Gram matrix"));
        }
        let mut d = ModalTrajectory::zeros(desired.grid(), n, Layout::Nodal);
        let mut sq = Vec::with_capacity(desired.rows());
        for i in 0..desired.rows() {
            gram.apply_slice(desired.row(i), d.row_mut(i));
            sq.push(gram.quad_form_slice(desired.row(i)));
        }
        let mut t = vec![0.0; n];
        gram.apply_slice(&terminal.coefficients, &mut t);
        let tsq = gram.quad_form_slice(&terminal.coefficients);
        Self::new(gram, d, sq, SpectralField::new(t), tsq)
    }

    /// All-zero targets.
    pub fn zero(gram: RegionGram, grid: TimeGrid) -> Self {
        let n = gram.n_modes();
        Self {
            desired: ModalTrajectory::zeros(grid, n, Layout::Nodal),
            desired_sq: vec![0.0; grid.n_nodes()],
            terminal: SpectralField::zeros(n),
            terminal_sq: 0.0,
            gram,
        }
    }

    pub fn gram(&self) -> &RegionGram {
        &self.gram
    }

    pub fn desired(&self) -> &ModalTrajectory {
        &self.desired
    }

    pub fn desired_sq(&self) -> &[f64] {
        &self.desired_sq
    }

    pub fn terminal(&self) -> &SpectralField {
        &self.terminal
    }

    pub fn terminal_sq(&self) -> f64 {
        self.terminal_sq
    }

    pub fn grid(&self) -> TimeGrid {
        self.desired.grid()
    }

    pub fn n_modes(&self) -> usize {
        self.gram.n_modes()
    }

    pub(crate) fn check_state(&self, y: &ModalTrajectory) -> Result<()> {
        if y.layout() != Layout::Nodal {
            return shape("state trajectory must be nodal");
        }
        self.desired.check_shape(y, "state vs tracking data")
    }

    /// ‖χ_ω y(t_i) - y_d(t_i)‖²_{L²(ω)}, expanded as yᵀGy - 2y·d + ‖y_d‖².
    pub(crate) fn running_sq(&self, y: &[f64], i: usize) -> f64 {
        let cross: f64 = y.iter().zip(self.desired.row(i)).map(|(a, b)| a * b).sum();
        self.gram.quad_form_slice(y) - 2.0 * cross + self.desired_sq[i]
    }

    pub(crate) fn terminal_sq_error(&self, y: &[f64]) -> f64 {
        self.gram.quad_form_slice(y) - 2.0 * y.iter().zip(&self.terminal.coefficients).map(|(a, b)| a * b).sum::<f64>()
            + self.terminal_sq
    }

    /// ‖χ_ω y(t_i) - y_d(t_i)‖_{L²(ω)} at every node.
    pub fn tracking_errors(&self, y: &ModalTrajectory) -> Result<Vec<f64>> {
        self.check_state(y)?;
        Ok((0..y.rows()).map(|i| self.running_sq(y.row(i), i).max(0.0).sqrt()).collect())
    }

    /// ‖χ_ω y(T) - y_dT‖_{L²(ω)}.
    pub fn terminal_error(&self, y: &ModalTrajectory) -> Result<f64> {
        self.check_state(y)?;
        Ok(self.terminal_sq_error(y.row(y.rows() - 1)).max(0.0).sqrt())
    }

    /// Running mismatch p_ω y(t_i) - χ*_ω y_d(t_i), row by row.
    pub fn mismatch(&self, y: &ModalTrajectory) -> Result<ModalTrajectory> {
        self.check_state(y)?;
        let mut m = ModalTrajectory::zeros(y.grid(), y.n_modes(), Layout::Nodal);
        for i in 0..y.rows() {
            let row = m.row_mut(i);
            self.gram.apply_slice(y.row(i), row);
            for (v, d) in row.iter_mut().zip(self.desired.row(i)) {
                *v -= d;
            }
        }
        Ok(m)
    }

    /// Terminal mismatch p_ω y(T) - χ*_ω y_dT.
    pub fn terminal_mismatch(&self, y: &ModalTrajectory) -> Result<SpectralField> {
        self.check_state(y)?;
        let mut g = vec![0.0; self.n_modes()];
        self.gram.apply_slice(y.row(y.rows() - 1), &mut g);
        for (v, d) in g.iter_mut().zip(&self.terminal.coefficients) {
            *v -= d;
        }
        Ok(SpectralField::new(g))
    }
}

/// Adjoint state split into a regular part and a singular terminal part.
#[derive(Debug, Clone)]
pub struct AdjointState {
    regular: ModalTrajectory,
    terminal: SpectralField,
    cell_average: ModalTrajectory,
}

impl AdjointState {
    /// r₁ ∫_t^T K(ς-t) m(ς) dς at every node; zero at t = T.
    pub fn regular(&self) -> &ModalTrajectory {
        &self.regular
    }

    /// Coefficient r₂ g of the kernel K(T - t).
    pub fn terminal_coefficient(&self) -> &SpectralField {
        &self.terminal
    }

    /// (1/h) ∫ z dt over each step. This is the exact gradient of the
    /// discrete cost with respect to a cellwise control, divided by h.
    pub fn cell_average(&self) -> &ModalTrajectory {
        &self.cell_average
    }

    /// z(t_i) for i < n, or at i = n when α = 1.
    pub fn sample(&self, props: &Propagators, i: usize) -> Result<SpectralField> {
        let n = self.regular.grid().n_steps();
        if i > n {
            return shape(format!("node {i} is beyond the grid"));
        }
        if i == n && props.alpha() < 1.0 && self.terminal.coefficients.iter().any(|&c| c != 0.0) {
            return Err(Error::Domain("the adjoint state is singular at t = T".into()));
        }
        Ok(SpectralField::new(
            (0..self.terminal.len())
                .map(|k| {
                    let singular = if self.terminal.coefficients[k] == 0.0 {
                        0.0
                    } else {
                        props.kernel(k, n - i) * self.terminal.coefficients[k]
                    };
                    self.regular.get(i, k) + singular
                })
                .collect(),
        ))
    }
}

/// Adjoint state on a precomputed propagator table.
pub fn solve_adjoint_with(
    props: &Propagators,
    y: &ModalTrajectory,
    data: &TrackingData,
    weights: &CostWeights,
) -> Result<AdjointState> {
    data.check_state(y)?;
    if y.grid() != props.grid() || y.n_modes() != props.n_modes() {
        return shape("state does not match the propagator grid or mode count");
    }
    let grid = y.grid();
    let n = grid.n_steps();
    let h = grid.step();
    let m = y.n_modes();
    let (r1, r2) = (weights.r1(), weights.r2());
    let omega = grid.trapezoid_weights();

    let mis = data.mismatch(y)?;
    let g = data.terminal_mismatch(y)?;
    let terminal = SpectralField::new(g.coefficients.iter().map(|v| r2 * v).collect());

    let mut regular = ModalTrajectory::zeros(grid, m, Layout::Nodal);
    let mut cell = ModalTrajectory::zeros(grid, m, Layout::Cellwise);
    let mut mid = vec![0.0; n];
    let mut weighted = vec![0.0; n + 1];
    for k in 0..m {
        let w = props.weights_of(k);
        for l in 0..n {
            mid[l] = 0.5 * (mis.get(l, k) + mis.get(l + 1, k));
        }
        for i in 0..=n {
            weighted[i] = omega[i] * mis.get(i, k);
        }
        for i in 0..n {
            let s: f64 = (i..n).map(|l| w[l + 1 - i] * mid[l]).sum();
            regular.set(i, k, r1 * s);
        }
        for j in 0..n {
            let s: f64 = (j + 1..=n).map(|i| w[i - j] * weighted[i]).sum();
            cell.set(j, k, (r2 * w[n - j] * g.coefficients[k] + r1 * s) / h);
        }
    }
    Ok(AdjointState {
        regular,
        terminal,
        cell_average: cell,
    })
}

/// Adjoint state z(y) for the self-adjoint operator of `basis`.
pub fn solve_adjoint(
    basis: &SpectralBasis,
    y: &ModalTrajectory,
    data: &TrackingData,
    weights: &CostWeights,
    alpha: f64,
) -> Result<AdjointState> {
    if !basis.is_self_adjoint() {
        return Err(Error::Unsupported(
            "the adjoint solver requires a self-adjoint operator".into(),
        ));
    }
    let props = Propagators::new(basis, alpha, y.grid())?;
    solve_adjoint_with(&props, y, data, weights)
}

/// |r₁∫∫ m(y_ref)(y - y_ref) + r₂ g(y_ref)·(y(T) - y_ref(T)) - ∫∫ z (u - u_ref)|
///
/// The left side uses trapezoidal time quadrature. On the right, the regular
/// part of z is integrated over each step by the trapezoidal rule and the
/// singular part with exact kernel moments.
#[allow(clippy::too_many_arguments)]
pub fn duality_residual(
    props: &Propagators,
    data: &TrackingData,
    weights: &CostWeights,
    y_ref: &ModalTrajectory,
    u_ref: &ModalTrajectory,
    y: &ModalTrajectory,
    u: &ModalTrajectory,
    z: &AdjointState,
) -> Result<f64> {
    y_ref.check_shape(y, "duality states")?;
    u_ref.check_shape(u, "duality controls")?;
    if u.layout() != Layout::Cellwise || u.grid() != y.grid() {
        return shape("controls must be cellwise on the state grid");
    }
    z.regular.check_shape(y, "adjoint vs state")?;
    let grid = y.grid();
    let n = grid.n_steps();
    let h = grid.step();
    let omega = grid.trapezoid_weights();
    let mis = data.mismatch(y_ref)?;
    let g = data.terminal_mismatch(y_ref)?;

    let mut lhs = 0.0;
    for i in 0..=n {
        let dot: f64 = (0..y.n_modes())
            .map(|k| mis.get(i, k) * (y.get(i, k) - y_ref.get(i, k)))
            .sum();
        lhs += weights.r1() * omega[i] * dot;
    }
    lhs += weights.r2()
        * (0..y.n_modes())
            .map(|k| g.coefficients[k] * (y.get(n, k) - y_ref.get(n, k)))
            .sum::<f64>();

    let mut rhs = 0.0;
    for j in 0..n {
        for k in 0..y.n_modes() {
            let du = u.get(j, k) - u_ref.get(j, k);
            let regular = 0.5 * h * (z.regular.get(j, k) + z.regular.get(j + 1, k));
            let singular = props.step_weight(k, n - j) * z.terminal.coefficients[k];
            rhs += du * (regular + singular);
        }
    }
    Ok((lhs - rhs).abs())
}
