//! Discrete Riemann-Liouville and Caputo operators on uniform grids.
//!
//! These are verification operators, independent of the Mittag-Leffler
//! propagators: samples are interpolated piecewise linearly and the
//! power-law kernels are integrated exactly over each step.

use serde::{Deserialize, Serialize};

use crate::error::{domain, shape, Result};
use crate::mittag_leffler::rgamma;

/// Uniform grid t_i = i·T/n on [0, T].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return domain(format!("time horizon must be positive, got {horizon}"));
        }
        if n_steps < 2 {
            return domain(format!("at least two time steps are required, got {n_steps}"));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.horizon
        } else {
            i as f64 * self.step()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|i| self.node(i)).collect()
    }

    /// Composite trapezoid weights over the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        let h = self.step();
        let mut w = vec![h; self.n_nodes()];
        w[0] = 0.5 * h;
        w[self.n_steps] = 0.5 * h;
        w
    }
}

/// One sample per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return shape(format!(
                "series has {} values, grid has {} nodes",
                values.len(),
                grid.n_nodes()
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn sample(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().into_iter().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Trapezoidal ∫₀^T.
    pub fn integrate(&self) -> f64 {
        self.grid
            .trapezoid_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            grid: self.grid,
            values,
        }
    }
}

fn check_order(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("fractional order must lie in (0, 1], got {alpha}"));
    }
    Ok(())
}

fn check_same_grid(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.grid != b.grid {
        return shape("series live on different grids");
    }
    Ok(())
}

/// (1/Γ(α)) ∫₀^{t_i} (t_i - s)^{α-1} φ(s) ds with φ piecewise linear.
pub fn rl_integral_left(series: &TimeSeries, alpha: f64) -> Result<TimeSeries> {
    check_order(alpha)?;
    let n = series.grid.n_steps();
    let h = series.grid.step();
    let phi = &series.values;
    let scale = h.powf(alpha) * rgamma(alpha);
    // weights on φ_j (left end) and φ_{j+1} (right end) of the step at lag ℓ = i - j
    let mut left = vec![0.0; n + 1];
    let mut right = vec![0.0; n + 1];
    for l in 1..=n {
        let lf = l as f64;
        let lm = lf - 1.0;
        let total = (lf.powf(alpha) - lm.powf(alpha)) / alpha;
        let r = lf * total - (lf.powf(alpha + 1.0) - lm.powf(alpha + 1.0)) / (alpha + 1.0);
        right[l] = scale * r;
        left[l] = scale * (total - r);
    }
    let mut out = vec![0.0; n + 1];
    for i in 1..=n {
        out[i] = (0..i)
            .map(|j| left[i - j] * phi[j] + right[i - j] * phi[j + 1])
            .sum();
    }
    Ok(series.with_values(out))
}

/// L1 weights b_ℓ = (ℓ^{1-α} - (ℓ-1)^{1-α}) h^{-α} / Γ(2-α).
fn l1_weights(n: usize, h: f64, alpha: f64) -> Vec<f64> {
    let mut b = vec![0.0; n + 1];
    if alpha == 1.0 {
        b[1] = 1.0 / h;
        return b;
    }
    let e = 1.0 - alpha;
    let scale = h.powf(-alpha) * rgamma(2.0 - alpha);
    for (l, bl) in b.iter_mut().enumerate().skip(1) {
        let lf = l as f64;
        *bl = scale * (lf.powf(e) - (lf - 1.0).powf(e));
    }
    b
}

/// L1 scheme for the Caputo derivative. Node 0 is zero for α < 1 and the
/// forward difference for α = 1.
pub fn caputo_left(series: &TimeSeries, alpha: f64) -> Result<TimeSeries> {
    check_order(alpha)?;
    let n = series.grid.n_steps();
    let b = l1_weights(n, series.grid.step(), alpha);
    let phi = &series.values;
    let mut out = vec![0.0; n + 1];
    if alpha == 1.0 {
        out[0] = (phi[1] - phi[0]) / series.grid.step();
    }
    for i in 1..=n {
        out[i] = (0..i).map(|j| b[i - j] * (phi[j + 1] - phi[j])).sum();
    }
    Ok(series.with_values(out))
}

/// Left Riemann-Liouville derivative: Caputo part plus φ(0) t^{-α}/Γ(1-α).
/// Node 0 is infinite unless φ(0) = 0 (or α = 1).
fn rl_derivative_left(series: &TimeSeries, alpha: f64) -> Result<TimeSeries> {
    let mut out = caputo_left(series, alpha)?;
    let phi0 = series.values[0];
    if alpha < 1.0 && phi0 != 0.0 {
        let c = phi0 * rgamma(1.0 - alpha);
        for (i, v) in out.values.iter_mut().enumerate() {
            *v += if i == 0 {
                c.signum() * f64::INFINITY
            } else {
                c * series.grid.node(i).powf(-alpha)
            };
        }
    }
    Ok(out)
}

/// Time reversal R: φ(t) ↦ φ(T - t).
pub fn time_reverse(series: &TimeSeries) -> TimeSeries {
    let mut v = series.values.clone();
    v.reverse();
    series.with_values(v)
}

/// Right-sided RL derivative -d/dt I_T^{1-α}, realized as R ∘ D_left ∘ R.
/// The node t = T is infinite when φ(T) ≠ 0 and α < 1.
pub fn rl_derivative_right(series: &TimeSeries, alpha: f64) -> Result<TimeSeries> {
    check_order(alpha)?;
    let left = rl_derivative_left(&time_reverse(series), alpha)?;
    Ok(time_reverse(&left))
}

/// Right-sided RL integral I_T^α, realized as R ∘ I_left ∘ R.
pub fn rl_integral_right(series: &TimeSeries, alpha: f64) -> Result<TimeSeries> {
    check_order(alpha)?;
    Ok(time_reverse(&rl_integral_left(&time_reverse(series), alpha)?))
}

/// |∫ φ₂ ᶜD^α φ₁ - ∫ φ₁ D_T^α φ₂ - [φ₁ I_T^{1-α} φ₂]₀^T|.
///
/// The φ₂(T)(T-t)^{-α}/Γ(1-α) part of D_T^α φ₂ is integrated against φ₁
/// with exact kernel moments; the remainder uses the trapezoidal rule.
pub fn integration_by_parts_residual(phi1: &TimeSeries, phi2: &TimeSeries, alpha: f64) -> Result<f64> {
    check_order(alpha)?;
    check_same_grid(phi1, phi2)?;
    let n = phi1.grid.n_steps();

    let d1 = caputo_left(phi1, alpha)?;
    let lhs = TimeSeries::new(phi1.grid, mul(&phi2.values, &d1.values))?.integrate();

    let regular = time_reverse(&caputo_left(&time_reverse(phi2), alpha)?);
    let mut rhs = TimeSeries::new(phi1.grid, mul(&phi1.values, &regular.values))?.integrate();

    let boundary = if alpha < 1.0 {
        // ∫ φ₁ (T-t)^{-α} dt / Γ(1-α) = (I^{1-α} φ₁)(T)
        let i1 = rl_integral_left(phi1, 1.0 - alpha)?;
        rhs += phi2.values[n] * i1.values[n];
        // I_T^{1-α} φ₂ vanishes at T; at 0 it is (I_left^{1-α} Rφ₂)(T)
        let i2 = rl_integral_left(&time_reverse(phi2), 1.0 - alpha)?;
        -phi1.values[0] * i2.values[n]
    } else {
        phi1.values[n] * phi2.values[n] - phi1.values[0] * phi2.values[0]
    };
    Ok((lhs - rhs - boundary).abs())
}

fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x * y).collect()
}
