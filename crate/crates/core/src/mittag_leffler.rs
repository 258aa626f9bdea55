//! Two-parameter Mittag-Leffler function for real arguments.
//!
//! E_{α,β}(z) = Σ_{k≥0} z^k / Γ(αk + β)
//!
//! The power series is only usable where it does not cancel: for z ≥ 0 and
//! for small |z|. Large negative arguments use the asymptotic expansion
//!
//! E_{α,β}(z) ≈ -Σ_{k=1..K} z^{-k} / Γ(β - αk)   (plus two pole residues when α > 1)
//!
//! once |z| ≥ [`ASYMPTOTIC_CROSSOVER`] and the truncation estimate is below
//! the target. Everything in between is computed by inverting the Laplace
//! transform s^{α-β} / (s^α - z) along a parabolic contour with the
//! trapezoidal rule. α = 1 has closed forms (β = 1, 2) or a series with
//! positive terms.

use std::f64::consts::PI;

use num_complex::Complex64;
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{domain, Error, Result};

/// Smallest |z| at which the asymptotic expansion is considered.
pub const ASYMPTOTIC_CROSSOVER: f64 = 30.0;
/// Number of terms kept in the asymptotic expansion.
pub const ASYMPTOTIC_TERMS: usize = 20;
/// Relative error above which an evaluation is flagged.
pub const ACCURACY_TARGET: f64 = 1e-10;

const SERIES_RADIUS: f64 = 1.0;
const MAX_SERIES_TERMS: usize = 20_000;
const CONTOUR_MAX_MU: f64 = 9.0;
const CONTOUR_POLE_LIMIT: f64 = 30.0;

/// Parameters (α, β) of E_{α,β}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlParams {
    alpha: f64,
    beta: f64,
}

impl MlParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return domain(format!("Mittag-Leffler alpha must lie in (0, 2], got {alpha}"));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return domain(format!("Mittag-Leffler beta must be positive, got {beta}"));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MlMethod {
    ClosedForm,
    Series,
    PositiveSeries,
    Asymptotic,
    Contour,
}

/// Value together with how it was obtained and how much to trust it.
#[derive(Debug, Clone, Copy)]
pub struct MlEvaluation {
    pub value: f64,
    pub method: MlMethod,
    /// Estimated relative error.
    pub error_estimate: f64,
    /// Set when `error_estimate` exceeds [`ACCURACY_TARGET`].
    pub accuracy_warning: bool,
}

impl MlEvaluation {
    fn new(value: f64, method: MlMethod, error_estimate: f64) -> Self {
        Self {
            value,
            method,
            error_estimate,
            accuracy_warning: !(error_estimate <= ACCURACY_TARGET) || !value.is_finite(),
        }
    }
}

/// Euler gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("gamma requires a positive finite argument, got {x}"));
    }
    Ok(gamma_pos(x))
}

fn gamma_pos(x: f64) -> f64 {
    if x == x.floor() && x <= 21.0 {
        (1..x as u64).map(|k| k as f64).product()
    } else {
        gamma(x)
    }
}

/// 1/Γ(x) on the whole real line; exactly zero at the poles of Γ.
pub(crate) fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        return 0.0;
    }
    if x >= 0.5 {
        if x < 170.0 {
            1.0 / gamma_pos(x)
        } else {
            (-ln_gamma(x)).exp()
        }
    } else {
        // reflection: 1/Γ(x) = sin(πx) Γ(1-x) / π
        let s = (PI * x).sin();
        let g = 1.0 - x;
        if g < 170.0 {
            s * gamma(g) / PI
        } else {
            s.signum() * (ln_gamma(g) + s.abs().ln() - PI.ln()).exp()
        }
    }
}

/// E_{α,β}(z), failing if the accuracy target cannot be met.
pub fn ml(params: MlParams, z: f64) -> Result<f64> {
    let ev = ml_eval(params, z)?;
    if ev.accuracy_warning {
        return Err(Error::Accuracy {
            value: ev.value,
            estimate: ev.error_estimate,
        });
    }
    Ok(ev.value)
}

/// E_{α,β}(z) with method and error metadata.
pub fn ml_eval(params: MlParams, z: f64) -> Result<MlEvaluation> {
    if !z.is_finite() {
        return domain(format!("Mittag-Leffler argument must be finite, got {z}"));
    }
    let MlParams { alpha, beta } = params;

    if z == 0.0 {
        return Ok(MlEvaluation::new(rgamma(beta), MlMethod::ClosedForm, 0.0));
    }
    if alpha == 1.0 && beta == 1.0 {
        return Ok(MlEvaluation::new(z.exp(), MlMethod::ClosedForm, 0.0));
    }
    if alpha == 1.0 && beta == 2.0 {
        return Ok(MlEvaluation::new(z.exp_m1() / z, MlMethod::ClosedForm, 0.0));
    }
    if z > 0.0 || -z <= SERIES_RADIUS {
        return Ok(series(alpha, beta, z));
    }

    let x = -z;
    if alpha <= 1.0 {
        if x >= ASYMPTOTIC_CROSSOVER {
            let asym = asymptotic(alpha, beta, z, ASYMPTOTIC_TERMS);
            if !asym.accuracy_warning {
                return Ok(asym);
            }
        }
        if alpha == 1.0 {
            return Ok(unit_alpha(beta, x));
        }
        Ok(contour(alpha, beta, z))
    } else if x.powf(1.0 / alpha) <= CONTOUR_POLE_LIMIT {
        Ok(contour(alpha, beta, z))
    } else {
        Ok(asymptotic(alpha, beta, z, ASYMPTOTIC_TERMS))
    }
}

/// Exact step moment ∫₀^h s^{α-1} E_{α,α}(λ s^α) ds = h^α E_{α,α+1}(λ h^α).
pub fn ml_conv_moment(alpha: f64, lambda: f64, h: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return domain(format!("convolution moment needs alpha in (0, 1], got {alpha}"));
    }
    if !(h > 0.0) || !h.is_finite() {
        return domain(format!("convolution moment needs a positive step, got {h}"));
    }
    if !lambda.is_finite() {
        return domain("convolution moment needs a finite eigenvalue");
    }
    let ha = h.powf(alpha);
    Ok(ha * ml(MlParams::new(alpha, alpha + 1.0)?, lambda * ha)?)
}

/// Weakly singular kernel t^{α-1} E_{α,α}(λ t^α) for t > 0.
pub(crate) fn ml_kernel(alpha: f64, lambda: f64, t: f64) -> Result<f64> {
    let ta = t.powf(alpha);
    Ok(ta / t * ml(MlParams::new(alpha, alpha)?, lambda * ta)?)
}

fn series(alpha: f64, beta: f64, z: f64) -> MlEvaluation {
    let lnz = z.abs().ln();
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut abs_sum = 0.0f64;
    let mut small_run = 0;
    for k in 0..MAX_SERIES_TERMS {
        let arg = alpha * k as f64 + beta;
        let term = if arg < 170.0 && k < 300 {
            z.powi(k as i32) * rgamma(arg)
        } else {
            let sign = if z < 0.0 && k % 2 == 1 { -1.0 } else { 1.0 };
            sign * (k as f64 * lnz - ln_gamma(arg)).exp()
        };
        // Kahan summation
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
        abs_sum += term.abs();

        if term.abs() <= f64::EPSILON * sum.abs() * 0.25 && arg > 2.0 {
            small_run += 1;
            if small_run >= 3 {
                break;
            }
        } else {
            small_run = 0;
        }
    }
    let estimate = if sum == 0.0 {
        f64::INFINITY
    } else {
        4.0 * f64::EPSILON * abs_sum / sum.abs()
    };
    MlEvaluation::new(sum, MlMethod::Series, estimate)
}

fn pole_residues(alpha: f64, beta: f64, z: f64) -> Complex64 {
    // upper pole of s^α = z on the principal sheet; the lower one is its conjugate
    let p = Complex64::from_polar((-z).powf(1.0 / alpha), PI / alpha);
    let r = p.powf(1.0 - beta) * p.exp() / alpha;
    Complex64::new(2.0 * r.re, 0.0)
}

fn asymptotic(alpha: f64, beta: f64, z: f64, terms: usize) -> MlEvaluation {
    let x = -z;
    let mut sum = 0.0;
    let mut zk = 1.0;
    for k in 1..=terms {
        zk /= z;
        sum -= zk * rgamma(beta - alpha * k as f64);
    }
    let mut value = sum;
    if alpha > 1.0 {
        value += pole_residues(alpha, beta, z).re;
    }
    let mut err = x.powf(-(terms as f64 + 1.0)) * rgamma(beta - alpha * (terms as f64 + 1.0)).abs();
    // For α close to 1 the poles just off the principal sheet leave an
    // exponentially small remainder that the algebraic series misses.
    let c = (PI / alpha).cos();
    if alpha <= 1.0 && c < 0.0 {
        err += x.powf((1.0 - beta) / alpha) / alpha * (x.powf(1.0 / alpha) * c).exp();
    }
    let rel = if value == 0.0 { f64::INFINITY } else { err / value.abs() };
    MlEvaluation::new(value, MlMethod::Asymptotic, rel.max(f64::EPSILON))
}

/// α = 1, β ∉ {1, 2}, moderate negative argument.
fn unit_alpha(beta: f64, x: f64) -> MlEvaluation {
    // E_{1,b}(-x) = e^{-x}/Γ(b-1) Σ_k x^k / (k! (b-1+k)),   b > 1
    let positive = |b: f64| -> f64 {
        let a = b - 1.0;
        let mut t = (-x).exp();
        let mut sum = t / a;
        let mut k = 1.0;
        loop {
            t *= x / k;
            let inc = t / (a + k);
            sum += inc;
            if k > x && inc <= f64::EPSILON * sum {
                break;
            }
            k += 1.0;
        }
        sum * rgamma(a)
    };
    if beta > 1.0 {
        let v = positive(beta);
        return MlEvaluation::new(v, MlMethod::PositiveSeries, 8.0 * f64::EPSILON * (1.0 + x.sqrt()));
    }
    // E_{1,b}(z) = 1/Γ(b) + z E_{1,b+1}(z)
    let head = rgamma(beta);
    let tail = -x * positive(beta + 1.0);
    let v = head + tail;
    let est = 8.0 * f64::EPSILON * (1.0 + x.sqrt()) * (head.abs() + tail.abs()) / v.abs();
    MlEvaluation::new(v, MlMethod::PositiveSeries, est)
}

#[derive(Clone, Copy)]
struct ContourPlan {
    mu: f64,
    step: f64,
    nodes: usize,
    residue: bool,
}

fn plan_contour(alpha: f64, z: f64) -> Option<ContourPlan> {
    let log_tol = -(f64::EPSILON * 0.5).ln();
    let pole = (alpha > 1.0).then(|| Complex64::from_polar((-z).powf(1.0 / alpha), PI / alpha));
    let mut best: Option<ContourPlan> = None;
    let mut mu = 0.05;
    while mu <= CONTOUR_MAX_MU {
        // The branch point s = 0 sits at distance 1 from the real u-axis.
        let mut d_up = 1.0f64;
        let mut d_down = 1.0f64;
        let mut residue = false;
        if let Some(p) = pole {
            let w = (p / mu).sqrt();
            if w.re < 1.0 {
                d_up = d_up.min(1.0 - w.re);
            } else {
                d_down = d_down.min(w.re - 1.0);
                residue = true;
            }
        }
        if d_up >= 0.05 && d_down >= 0.05 {
            let step = (2.0 * PI * d_up / (mu + log_tol))
                .min(2.0 * PI * d_down / (mu * (1.0 + d_down).powi(2) + log_tol));
            let reach = (1.0 + (log_tol + mu.ln().max(0.0)) / mu).sqrt();
            let nodes = (reach / step).ceil() as usize;
            if best.as_ref().map_or(true, |b| nodes < b.nodes) {
                best = Some(ContourPlan {
                    mu,
                    step,
                    nodes,
                    residue,
                });
            }
        }
        mu *= 1.08;
    }
    best
}

fn contour(alpha: f64, beta: f64, z: f64) -> MlEvaluation {
    let Some(plan) = plan_contour(alpha, z) else {
        return MlEvaluation::new(f64::NAN, MlMethod::Contour, f64::INFINITY);
    };
    let mut ev = contour_with(alpha, beta, z, plan);
    if !ev.accuracy_warning || alpha > 1.0 {
        return ev;
    }
    // Cancellation against e^μ: shrink μ, paying with more nodes.
    let log_tol = -(f64::EPSILON * 0.5).ln();
    for mu in [0.25, 0.05] {
        if mu >= plan.mu {
            continue;
        }
        let step = 2.0 * PI / (mu + log_tol);
        let reach = (1.0 + log_tol / mu).sqrt();
        let small = ContourPlan {
            mu,
            step,
            nodes: (reach / step).ceil() as usize,
            residue: false,
        };
        let retry = contour_with(alpha, beta, z, small);
        if retry.error_estimate < ev.error_estimate {
            ev = retry;
        }
        if !ev.accuracy_warning {
            break;
        }
    }
    ev
}

fn contour_with(alpha: f64, beta: f64, z: f64, plan: ContourPlan) -> MlEvaluation {
    let ContourPlan {
        mu,
        step,
        nodes,
        residue,
    } = plan;
    let one = Complex64::new(1.0, 0.0);
    // integrand of (1/2πi) ∫ e^s s^{α-β} / (s^α - z) s'(u) du; by conjugate
    // symmetry only the imaginary parts of u ≥ 0 are needed.
    let g = |u: f64| -> Complex64 {
        let w = one + Complex64::new(0.0, u);
        let s = w * w * mu;
        let ds = Complex64::new(0.0, 2.0 * mu) * w;
        s.exp() * s.powf(alpha - beta) / (s.powf(alpha) - z) * ds
    };
    let g0 = g(0.0);
    let mut sum = g0.im;
    let mut abs_sum = g0.norm();
    for k in 1..=nodes {
        let gk = g(k as f64 * step);
        sum += 2.0 * gk.im;
        abs_sum += 2.0 * gk.norm();
    }
    let mut value = step / (2.0 * PI) * sum;
    let mut scale = step / (2.0 * PI) * abs_sum;
    if residue {
        let r = pole_residues(alpha, beta, z).re;
        value += r;
        scale += r.abs();
    }
    let est = if value == 0.0 {
        f64::INFINITY
    } else {
        (16.0 * f64::EPSILON * scale / value.abs()).max(f64::EPSILON)
    };
    MlEvaluation::new(value, MlMethod::Contour, est)
}
