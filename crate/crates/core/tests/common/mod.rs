//! Oracles shared by the integration tests.
#![allow(dead_code)]

/// Adaptive Simpson quadrature with Richardson correction.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    // start from 64 panels so oscillatory integrands cannot fool the first estimate
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, if i + 1 == panels { b } else { a + (i + 1) as f64 * h });
            let (fa, fb, fm) = (f(lo), f(hi), f(0.5 * (lo + hi)));
            rec(f, lo, hi, fa, fm, fb, simpson(fa, fm, fb, lo, hi), tol / panels as f64, 40)
        })
        .sum()
}

/// Orthonormal Neumann eigenfunction of -d²/dx² on (0, L).
pub fn cosine_mode(k: usize, length: f64, x: f64) -> f64 {
    if k == 0 {
        1.0 / length.sqrt()
    } else {
        (2.0 / length).sqrt() * (k as f64 * std::f64::consts::PI * x / length).cos()
    }
}

/// Adaptive quadrature over [a, b] split at interior break points.
pub fn integrate_pieces(f: &dyn Fn(f64) -> f64, breaks: &[f64], tol: f64) -> f64 {
    breaks.windows(2).map(|w| adaptive_simpson(f, w[0], w[1], tol)).sum()
}
