use fractrack::calculus::{
    caputo_left, integration_by_parts_residual, rl_derivative_right, rl_integral_left, rl_integral_right,
    time_reverse, TimeGrid, TimeSeries,
};
use fractrack::mittag_leffler::gamma_fn;
use proptest::prelude::*;

fn grid(t: f64, n: usize) -> TimeGrid {
    TimeGrid::new(t, n).unwrap()
}

/// Right-sided product trapezoid written out on [t_i, T] without reversal.
fn direct_right_integral(phi: &[f64], h: f64, alpha: f64) -> Vec<f64> {
    let n = phi.len() - 1;
    let g = gamma_fn(alpha).unwrap();
    (0..=n)
        .map(|i| {
            let mut acc = 0.0;
            for j in i..n {
                let (p, q) = ((j - i) as f64 * h, (j + 1 - i) as f64 * h);
                let m0 = (q.powf(alpha) - p.powf(alpha)) / alpha;
                let m1 = (q.powf(alpha + 1.0) - p.powf(alpha + 1.0)) / (alpha + 1.0);
                // φ ≈ φ_j + (φ_{j+1} - φ_j)(s - p)/h
                let slope = (phi[j + 1] - phi[j]) / h;
                acc += phi[j] * m0 + slope * (m1 - p * m0);
            }
            acc / g
        })
        .collect()
}

/// Right-sided RL derivative: φ(T)(T-t)^{-α}/Γ(1-α) minus an L1 sum over [t_i, T].
fn direct_right_derivative(phi: &[f64], h: f64, alpha: f64) -> Vec<f64> {
    let n = phi.len() - 1;
    let g = gamma_fn(1.0 - alpha).unwrap();
    (0..n)
        .map(|i| {
            let tail = phi[n] * ((n - i) as f64 * h).powf(-alpha) / g;
            let mut acc = 0.0;
            for j in i..n {
                let (p, q) = ((j - i) as f64, (j + 1 - i) as f64);
                let w = h.powf(1.0 - alpha) * (q.powf(1.0 - alpha) - p.powf(1.0 - alpha)) / (1.0 - alpha) / g;
                acc += (phi[j + 1] - phi[j]) / h * w;
            }
            tail - acc
        })
        .collect()
}

#[test]
fn mirror_identities_match_direct_right_sided_schemes() {
    for &(n, alpha) in &[(7, 0.3), (12, 0.5), (20, 0.85)] {
        let g = grid(0.9, n);
        let phi = TimeSeries::sample(g, |t| (2.0 * t).sin() + 1.0 + t * t);
        let mirrored = rl_integral_right(&phi, alpha).unwrap();
        let direct = direct_right_integral(phi.values(), g.step(), alpha);
        for (a, b) in mirrored.values().iter().zip(&direct) {
            assert!((a - b).abs() < 1e-13 * (1.0 + b.abs()), "I_T n={n} α={alpha}: {a} vs {b}");
        }
        let mirrored = rl_derivative_right(&phi, alpha).unwrap();
        let direct = direct_right_derivative(phi.values(), g.step(), alpha);
        for (a, b) in mirrored.values()[..n].iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()), "D_T n={n} α={alpha}: {a} vs {b}");
        }
        assert!(mirrored.values()[n].is_infinite());
    }
}

#[test]
fn right_integral_of_constant() {
    let g = grid(1.0, 40);
    let one = TimeSeries::sample(g, |_| 1.0);
    let i = rl_integral_right(&one, 0.4).unwrap();
    for k in 0..=40 {
        let want = (1.0 - g.node(k)).powf(0.4) / gamma_fn(1.4).unwrap();
        assert!((i.values()[k] - want).abs() < 1e-13);
    }
}

/// |I^β I^α φ - I^{α+β} φ| at node `at(n)`.
fn semigroup_defect(n: usize, a: f64, b: f64, at: fn(usize) -> usize) -> f64 {
    let g = grid(1.0, n);
    let phi = TimeSeries::sample(g, |t| (t).exp() + (3.0 * t).cos());
    let twice = rl_integral_left(&rl_integral_left(&phi, a).unwrap(), b).unwrap();
    let once = rl_integral_left(&phi, a + b).unwrap();
    (twice.values()[at(n)] - once.values()[at(n)]).abs()
}

/// I^α φ behaves like t^α at 0, so interpolating it on the first step costs
/// O(h^α): the defect at t = h is O(h^{α+β}) and at fixed t it is
/// O(h^{min(2, 1+α)}).
#[test]
fn semigroup_of_integrals_within_scheme_order() {
    let ns = [80, 160, 320, 640];
    for &(a, b) in &[(0.3, 0.4), (0.5, 0.5), (0.2, 0.3)] {
        for at in [(|n| n) as fn(usize) -> usize, |n| n / 2] {
            let e: Vec<f64> = ns.iter().map(|&n| semigroup_defect(n, a, b, at)).collect();
            let order = (e[0] / e[3]).log2() / 3.0;
            assert!(order > (1.0 + a).min(2.0) - 0.05, "{a}+{b}: {e:?} order {order}");
        }
        let e: Vec<f64> = ns.iter().map(|&n| semigroup_defect(n, a, b, |_| 1)).collect();
        let order = (e[0] / e[3]).log2() / 3.0;
        assert!((order - (a + b)).abs() < 0.05, "{a}+{b} first node: {e:?} order {order}");
    }
}

fn fundamental_defect(n: usize, alpha: f64) -> f64 {
    let g = grid(1.0, n);
    let phi = TimeSeries::sample(g, |t| (2.0 * t).sin() + t * t);
    let back = rl_integral_left(&caputo_left(&phi, alpha).unwrap(), alpha).unwrap();
    back.values()
        .iter()
        .zip(phi.values())
        .map(|(b, p)| (b - (p - phi.values()[0])).abs())
        .fold(0.0, f64::max)
}

#[test]
fn fundamental_identity_within_scheme_order() {
    for alpha in [0.3, 0.5, 0.8, 1.0] {
        let (e1, e2) = (fundamental_defect(50, alpha), fundamental_defect(200, alpha));
        let order = (e1 / e2).log(4.0);
        assert!(order >= 0.9, "α {alpha}: {e1} {e2} order {order}");
        assert!(e2 < 5e-3, "α {alpha}: {e2}");
    }
}

#[test]
fn integration_by_parts_converges_for_scenario_order() {
    let res: Vec<f64> = [40, 80, 160, 320]
        .iter()
        .map(|&n| {
            let g = grid(0.6, n);
            let a = TimeSeries::sample(g, |t| (2.0 * t).cos() + t);
            let b = TimeSeries::sample(g, |t| (-t).exp() + t * t);
            integration_by_parts_residual(&a, &b, 0.5).unwrap()
        })
        .collect();
    for w in res.windows(2) {
        assert!((w[0] / w[1]).log2() >= 1.0, "{res:?}");
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let a = TimeSeries::sample(grid(1.0, 10), |t| t);
    let b = TimeSeries::sample(grid(1.0, 11), |t| t);
    assert!(integration_by_parts_residual(&a, &b, 0.5).is_err());
    assert!(caputo_left(&a, 1.2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_are_linear(
        u in prop::collection::vec(-3.0..3.0f64, 9),
        v in prop::collection::vec(-3.0..3.0f64, 9),
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        alpha in 0.05..1.0f64,
    ) {
        let g = grid(0.8, 8);
        let su = TimeSeries::new(g, u.clone()).unwrap();
        let sv = TimeSeries::new(g, v.clone()).unwrap();
        let comb = TimeSeries::new(g, u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect()).unwrap();
        type Op = fn(&TimeSeries, f64) -> fractrack::Result<TimeSeries>;
        let ops: [Op; 3] = [rl_integral_left, caputo_left, rl_integral_right];
        for op in ops {
            let (ru, rv, rc) = (op(&su, alpha).unwrap(), op(&sv, alpha).unwrap(), op(&comb, alpha).unwrap());
            for i in 0..9 {
                let want = a * ru.values()[i] + b * rv.values()[i];
                prop_assert!((rc.values()[i] - want).abs() <= 1e-12 * (1.0 + want.abs() + ru.values()[i].abs() + rv.values()[i].abs()));
            }
        }
    }

    #[test]
    fn reversal_is_an_involution(u in prop::collection::vec(-3.0..3.0f64, 3..30)) {
        let g = grid(1.0, u.len() - 1);
        let s = TimeSeries::new(g, u).unwrap();
        let back = time_reverse(&time_reverse(&s));
        prop_assert_eq!(back.values(), s.values());
    }
}

