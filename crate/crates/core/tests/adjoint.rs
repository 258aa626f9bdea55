use fractrack::adjoint::{duality_residual, solve_adjoint, solve_adjoint_with, TrackingData};
use fractrack::calculus::TimeGrid;
use fractrack::forward::{Layout, ModalTrajectory, Propagators};
use fractrack::mittag_leffler::gamma_fn;
use fractrack::optimize::CostWeights;
use fractrack::scenario::TrackingScenario;
use fractrack::spectral::{Region, SpectralBasis};
use fractrack::verify::duality_refinement;

fn setup(alpha: f64, n: usize, modes: usize) -> (SpectralBasis, Propagators, TrackingData, ModalTrajectory) {
    let basis = SpectralBasis::new(1.5, -1.0, 1.0, modes).unwrap();
    let grid = TimeGrid::new(0.6, n).unwrap();
    let props = Propagators::new(&basis, alpha, grid).unwrap();
    let data = TrackingData::from_functions(
        &basis,
        grid,
        Region::new(0.3, 0.7).unwrap(),
        |x, t| 4.5 * t * (0.6 - t) + x,
        Some(&|x: f64| 0.2 * x),
    )
    .unwrap();
    let mut u = ModalTrajectory::zeros(grid, modes, Layout::Cellwise);
    for j in 0..n {
        for k in 0..modes {
            u.set(j, k, ((j + 2 * k) as f64).sin());
        }
    }
    let y = props.solve_forward(&basis.project(|x| 100.0 * x * (x - 0.7f64).powi(2)), &u).unwrap();
    (basis, props, data, y)
}

#[test]
fn doubling_the_weights_doubles_the_adjoint() {
    let (_, props, data, y) = setup(0.5, 30, 5);
    let z1 = solve_adjoint_with(&props, &y, &data, &CostWeights::new(3.0, 7.0, 1.0).unwrap()).unwrap();
    let z2 = solve_adjoint_with(&props, &y, &data, &CostWeights::new(6.0, 14.0, 1.0).unwrap()).unwrap();
    for (a, b) in z1.regular().data().iter().zip(z2.regular().data()) {
        assert_eq!(2.0 * a, *b);
    }
    for (a, b) in z1.cell_average().data().iter().zip(z2.cell_average().data()) {
        assert!((2.0 * a - b).abs() <= 1e-15 * b.abs());
    }
    for (a, b) in z1.terminal_coefficient().coefficients.iter().zip(&z2.terminal_coefficient().coefficients) {
        assert_eq!(2.0 * a, *b);
    }
}

/// R z solves a forward problem: the regular part reversed in time is the
/// forward convolution of the reversed step-midpoint mismatch.
#[test]
fn time_reversal_matches_forward_machinery() {
    for alpha in [0.4, 0.5, 0.9, 1.0] {
        let n = 24;
        let (basis, props, data, y) = setup(alpha, n, 3);
        let r1 = 5.0;
        let z = solve_adjoint_with(&props, &y, &data, &CostWeights::new(r1, 2.0, 1.0).unwrap()).unwrap();
        let m = data.mismatch(&y).unwrap();
        let mut reversed = ModalTrajectory::zeros(y.grid(), 3, Layout::Cellwise);
        for j in 0..n {
            let l = n - 1 - j;
            for k in 0..3 {
                reversed.set(j, k, r1 * 0.5 * (m.get(l, k) + m.get(l + 1, k)));
            }
        }
        let w = props.convolve(&reversed).unwrap();
        for i in 0..=n {
            for k in 0..3 {
                let (a, b) = (z.regular().get(i, k), w.get(n - i, k));
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()), "α {alpha} node {i} mode {k}: {a} vs {b}");
            }
        }
        // terminal coefficient is r₂ g
        let g = data.terminal_mismatch(&y).unwrap();
        for k in 0..3 {
            assert_eq!(z.terminal_coefficient().coefficients[k], 2.0 * g.coefficients[k]);
        }
        let _ = basis;
    }
}

fn ml_series(alpha: f64, beta: f64, z: f64) -> f64 {
    (0..80).map(|k| z.powi(k) / gamma_fn(alpha * k as f64 + beta).unwrap()).sum()
}

#[test]
fn singular_part_blows_up_at_the_kernel_rate() {
    // with r₁ = 0, z_k(t)(T-t)^{1-α} = r₂ g_k E_{α,α}(λ_k(T-t)^α) → r₂ g_k / Γ(α)
    let alpha = 0.5;
    let n = 400;
    let (basis, props, data, y) = setup(alpha, n, 4);
    let z = solve_adjoint_with(&props, &y, &data, &CostWeights::new(0.0, 3.0, 1.0).unwrap()).unwrap();
    let g = data.terminal_mismatch(&y).unwrap();
    let h = y.grid().step();
    let ga = gamma_fn(alpha).unwrap();
    for k in 0..4 {
        let lam = basis.eigenvalues()[k];
        let limit = 3.0 * g.coefficients[k] / ga;
        let mut prev = f64::INFINITY;
        for back in [3, 2, 1] {
            let s = back as f64 * h;
            let zk = z.sample(&props, n - back).unwrap().coefficients[k];
            let gap = (zk * s.powf(1.0 - alpha) - limit).abs() / limit.abs();
            assert!(gap < prev, "mode {k}");
            if k < 2 {
                // |λ(T-t)^α| ≤ 2 here, where plain summation is accurate
                let want = (ml_series(alpha, alpha, lam * s.powf(alpha)) * ga - 1.0).abs();
                assert!((gap - want).abs() < 1e-9, "mode {k}: gap {gap}, series {want}");
            }
            prev = gap;
        }
    }
    assert!(z.sample(&props, n).is_err());

    // the regular part stays bounded and vanishes at T
    let z = solve_adjoint_with(&props, &y, &data, &CostWeights::new(1.0, 3.0, 1.0).unwrap()).unwrap();
    assert!(z.regular().row(n).iter().all(|&v| v == 0.0));
    let tail: f64 = (n - 5..n).map(|i| z.regular().get(i, 0).abs()).fold(0.0, f64::max);
    let bulk: f64 = (0..n).map(|i| z.regular().get(i, 0).abs()).fold(0.0, f64::max);
    assert!(tail < bulk);
}

#[test]
fn classical_adjoint_is_continuous_at_the_end() {
    let (_, props, data, y) = setup(1.0, 20, 3);
    let z = solve_adjoint_with(&props, &y, &data, &CostWeights::new(1.0, 3.0, 1.0).unwrap()).unwrap();
    let zt = z.sample(&props, 20).unwrap();
    let g = data.terminal_mismatch(&y).unwrap();
    for k in 0..3 {
        assert!((zt.coefficients[k] - 3.0 * g.coefficients[k]).abs() < 1e-14);
    }
}

#[test]
fn duality_residual_vanishes_under_refinement() {
    let scenario = TrackingScenario::reference_example().with_overrides(Some(6), None, None);
    let r = duality_refinement(&scenario, &[40, 80, 160, 320]).unwrap();
    assert!(r.fitted_order >= 1.0, "{r:?}");
    assert!(r.orders.iter().all(|&o| o > 0.9), "{r:?}");
    assert!(r.last_relative() <= 1e-3, "{r:?}");
}

#[test]
fn duality_rejects_misshapen_inputs() {
    let (_, props, data, y) = setup(0.5, 10, 3);
    let w = CostWeights::new(1.0, 1.0, 1.0).unwrap();
    let z = solve_adjoint_with(&props, &y, &data, &w).unwrap();
    let u = ModalTrajectory::zeros(y.grid(), 3, Layout::Cellwise);
    let nodal = ModalTrajectory::zeros(y.grid(), 3, Layout::Nodal);
    assert!(duality_residual(&props, &data, &w, &y, &u, &y, &u, &z).unwrap() == 0.0);
    assert!(duality_residual(&props, &data, &w, &y, &nodal, &y, &nodal, &z).is_err());
}

#[test]
fn non_self_adjoint_operators_are_refused() {
    let (basis, _, data, y) = setup(0.5, 10, 3);
    let skewed = basis.with_adjoint_eigenvalues(vec![-1.0, -2.0, -3.0]).unwrap();
    assert!(solve_adjoint(&skewed, &y, &data, &CostWeights::new(1.0, 1.0, 1.0).unwrap(), 0.5).is_err());
}
