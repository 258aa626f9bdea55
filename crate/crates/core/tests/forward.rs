use fractrack::calculus::TimeGrid;
use fractrack::forward::{pde_residual, pde_residual_from, solve_forward, Layout, ModalTrajectory, Propagators};
use fractrack::spectral::{Region, SpectralBasis, SpectralField};
use proptest::prelude::*;

fn y0(x: f64) -> f64 {
    100.0 * x * (x - 0.7f64).powi(2)
}

/// Cellwise control from u(x, t) sampled at step midpoints.
fn control_from(basis: &SpectralBasis, grid: TimeGrid, u: impl Fn(f64, f64) -> f64) -> ModalTrajectory {
    let mut c = ModalTrajectory::zeros(grid, basis.n_modes(), Layout::Cellwise);
    for j in 0..grid.n_steps() {
        let t = (j as f64 + 0.5) * grid.step();
        let f = basis.project(|x| u(x, t));
        c.row_mut(j).copy_from_slice(&f.coefficients);
    }
    c
}

/// E_{α,β}(z) by plain summation; only used with |z| ≤ 1.
fn ml_series(alpha: f64, beta: f64, z: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..60 {
        let term = z.powi(k) / statrs::function::gamma::gamma(alpha * k as f64 + beta);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

#[test]
fn mean_mode_matches_series_solution() {
    // mode 0 has λ = c; with constant control v the mild solution is
    // E_α(λt^α)y0 + v t^α E_{α,α+1}(λt^α)
    for alpha in [0.3, 0.5, 0.9] {
        let basis = SpectralBasis::new(1.0, -0.8, 1.0, 3).unwrap();
        let grid = TimeGrid::new(1.0, 16).unwrap();
        let y0 = SpectralField::new(vec![1.5, 0.2, -0.1]);
        let mut u = ModalTrajectory::zeros(grid, 3, Layout::Cellwise);
        for j in 0..16 {
            u.set(j, 0, 0.7);
        }
        let y = solve_forward(&basis, &y0, &u, alpha).unwrap();
        for i in 0..=16 {
            let t = grid.node(i);
            let z = -0.8 * t.powf(alpha);
            let want = ml_series(alpha, 1.0, z) * 1.5 + 0.7 * t.powf(alpha) * ml_series(alpha, alpha + 1.0, z);
            assert!((y.get(i, 0) - want).abs() < 1e-12, "α {alpha}, t {t}: {} vs {want}", y.get(i, 0));
        }
    }
}

#[test]
fn classical_limit_matches_exponentials() {
    let basis = SpectralBasis::new(1.5, -1.0, 1.0, 8).unwrap();
    let grid = TimeGrid::new(0.6, 30).unwrap();
    let y0f = basis.project(y0);
    let u = control_from(&basis, grid, |x, t| 10.0 * (5.0 * t).sin() * (x - 0.5));
    let y = solve_forward(&basis, &y0f, &u, 1.0).unwrap();
    let h = grid.step();
    for (k, &lam) in basis.eigenvalues().iter().enumerate() {
        for i in 0..=30 {
            let t = grid.node(i);
            let mut want = (lam * t).exp() * y0f.coefficients[k];
            for j in 0..i {
                // ∫ over step j of e^{λ(t - s)} ds
                let (a, b) = (t - (j + 1) as f64 * h, t - j as f64 * h);
                let w = if lam == 0.0 { h } else { ((lam * b).exp() - (lam * a).exp()) / lam };
                want += w * u.get(j, k);
            }
            assert!((y.get(i, k) - want).abs() < 1e-10 * (1.0 + want.abs()), "mode {k}, node {i}");
        }
    }
}

#[test]
fn modes_never_mix() {
    let basis = SpectralBasis::new(1.5, -1.0, 1.0, 6).unwrap();
    let grid = TimeGrid::new(0.6, 20).unwrap();
    let props = Propagators::new(&basis, 0.5, grid).unwrap();
    let y0f = basis.project(y0);
    let u = control_from(&basis, grid, |x, t| x * t);
    let base = props.solve_forward(&y0f, &u).unwrap();
    let mut bumped = u.clone();
    for j in 0..20 {
        bumped.set(j, 3, bumped.get(j, 3) + 1.0);
    }
    let moved = props.solve_forward(&y0f, &bumped).unwrap();
    for i in 0..=20 {
        for k in 0..6 {
            if k == 3 {
                assert!(moved.get(i, k) != base.get(i, k) || i == 0);
            } else {
                assert_eq!(moved.get(i, k), base.get(i, k));
            }
        }
    }
}

#[test]
fn free_modes_decay_monotonically() {
    for alpha in [0.2, 0.5, 0.8, 1.0] {
        let basis = SpectralBasis::new(1.5, -1.0, 1.0, 16).unwrap();
        let grid = TimeGrid::new(0.6, 120).unwrap();
        let y = Propagators::new(&basis, alpha, grid).unwrap().propagate_free(&basis.project(y0)).unwrap();
        for k in 0..16 {
            let m = y.mode(k);
            assert!(m.windows(2).all(|w| w[1].abs() <= w[0].abs() * (1.0 + 1e-13)), "α {alpha} mode {k}");
        }
    }
}

/// L1 residual of the exact mild solution. The t^α start costs O(h^{1+α}) at
/// fixed times and smooth data cost O(h^{2-α}); at α = 1/2 the two coincide
/// and a log factor slows the approach to 3/2.
#[test]
fn bulk_pde_residual_converges_at_l1_order() {
    let basis = SpectralBasis::new(1.0, -1.0, 1.0, 4).unwrap();
    let y0f = basis.project(|x| 1.0 + (std::f64::consts::PI * x).cos() + x * x);
    let residuals = |alpha: f64, ns: &[usize]| -> Vec<(f64, f64)> {
        ns.iter()
            .map(|&n| {
                let grid = TimeGrid::new(1.0, n).unwrap();
                let y = Propagators::new(&basis, alpha, grid).unwrap().propagate_free(&y0f).unwrap();
                let u = ModalTrajectory::zeros(grid, 4, Layout::Cellwise);
                (pde_residual_from(&basis, &y, &u, alpha, 0.5).unwrap(), pde_residual(&basis, &y, &u, alpha).unwrap())
            })
            .collect()
    };
    let orders = |r: &[(f64, f64)], pick: fn(&(f64, f64)) -> f64| -> Vec<f64> {
        r.windows(2).map(|w| (pick(&w[0]) / pick(&w[1])).log2()).collect()
    };

    let r = residuals(0.5, &[160, 320, 640, 1280]);
    let bulk = orders(&r, |p| p.0);
    assert!(bulk.windows(2).all(|w| w[1] > w[0]), "{bulk:?}");
    assert!(bulk[2] >= 1.4, "{bulk:?}");
    let global = orders(&r, |p| p.1);
    assert!(global.iter().all(|&o| (o - 0.5).abs() < 0.15), "{global:?}");

    let r = residuals(0.8, &[80, 160, 320, 640]);
    let bulk = orders(&r, |p| p.0);
    assert!(bulk.iter().all(|&o| o >= 2.0 - 0.8 - 0.05), "{bulk:?}");
}

#[test]
fn terminal_state_is_grid_converged_for_smooth_control() {
    let basis = SpectralBasis::new(1.5, -1.0, 1.0, 32).unwrap();
    let gram = basis.region_gram(Region::new(0.3, 0.7).unwrap()).unwrap();
    let y0f = basis.project(y0);
    let terminal = |n: usize| {
        let grid = TimeGrid::new(0.6, n).unwrap();
        let u = control_from(&basis, grid, |x, t| 20.0 * (5.0 * t).cos() * (x - 0.4));
        let y = solve_forward(&basis, &y0f, &u, 0.5).unwrap();
        y.field(n)
    };
    let (a, b) = (terminal(120), terminal(240));
    let diff = SpectralField::new(a.coefficients.iter().zip(&b.coefficients).map(|(x, y)| x - y).collect());
    let d = gram.region_l2_norm(&diff).unwrap();
    assert!(d <= 1e-4, "{d}");
}

#[test]
fn shape_errors() {
    let basis = SpectralBasis::new(1.0, 0.0, 1.0, 3).unwrap();
    let grid = TimeGrid::new(1.0, 4).unwrap();
    let nodal = ModalTrajectory::zeros(grid, 3, Layout::Nodal);
    assert!(solve_forward(&basis, &SpectralField::zeros(3), &nodal, 0.5).is_err());
    let wrong = ModalTrajectory::zeros(grid, 2, Layout::Cellwise);
    assert!(solve_forward(&basis, &SpectralField::zeros(3), &wrong, 0.5).is_err());
    let u = ModalTrajectory::zeros(grid, 3, Layout::Cellwise);
    assert!(solve_forward(&basis, &SpectralField::zeros(3), &u, 1.5).is_err());
    assert!(solve_forward(&basis, &SpectralField::zeros(2), &u, 0.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn forward_map_is_linear(
        a in -2.0..2.0f64,
        b in -2.0..2.0f64,
        alpha in 0.1..1.0f64,
        seed in prop::collection::vec(-1.0..1.0f64, 4 * 3 * 2 + 3 * 2),
    ) {
        let basis = SpectralBasis::new(1.0, -0.5, 1.0, 3).unwrap();
        let grid = TimeGrid::new(0.5, 4).unwrap();
        let props = Propagators::new(&basis, alpha, grid).unwrap();
        let y01 = SpectralField::new(seed[24..27].to_vec());
        let y02 = SpectralField::new(seed[27..30].to_vec());
        let u1 = ModalTrajectory::from_data(grid, 3, Layout::Cellwise, seed[0..12].to_vec()).unwrap();
        let u2 = ModalTrajectory::from_data(grid, 3, Layout::Cellwise, seed[12..24].to_vec()).unwrap();
        let y0c = SpectralField::new(y01.coefficients.iter().zip(&y02.coefficients).map(|(p, q)| a * p + b * q).collect());
        let uc = u1.scaled(a).axpy(b, &u2).unwrap();
        let lhs = props.solve_forward(&y0c, &uc).unwrap();
        let rhs = props.solve_forward(&y01, &u1).unwrap().scaled(a).axpy(b, &props.solve_forward(&y02, &u2).unwrap()).unwrap();
        for (l, r) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((l - r).abs() <= 1e-13 * (1.0 + r.abs()));
        }
    }
}
