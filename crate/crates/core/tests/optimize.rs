use fractrack::forward::ModalTrajectory;
use fractrack::optimize::{DirectOptions, FixedPointOptions, TrackingProblem};
use fractrack::scenario::TrackingScenario;
use fractrack::verify::random_direction;
use nalgebra::{DMatrix, DVector};

fn reduced(modes: usize, steps: usize, weights: (f64, f64, f64), alpha: f64) -> TrackingProblem {
    let mut s = TrackingScenario::reference_example().with_overrides(Some(modes), Some(steps), None);
    s.weights.r1 = weights.0;
    s.weights.r2 = weights.1;
    s.weights.r3 = weights.2;
    s.alpha = alpha;
    s.compile().unwrap().problem().unwrap()
}

fn unit(p: &TrackingProblem, idx: usize) -> ModalTrajectory {
    let mut e = p.zero_control();
    e.data_mut()[idx] = 1.0;
    e
}

/// J is quadratic: its Hessian and linear term follow from cost values alone.
fn quadratic_from_cost(p: &TrackingProblem) -> (DMatrix<f64>, DVector<f64>) {
    let n = p.zero_control().data().len();
    let j = |u: &ModalTrajectory| p.cost(u).unwrap().total;
    let zero = p.zero_control();
    let j0 = j(&zero);
    let ji: Vec<f64> = (0..n).map(|i| j(&unit(p, i))).collect();
    let mut h = DMatrix::zeros(n, n);
    for a in 0..n {
        for b in a..n {
            let v = if a == b {
                let mut e = zero.clone();
                e.data_mut()[a] = -1.0;
                j(&unit(p, a)) + j(&e) - 2.0 * j0
            } else {
                let mut e = unit(p, a);
                e.data_mut()[b] = 1.0;
                j(&e) - ji[a] - ji[b] + j0
            };
            h[(a, b)] = v;
            h[(b, a)] = v;
        }
    }
    let g = DVector::from_iterator(n, (0..n).map(|i| ji[i] - j0 - 0.5 * h[(i, i)]));
    (h, g)
}

#[test]
fn direct_solution_matches_a_cost_only_quadratic_oracle() {
    for alpha in [0.5, 1.0] {
        let p = reduced(2, 6, (20.0, 50.0, 1.0), alpha);
        let (h, g) = quadratic_from_cost(&p);
        let want = h.cholesky().expect("positive definite").solve(&(-g));
        let got = p.solve_direct(DirectOptions::default()).unwrap();
        assert!(got.converged);
        let diff = (DVector::from_column_slice(got.control.data()) - &want).norm() / want.norm();
        assert!(diff < 1e-7, "α {alpha}: {diff}");
    }
}

#[test]
fn optimum_beats_random_perturbations() {
    let p = reduced(8, 40, (2e4, 2e7, 1.0), 0.5);
    let r = p.solve_direct(DirectOptions::default()).unwrap();
    let j = r.cost.total;
    for seed in 0..20 {
        let d = random_direction(p.grid(), p.n_modes(), seed);
        for s in [1e-3, 1e-2] {
            for sign in [1.0, -1.0] {
                let v = p.cost(&r.control.axpy(sign * s, &d).unwrap()).unwrap().total;
                assert!(v >= j - 1e-9 * j, "seed {seed}, s {s}: {v} < {j}");
            }
        }
    }
}

#[test]
fn terminal_error_is_monotone_in_the_terminal_weight() {
    let errs: Vec<f64> = [2e5, 2e6, 2e7]
        .iter()
        .map(|&r2| reduced(8, 40, (2e4, r2, 1.0), 0.5).solve_direct(DirectOptions::default()).unwrap().metrics.terminal_error)
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn gradient_check_is_at_round_off_for_a_quadratic() {
    let p = reduced(6, 30, (2e4, 2e7, 1.0), 0.5);
    let d = random_direction(p.grid(), p.n_modes(), 11);
    let g = p.gradient_check(&p.zero_control(), &d, &[1.0, 0.1, 0.01, 0.001]).unwrap();
    assert!(g.max_relative_error() < 1e-8, "{g:?}");
    // the forward difference has an O(s) error; the central one does not
    let j = |u: &ModalTrajectory| p.cost(u).unwrap().total;
    let fwd: Vec<f64> = [0.1, 0.05]
        .iter()
        .map(|&s| ((j(&p.zero_control().axpy(s, &d).unwrap()) - j(&p.zero_control())) / s - g.directional_derivative).abs())
        .collect();
    let slope = (fwd[0] / fwd[1]).log2();
    assert!((slope - 1.0).abs() < 1e-3, "forward-difference slope {slope}");
}

#[test]
fn fixed_point_agrees_with_direct_when_it_converges() {
    for alpha in [0.3, 0.7, 1.0] {
        let p = reduced(4, 20, (1.0, 2.0, 1.0), alpha);
        let d = p.solve_direct(DirectOptions::default()).unwrap();
        let f = p.solve_fixed_point(FixedPointOptions { relaxation: Some(0.5), max_iter: 500, tol: 1e-10 }).unwrap();
        assert!(f.converged, "{}", f.message);
        let diff = d.control.axpy(-1.0, &f.control).unwrap().l2_norm();
        assert!(diff < 1e-6, "α {alpha}: {diff}");
    }
}

#[test]
fn fixed_point_fails_honestly_on_reference_weights() {
    let p = reduced(6, 30, (2e4, 2e7, 1.0), 0.5);
    let f = p.solve_fixed_point(FixedPointOptions::default()).unwrap();
    assert!(!f.converged);
    assert!(f.variational_residual > f.residual_tolerance);
    assert_eq!(f.iterations, Some(200));
}

#[test]
fn zero_tracking_weights_leave_the_free_evolution() {
    let p = reduced(6, 30, (0.0, 0.0, 1.0), 0.5);
    let r = p.solve_direct(DirectOptions::default()).unwrap();
    assert!(r.control.data().iter().all(|&v| v == 0.0));
    assert_eq!((r.cost.tracking, r.cost.terminal, r.cost.control), (0.0, 0.0, 0.0));
    let free = p.forward(&p.zero_control()).unwrap();
    assert_eq!(r.state, free);
}
