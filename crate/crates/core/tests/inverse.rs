mod common;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;

use subdiff::fractional::TimeGrid;
use subdiff::inverse::{
    forward_map, h1_gram, jacobian_lambda, jacobian_x, linearized_objective, lm_step,
    penalty_matrix, regularized_step, run_lm, Betas, LmConfig, ParamVector, StopReason,
};

fn silent(p: &ParamVector) -> ParamVector {
    ParamVector {
        intensities: p.intensities.iter().map(|s| vec![0.0; s.len()]).collect(),
        ..p.clone()
    }
}

fn packed_intensities(p: &ParamVector) -> DVector<f64> {
    DVector::from_iterator(
        p.intensities.iter().map(Vec::len).sum(),
        p.intensities.iter().flatten().copied(),
    )
}

fn linearity_gap(x: &[f64]) -> f64 {
    let setup = common::small_setup_1d(0.5, false);
    let mut p = common::two_sources(&setup);
    p.locations = x.iter().map(|&v| [v, 0.0]).collect();
    let f = forward_map(&p, &setup).unwrap();
    let f0 = forward_map(&silent(&p), &setup).unwrap();
    let jl = jacobian_lambda(&setup, &p.locations).unwrap();
    let lin = &jl * packed_intensities(&p);
    let pred: Vec<f64> = f0.iter().zip(lin.iter()).map(|(a, b)| a + b).collect();
    common::max_diff(&f, &pred) / common::max_abs(&f).max(1.0)
}

#[test]
fn lambda_jacobian_reproduces_forward_map() {
    assert!(linearity_gap(&[0.3, 0.7]) <= 1e-10);
    assert!(linearity_gap(&[0.4125, 0.5]) <= 1e-10);
}

#[test]
fn lambda_jacobian_matches_finite_differences() {
    let setup = common::small_setup_1d(0.5, false);
    let p = common::one_source(&setup, 0.45);
    let jl = jacobian_lambda(&setup, &p.locations).unwrap();
    let f = forward_map(&p, &setup).unwrap();
    let delta = 1e-6;
    for m in [1, 5, 20, 33, 40] {
        let mut q = p.clone();
        q.intensities[0][m] += delta;
        let fq = forward_map(&q, &setup).unwrap();
        for r in 0..f.len() {
            let fd = (fq[r] - f[r]) / delta;
            assert!((fd - jl[(r, m)]).abs() <= 1e-8, "m={m} row={r}");
        }
    }
}

#[test]
fn early_hats_reach_late_window_through_memory() {
    let setup = common::small_setup_1d(0.5, false);
    let jl = jacobian_lambda(&setup, &[[0.5, 0.0]]).unwrap();
    // t₀ is never sampled by the step-endpoint collocation
    assert!(jl.column(0).iter().all(|&v| v == 0.0));
    // t₁ lies far before the window (T/2, T) and still leaves a trace
    let first = jl.column(1).amax();
    assert!(first > 0.0);
    assert!(first < jl.column(40).amax());
}

#[test]
fn location_jacobian_is_antisymmetric_about_midpoint() {
    let setup = common::symmetric_setup_1d();
    let grid = *setup.grid();
    let p = ParamVector {
        locations: vec![[0.5, 0.0]],
        intensities: vec![vec![1.0; grid.n_steps() + 1]],
        u0: None,
    };
    let jx = jacobian_x(&setup, &p, 1e-3).unwrap();
    let nodes = setup.observation().mask().node_indices();
    let n_last = setup.problem().mesh().n_nodes() - 1;
    let col = jx.column(0);
    let scale = col.amax();
    assert!(scale > 0.0);
    for w in 0..setup.observation().n_times() {
        for (r, &i) in nodes.iter().enumerate() {
            let mirror = nodes.iter().position(|&j| j == n_last - i).unwrap();
            let a = col[w * nodes.len() + r];
            let b = col[w * nodes.len() + mirror];
            assert!((a + b).abs() <= 1e-12 * scale);
        }
    }
}

#[test]
fn central_differences_are_converged() {
    // F is affine in x inside each cell, so successive halvings agree to round-off
    let setup = common::small_setup_1d(0.5, false);
    let p = common::one_source(&setup, 0.4625);
    let cols: Vec<DMatrix<f64>> = [4e-3, 2e-3, 1e-3]
        .iter()
        .map(|&h| jacobian_x(&setup, &p, h).unwrap())
        .collect();
    let d1 = (&cols[0] - &cols[1]).amax();
    let d2 = (&cols[1] - &cols[2]).amax();
    let scale = cols[2].amax();
    let roundoff = 1e-9 * scale;
    assert!(d2 <= roundoff || (d1 / d2).log2() >= 1.5, "d1={d1} d2={d2}");
}

#[test]
fn silent_source_has_zero_location_column() {
    let setup = common::small_setup_1d(0.5, false);
    let mut p = common::two_sources(&setup);
    p.intensities[1].iter_mut().for_each(|v| *v = 0.0);
    let jx = jacobian_x(&setup, &p, 1e-4).unwrap();
    assert!(jx.column(1).iter().all(|&v| v == 0.0));
    assert!(jx.column(0).amax() > 0.0);
}

#[test]
fn h1_gram_exact_values() {
    let grid = TimeGrid::new(2.0, 8).unwrap();
    let g = h1_gram(&grid);
    let c = vec![1.5; 9];
    assert!((g.quadratic_form(&c) - 1.5 * 1.5 * 2.0).abs() <= 1e-13);
    let grid = TimeGrid::new(1.0, 2).unwrap();
    let g = h1_gram(&grid);
    assert!((g.quadratic_form(&grid.nodes()) - 4.0 / 3.0).abs() <= 1e-14);
    let dense = g.to_dense();
    let eig = SymmetricEigen::new(DMatrix::from_fn(3, 3, |i, j| dense[i][j]));
    assert!(eig.eigenvalues.min() > 0.0);
}

#[test]
fn exact_data_is_a_fixed_point_of_the_step() {
    let setup = common::small_setup_1d(0.5, false);
    let p = common::two_sources(&setup);
    let data = forward_map(&p, &setup).unwrap();
    let betas = Betas {
        x: 1e-3,
        lambda: 1e-6,
        u0: 1e-6,
    };
    let next = lm_step(&p, &data, &setup, betas, 1e-4).unwrap();
    assert_eq!(next, p);
}

#[test]
fn truth_as_initial_guess_stops_immediately() {
    let setup = common::small_setup_1d(0.5, false);
    let p = common::one_source(&setup, 0.5);
    let data = forward_map(&p, &setup).unwrap();
    let out = run_lm(&p, &data, &setup, &LmConfig::default(), Some(&p)).unwrap();
    assert_eq!(out.iterations(), 1);
    assert_eq!(out.history.records[0].step_norm, 0.0);
    assert_ne!(out.stop_reason, StopReason::MaxIterations);

    let cfg = LmConfig {
        step_tol: 0.0,
        max_iter: 10,
        ..LmConfig::default()
    };
    let out = run_lm(&p, &data, &setup, &cfg, Some(&p)).unwrap();
    assert_eq!(out.iterations(), 10);
    assert!((out.params.locations[0][0] - 0.5).abs() <= 1e-10);
}

#[test]
fn recovers_noise_free_source_from_offset_guess() {
    let setup = common::small_setup_1d(0.5, false);
    let truth = common::one_source(&setup, 0.5);
    let data = forward_map(&truth, &setup).unwrap();
    let mut guess = common::one_source(&setup, 0.4);
    guess.intensities[0].iter_mut().for_each(|v| *v *= 1.25);
    let out = run_lm(&guess, &data, &setup, &LmConfig::default(), Some(&truth)).unwrap();
    assert!((out.params.locations[0][0] - 0.5).abs() <= 1e-3);
    let errs: Vec<f64> = out
        .history
        .records
        .iter()
        .filter_map(|r| r.location_error)
        .collect();
    assert!(errs.last().unwrap() < &errs[0]);
}

#[test]
fn permuting_samples_leaves_step_unchanged() {
    let setup = common::small_setup_1d(0.5, false);
    let p = common::one_source(&setup, 0.45);
    let truth = common::one_source(&setup, 0.5);
    let data = forward_map(&truth, &setup).unwrap();
    let f = forward_map(&p, &setup).unwrap();
    let jx = jacobian_x(&setup, &p, 1e-4).unwrap();
    let jl = jacobian_lambda(&setup, &p.locations).unwrap();
    let jac = DMatrix::from_fn(jx.nrows(), 1 + jl.ncols(), |r, c| {
        if c == 0 {
            jx[(r, 0)]
        } else {
            jl[(r, c - 1)]
        }
    });
    let resid: Vec<f64> = data.iter().zip(&f).map(|(d, v)| d - v).collect();
    let layout = p.layout(1);
    let betas = Betas {
        x: 1e-2,
        lambda: 1e-4,
        u0: 0.0,
    };
    let penalty = penalty_matrix(layout, betas, &h1_gram(setup.grid()), None);
    let step = regularized_step(&jac, &resid, &penalty).unwrap();

    let n = resid.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 7919 + 13) % n).collect();
    let mut sorted = perm.clone();
    sorted.sort_unstable();
    sorted.dedup();
    assert_eq!(sorted.len(), n);
    let jac_p = DMatrix::from_fn(n, jac.ncols(), |r, c| jac[(perm[r], c)]);
    let resid_p: Vec<f64> = perm.iter().map(|&i| resid[i]).collect();
    let step_p = regularized_step(&jac_p, &resid_p, &penalty).unwrap();
    assert!((&step - &step_p).amax() <= 1e-12 * step.amax().max(1e-300));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn step_never_increases_linearized_objective(
        seed in prop::collection::vec(-1.0f64..1.0, 48),
        rows in 6usize..12,
        beta in 1e-6f64..10.0,
    ) {
        let cols = 4;
        let jac = DMatrix::from_fn(rows, cols, |r, c| seed[(r * cols + c) % seed.len()] + if r == c { 1.0 } else { 0.0 });
        let resid: Vec<f64> = (0..rows).map(|r| seed[(r * 5 + 3) % seed.len()]).collect();
        let penalty = DMatrix::from_diagonal(&DVector::from_fn(cols, |i, _| beta * (1.0 + i as f64)));
        let step = regularized_step(&jac, &resid, &penalty).unwrap();
        let at_step = linearized_objective(&jac, &resid, &penalty, &step);
        let at_zero = linearized_objective(&jac, &resid, &penalty, &DVector::zeros(cols));
        prop_assert!(at_step <= at_zero * (1.0 + 1e-12));
    }

    #[test]
    fn lambda_linearity_at_random_locations(x1 in 0.05f64..0.45, x2 in 0.55f64..0.95) {
        prop_assert!(linearity_gap(&[x1, x2]) <= 1e-10);
    }
}
