mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use proptest::prelude::*;

use subdiff::fem::{interpolate, subdomain_mask, CoefficientSet, Mesh};
use subdiff::forward::{
    observe, solve_forward, steady_point_source_1d, ForwardProblem, ObservationSpec, SourceSet,
};
use subdiff::fractional::{mittag_leffler, FractionalOrder, TimeGrid};

fn sources_1d(grid: &TimeGrid) -> SourceSet {
    SourceSet::new(
        vec![[0.3, 0.0], [0.71, 0.0]],
        vec![common::exp_profile(grid, 0.2), common::sine_profile(grid)],
    )
    .unwrap()
}

fn sources_2d(grid: &TimeGrid) -> SourceSet {
    SourceSet::new(
        vec![[0.4, 0.37], [0.62, 0.55]],
        vec![common::exp_profile(grid, 0.5), common::sine_profile(grid)],
    )
    .unwrap()
}

fn superposition_gap(
    mesh: Arc<Mesh>,
    coeffs: &CoefficientSet,
    alpha: f64,
    sources: impl Fn(&TimeGrid) -> SourceSet,
) -> f64 {
    let grid = TimeGrid::new(1.0, 30).unwrap();
    let order = FractionalOrder::new(alpha).unwrap();
    let p = ForwardProblem::new(mesh.clone(), coeffs, order, grid).unwrap();
    let u0 = interpolate(&mesh, |x| (PI * x[0]).sin() * (1.0 + x[1]));
    let zero = vec![0.0; mesh.n_nodes()];
    let src = sources(&grid);
    let full = p.solve(&u0, &src).unwrap();
    let free = p.solve(&u0, &SourceSet::empty()).unwrap();
    let driven = p.solve(&zero, &src).unwrap();
    let mut gap = 0.0f64;
    for m in 0..=grid.n_steps() {
        let sum: Vec<f64> = free
            .state(m)
            .iter()
            .zip(driven.state(m))
            .map(|(a, b)| a + b)
            .collect();
        gap = gap
            .max(common::max_diff(full.state(m), &sum) / common::max_abs(full.state(m)).max(1.0));
    }
    gap
}

#[test]
fn affine_superposition() {
    for alpha in [0.3, 0.5, 1.0] {
        assert!(
            superposition_gap(
                common::interval(50),
                &CoefficientSet::laplacian(),
                alpha,
                sources_1d
            ) <= 1e-12
        );
        assert!(
            superposition_gap(
                common::square(12),
                &CoefficientSet::laplacian(),
                alpha,
                sources_2d
            ) <= 1e-12
        );
    }
    let drift = CoefficientSet::isotropic(2.0, 0.5, [1.0, -0.5], 0.3);
    assert!(superposition_gap(common::square(10), &drift, 0.5, sources_2d) <= 1e-12);
}

#[test]
fn classical_order_is_backward_euler_heat_solver() {
    for (mesh, two_d) in [(common::interval(60), false), (common::square(10), true)] {
        let p = common::problem(mesh.clone(), 1.0, 40);
        let u0 = interpolate(&mesh, |x| {
            (PI * x[0]).sin() * if two_d { (PI * x[1]).sin() } else { 1.0 }
        });
        let src = if two_d {
            sources_2d(p.grid())
        } else {
            sources_1d(p.grid())
        };
        let sol = p.solve(&u0, &src).unwrap();
        let be = common::backward_euler(&p, &u0, &src);
        for (n, b) in be.iter().enumerate() {
            assert!(
                common::max_diff(sol.state(n + 1), b) <= 1e-12,
                "step {}",
                n + 1
            );
        }
    }
}

#[test]
fn eigenmode_decay_matches_mittag_leffler() {
    let mesh = common::interval(100);
    let order = FractionalOrder::new(0.5).unwrap();
    let u0 = interpolate(&mesh, |x| (PI * x[0]).sin());
    let exact_decay = mittag_leffler(order, -PI * PI).unwrap();
    let err = |n_steps: usize| {
        let grid = TimeGrid::new(1.0, n_steps).unwrap();
        let sol = solve_forward(
            mesh.clone(),
            &CoefficientSet::laplacian(),
            order,
            grid,
            &u0,
            &SourceSet::empty(),
        )
        .unwrap();
        let exact: Vec<f64> = u0.iter().map(|v| v * exact_decay).collect();
        common::max_diff(sol.final_state(), &exact) / common::max_abs(&exact)
    };
    let (e1, e2) = (err(1000), err(2000));
    assert!(e1 <= 0.02, "{e1}");
    assert!(e1 / e2 >= 1.6, "{}", e1 / e2);
}

#[test]
fn temporal_self_convergence() {
    let mesh = common::interval(40);
    let u0 = interpolate(&mesh, |x| (PI * x[0]).sin());
    let run = |n: usize| {
        let p = common::problem(mesh.clone(), 0.5, n);
        let src = SourceSet::sampled(vec![[0.5, 0.0]], &[&|t: f64| 1.0 + t * t], p.grid()).unwrap();
        p.solve(&u0, &src).unwrap().final_state().to_vec()
    };
    let reference = run(320);
    let e1 = common::max_diff(&run(40), &reference);
    let e2 = common::max_diff(&run(80), &reference);
    assert!((e1 / e2).log2() >= 0.8, "order {}", (e1 / e2).log2());
}

#[test]
fn steady_point_source_is_stationary() {
    let mesh = common::interval(100);
    let p = common::problem(mesh.clone(), 0.5, 200);
    let steady = steady_point_source_1d(0.5, 1.0, 1.0).unwrap();
    let u0 = interpolate(&mesh, |x| steady.eval(x[0]));
    let src = SourceSet::new(vec![[0.5, 0.0]], vec![vec![1.0; 201]]).unwrap();
    let sol = p.solve(&u0, &src).unwrap();
    for w in sol.states().windows(2) {
        assert!(common::max_diff(&w[0], &w[1]) <= 1e-10);
    }
    let mask = subdomain_mask(&mesh, |x| x[0] < 0.5, "(0, 0.5)").unwrap();
    let obs = ObservationSpec::trailing(mask.clone(), p.grid(), 0.25).unwrap();
    let data = observe(&sol, &obs).unwrap();
    for (k, v) in data.iter().enumerate() {
        let node = mask.node_indices()[k % mask.len()];
        assert!((v - 0.5 * mesh.node(node)[0]).abs() <= 1e-10);
    }
}

#[test]
fn zero_data_zero_solution() {
    let mesh = common::square(6);
    let p = common::problem(mesh.clone(), 0.5, 10);
    let sol = p
        .solve(&vec![0.0; mesh.n_nodes()], &SourceSet::empty())
        .unwrap();
    assert!(sol.states().iter().all(|s| s.iter().all(|&v| v == 0.0)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn superposition_for_random_sources(
        alpha in 0.05f64..=1.0,
        x in 0.05f64..0.95,
        y in 0.05f64..0.95,
        amp in -5.0f64..5.0,
    ) {
        let mesh = common::square(8);
        let gap = superposition_gap(mesh, &CoefficientSet::laplacian(), alpha, |g| {
            SourceSet::new(vec![[x, y]], vec![g.nodes().iter().map(|t| amp * (1.0 + t)).collect()]).unwrap()
        });
        prop_assert!(gap <= 1e-12);
    }

    #[test]
    fn solution_scales_linearly_with_sources(alpha in 0.05f64..=1.0, c in -4.0f64..4.0) {
        let mesh = common::interval(30);
        let p = common::problem(mesh.clone(), alpha, 15);
        let zero = vec![0.0; mesh.n_nodes()];
        let a = p.solve(&zero, &sources_1d(p.grid())).unwrap();
        let scaled = SourceSet::new(
            sources_1d(p.grid()).locations().to_vec(),
            sources_1d(p.grid()).intensities().iter().map(|s| s.iter().map(|v| c * v).collect()).collect(),
        ).unwrap();
        let b = p.solve(&zero, &scaled).unwrap();
        let scaled_a: Vec<f64> = a.final_state().iter().map(|v| c * v).collect();
        prop_assert!(common::max_diff(b.final_state(), &scaled_a) <= 1e-12 * (1.0 + common::max_abs(&scaled_a)));
    }
}
