#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use subdiff::fem::{
    build_interval_mesh, build_rect_mesh, interpolate, point_source_vector, subdomain_mask,
    CoefficientSet, Mesh,
};
use subdiff::forward::{ForwardProblem, ObservationSpec, SourceSet};
use subdiff::fractional::{FractionalOrder, TimeGrid};
use subdiff::inverse::{InverseSetup, ParamVector};

pub fn interval(n_cells: usize) -> Arc<Mesh> {
    Arc::new(build_interval_mesh(1.0, n_cells).unwrap())
}

pub fn square(n: usize) -> Arc<Mesh> {
    Arc::new(build_rect_mesh(n, n).unwrap())
}

pub fn problem(mesh: Arc<Mesh>, alpha: f64, n_steps: usize) -> ForwardProblem {
    ForwardProblem::new(
        mesh,
        &CoefficientSet::laplacian(),
        FractionalOrder::new(alpha).unwrap(),
        TimeGrid::new(1.0, n_steps).unwrap(),
    )
    .unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Small 1D inversion: ω = [0, ¼] ∪ [¾, 1], trailing half of (0, 1].
pub fn small_setup_1d(alpha: f64, recover_u0: bool) -> InverseSetup {
    let mesh = interval(40);
    let problem = problem(mesh.clone(), alpha, 40);
    let mask = subdomain_mask(
        &mesh,
        |p| p[0] <= 0.25 + 1e-9 || p[0] >= 0.75 - 1e-9,
        "two ends",
    )
    .unwrap();
    let obs = ObservationSpec::trailing(mask, problem.grid(), 0.5).unwrap();
    let u0 = interpolate(&mesh, |p| p[0] * (1.0 - p[0]));
    InverseSetup::new(problem, obs, u0, recover_u0, 0.025).unwrap()
}

/// Symmetric 1D setup for reflection checks: ω symmetric about ½.
pub fn symmetric_setup_1d() -> InverseSetup {
    let mesh = interval(40);
    let problem = problem(mesh.clone(), 0.5, 20);
    let mask = subdomain_mask(
        &mesh,
        |p| (p[0] - 0.5).abs() >= 0.25 - 1e-9,
        "symmetric ends",
    )
    .unwrap();
    let obs = ObservationSpec::trailing(mask, problem.grid(), 0.5).unwrap();
    InverseSetup::new(problem, obs, vec![0.0; mesh.n_nodes()], false, 0.025).unwrap()
}

pub fn exp_profile(grid: &TimeGrid, scale: f64) -> Vec<f64> {
    grid.nodes().iter().map(|t| scale * t.exp()).collect()
}

pub fn sine_profile(grid: &TimeGrid) -> Vec<f64> {
    grid.nodes()
        .iter()
        .map(|t| 0.2 * (2.0 * std::f64::consts::PI * t).sin() + 0.4)
        .collect()
}

pub fn one_source(setup: &InverseSetup, x: f64) -> ParamVector {
    ParamVector {
        locations: vec![[x, 0.0]],
        intensities: vec![exp_profile(setup.grid(), 0.2)],
        u0: None,
    }
}

pub fn two_sources(setup: &InverseSetup) -> ParamVector {
    ParamVector {
        locations: vec![[0.3, 0.0], [0.7, 0.0]],
        intensities: vec![exp_profile(setup.grid(), 0.2), sine_profile(setup.grid())],
        u0: None,
    }
}

/// Backward Euler for `M u' + S u = F` on the interior nodes, dense LU.
pub fn backward_euler(p: &ForwardProblem, u0: &[f64], sources: &SourceSet) -> Vec<Vec<f64>> {
    let mesh = p.mesh();
    let tau = p.grid().tau();
    let idx = mesh.interior_nodes();
    let dense = |m: &subdiff::sparse::CsrMatrix| {
        let d = m.submatrix(&idx, &idx).to_dense();
        DMatrix::from_fn(idx.len(), idx.len(), |i, j| d[i][j])
    };
    let (mass, stiff) = (dense(p.mass()), dense(p.stiffness()));
    let lu = (&mass / tau + &stiff).lu();
    let loads: Vec<Vec<f64>> = sources
        .locations()
        .iter()
        .map(|&x| point_source_vector(mesh, x).unwrap())
        .collect();
    let mut u = DVector::from_iterator(idx.len(), idx.iter().map(|&i| u0[i]));
    let mut out = Vec::new();
    for n in 1..=p.grid().n_steps() {
        let mut rhs = &mass * &u / tau;
        for (load, series) in loads.iter().zip(sources.intensities()) {
            for (r, &i) in idx.iter().enumerate() {
                rhs[r] += series[n] * load[i];
            }
        }
        u = lu.solve(&rhs).unwrap();
        let mut full = vec![0.0; mesh.n_nodes()];
        for (r, &i) in idx.iter().enumerate() {
            full[i] = u[r];
        }
        out.push(full);
    }
    out
}
