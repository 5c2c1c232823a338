//! Forward map `F(x, λ, u₀)` on the inversion grid and its Jacobians.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::params::{ParamLayout, ParamVector};
use crate::error::{Error, Result};
use crate::fem::{interior_h1_gram, Point};
use crate::forward::{observe_states, ForwardProblem, ObservationSpec, SourceSet};
use crate::fractional::TimeGrid;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Inversion-grid problem together with what is observed and what is known.
#[derive(Debug, Clone)]
pub struct InverseSetup {
    problem: ForwardProblem,
    observation: ObservationSpec,
    known_u0: Vec<f64>,
    recover_u0: bool,
    guard: f64,
    interior: Vec<usize>,
}

impl InverseSetup {
    /// `known_u0` is used whenever the parameters carry no `u₀` block.
    /// Locations must stay at least `guard` away from ∂Ω.
    pub fn new(
        problem: ForwardProblem,
        observation: ObservationSpec,
        known_u0: Vec<f64>,
        recover_u0: bool,
        guard: f64,
    ) -> Result<Self> {
        let mesh = problem.mesh();
        if known_u0.len() != mesh.n_nodes() {
            return Err(Error::LengthMismatch {
                expected: mesh.n_nodes(),
                found: known_u0.len(),
            });
        }
        if observation.steps().end() > &problem.grid().n_steps() {
            return Err(Error::InvalidObservation(
                "window exceeds the inversion grid".into(),
            ));
        }
        let interior = mesh.interior_nodes();
        Ok(Self {
            problem,
            observation,
            known_u0,
            recover_u0,
            guard,
            interior,
        })
    }

    pub fn problem(&self) -> &ForwardProblem {
        &self.problem
    }

    pub fn observation(&self) -> &ObservationSpec {
        &self.observation
    }

    pub fn grid(&self) -> &TimeGrid {
        self.problem.grid()
    }

    pub fn dim(&self) -> usize {
        self.problem.mesh().dim()
    }

    pub fn guard(&self) -> f64 {
        self.guard
    }

    pub fn recovers_u0(&self) -> bool {
        self.recover_u0
    }

    pub fn known_u0(&self) -> &[f64] {
        &self.known_u0
    }

    /// Interior nodes carrying the `u₀` unknowns, in order.
    pub fn u0_nodes(&self) -> &[usize] {
        &self.interior
    }

    pub fn layout(&self, n_sources: usize) -> ParamLayout {
        ParamLayout {
            dim: self.dim(),
            n_sources,
            n_times: self.grid().n_steps() + 1,
            n_u0: if self.recover_u0 {
                self.interior.len()
            } else {
                0
            },
        }
    }

    /// Per-axis admissible interval `[lo, hi]` for locations, shrunk by `margin`.
    pub fn admissible_box(&self, margin: f64) -> ([f64; 2], [f64; 2]) {
        let (lo, hi) = self.problem.mesh().extent();
        let g = self.guard + margin;
        ([lo[0] + g, lo[1] + g], [hi[0] - g, hi[1] - g])
    }

    pub fn check_location(&self, index: usize, x: Point) -> Result<()> {
        let (lo, hi) = self.admissible_box(0.0);
        // round-off slack so clamped points and their exact box edge are accepted
        let tol = 1e-12;
        let ok =
            (0..self.dim()).all(|d| x[d].is_finite() && x[d] >= lo[d] - tol && x[d] <= hi[d] + tol);
        if ok {
            Ok(())
        } else {
            Err(Error::GuardViolation {
                index,
                x: x[0],
                y: x[1],
            })
        }
    }

    /// Project onto the admissible box shrunk by `margin`.
    pub fn clamp_location(&self, x: Point, margin: f64) -> Point {
        let (lo, hi) = self.admissible_box(margin);
        let mut out = x;
        for d in 0..self.dim() {
            out[d] = x[d].clamp(lo[d], hi[d]);
        }
        out
    }

    /// Full nodal initial state for the given parameters.
    pub fn initial_state(&self, params: &ParamVector) -> Result<Vec<f64>> {
        match &params.u0 {
            None => Ok(self.known_u0.clone()),
            Some(vals) => {
                if vals.len() != self.interior.len() {
                    return Err(Error::LengthMismatch {
                        expected: self.interior.len(),
                        found: vals.len(),
                    });
                }
                let mut u = vec![0.0; self.problem.mesh().n_nodes()];
                for (&i, &v) in self.interior.iter().zip(vals) {
                    u[i] = v;
                }
                Ok(u)
            }
        }
    }

    /// `H¹(Ω)` Gram matrix on the `u₀` unknowns.
    pub fn u0_gram(&self) -> Result<CsrMatrix> {
        interior_h1_gram(self.problem.mesh())
    }
}

/// Observation of the forward solve with the candidate parameters.
pub fn forward_map(params: &ParamVector, setup: &InverseSetup) -> Result<Vec<f64>> {
    for (k, &x) in params.locations.iter().enumerate() {
        setup.check_location(k, x)?;
    }
    let u0 = setup.initial_state(params)?;
    let sources = SourceSet::new(params.locations.clone(), params.intensities.clone())?;
    let states = setup.problem.solve_states(&u0, &sources)?;
    observe_states(&states, &setup.observation)
}

/// `∂F/∂λ` at the given locations. Column `k·(n+1) + m` is the observation of
/// the response to the time hat `e_m` at source `k` (zero `u₀`).
///
/// The step-endpoint collocation never samples `λ(t₀)`, so the `m = 0`
/// columns are identically zero.
pub fn jacobian_lambda(setup: &InverseSetup, locations: &[Point]) -> Result<DMatrix<f64>> {
    for (k, &x) in locations.iter().enumerate() {
        setup.check_location(k, x)?;
    }
    let n_times = setup.grid().n_steps() + 1;
    let obs = &setup.observation;
    let mask = obs.mask().node_indices();
    let n_rows = obs.len();
    let responses = locations
        .par_iter()
        .map(|&x| {
            let load = setup.problem.point_load(x)?;
            setup.problem.impulse_response(&load)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jac = DMatrix::zeros(n_rows, locations.len() * n_times);
    for (k, resp) in responses.iter().enumerate() {
        for m in 1..n_times {
            let col = k * n_times + m;
            for (w, step) in obs.steps().enumerate() {
                if step < m {
                    continue;
                }
                let state = &resp[step - m + 1];
                for (r, &i) in mask.iter().enumerate() {
                    jac[(w * mask.len() + r, col)] = state[i];
                }
            }
        }
    }
    Ok(jac)
}

/// `∂F/∂u₀` on the interior nodes; independent of the sources.
pub fn jacobian_u0(setup: &InverseSetup) -> Result<DMatrix<f64>> {
    let n_nodes = setup.problem.mesh().n_nodes();
    let cols = setup
        .interior
        .par_iter()
        .map(|&i| {
            let mut e = vec![0.0; n_nodes];
            e[i] = 1.0;
            let states = setup.problem.march(&e, |_, _| {})?;
            observe_states(&states, &setup.observation)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_rows = setup.observation.len();
    Ok(DMatrix::from_fn(n_rows, cols.len(), |r, c| cols[c][r]))
}

/// Central differences of `F` in every location coordinate:
/// `(F(x + h e) - F(x - h e)) / 2h`.
pub fn jacobian_x(
    setup: &InverseSetup,
    params: &ParamVector,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    if !(fd_step > 0.0) {
        return Err(Error::Config {
            field: "fd_step".into(),
            reason: format!("{fd_step} must be positive"),
        });
    }
    let dim = setup.dim();
    let coords: Vec<(usize, usize)> = (0..params.locations.len())
        .flat_map(|k| (0..dim).map(move |d| (k, d)))
        .collect();
    let cols = coords
        .par_iter()
        .map(|&(k, d)| {
            let mut plus = params.clone();
            plus.locations[k][d] += fd_step;
            let mut minus = params.clone();
            minus.locations[k][d] -= fd_step;
            setup.check_location(k, plus.locations[k])?;
            setup.check_location(k, minus.locations[k])?;
            let fp = forward_map(&plus, setup)?;
            let fm = forward_map(&minus, setup)?;
            Ok(fp
                .iter()
                .zip(&fm)
                .map(|(a, b)| (a - b) / (2.0 * fd_step))
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let n_rows = setup.observation.len();
    Ok(DMatrix::from_fn(n_rows, cols.len(), |r, c| cols[c][r]))
}

/// `H¹(0, T)` Gram matrix of the P1 hats on the time grid: mass plus stiffness.
pub fn h1_gram(grid: &TimeGrid) -> CsrMatrix {
    let n = grid.n_steps();
    let tau = grid.tau();
    let mut t = TripletBuilder::with_capacity(n + 1, n + 1, 4 * n);
    for c in 0..n {
        let (a, b) = (c, c + 1);
        let diag = tau / 3.0 + 1.0 / tau;
        let off = tau / 6.0 - 1.0 / tau;
        t.push(a, a, diag);
        t.push(b, b, diag);
        t.push(a, b, off);
        t.push(b, a, off);
    }
    t.build()
}
