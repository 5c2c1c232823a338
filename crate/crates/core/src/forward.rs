//! Time stepping for `ρ ∂ₜᵅu + 𝒜u = Σₖ λₖ(t) δ_{xₖ}` with homogeneous Dirichlet data.
//!
//! P1 elements in space, backward-Euler convolution quadrature in time. With
//! `Dⁿ = Uⁿ - U⁰` each step solves
//!
//! ```text
//! (τ^{-α} w₀ M_ρ + S) Dⁿ = Fⁿ - S U⁰ - τ^{-α} M_ρ Σ_{j=1}^{n} w_j D^{n-j}
//! ```
//!
//! which is the CQ discretisation of the Caputo derivative written in terms of
//! the shifted history. The step matrix is factorized once per problem.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{
    apply_dirichlet, assemble_mass, assemble_stiffness, CoefficientSet, Mesh, Point, SubdomainMask,
};
use crate::fractional::{CqWeights, FractionalOrder, TimeGrid};
use crate::solver::{factorize, factorize_iterative, Factorization};
use crate::sparse::CsrMatrix;

/// Point sources with intensities sampled at the time-grid nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSet {
    locations: Vec<Point>,
    intensities: Vec<Vec<f64>>,
}

impl SourceSet {
    pub fn new(locations: Vec<Point>, intensities: Vec<Vec<f64>>) -> Result<Self> {
        if locations.len() != intensities.len() {
            return Err(Error::InvalidSources(format!(
                "{} locations but {} intensity series",
                locations.len(),
                intensities.len()
            )));
        }
        if let Some(first) = intensities.first() {
            if intensities.iter().any(|s| s.len() != first.len()) {
                return Err(Error::InvalidSources(
                    "intensity series differ in length".into(),
                ));
            }
        }
        for (i, a) in locations.iter().enumerate() {
            for b in &locations[i + 1..] {
                if a == b {
                    return Err(Error::InvalidSources(format!("duplicate location {a:?}")));
                }
            }
        }
        Ok(Self {
            locations,
            intensities,
        })
    }

    pub fn empty() -> Self {
        Self {
            locations: Vec::new(),
            intensities: Vec::new(),
        }
    }

    /// Sample `profiles[k]` at every node of `grid`.
    pub fn sampled(
        locations: Vec<Point>,
        profiles: &[&dyn Fn(f64) -> f64],
        grid: &TimeGrid,
    ) -> Result<Self> {
        let t = grid.nodes();
        let intensities = profiles
            .iter()
            .map(|f| t.iter().map(|&s| f(s)).collect())
            .collect();
        Self::new(locations, intensities)
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn locations(&self) -> &[Point] {
        &self.locations
    }

    pub fn intensities(&self) -> &[Vec<f64>] {
        &self.intensities
    }
}

/// Nodal states `U⁰..Uⁿ` of one forward solve.
#[derive(Debug, Clone)]
pub struct ForwardSolution {
    mesh: Arc<Mesh>,
    grid: TimeGrid,
    states: Vec<Vec<f64>>,
}

impl ForwardSolution {
    pub fn new(mesh: Arc<Mesh>, grid: TimeGrid, states: Vec<Vec<f64>>) -> Result<Self> {
        if states.len() != grid.n_steps() + 1 {
            return Err(Error::LengthMismatch {
                expected: grid.n_steps() + 1,
                found: states.len(),
            });
        }
        if let Some(bad) = states.iter().find(|s| s.len() != mesh.n_nodes()) {
            return Err(Error::LengthMismatch {
                expected: mesh.n_nodes(),
                found: bad.len(),
            });
        }
        Ok(Self { mesh, grid, states })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, m: usize) -> &[f64] {
        &self.states[m]
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("at least the initial state")
    }

    /// `max |U^m_i|` over all nodes and times.
    pub fn max_abs(&self) -> f64 {
        self.states
            .iter()
            .flatten()
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV matrix: header `t,node_0,...`, one row per time node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "t")?;
        for i in 0..self.mesh.n_nodes() {
            write!(out, ",node_{i}")?;
        }
        writeln!(out)?;
        for (m, s) in self.states.iter().enumerate() {
            write!(out, "{}", self.grid.node(m))?;
            for v in s {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Observation region ω and trailing time window `(T - ε, T]` as step indices.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationSpec {
    mask: SubdomainMask,
    first_step: usize,
    last_step: usize,
    epsilon: f64,
}

impl ObservationSpec {
    /// Steps `m` with `t_m > T - ε`, up to and including `T`.
    pub fn trailing(mask: SubdomainMask, grid: &TimeGrid, epsilon: f64) -> Result<Self> {
        let t_end = grid.horizon();
        if !(epsilon > 0.0 && epsilon < t_end) {
            return Err(Error::InvalidObservation(format!(
                "epsilon {epsilon} must lie in (0, {t_end})"
            )));
        }
        let start_time = t_end - epsilon;
        let tol = 1e-9 * grid.tau();
        let first_step = (0..=grid.n_steps())
            .find(|&m| grid.node(m) > start_time + tol)
            .unwrap_or(grid.n_steps());
        let spec = Self {
            mask,
            first_step,
            last_step: grid.n_steps(),
            epsilon,
        };
        if spec.n_times() < 2 {
            return Err(Error::InvalidObservation(format!(
                "window (T - {epsilon}, T] holds fewer than 2 time steps"
            )));
        }
        Ok(spec)
    }

    /// Explicit inclusive step range.
    pub fn from_steps(
        mask: SubdomainMask,
        first_step: usize,
        last_step: usize,
        grid: &TimeGrid,
    ) -> Result<Self> {
        if first_step > last_step || last_step > grid.n_steps() {
            return Err(Error::InvalidObservation(format!(
                "empty or out-of-range window {first_step}..={last_step}"
            )));
        }
        Ok(Self {
            mask,
            first_step,
            last_step,
            epsilon: grid.horizon() - grid.node(first_step),
        })
    }

    pub fn mask(&self) -> &SubdomainMask {
        &self.mask
    }

    pub fn steps(&self) -> std::ops::RangeInclusive<usize> {
        self.first_step..=self.last_step
    }

    pub fn n_times(&self) -> usize {
        self.last_step + 1 - self.first_step
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of scalar samples, `|window| × |mask|`.
    pub fn len(&self) -> usize {
        self.n_times() * self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples `U^m_i`, `m` in the window (outer), `i` in the mask (inner).
pub fn observe(sol: &ForwardSolution, spec: &ObservationSpec) -> Result<Vec<f64>> {
    observe_states(sol.states(), spec)
}

pub(crate) fn observe_states(states: &[Vec<f64>], spec: &ObservationSpec) -> Result<Vec<f64>> {
    if spec.is_empty() {
        return Err(Error::InvalidObservation("empty window or mask".into()));
    }
    if spec.last_step >= states.len() {
        return Err(Error::InvalidObservation(format!(
            "window ends at step {} but the solution has {} states",
            spec.last_step,
            states.len()
        )));
    }
    let n_nodes = states[0].len();
    if let Some(&bad) = spec.mask.node_indices().iter().find(|&&i| i >= n_nodes) {
        return Err(Error::InvalidObservation(format!(
            "mask node {bad} not on mesh"
        )));
    }
    let mut out = Vec::with_capacity(spec.len());
    for m in spec.steps() {
        out.extend(spec.mask.node_indices().iter().map(|&i| states[m][i]));
    }
    Ok(out)
}

/// How the step matrix is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverChoice {
    #[default]
    Direct,
    ConjugateGradient,
}

/// Sparse point load: (node, shape-function value) pairs.
pub type PointLoad = Vec<(usize, f64)>;

/// Everything about a forward problem that does not depend on the data:
/// assembled matrices, the factorized step matrix and the CQ weights.
#[derive(Debug, Clone)]
pub struct ForwardProblem {
    mesh: Arc<Mesh>,
    grid: TimeGrid,
    weights: CqWeights,
    mass: CsrMatrix,
    stiffness: CsrMatrix,
    step: Factorization,
}

impl ForwardProblem {
    pub fn new(
        mesh: Arc<Mesh>,
        coeffs: &CoefficientSet,
        alpha: FractionalOrder,
        grid: TimeGrid,
    ) -> Result<Self> {
        Self::with_solver(mesh, coeffs, alpha, grid, SolverChoice::Direct)
    }

    pub fn with_solver(
        mesh: Arc<Mesh>,
        coeffs: &CoefficientSet,
        alpha: FractionalOrder,
        grid: TimeGrid,
        solver: SolverChoice,
    ) -> Result<Self> {
        let weights = CqWeights::for_grid(alpha, &grid);
        let mass = assemble_mass(&mesh, &coeffs.rho)?;
        let stiffness = assemble_stiffness(&mesh, coeffs)?;
        let a = mass.linear_combination(weights.scale() * weights.weights()[0], &stiffness, 1.0)?;
        let (a, _) = apply_dirichlet(&a, &vec![0.0; mesh.n_nodes()], mesh.boundary_nodes())?;
        let symmetric = !coeffs.has_drift();
        let step = match (solver, symmetric) {
            (SolverChoice::ConjugateGradient, true) => factorize_iterative(&a)?,
            _ => factorize(&a, symmetric)?,
        };
        Ok(Self {
            mesh,
            grid,
            weights,
            mass,
            stiffness,
            step,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn alpha(&self) -> FractionalOrder {
        self.weights.alpha()
    }

    pub fn mass(&self) -> &CsrMatrix {
        &self.mass
    }

    pub fn stiffness(&self) -> &CsrMatrix {
        &self.stiffness
    }

    /// Sparse load of a unit source at `x`.
    pub fn point_load(&self, x: Point) -> Result<PointLoad> {
        if !self.mesh.contains(x) {
            return Err(Error::PointOutsideMesh { x: x[0], y: x[1] });
        }
        if self.mesh.on_boundary(x) {
            return Err(Error::PointOnBoundary { x: x[0], y: x[1] });
        }
        Ok(self
            .mesh
            .locate(x)?
            .pairs()
            .filter(|&(_, w)| w != 0.0)
            .collect())
    }

    /// Solve from initial nodal values `u0` with the given sources.
    pub fn solve(&self, u0: &[f64], sources: &SourceSet) -> Result<ForwardSolution> {
        let states = self.solve_states(u0, sources)?;
        ForwardSolution::new(self.mesh.clone(), self.grid, states)
    }

    pub(crate) fn solve_states(&self, u0: &[f64], sources: &SourceSet) -> Result<Vec<Vec<f64>>> {
        let n_steps = self.grid.n_steps();
        if let Some(s) = sources.intensities().first() {
            if s.len() != n_steps + 1 {
                return Err(Error::InvalidSources(format!(
                    "intensity series has {} samples, grid needs {}",
                    s.len(),
                    n_steps + 1
                )));
            }
        }
        let loads = sources
            .locations()
            .iter()
            .map(|&x| self.point_load(x))
            .collect::<Result<Vec<_>>>()?;
        self.march(u0, |n, f| {
            for (load, series) in loads.iter().zip(sources.intensities()) {
                let lam = series[n];
                if lam != 0.0 {
                    for &(i, w) in load {
                        f[i] += lam * w;
                    }
                }
            }
        })
    }

    /// Response to a unit load `load` switched on at step 1 only, zero initial data.
    ///
    /// The scheme is causal and shift-invariant, so the response to the same
    /// load at step `m` is this sequence delayed by `m - 1` steps.
    pub fn impulse_response(&self, load: &PointLoad) -> Result<Vec<Vec<f64>>> {
        let zero = vec![0.0; self.mesh.n_nodes()];
        self.march(&zero, |n, f| {
            if n == 1 {
                for &(i, w) in load {
                    f[i] += w;
                }
            }
        })
    }

    /// Core CQ recursion; `load(n, f)` adds `Fⁿ` into the zeroed buffer `f`.
    pub(crate) fn march(
        &self,
        u0: &[f64],
        mut load: impl FnMut(usize, &mut [f64]),
    ) -> Result<Vec<Vec<f64>>> {
        let dim = self.mesh.n_nodes();
        if u0.len() != dim {
            return Err(Error::LengthMismatch {
                expected: dim,
                found: u0.len(),
            });
        }
        let boundary = self.mesh.boundary_nodes();
        let mut u_init = u0.to_vec();
        for &b in boundary {
            u_init[b] = 0.0;
        }
        let n_steps = self.grid.n_steps();
        let w = self.weights.weights();
        let scale = self.weights.scale();
        let s_u0 = self.stiffness.mul_vec(&u_init);

        // increments D^m = U^m - U^0
        let mut incr: Vec<Vec<f64>> = Vec::with_capacity(n_steps + 1);
        incr.push(vec![0.0; dim]);
        let mut acc = vec![0.0; dim];
        let mut m_acc = vec![0.0; dim];
        let mut rhs = vec![0.0; dim];
        for n in 1..=n_steps {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for j in 1..=n {
                let wj = w[j];
                if wj == 0.0 {
                    continue;
                }
                for (a, &d) in acc.iter_mut().zip(&incr[n - j]) {
                    *a += wj * d;
                }
            }
            self.mass.mul_vec_into(&acc, &mut m_acc);
            rhs.iter_mut().for_each(|r| *r = 0.0);
            load(n, &mut rhs);
            for i in 0..dim {
                rhs[i] -= s_u0[i] + scale * m_acc[i];
            }
            for &b in boundary {
                rhs[b] = 0.0;
            }
            let d = self.step.solve(&rhs)?;
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(n));
            }
            incr.push(d);
        }
        Ok(incr
            .into_iter()
            .map(|d| d.iter().zip(&u_init).map(|(d, u)| d + u).collect())
            .collect())
    }
}

/// One-shot forward solve: assemble, factorize and march.
pub fn solve_forward(
    mesh: Arc<Mesh>,
    coeffs: &CoefficientSet,
    alpha: FractionalOrder,
    grid: TimeGrid,
    u0: &[f64],
    sources: &SourceSet,
) -> Result<ForwardSolution> {
    ForwardProblem::new(mesh, coeffs, alpha, grid)?.solve(u0, sources)
}

/// Steady state of `-u'' = λ₀ δ_{x₀}` on `(0, ℓ)` with zero boundary values:
/// `λ₀(ℓ - x₀)x/ℓ` left of `x₀`, `λ₀x₀(ℓ - x)/ℓ` right of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyPointSource {
    pub x0: f64,
    pub lambda0: f64,
    pub length: f64,
}

pub fn steady_point_source_1d(x0: f64, lambda0: f64, length: f64) -> Result<SteadyPointSource> {
    if !(x0 > 0.0 && x0 < length) {
        return Err(Error::PointOnBoundary { x: x0, y: 0.0 });
    }
    Ok(SteadyPointSource {
        x0,
        lambda0,
        length,
    })
}

impl SteadyPointSource {
    pub fn eval(&self, x: f64) -> f64 {
        let l = self.length;
        if x <= self.x0 {
            self.lambda0 * (l - self.x0) * x / l
        } else {
            self.lambda0 * self.x0 * (l - x) / l
        }
    }
}

/// Interpolate a fine solution onto a coarser mesh and a nested coarser time grid.
pub fn restrict_to_coarse(
    fine: &ForwardSolution,
    coarse_mesh: Arc<Mesh>,
    coarse_grid: TimeGrid,
) -> Result<ForwardSolution> {
    let fg = fine.grid();
    if (fg.horizon() - coarse_grid.horizon()).abs() > 1e-12 * fg.horizon() {
        return Err(Error::NonNestedGrids(format!(
            "horizons differ: {} vs {}",
            fg.horizon(),
            coarse_grid.horizon()
        )));
    }
    if !fg.n_steps().is_multiple_of(coarse_grid.n_steps()) {
        return Err(Error::NonNestedGrids(format!(
            "{} fine steps not a multiple of {} coarse steps",
            fg.n_steps(),
            coarse_grid.n_steps()
        )));
    }
    if coarse_mesh.dim() != fine.mesh().dim() {
        return Err(Error::InvalidMesh("meshes differ in dimension".into()));
    }
    let ratio = fg.n_steps() / coarse_grid.n_steps();
    let locs = coarse_mesh
        .nodes()
        .iter()
        .map(|&p| fine.mesh().locate(p))
        .collect::<Result<Vec<_>>>()?;
    let states = (0..=coarse_grid.n_steps())
        .map(|m| {
            let s = fine.state(m * ratio);
            locs.iter()
                .map(|loc| loc.pairs().map(|(v, w)| w * s[v]).sum())
                .collect()
        })
        .collect();
    ForwardSolution::new(coarse_mesh, coarse_grid, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{build_interval_mesh, interpolate, subdomain_mask};

    fn setup(n_cells: usize, n_steps: usize, alpha: f64) -> ForwardProblem {
        let mesh = Arc::new(build_interval_mesh(1.0, n_cells).unwrap());
        ForwardProblem::new(
            mesh,
            &CoefficientSet::laplacian(),
            FractionalOrder::new(alpha).unwrap(),
            TimeGrid::new(1.0, n_steps).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let p = setup(10, 20, 0.5);
        let sol = p.solve(&[0.0; 11], &SourceSet::empty()).unwrap();
        assert!(sol.states().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn steady_point_source_is_fixed_point() {
        let p = setup(100, 50, 0.5);
        let steady = steady_point_source_1d(0.5, 2.0, 1.0).unwrap();
        let u0 = interpolate(p.mesh(), |x| steady.eval(x[0]));
        let src = SourceSet::new(vec![[0.5, 0.0]], vec![vec![2.0; 51]]).unwrap();
        let sol = p.solve(&u0, &src).unwrap();
        for s in sol.states() {
            for (a, b) in s.iter().zip(&u0) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn steady_formula_values() {
        let s = steady_point_source_1d(0.5, 1.0, 1.0).unwrap();
        assert!((s.eval(0.5) - 0.25).abs() < 1e-16);
        let s = steady_point_source_1d(0.3, 1.0, 1.0).unwrap();
        assert!((s.eval(0.1) - 0.07).abs() < 1e-16);
        let lam1 = 1.0 * (1.0 - 0.3) / (1.0 - 0.8);
        let other = steady_point_source_1d(0.8, lam1, 1.0).unwrap();
        for x in [0.05, 0.1, 0.2, 0.3] {
            assert!((other.eval(x) - s.eval(x)).abs() < 1e-15);
        }
        assert!(steady_point_source_1d(1.0, 1.0, 1.0).is_err());
        let zero = steady_point_source_1d(0.4, 0.0, 1.0).unwrap();
        assert_eq!(zero.eval(0.7), 0.0);
    }

    #[test]
    fn impulse_response_matches_direct_hat_solves() {
        let p = setup(20, 30, 0.6);
        let x = [0.37, 0.0];
        let load = p.point_load(x).unwrap();
        let resp = p.impulse_response(&load).unwrap();
        for m in [1, 7, 30] {
            let mut lam = vec![0.0; 31];
            lam[m] = 1.0;
            let direct = p
                .solve(&[0.0; 21], &SourceSet::new(vec![x], vec![lam]).unwrap())
                .unwrap();
            for n in 0..=30 {
                let shifted = if n >= m { &resp[n - m + 1] } else { &resp[0] };
                for (a, b) in direct.state(n).iter().zip(shifted) {
                    assert!((a - b).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn observation_layout() {
        let p = setup(4, 10, 0.5);
        let grid = *p.grid();
        let mask = subdomain_mask(p.mesh(), |x| x[0] < 0.6, "left").unwrap();
        let states: Vec<Vec<f64>> = (0..=10)
            .map(|m| (0..5).map(|i| (10 * m + i) as f64).collect())
            .collect();
        let sol = ForwardSolution::new(p.mesh().clone(), grid, states).unwrap();
        let spec = ObservationSpec::trailing(mask.clone(), &grid, 0.25).unwrap();
        assert_eq!(spec.steps(), 8..=10);
        let obs = observe(&sol, &spec).unwrap();
        assert_eq!(obs, vec![81.0, 82.0, 91.0, 92.0, 101.0, 102.0]);
        let last = ObservationSpec::from_steps(
            SubdomainMask::from_indices(vec![3], "one").unwrap(),
            10,
            10,
            &grid,
        )
        .unwrap();
        assert_eq!(observe(&sol, &last).unwrap(), vec![103.0]);
        assert!(ObservationSpec::trailing(mask.clone(), &grid, 1.0).is_err());
        assert!(ObservationSpec::trailing(mask, &grid, 0.1).is_err());
    }

    #[test]
    fn restriction_identity_and_constants() {
        let fine_mesh = Arc::new(build_interval_mesh(1.0, 20).unwrap());
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let states: Vec<Vec<f64>> = (0..=10)
            .map(|m| {
                fine_mesh
                    .nodes()
                    .iter()
                    .map(|p| (p[0] * 3.0 + m as f64).sin())
                    .collect()
            })
            .collect();
        let sol = ForwardSolution::new(fine_mesh.clone(), grid, states).unwrap();
        let same = restrict_to_coarse(&sol, fine_mesh.clone(), grid).unwrap();
        for (a, b) in same.states().iter().zip(sol.states()) {
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-15));
        }
        let coarse = Arc::new(build_interval_mesh(1.0, 5).unwrap());
        let r = restrict_to_coarse(&sol, coarse.clone(), TimeGrid::new(1.0, 5).unwrap()).unwrap();
        assert_eq!(r.states().len(), 6);
        assert!(restrict_to_coarse(&sol, coarse, TimeGrid::new(1.0, 3).unwrap()).is_err());
    }

    #[test]
    fn csv_layout() {
        let p = setup(2, 1, 0.5);
        let sol = p.solve(&[0.0, 1.0, 0.0], &SourceSet::empty()).unwrap();
        let mut buf = Vec::new();
        sol.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,node_0,node_1,node_2");
        assert_eq!(lines[1], "0,0,1,0");
        assert_eq!(lines.len(), 3);
    }
}
