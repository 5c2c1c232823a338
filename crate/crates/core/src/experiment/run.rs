//! Fine-grid data generation followed by coarse-grid reconstruction.

use std::sync::Arc;

use serde::Serialize;

use super::config::{ExperimentSpec, SourceSpec};
use super::noise::add_noise;
use crate::error::Result;
use crate::fem::{interpolate, Mesh};
use crate::forward::{
    observe, restrict_to_coarse, ForwardProblem, ForwardSolution, ObservationSpec, SourceSet,
};
use crate::fractional::TimeGrid;
use crate::inverse::{
    intensity_rel_error, location_error, run_lm, Betas, InverseSetup, IterateHistory, LmConfig,
    ParamVector, StopReason,
};

/// Fine-grid truth restricted to the inversion grid, with and without noise.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub coarse_mesh: Arc<Mesh>,
    pub coarse_grid: TimeGrid,
    pub observation: ObservationSpec,
    /// `max|u|` over the whole fine solution.
    pub max_abs: f64,
    /// `max|u|` over the exact observation; the noise scale.
    pub max_abs_observed: f64,
    pub exact: Vec<f64>,
    pub noisy: Vec<f64>,
}

fn sampled_sources(grid: &TimeGrid, sources: &[SourceSpec]) -> Result<SourceSet> {
    SourceSet::new(
        sources.iter().map(SourceSpec::point).collect(),
        sources.iter().map(|s| s.intensity.sample(grid)).collect(),
    )
}

/// Solve the truth on the fine discretization.
pub fn solve_fine(spec: &ExperimentSpec) -> Result<ForwardSolution> {
    spec.validate()?;
    let mesh = spec.build_mesh(&spec.fine)?;
    let grid = spec.build_grid(&spec.fine)?;
    let problem = ForwardProblem::new(
        mesh.clone(),
        &spec.coefficients.to_set(),
        spec.order()?,
        grid,
    )?;
    let u0 = interpolate(&mesh, &*spec.u0.function(spec.dimension, spec.length)?);
    let sources = sampled_sources(&grid, &spec.sources)?;
    problem.solve(&u0, &sources)
}

/// Fine solve, restriction to the coarse grid, observation and noise.
pub fn generate_data(spec: &ExperimentSpec) -> Result<SyntheticData> {
    let fine = solve_fine(spec)?;
    let coarse_mesh = spec.build_mesh(&spec.coarse)?;
    let coarse_grid = spec.build_grid(&spec.coarse)?;
    let restricted = restrict_to_coarse(&fine, coarse_mesh.clone(), coarse_grid)?;
    let mask = spec.observation.region.mask(&coarse_mesh)?;
    let observation = ObservationSpec::trailing(mask, &coarse_grid, spec.epsilon())?;
    let exact = observe(&restricted, &observation)?;
    let max_abs = fine.max_abs();
    let max_abs_observed = exact.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let noisy = add_noise(&exact, &spec.noise.model(), max_abs_observed);
    Ok(SyntheticData {
        coarse_mesh,
        coarse_grid,
        observation,
        max_abs,
        max_abs_observed,
        exact,
        noisy,
    })
}

/// Everything a reconstruction produced, in coarse-grid terms.
#[derive(Debug, Clone, Serialize)]
pub struct InversionReport {
    pub spec: ExperimentSpec,
    pub lm: LmConfig,
    pub time_nodes: Vec<f64>,
    pub truth: ParamVectorRecord,
    pub initial: ParamVectorRecord,
    pub recovered: ParamVectorRecord,
    #[serde(skip)]
    pub history: IterateHistory,
    pub iterations: usize,
    pub stop_reason: StopReason,
    pub initial_betas: Betas,
    pub discrepancy_level: f64,
    pub n_observations: usize,
    pub max_abs_exact: f64,
    pub max_abs_observed: f64,
    pub noise_norm: f64,
    pub location_error: f64,
    pub intensity_rel_l2_error: f64,
    /// Relative error restricted to `t ∈ [0.1T, 0.9T]`.
    pub intensity_rel_l2_error_interior: f64,
    pub u0_rel_l2_error: Option<f64>,
}

/// Serializable view of a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamVectorRecord {
    pub locations: Vec<Vec<f64>>,
    pub intensities: Vec<Vec<f64>>,
    pub u0: Option<Vec<f64>>,
}

impl ParamVectorRecord {
    fn new(p: &ParamVector, dim: usize) -> Self {
        Self {
            locations: p.locations.iter().map(|x| x[..dim].to_vec()).collect(),
            intensities: p.intensities.clone(),
            u0: p.u0.clone(),
        }
    }
}

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

/// Intensity error on the nodes with `t ∈ [lo, hi]`.
pub fn windowed_intensity_error(
    recovered: &[Vec<f64>],
    truth: &[Vec<f64>],
    times: &[f64],
    lo: f64,
    hi: f64,
) -> f64 {
    let keep: Vec<usize> = (0..times.len())
        .filter(|&m| times[m] >= lo - 1e-12 && times[m] <= hi + 1e-12)
        .collect();
    let pick = |s: &[Vec<f64>]| -> Vec<Vec<f64>> {
        s.iter()
            .map(|v| keep.iter().map(|&m| v[m]).collect())
            .collect()
    };
    intensity_rel_error(&pick(recovered), &pick(truth))
}

/// Full pipeline: synthetic data on the fine grid, LM on the coarse grid.
pub fn run_inversion(spec: &ExperimentSpec) -> Result<InversionReport> {
    spec.validate()?;
    let data = generate_data(spec)?;
    let dim = spec.dimension;
    let coeffs = spec.coefficients.to_set();
    let problem = ForwardProblem::new(
        data.coarse_mesh.clone(),
        &coeffs,
        spec.order()?,
        data.coarse_grid,
    )?;
    let truth_u0 = interpolate(&data.coarse_mesh, &*spec.u0.function(dim, spec.length)?);
    let recover = spec.recovers_u0();
    let setup = InverseSetup::new(
        problem,
        data.observation.clone(),
        truth_u0.clone(),
        recover,
        spec.coarse.h,
    )?;

    let interior_values =
        |u: &[f64]| -> Vec<f64> { setup.u0_nodes().iter().map(|&i| u[i]).collect() };
    let grid = data.coarse_grid;
    let truth = ParamVector {
        locations: spec.sources.iter().map(SourceSpec::point).collect(),
        intensities: spec
            .sources
            .iter()
            .map(|s| s.intensity.sample(&grid))
            .collect(),
        u0: recover.then(|| interior_values(&truth_u0)),
    };
    let guess = spec.guess_sources();
    let guess_u0 = match spec.initial_guess.as_ref().and_then(|g| g.u0.as_ref()) {
        Some(profile) => Some(interior_values(&interpolate(
            &data.coarse_mesh,
            &*profile.function(dim, spec.length)?,
        ))),
        None => None,
    };
    let initial = ParamVector {
        locations: guess.iter().map(SourceSpec::point).collect(),
        intensities: guess.iter().map(|s| s.intensity.sample(&grid)).collect(),
        u0: guess_u0,
    };

    let lm = spec.lm.clone();
    let outcome = run_lm(&initial, &data.noisy, &setup, &lm, Some(&truth)).map_err(|f| f.error)?;

    let times = grid.nodes();
    let t_end = spec.horizon;
    let rec = &outcome.params;
    let noise_norm = data
        .noisy
        .iter()
        .zip(&data.exact)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(InversionReport {
        spec: spec.clone(),
        lm,
        truth: ParamVectorRecord::new(&truth, dim),
        initial: ParamVectorRecord::new(&initial, dim),
        recovered: ParamVectorRecord::new(rec, dim),
        iterations: outcome.iterations(),
        stop_reason: outcome.stop_reason,
        initial_betas: outcome.initial_betas,
        discrepancy_level: outcome.discrepancy_level,
        n_observations: data.noisy.len(),
        max_abs_exact: data.max_abs,
        max_abs_observed: data.max_abs_observed,
        noise_norm,
        location_error: location_error(&rec.locations, &truth.locations),
        intensity_rel_l2_error: intensity_rel_error(&rec.intensities, &truth.intensities),
        intensity_rel_l2_error_interior: windowed_intensity_error(
            &rec.intensities,
            &truth.intensities,
            &times,
            0.1 * t_end,
            0.9 * t_end,
        ),
        u0_rel_l2_error: match (&rec.u0, &truth.u0) {
            (Some(a), Some(b)) => Some(rel_l2(a, b)),
            _ => None,
        },
        time_nodes: times,
        history: outcome.history,
    })
}

impl InversionReport {
    /// Recovered locations, `dimension` coordinates each.
    pub fn recovered_locations(&self) -> &[Vec<f64>] {
        &self.recovered.locations
    }

    /// Per-source distance between recovered and true location.
    pub fn per_source_errors(&self) -> Vec<f64> {
        self.recovered
            .locations
            .iter()
            .zip(&self.truth.locations)
            .map(|(a, b)| {
                a.iter()
                    .zip(b)
                    .map(|(x, y)| (x - y).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

/// Fine-grid forward solve sampled on ω over the observation window.
#[derive(Debug, Clone, Serialize)]
pub struct ForwardReport {
    pub spec: ExperimentSpec,
    pub n_nodes: usize,
    pub n_steps: usize,
    pub max_abs: f64,
    pub observation_times: Vec<f64>,
    pub observed_nodes: Vec<usize>,
    #[serde(skip)]
    pub observation: Vec<f64>,
    #[serde(skip)]
    pub nodes: Vec<[f64; 2]>,
    #[serde(skip)]
    pub final_state: Vec<f64>,
}

pub fn run_forward(spec: &ExperimentSpec) -> Result<ForwardReport> {
    let sol = solve_fine(spec)?;
    let mask = spec.observation.region.mask(sol.mesh())?;
    let obs = ObservationSpec::trailing(mask, sol.grid(), spec.epsilon())?;
    let observation = observe(&sol, &obs)?;
    Ok(ForwardReport {
        spec: spec.clone(),
        n_nodes: sol.mesh().n_nodes(),
        n_steps: sol.grid().n_steps(),
        max_abs: sol.max_abs(),
        observation_times: obs.steps().map(|m| sol.grid().node(m)).collect(),
        observed_nodes: obs.mask().node_indices().to_vec(),
        observation,
        nodes: sol.mesh().nodes().to_vec(),
        final_state: sol.final_state().to_vec(),
    })
}
