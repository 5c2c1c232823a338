//! Built-in experiments on `(0, 1)` and the unit square with `T = 1`, `ρ ≡ 1`, `𝒜 = -Δ`.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use super::config::{
    CoefficientSpec, ExperimentSpec, GridSpec, InitialGuess, InitialProfile, NoiseConfig,
    ObservationConfig, Region, SourceSpec, TimeProfile,
};
use super::run::{run_inversion, InversionReport};
use crate::error::{Error, Result};
use crate::fem::{build_interval_mesh, interpolate, subdomain_mask};
use crate::forward::{observe, steady_point_source_1d, ForwardProblem, ObservationSpec, SourceSet};
use crate::fractional::{mittag_leffler, FractionalOrder, TimeGrid};
use crate::inverse::LmConfig;

pub const PRESETS: [&str; 7] = [
    "example4_1",
    "example4_2i",
    "example4_2ii",
    "example4_4",
    "example4_5",
    "counterexample3_1",
    "convergence_mittag_leffler",
];

/// Command-line adjustments applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Overrides {
    pub alpha: Option<f64>,
    pub delta: Option<f64>,
    pub eps_fraction: Option<f64>,
    pub seed: Option<u64>,
    /// 2D presets only: halve both mesh resolutions.
    pub half_res: bool,
}

fn exp(scale: f64) -> TimeProfile {
    TimeProfile::Exp { scale, rate: 1.0 }
}

fn sine(amplitude: f64, offset: f64) -> TimeProfile {
    TimeProfile::Sine {
        amplitude,
        frequency: 1.0,
        offset,
    }
}

fn src(location: &[f64], intensity: TimeProfile) -> SourceSpec {
    SourceSpec {
        location: location.to_vec(),
        intensity,
    }
}

fn intervals(list: &[[f64; 2]]) -> Region {
    Region::Intervals {
        intervals: list.to_vec(),
    }
}

struct Base {
    sources: Vec<SourceSpec>,
    guess: Vec<SourceSpec>,
    region: Region,
    eps_fraction: f64,
    guess_u0: Option<InitialProfile>,
}

fn one_d(name: &str, b: Base) -> ExperimentSpec {
    ExperimentSpec {
        name: name.into(),
        dimension: 1,
        length: 1.0,
        alpha: 0.5,
        horizon: 1.0,
        coefficients: CoefficientSpec::default(),
        sources: b.sources,
        u0: InitialProfile::Bubble { scale: 1.0 },
        fine: GridSpec { h: 2e-3, tau: 1e-3 },
        coarse: GridSpec { h: 1e-2, tau: 5e-3 },
        observation: ObservationConfig {
            region: b.region,
            eps_fraction: b.eps_fraction,
        },
        noise: NoiseConfig::default(),
        lm: LmConfig::default(),
        initial_guess: Some(InitialGuess {
            sources: b.guess,
            u0: b.guess_u0,
        }),
    }
}

fn two_d(name: &str, b: Base, half_res: bool) -> ExperimentSpec {
    let (fine_h, coarse_h) = if half_res { (1e-2, 4e-2) } else { (5e-3, 2e-2) };
    ExperimentSpec {
        name: name.into(),
        dimension: 2,
        length: 1.0,
        alpha: 0.5,
        horizon: 1.0,
        coefficients: CoefficientSpec::default(),
        sources: b.sources,
        u0: InitialProfile::Bubble { scale: 1.0 },
        fine: GridSpec {
            h: fine_h,
            tau: 2.5e-3,
        },
        coarse: GridSpec {
            h: coarse_h,
            tau: 1e-2,
        },
        observation: ObservationConfig {
            region: b.region,
            eps_fraction: b.eps_fraction,
        },
        noise: NoiseConfig::default(),
        lm: LmConfig::default(),
        initial_guess: Some(InitialGuess {
            sources: b.guess,
            u0: b.guess_u0,
        }),
    }
}

/// Specification of an inversion preset before overrides.
fn base_spec(name: &str, half_res: bool) -> Result<ExperimentSpec> {
    Ok(match name {
        "example4_1" => one_d(
            name,
            Base {
                sources: vec![src(&[0.5], exp(0.2))],
                guess: vec![src(&[0.4], exp(0.25))],
                region: intervals(&[[0.0, 0.25], [0.75, 1.0]]),
                eps_fraction: 0.75,
                guess_u0: None,
            },
        ),
        "example4_2i" => one_d(
            name,
            Base {
                sources: vec![src(&[0.3], exp(0.2)), src(&[0.7], sine(0.2, 0.4))],
                guess: vec![src(&[0.4], exp(0.25)), src(&[0.6], sine(0.18, 0.36))],
                region: intervals(&[[0.0, 0.2], [0.4, 0.6], [0.8, 1.0]]),
                eps_fraction: 0.75,
                guess_u0: None,
            },
        ),
        "example4_2ii" => one_d(
            name,
            Base {
                sources: vec![src(&[0.3], exp(0.2)), src(&[0.7], sine(0.2, 0.4))],
                guess: vec![src(&[0.4], exp(0.25)), src(&[0.6], sine(0.18, 0.36))],
                region: intervals(&[[0.0, 0.25], [0.35, 0.65], [0.75, 1.0]]),
                eps_fraction: 0.5,
                guess_u0: Some(InitialProfile::Bubble { scale: 1.2 }),
            },
        ),
        "example4_4" => two_d(
            name,
            Base {
                sources: vec![src(&[0.4, 0.4], exp(0.5))],
                guess: vec![src(&[0.45, 0.45], exp(0.4))],
                region: Region::Box {
                    lo: [0.5, 0.5],
                    hi: [1.0, 1.0],
                },
                eps_fraction: 0.75,
                guess_u0: None,
            },
            half_res,
        ),
        "example4_5" => two_d(
            name,
            Base {
                sources: vec![src(&[0.5, 0.9], exp(0.5)), src(&[0.5, 0.1], sine(0.5, 1.0))],
                guess: vec![
                    src(&[0.45, 0.85], exp(0.4)),
                    src(&[0.45, 0.15], sine(0.45, 0.9)),
                ],
                region: Region::Disk {
                    center: [0.5, 0.5],
                    radius: 0.3,
                },
                eps_fraction: 0.75,
                guess_u0: None,
            },
            half_res,
        ),
        "counterexample3_1" | "convergence_mittag_leffler" => {
            return Err(Error::Config {
                field: "preset".into(),
                reason: format!("`{name}` is not an inversion preset"),
            })
        }
        other => return Err(Error::UnknownPreset(other.into())),
    })
}

/// Inversion preset with overrides applied and validated.
pub fn preset_spec(name: &str, overrides: &Overrides) -> Result<ExperimentSpec> {
    let mut spec = base_spec(name, overrides.half_res)?;
    if overrides.half_res {
        spec.name = format!("{name}_half");
    }
    if let Some(a) = overrides.alpha {
        spec.alpha = a;
    }
    if let Some(d) = overrides.delta {
        spec.noise.delta = d;
    }
    if let Some(e) = overrides.eps_fraction {
        spec.observation.eps_fraction = e;
    }
    if let Some(s) = overrides.seed {
        spec.noise.seed = s;
    }
    spec.validate()?;
    Ok(spec)
}

/// Two constant point sources producing the same data on `(0, x_ω)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleConfig {
    pub x0: f64,
    pub lambda0: f64,
    pub x1: f64,
    pub x_omega: f64,
    pub h: f64,
    pub tau: f64,
    pub horizon: f64,
    pub alpha: f64,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self {
            x0: 0.5,
            lambda0: 1.0,
            x1: 0.7,
            x_omega: 0.3,
            h: 1e-2,
            tau: 5e-3,
            horizon: 1.0,
            alpha: 0.5,
        }
    }
}

impl CounterexampleConfig {
    /// Intensity making the second source indistinguishable on ω: `λ₀(1 - x₀)/(1 - x₁)`.
    pub fn lambda1(&self) -> f64 {
        self.lambda0 * (1.0 - self.x0) / (1.0 - self.x1)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleReport {
    pub config: CounterexampleConfig,
    pub lambda1: f64,
    pub n_observations: usize,
    pub max_observation_difference: f64,
    /// Largest `max|Uⁿ - Uⁿ⁻¹|` over both runs; zero for an exact steady state.
    pub max_step_increment: f64,
}

pub fn run_counterexample(cfg: &CounterexampleConfig) -> Result<CounterexampleReport> {
    if !(cfg.x_omega > 0.0 && cfg.x_omega < cfg.x0.min(cfg.x1)) {
        return Err(Error::Config {
            field: "x_omega".into(),
            reason: format!("{} must lie in (0, min(x0, x1))", cfg.x_omega),
        });
    }
    let n_cells = (1.0 / cfg.h).round() as usize;
    let mesh = Arc::new(build_interval_mesh(1.0, n_cells)?);
    let grid = TimeGrid::with_step(cfg.horizon, cfg.tau)?;
    let problem = ForwardProblem::new(
        mesh.clone(),
        &CoefficientSpec::default().to_set(),
        FractionalOrder::new(cfg.alpha)?,
        grid,
    )?;
    let mask = subdomain_mask(
        &mesh,
        |p| p[0] <= cfg.x_omega + 1e-9,
        format!("(0, {})", cfg.x_omega),
    )?;
    let obs = ObservationSpec::from_steps(mask, 1, grid.n_steps(), &grid)?;
    let lambda1 = cfg.lambda1();
    let mut observations = Vec::new();
    let mut max_step_increment = 0.0f64;
    for (x, lam) in [(cfg.x0, cfg.lambda0), (cfg.x1, lambda1)] {
        let steady = steady_point_source_1d(x, lam, 1.0)?;
        let u0 = interpolate(&mesh, |p| steady.eval(p[0]));
        let sources = SourceSet::new(vec![[x, 0.0]], vec![vec![lam; grid.n_steps() + 1]])?;
        let sol = problem.solve(&u0, &sources)?;
        for w in sol.states().windows(2) {
            let inc = w[0]
                .iter()
                .zip(&w[1])
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            max_step_increment = max_step_increment.max(inc);
        }
        observations.push(observe(&sol, &obs)?);
    }
    let max_observation_difference = observations[0]
        .iter()
        .zip(&observations[1])
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(CounterexampleReport {
        config: cfg.clone(),
        lambda1,
        n_observations: observations[0].len(),
        max_observation_difference,
        max_step_increment,
    })
}

/// Eigenmode decay `E_α(-π²tᵅ) sin(πx)` on `(0, 1)` at two time steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceConfig {
    pub alpha: f64,
    pub h: f64,
    pub tau: f64,
    pub horizon: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            h: 1e-2,
            tau: 1e-3,
            horizon: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub config: ConvergenceConfig,
    /// Relative max-norm error at `t = T` with step `τ`.
    pub error_tau: f64,
    /// Same with step `τ/2`.
    pub error_half_tau: f64,
    pub ratio: f64,
}

/// Relative max-norm error at `T` of the eigenmode problem for one time step.
pub fn eigenmode_error(alpha: f64, h: f64, tau: f64, horizon: f64) -> Result<f64> {
    let order = FractionalOrder::new(alpha)?;
    let mesh = Arc::new(build_interval_mesh(1.0, (1.0 / h).round() as usize)?);
    let grid = TimeGrid::with_step(horizon, tau)?;
    let problem = ForwardProblem::new(
        mesh.clone(),
        &CoefficientSpec::default().to_set(),
        order,
        grid,
    )?;
    let u0 = interpolate(&mesh, |p| (PI * p[0]).sin());
    let sol = problem.solve(&u0, &SourceSet::empty())?;
    let decay = mittag_leffler(order, -PI * PI * horizon.powf(alpha))?;
    let exact = interpolate(&mesh, |p| decay * (PI * p[0]).sin());
    let err = sol
        .final_state()
        .iter()
        .zip(&exact)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let scale = exact.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(err / scale)
}

pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceReport> {
    let error_tau = eigenmode_error(cfg.alpha, cfg.h, cfg.tau, cfg.horizon)?;
    let error_half_tau = eigenmode_error(cfg.alpha, cfg.h, cfg.tau / 2.0, cfg.horizon)?;
    Ok(ConvergenceReport {
        config: cfg.clone(),
        error_tau,
        error_half_tau,
        ratio: error_tau / error_half_tau,
    })
}

/// Result of any preset.
#[derive(Debug, Clone)]
pub enum PresetReport {
    Inversion(Box<InversionReport>),
    Counterexample(CounterexampleReport),
    Convergence(ConvergenceReport),
}

pub fn run_preset(name: &str, overrides: &Overrides) -> Result<PresetReport> {
    match name {
        "counterexample3_1" => {
            let mut cfg = CounterexampleConfig::default();
            if let Some(a) = overrides.alpha {
                cfg.alpha = a;
            }
            Ok(PresetReport::Counterexample(run_counterexample(&cfg)?))
        }
        "convergence_mittag_leffler" => {
            let mut cfg = ConvergenceConfig::default();
            if let Some(a) = overrides.alpha {
                cfg.alpha = a;
            }
            Ok(PresetReport::Convergence(run_convergence(&cfg)?))
        }
        _ => {
            let spec = preset_spec(name, overrides)?;
            Ok(PresetReport::Inversion(Box::new(run_inversion(&spec)?)))
        }
    }
}
