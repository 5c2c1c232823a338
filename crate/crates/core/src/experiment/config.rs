//! JSON experiment description with validation and defaults.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::noise::{NoiseKind, NoiseModel};
use crate::error::{Error, Result};
use crate::fem::{
    build_interval_mesh, build_rect_mesh, subdomain_mask, CoefficientSet, Mesh, Point,
    SubdomainMask,
};
use crate::forward::steady_point_source_1d;
use crate::fractional::{FractionalOrder, TimeGrid};
use crate::inverse::LmConfig;

/// Time profile of a source intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TimeProfile {
    /// `value`
    Constant { value: f64 },
    /// `scale · exp(rate · t)`
    Exp {
        scale: f64,
        #[serde(default = "one")]
        rate: f64,
    },
    /// `amplitude · sin(2π frequency t) + offset`
    Sine {
        amplitude: f64,
        #[serde(default = "one")]
        frequency: f64,
        #[serde(default)]
        offset: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl TimeProfile {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            TimeProfile::Constant { value } => value,
            TimeProfile::Exp { scale, rate } => scale * (rate * t).exp(),
            TimeProfile::Sine {
                amplitude,
                frequency,
                offset,
            } => amplitude * (2.0 * PI * frequency * t).sin() + offset,
        }
    }

    /// Nodal samples on `grid`.
    pub fn sample(&self, grid: &TimeGrid) -> Vec<f64> {
        grid.nodes().into_iter().map(|t| self.eval(t)).collect()
    }
}

/// Initial state `u₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Zero,
    /// `scale · Π xᵢ(ℓᵢ - xᵢ)`
    Bubble {
        scale: f64,
    },
    /// `amplitude · Π sin(π xᵢ / ℓᵢ)`
    SineMode {
        amplitude: f64,
    },
    /// Steady state of a constant point source (1D only).
    SteadyPointSource {
        x0: f64,
        lambda0: f64,
    },
}

impl InitialProfile {
    /// Closure over Ω for the given dimension and interval length.
    pub fn function(
        &self,
        dim: usize,
        length: f64,
    ) -> Result<Arc<dyn Fn(Point) -> f64 + Send + Sync>> {
        let ext = if dim == 1 { [length, 1.0] } else { [1.0, 1.0] };
        Ok(match *self {
            InitialProfile::Zero => Arc::new(|_| 0.0),
            InitialProfile::Bubble { scale } => Arc::new(move |p: Point| {
                scale * (0..dim).map(|d| p[d] * (ext[d] - p[d])).product::<f64>()
            }),
            InitialProfile::SineMode { amplitude } => Arc::new(move |p: Point| {
                amplitude
                    * (0..dim)
                        .map(|d| (PI * p[d] / ext[d]).sin())
                        .product::<f64>()
            }),
            InitialProfile::SteadyPointSource { x0, lambda0 } => {
                if dim != 1 {
                    return Err(Error::Config {
                        field: "u0".into(),
                        reason: "steady_point_source is only defined in 1D".into(),
                    });
                }
                let s = steady_point_source_1d(x0, lambda0, length)?;
                Arc::new(move |p: Point| s.eval(p[0]))
            }
        })
    }
}

/// Observation region ω. Regions are closed; Dirichlet nodes are never observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Region {
    /// Union of intervals `[a, b]` (1D).
    Intervals {
        intervals: Vec<[f64; 2]>,
    },
    /// Axis-aligned box `[lo, hi]`.
    Box {
        lo: [f64; 2],
        hi: [f64; 2],
    },
    /// Closed disk.
    Disk {
        center: [f64; 2],
        radius: f64,
    },
    Whole,
}

const REGION_TOL: f64 = 1e-9;

impl Region {
    pub fn contains(&self, p: Point, dim: usize) -> bool {
        let t = REGION_TOL;
        match self {
            Region::Intervals { intervals } => intervals
                .iter()
                .any(|[a, b]| p[0] >= a - t && p[0] <= b + t),
            Region::Box { lo, hi } => (0..dim).all(|d| p[d] >= lo[d] - t && p[d] <= hi[d] + t),
            Region::Disk { center, radius } => {
                let r2: f64 = (0..dim).map(|d| (p[d] - center[d]).powi(2)).sum();
                r2.sqrt() <= radius + t
            }
            Region::Whole => true,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Region::Intervals { intervals } => intervals
                .iter()
                .map(|[a, b]| format!("[{a}, {b}]"))
                .collect::<Vec<_>>()
                .join(" ∪ "),
            Region::Box { lo, hi } => format!("[{}, {}] x [{}, {}]", lo[0], hi[0], lo[1], hi[1]),
            Region::Disk { center, radius } => {
                format!("disk(({}, {}), {radius})", center[0], center[1])
            }
            Region::Whole => "Ω".into(),
        }
    }

    pub fn mask(&self, mesh: &Mesh) -> Result<SubdomainMask> {
        let dim = mesh.dim();
        subdomain_mask(mesh, |p| self.contains(p, dim), self.describe())
    }
}

/// Constant isotropic coefficients `ρ`, `a`, `b`, `q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoefficientSpec {
    pub rho: f64,
    pub a: f64,
    pub b: [f64; 2],
    pub q: f64,
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self {
            rho: 1.0,
            a: 1.0,
            b: [0.0, 0.0],
            q: 0.0,
        }
    }
}

impl CoefficientSpec {
    pub fn to_set(&self) -> CoefficientSet {
        CoefficientSet::isotropic(self.rho, self.a, self.b, self.q)
    }
}

/// Mesh size and time step of one discretization level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub h: f64,
    pub tau: f64,
}

fn whole_count(field: &str, span: f64, step: f64) -> Result<usize> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config {
            field: field.into(),
            reason: format!("{step} must be positive"),
        });
    }
    let n = (span / step).round();
    if n < 1.0 || ((span / step) - n).abs() > 1e-6 * n {
        return Err(Error::Config {
            field: field.into(),
            reason: format!("{step} does not divide {span}"),
        });
    }
    Ok(n as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub location: Vec<f64>,
    pub intensity: TimeProfile,
}

impl SourceSpec {
    pub fn point(&self) -> Point {
        let mut p = [0.0; 2];
        for (d, &c) in self.location.iter().take(2).enumerate() {
            p[d] = c;
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    pub region: Region,
    /// Window length `ε` as a fraction of `T`.
    pub eps_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub kind: NoiseKind,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_delta() -> f64 {
    0.02
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::default(),
            delta: default_delta(),
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn model(&self) -> NoiseModel {
        NoiseModel {
            kind: self.kind,
            delta: self.delta,
            seed: self.seed,
        }
    }
}

/// Starting point of the reconstruction. A `u0` entry switches on `u₀` recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialGuess {
    pub sources: Vec<SourceSpec>,
    #[serde(default)]
    pub u0: Option<InitialProfile>,
}

fn default_length() -> f64 {
    1.0
}

fn default_horizon() -> f64 {
    1.0
}

/// Everything needed to generate data and run a reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub dimension: usize,
    /// Interval length in 1D; the 2D domain is always the unit square.
    #[serde(default = "default_length")]
    pub length: f64,
    pub alpha: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    pub sources: Vec<SourceSpec>,
    pub u0: InitialProfile,
    pub fine: GridSpec,
    pub coarse: GridSpec,
    pub observation: ObservationConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub initial_guess: Option<InitialGuess>,
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn order(&self) -> Result<FractionalOrder> {
        FractionalOrder::new(self.alpha)
            .map_err(|_| invalid("alpha", format!("{} must lie in (0, 1]", self.alpha)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension != 1 && self.dimension != 2 {
            return Err(invalid(
                "dimension",
                format!("{} must be 1 or 2", self.dimension),
            ));
        }
        self.order()?;
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(invalid(
                "length",
                format!("{} must be positive", self.length),
            ));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(
                "horizon",
                format!("{} must be positive", self.horizon),
            ));
        }
        let c = &self.coefficients;
        if !(c.rho > 0.0) {
            return Err(invalid(
                "coefficients.rho",
                format!("{} must be positive", c.rho),
            ));
        }
        if !(c.a > 0.0) {
            return Err(invalid(
                "coefficients.a",
                format!("{} must be positive", c.a),
            ));
        }
        if !(c.q >= 0.0) {
            return Err(invalid(
                "coefficients.q",
                format!("{} must be non-negative", c.q),
            ));
        }
        self.check_sources("sources", &self.sources)?;
        let fine_n = self.cells("fine.h", self.fine.h)?;
        let coarse_n = self.cells("coarse.h", self.coarse.h)?;
        let fine_t = whole_count("fine.tau", self.horizon, self.fine.tau)?;
        let coarse_t = whole_count("coarse.tau", self.horizon, self.coarse.tau)?;
        if fine_n % coarse_n != 0 || fine_n < coarse_n {
            return Err(invalid(
                "coarse.h",
                "coarse mesh must be nested in the fine mesh",
            ));
        }
        if fine_t % coarse_t != 0 || fine_t < coarse_t {
            return Err(invalid(
                "coarse.tau",
                "coarse time grid must be nested in the fine grid",
            ));
        }
        if fine_n == coarse_n && fine_t == coarse_t {
            return Err(invalid(
                "fine",
                "fine grid must be strictly finer than the coarse grid",
            ));
        }
        let eps = self.observation.eps_fraction;
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid(
                "observation.eps_fraction",
                format!("{eps} must lie in (0, 1)"),
            ));
        }
        if !(self.noise.delta >= 0.0 && self.noise.delta.is_finite()) {
            return Err(invalid(
                "noise.delta",
                format!("{} must be non-negative", self.noise.delta),
            ));
        }
        self.lm.validate()?;
        if let Some(guess) = &self.initial_guess {
            self.check_sources("initial_guess.sources", &guess.sources)?;
            if guess.sources.len() != self.sources.len() {
                return Err(invalid(
                    "initial_guess.sources",
                    "must list as many sources as the truth",
                ));
            }
        }
        self.u0.function(self.dimension, self.length)?;
        Ok(())
    }

    fn check_sources(&self, field: &str, sources: &[SourceSpec]) -> Result<()> {
        if sources.is_empty() {
            return Err(invalid(field, "at least one source is required"));
        }
        let (hi, dim) = (self.domain_upper(), self.dimension);
        for (k, s) in sources.iter().enumerate() {
            if s.location.len() != dim {
                return Err(invalid(
                    field,
                    format!("source {k} needs {dim} coordinates"),
                ));
            }
            if s.location.iter().zip(hi).any(|(&c, h)| !(c > 0.0 && c < h)) {
                return Err(invalid(
                    field,
                    format!("source {k} must lie strictly inside the domain"),
                ));
            }
        }
        Ok(())
    }

    fn domain_upper(&self) -> [f64; 2] {
        if self.dimension == 1 {
            [self.length, 1.0]
        } else {
            [1.0, 1.0]
        }
    }

    fn cells(&self, field: &str, h: f64) -> Result<usize> {
        let span = if self.dimension == 1 {
            self.length
        } else {
            1.0
        };
        let n = whole_count(field, span, h)?;
        if n < 2 {
            return Err(invalid(field, "mesh needs at least 2 cells per axis"));
        }
        Ok(n)
    }

    pub fn build_mesh(&self, grid: &GridSpec) -> Result<Arc<Mesh>> {
        let n = self.cells("h", grid.h)?;
        Ok(Arc::new(if self.dimension == 1 {
            build_interval_mesh(self.length, n)?
        } else {
            build_rect_mesh(n, n)?
        }))
    }

    pub fn build_grid(&self, grid: &GridSpec) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, whole_count("tau", self.horizon, grid.tau)?)
    }

    pub fn epsilon(&self) -> f64 {
        self.observation.eps_fraction * self.horizon
    }

    /// Guess locations and intensity profiles (truth when no guess is set).
    pub fn guess_sources(&self) -> &[SourceSpec] {
        self.initial_guess
            .as_ref()
            .map_or(&self.sources, |g| &g.sources)
    }

    pub fn recovers_u0(&self) -> bool {
        self.initial_guess.as_ref().is_some_and(|g| g.u0.is_some())
    }
}

/// Read and validate a JSON spec.
pub fn load_config(path: &Path) -> Result<ExperimentSpec> {
    let text = std::fs::read_to_string(path)?;
    ExperimentSpec::from_json(&text)
}
