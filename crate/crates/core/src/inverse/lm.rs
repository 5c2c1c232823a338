//! Levenberg–Marquardt iteration with `H¹` penalties and geometric decay.

use std::io::Write;
use std::ops::AddAssign;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::params::{ParamLayout, ParamVector};
use super::setup::{forward_map, h1_gram, jacobian_lambda, jacobian_u0, jacobian_x, InverseSetup};
use crate::error::{Error, Result};
use crate::fem::Point;
use crate::sparse::CsrMatrix;

/// Penalty schedule and stopping rules. Unset initial weights are scaled from `‖data‖²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LmConfig {
    pub beta_x0: Option<f64>,
    pub beta_lambda0: Option<f64>,
    pub beta_u0: Option<f64>,
    pub gamma_x: f64,
    pub gamma_lambda: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    /// Relative noise level for the discrepancy stop; unset disables it.
    pub noise_delta: Option<f64>,
    pub step_tol: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            beta_x0: None,
            beta_lambda0: None,
            beta_u0: None,
            gamma_x: 0.7,
            gamma_lambda: 0.9,
            max_iter: 50,
            fd_step: 1e-4,
            noise_delta: None,
            step_tol: 1e-8,
        }
    }
}

/// Concrete penalty weights for one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Betas {
    pub x: f64,
    pub lambda: f64,
    pub u0: f64,
}

impl Betas {
    fn decay(self, cfg: &LmConfig) -> Self {
        Self {
            x: self.x * cfg.gamma_x,
            lambda: self.lambda * cfg.gamma_lambda,
            u0: self.u0 * cfg.gamma_lambda,
        }
    }
}

fn config_err(field: &str, reason: String) -> Error {
    Error::Config {
        field: field.into(),
        reason,
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("beta_x0", self.beta_x0),
            ("beta_lambda0", self.beta_lambda0),
            ("beta_u0", self.beta_u0),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(config_err(name, format!("{v} must be positive and finite")));
                }
            }
        }
        for (name, g) in [
            ("gamma_x", self.gamma_x),
            ("gamma_lambda", self.gamma_lambda),
        ] {
            if !(g > 0.0 && g < 1.0) {
                return Err(config_err(name, format!("{g} must lie in (0, 1)")));
            }
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(config_err(
                "fd_step",
                format!("{} must be positive", self.fd_step),
            ));
        }
        if let Some(d) = self.noise_delta {
            if !(d >= 0.0 && d.is_finite()) {
                return Err(config_err(
                    "noise_delta",
                    format!("{d} must be non-negative"),
                ));
            }
        }
        if !(self.step_tol >= 0.0) {
            return Err(config_err(
                "step_tol",
                format!("{} must be non-negative", self.step_tol),
            ));
        }
        Ok(())
    }

    /// Initial weights: `1e-2‖data‖²` for locations, `1e-1‖data‖²` for intensities,
    /// the intensity weight again for `u₀`.
    pub fn initial_betas(&self, data: &[f64]) -> Betas {
        let scale = data
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .max(f64::MIN_POSITIVE);
        let lambda = self.beta_lambda0.unwrap_or(1e-1 * scale);
        Betas {
            x: self.beta_x0.unwrap_or(1e-2 * scale),
            lambda,
            u0: self.beta_u0.unwrap_or(lambda),
        }
    }

    /// Residual level below which iteration stops: `√m · δ · max|data|`.
    pub fn discrepancy_level(&self, data: &[f64]) -> f64 {
        let max = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (data.len() as f64).sqrt() * self.noise_delta.unwrap_or(0.0) * max
    }
}

/// Block-diagonal penalty `B` in packed parameter order.
pub fn penalty_matrix(
    layout: ParamLayout,
    betas: Betas,
    time_gram: &CsrMatrix,
    u0_gram: Option<&CsrMatrix>,
) -> DMatrix<f64> {
    let n = layout.len();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..layout.n_location() {
        b[(i, i)] = betas.x;
    }
    let add_block = |b: &mut DMatrix<f64>, off: usize, g: &CsrMatrix, w: f64| {
        for r in 0..g.n_rows() {
            let (cols, vals) = g.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                b[(off + r, off + c)] += w * v;
            }
        }
    };
    for k in 0..layout.n_sources {
        add_block(
            &mut b,
            layout.intensity_offset() + k * layout.n_times,
            time_gram,
            betas.lambda,
        );
    }
    if layout.n_u0 > 0 {
        if let Some(g) = u0_gram {
            add_block(&mut b, layout.u0_offset(), g, betas.u0);
        }
    }
    b
}

/// Minimizer of `‖r - JΔ‖² + ΔᵀBΔ`, i.e. the solution of `(JᵀJ + B)Δ = Jᵀr`.
pub fn regularized_step(
    jac: &DMatrix<f64>,
    residual: &[f64],
    penalty: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if residual.len() != jac.nrows() {
        return Err(Error::LengthMismatch {
            expected: jac.nrows(),
            found: residual.len(),
        });
    }
    if penalty.nrows() != jac.ncols() || penalty.ncols() != jac.ncols() {
        return Err(Error::LengthMismatch {
            expected: jac.ncols(),
            found: penalty.nrows(),
        });
    }
    let r = DVector::from_column_slice(residual);
    solve_normal(jac.tr_mul(jac) + penalty, &jac.tr_mul(&r))
}

fn solve_normal(normal: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let n = normal.nrows();
    let chol = normal
        .cholesky()
        .ok_or_else(|| Error::SingularNormalEquations("JᵀJ + B is not positive definite".into()))?;
    // rounding can let a singular matrix through with a tiny last pivot
    let pivots = chol.l_dirty().diagonal();
    let (lo, hi) = (pivots.min(), pivots.max());
    if n > 0 && lo * lo <= n as f64 * f64::EPSILON * hi * hi {
        return Err(Error::SingularNormalEquations(format!(
            "pivot ratio {:e} at machine precision",
            lo / hi
        )));
    }
    let delta = chol.solve(rhs);
    if delta.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularNormalEquations("step is not finite".into()));
    }
    Ok(delta)
}

/// Value of the linearized functional `‖r - JΔ‖² + ΔᵀBΔ`.
pub fn linearized_objective(
    jac: &DMatrix<f64>,
    residual: &[f64],
    penalty: &DMatrix<f64>,
    delta: &DVector<f64>,
) -> f64 {
    let r = DVector::from_column_slice(residual);
    let misfit = r - jac * delta;
    misfit.norm_squared() + delta.dot(&(penalty * delta))
}

/// Static columns `S = [J_λ | J_u₀]` with their Gram `SᵀS`, valid for the
/// locations they were built at.
#[derive(Debug)]
struct StaticBlock {
    built_at: Vec<Point>,
    columns: DMatrix<f64>,
    gram: DMatrix<f64>,
}

/// Assembles `[J_x | J_λ | J_u₀]` and caches the parts that do not depend on
/// the current iterate.
#[derive(Debug)]
pub struct LmSolver<'a> {
    setup: &'a InverseSetup,
    fd_step: f64,
    time_gram: CsrMatrix,
    u0_gram: Option<CsrMatrix>,
    j_u0: Option<DMatrix<f64>>,
    block: Option<StaticBlock>,
    lambda_builds: usize,
}

impl<'a> LmSolver<'a> {
    pub fn new(setup: &'a InverseSetup, fd_step: f64) -> Result<Self> {
        let (u0_gram, j_u0) = if setup.recovers_u0() {
            (Some(setup.u0_gram()?), Some(jacobian_u0(setup)?))
        } else {
            (None, None)
        };
        Ok(Self {
            setup,
            fd_step,
            time_gram: h1_gram(setup.grid()),
            u0_gram,
            j_u0,
            block: None,
            lambda_builds: 0,
        })
    }

    /// Number of times `J_λ` was (re)built.
    pub fn lambda_builds(&self) -> usize {
        self.lambda_builds
    }

    /// `J_λ` is rebuilt only once some location has moved more than `fd_step`.
    fn static_block(&mut self, locations: &[Point]) -> Result<&StaticBlock> {
        let stale = match &self.block {
            None => true,
            Some(b) => {
                b.built_at.len() != locations.len()
                    || b.built_at
                        .iter()
                        .zip(locations)
                        .any(|(a, b)| (a[0] - b[0]).abs().max((a[1] - b[1]).abs()) > self.fd_step)
            }
        };
        if stale {
            let jl = jacobian_lambda(self.setup, locations)?;
            let n_u0 = self.j_u0.as_ref().map_or(0, |j| j.ncols());
            let mut columns = DMatrix::zeros(jl.nrows(), jl.ncols() + n_u0);
            columns.columns_mut(0, jl.ncols()).copy_from(&jl);
            if let Some(ju) = &self.j_u0 {
                columns.columns_mut(jl.ncols(), n_u0).copy_from(ju);
            }
            let gram = columns.tr_mul(&columns);
            self.block = Some(StaticBlock {
                built_at: locations.to_vec(),
                columns,
                gram,
            });
            self.lambda_builds += 1;
        }
        Ok(self.block.as_ref().expect("built above"))
    }

    /// Full Jacobian at `params`, columns in packed order.
    pub fn jacobian(&mut self, params: &ParamVector) -> Result<DMatrix<f64>> {
        let n_loc = self.setup.layout(params.locations.len()).n_location();
        let jx = jacobian_x(self.setup, params, self.fd_step)?;
        let s = &self.static_block(&params.locations)?.columns;
        let mut jac = DMatrix::zeros(jx.nrows(), n_loc + s.ncols());
        jac.columns_mut(0, n_loc).copy_from(&jx);
        jac.columns_mut(n_loc, s.ncols()).copy_from(s);
        Ok(jac)
    }

    pub fn penalty(&self, layout: ParamLayout, betas: Betas) -> DMatrix<f64> {
        penalty_matrix(layout, betas, &self.time_gram, self.u0_gram.as_ref())
    }

    /// One LM update given the current forward value `f = F(params)`.
    ///
    /// Equivalent to [`regularized_step`] on [`Self::jacobian`], but reuses `SᵀS`.
    pub fn step(
        &mut self,
        params: &ParamVector,
        f: &[f64],
        data: &[f64],
        betas: Betas,
    ) -> Result<ParamVector> {
        check_shape(params, self.setup)?;
        if f.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: f.len(),
                found: data.len(),
            });
        }
        let layout = self.setup.layout(params.locations.len());
        let n_loc = layout.n_location();
        let penalty = self.penalty(layout, betas);
        let jx = jacobian_x(self.setup, params, self.fd_step)?;
        let block = self.static_block(&params.locations)?;
        let r = DVector::from_iterator(data.len(), data.iter().zip(f).map(|(d, v)| d - v));

        let mut normal = penalty;
        let xs = jx.tr_mul(&block.columns);
        normal
            .view_mut((0, 0), (n_loc, n_loc))
            .add_assign(&jx.tr_mul(&jx));
        normal.view_mut((0, n_loc), xs.shape()).add_assign(&xs);
        normal
            .view_mut((n_loc, 0), (xs.ncols(), xs.nrows()))
            .add_assign(&xs.transpose());
        normal
            .view_mut((n_loc, n_loc), block.gram.shape())
            .add_assign(&block.gram);
        let mut rhs = DVector::zeros(layout.len());
        rhs.rows_mut(0, n_loc).copy_from(&jx.tr_mul(&r));
        rhs.rows_mut(n_loc, block.columns.ncols())
            .copy_from(&block.columns.tr_mul(&r));

        let delta = solve_normal(normal, &rhs)?;
        let packed: Vec<f64> = params
            .pack(layout.dim)
            .iter()
            .zip(delta.iter())
            .map(|(p, d)| p + d)
            .collect();
        let mut next = ParamVector::unpack(layout, &packed)?;
        for x in &mut next.locations {
            *x = self.setup.clamp_location(*x, self.fd_step);
        }
        Ok(next)
    }
}

fn check_shape(params: &ParamVector, setup: &InverseSetup) -> Result<()> {
    if params.locations.is_empty() || params.locations.len() != params.intensities.len() {
        return Err(Error::InvalidSources(format!(
            "{} locations but {} intensity series",
            params.locations.len(),
            params.intensities.len()
        )));
    }
    let n_times = setup.grid().n_steps() + 1;
    if let Some(bad) = params.intensities.iter().find(|s| s.len() != n_times) {
        return Err(Error::LengthMismatch {
            expected: n_times,
            found: bad.len(),
        });
    }
    match (&params.u0, setup.recovers_u0()) {
        (Some(_), true) | (None, false) => Ok(()),
        (None, true) => Err(Error::Config {
            field: "u0".into(),
            reason: "u₀ recovery enabled but the parameters carry no u₀ block".into(),
        }),
        (Some(_), false) => Err(Error::Config {
            field: "u0".into(),
            reason: "parameters carry a u₀ block but recovery is disabled".into(),
        }),
    }
}

/// A single regularized Gauss–Newton update, building all Jacobians afresh.
pub fn lm_step(
    params: &ParamVector,
    data: &[f64],
    setup: &InverseSetup,
    betas: Betas,
    fd_step: f64,
) -> Result<ParamVector> {
    let f = forward_map(params, setup)?;
    if f.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: f.len(),
            found: data.len(),
        });
    }
    LmSolver::new(setup, fd_step)?.step(params, &f, data, betas)
}

/// Why the iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Discrepancy,
    SmallStep,
    MaxIterations,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::Discrepancy => "discrepancy",
            StopReason::SmallStep => "small_step",
            StopReason::MaxIterations => "max_iterations",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterateRecord {
    pub iteration: usize,
    pub residual: f64,
    pub step_norm: f64,
    pub location_error: Option<f64>,
    pub intensity_error: Option<f64>,
    pub betas: Betas,
    #[serde(skip)]
    pub params: ParamVector,
}

/// Records of completed iterations, in order.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterateHistory {
    pub records: Vec<IterateRecord>,
}

impl IterateHistory {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterateRecord> {
        self.records.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,residual,step_norm,location_error,intensity_error,beta_x,beta_lambda,beta_u0")?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |v| format!("{v:e}"));
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{},{},{:e},{:e},{:e}",
                r.iteration,
                r.residual,
                r.step_norm,
                opt(r.location_error),
                opt(r.intensity_error),
                r.betas.x,
                r.betas.lambda,
                r.betas.u0
            )?;
        }
        Ok(())
    }
}

/// Largest Euclidean distance between matching sources.
pub fn location_error(a: &[Point], b: &[Point]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// `‖λ - λ*‖ / ‖λ*‖` over all sources and nodes of the uniform time grid.
pub fn intensity_rel_error(recovered: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (r, t) in recovered.iter().zip(truth) {
        for (a, b) in r.iter().zip(t) {
            num += (a - b).powi(2);
            den += b * b;
        }
    }
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: ParamVector,
    pub history: IterateHistory,
    pub stop_reason: StopReason,
    pub initial_betas: Betas,
    pub discrepancy_level: f64,
}

impl LmOutcome {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// An aborted run, with the history of the iterations that did complete.
#[derive(Debug, thiserror::Error)]
#[error("LM iteration failed after {} iterations: {error}", history.len())]
pub struct LmFailure {
    #[source]
    pub error: Error,
    pub history: IterateHistory,
}

/// Iterate [`LmSolver::step`] with geometrically decaying weights.
///
/// `truth`, when given, only feeds the error columns of the history.
pub fn run_lm(
    initial: &ParamVector,
    data: &[f64],
    setup: &InverseSetup,
    config: &LmConfig,
    truth: Option<&ParamVector>,
) -> Result<LmOutcome, LmFailure> {
    let mut history = IterateHistory::default();
    let fail = |error: Error, history: IterateHistory| LmFailure { error, history };
    if let Err(e) = config.validate() {
        return Err(fail(e, history));
    }
    if let Err(e) = check_shape(initial, setup) {
        return Err(fail(e, history));
    }
    let initial_betas = config.initial_betas(data);
    let level = config.discrepancy_level(data);
    let mut solver = match LmSolver::new(setup, config.fd_step) {
        Ok(s) => s,
        Err(e) => return Err(fail(e, history)),
    };
    let dim = setup.dim();
    let mut params = initial.clone();
    for x in &mut params.locations {
        *x = setup.clamp_location(*x, config.fd_step);
    }
    let mut f = match forward_map(&params, setup) {
        Ok(f) if f.len() == data.len() => f,
        Ok(f) => {
            return Err(fail(
                Error::LengthMismatch {
                    expected: f.len(),
                    found: data.len(),
                },
                history,
            ))
        }
        Err(e) => return Err(fail(e, history)),
    };
    let mut betas = initial_betas;
    for k in 1..=config.max_iter {
        let next = match solver.step(&params, &f, data, betas) {
            Ok(p) => p,
            Err(e) => return Err(fail(e, history)),
        };
        let f_next = match forward_map(&next, setup) {
            Ok(v) => v,
            Err(e) => return Err(fail(e, history)),
        };
        let residual = data
            .iter()
            .zip(&f_next)
            .map(|(d, v)| (d - v).powi(2))
            .sum::<f64>()
            .sqrt();
        if !residual.is_finite() {
            return Err(fail(Error::NonFinite(k), history));
        }
        let step_norm = next
            .pack(dim)
            .iter()
            .zip(params.pack(dim))
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        history.records.push(IterateRecord {
            iteration: k,
            residual,
            step_norm,
            location_error: truth.map(|t| location_error(&next.locations, &t.locations)),
            intensity_error: truth.map(|t| intensity_rel_error(&next.intensities, &t.intensities)),
            betas,
            params: next.clone(),
        });
        params = next;
        f = f_next;
        betas = betas.decay(config);
        let stop = if config.noise_delta.is_some() && residual <= level {
            Some(StopReason::Discrepancy)
        } else if step_norm < config.step_tol {
            Some(StopReason::SmallStep)
        } else {
            None
        };
        if let Some(stop_reason) = stop {
            return Ok(LmOutcome {
                params,
                history,
                stop_reason,
                initial_betas,
                discrepancy_level: level,
            });
        }
    }
    Ok(LmOutcome {
        params,
        history,
        stop_reason: StopReason::MaxIterations,
        initial_betas,
        discrepancy_level: level,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_toy_step() {
        let j = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::zeros(1, 1);
        let d = regularized_step(&j, &[1.0], &b).unwrap();
        assert!((d[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_residual_gives_zero_step() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let b = DMatrix::identity(2, 2) * 1e-3;
        let d = regularized_step(&j, &[0.0; 3], &b).unwrap();
        assert_eq!(d.norm(), 0.0);
    }

    #[test]
    fn step_shrinks_with_beta() {
        let j = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.5, -1.0, 3.0, 0.0]);
        let r = [1.0, -0.5, 2.0];
        let small = regularized_step(&j, &r, &(DMatrix::identity(2, 2) * 1.0)).unwrap();
        let large = regularized_step(&j, &r, &(DMatrix::identity(2, 2) * 100.0)).unwrap();
        assert!(large.norm() < small.norm());
        let huge = regularized_step(&j, &r, &(DMatrix::identity(2, 2) * 1e12)).unwrap();
        assert!(huge.norm() < 1e-10);
    }

    #[test]
    fn singular_normal_equations_reported() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DMatrix::zeros(2, 2);
        assert!(matches!(
            regularized_step(&j, &[1.0, 1.0], &b),
            Err(Error::SingularNormalEquations(_))
        ));
    }

    #[test]
    fn config_validation_names_field() {
        let cfg = LmConfig {
            gamma_x: 1.5,
            ..LmConfig::default()
        };
        match cfg.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "gamma_x"),
            other => panic!("unexpected {other:?}"),
        }
        let cfg = LmConfig {
            fd_step: 0.0,
            ..LmConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(LmConfig::default().validate().is_ok());
    }

    #[test]
    fn default_betas_scale_with_data() {
        let cfg = LmConfig::default();
        let b = cfg.initial_betas(&[3.0, 4.0]);
        assert!((b.x - 0.25).abs() < 1e-15);
        assert!((b.lambda - 2.5).abs() < 1e-15);
        assert_eq!(b.u0, b.lambda);
    }

    #[test]
    fn empty_history_writes_header_only() {
        let mut buf = Vec::new();
        IterateHistory::default().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 1);
        assert!(s.starts_with("iteration,residual"));
    }
}
