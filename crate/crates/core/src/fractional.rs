//! Backward-Euler convolution quadrature for the Caputo derivative, and a
//! Mittag-Leffler evaluator on the negative real axis.
//!
//! The CQ weights are the Taylor coefficients of `(1 - ζ)^α`, so the discrete
//! operator applied to a sampled history is
//!
//! ```text
//! ∂ₜᵅ u(tₙ) ≈ τ^{-α} Σ_{j=0}^{n} w_j (u^{n-j} - u^0)
//! ```
//!
//! The shift by `u^0` turns the Riemann-Liouville quadrature into the Caputo one.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Order of the time derivative, `0 < α ≤ 1`. `α = 1` is the classical limit.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    pub fn new(alpha: f64) -> Result<Self> {
        if alpha > 0.0 && alpha <= 1.0 {
            Ok(Self(alpha))
        } else {
            Err(Error::InvalidOrder(alpha))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }
}

impl TryFrom<f64> for FractionalOrder {
    type Error = Error;

    fn try_from(alpha: f64) -> Result<Self> {
        Self::new(alpha)
    }
}

impl From<FractionalOrder> for f64 {
    fn from(order: FractionalOrder) -> f64 {
        order.0
    }
}

/// Uniform grid `t_m = m·τ`, `m = 0..=n_steps` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!(
                "horizon {horizon} must be positive"
            )));
        }
        if n_steps == 0 {
            return Err(Error::InvalidTimeGrid("n_steps must be positive".into()));
        }
        Ok(Self { horizon, n_steps })
    }

    /// Grid with the step closest to `tau` that divides the horizon evenly.
    pub fn with_step(horizon: f64, tau: f64) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::InvalidTimeGrid(format!(
                "step {tau} must be positive"
            )));
        }
        Self::new(horizon, (horizon / tau).round().max(1.0) as usize)
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    #[inline]
    pub fn tau(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn node(&self, m: usize) -> f64 {
        m as f64 * self.tau()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|m| self.node(m)).collect()
    }
}

/// Backward-Euler CQ weights `w_j = (-1)^j binom(α, j)`, `j = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CqWeights {
    alpha: FractionalOrder,
    tau: f64,
    w: Vec<f64>,
}

impl CqWeights {
    /// Weights for `n + 1` history terms with step `tau`.
    pub fn new(alpha: FractionalOrder, tau: f64, n: usize) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidTimeGrid(format!(
                "step {tau} must be positive"
            )));
        }
        Ok(Self {
            alpha,
            tau,
            w: cq_coefficients(alpha, n),
        })
    }

    pub fn for_grid(alpha: FractionalOrder, grid: &TimeGrid) -> Self {
        Self {
            alpha,
            tau: grid.tau(),
            w: cq_coefficients(alpha, grid.n_steps()),
        }
    }

    pub fn alpha(&self) -> FractionalOrder {
        self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    /// `τ^{-α}`, the scaling in front of the weighted sum.
    pub fn scale(&self) -> f64 {
        self.tau.powf(-self.alpha.value())
    }
}

/// Taylor coefficients of `(1 - ζ)^α` up to degree `n`, by the recurrence
/// `w_j = w_{j-1} (j - 1 - α) / j`.
pub fn cq_coefficients(alpha: FractionalOrder, n: usize) -> Vec<f64> {
    let a = alpha.value();
    let mut w = Vec::with_capacity(n + 1);
    w.push(1.0);
    for j in 1..=n {
        let jf = j as f64;
        w.push(w[j - 1] * (jf - 1.0 - a) / jf);
    }
    w
}

/// CQ approximation of the Caputo derivative at the last entry of `history`.
///
/// `history[m]` is the state at `t_m`; the result is
/// `τ^{-α} Σ_j w_j (U^{n-j} - U^0)` with `n = history.len() - 1`.
pub fn discrete_caputo_apply(weights: &CqWeights, history: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = history.first() else {
        return Err(Error::LengthMismatch {
            expected: 1,
            found: 0,
        });
    };
    if weights.len() < history.len() {
        return Err(Error::LengthMismatch {
            expected: history.len(),
            found: weights.len(),
        });
    }
    let dim = first.len();
    if let Some(bad) = history.iter().find(|u| u.len() != dim) {
        return Err(Error::LengthMismatch {
            expected: dim,
            found: bad.len(),
        });
    }
    let n = history.len() - 1;
    let w = weights.weights();
    let mut out = vec![0.0; dim];
    for (j, &wj) in w.iter().enumerate().take(n + 1) {
        let u = &history[n - j];
        for ((o, &ui), &u0) in out.iter_mut().zip(u).zip(first) {
            *o += wj * (ui - u0);
        }
    }
    let scale = weights.scale();
    out.iter_mut().for_each(|o| *o *= scale);
    Ok(out)
}

/// Below this `|z|` the power series is summed directly.
const SERIES_LIMIT: f64 = 1.0;

/// `E_α(z) = Σ z^k / Γ(αk + 1)` for real `z ≤ 0`.
///
/// Uses the power series for `|z| ≤ 1` and, beyond that, the representation
/// `E_α(-x) = sin(απ)/(απx) ∫₀^∞ exp(-s^{1/α}) / ((s/x)² + 2(s/x)cos(απ) + 1) ds`
/// evaluated by adaptive Gauss-Kronrod quadrature.
pub fn mittag_leffler(alpha: FractionalOrder, z: f64) -> Result<f64> {
    if z > 0.0 || z.is_nan() {
        return Err(Error::OutOfDomain(z));
    }
    if z == 0.0 {
        return Ok(1.0);
    }
    if alpha.is_classical() {
        return Ok(z.exp());
    }
    let x = -z;
    if x <= SERIES_LIMIT {
        Ok(ml_series(alpha.value(), z))
    } else {
        Ok(ml_integral(alpha.value(), x))
    }
}

pub(crate) fn ml_series(alpha: f64, z: f64) -> f64 {
    let ln_x = z.abs().ln();
    let mut sum = 1.0;
    for k in 1..4000usize {
        let kf = k as f64;
        let mag = (kf * ln_x - ln_gamma(alpha * kf + 1.0)).exp();
        let term = if k % 2 == 1 && z < 0.0 { -mag } else { mag };
        sum += term;
        if mag < 1e-17 * sum.abs() && k > 4 {
            break;
        }
    }
    sum
}

pub(crate) fn ml_integral(alpha: f64, x: f64) -> f64 {
    let inv_alpha = 1.0 / alpha;
    let cos_ap = (alpha * PI).cos();
    let f = |s: f64| {
        let r = s / x;
        (-s.powf(inv_alpha)).exp() / (r * r + 2.0 * r * cos_ap + 1.0)
    };
    // exp(-s^{1/α}) < 1e-22 beyond this point
    let upper = 52.0_f64.powf(alpha);
    let mut breaks = vec![0.0];
    if x < upper {
        breaks.push(x);
    }
    breaks.push(upper);
    let integral: f64 = breaks
        .windows(2)
        .map(|ab| adaptive_gauss_kronrod(&f, ab[0], ab[1], 1e-14, 60))
        .sum();
    (alpha * PI).sin() / (alpha * PI * x) * integral
}

// 15-point Kronrod nodes/weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

fn adaptive_gauss_kronrod<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    depth: u32,
) -> f64 {
    let (whole, err) = gauss_kronrod_15(f, a, b);
    adaptive_step(f, a, b, whole, err, rel_tol, whole.abs(), depth)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    rel_tol: f64,
    scale: f64,
    depth: u32,
) -> f64 {
    if depth == 0 || err <= rel_tol * scale.max(f64::MIN_POSITIVE) {
        return whole;
    }
    let mid = 0.5 * (a + b);
    let (left, el) = gauss_kronrod_15(f, a, mid);
    let (right, er) = gauss_kronrod_15(f, mid, b);
    let scale = scale.max((left + right).abs());
    adaptive_step(f, a, mid, left, el, rel_tol, scale, depth - 1)
        + adaptive_step(f, mid, b, right, er, rel_tol, scale, depth - 1)
}

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}
