use std::fmt;
use std::sync::Arc;

use super::mesh::Point;

/// A field on Ω that is either constant or given by a closure.
#[derive(Clone)]
pub enum Field<T: Copy> {
    Constant(T),
    Function(Arc<dyn Fn(Point) -> T + Send + Sync>),
}

impl<T: Copy> Field<T> {
    pub fn function(f: impl Fn(Point) -> T + Send + Sync + 'static) -> Self {
        Field::Function(Arc::new(f))
    }

    #[inline]
    pub fn eval(&self, p: Point) -> T {
        match self {
            Field::Constant(c) => *c,
            Field::Function(f) => f(p),
        }
    }

    pub fn constant_value(&self) -> Option<T> {
        match self {
            Field::Constant(c) => Some(*c),
            Field::Function(_) => None,
        }
    }
}

impl<T: Copy + fmt::Debug> fmt::Debug for Field<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Constant(c) => write!(f, "Constant({c:?})"),
            Field::Function(_) => write!(f, "Function(..)"),
        }
    }
}

pub type ScalarField = Field<f64>;
pub type VectorField = Field<[f64; 2]>;
pub type TensorField = Field<[[f64; 2]; 2]>;

/// Coefficients of `ρ ∂ₜᵅu - ∇·(a∇u) + b·∇u + q u`.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub rho: ScalarField,
    pub a: TensorField,
    pub b: VectorField,
    pub q: ScalarField,
}

impl Default for CoefficientSet {
    fn default() -> Self {
        Self::laplacian()
    }
}

impl CoefficientSet {
    /// `ρ ≡ 1`, `a = I`, `b = 0`, `q = 0`: the operator `-Δ`.
    pub fn laplacian() -> Self {
        Self {
            rho: Field::Constant(1.0),
            a: Field::Constant([[1.0, 0.0], [0.0, 1.0]]),
            b: Field::Constant([0.0, 0.0]),
            q: Field::Constant(0.0),
        }
    }

    pub fn isotropic(rho: f64, a: f64, b: [f64; 2], q: f64) -> Self {
        Self {
            rho: Field::Constant(rho),
            a: Field::Constant([[a, 0.0], [0.0, a]]),
            b: Field::Constant(b),
            q: Field::Constant(q),
        }
    }

    pub fn has_drift(&self) -> bool {
        !matches!(self.b, Field::Constant([bx, by]) if bx == 0.0 && by == 0.0)
    }
}

/// Smallest eigenvalue of the diffusion tensor, restricted to the first `dim` axes.
pub(crate) fn min_eigenvalue(a: [[f64; 2]; 2], dim: usize) -> f64 {
    if dim == 1 {
        return a[0][0];
    }
    let m01 = 0.5 * (a[0][1] + a[1][0]);
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - m01 * m01;
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    0.5 * tr - disc
}
