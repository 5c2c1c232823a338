//! Direct band factorizations (Cholesky / LU) and a Jacobi-preconditioned
//! conjugate-gradient fallback.
//!
//! FEM matrices on the structured meshes keep a narrow band in natural node
//! order, so no fill-reducing permutation is applied.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Relative residual bound checked after every solve in debug builds.
pub const DEBUG_RESIDUAL_BOUND: f64 = 1e-10;

const CG_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone)]
struct BandCholesky {
    n: usize,
    bw: usize,
    // row i holds L[i][i-bw..=i]
    l: Vec<f64>,
}

impl BandCholesky {
    fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if j <= i {
                    l[i * w + j + bw - i] = v;
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(bw);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(bw));
                let row_i = &l[i * w + lo + bw - i..i * w + j + bw - i];
                let row_j = &l[j * w + lo + bw - j..j * w + bw];
                let dot: f64 = row_i.iter().zip(row_j).map(|(a, b)| a * b).sum();
                let idx = i * w + j + bw - i;
                let s = l[idx] - dot;
                if i == j {
                    let a_ii = a.get(i, i).abs();
                    if !(s > 1e-13 * a_ii) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    l[idx] = s.sqrt();
                } else {
                    l[idx] = s / l[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.l[i * w + lo + bw - i..i * w + bw];
            let dot: f64 = row.iter().zip(&y[lo..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let xi = y[i] / self.l[i * w + bw];
            y[i] = xi;
            let lo = i.saturating_sub(bw);
            let row = &self.l[i * w + lo + bw - i..i * w + bw];
            for (yk, &lik) in y[lo..i].iter_mut().zip(row) {
                *yk -= lik * xi;
            }
        }
        y
    }
}

#[derive(Debug, Clone)]
struct BandLu {
    n: usize,
    bw: usize,
    // row i holds A[i][i-bw..=i+bw]; after factoring, unit-lower L and U share it
    lu: Vec<f64>,
}

impl BandLu {
    fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let bw = a.bandwidth();
        let w = 2 * bw + 1;
        let mut lu = vec![0.0; n * w];
        let mut scale = 0.0f64;
        for i in 0..n {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                lu[i * w + j + bw - i] = v;
                scale = scale.max(v.abs());
            }
        }
        let at = |i: usize, j: usize| i * w + j + bw - i;
        for k in 0..n {
            let pivot = lu[at(k, k)];
            if !(pivot.abs() > 1e-14 * scale) || !pivot.is_finite() {
                return Err(Error::Singular {
                    pivot: k,
                    value: pivot,
                });
            }
            let hi = (k + bw).min(n - 1);
            for i in k + 1..=hi {
                let factor = lu[at(i, k)] / pivot;
                lu[at(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..=hi {
                        lu[at(i, j)] -= factor * lu[at(k, j)];
                    }
                }
            }
        }
        Ok(Self { n, bw, lu })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, 2 * self.bw + 1);
        let at = |i: usize, j: usize| i * w + j + bw - i;
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let row = &self.lu[at(i, lo)..at(i, i)];
            let dot: f64 = row.iter().zip(&y[lo..i]).map(|(a, b)| a * b).sum();
            y[i] -= dot;
        }
        for i in (0..n).rev() {
            let hi = (i + bw).min(n - 1);
            let row = &self.lu[at(i, i) + 1..=at(i, hi)];
            let dot: f64 = row.iter().zip(&y[i + 1..=hi]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / self.lu[at(i, i)];
        }
        y
    }
}

#[derive(Debug, Clone)]
enum Kind {
    Cholesky(BandCholesky),
    Lu(BandLu),
    ConjugateGradient { inv_diag: Vec<f64>, max_iter: usize },
}

/// A reusable factorized operator. Immutable once built; `solve` takes `&self`
/// and may be called from several threads.
#[derive(Debug, Clone)]
pub struct Factorization {
    matrix: CsrMatrix,
    symmetric: bool,
    kind: Kind,
}

/// Factorize `matrix`: band Cholesky when `symmetric`, band LU otherwise.
pub fn factorize(matrix: &CsrMatrix, symmetric: bool) -> Result<Factorization> {
    check_square(matrix)?;
    let kind = if symmetric {
        let asym = matrix.asymmetry();
        if asym > 1e-12 {
            return Err(Error::NotSymmetric(asym));
        }
        Kind::Cholesky(BandCholesky::factor(matrix)?)
    } else {
        Kind::Lu(BandLu::factor(matrix)?)
    };
    Ok(Factorization {
        matrix: matrix.clone(),
        symmetric,
        kind,
    })
}

/// Iterative solver for large SPD systems (conjugate gradient, Jacobi preconditioner).
pub fn factorize_iterative(matrix: &CsrMatrix) -> Result<Factorization> {
    check_square(matrix)?;
    let asym = matrix.asymmetry();
    if asym > 1e-12 {
        return Err(Error::NotSymmetric(asym));
    }
    let mut inv_diag = Vec::with_capacity(matrix.n_rows());
    for (i, d) in matrix.diagonal().into_iter().enumerate() {
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: i, value: d });
        }
        inv_diag.push(1.0 / d);
    }
    Ok(Factorization {
        matrix: matrix.clone(),
        symmetric: true,
        kind: Kind::ConjugateGradient {
            inv_diag,
            max_iter: 10 * matrix.n_rows() + 100,
        },
    })
}

fn check_square(matrix: &CsrMatrix) -> Result<()> {
    if matrix.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            rows: matrix.n_rows(),
            cols: matrix.n_cols(),
        })
    }
}

impl Factorization {
    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.dim() {
            return Err(Error::LengthMismatch {
                expected: self.dim(),
                found: rhs.len(),
            });
        }
        let x = match &self.kind {
            Kind::Cholesky(c) => c.solve(rhs),
            Kind::Lu(lu) => lu.solve(rhs),
            Kind::ConjugateGradient { inv_diag, max_iter } => {
                conjugate_gradient(&self.matrix, inv_diag, rhs, *max_iter)?
            }
        };
        debug_assert!(
            self.relative_residual(&x, rhs) <= DEBUG_RESIDUAL_BOUND,
            "solve residual {:e} exceeds {:e}",
            self.relative_residual(&x, rhs),
            DEBUG_RESIDUAL_BOUND
        );
        Ok(x)
    }

    /// `‖A x - b‖ / ‖b‖` (zero when `b = 0` and `x = 0`).
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        let r = norm(ax.iter().zip(b).map(|(a, b)| a - b));
        let nb = norm(b.iter().copied());
        if nb == 0.0 {
            r
        } else {
            r / nb
        }
    }
}

fn norm(it: impl Iterator<Item = f64>) -> f64 {
    it.map(|v| v * v).sum::<f64>().sqrt()
}

fn conjugate_gradient(
    a: &CsrMatrix,
    inv_diag: &[f64],
    b: &[f64],
    max_iter: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let nb = norm(b.iter().copied());
    let mut x = vec![0.0; n];
    if nb == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    for _ in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        let step = rz / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        if norm(r.iter().copied()) <= CG_TOLERANCE * nb {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: norm(r.iter().copied()) / nb,
    })
}
