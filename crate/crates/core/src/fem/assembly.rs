//! P1 Galerkin assembly, point loads, Dirichlet elimination and point evaluation.

use super::coefficients::{min_eigenvalue, CoefficientSet, ScalarField};
use super::mesh::{Cells, Mesh, Point};
use crate::error::{Error, Result};
use crate::sparse::{CsrMatrix, TripletBuilder};

// 3-point Gauss-Legendre on [0, 1]
const GAUSS_1D: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Quadrature point with physical position, weight, and shape values.
struct QuadPoint {
    x: Point,
    weight: f64,
    phi: [f64; 3],
}

struct Element {
    vertices: [usize; 3],
    n: usize,
    measure: f64,
    grads: [[f64; 2]; 3],
}

fn elements(mesh: &Mesh) -> Vec<Element> {
    match mesh.cells() {
        Cells::Segments(segs) => segs
            .iter()
            .map(|&[i, j]| {
                let h = mesh.node(j)[0] - mesh.node(i)[0];
                Element {
                    vertices: [i, j, 0],
                    n: 2,
                    measure: h,
                    grads: [[-1.0 / h, 0.0], [1.0 / h, 0.0], [0.0, 0.0]],
                }
            })
            .collect(),
        Cells::Triangles(tris) => tris
            .iter()
            .map(|&t| {
                let p = t.map(|k| mesh.node(k));
                let area2 = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                    - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
                let mut grads = [[0.0; 2]; 3];
                for i in 0..3 {
                    let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                    grads[i] = [(p[j][1] - p[k][1]) / area2, (p[k][0] - p[j][0]) / area2];
                }
                Element {
                    vertices: t,
                    n: 3,
                    measure: 0.5 * area2,
                    grads,
                }
            })
            .collect(),
    }
}

fn quadrature(mesh: &Mesh, e: &Element) -> Vec<QuadPoint> {
    let p: Vec<Point> = e.vertices[..e.n].iter().map(|&k| mesh.node(k)).collect();
    if e.n == 2 {
        GAUSS_1D
            .iter()
            .map(|&(s, w)| QuadPoint {
                x: [p[0][0] + s * (p[1][0] - p[0][0]), 0.0],
                weight: w * e.measure,
                phi: [1.0 - s, s, 0.0],
            })
            .collect()
    } else {
        // edge midpoints
        [(0, 1, 2), (1, 2, 0), (2, 0, 1)]
            .iter()
            .map(|&(a, b, c)| {
                let mut phi = [0.0; 3];
                phi[a] = 0.5;
                phi[b] = 0.5;
                phi[c] = 0.0;
                QuadPoint {
                    x: [0.5 * (p[a][0] + p[b][0]), 0.5 * (p[a][1] + p[b][1])],
                    weight: e.measure / 3.0,
                    phi,
                }
            })
            .collect()
    }
}

/// Exact P1 mass matrix of one element with unit weight.
fn unit_mass(e: &Element, i: usize, j: usize) -> f64 {
    let n = e.n as f64;
    // 1D: h/6 [2 1; 1 2], 2D: |K|/12 [2 1 1; ...]
    let denom = (n + 1.0) * n;
    e.measure * if i == j { 2.0 } else { 1.0 } / denom
}

fn check_positive(name: &'static str, value: f64, x: Point, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero {
        value >= 0.0
    } else {
        value > 0.0
    };
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Coefficient {
            name,
            x: x[0],
            y: x[1],
            value,
        })
    }
}

fn add_weighted_mass(
    mesh: &Mesh,
    weight: &ScalarField,
    name: &'static str,
    allow_zero: bool,
    elems: &[Element],
    out: &mut TripletBuilder,
) -> Result<()> {
    if let Some(c) = weight.constant_value() {
        check_positive(name, c, mesh.node(0), allow_zero)?;
        if c == 0.0 {
            return Ok(());
        }
        for e in elems {
            for i in 0..e.n {
                for j in 0..e.n {
                    out.push(e.vertices[i], e.vertices[j], c * unit_mass(e, i, j));
                }
            }
        }
        return Ok(());
    }
    for e in elems {
        let mut local = [[0.0; 3]; 3];
        for qp in quadrature(mesh, e) {
            let w = weight.eval(qp.x);
            check_positive(name, w, qp.x, allow_zero)?;
            for i in 0..e.n {
                for j in 0..e.n {
                    local[i][j] += qp.weight * w * qp.phi[i] * qp.phi[j];
                }
            }
        }
        for i in 0..e.n {
            for j in 0..e.n {
                out.push(e.vertices[i], e.vertices[j], local[i][j]);
            }
        }
    }
    Ok(())
}

/// `M_ij = ∫ w φ_i φ_j`.
pub fn assemble_mass(mesh: &Mesh, weight: &ScalarField) -> Result<CsrMatrix> {
    let elems = elements(mesh);
    let nn = mesh.n_nodes();
    let mut t = TripletBuilder::with_capacity(nn, nn, elems.len() * 9);
    add_weighted_mass(mesh, weight, "rho", false, &elems, &mut t)?;
    Ok(t.build())
}

/// `S_ij = ∫ (a∇φ_j)·∇φ_i + (b·∇φ_j) φ_i + q φ_j φ_i`.
pub fn assemble_stiffness(mesh: &Mesh, coeffs: &CoefficientSet) -> Result<CsrMatrix> {
    let elems = elements(mesh);
    let nn = mesh.n_nodes();
    let dim = mesh.dim();
    let mut t = TripletBuilder::with_capacity(nn, nn, elems.len() * 27);

    let check_a = |a: [[f64; 2]; 2], x: Point| -> Result<()> {
        let lam = min_eigenvalue(a, dim);
        if lam > 0.0 && lam.is_finite() {
            Ok(())
        } else {
            Err(Error::Coefficient {
                name: "a",
                x: x[0],
                y: x[1],
                value: lam,
            })
        }
    };
    if let Some(a) = coeffs.a.constant_value() {
        check_a(a, mesh.node(0))?;
    }

    for e in &elems {
        let mut local = [[0.0; 3]; 3];
        let qps = match (coeffs.a.constant_value(), coeffs.b.constant_value()) {
            (Some(_), Some(_)) => Vec::new(),
            _ => quadrature(mesh, e),
        };
        // diffusion
        match coeffs.a.constant_value() {
            Some(a) => add_diffusion(&mut local, e, a, e.measure),
            None => {
                for qp in &qps {
                    let a = coeffs.a.eval(qp.x);
                    check_a(a, qp.x)?;
                    add_diffusion(&mut local, e, a, qp.weight);
                }
            }
        }
        // drift: ∫ (b·∇φ_j) φ_i
        match coeffs.b.constant_value() {
            Some(b) => {
                if b != [0.0, 0.0] {
                    let mean_phi = e.measure / e.n as f64;
                    for i in 0..e.n {
                        for j in 0..e.n {
                            local[i][j] += mean_phi * (b[0] * e.grads[j][0] + b[1] * e.grads[j][1]);
                        }
                    }
                }
            }
            None => {
                for qp in &qps {
                    let b = coeffs.b.eval(qp.x);
                    for i in 0..e.n {
                        for j in 0..e.n {
                            local[i][j] += qp.weight
                                * qp.phi[i]
                                * (b[0] * e.grads[j][0] + b[1] * e.grads[j][1]);
                        }
                    }
                }
            }
        }
        for i in 0..e.n {
            for j in 0..e.n {
                t.push(e.vertices[i], e.vertices[j], local[i][j]);
            }
        }
    }
    add_weighted_mass(mesh, &coeffs.q, "q", true, &elems, &mut t)?;
    Ok(t.build())
}

fn add_diffusion(local: &mut [[f64; 3]; 3], e: &Element, a: [[f64; 2]; 2], weight: f64) {
    for j in 0..e.n {
        let g = e.grads[j];
        let ag = [
            a[0][0] * g[0] + a[0][1] * g[1],
            a[1][0] * g[0] + a[1][1] * g[1],
        ];
        for i in 0..e.n {
            local[i][j] += weight * (ag[0] * e.grads[i][0] + ag[1] * e.grads[i][1]);
        }
    }
}

/// H¹(Ω) Gram matrix `∫ φ_iφ_j + ∇φ_i·∇φ_j` restricted to the interior nodes.
pub fn interior_h1_gram(mesh: &Mesh) -> Result<CsrMatrix> {
    let m = assemble_mass(mesh, &ScalarField::Constant(1.0))?;
    let s = assemble_stiffness(mesh, &CoefficientSet::laplacian())?;
    let g = m.linear_combination(1.0, &s, 1.0)?;
    let interior = mesh.interior_nodes();
    Ok(g.submatrix(&interior, &interior))
}

/// Load vector of a unit point source: entries `φ_i(x)`.
pub fn point_source_vector(mesh: &Mesh, x: Point) -> Result<Vec<f64>> {
    if !mesh.contains(x) {
        return Err(Error::PointOutsideMesh { x: x[0], y: x[1] });
    }
    if mesh.on_boundary(x) {
        return Err(Error::PointOnBoundary { x: x[0], y: x[1] });
    }
    let loc = mesh.locate(x)?;
    let mut f = vec![0.0; mesh.n_nodes()];
    for (v, w) in loc.pairs() {
        f[v] += w;
    }
    Ok(f)
}

/// P1 interpolant evaluated at `x`.
pub fn evaluate_at_point(mesh: &Mesh, nodal: &[f64], x: Point) -> Result<f64> {
    if nodal.len() != mesh.n_nodes() {
        return Err(Error::LengthMismatch {
            expected: mesh.n_nodes(),
            found: nodal.len(),
        });
    }
    let loc = mesh.locate(x)?;
    Ok(loc.pairs().map(|(v, w)| w * nodal[v]).sum())
}

/// Nodal interpolant of `f`.
pub fn interpolate(mesh: &Mesh, f: impl Fn(Point) -> f64) -> Vec<f64> {
    mesh.nodes().iter().map(|&p| f(p)).collect()
}

/// Symmetric elimination of homogeneous Dirichlet rows/columns: boundary rows
/// and columns are removed, the diagonal entry set to one and the rhs entry zeroed.
pub fn apply_dirichlet(
    matrix: &CsrMatrix,
    rhs: &[f64],
    boundary: &[usize],
) -> Result<(CsrMatrix, Vec<f64>)> {
    let n = matrix.n_rows();
    if rhs.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: rhs.len(),
        });
    }
    let mut fixed = vec![false; n];
    for &b in boundary {
        if b >= n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: b + 1,
            });
        }
        fixed[b] = true;
    }
    if boundary.is_empty() {
        return Ok((matrix.clone(), rhs.to_vec()));
    }
    let mut t = TripletBuilder::with_capacity(n, matrix.n_cols(), matrix.nnz());
    for i in 0..n {
        if fixed[i] {
            t.push(i, i, 1.0);
            continue;
        }
        let (cols, vals) = matrix.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if !fixed[j] {
                t.push(i, j, v);
            }
        }
    }
    let mut rhs = rhs.to_vec();
    for &b in boundary {
        rhs[b] = 0.0;
    }
    Ok((t.build(), rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::coefficients::Field;
    use crate::fem::mesh::{build_interval_mesh, build_rect_mesh};

    fn one() -> ScalarField {
        Field::Constant(1.0)
    }

    #[test]
    fn mass_1d_interior_stencil() {
        let m = build_interval_mesh(1.0, 4).unwrap();
        let mm = assemble_mass(&m, &one()).unwrap();
        let h = 0.25;
        for i in 1..4 {
            assert!((mm.get(i, i - 1) - h / 6.0).abs() < 1e-16);
            assert!((mm.get(i, i) - 4.0 * h / 6.0).abs() < 1e-16);
            assert!((mm.get(i, i + 1) - h / 6.0).abs() < 1e-16);
        }
        let m2 = assemble_mass(&m, &Field::Constant(2.0)).unwrap();
        assert_eq!(m2, mm.scale(2.0));
    }

    #[test]
    fn mass_total_is_volume() {
        for mesh in [
            build_interval_mesh(2.5, 7).unwrap(),
            build_rect_mesh(3, 5).unwrap(),
        ] {
            let mm = assemble_mass(&mesh, &one()).unwrap();
            let total: f64 = mm.values().iter().sum();
            assert!((total - mesh.volume()).abs() < 1e-14);
        }
    }

    #[test]
    fn variable_weight_matches_constant() {
        let mesh = build_rect_mesh(3, 3).unwrap();
        let a = assemble_mass(&mesh, &Field::Constant(1.5)).unwrap();
        let b = assemble_mass(&mesh, &Field::function(|_| 1.5)).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_coefficients() {
        let mesh = build_interval_mesh(1.0, 4).unwrap();
        assert!(matches!(
            assemble_mass(&mesh, &Field::function(|p| p[0] - 0.5)),
            Err(Error::Coefficient { name: "rho", .. })
        ));
        let mut c = CoefficientSet::laplacian();
        c.a = Field::Constant([[-1.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(
            assemble_stiffness(&mesh, &c),
            Err(Error::Coefficient { name: "a", .. })
        ));
        let mut c = CoefficientSet::laplacian();
        c.q = Field::Constant(-1.0);
        assert!(assemble_stiffness(&mesh, &c).is_err());
    }

    #[test]
    fn stiffness_1d_stencil_and_row_sums() {
        let m = build_interval_mesh(1.0, 4).unwrap();
        let s = assemble_stiffness(&m, &CoefficientSet::laplacian()).unwrap();
        for i in 1..4 {
            assert!((s.get(i, i - 1) + 4.0).abs() < 1e-14);
            assert!((s.get(i, i) - 8.0).abs() < 1e-14);
            assert!((s.get(i, i + 1) + 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn stiffness_2d_five_point_equivalent() {
        let m = build_rect_mesh(4, 4).unwrap();
        let s = assemble_stiffness(&m, &CoefficientSet::laplacian()).unwrap();
        // interior node (2,2) = index 12: center 4, axis neighbours -1, diagonal neighbours 0
        let c = 12;
        assert!((s.get(c, c) - 4.0).abs() < 1e-14);
        for nb in [c - 1, c + 1, c - 5, c + 5] {
            assert!((s.get(c, nb) + 1.0).abs() < 1e-14);
        }
        for nb in [c - 6, c + 6] {
            assert!(s.get(c, nb).abs() < 1e-14);
        }
        assert!(s.asymmetry() < 1e-14);
    }

    #[test]
    fn drift_makes_stiffness_nonsymmetric_but_keeps_row_sums() {
        let m = build_rect_mesh(4, 4).unwrap();
        let c = CoefficientSet::isotropic(1.0, 1.0, [0.5, -0.3], 0.0);
        let s = assemble_stiffness(&m, &c).unwrap();
        assert!(s.asymmetry() > 1e-3);
        let ones = vec![1.0; m.n_nodes()];
        let r = s.mul_vec(&ones);
        for i in m.interior_nodes() {
            assert!(r[i].abs() < 1e-13);
        }
        let cv = CoefficientSet {
            b: Field::function(|_| [0.5, -0.3]),
            ..c.clone()
        };
        let sv = assemble_stiffness(&m, &cv).unwrap();
        for i in 0..m.n_nodes() {
            for j in 0..m.n_nodes() {
                assert!((s.get(i, j) - sv.get(i, j)).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn point_source_1d() {
        let m = build_interval_mesh(1.0, 4).unwrap();
        assert_eq!(
            point_source_vector(&m, [0.5, 0.0]).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0, 0.0]
        );
        let f = point_source_vector(&m, [0.3, 0.0]).unwrap();
        assert!((f[1] - 0.8).abs() < 1e-15 && (f[2] - 0.2).abs() < 1e-15);
        assert!(matches!(
            point_source_vector(&m, [1.0, 0.0]),
            Err(Error::PointOnBoundary { .. })
        ));
        assert!(matches!(
            point_source_vector(&m, [1.2, 0.0]),
            Err(Error::PointOutsideMesh { .. })
        ));
    }

    #[test]
    fn point_source_centroid() {
        let m = build_rect_mesh(2, 2).unwrap();
        // lower triangle of cell (0,0): (0,0),(0.5,0),(0.5,0.5)
        let c = [1.0 / 3.0, 1.0 / 6.0];
        let f = point_source_vector(&m, c).unwrap();
        for k in [0, 1, 4] {
            assert!((f[k] - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dirichlet_cases() {
        let id = CsrMatrix::identity(3);
        let (a, b) = apply_dirichlet(&id, &[1.0, 2.0, 3.0], &[0, 2]).unwrap();
        assert_eq!(a, id);
        assert_eq!(b, vec![0.0, 2.0, 0.0]);
        let (a, b) = apply_dirichlet(&id, &[1.0, 2.0, 3.0], &[]).unwrap();
        assert_eq!((a, b), (id.clone(), vec![1.0, 2.0, 3.0]));

        let m = build_interval_mesh(1.0, 4).unwrap();
        let s = assemble_stiffness(&m, &CoefficientSet::laplacian()).unwrap();
        let (a, _) = apply_dirichlet(&s, &[0.0; 5], &[0, 4]).unwrap();
        let d = a.to_dense();
        assert_eq!(d[0], vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(d[4], vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        for i in 1..4 {
            assert_eq!(d[i][0], 0.0);
            assert_eq!(d[i][4], 0.0);
            assert!((d[i][i] - 8.0).abs() < 1e-14);
        }
        assert!((d[1][2] + 4.0).abs() < 1e-14 && (d[2][3] + 4.0).abs() < 1e-14);
    }

    #[test]
    fn point_evaluation() {
        let m = build_interval_mesh(1.0, 4).unwrap();
        let v = evaluate_at_point(&m, &[0.0, 1.0, 0.0, 0.0, 0.0], [0.3, 0.0]).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
        let xs: Vec<f64> = m.nodes().iter().map(|p| p[0]).collect();
        assert!((evaluate_at_point(&m, &xs, [0.61, 0.0]).unwrap() - 0.61).abs() < 1e-15);
        let c = vec![3.5; 5];
        assert!((evaluate_at_point(&m, &c, [0.99, 0.0]).unwrap() - 3.5).abs() < 1e-15);
        assert!(evaluate_at_point(&m, &c, [-0.1, 0.0]).is_err());
    }
}
