use crate::error::{Error, Result};

/// Spatial point; the second coordinate is unused (zero) on 1D meshes.
pub type Point = [f64; 2];

const LOCATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    Interval { length: f64, n_cells: usize },
    UnitSquare { nx: usize, ny: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cells {
    Segments(Vec<[usize; 2]>),
    Triangles(Vec<[usize; 3]>),
}

/// Structured P1 mesh on an interval `(0, ℓ)` or the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    layout: Layout,
    nodes: Vec<Point>,
    cells: Cells,
    boundary: Vec<usize>,
    is_boundary: Vec<bool>,
    h_max: f64,
}

/// Element containing a point together with the P1 shape-function values there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub cell: usize,
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
    pub n_vertices: usize,
}

impl Location {
    pub fn pairs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.vertices
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
            .take(self.n_vertices)
    }
}

/// Uniform partition of `(0, length)` into `n_cells` segments.
pub fn build_interval_mesh(length: f64, n_cells: usize) -> Result<Mesh> {
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "length {length} must be positive"
        )));
    }
    if n_cells < 2 {
        return Err(Error::InvalidMesh(format!(
            "need at least 2 cells, got {n_cells}"
        )));
    }
    let h = length / n_cells as f64;
    let nodes = (0..=n_cells)
        .map(|i| {
            if i == n_cells {
                [length, 0.0]
            } else {
                [i as f64 * h, 0.0]
            }
        })
        .collect();
    let segments = (0..n_cells).map(|i| [i, i + 1]).collect();
    let boundary = vec![0, n_cells];
    let mut is_boundary = vec![false; n_cells + 1];
    is_boundary[0] = true;
    is_boundary[n_cells] = true;
    Ok(Mesh {
        layout: Layout::Interval { length, n_cells },
        nodes,
        cells: Cells::Segments(segments),
        boundary,
        is_boundary,
        h_max: h,
    })
}

/// Unit square split into `nx × ny` cells, each cut along the diagonal from
/// its lower-left to its upper-right corner (two counter-clockwise triangles).
pub fn build_rect_mesh(nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidMesh(format!(
            "grid {nx}x{ny} must be non-empty"
        )));
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut is_boundary = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 / nx as f64, j as f64 / ny as f64]);
            is_boundary.push(i == 0 || j == 0 || i == nx || j == ny);
        }
    }
    let mut tris = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            tris.push([v00, v10, v11]);
            tris.push([v00, v11, v01]);
        }
    }
    let boundary = (0..nodes.len()).filter(|&k| is_boundary[k]).collect();
    let hx = 1.0 / nx as f64;
    let hy = 1.0 / ny as f64;
    Ok(Mesh {
        layout: Layout::UnitSquare { nx, ny },
        nodes,
        cells: Cells::Triangles(tris),
        boundary,
        is_boundary,
        h_max: (hx * hx + hy * hy).sqrt(),
    })
}

impl Mesh {
    pub fn dim(&self) -> usize {
        match self.layout {
            Layout::Interval { .. } => 1,
            Layout::UnitSquare { .. } => 2,
        }
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> Point {
        self.nodes[i]
    }

    pub fn cells(&self) -> &Cells {
        &self.cells
    }

    pub fn n_cells(&self) -> usize {
        match &self.cells {
            Cells::Segments(s) => s.len(),
            Cells::Triangles(t) => t.len(),
        }
    }

    /// Sorted indices of the nodes on ∂Ω.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.is_boundary[i]
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&i| !self.is_boundary[i])
            .collect()
    }

    /// Longest element edge.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// Bounding box `(lower, upper)` of the domain.
    pub fn extent(&self) -> (Point, Point) {
        match self.layout {
            Layout::Interval { length, .. } => ([0.0, 0.0], [length, 0.0]),
            Layout::UnitSquare { .. } => ([0.0, 0.0], [1.0, 1.0]),
        }
    }

    /// Measure of Ω.
    pub fn volume(&self) -> f64 {
        match self.layout {
            Layout::Interval { length, .. } => length,
            Layout::UnitSquare { .. } => 1.0,
        }
    }

    fn scale(&self) -> f64 {
        match self.layout {
            Layout::Interval { length, .. } => length,
            Layout::UnitSquare { .. } => 1.0,
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        let tol = LOCATE_TOL * self.scale();
        let (lo, hi) = self.extent();
        (0..self.dim()).all(|d| p[d] >= lo[d] - tol && p[d] <= hi[d] + tol)
            && p.iter().all(|c| c.is_finite())
    }

    /// True when `p` is inside the closed domain but within round-off of ∂Ω.
    pub fn on_boundary(&self, p: Point) -> bool {
        let tol = LOCATE_TOL * self.scale();
        let (lo, hi) = self.extent();
        self.contains(p)
            && (0..self.dim()).any(|d| (p[d] - lo[d]).abs() <= tol || (hi[d] - p[d]).abs() <= tol)
    }

    /// Containing element and barycentric weights of `p`.
    pub fn locate(&self, p: Point) -> Result<Location> {
        if !self.contains(p) {
            return Err(Error::PointOutsideMesh { x: p[0], y: p[1] });
        }
        match self.layout {
            Layout::Interval { length, n_cells } => {
                let u = (p[0] / length * n_cells as f64).clamp(0.0, n_cells as f64);
                let c = (u.floor() as usize).min(n_cells - 1);
                let s = (u - c as f64).clamp(0.0, 1.0);
                Ok(Location {
                    cell: c,
                    vertices: [c, c + 1, 0],
                    weights: [1.0 - s, s, 0.0],
                    n_vertices: 2,
                })
            }
            Layout::UnitSquare { nx, ny } => {
                let u = (p[0] * nx as f64).clamp(0.0, nx as f64);
                let v = (p[1] * ny as f64).clamp(0.0, ny as f64);
                let i = (u.floor() as usize).min(nx - 1);
                let j = (v.floor() as usize).min(ny - 1);
                let s = (u - i as f64).clamp(0.0, 1.0);
                let t = (v - j as f64).clamp(0.0, 1.0);
                let idx = |a: usize, b: usize| b * (nx + 1) + a;
                let cell = 2 * (j * nx + i);
                if s >= t {
                    Ok(Location {
                        cell,
                        vertices: [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)],
                        weights: [1.0 - s, s - t, t],
                        n_vertices: 3,
                    })
                } else {
                    Ok(Location {
                        cell: cell + 1,
                        vertices: [idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)],
                        weights: [1.0 - t, s, t - s],
                        n_vertices: 3,
                    })
                }
            }
        }
    }
}
