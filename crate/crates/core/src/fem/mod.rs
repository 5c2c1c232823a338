//! Structured meshes and P1 finite elements.

mod assembly;
mod coefficients;
mod mask;
mod mesh;

pub use assembly::{
    apply_dirichlet, assemble_mass, assemble_stiffness, evaluate_at_point, interior_h1_gram,
    interpolate, point_source_vector,
};
pub use coefficients::{CoefficientSet, Field, ScalarField, TensorField, VectorField};
pub use mask::{subdomain_mask, SubdomainMask};
pub use mesh::{build_interval_mesh, build_rect_mesh, Cells, Layout, Location, Mesh, Point};
