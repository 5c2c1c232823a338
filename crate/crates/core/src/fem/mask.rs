use super::mesh::{Mesh, Point};
use crate::error::{Error, Result};

/// Interior mesh nodes inside an observation region ω.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainMask {
    node_indices: Vec<usize>,
    description: String,
}

impl SubdomainMask {
    /// Mask from an explicit node list. Boundary nodes are allowed here; the
    /// caller takes responsibility for them.
    pub fn from_indices(
        mut node_indices: Vec<usize>,
        description: impl Into<String>,
    ) -> Result<Self> {
        let description = description.into();
        if node_indices.is_empty() {
            return Err(Error::EmptyMask(description));
        }
        node_indices.sort_unstable();
        node_indices.dedup();
        Ok(Self {
            node_indices,
            description,
        })
    }

    pub fn node_indices(&self) -> &[usize] {
        &self.node_indices
    }

    pub fn len(&self) -> usize {
        self.node_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_indices.is_empty()
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

/// All non-boundary nodes whose coordinates satisfy `region`, in node order.
pub fn subdomain_mask(
    mesh: &Mesh,
    region: impl Fn(Point) -> bool,
    description: impl Into<String>,
) -> Result<SubdomainMask> {
    let nodes: Vec<usize> = (0..mesh.n_nodes())
        .filter(|&i| !mesh.is_boundary(i) && region(mesh.node(i)))
        .collect();
    SubdomainMask::from_indices(nodes, description)
}
