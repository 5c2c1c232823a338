use crate::error::{Error, Result};
use crate::fem::Point;

/// Unknowns of the reconstruction: source locations, nodal intensities on the
/// inversion time grid and, optionally, interior nodal values of `u₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    pub locations: Vec<Point>,
    pub intensities: Vec<Vec<f64>>,
    pub u0: Option<Vec<f64>>,
}

/// Sizes of the blocks in a packed parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamLayout {
    pub dim: usize,
    pub n_sources: usize,
    pub n_times: usize,
    pub n_u0: usize,
}

impl ParamLayout {
    pub fn n_location(&self) -> usize {
        self.dim * self.n_sources
    }

    pub fn n_intensity(&self) -> usize {
        self.n_sources * self.n_times
    }

    pub fn len(&self) -> usize {
        self.n_location() + self.n_intensity() + self.n_u0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn intensity_offset(&self) -> usize {
        self.n_location()
    }

    pub fn u0_offset(&self) -> usize {
        self.n_location() + self.n_intensity()
    }
}

impl ParamVector {
    pub fn layout(&self, dim: usize) -> ParamLayout {
        ParamLayout {
            dim,
            n_sources: self.locations.len(),
            n_times: self.intensities.first().map_or(0, Vec::len),
            n_u0: self.u0.as_ref().map_or(0, Vec::len),
        }
    }

    /// Locations (first `dim` coordinates each), intensities source by source, then `u₀`.
    pub fn pack(&self, dim: usize) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.layout(dim).len());
        for p in &self.locations {
            v.extend_from_slice(&p[..dim]);
        }
        for s in &self.intensities {
            v.extend_from_slice(s);
        }
        if let Some(u0) = &self.u0 {
            v.extend_from_slice(u0);
        }
        v
    }

    pub fn unpack(layout: ParamLayout, v: &[f64]) -> Result<Self> {
        if v.len() != layout.len() {
            return Err(Error::LengthMismatch {
                expected: layout.len(),
                found: v.len(),
            });
        }
        let (d, n) = (layout.dim, layout.n_sources);
        let locations = (0..n)
            .map(|k| {
                let mut p = [0.0; 2];
                p[..d].copy_from_slice(&v[k * d..(k + 1) * d]);
                p
            })
            .collect();
        let off = layout.intensity_offset();
        let intensities = (0..n)
            .map(|k| v[off + k * layout.n_times..off + (k + 1) * layout.n_times].to_vec())
            .collect();
        let u0 = (layout.n_u0 > 0).then(|| v[layout.u0_offset()..].to_vec());
        Ok(Self {
            locations,
            intensities,
            u0,
        })
    }
}
