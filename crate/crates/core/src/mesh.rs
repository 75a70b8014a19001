//! Uniform Cartesian mesh and its block decomposition into Eulerian partitions.

use serde::{Deserialize, Serialize};

use crate::error::MeshError;
use crate::geom::{BoundingBox, Vec3};

/// Inclusive box of cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn new(lo: [usize; 3], hi: [usize; 3]) -> Self {
        debug_assert!((0..3).all(|a| lo[a] <= hi[a]));
        CellBox { lo, hi }
    }

    pub fn dims(&self) -> [usize; 3] {
        [
            self.hi[0] - self.lo[0] + 1,
            self.hi[1] - self.lo[1] + 1,
            self.hi[2] - self.lo[2] + 1,
        ]
    }

    pub fn len(&self) -> usize {
        let d = self.dims();
        d[0] * d[1] * d[2]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, c: [usize; 3]) -> bool {
        (0..3).all(|a| c[a] >= self.lo[a] && c[a] <= self.hi[a])
    }

    pub fn contains_box(&self, other: &CellBox) -> bool {
        self.contains(other.lo) && self.contains(other.hi)
    }

    /// Row-major local index with x fastest.
    #[inline]
    pub fn local_index(&self, c: [usize; 3]) -> usize {
        let d = self.dims();
        (c[0] - self.lo[0]) + d[0] * ((c[1] - self.lo[1]) + d[1] * (c[2] - self.lo[2]))
    }

    pub fn union(&self, other: &CellBox) -> CellBox {
        CellBox {
            lo: [
                self.lo[0].min(other.lo[0]),
                self.lo[1].min(other.lo[1]),
                self.lo[2].min(other.lo[2]),
            ],
            hi: [
                self.hi[0].max(other.hi[0]),
                self.hi[1].max(other.hi[1]),
                self.hi[2].max(other.hi[2]),
            ],
        }
    }

    /// Iterates global cell indices in local-index order.
    pub fn iter(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let (lo, hi) = (self.lo, self.hi);
        (lo[2]..=hi[2]).flat_map(move |k| {
            (lo[1]..=hi[1]).flat_map(move |j| (lo[0]..=hi[0]).map(move |i| [i, j, k]))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredMesh {
    pub origin: Vec3,
    pub cell_size: Vec3,
    pub dims: [usize; 3],
    pub partition_grid: [usize; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerianPartition {
    pub partition_id: usize,
    pub cell_range: CellBox,
    pub spatial_extent: BoundingBox,
}

impl StructuredMesh {
    pub fn new(
        origin: Vec3,
        cell_size: Vec3,
        dims: [usize; 3],
        partition_grid: [usize; 3],
    ) -> Result<Self, MeshError> {
        let mesh = StructuredMesh {
            origin,
            cell_size,
            dims,
            partition_grid,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(MeshError::EmptyDims(self.dims));
        }
        if self.cell_size.0.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(MeshError::BadCellSize(self.cell_size.0));
        }
        if (0..3).any(|a| self.partition_grid[a] == 0 || !self.dims[a].is_multiple_of(self.partition_grid[a]))
        {
            return Err(MeshError::IndivisibleGrid {
                dims: self.dims,
                grid: self.partition_grid,
            });
        }
        Ok(())
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_size.product()
    }

    pub fn n_cells(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn n_partitions(&self) -> usize {
        self.partition_grid[0] * self.partition_grid[1] * self.partition_grid[2]
    }

    pub fn cell_box(&self) -> CellBox {
        CellBox::new([0; 3], [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1])
    }

    pub fn domain_box(&self) -> BoundingBox {
        let hi = Vec3::new(
            self.origin[0] + self.dims[0] as f64 * self.cell_size[0],
            self.origin[1] + self.dims[1] as f64 * self.cell_size[1],
            self.origin[2] + self.dims[2] as f64 * self.cell_size[2],
        );
        BoundingBox::new(self.origin, hi)
    }

    pub fn cell_center(&self, c: [usize; 3]) -> Vec3 {
        Vec3::new(
            self.origin[0] + (c[0] as f64 + 0.5) * self.cell_size[0],
            self.origin[1] + (c[1] as f64 + 0.5) * self.cell_size[1],
            self.origin[2] + (c[2] as f64 + 0.5) * self.cell_size[2],
        )
    }

    /// Spatial extent of an inclusive cell box.
    pub fn box_extent(&self, cells: &CellBox) -> BoundingBox {
        let lo = Vec3::new(
            self.origin[0] + cells.lo[0] as f64 * self.cell_size[0],
            self.origin[1] + cells.lo[1] as f64 * self.cell_size[1],
            self.origin[2] + cells.lo[2] as f64 * self.cell_size[2],
        );
        let hi = Vec3::new(
            self.origin[0] + (cells.hi[0] + 1) as f64 * self.cell_size[0],
            self.origin[1] + (cells.hi[1] + 1) as f64 * self.cell_size[1],
            self.origin[2] + (cells.hi[2] + 1) as f64 * self.cell_size[2],
        );
        BoundingBox::new(lo, hi)
    }

    /// Cell containing `x`, or `None` outside the domain. Points on the upper
    /// boundary map to the last cell.
    pub fn locate_cell(&self, x: Vec3) -> Option<[usize; 3]> {
        let mut c = [0usize; 3];
        for a in 0..3 {
            let s = (x[a] - self.origin[a]) / self.cell_size[a];
            if !(s >= 0.0) {
                return None;
            }
            let upper = self.origin[a] + self.dims[a] as f64 * self.cell_size[a];
            if x[a] > upper {
                return None;
            }
            c[a] = (s.floor() as usize).min(self.dims[a] - 1);
        }
        Some(c)
    }

    fn block(&self) -> [usize; 3] {
        [
            self.dims[0] / self.partition_grid[0],
            self.dims[1] / self.partition_grid[1],
            self.dims[2] / self.partition_grid[2],
        ]
    }

    /// Partition-grid coordinates of a partition id (x fastest).
    pub fn partition_coords(&self, id: usize) -> [usize; 3] {
        let g = self.partition_grid;
        [id % g[0], (id / g[0]) % g[1], id / (g[0] * g[1])]
    }

    pub fn partition_id_at(&self, p: [usize; 3]) -> usize {
        let g = self.partition_grid;
        p[0] + g[0] * (p[1] + g[1] * p[2])
    }

    pub fn partition_of_cell(&self, c: [usize; 3]) -> usize {
        let b = self.block();
        self.partition_id_at([c[0] / b[0], c[1] / b[1], c[2] / b[2]])
    }

    pub fn partition(&self, id: usize) -> Result<EulerianPartition, MeshError> {
        if id >= self.n_partitions() {
            return Err(MeshError::UnknownPartition(id));
        }
        let p = self.partition_coords(id);
        let b = self.block();
        let lo = [p[0] * b[0], p[1] * b[1], p[2] * b[2]];
        let hi = [lo[0] + b[0] - 1, lo[1] + b[1] - 1, lo[2] + b[2] - 1];
        let cell_range = CellBox::new(lo, hi);
        Ok(EulerianPartition {
            partition_id: id,
            cell_range,
            spatial_extent: self.box_extent(&cell_range),
        })
    }

    pub fn partitions(&self) -> Vec<EulerianPartition> {
        (0..self.n_partitions())
            .map(|id| self.partition(id).expect("id in range"))
            .collect()
    }
}
