//! Lagrangian chunk placement: bounding boxes, overlap queries against the
//! Eulerian partitions, and Hilbert-ordered initialization.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::MeshError;
use crate::geom::{BoundingBox, Vec3};
use crate::lagrangian::ParticleChunk;
use crate::mesh::{EulerianPartition, StructuredMesh};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPlacement {
    pub chunk_id: usize,
    pub assigned_worker: usize,
    pub required_partitions: BTreeSet<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlacementKind {
    Uniform,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DiameterSpec {
    Constant { value: f64 },
    Uniform { min: f64, max: f64 },
}

/// How parcels are seeded at start-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    pub count: usize,
    pub region: BoundingBox,
    pub placement: PlacementKind,
    pub diameter: DiameterSpec,
    pub multiplicity: f64,
    pub temperature: f64,
    pub velocity: Vec3,
    /// Bounding-box inflation in units of the cell size.
    #[serde(default = "default_margin")]
    pub bbox_margin_cells: f64,
}

fn default_margin() -> f64 {
    1.0
}

impl InitSpec {
    pub fn margin(&self, mesh: &StructuredMesh) -> Vec3 {
        mesh.cell_size * self.bbox_margin_cells
    }
}

/// Component-wise extent of the chunk's positions inflated by `margin`;
/// `None` for an empty chunk.
pub fn compute_bbox(chunk: &ParticleChunk, margin: Vec3) -> Option<BoundingBox> {
    let first = *chunk.position.first()?;
    let mut b = BoundingBox::point(first);
    for &x in &chunk.position[1..] {
        b.expand_to(x);
    }
    Some(b.inflate(margin))
}

/// Ids of the partitions whose extent touches `bbox`.
pub fn overlap_query(bbox: &BoundingBox, partitions: &[EulerianPartition]) -> BTreeSet<usize> {
    partitions
        .iter()
        .filter(|p| p.spatial_extent.intersects(bbox))
        .map(|p| p.partition_id)
        .collect()
}

pub fn grow_chunk_coverage(
    placement: &ChunkPlacement,
    new_bbox: Option<&BoundingBox>,
    partitions: &[EulerianPartition],
) -> ChunkPlacement {
    ChunkPlacement {
        chunk_id: placement.chunk_id,
        assigned_worker: placement.assigned_worker,
        required_partitions: new_bbox
            .map(|b| overlap_query(b, partitions))
            .unwrap_or_default(),
    }
}

/// Partitions inside the partition-grid box of `set` grown by one ring.
pub fn expand_partition_ring(mesh: &StructuredMesh, set: &BTreeSet<usize>) -> BTreeSet<usize> {
    if set.is_empty() {
        return (0..mesh.n_partitions()).collect();
    }
    let g = mesh.partition_grid;
    let mut lo = [usize::MAX; 3];
    let mut hi = [0usize; 3];
    for &id in set {
        let c = mesh.partition_coords(id);
        for a in 0..3 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let mut out = BTreeSet::new();
    for k in lo[2].saturating_sub(1)..=(hi[2] + 1).min(g[2] - 1) {
        for j in lo[1].saturating_sub(1)..=(hi[1] + 1).min(g[1] - 1) {
            for i in lo[0].saturating_sub(1)..=(hi[0] + 1).min(g[0] - 1) {
                out.insert(mesh.partition_id_at([i, j, k]));
            }
        }
    }
    out
}

/// Sum over chunk pairs of their bounding-box intersection volume. Exposed
/// as a load-balance indicator; nothing acts on it.
pub fn overlap_volume(chunks: &[ParticleChunk]) -> f64 {
    let mut v = 0.0;
    for (i, a) in chunks.iter().enumerate() {
        for b in &chunks[i + 1..] {
            if let (Some(x), Some(y)) = (&a.bbox, &b.bbox) {
                if let Some(z) = x.intersection(y) {
                    v += z.volume();
                }
            }
        }
    }
    v
}

/// Hilbert index of an n-dimensional point with `order` bits per axis
/// (Skilling's transpose form: undo excess work, Gray-encode, interleave).
pub fn hilbert_index_nd(coords: &[u64], order: u32) -> Result<u64, MeshError> {
    let n = coords.len();
    if order == 0 {
        if coords.iter().any(|&c| c != 0) {
            return Err(MeshError::HilbertOutOfRange {
                coords: coords.to_vec(),
                order,
            });
        }
        return Ok(0);
    }
    if order as usize * n > 64 || coords.iter().any(|&c| c >> order != 0) {
        return Err(MeshError::HilbertOutOfRange {
            coords: coords.to_vec(),
            order,
        });
    }
    let mut x = coords.to_vec();
    let m = 1u64 << (order - 1);
    let mut q = m;
    while q > 1 {
        let p = q - 1;
        for i in 0..n {
            if x[i] & q != 0 {
                x[0] ^= p;
            } else {
                let t = (x[0] ^ x[i]) & p;
                x[0] ^= t;
                x[i] ^= t;
            }
        }
        q >>= 1;
    }
    for i in 1..n {
        x[i] ^= x[i - 1];
    }
    let mut t = 0;
    let mut q = m;
    while q > 1 {
        if x[n - 1] & q != 0 {
            t ^= q - 1;
        }
        q >>= 1;
    }
    for xi in x.iter_mut() {
        *xi ^= t;
    }
    let mut h = 0u64;
    for bit in (0..order).rev() {
        for xi in &x {
            h = (h << 1) | ((xi >> bit) & 1);
        }
    }
    Ok(h)
}

pub fn hilbert_index(cell: [u64; 3], order: u32) -> Result<u64, MeshError> {
    hilbert_index_nd(&cell, order)
}

/// Bits per axis needed to cover the mesh.
pub fn hilbert_order(mesh: &StructuredMesh) -> u32 {
    let max = *mesh.dims.iter().max().unwrap_or(&1) as u64;
    let mut order = 0;
    while (1u64 << order) < max {
        order += 1;
    }
    order.max(1)
}

/// Chunk sizes for a contiguous split of `n` items into `k` slices.
pub fn split_sizes(n: usize, k: usize) -> Vec<usize> {
    let base = n / k;
    let extra = n % k;
    (0..k).map(|i| base + usize::from(i < extra)).collect()
}

fn draw_positions(init: &InitSpec, rng: &mut ChaCha8Rng) -> Vec<Vec3> {
    let r = init.region;
    match init.placement {
        PlacementKind::Uniform => (0..init.count)
            .map(|_| {
                Vec3::new(
                    rng.gen_range(r.lo[0]..=r.hi[0]),
                    rng.gen_range(r.lo[1]..=r.hi[1]),
                    rng.gen_range(r.lo[2]..=r.hi[2]),
                )
            })
            .collect(),
        PlacementKind::Lattice => {
            let mut k = 1usize;
            while k * k * k < init.count {
                k += 1;
            }
            let ext = r.extent();
            (0..init.count)
                .map(|n| {
                    let (i, j, l) = (n % k, (n / k) % k, n / (k * k));
                    Vec3::new(
                        r.lo[0] + (i as f64 + 0.5) / k as f64 * ext[0],
                        r.lo[1] + (j as f64 + 0.5) / k as f64 * ext[1],
                        r.lo[2] + (l as f64 + 0.5) / k as f64 * ext[2],
                    )
                })
                .collect()
        }
    }
}

fn hilbert_key(mesh: &StructuredMesh, order: u32, x: Vec3) -> u64 {
    let side = (1u64 << order) - 1;
    let mut c = [0u64; 3];
    for a in 0..3 {
        let s = ((x[a] - mesh.origin[a]) / mesh.cell_size[a]).floor();
        let s = if s.is_finite() { s.max(0.0) as u64 } else { 0 };
        c[a] = s.min(mesh.dims[a] as u64 - 1).min(side);
    }
    hilbert_index(c, order).expect("clamped into range")
}

/// Draws `init.count` parcels, orders them along the Hilbert curve of their
/// containing cells and cuts the sequence into `n_chunks` contiguous slices.
/// Chunk `c` is assigned to worker `c / chunks_per_worker`.
pub fn initialize_chunks(
    init: &InitSpec,
    n_chunks: usize,
    chunks_per_worker: usize,
    mesh: &StructuredMesh,
    seed: u64,
) -> (Vec<ParticleChunk>, Vec<ChunkPlacement>) {
    assert!(n_chunks >= 1 && chunks_per_worker >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = draw_positions(init, &mut rng);
    let diameters: Vec<f64> = (0..init.count)
        .map(|_| match init.diameter {
            DiameterSpec::Constant { value } => value,
            DiameterSpec::Uniform { min, max } => rng.gen_range(min..=max),
        })
        .collect();
    let order = hilbert_order(mesh);
    let mut keyed: Vec<(u64, usize)> = positions
        .iter()
        .enumerate()
        .map(|(i, &x)| (hilbert_key(mesh, order, x), i))
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0).then_with(|| {
            let (pa, pb) = (positions[a.1], positions[b.1]);
            pa[0].total_cmp(&pb[0])
                .then(pa[1].total_cmp(&pb[1]))
                .then(pa[2].total_cmp(&pb[2]))
                .then(a.1.cmp(&b.1))
        })
    });
    let order_ids: Vec<usize> = keyed.into_iter().map(|(_, i)| i).collect();
    let margin = init.margin(mesh);
    build_chunks(init, &order_ids, &positions, &diameters, n_chunks, chunks_per_worker, mesh, margin)
}

/// Cuts an ordered particle sequence into contiguous chunks.
#[allow(clippy::too_many_arguments)]
pub fn build_chunks(
    init: &InitSpec,
    order: &[usize],
    positions: &[Vec3],
    diameters: &[f64],
    n_chunks: usize,
    chunks_per_worker: usize,
    mesh: &StructuredMesh,
    margin: Vec3,
) -> (Vec<ParticleChunk>, Vec<ChunkPlacement>) {
    let partitions = mesh.partitions();
    let mut chunks = Vec::with_capacity(n_chunks);
    let mut placements = Vec::with_capacity(n_chunks);
    let mut it = order.iter();
    for (c, size) in split_sizes(order.len(), n_chunks).into_iter().enumerate() {
        let mut chunk = ParticleChunk::empty(c);
        for &i in it.by_ref().take(size) {
            chunk.push(
                i as u64,
                positions[i],
                init.velocity,
                diameters[i],
                init.temperature,
                init.multiplicity,
            );
        }
        chunk.bbox = compute_bbox(&chunk, margin);
        let placement = ChunkPlacement {
            chunk_id: c,
            assigned_worker: c / chunks_per_worker,
            required_partitions: chunk
                .bbox
                .map(|b| overlap_query(&b, &partitions))
                .unwrap_or_default(),
        };
        chunks.push(chunk);
        placements.push(placement);
    }
    (chunks, placements)
}
