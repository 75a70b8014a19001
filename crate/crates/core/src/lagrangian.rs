//! Structure-of-arrays parcel chunks and the sub-stepped tracking kernel.

use serde::{Deserialize, Serialize};

use crate::error::{PhysicsError, TrackingError};
use crate::fields::{EulerianState, SourceFields};
use crate::geom::{BoundingBox, Vec3};
use crate::mesh::StructuredMesh;
use crate::partitioning::compute_bbox;
use crate::physics::{
    diameter_from_mass, drag_factor, heat_transfer_rate, mass_transfer_rate, particle_mass,
    particle_reynolds, stokes_time, FluidProperties,
};

/// Parcels of one chunk; every per-parcel array has the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleChunk {
    pub chunk_id: usize,
    pub ids: Vec<u64>,
    pub position: Vec<Vec3>,
    pub velocity: Vec<Vec3>,
    pub diameter: Vec<f64>,
    pub temperature: Vec<f64>,
    pub multiplicity: Vec<f64>,
    pub bbox: Option<BoundingBox>,
}

impl ParticleChunk {
    pub fn empty(chunk_id: usize) -> Self {
        ParticleChunk {
            chunk_id,
            ids: Vec::new(),
            position: Vec::new(),
            velocity: Vec::new(),
            diameter: Vec::new(),
            temperature: Vec::new(),
            multiplicity: Vec::new(),
            bbox: None,
        }
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn push(&mut self, id: u64, x: Vec3, u: Vec3, d: f64, t: f64, mult: f64) {
        self.ids.push(id);
        self.position.push(x);
        self.velocity.push(u);
        self.diameter.push(d);
        self.temperature.push(t);
        self.multiplicity.push(mult);
    }

    pub fn is_consistent(&self) -> bool {
        let n = self.ids.len();
        self.position.len() == n
            && self.velocity.len() == n
            && self.diameter.len() == n
            && self.temperature.len() == n
            && self.multiplicity.len() == n
    }

    /// Total liquid water mass, multiplicity-weighted.
    pub fn water_mass(&self, rho_p: f64) -> f64 {
        self.diameter
            .iter()
            .zip(&self.multiplicity)
            .map(|(&d, &n)| n * particle_mass(d, rho_p))
            .sum()
    }
}

/// Sum of multiplicity * m_p * u_p.
pub fn chunk_momentum(chunk: &ParticleChunk, props: &FluidProperties) -> Vec3 {
    let mut p = Vec3::ZERO;
    for i in 0..chunk.count() {
        p += chunk.velocity[i] * (chunk.multiplicity[i] * particle_mass(chunk.diameter[i], props.rho_p));
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingParams {
    pub dt: f64,
    pub n_substeps: u32,
    /// Droplet surface saturation.
    pub s_vp: f64,
    pub bbox_margin: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrackingStats {
    pub mass_clamps: u64,
    pub wall_hits: u64,
    /// Momentum given to parcels by wall reflections.
    pub reflection_impulse: Vec3,
}

impl TrackingStats {
    pub fn merge(&mut self, o: &TrackingStats) {
        self.mass_clamps += o.mass_clamps;
        self.wall_hits += o.wall_hits;
        self.reflection_impulse += o.reflection_impulse;
    }
}

#[derive(Debug, Clone)]
pub struct ChunkAdvance {
    pub chunk: ParticleChunk,
    /// One entry per input state, on that state's cell box.
    pub sources: Vec<SourceFields>,
    pub stats: TrackingStats,
}

/// Mirrors `x` and `u` back into `domain`; returns true on a wall hit.
pub fn reflect(x: &mut Vec3, u: &mut Vec3, domain: &BoundingBox) -> bool {
    let mut hit = false;
    for a in 0..3 {
        if x[a] < domain.lo[a] {
            x[a] = 2.0 * domain.lo[a] - x[a];
            u[a] = -u[a];
            hit = true;
        } else if x[a] > domain.hi[a] {
            x[a] = 2.0 * domain.hi[a] - x[a];
            u[a] = -u[a];
            hit = true;
        }
        // a very thin domain could overshoot twice
        x[a] = x[a].clamp(domain.lo[a], domain.hi[a]);
    }
    hit
}

/// Advances every parcel by one Eulerian step of `params.n_substeps`
/// sub-steps and returns fluid-side source rates for each supplied state.
///
/// Velocity is updated semi-implicitly from drag, then position with the new
/// velocity; mass and temperature use explicit Euler. The fluid sample is
/// refreshed once per sub-step. Sources land in the cell holding the parcel
/// at the start of the sub-step.
pub fn advance_chunk(
    chunk: &ParticleChunk,
    states: &[&EulerianState],
    mesh: &StructuredMesh,
    params: &TrackingParams,
    props: &FluidProperties,
) -> Result<ChunkAdvance, TrackingError> {
    let mut out = chunk.clone();
    let mut stats = TrackingStats::default();
    let step_index = states.first().map(|s| s.step_index).unwrap_or(0);
    if chunk.count() == 0 {
        out.bbox = None;
        let sources = states
            .iter()
            .map(|s| SourceFields::zeros(s.cells, step_index))
            .collect();
        return Ok(ChunkAdvance {
            chunk: out,
            sources,
            stats,
        });
    }
    if states.is_empty() {
        return Err(TrackingError::CoverageViolation {
            chunk: chunk.chunk_id,
            parcel: 0,
            position: chunk.position[0],
        });
    }
    let field = EulerianState::mosaic(states)?;
    let extent = mesh.box_extent(&field.cells);
    let domain = mesh.domain_box();
    let mut src = SourceFields::zeros(field.cells, step_index);
    let n_sub = params.n_substeps.max(1);
    let h = params.dt / n_sub as f64;
    let src_scale = 1.0 / (mesh.cell_volume() * params.dt);

    for p in 0..out.count() {
        let mult = out.multiplicity[p];
        let mut x = out.position[p];
        let mut u = out.velocity[p];
        let mut d = out.diameter[p];
        let mut t = out.temperature[p];
        let mut m = particle_mass(d, props.rho_p);
        let floor = 0.01 * m;
        for _ in 0..n_sub {
            if !extent.contains(x) {
                return Err(TrackingError::CoverageViolation {
                    chunk: chunk.chunk_id,
                    parcel: p,
                    position: x,
                });
            }
            let sample = field.interpolate(mesh, x)?;
            let cell = mesh.locate_cell(x).ok_or(TrackingError::CoverageViolation {
                chunk: chunk.chunk_id,
                parcel: p,
                position: x,
            })?;
            let cell = clamp_into(cell, &field.cells.lo, &field.cells.hi);

            let re = particle_reynolds((sample.u_f - u).norm(), d, props.nu_f);
            let k = h * drag_factor(re) / stokes_time(d, props);
            let u_new = (u + sample.u_f * k) / (1.0 + k);

            let dm_dt = mass_transfer_rate(d, &sample, params.s_vp, props)?;
            let mut m_new = m + h * dm_dt;
            if m_new < floor {
                m_new = floor;
                stats.mass_clamps += 1;
            }
            let dm_dt_eff = (m_new - m) / h;
            let t_new = t + h * heat_transfer_rate(d, t, &sample, dm_dt_eff, props);

            let l = field.cells.local_index(cell);
            src.momentum[l] -= (u_new * m_new - u * m) * (mult * src_scale);
            src.energy[l] -= props.c_p_p * (m_new * t_new - m * t) * mult * src_scale;
            src.vapor[l] -= (m_new - m) * mult * src_scale;

            let mut x_new = x + u_new * h;
            let mut u_ref = u_new;
            if reflect(&mut x_new, &mut u_ref, &domain) {
                stats.wall_hits += 1;
                stats.reflection_impulse += (u_ref - u_new) * (mult * m_new);
            }
            x = x_new;
            u = u_ref;
            m = m_new;
            t = t_new;
            d = diameter_from_mass(m, props.rho_p);
        }
        if !(x.is_finite() && u.is_finite() && d.is_finite() && t.is_finite()) {
            return Err(PhysicsError::NonFinite {
                chunk: chunk.chunk_id,
                parcel: p,
            }
            .into());
        }
        out.position[p] = x;
        out.velocity[p] = u;
        out.diameter[p] = d;
        out.temperature[p] = t;
    }
    out.bbox = compute_bbox(&out, params.bbox_margin);
    let sources = states
        .iter()
        .map(|s| src.extract(&s.cells))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChunkAdvance {
        chunk: out,
        sources,
        stats,
    })
}

fn clamp_into(c: [usize; 3], lo: &[usize; 3], hi: &[usize; 3]) -> [usize; 3] {
    [
        c[0].clamp(lo[0], hi[0]),
        c[1].clamp(lo[1], hi[1]),
        c[2].clamp(lo[2], hi[2]),
    ]
}
