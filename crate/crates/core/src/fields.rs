//! Cell-centred field containers exchanged between the two phases.

use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::geom::Vec3;
use crate::mesh::{CellBox, StructuredMesh};
use crate::physics::{FluidProperties, FluidSample};

/// Fluid fields over a rectangular cell box (a partition, a mosaic of
/// partitions, or the whole mesh) at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EulerianState {
    pub step_index: u64,
    pub cells: CellBox,
    pub velocity: Vec<Vec3>,
    /// Kinematic pressure p / rho_f.
    pub pressure: Vec<f64>,
    pub temperature: Vec<f64>,
    pub vapor_density: Vec<f64>,
}

impl EulerianState {
    pub fn uniform(cells: CellBox, velocity: Vec3, temperature: f64, vapor_density: f64) -> Self {
        let n = cells.len();
        EulerianState {
            step_index: 0,
            cells,
            velocity: vec![velocity; n],
            pressure: vec![0.0; n],
            temperature: vec![temperature; n],
            vapor_density: vec![vapor_density; n],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn check_sizes(&self) -> Result<(), FieldError> {
        let n = self.cells.len();
        if self.velocity.len() != n
            || self.pressure.len() != n
            || self.temperature.len() != n
            || self.vapor_density.len() != n
        {
            return Err(FieldError::SizeMismatch(format!(
                "state arrays must all have {n} entries"
            )));
        }
        Ok(())
    }

    /// Copies out the sub-box `sub`.
    pub fn extract(&self, sub: &CellBox) -> Result<EulerianState, FieldError> {
        if !self.cells.contains_box(sub) {
            return Err(FieldError::SizeMismatch(format!(
                "{sub:?} not inside {:?}",
                self.cells
            )));
        }
        let n = sub.len();
        let mut out = EulerianState {
            step_index: self.step_index,
            cells: *sub,
            velocity: Vec::with_capacity(n),
            pressure: Vec::with_capacity(n),
            temperature: Vec::with_capacity(n),
            vapor_density: Vec::with_capacity(n),
        };
        for c in sub.iter() {
            let i = self.cells.local_index(c);
            out.velocity.push(self.velocity[i]);
            out.pressure.push(self.pressure[i]);
            out.temperature.push(self.temperature[i]);
            out.vapor_density.push(self.vapor_density[i]);
        }
        Ok(out)
    }

    /// Joins disjoint slices that exactly tile their common bounding cell box.
    pub fn mosaic(parts: &[&EulerianState]) -> Result<EulerianState, FieldError> {
        let first = parts
            .first()
            .ok_or_else(|| FieldError::IncompleteMosaic("no slices".into()))?;
        if parts.len() == 1 {
            return Ok((*first).clone());
        }
        let cells = parts
            .iter()
            .skip(1)
            .fold(first.cells, |acc, p| acc.union(&p.cells));
        let covered: usize = parts.iter().map(|p| p.cells.len()).sum();
        if covered != cells.len() {
            return Err(FieldError::IncompleteMosaic(format!(
                "{covered} cells supplied for a box of {}",
                cells.len()
            )));
        }
        let mut out = EulerianState::uniform(cells, Vec3::ZERO, 0.0, 0.0);
        out.step_index = first.step_index;
        for p in parts {
            p.check_sizes()?;
            for (n, c) in p.cells.iter().enumerate() {
                let i = cells.local_index(c);
                out.velocity[i] = p.velocity[n];
                out.pressure[i] = p.pressure[n];
                out.temperature[i] = p.temperature[n];
                out.vapor_density[i] = p.vapor_density[n];
            }
        }
        Ok(out)
    }

    /// Trilinear sample from cell-centred values. Stencils that would reach
    /// past the stored box are clamped to its edge cells, so the result is
    /// always a convex combination of stored values.
    pub fn interpolate(&self, mesh: &StructuredMesh, x: Vec3) -> Result<FluidSample, FieldError> {
        let extent = mesh.box_extent(&self.cells);
        if !extent.contains(x) {
            return Err(FieldError::OutOfExtent { point: x });
        }
        let dims = self.cells.dims();
        let mut idx = [[0usize; 2]; 3];
        let mut w = [[1.0f64, 0.0]; 3];
        for a in 0..3 {
            let n = dims[a];
            if n == 1 {
                continue;
            }
            let s = (x[a] - mesh.origin[a]) / mesh.cell_size[a] - 0.5 - self.cells.lo[a] as f64;
            let i0 = (s.floor().max(0.0) as usize).min(n - 2);
            let t = (s - i0 as f64).clamp(0.0, 1.0);
            idx[a] = [i0, i0 + 1];
            w[a] = [1.0 - t, t];
        }
        let mut u = Vec3::ZERO;
        let mut t_f = 0.0;
        let mut rho_v = 0.0;
        for (ck, wk) in idx[2].iter().zip(w[2]) {
            if wk == 0.0 {
                continue;
            }
            for (cj, wj) in idx[1].iter().zip(w[1]) {
                if wj == 0.0 {
                    continue;
                }
                for (ci, wi) in idx[0].iter().zip(w[0]) {
                    if wi == 0.0 {
                        continue;
                    }
                    let weight = wi * wj * wk;
                    let l = ci + dims[0] * (cj + dims[1] * ck);
                    u += self.velocity[l] * weight;
                    t_f += self.temperature[l] * weight;
                    rho_v += self.vapor_density[l] * weight;
                }
            }
        }
        Ok(FluidSample {
            u_f: u,
            t_f,
            rho_v: rho_v.max(0.0),
        })
    }
}

/// Per-cell Lagrangian source rates, fluid side: momentum [N/m^3],
/// energy [W/m^3], vapor [kg/(m^3 s)].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceFields {
    pub step_index: u64,
    pub cells: CellBox,
    pub momentum: Vec<Vec3>,
    pub energy: Vec<f64>,
    pub vapor: Vec<f64>,
}

/// Cell sums of a `SourceFields`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SourceTotals {
    pub momentum: Vec3,
    pub energy: f64,
    pub vapor: f64,
}

impl SourceTotals {
    pub fn scaled(&self, s: f64) -> SourceTotals {
        SourceTotals {
            momentum: self.momentum * s,
            energy: self.energy * s,
            vapor: self.vapor * s,
        }
    }
}

impl AddAssign for SourceTotals {
    fn add_assign(&mut self, o: SourceTotals) {
        self.momentum += o.momentum;
        self.energy += o.energy;
        self.vapor += o.vapor;
    }
}

impl SourceFields {
    pub fn zeros(cells: CellBox, step_index: u64) -> Self {
        let n = cells.len();
        SourceFields {
            step_index,
            cells,
            momentum: vec![Vec3::ZERO; n],
            energy: vec![0.0; n],
            vapor: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_same(&self, other: &SourceFields) -> Result<(), FieldError> {
        if self.cells != other.cells {
            return Err(FieldError::SizeMismatch(format!(
                "source boxes differ: {:?} vs {:?}",
                self.cells, other.cells
            )));
        }
        Ok(())
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &SourceFields) -> Result<(), FieldError> {
        self.check_same(other)?;
        for (m, o) in self.momentum.iter_mut().zip(&other.momentum) {
            *m += *o * a;
        }
        for (e, o) in self.energy.iter_mut().zip(&other.energy) {
            *e += a * o;
        }
        for (v, o) in self.vapor.iter_mut().zip(&other.vapor) {
            *v += a * o;
        }
        Ok(())
    }

    pub fn add_assign_checked(&mut self, other: &SourceFields) -> Result<(), FieldError> {
        self.check_same(other)?;
        for (m, o) in self.momentum.iter_mut().zip(&other.momentum) {
            *m += *o;
        }
        for (e, o) in self.energy.iter_mut().zip(&other.energy) {
            *e += o;
        }
        for (v, o) in self.vapor.iter_mut().zip(&other.vapor) {
            *v += o;
        }
        Ok(())
    }

    pub fn sub_assign_checked(&mut self, other: &SourceFields) -> Result<(), FieldError> {
        self.check_same(other)?;
        for (m, o) in self.momentum.iter_mut().zip(&other.momentum) {
            *m -= *o;
        }
        for (e, o) in self.energy.iter_mut().zip(&other.energy) {
            *e -= o;
        }
        for (v, o) in self.vapor.iter_mut().zip(&other.vapor) {
            *v -= o;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for m in &mut self.momentum {
            *m = *m * s;
        }
        for e in &mut self.energy {
            *e *= s;
        }
        for v in &mut self.vapor {
            *v *= s;
        }
    }

    pub fn scaled(&self, s: f64) -> SourceFields {
        let mut out = self.clone();
        out.scale(s);
        out
    }

    pub fn totals(&self) -> SourceTotals {
        let mut t = SourceTotals::default();
        for m in &self.momentum {
            t.momentum += *m;
        }
        t.energy = self.energy.iter().sum();
        t.vapor = self.vapor.iter().sum();
        t
    }

    /// Largest absolute component over all cells and fields.
    pub fn max_abs(&self) -> f64 {
        let m = self
            .momentum
            .iter()
            .flat_map(|v| v.0)
            .fold(0.0f64, |acc, x| acc.max(x.abs()));
        let e = self.energy.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        let v = self.vapor.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        m.max(e).max(v)
    }

    pub fn is_zero(&self) -> bool {
        self.max_abs() == 0.0
    }

    pub fn extract(&self, sub: &CellBox) -> Result<SourceFields, FieldError> {
        if !self.cells.contains_box(sub) {
            return Err(FieldError::SizeMismatch(format!(
                "{sub:?} not inside {:?}",
                self.cells
            )));
        }
        let mut out = SourceFields::zeros(*sub, self.step_index);
        for (n, c) in sub.iter().enumerate() {
            let i = self.cells.local_index(c);
            out.momentum[n] = self.momentum[i];
            out.energy[n] = self.energy[i];
            out.vapor[n] = self.vapor[i];
        }
        Ok(out)
    }

    /// Writes `part` into the matching cells of `self`.
    pub fn insert(&mut self, part: &SourceFields) -> Result<(), FieldError> {
        if !self.cells.contains_box(&part.cells) {
            return Err(FieldError::SizeMismatch(format!(
                "{:?} not inside {:?}",
                part.cells, self.cells
            )));
        }
        for (n, c) in part.cells.iter().enumerate() {
            let i = self.cells.local_index(c);
            self.momentum[i] = part.momentum[n];
            self.energy[i] = part.energy[n];
            self.vapor[i] = part.vapor[n];
        }
        Ok(())
    }
}

/// Explicit source incorporation on cell-centred fields:
/// u += dt S_u / rho_f, T += dt S_e / (rho_f c_p,f), rho_v += dt S_rho_v.
pub fn apply_sources(
    state: &mut EulerianState,
    sources: &SourceFields,
    dt: f64,
    props: &FluidProperties,
) -> Result<(), FieldError> {
    state.check_sizes()?;
    if state.cells != sources.cells {
        return Err(FieldError::SizeMismatch(format!(
            "state box {:?} vs source box {:?}",
            state.cells, sources.cells
        )));
    }
    let ku = dt / props.rho_f;
    let kt = dt / (props.rho_f * props.c_p_f);
    for i in 0..state.len() {
        state.velocity[i] += sources.momentum[i] * ku;
        state.temperature[i] += sources.energy[i] * kt;
        state.vapor_density[i] += sources.vapor[i] * dt;
    }
    Ok(())
}
