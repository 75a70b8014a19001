use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;

use super::message::{Actor, Message, NodeId, NodeReport, Outbox};
use super::skew::{lock, SharedSkew};
use crate::error::{RuntimeError, TrackingError};
use crate::fields::{EulerianState, SourceFields, SourceTotals};
use crate::geom::{BoundingBox, Vec3};
use crate::lagrangian::{advance_chunk, chunk_momentum, ChunkAdvance, ParticleChunk, TrackingParams, TrackingStats};
use crate::mesh::{EulerianPartition, StructuredMesh};
use crate::partitioning::{compute_bbox, expand_partition_ring, grow_chunk_coverage, ChunkPlacement};
use crate::physics::FluidProperties;

/// Everything a worker needs to advance its chunks, shared with the
/// sequential reference.
#[derive(Debug, Clone)]
pub struct TrackingContext {
    pub mesh: StructuredMesh,
    pub partitions: Vec<EulerianPartition>,
    pub params: TrackingParams,
    pub props: FluidProperties,
}

/// A Lagrangian step in progress: the slices received so far and the chunks
/// already advanced.
pub(crate) struct StepProgress {
    pub step: u64,
    pub slices: BTreeMap<usize, EulerianState>,
    next_chunk: usize,
    advances: Vec<(BTreeSet<usize>, ChunkAdvance)>,
    pub late_requests: usize,
}

pub(crate) enum Progress {
    Done,
    NeedSlices(BTreeSet<usize>),
}

impl StepProgress {
    pub fn new(step: u64, slices: impl IntoIterator<Item = (usize, EulerianState)>) -> Self {
        StepProgress {
            step,
            slices: slices.into_iter().collect(),
            next_chunk: 0,
            advances: Vec::new(),
            late_requests: 0,
        }
    }

    /// Advances chunks in order until done or until a chunk needs slices not
    /// held yet. A chunk that leaves its coverage is restored and retried
    /// with one more ring of partitions.
    pub fn advance(
        &mut self,
        chunks: &[ParticleChunk],
        placements: &mut [ChunkPlacement],
        ctx: &TrackingContext,
    ) -> Result<Progress, RuntimeError> {
        while self.next_chunk < chunks.len() {
            let c = self.next_chunk;
            let req = placements[c].required_partitions.clone();
            let missing: BTreeSet<usize> = req.iter().filter(|p| !self.slices.contains_key(p)).copied().collect();
            if !missing.is_empty() {
                self.late_requests += 1;
                return Ok(Progress::NeedSlices(missing));
            }
            let states: Vec<&EulerianState> = req.iter().map(|p| &self.slices[p]).collect();
            match advance_chunk(&chunks[c], &states, &ctx.mesh, &ctx.params, &ctx.props) {
                Ok(a) => {
                    self.advances.push((req, a));
                    self.next_chunk += 1;
                }
                Err(TrackingError::CoverageViolation { chunk, parcel, position }) => {
                    let grown = expand_partition_ring(&ctx.mesh, &req);
                    if grown == req {
                        return Err(TrackingError::CoverageViolation { chunk, parcel, position }.into());
                    }
                    placements[c].required_partitions = grown;
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Progress::Done)
    }

    /// Sums per-partition sources over chunks (chunk order), installs the
    /// advanced chunks and recomputes their coverage for the next step.
    pub fn finish(
        self,
        chunks: &mut [ParticleChunk],
        placements: &mut [ChunkPlacement],
        ctx: &TrackingContext,
    ) -> FinishedStep {
        let mut sources = Vec::with_capacity(self.slices.len());
        for (&p, slice) in &self.slices {
            let mut acc = SourceFields::zeros(slice.cells, self.step);
            for (req, adv) in &self.advances {
                if let Some(i) = req.iter().position(|&q| q == p) {
                    acc.add_assign_checked(&adv.sources[i]).expect("slice box matches");
                }
            }
            sources.push((p, acc));
        }
        let mut stats = TrackingStats::default();
        for (c, (_, adv)) in self.advances.into_iter().enumerate() {
            stats.merge(&adv.stats);
            chunks[c] = adv.chunk;
            chunks[c].bbox = compute_bbox(&chunks[c], ctx.params.bbox_margin);
            placements[c] = grow_chunk_coverage(&placements[c], chunks[c].bbox.as_ref(), &ctx.partitions);
        }
        FinishedStep { sources, stats }
    }
}

pub(crate) struct FinishedStep {
    pub sources: Vec<(usize, SourceFields)>,
    pub stats: TrackingStats,
}

pub(crate) fn union_required(placements: &[ChunkPlacement]) -> BTreeSet<usize> {
    placements.iter().flat_map(|p| p.required_partitions.iter().copied()).collect()
}

/// Source totals of one step as impulses (rate x volume x dt).
pub(crate) fn impulse(sources: &[(usize, SourceFields)], cell_volume: f64, dt: f64) -> SourceTotals {
    let mut t = SourceTotals::default();
    for (_, s) in sources {
        t += s.totals();
    }
    t.scaled(cell_volume * dt)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnapshotRow {
    pub step: u64,
    pub chunk_id: usize,
    pub index: usize,
    pub id: u64,
    pub position: Vec3,
    pub diameter: f64,
    pub temperature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SnapshotSpec {
    /// Snapshot after every `every` steps; 0 means only after the last one.
    pub every: u64,
    /// Every `stride`-th parcel of each chunk; 0 disables snapshots.
    pub stride: usize,
}

pub fn snapshot_rows(step: u64, chunks: &[ParticleChunk], stride: usize) -> Vec<SnapshotRow> {
    let stride = stride.max(1);
    let mut rows = Vec::new();
    for c in chunks {
        for i in (0..c.count()).step_by(stride) {
            rows.push(SnapshotRow {
                step,
                chunk_id: c.chunk_id,
                index: i,
                id: c.ids[i],
                position: c.position[i],
                diameter: c.diameter[i],
                temperature: c.temperature[i],
            });
        }
    }
    rows
}

pub(crate) fn wants_snapshot(spec: &SnapshotSpec, step: u64, n_steps: u64) -> bool {
    spec.stride > 0 && (step + 1 == n_steps || (spec.every > 0 && (step + 1).is_multiple_of(spec.every)))
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkerStepLog {
    pub step: u64,
    pub compute_s: f64,
    pub momentum: Vec3,
    pub water_mass: f64,
    pub stats: TrackingStats,
    /// True source impulse handed to the fluid side this step.
    pub impulse: SourceTotals,
    pub late_requests: usize,
}

pub struct WorkerReport {
    pub worker: usize,
    pub chunks: Vec<ParticleChunk>,
    pub placements: Vec<ChunkPlacement>,
    pub logs: Vec<WorkerStepLog>,
    pub snapshots: Vec<SnapshotRow>,
}

pub struct LagrangeWorker {
    worker: usize,
    host: usize,
    n_steps: u64,
    ctx: TrackingContext,
    chunks: Vec<ParticleChunk>,
    placements: Vec<ChunkPlacement>,
    snapshot: SnapshotSpec,
    skew: SharedSkew,
    /// Next step to compute.
    next: u64,
    current: Option<StepProgress>,
    compute_s: f64,
    logs: Vec<WorkerStepLog>,
    snapshots: Vec<SnapshotRow>,
}

impl LagrangeWorker {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        worker: usize,
        host: usize,
        n_steps: u64,
        ctx: TrackingContext,
        chunks: Vec<ParticleChunk>,
        placements: Vec<ChunkPlacement>,
        snapshot: SnapshotSpec,
        skew: SharedSkew,
    ) -> Self {
        LagrangeWorker {
            worker,
            host,
            n_steps,
            ctx,
            chunks,
            placements,
            snapshot,
            skew,
            next: 0,
            current: None,
            compute_s: 0.0,
            logs: Vec::new(),
            snapshots: Vec::new(),
        }
    }

    fn boxes(&self) -> Vec<Option<BoundingBox>> {
        self.chunks.iter().map(|c| c.bbox).collect()
    }

    fn run_current(&mut self, out: &mut Outbox) -> Result<(), RuntimeError> {
        let t = Instant::now();
        let mut progress = self.current.take().expect("a step in progress");
        let state = progress.advance(&self.chunks, &mut self.placements, &self.ctx)?;
        self.compute_s += t.elapsed().as_secs_f64();
        match state {
            Progress::NeedSlices(partitions) => {
                out.send(
                    NodeId::Comm(self.host),
                    Message::LateRequest {
                        step: progress.step,
                        partitions,
                    },
                );
                self.current = Some(progress);
            }
            Progress::Done => {
                let t = Instant::now();
                let step = progress.step;
                let late_requests = progress.late_requests;
                let done = progress.finish(&mut self.chunks, &mut self.placements, &self.ctx);
                let mut momentum = Vec3::ZERO;
                let mut water = 0.0;
                for c in &self.chunks {
                    momentum += chunk_momentum(c, &self.ctx.props);
                    water += c.water_mass(self.ctx.props.rho_p);
                }
                self.compute_s += t.elapsed().as_secs_f64();
                self.logs.push(WorkerStepLog {
                    step,
                    compute_s: self.compute_s,
                    momentum,
                    water_mass: water,
                    stats: done.stats,
                    impulse: impulse(&done.sources, self.ctx.mesh.cell_volume(), self.ctx.params.dt),
                    late_requests,
                });
                if wants_snapshot(&self.snapshot, step, self.n_steps) {
                    self.snapshots.extend(snapshot_rows(step, &self.chunks, self.snapshot.stride));
                }
                self.next = step + 1;
                lock(&self.skew).set_lagrange(self.worker, self.next)?;
                let next_required = if self.next < self.n_steps {
                    union_required(&self.placements)
                } else {
                    BTreeSet::new()
                };
                out.send(
                    NodeId::Comm(self.host),
                    Message::StepDone {
                        step,
                        sources: done.sources,
                        next_required,
                        boxes: self.boxes(),
                        stats: done.stats,
                    },
                );
            }
        }
        Ok(())
    }
}

impl Actor for LagrangeWorker {
    fn id(&self) -> NodeId {
        NodeId::Worker(self.worker)
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), RuntimeError> {
        let required = if self.n_steps > 0 {
            union_required(&self.placements)
        } else {
            BTreeSet::new()
        };
        out.send(
            NodeId::Comm(self.host),
            Message::BboxAnnounce {
                epoch: 0,
                boxes: self.boxes(),
                required,
            },
        );
        Ok(())
    }

    fn handle(&mut self, from: NodeId, msg: Message, out: &mut Outbox) -> Result<(), RuntimeError> {
        if from != NodeId::Comm(self.host) {
            return Err(RuntimeError::Protocol(format!(
                "worker {} got {} from {from}, not its host",
                self.worker,
                msg.kind()
            )));
        }
        match msg {
            Message::StateBundle { step, slices } => {
                if step != self.next || self.current.is_some() {
                    return Err(RuntimeError::Protocol(format!(
                        "worker {} got bundle for step {step} while at step {}",
                        self.worker, self.next
                    )));
                }
                self.compute_s = 0.0;
                self.current = Some(StepProgress::new(step, slices));
                self.run_current(out)
            }
            Message::LateBundle { step, slices } => {
                let cur = self
                    .current
                    .as_mut()
                    .filter(|c| c.step == step)
                    .ok_or_else(|| RuntimeError::Protocol(format!("unexpected late bundle for step {step}")))?;
                cur.slices.extend(slices);
                self.run_current(out)
            }
            other => Err(RuntimeError::Protocol(format!(
                "worker {} cannot handle {}",
                self.worker,
                other.kind()
            ))),
        }
    }

    fn is_done(&self) -> bool {
        self.next >= self.n_steps
    }

    fn status(&self) -> String {
        format!(
            "worker {} next step {}/{}, in progress {}",
            self.worker,
            self.next,
            self.n_steps,
            self.current.as_ref().map_or("none".to_string(), |c| format!(
                "step {} with {} slices",
                c.step,
                c.slices.len()
            ))
        )
    }

    fn into_report(self: Box<Self>) -> NodeReport {
        NodeReport::Worker(Box::new(WorkerReport {
            worker: self.worker,
            chunks: self.chunks,
            placements: self.placements,
            logs: self.logs,
            snapshots: self.snapshots,
        }))
    }
}
