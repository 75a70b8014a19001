//! Coupled time stepping over message-passing actors.
//!
//! One communication actor per Eulerian rank owns a partition, one compute
//! actor runs the fluid step, and each Lagrangian worker is hosted by a
//! rank. Actors share nothing but messages and the skew clock; they run on
//! threads or under a seeded deterministic scheduler.

pub mod comm;
pub mod compute;
pub mod consensus;
pub mod message;
mod reference;
pub mod skew;
pub mod transport;
pub mod worker;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, RuntimeError};
use crate::estimator::{extrapolator_registry, Estimator, LedgerRecord};
use crate::fields::{EulerianState, SourceTotals};
use crate::geom::Vec3;
use crate::lagrangian::{chunk_momentum, ParticleChunk, TrackingParams, TrackingStats};
use crate::mesh::StructuredMesh;
use crate::partitioning::ChunkPlacement;
use crate::physics::FluidProperties;
use crate::solver::{backend_registry, fluid_stats, FluidStats, SolverConfig, StepReport};

use comm::RankComm;
use compute::{ComputeStepLog, EulerCompute};
use message::{Actor, NodeReport};
use skew::{lock, SkewClock};
use transport::{scheduler_registry, TraceEvent, TransportOptions};
pub use worker::{SnapshotRow, SnapshotSpec, TrackingContext};
use worker::{LagrangeWorker, WorkerStepLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    /// The fluid waits for the true sources of every step.
    Synchronous,
    /// The fluid runs on estimated sources, corrected one step later.
    Asynchronous,
}

impl FromStr for CouplingMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "sync" | "synchronous" => Ok(CouplingMode::Synchronous),
            "async" | "asynchronous" => Ok(CouplingMode::Asynchronous),
            _ => Err(ConfigError::Invalid {
                key: "mode".into(),
                reason: format!("`{s}` is neither sync nor async"),
            }),
        }
    }
}

impl fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CouplingMode::Synchronous => "sync",
            CouplingMode::Asynchronous => "async",
        })
    }
}

/// A fully built coupled problem.
#[derive(Debug, Clone)]
pub struct CoupledSetup {
    pub mesh: StructuredMesh,
    pub props: FluidProperties,
    pub solver: SolverConfig,
    pub tracking: TrackingParams,
    pub n_steps: u64,
    pub mode: CouplingMode,
    pub extrapolator: String,
    pub chunks: Vec<ParticleChunk>,
    pub placements: Vec<ChunkPlacement>,
    /// Rank hosting each worker.
    pub host_map: Vec<usize>,
    pub snapshot: SnapshotSpec,
}

impl CoupledSetup {
    pub fn n_workers(&self) -> usize {
        self.host_map.len()
    }

    pub fn tracking_context(&self) -> TrackingContext {
        TrackingContext {
            mesh: self.mesh.clone(),
            partitions: self.mesh.partitions(),
            params: self.tracking,
            props: self.props,
        }
    }

    /// Spreads `n_workers` over the ranks as evenly as possible.
    pub fn spread_hosts(n_workers: usize, n_ranks: usize) -> Vec<usize> {
        (0..n_workers).map(|w| w * n_ranks / n_workers.max(1)).collect()
    }

    pub fn validate(&self) -> Result<(), RuntimeError> {
        let n_ranks = self.mesh.n_partitions();
        let bad = |reason: String| {
            RuntimeError::Config(ConfigError::Invalid {
                key: "workers".into(),
                reason,
            })
        };
        if self.host_map.is_empty() {
            return Err(bad("at least one worker is needed".into()));
        }
        let mut seen = BTreeSet::new();
        for (w, &h) in self.host_map.iter().enumerate() {
            if h >= n_ranks {
                return Err(bad(format!("worker {w} hosted on rank {h} of {n_ranks}")));
            }
            if !seen.insert(h) {
                return Err(bad(format!("rank {h} hosts more than one worker")));
            }
        }
        if self.chunks.len() != self.placements.len() {
            return Err(bad("chunks and placements differ in length".into()));
        }
        for p in &self.placements {
            if p.assigned_worker >= self.n_workers() {
                return Err(bad(format!("chunk {} assigned to missing worker {}", p.chunk_id, p.assigned_worker)));
            }
        }
        if !(self.tracking.dt > 0.0) {
            return Err(RuntimeError::Config(ConfigError::Invalid {
                key: "dt".into(),
                reason: "must be > 0".into(),
            }));
        }
        extrapolator_registry().create(&self.extrapolator)?;
        backend_registry().create(&self.solver.backend)?;
        Ok(())
    }

    pub(crate) fn split_by_worker(&self) -> Vec<(Vec<ParticleChunk>, Vec<ChunkPlacement>)> {
        let mut out = vec![(Vec::new(), Vec::new()); self.n_workers()];
        for (c, p) in self.chunks.iter().zip(&self.placements) {
            out[p.assigned_worker].0.push(c.clone());
            out[p.assigned_worker].1.push(p.clone());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Scheduler name from the registry ("live" or "deterministic").
    pub scheduler: String,
    pub transport: TransportOptions,
    /// Zero every wall-clock measurement so outputs depend on inputs only.
    pub zero_timings: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            scheduler: "live".into(),
            transport: TransportOptions::default(),
            zero_timings: false,
        }
    }
}

impl RunOptions {
    pub fn deterministic(seed: u64) -> Self {
        RunOptions {
            scheduler: "deterministic".into(),
            transport: TransportOptions {
                seed,
                max_delay_ticks: 4,
                ..Default::default()
            },
            zero_timings: true,
        }
    }
}

/// Everything recorded for one coupled step `step`, taken after both
/// phases finished it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    /// Slowest worker's compute time for this step.
    pub lagrange_compute_s: f64,
    pub euler_compute_s: f64,
    /// Time between the completion of the previous fluid step and this one.
    pub wall_s: f64,
    /// Largest number of estimated-but-uncorrected steps over the ranks.
    pub backlog_steps: usize,
    /// Worker-partition exchanges summed over the ranks.
    pub partners: usize,
    pub late_requests: usize,
    pub particle_momentum: Vec3,
    pub particle_water: f64,
    pub fluid: FluidStats,
    pub solver: StepReport,
    /// Source impulse the fluid actually applied this step.
    pub delivered: SourceTotals,
    /// Source impulse the particles produced this step.
    pub true_impulse: SourceTotals,
    pub tracking: TrackingStats,
    /// Closure of the water budget relative to the initial water content.
    pub vapor_budget_residual: f64,
    /// Particle momentum change plus delivered impulse minus wall impulse.
    pub momentum_drift: Vec3,
}

pub struct RunArtifacts {
    pub records: Vec<StepRecord>,
    pub initial_fluid: FluidStats,
    pub initial_particle_momentum: Vec3,
    pub initial_particle_water: f64,
    pub final_state: EulerianState,
    pub final_fluid: FluidStats,
    pub chunks: Vec<ParticleChunk>,
    pub placements: Vec<ChunkPlacement>,
    pub snapshots: Vec<SnapshotRow>,
    /// Per-rank ledger after every fluid input.
    pub ledger_history: Vec<Vec<(u64, LedgerRecord)>>,
    /// Per-rank ledger at the end of the run.
    pub ledgers: Vec<LedgerRecord>,
    /// Impulse applied by the final corrector.
    pub flush: Option<SourceTotals>,
    /// Momentum drift after the final corrector.
    pub final_momentum_drift: Vec3,
    pub max_skew: u64,
    pub skew_observations: u64,
    pub trace: Vec<TraceEvent>,
}

impl RunArtifacts {
    pub fn max_vapor_residual(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.vapor_budget_residual.abs())
            .fold(0.0, f64::max)
    }
}

/// Raw per-actor logs, before merging into step records.
pub(crate) struct RunLogs {
    initial_state: EulerianState,
    worker_logs: Vec<Vec<WorkerStepLog>>,
    compute_logs: Vec<ComputeStepLog>,
    /// Per rank, the estimator backlog after each fluid input.
    backlog: Vec<Vec<usize>>,
    partners: Vec<BTreeMap<u64, usize>>,
    ledgers: Vec<LedgerRecord>,
    flush: Option<SourceTotals>,
    final_state: EulerianState,
    chunks: Vec<ParticleChunk>,
    placements: Vec<ChunkPlacement>,
    snapshots: Vec<SnapshotRow>,
    trace: Vec<TraceEvent>,
    skew: (u64, u64),
}

/// Runs the coupled problem on actors under the chosen scheduler.
pub fn run_coupled(setup: &CoupledSetup, opts: &RunOptions) -> Result<RunArtifacts, RuntimeError> {
    setup.validate()?;
    let scheduler = scheduler_registry().create(&opts.scheduler)?;
    let t0 = Instant::now();
    let mesh = &setup.mesh;
    let partitions = mesh.partitions();
    let n_ranks = partitions.len();
    let asynchronous = setup.mode == CouplingMode::Asynchronous;

    let mut backend = backend_registry().create(&setup.solver.backend)?;
    backend.initialize(mesh, &setup.solver, &setup.props)?;
    let initial_state = backend.state().clone();
    let skew = SkewClock::shared(n_ranks, &setup.host_map);

    let mut actors: Vec<Box<dyn Actor>> = Vec::new();
    for p in &partitions {
        let r = p.partition_id;
        let estimator = Estimator::new(extrapolator_registry().create(&setup.extrapolator)?, p.cell_range);
        let hosted = setup.host_map.iter().position(|&h| h == r);
        actors.push(Box::new(RankComm::new(
            r,
            n_ranks,
            setup.n_steps,
            setup.tracking.dt,
            asynchronous,
            hosted,
            estimator,
            initial_state.extract(&p.cell_range)?,
            skew.clone(),
        )));
    }
    actors.push(Box::new(EulerCompute::new(
        mesh.clone(),
        setup.props,
        backend,
        setup.n_steps,
        setup.tracking.dt,
        asynchronous && setup.n_steps > 0,
        t0,
    )));
    let ctx = setup.tracking_context();
    for (w, (chunks, placements)) in setup.split_by_worker().into_iter().enumerate() {
        actors.push(Box::new(LagrangeWorker::new(
            w,
            setup.host_map[w],
            setup.n_steps,
            ctx.clone(),
            chunks,
            placements,
            setup.snapshot,
            skew.clone(),
        )));
    }

    let delivery = scheduler.run(actors, &opts.transport)?;
    let mut logs = RunLogs {
        initial_state,
        worker_logs: vec![Vec::new(); setup.n_workers()],
        compute_logs: Vec::new(),
        backlog: vec![Vec::new(); n_ranks],
        partners: vec![BTreeMap::new(); n_ranks],
        ledgers: vec![],
        flush: None,
        final_state: EulerianState::uniform(mesh.cell_box(), Vec3::ZERO, 0.0, 0.0),
        chunks: Vec::new(),
        placements: Vec::new(),
        snapshots: Vec::new(),
        trace: delivery.trace,
        skew: {
            let s = lock(&skew);
            (s.max_observed(), s.observations())
        },
    };
    let mut ledger_history = vec![Vec::new(); n_ranks];
    let mut ledgers = vec![None; n_ranks];
    for report in delivery.reports {
        match report {
            NodeReport::Comm(c) => {
                logs.backlog[c.rank] = c.logs.iter().map(|l| l.backlog_steps).collect();
                ledger_history[c.rank] = c.logs.iter().map(|l| (l.step, l.ledger.clone())).collect();
                logs.partners[c.rank] = c.partners;
                ledgers[c.rank] = Some(c.ledger);
            }
            NodeReport::Compute(c) => {
                logs.compute_logs = c.logs;
                logs.flush = c.flush;
                logs.final_state = c.final_state;
            }
            NodeReport::Worker(w) => {
                logs.worker_logs[w.worker] = w.logs;
                logs.chunks.extend(w.chunks);
                logs.placements.extend(w.placements);
                logs.snapshots.extend(w.snapshots);
            }
            NodeReport::Discovery(_) => {}
        }
    }
    logs.ledgers = ledgers
        .into_iter()
        .map(|l| l.ok_or_else(|| RuntimeError::Protocol("missing rank report".into())))
        .collect::<Result<_, _>>()?;
    let mut art = merge(setup, logs, opts.zero_timings);
    art.ledger_history = ledger_history;
    Ok(art)
}

/// Runs the same problem on one thread without messages.
pub fn run_reference(setup: &CoupledSetup, zero_timings: bool) -> Result<RunArtifacts, RuntimeError> {
    setup.validate()?;
    let logs = reference::run_sequential(setup)?;
    Ok(merge(setup, logs, zero_timings))
}

fn merge(setup: &CoupledSetup, mut logs: RunLogs, zero_timings: bool) -> RunArtifacts {
    let props = &setup.props;
    let mesh = &setup.mesh;
    let dt = setup.tracking.dt;
    let initial_fluid = fluid_stats(&logs.initial_state, mesh, props);
    let mut p0 = Vec3::ZERO;
    let mut w0 = 0.0;
    for c in &setup.chunks {
        p0 += chunk_momentum(c, props);
        w0 += c.water_mass(props.rho_p);
    }
    let water0 = initial_fluid.vapor_mass + w0;
    let scale = if water0 > 0.0 { water0 } else { 1.0 };

    let mut records = Vec::with_capacity(logs.compute_logs.len());
    let mut wall_flux = 0.0;
    let mut delivered_cum = SourceTotals::default();
    let mut true_cum = SourceTotals::default();
    let mut reflection_cum = Vec3::ZERO;
    let mut prev_finish = 0.0;
    for (n, cl) in logs.compute_logs.iter().enumerate() {
        let mut lagrange_compute_s: f64 = 0.0;
        let mut momentum = Vec3::ZERO;
        let mut water = 0.0;
        let mut tracking = TrackingStats::default();
        let mut true_impulse = SourceTotals::default();
        let mut late_requests = 0;
        for wl in &logs.worker_logs {
            if let Some(l) = wl.get(n) {
                lagrange_compute_s = lagrange_compute_s.max(l.compute_s);
                momentum += l.momentum;
                water += l.water_mass;
                tracking.merge(&l.stats);
                true_impulse += l.impulse;
                late_requests += l.late_requests;
            }
        }
        wall_flux += cl.report.wall_vapor_flux;
        delivered_cum += cl.delivered;
        true_cum += true_impulse;
        reflection_cum += tracking.reflection_impulse;
        let residual =
            (cl.fluid.vapor_mass + water - water0 - wall_flux - (delivered_cum.vapor - true_cum.vapor)) / scale;
        let wall_s = cl.finished_s - prev_finish;
        prev_finish = cl.finished_s;
        let step = n as u64;
        let (lagrange_compute_s, euler_compute_s, wall_s) = if zero_timings {
            (0.0, 0.0, 0.0)
        } else {
            (lagrange_compute_s, cl.compute_s, wall_s)
        };
        records.push(StepRecord {
            step,
            time: (step + 1) as f64 * dt,
            lagrange_compute_s,
            euler_compute_s,
            wall_s,
            backlog_steps: logs.backlog.iter().filter_map(|b| b.get(n)).copied().max().unwrap_or(0),
            partners: logs.partners.iter().filter_map(|p| p.get(&step)).sum(),
            late_requests,
            particle_momentum: momentum,
            particle_water: water,
            fluid: cl.fluid,
            solver: cl.report,
            delivered: cl.delivered,
            true_impulse,
            tracking,
            vapor_budget_residual: residual,
            momentum_drift: momentum - p0 + delivered_cum.momentum - reflection_cum,
        });
    }
    let final_momentum_drift = match records.last() {
        Some(r) => r.momentum_drift + logs.flush.map_or(Vec3::ZERO, |f| f.momentum),
        None => Vec3::ZERO,
    };
    logs.chunks.sort_by_key(|c| c.chunk_id);
    logs.placements.sort_by_key(|p| p.chunk_id);
    logs.snapshots.sort_by_key(|s| (s.step, s.chunk_id, s.index));
    let final_fluid = fluid_stats(&logs.final_state, mesh, props);
    RunArtifacts {
        records,
        initial_fluid,
        initial_particle_momentum: p0,
        initial_particle_water: w0,
        final_state: logs.final_state,
        final_fluid,
        chunks: logs.chunks,
        placements: logs.placements,
        snapshots: logs.snapshots,
        ledger_history: Vec::new(),
        ledgers: logs.ledgers,
        flush: logs.flush,
        final_momentum_drift,
        max_skew: logs.skew.0,
        skew_observations: logs.skew.1,
        trace: logs.trace,
    }
}
