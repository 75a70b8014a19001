//! Single-threaded run of the same coupled problem. Chunk work, source
//! summation order and estimator calls match the distributed runtime, so
//! both produce identical numbers for the same setup.

use std::collections::BTreeMap;
use std::time::Instant;

use super::compute::{assemble, ComputeStepLog};
use super::worker::{impulse, snapshot_rows, wants_snapshot, Progress, StepProgress, WorkerStepLog};
use super::{CoupledSetup, CouplingMode, RunLogs};
use crate::error::RuntimeError;
use crate::estimator::{extrapolator_registry, Estimator};
use crate::fields::SourceFields;
use crate::geom::Vec3;
use crate::lagrangian::chunk_momentum;
use crate::solver::{backend_registry, fluid_stats};

pub(crate) fn run_sequential(setup: &CoupledSetup) -> Result<RunLogs, RuntimeError> {
    let t0 = Instant::now();
    let mesh = &setup.mesh;
    let partitions = mesh.partitions();
    let ctx = setup.tracking_context();
    let dt = setup.tracking.dt;
    let asynchronous = setup.mode == CouplingMode::Asynchronous;

    let mut backend = backend_registry().create(&setup.solver.backend)?;
    backend.initialize(mesh, &setup.solver, &setup.props)?;
    let initial_state = backend.state().clone();

    let mut estimators = Vec::with_capacity(partitions.len());
    for p in &partitions {
        let mut e = Estimator::new(extrapolator_registry().create(&setup.extrapolator)?, p.cell_range);
        e.seed_history(SourceFields::zeros(p.cell_range, 0))?;
        estimators.push(e);
    }

    let mut workers = setup.split_by_worker();
    let mut worker_logs: Vec<Vec<WorkerStepLog>> = vec![Vec::new(); workers.len()];
    let mut snapshots = Vec::new();
    let mut compute_logs = Vec::new();
    let mut partners: Vec<BTreeMap<u64, usize>> = vec![BTreeMap::new(); partitions.len()];
    let mut backlog: Vec<Vec<usize>> = vec![Vec::new(); partitions.len()];
    // true per-partition sources of the previous step, still "in flight"
    let mut pending: Option<(u64, Vec<SourceFields>)> = None;

    for n in 0..setup.n_steps {
        let state = backend.state().clone();
        let mut per_partition: Vec<BTreeMap<usize, SourceFields>> = vec![BTreeMap::new(); partitions.len()];
        for (w, (chunks, placements)) in workers.iter_mut().enumerate() {
            let t = Instant::now();
            let required = super::worker::union_required(placements);
            let slices = required
                .iter()
                .map(|&p| Ok((p, state.extract(&partitions[p].cell_range)?)))
                .collect::<Result<Vec<_>, RuntimeError>>()?;
            let mut progress = StepProgress::new(n, slices);
            loop {
                match progress.advance(chunks, placements, &ctx)? {
                    Progress::Done => break,
                    Progress::NeedSlices(missing) => {
                        for p in missing {
                            progress.slices.insert(p, state.extract(&partitions[p].cell_range)?);
                        }
                    }
                }
            }
            let late_requests = progress.late_requests;
            let done = progress.finish(chunks, placements, &ctx);
            let mut momentum = Vec3::ZERO;
            let mut water = 0.0;
            for c in chunks.iter() {
                momentum += chunk_momentum(c, &setup.props);
                water += c.water_mass(setup.props.rho_p);
            }
            worker_logs[w].push(WorkerStepLog {
                step: n,
                compute_s: t.elapsed().as_secs_f64(),
                momentum,
                water_mass: water,
                stats: done.stats,
                impulse: impulse(&done.sources, mesh.cell_volume(), dt),
                late_requests,
            });
            if wants_snapshot(&setup.snapshot, n, setup.n_steps) {
                snapshots.extend(snapshot_rows(n, chunks, setup.snapshot.stride));
            }
            for (p, s) in done.sources {
                per_partition[p].insert(w, s);
            }
        }
        let truths = per_partition
            .into_iter()
            .enumerate()
            .map(|(p, parts)| {
                partners[p].insert(n, parts.len());
                let mut acc = SourceFields::zeros(partitions[p].cell_range, n);
                for s in parts.values() {
                    acc.add_assign_checked(s)?;
                }
                Ok(acc)
            })
            .collect::<Result<Vec<_>, RuntimeError>>()?;

        let mut inputs = Vec::with_capacity(partitions.len());
        if !asynchronous || n == 0 {
            for (p, truth) in truths.into_iter().enumerate() {
                inputs.push(estimators[p].record_synchronous(n, dt, truth)?);
            }
        } else {
            let prev = pending.take();
            for (p, est) in estimators.iter_mut().enumerate() {
                if let Some((k, ref prev)) = prev {
                    est.receive(k, dt, prev[p].clone())?;
                }
                inputs.push(est.estimate_step(n, dt)?);
            }
            pending = Some((n, truths));
        }
        for (p, est) in estimators.iter().enumerate() {
            backlog[p].push(est.backlog_steps());
        }

        let t = Instant::now();
        let global = assemble(mesh.cell_box(), n, inputs)?;
        let report = backend.step(&global, dt)?;
        compute_logs.push(ComputeStepLog {
            step: n,
            compute_s: t.elapsed().as_secs_f64(),
            finished_s: t0.elapsed().as_secs_f64(),
            fluid: fluid_stats(backend.state(), mesh, &setup.props),
            report,
            delivered: global.totals().scaled(mesh.cell_volume() * dt),
        });
    }

    let mut flush = None;
    if asynchronous && setup.n_steps > 0 {
        let mut corr = Vec::with_capacity(partitions.len());
        let prev = pending.take();
        for (p, est) in estimators.iter_mut().enumerate() {
            if let Some((k, ref prev)) = prev {
                est.receive(k, dt, prev[p].clone())?;
            }
            corr.push(est.flush(dt)?);
        }
        let global = assemble(mesh.cell_box(), setup.n_steps, corr)?;
        backend.incorporate(&global, dt)?;
        flush = Some(global.totals().scaled(mesh.cell_volume() * dt));
    }

    let mut chunks = Vec::new();
    let mut placements = Vec::new();
    for (c, p) in workers {
        chunks.extend(c);
        placements.extend(p);
    }
    Ok(RunLogs {
        initial_state,
        worker_logs,
        compute_logs,
        backlog,
        partners,
        ledgers: estimators.iter().map(|e| e.conservativity_report()).collect(),
        flush,
        final_state: backend.state().clone(),
        chunks,
        placements,
        snapshots,
        trace: Vec::new(),
        skew: (0, 0),
    })
}
