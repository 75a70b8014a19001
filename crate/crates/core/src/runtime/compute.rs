use std::collections::BTreeMap;
use std::time::Instant;

use super::message::{Actor, Message, NodeId, NodeReport, Outbox};
use crate::error::RuntimeError;
use crate::fields::{EulerianState, SourceFields, SourceTotals};
use crate::mesh::{EulerianPartition, StructuredMesh};
use crate::physics::FluidProperties;
use crate::solver::{fluid_stats, EulerianBackend, FluidStats, StepReport};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComputeStepLog {
    pub step: u64,
    pub compute_s: f64,
    /// Seconds since the run started when this step finished.
    pub finished_s: f64,
    pub fluid: FluidStats,
    pub report: StepReport,
    /// Source impulse applied to the fluid this step.
    pub delivered: SourceTotals,
}

pub struct ComputeReport {
    pub logs: Vec<ComputeStepLog>,
    /// Impulse applied by the final corrector, if any.
    pub flush: Option<SourceTotals>,
    pub final_state: EulerianState,
    pub final_fluid: FluidStats,
}

/// Gathers per-rank source inputs, runs the global fluid step and scatters
/// the new state slices back to the ranks.
pub struct EulerCompute {
    mesh: StructuredMesh,
    partitions: Vec<EulerianPartition>,
    props: FluidProperties,
    backend: Box<dyn EulerianBackend>,
    n_steps: u64,
    dt: f64,
    expects_flush: bool,
    t0: Instant,
    next: u64,
    inputs: BTreeMap<u64, BTreeMap<usize, SourceFields>>,
    flushes: BTreeMap<usize, SourceFields>,
    flushed: Option<SourceTotals>,
    logs: Vec<ComputeStepLog>,
}

/// Stitches per-partition slices into one global field.
pub(crate) fn assemble(cells: crate::mesh::CellBox, step: u64, parts: impl IntoIterator<Item = SourceFields>) -> Result<SourceFields, RuntimeError> {
    let mut g = SourceFields::zeros(cells, step);
    for p in parts {
        g.insert(&p)?;
    }
    Ok(g)
}

impl EulerCompute {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: StructuredMesh,
        props: FluidProperties,
        backend: Box<dyn EulerianBackend>,
        n_steps: u64,
        dt: f64,
        expects_flush: bool,
        t0: Instant,
    ) -> Self {
        EulerCompute {
            partitions: mesh.partitions(),
            mesh,
            props,
            backend,
            n_steps,
            dt,
            expects_flush,
            t0,
            next: 0,
            inputs: BTreeMap::new(),
            flushes: BTreeMap::new(),
            flushed: None,
            logs: Vec::new(),
        }
    }

    fn n_ranks(&self) -> usize {
        self.partitions.len()
    }

    fn try_step(&mut self, out: &mut Outbox) -> Result<(), RuntimeError> {
        while self.next < self.n_steps && self.inputs.get(&self.next).is_some_and(|m| m.len() == self.n_ranks()) {
            let step = self.next;
            let parts = self.inputs.remove(&step).expect("checked");
            let t = Instant::now();
            let global = assemble(self.mesh.cell_box(), step, parts.into_values())?;
            let report = self.backend.step(&global, self.dt)?;
            let compute_s = t.elapsed().as_secs_f64();
            let state = self.backend.state();
            for p in &self.partitions {
                out.send(
                    NodeId::Comm(p.partition_id),
                    Message::EulerResult {
                        step: step + 1,
                        state: state.extract(&p.cell_range)?,
                    },
                );
            }
            self.logs.push(ComputeStepLog {
                step,
                compute_s,
                finished_s: self.t0.elapsed().as_secs_f64(),
                fluid: fluid_stats(state, &self.mesh, &self.props),
                report,
                delivered: global.totals().scaled(self.mesh.cell_volume() * self.dt),
            });
            self.next += 1;
        }
        if self.next == self.n_steps && self.expects_flush && self.flushed.is_none() && self.flushes.len() == self.n_ranks() {
            let parts = std::mem::take(&mut self.flushes);
            let global = assemble(self.mesh.cell_box(), self.n_steps, parts.into_values())?;
            self.backend.incorporate(&global, self.dt)?;
            self.flushed = Some(global.totals().scaled(self.mesh.cell_volume() * self.dt));
        }
        Ok(())
    }
}

impl Actor for EulerCompute {
    fn id(&self) -> NodeId {
        NodeId::Compute
    }

    fn start(&mut self, _out: &mut Outbox) -> Result<(), RuntimeError> {
        Ok(())
    }

    fn handle(&mut self, _from: NodeId, msg: Message, out: &mut Outbox) -> Result<(), RuntimeError> {
        match msg {
            Message::EulerInput { step, rank, sources } => {
                if step < self.next || step >= self.n_steps {
                    return Err(RuntimeError::Protocol(format!("euler input for step {step} at {}", self.next)));
                }
                if self.inputs.entry(step).or_default().insert(rank, sources).is_some() {
                    return Err(RuntimeError::Protocol(format!("duplicate input from rank {rank} for step {step}")));
                }
            }
            Message::Flush { rank, corrector } => {
                if !self.expects_flush || self.flushes.insert(rank, corrector).is_some() {
                    return Err(RuntimeError::Protocol(format!("unexpected flush from rank {rank}")));
                }
            }
            other => {
                return Err(RuntimeError::Protocol(format!("compute cannot handle {}", other.kind())));
            }
        }
        self.try_step(out)
    }

    fn is_done(&self) -> bool {
        self.next >= self.n_steps && (!self.expects_flush || self.flushed.is_some() || self.n_steps == 0)
    }

    fn status(&self) -> String {
        let waiting: Vec<String> = self
            .inputs
            .iter()
            .map(|(s, m)| format!("step {s}: {}/{} inputs", m.len(), self.n_ranks()))
            .collect();
        format!(
            "next step {}/{}, flushes {}/{}, pending [{}]",
            self.next,
            self.n_steps,
            self.flushes.len(),
            self.n_ranks(),
            waiting.join("; ")
        )
    }

    fn into_report(self: Box<Self>) -> NodeReport {
        let final_state = self.backend.state().clone();
        let final_fluid = fluid_stats(&final_state, &self.mesh, &self.props);
        NodeReport::Compute(Box::new(ComputeReport {
            logs: self.logs,
            flush: self.flushed,
            final_state,
            final_fluid,
        }))
    }
}
