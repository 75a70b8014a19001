//! Communication context of one Eulerian rank. It owns one partition's
//! state history and source estimator, answers state requests from hosts,
//! hosts at most one Lagrangian worker, and decides when the partition's
//! source input for the next fluid step is ready. It never computes.

use std::collections::{BTreeMap, BTreeSet};

use super::consensus::Barrier;
use super::message::{Actor, Message, NodeId, NodeReport, Outbox};
use super::skew::{lock, SharedSkew};
use crate::error::RuntimeError;
use crate::estimator::{Estimator, LedgerRecord};
use crate::fields::{EulerianState, SourceFields};
use crate::mesh::CellBox;

/// Steps of state history an owner keeps for late requests.
const HISTORY_DEPTH: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CommStepLog {
    pub step: u64,
    pub backlog_steps: usize,
    pub ledger: LedgerRecord,
}

pub struct CommReport {
    pub rank: usize,
    pub logs: Vec<CommStepLog>,
    /// Workers that exchanged data with this partition, per step.
    pub partners: BTreeMap<u64, usize>,
    pub ledger: LedgerRecord,
    pub epochs_completed: u64,
}

#[derive(Default)]
struct Bundle {
    needed: BTreeSet<usize>,
    got: BTreeMap<usize, EulerianState>,
}

impl Bundle {
    fn complete(&self) -> bool {
        self.needed.len() == self.got.len()
    }
}

pub struct RankComm {
    rank: usize,
    n_steps: u64,
    dt: f64,
    asynchronous: bool,
    cells: CellBox,
    hosted: Option<usize>,
    estimator: Estimator,
    skew: SharedSkew,
    barrier: Barrier,

    // owner side
    e: u64,
    history: BTreeMap<u64, EulerianState>,
    requesters: BTreeMap<u64, BTreeSet<usize>>,
    late: BTreeMap<u64, BTreeSet<usize>>,
    waiting: BTreeMap<u64, Vec<(usize, bool)>>,
    sources: BTreeMap<u64, BTreeMap<usize, SourceFields>>,
    next_input: u64,
    flushed: bool,

    // host side
    issued: Option<u64>,
    outstanding_acks: usize,
    bundles: BTreeMap<u64, Bundle>,
    late_bundle: Option<(u64, Bundle)>,

    logs: Vec<CommStepLog>,
    partners: BTreeMap<u64, usize>,
}

impl RankComm {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rank: usize,
        n_ranks: usize,
        n_steps: u64,
        dt: f64,
        asynchronous: bool,
        hosted: Option<usize>,
        mut estimator: Estimator,
        initial: EulerianState,
        skew: SharedSkew,
    ) -> Self {
        let cells = initial.cells;
        estimator
            .seed_history(SourceFields::zeros(cells, 0))
            .expect("estimator box matches the partition");
        RankComm {
            rank,
            n_steps,
            dt,
            asynchronous,
            cells,
            hosted,
            estimator,
            skew,
            barrier: Barrier::new(rank, n_ranks),
            e: initial.step_index,
            history: [(initial.step_index, initial)].into_iter().collect(),
            requesters: BTreeMap::new(),
            late: BTreeMap::new(),
            waiting: BTreeMap::new(),
            sources: BTreeMap::new(),
            next_input: 0,
            flushed: false,
            issued: None,
            outstanding_acks: 0,
            bundles: BTreeMap::new(),
            late_bundle: None,
            logs: Vec::new(),
            partners: BTreeMap::new(),
        }
    }

    fn protocol(&self, what: String) -> RuntimeError {
        RuntimeError::Protocol(format!("rank {}: {what}", self.rank))
    }

    fn issue_requests(&mut self, epoch: u64, required: BTreeSet<usize>, out: &mut Outbox) -> Result<(), RuntimeError> {
        let worker = self.hosted.ok_or_else(|| self.protocol("announcement without a hosted worker".into()))?;
        if self.issued.map_or(epoch != 0, |k| epoch != k + 1) {
            return Err(self.protocol(format!("announcement for epoch {epoch} out of order")));
        }
        self.issued = Some(epoch);
        if epoch >= self.n_steps {
            return Ok(());
        }
        for &p in &required {
            out.send(
                NodeId::Comm(p),
                Message::StateRequest {
                    step: epoch,
                    worker,
                    host: self.rank,
                    late: false,
                },
            );
        }
        self.outstanding_acks += required.len();
        self.bundles.insert(
            epoch,
            Bundle {
                needed: required,
                got: BTreeMap::new(),
            },
        );
        Ok(())
    }

    fn serve(&self, step: u64, host: usize, late: bool, out: &mut Outbox) {
        out.send(
            NodeId::Comm(host),
            Message::StatePayload {
                step,
                partition: self.rank,
                late,
                state: self.history[&step].clone(),
            },
        );
    }

    fn sources_complete(&self, step: u64) -> bool {
        let got = self.sources.get(&step).map_or(0, |m| m.len());
        let expected: BTreeSet<usize> = self
            .requesters
            .get(&step)
            .into_iter()
            .chain(self.late.get(&step))
            .flatten()
            .copied()
            .collect();
        got == expected.len()
            && expected
                .iter()
                .all(|w| self.sources.get(&step).is_some_and(|m| m.contains_key(w)))
    }

    /// Sums the sources of `step` in worker order and forgets the step.
    fn take_sources(&mut self, step: u64) -> Result<SourceFields, RuntimeError> {
        let mut acc = SourceFields::zeros(self.cells, step);
        let parts = self.sources.remove(&step).unwrap_or_default();
        self.partners.insert(step, parts.len());
        for s in parts.values() {
            acc.add_assign_checked(s)?;
        }
        self.requesters.remove(&step);
        self.late.remove(&step);
        Ok(acc)
    }

    fn log_input(&mut self, step: u64) {
        self.logs.push(CommStepLog {
            step,
            backlog_steps: self.estimator.backlog_steps(),
            ledger: self.estimator.conservativity_report(),
        });
    }

    fn progress(&mut self, out: &mut Outbox) -> Result<(), RuntimeError> {
        loop {
            let mut moved = false;

            // Enter the next barrier epoch once this rank's requests for it
            // are acknowledged.
            let k = self.barrier.completed();
            if k <= self.n_steps
                && !self.barrier.is_active()
                && (self.hosted.is_none() || (self.issued == Some(k) && self.outstanding_acks == 0))
            {
                for (to, m) in self.barrier.enter() {
                    out.send(NodeId::Comm(to), m);
                }
                moved = true;
            }

            // Hand complete bundles to the hosted worker.
            if let Some(w) = self.hosted {
                let ready: Vec<u64> = self
                    .bundles
                    .iter()
                    .filter(|(s, b)| **s <= self.e && b.complete())
                    .map(|(s, _)| *s)
                    .collect();
                for s in ready {
                    let b = self.bundles.remove(&s).expect("listed");
                    out.send(
                        NodeId::Worker(w),
                        Message::StateBundle {
                            step: s,
                            slices: b.got.into_iter().collect(),
                        },
                    );
                    moved = true;
                }
                if self.late_bundle.as_ref().is_some_and(|(_, b)| b.complete()) {
                    let (s, b) = self.late_bundle.take().expect("checked");
                    out.send(
                        NodeId::Worker(w),
                        Message::LateBundle {
                            step: s,
                            slices: b.got.into_iter().collect(),
                        },
                    );
                    moved = true;
                }
            }

            moved |= self.try_input(out)?;
            if !moved {
                return Ok(());
            }
        }
    }

    fn try_input(&mut self, out: &mut Outbox) -> Result<bool, RuntimeError> {
        let n = self.next_input;
        let epochs = self.barrier.completed();
        if n < self.n_steps {
            if self.e != n {
                return Ok(false);
            }
            let sources = if !self.asynchronous || n == 0 {
                // The true sources of step n are final once epoch n+1 is
                // complete.
                if epochs < n + 2 || !self.sources_complete(n) {
                    return Ok(false);
                }
                let s = self.take_sources(n)?;
                self.estimator.record_synchronous(n, self.dt, s)?
            } else {
                // Every worker has finished step n-1 once epoch n is
                // complete; its sources are the ones still in flight.
                if epochs < n + 1 || (n >= 2 && !self.sources_complete(n - 1)) {
                    return Ok(false);
                }
                if n >= 2 {
                    let s = self.take_sources(n - 1)?;
                    self.estimator.receive(n - 1, self.dt, s)?;
                }
                self.estimator.estimate_step(n, self.dt)?
            };
            out.send(
                NodeId::Compute,
                Message::EulerInput {
                    step: n,
                    rank: self.rank,
                    sources,
                },
            );
            self.log_input(n);
            self.next_input += 1;
            return Ok(true);
        }
        if self.asynchronous && !self.flushed && self.n_steps > 0 {
            let last = self.n_steps - 1;
            if epochs < self.n_steps + 1 || (last >= 1 && !self.sources_complete(last)) {
                return Ok(false);
            }
            if last >= 1 {
                let s = self.take_sources(last)?;
                self.estimator.receive(last, self.dt, s)?;
            }
            let corrector = self.estimator.flush(self.dt)?;
            out.send(
                NodeId::Compute,
                Message::Flush {
                    rank: self.rank,
                    corrector,
                },
            );
            self.flushed = true;
            return Ok(true);
        }
        Ok(false)
    }
}

impl Actor for RankComm {
    fn id(&self) -> NodeId {
        NodeId::Comm(self.rank)
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), RuntimeError> {
        self.progress(out)
    }

    fn handle(&mut self, from: NodeId, msg: Message, out: &mut Outbox) -> Result<(), RuntimeError> {
        match msg {
            Message::BboxAnnounce { epoch, required, .. } => {
                if from != NodeId::Worker(self.hosted.unwrap_or(usize::MAX)) {
                    return Err(self.protocol(format!("announcement from {from}")));
                }
                self.issue_requests(epoch, required, out)?;
            }
            Message::StepDone {
                step, sources, next_required, ..
            } => {
                let worker = match from {
                    NodeId::Worker(w) if Some(w) == self.hosted => w,
                    _ => return Err(self.protocol(format!("step_done from {from}"))),
                };
                for (p, s) in sources {
                    out.send(NodeId::Comm(p), Message::SourcePayload { step, worker, sources: s });
                }
                self.issue_requests(step + 1, next_required, out)?;
            }
            Message::LateRequest { step, partitions } => {
                let worker = self.hosted.ok_or_else(|| self.protocol("late request without worker".into()))?;
                if self.late_bundle.is_some() {
                    return Err(self.protocol("overlapping late requests".into()));
                }
                for &p in &partitions {
                    out.send(
                        NodeId::Comm(p),
                        Message::StateRequest {
                            step,
                            worker,
                            host: self.rank,
                            late: true,
                        },
                    );
                }
                self.outstanding_acks += partitions.len();
                self.late_bundle = Some((
                    step,
                    Bundle {
                        needed: partitions,
                        got: BTreeMap::new(),
                    },
                ));
            }
            Message::StateRequest { step, worker, host, late } => {
                let set = if late { &mut self.late } else { &mut self.requesters };
                if !set.entry(step).or_default().insert(worker) {
                    return Err(self.protocol(format!("duplicate request from worker {worker} for step {step}")));
                }
                out.send(
                    NodeId::Comm(host),
                    Message::RequestAck {
                        step,
                        partition: self.rank,
                        late,
                    },
                );
                if self.history.contains_key(&step) {
                    self.serve(step, host, late, out);
                } else if step > self.e {
                    self.waiting.entry(step).or_default().push((host, late));
                } else {
                    return Err(self.protocol(format!("state for step {step} no longer held (at {})", self.e)));
                }
            }
            Message::RequestAck { .. } => {
                self.outstanding_acks = self
                    .outstanding_acks
                    .checked_sub(1)
                    .ok_or_else(|| self.protocol("unexpected ack".into()))?;
            }
            Message::BarrierToken { epoch, round } => {
                for (to, m) in self.barrier.on_token(epoch, round) {
                    out.send(NodeId::Comm(to), m);
                }
            }
            Message::StatePayload {
                step,
                partition,
                late,
                state,
            } => {
                let bundle = if late {
                    self.late_bundle.as_mut().filter(|(s, _)| *s == step).map(|(_, b)| b)
                } else {
                    self.bundles.get_mut(&step)
                };
                let bundle = bundle.ok_or_else(|| RuntimeError::Protocol(format!("unrequested payload for step {step}")))?;
                if !bundle.needed.contains(&partition) || bundle.got.insert(partition, state).is_some() {
                    return Err(self.protocol(format!("unexpected payload from partition {partition}")));
                }
            }
            Message::SourcePayload { step, worker, sources } => {
                if self.sources.entry(step).or_default().insert(worker, sources).is_some() {
                    return Err(self.protocol(format!("duplicate sources from worker {worker} for step {step}")));
                }
            }
            Message::EulerResult { step, state } => {
                if step != self.e + 1 {
                    return Err(self.protocol(format!("euler result {step} after {}", self.e)));
                }
                self.history.insert(step, state);
                self.e = step;
                lock(&self.skew).set_euler(self.rank, step)?;
                self.history.retain(|&s, _| s + HISTORY_DEPTH > step);
                if let Some(w) = self.waiting.remove(&step) {
                    for (host, late) in w {
                        self.serve(step, host, late, out);
                    }
                }
            }
            other => return Err(self.protocol(format!("cannot handle {}", other.kind()))),
        }
        self.progress(out)
    }

    fn is_done(&self) -> bool {
        self.next_input >= self.n_steps
            && (!self.asynchronous || self.flushed || self.n_steps == 0)
            && self.barrier.completed() > self.n_steps
            && self.e >= self.n_steps
    }

    fn status(&self) -> String {
        format!(
            "rank {}: e={} next_input={} epochs_done={} barrier_active={} acks_out={} bundles={:?} sources={:?} flushed={}",
            self.rank,
            self.e,
            self.next_input,
            self.barrier.completed(),
            self.barrier.is_active(),
            self.outstanding_acks,
            self.bundles.iter().map(|(s, b)| (*s, b.got.len(), b.needed.len())).collect::<Vec<_>>(),
            self.sources.iter().map(|(s, m)| (*s, m.len())).collect::<Vec<_>>(),
            self.flushed
        )
    }

    fn into_report(self: Box<Self>) -> NodeReport {
        NodeReport::Comm(Box::new(CommReport {
            rank: self.rank,
            ledger: self.estimator.conservativity_report(),
            logs: self.logs,
            partners: self.partners,
            epochs_completed: self.barrier.completed(),
        }))
    }
}
