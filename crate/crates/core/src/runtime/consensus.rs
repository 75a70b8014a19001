//! Partner discovery without a global blocking barrier.
//!
//! Each host sends one request per partition its worker needs and waits for
//! the owners' acknowledgements. Only then does it enter a non-blocking
//! dissemination barrier for that epoch, while it keeps serving requests
//! from others. When the barrier completes at a rank, every request of the
//! epoch has been received everywhere, so each owner knows its partners.

use std::collections::{BTreeMap, BTreeSet};

use super::message::{Actor, Message, NodeId, NodeReport, Outbox};
use super::transport::{scheduler_registry, TransportOptions};
use crate::error::RuntimeError;

/// Dissemination barrier over `n` ranks, one epoch at a time. Round `k`
/// signals rank `(r + 2^k) mod n` and waits for rank `(r - 2^k) mod n`.
#[derive(Debug, Clone)]
pub struct Barrier {
    rank: usize,
    n: usize,
    rounds: u32,
    completed: u64,
    active: Option<(u64, u32)>,
    tokens: BTreeSet<(u64, u32)>,
}

impl Barrier {
    pub fn new(rank: usize, n: usize) -> Self {
        let mut rounds = 0;
        while (1usize << rounds) < n {
            rounds += 1;
        }
        Barrier {
            rank,
            n,
            rounds,
            completed: 0,
            active: None,
            tokens: BTreeSet::new(),
        }
    }

    /// Number of epochs completed so far; epoch `k` is complete iff
    /// `completed() > k`.
    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn is_active(&self) -> bool {
        self.active.is_some()
    }

    fn partner(&self, round: u32) -> usize {
        (self.rank + (1usize << round)) % self.n
    }

    /// Enters the next epoch; returns the ranks to signal.
    pub fn enter(&mut self) -> Vec<(usize, Message)> {
        assert!(self.active.is_none(), "barrier entered twice");
        let epoch = self.completed;
        if self.rounds == 0 {
            self.completed += 1;
            return Vec::new();
        }
        self.active = Some((epoch, 0));
        let mut out = vec![(self.partner(0), Message::BarrierToken { epoch, round: 0 })];
        out.extend(self.advance());
        out
    }

    pub fn on_token(&mut self, epoch: u64, round: u32) -> Vec<(usize, Message)> {
        self.tokens.insert((epoch, round));
        self.advance()
    }

    fn advance(&mut self) -> Vec<(usize, Message)> {
        let mut out = Vec::new();
        while let Some((epoch, round)) = self.active {
            if !self.tokens.remove(&(epoch, round)) {
                break;
            }
            let next = round + 1;
            if next == self.rounds {
                self.active = None;
                self.completed = epoch + 1;
            } else {
                self.active = Some((epoch, next));
                out.push((self.partner(next), Message::BarrierToken { epoch, round: next }));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscoveryReport {
    pub rank: usize,
    /// Workers that requested this rank's partition.
    pub state_requesters: BTreeSet<usize>,
    pub epochs_completed: u64,
}

/// What one rank learns in a discovery round.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PartnerSets {
    /// Workers this rank sends its state to (and later gets sources from).
    pub state_to: BTreeSet<usize>,
    /// Partitions whose owners send states to this rank on behalf of its
    /// hosted worker.
    pub states_from: BTreeSet<usize>,
}

struct DiscoveryNode {
    rank: usize,
    hosted: Option<(usize, BTreeSet<usize>)>,
    outstanding: usize,
    requested: bool,
    requesters: BTreeSet<usize>,
    barrier: Barrier,
}

impl DiscoveryNode {
    fn progress(&mut self, out: &mut Outbox) {
        if self.requested && self.outstanding == 0 && !self.barrier.is_active() && self.barrier.completed() == 0 {
            for (to, m) in self.barrier.enter() {
                out.send(NodeId::Comm(to), m);
            }
        }
    }
}

impl Actor for DiscoveryNode {
    fn id(&self) -> NodeId {
        NodeId::Comm(self.rank)
    }

    fn start(&mut self, out: &mut Outbox) -> Result<(), RuntimeError> {
        if let Some((worker, req)) = &self.hosted {
            for &p in req {
                out.send(
                    NodeId::Comm(p),
                    Message::StateRequest {
                        step: 0,
                        worker: *worker,
                        host: self.rank,
                        late: false,
                    },
                );
            }
            self.outstanding = req.len();
        }
        self.requested = true;
        self.progress(out);
        Ok(())
    }

    fn handle(&mut self, _from: NodeId, msg: Message, out: &mut Outbox) -> Result<(), RuntimeError> {
        match msg {
            Message::StateRequest { worker, host, step, .. } => {
                self.requesters.insert(worker);
                out.send(
                    NodeId::Comm(host),
                    Message::RequestAck {
                        step,
                        partition: self.rank,
                        late: false,
                    },
                );
            }
            Message::RequestAck { .. } => self.outstanding -= 1,
            Message::BarrierToken { epoch, round } => {
                for (to, m) in self.barrier.on_token(epoch, round) {
                    out.send(NodeId::Comm(to), m);
                }
            }
            other => {
                return Err(RuntimeError::Protocol(format!(
                    "discovery rank {} got {}",
                    self.rank,
                    other.kind()
                )))
            }
        }
        self.progress(out);
        Ok(())
    }

    fn is_done(&self) -> bool {
        self.barrier.completed() >= 1
    }

    fn status(&self) -> String {
        format!(
            "outstanding acks {}, barrier active {}, completed {}",
            self.outstanding,
            self.barrier.is_active(),
            self.barrier.completed()
        )
    }

    fn into_report(self: Box<Self>) -> NodeReport {
        NodeReport::Discovery(DiscoveryReport {
            rank: self.rank,
            state_requesters: self.requesters,
            epochs_completed: self.barrier.completed(),
        })
    }
}

/// One round of partner discovery among `n_ranks` ranks. `required[w]` is
/// the partition set of worker `w`, hosted on rank `host_map[w]`.
pub fn discover_partners(
    required: &[BTreeSet<usize>],
    host_map: &[usize],
    n_ranks: usize,
    scheduler: &str,
    opts: &TransportOptions,
) -> Result<Vec<PartnerSets>, RuntimeError> {
    if required.len() != host_map.len() {
        return Err(RuntimeError::Protocol("required and host_map lengths differ".into()));
    }
    let mut hosted: BTreeMap<usize, (usize, BTreeSet<usize>)> = BTreeMap::new();
    for (w, (&h, req)) in host_map.iter().zip(required).enumerate() {
        if h >= n_ranks || req.iter().any(|&p| p >= n_ranks) {
            return Err(RuntimeError::UnknownNode(format!("rank index out of range for worker {w}")));
        }
        if hosted.insert(h, (w, req.clone())).is_some() {
            return Err(RuntimeError::Protocol(format!("rank {h} hosts two workers")));
        }
    }
    let actors: Vec<Box<dyn Actor>> = (0..n_ranks)
        .map(|r| {
            Box::new(DiscoveryNode {
                rank: r,
                hosted: hosted.get(&r).cloned(),
                outstanding: 0,
                requested: false,
                requesters: BTreeSet::new(),
                barrier: Barrier::new(r, n_ranks),
            }) as Box<dyn Actor>
        })
        .collect();
    let delivery = scheduler_registry().create(scheduler)?.run(actors, opts)?;
    let mut out = vec![PartnerSets::default(); n_ranks];
    for report in delivery.reports {
        if let NodeReport::Discovery(d) = report {
            out[d.rank].state_to = d.state_requesters;
        }
    }
    for (&h, (_, req)) in &hosted {
        out[h].states_from = req.clone();
    }
    Ok(out)
}

/// Partner sets computed with global knowledge.
pub fn centralized_partners(required: &[BTreeSet<usize>], host_map: &[usize], n_ranks: usize) -> Vec<PartnerSets> {
    let mut out = vec![PartnerSets::default(); n_ranks];
    for (w, req) in required.iter().enumerate() {
        for &p in req {
            out[p].state_to.insert(w);
        }
        out[host_map[w]].states_from = req.clone();
    }
    out
}
