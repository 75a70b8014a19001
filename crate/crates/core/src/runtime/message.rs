use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::error::RuntimeError;
use crate::fields::{EulerianState, SourceFields};
use crate::geom::BoundingBox;
use crate::lagrangian::TrackingStats;

/// Address of an actor. `Comm(r)` is the communication context of Eulerian
/// rank `r`; `Compute` is the Eulerian compute context that runs the global
/// solve; `Worker(w)` is a Lagrangian worker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum NodeId {
    Comm(usize),
    Compute,
    Worker(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Comm(r) => write!(f, "comm{r}"),
            NodeId::Compute => write!(f, "compute"),
            NodeId::Worker(w) => write!(f, "worker{w}"),
        }
    }
}

#[derive(Debug, Clone)]
pub enum Message {
    /// Worker to host, before the first step.
    BboxAnnounce {
        epoch: u64,
        boxes: Vec<Option<BoundingBox>>,
        required: BTreeSet<usize>,
    },
    /// Host to partition owner: `worker` needs the owner's slice at `step`.
    StateRequest {
        step: u64,
        worker: usize,
        host: usize,
        late: bool,
    },
    RequestAck {
        step: u64,
        partition: usize,
        late: bool,
    },
    BarrierToken {
        epoch: u64,
        round: u32,
    },
    StatePayload {
        step: u64,
        partition: usize,
        late: bool,
        state: EulerianState,
    },
    /// Host to worker: every slice the worker asked for at `step`.
    StateBundle {
        step: u64,
        slices: Vec<(usize, EulerianState)>,
    },
    /// Worker to host after a coverage violation.
    LateRequest {
        step: u64,
        partitions: BTreeSet<usize>,
    },
    LateBundle {
        step: u64,
        slices: Vec<(usize, EulerianState)>,
    },
    /// Worker to host: true sources of `step` per partition, plus the
    /// partitions needed for the next step.
    StepDone {
        step: u64,
        sources: Vec<(usize, SourceFields)>,
        next_required: BTreeSet<usize>,
        boxes: Vec<Option<BoundingBox>>,
        stats: TrackingStats,
    },
    SourcePayload {
        step: u64,
        worker: usize,
        sources: SourceFields,
    },
    EulerInput {
        step: u64,
        rank: usize,
        sources: SourceFields,
    },
    /// Final corrector of one rank, as a rate over one dt.
    Flush {
        rank: usize,
        corrector: SourceFields,
    },
    EulerResult {
        step: u64,
        state: EulerianState,
    },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::BboxAnnounce { .. } => "bbox_announce",
            Message::StateRequest { .. } => "state_request",
            Message::RequestAck { .. } => "request_ack",
            Message::BarrierToken { .. } => "barrier_token",
            Message::StatePayload { .. } => "state_payload",
            Message::StateBundle { .. } => "state_bundle",
            Message::LateRequest { .. } => "late_request",
            Message::LateBundle { .. } => "late_bundle",
            Message::StepDone { .. } => "step_done",
            Message::SourcePayload { .. } => "source_payload",
            Message::EulerInput { .. } => "euler_input",
            Message::Flush { .. } => "flush",
            Message::EulerResult { .. } => "euler_result",
        }
    }

    /// Step or epoch the message belongs to, when it has one.
    pub fn step(&self) -> Option<u64> {
        match self {
            Message::BboxAnnounce { epoch, .. } | Message::BarrierToken { epoch, .. } => Some(*epoch),
            Message::StateRequest { step, .. }
            | Message::RequestAck { step, .. }
            | Message::StatePayload { step, .. }
            | Message::StateBundle { step, .. }
            | Message::LateRequest { step, .. }
            | Message::LateBundle { step, .. }
            | Message::StepDone { step, .. }
            | Message::SourcePayload { step, .. }
            | Message::EulerInput { step, .. }
            | Message::EulerResult { step, .. } => Some(*step),
            Message::Flush { .. } => None,
        }
    }
}

/// Messages produced by one handler invocation, in send order.
#[derive(Default)]
pub struct Outbox {
    pub(crate) sent: Vec<(NodeId, Message)>,
}

impl Outbox {
    pub fn send(&mut self, to: NodeId, msg: Message) {
        self.sent.push((to, msg));
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, (NodeId, Message)> {
        self.sent.drain(..)
    }
}

/// An event-driven participant of the protocol. Handlers never block.
pub trait Actor: Send {
    fn id(&self) -> NodeId;
    fn start(&mut self, out: &mut Outbox) -> Result<(), RuntimeError>;
    fn handle(&mut self, from: NodeId, msg: Message, out: &mut Outbox) -> Result<(), RuntimeError>;
    fn is_done(&self) -> bool;
    /// One-line summary for deadlock dumps.
    fn status(&self) -> String;
    fn into_report(self: Box<Self>) -> NodeReport;
}

pub enum NodeReport {
    Comm(Box<super::comm::CommReport>),
    Compute(Box<super::compute::ComputeReport>),
    Worker(Box<super::worker::WorkerReport>),
    Discovery(super::consensus::DiscoveryReport),
}
