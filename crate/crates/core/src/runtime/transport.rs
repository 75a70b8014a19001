//! Delivery of actor messages: one thread per actor over channels, or a
//! seeded single-threaded scheduler that totally orders deliveries.

use std::collections::{BTreeMap, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::message::{Actor, Message, NodeId, NodeReport, Outbox};
use crate::error::RuntimeError;
use crate::registry::Registry;

#[derive(Debug, Clone, PartialEq)]
pub struct TransportOptions {
    pub seed: u64,
    /// Upper bound of the random extra delay per message, in scheduler
    /// ticks. Deterministic scheduler only.
    pub max_delay_ticks: u64,
    /// Longest wait without any delivery before declaring a deadlock.
    pub timeout: Duration,
    pub trace: bool,
}

impl Default for TransportOptions {
    fn default() -> Self {
        TransportOptions {
            seed: 0,
            max_delay_ticks: 0,
            timeout: Duration::from_secs(60),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    /// Global delivery order (deterministic) or per-receiver order (live).
    pub seq: u64,
    pub tick: u64,
    pub from: String,
    pub to: String,
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
}

impl TraceEvent {
    fn new(seq: u64, tick: u64, from: NodeId, to: NodeId, msg: &Message) -> Self {
        TraceEvent {
            seq,
            tick,
            from: from.to_string(),
            to: to.to_string(),
            kind: msg.kind(),
            step: msg.step(),
        }
    }
}

pub struct Delivery {
    /// Reports in the order the actors were supplied.
    pub reports: Vec<NodeReport>,
    pub trace: Vec<TraceEvent>,
}

pub trait Scheduler: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, actors: Vec<Box<dyn Actor>>, opts: &TransportOptions) -> Result<Delivery, RuntimeError>;
}

pub struct LiveScheduler;
pub struct DeterministicScheduler;

pub fn scheduler_registry() -> Registry<Box<dyn Scheduler>> {
    let mut r: Registry<Box<dyn Scheduler>> = Registry::new("scheduler");
    r.register("live", || Box::new(LiveScheduler));
    r.register("deterministic", || Box::new(DeterministicScheduler));
    r
}

fn index_of(actors: &[Box<dyn Actor>]) -> Result<BTreeMap<NodeId, usize>, RuntimeError> {
    let mut idx = BTreeMap::new();
    for (i, a) in actors.iter().enumerate() {
        if idx.insert(a.id(), i).is_some() {
            return Err(RuntimeError::Protocol(format!("duplicate actor {}", a.id())));
        }
    }
    Ok(idx)
}

fn panic_text(p: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".into()
    }
}

fn guarded<F>(f: F) -> Result<(), RuntimeError>
where
    F: FnOnce() -> Result<(), RuntimeError>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(p) => Err(RuntimeError::Panic(panic_text(p))),
    }
}

type Envelope = (NodeId, Message);

impl Scheduler for LiveScheduler {
    fn name(&self) -> &'static str {
        "live"
    }

    fn run(&self, actors: Vec<Box<dyn Actor>>, opts: &TransportOptions) -> Result<Delivery, RuntimeError> {
        let index = index_of(&actors)?;
        let n = actors.len();
        let (txs, rxs): (Vec<Sender<Envelope>>, Vec<Receiver<Envelope>>) = (0..n).map(|_| unbounded()).unzip();
        let board: Mutex<Vec<String>> = Mutex::new(actors.iter().map(|a| a.status()).collect());
        let abort = AtomicBool::new(false);
        let failure: Mutex<Option<RuntimeError>> = Mutex::new(None);
        let poll = Duration::from_millis(20).min(opts.timeout);

        let dispatch = |from: NodeId, out: &mut Outbox| -> Result<(), RuntimeError> {
            for (to, msg) in out.drain() {
                let i = *index.get(&to).ok_or_else(|| RuntimeError::UnknownNode(to.to_string()))?;
                txs[i]
                    .send((from, msg))
                    .map_err(|_| RuntimeError::Protocol(format!("channel to {to} closed")))?;
            }
            Ok(())
        };
        let dump = || -> String {
            let b = board.lock().unwrap_or_else(|e| e.into_inner());
            actors_dump(&index, &b)
        };

        let results: Vec<(Option<Box<dyn Actor>>, Vec<TraceEvent>)> = std::thread::scope(|s| {
            let handles: Vec<_> = actors
                .into_iter()
                .zip(rxs.iter())
                .enumerate()
                .map(|(i, (mut actor, rx))| {
                    let dispatch = &dispatch;
                    let board = &board;
                    let abort = &abort;
                    let failure = &failure;
                    let dump = &dump;
                    s.spawn(move || {
                        let me = actor.id();
                        let mut trace = Vec::new();
                        let mut seq = 0u64;
                        let mut out = Outbox::default();
                        let run = guarded(|| {
                            actor.start(&mut out)?;
                            dispatch(me, &mut out)?;
                            let mut last = Instant::now();
                            while !actor.is_done() {
                                if abort.load(Ordering::SeqCst) {
                                    return Ok(());
                                }
                                match rx.recv_timeout(poll) {
                                    Ok((from, msg)) => {
                                        if opts.trace {
                                            trace.push(TraceEvent::new(seq, 0, from, me, &msg));
                                        }
                                        seq += 1;
                                        actor.handle(from, msg, &mut out)?;
                                        dispatch(me, &mut out)?;
                                        board.lock().unwrap_or_else(|e| e.into_inner())[i] = actor.status();
                                        last = Instant::now();
                                    }
                                    Err(RecvTimeoutError::Timeout) => {
                                        if last.elapsed() >= opts.timeout {
                                            return Err(RuntimeError::Deadlock(dump()));
                                        }
                                    }
                                    Err(RecvTimeoutError::Disconnected) => {
                                        return Err(RuntimeError::Protocol(format!("{me}: inbox closed")));
                                    }
                                }
                            }
                            Ok(())
                        });
                        board.lock().unwrap_or_else(|e| e.into_inner())[i] = actor.status();
                        if let Err(e) = run {
                            abort.store(true, Ordering::SeqCst);
                            let mut f = failure.lock().unwrap_or_else(|e| e.into_inner());
                            if f.is_none() {
                                *f = Some(e);
                            }
                            return (None, trace);
                        }
                        (Some(actor), trace)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or((None, Vec::new())))
                .collect()
        });

        if let Some(e) = failure.into_inner().unwrap_or_else(|e| e.into_inner()) {
            return Err(e);
        }
        let mut reports = Vec::with_capacity(n);
        let mut trace = Vec::new();
        for (actor, t) in results {
            let actor = actor.ok_or_else(|| RuntimeError::Protocol("actor lost".into()))?;
            if !actor.is_done() {
                return Err(RuntimeError::Protocol(format!("{} stopped early", actor.id())));
            }
            reports.push(actor.into_report());
            trace.extend(t);
        }
        Ok(Delivery { reports, trace })
    }
}

fn actors_dump(index: &BTreeMap<NodeId, usize>, statuses: &[String]) -> String {
    index
        .iter()
        .map(|(id, &i)| format!("  {id}: {}", statuses[i]))
        .collect::<Vec<_>>()
        .join("\n")
}

struct Pending {
    deliver_at: u64,
    msg: Message,
}

impl Scheduler for DeterministicScheduler {
    fn name(&self) -> &'static str {
        "deterministic"
    }

    fn run(&self, mut actors: Vec<Box<dyn Actor>>, opts: &TransportOptions) -> Result<Delivery, RuntimeError> {
        let index = index_of(&actors)?;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        // Per (from, to) FIFO queues.
        let mut queues: BTreeMap<(NodeId, NodeId), VecDeque<Pending>> = BTreeMap::new();
        let mut tick = 0u64;
        let mut seq = 0u64;
        let mut trace = Vec::new();

        let enqueue = |from: NodeId,
                           out: &mut Outbox,
                           queues: &mut BTreeMap<(NodeId, NodeId), VecDeque<Pending>>,
                           tick: u64,
                           rng: &mut ChaCha8Rng|
         -> Result<(), RuntimeError> {
            for (to, msg) in out.drain() {
                if !index.contains_key(&to) {
                    return Err(RuntimeError::UnknownNode(to.to_string()));
                }
                let delay = if opts.max_delay_ticks > 0 {
                    rng.gen_range(0..=opts.max_delay_ticks)
                } else {
                    0
                };
                let q = queues.entry((from, to)).or_default();
                let floor = q.back().map_or(0, |p| p.deliver_at);
                q.push_back(Pending {
                    deliver_at: (tick + delay).max(floor),
                    msg,
                });
            }
            Ok(())
        };

        let mut out = Outbox::default();
        for a in actors.iter_mut() {
            let id = a.id();
            guarded(|| a.start(&mut out))?;
            enqueue(id, &mut out, &mut queues, tick, &mut rng)?;
        }
        loop {
            if actors.iter().all(|a| a.is_done()) {
                break;
            }
            let ready: Vec<(NodeId, NodeId)> = queues
                .iter()
                .filter(|(_, q)| q.front().is_some_and(|p| p.deliver_at <= tick))
                .map(|(k, _)| *k)
                .collect();
            if ready.is_empty() {
                let next = queues.values().filter_map(|q| q.front()).map(|p| p.deliver_at).min();
                match next {
                    Some(t) => {
                        tick = t;
                        continue;
                    }
                    None => {
                        let statuses: Vec<String> = actors.iter().map(|a| a.status()).collect();
                        return Err(RuntimeError::Deadlock(actors_dump(&index, &statuses)));
                    }
                }
            }
            let key = ready[rng.gen_range(0..ready.len())];
            let pending = queues.get_mut(&key).and_then(|q| q.pop_front()).expect("ready queue");
            let (from, to) = key;
            if opts.trace {
                trace.push(TraceEvent::new(seq, tick, from, to, &pending.msg));
            }
            seq += 1;
            tick += 1;
            let actor = &mut actors[index[&to]];
            guarded(|| actor.handle(from, pending.msg, &mut out))?;
            enqueue(to, &mut out, &mut queues, tick, &mut rng)?;
        }
        Ok(Delivery {
            reports: actors.into_iter().map(|a| a.into_report()).collect(),
            trace,
        })
    }
}
