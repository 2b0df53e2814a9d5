//! In-process network of validators with seeded link delays and scripted faults.
//!
//! Events are processed in `(time, insertion sequence)` order. In virtual mode
//! time only moves when an event is processed, which makes every run a pure
//! function of its seed, configuration and submission schedule. Realtime
//! drivers set the clock from a wall clock before each step instead.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{format, vec};

use thiserror::Error;

use crate::abci::AbciBackend;
use crate::consensus::{Round, TimeoutConfig, ValidatorSet};
use crate::hash::Digest;
use crate::ledger::BlockRecord;
use crate::mempool::{Admission, MempoolConfig, Rejection};
use crate::node::{Behavior, Effect, MsgKind, Node, NodeConfig, Timer};
use crate::rng::SplitMix64;
use crate::types::{ValidatorId, DEFAULT_MAX_BLOCK_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkLatency {
    pub base_ms: u64,
    pub jitter_ms: u64,
}

/// Message delay model: uniform in `[base, base + jitter]` per message, with
/// optional per-link overrides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyProfile {
    pub name: String,
    pub default: LinkLatency,
    pub overrides: BTreeMap<(u32, u32), LinkLatency>,
    pub seed: u64,
}

/// Regions used by the named multi-region profiles.
pub const REGIONS: [&str; 4] = ["frankfurt", "ireland", "london", "paris"];

/// One-way delays in milliseconds between [`REGIONS`], half of typical
/// published inter-region round-trip times.
const REGION_ONE_WAY_MS: [[u64; 4]; 4] = [
    [0, 11, 7, 5],
    [11, 0, 6, 9],
    [7, 6, 0, 4],
    [5, 9, 4, 0],
];

impl LatencyProfile {
    pub const NAMES: [&'static str; 4] = ["zero", "one-region", "two-regions", "four-regions"];

    /// Every message is delivered with delay exactly 0.
    pub fn zero() -> Self {
        Self::uniform("zero", 0, 0)
    }

    pub fn uniform(name: &str, base_ms: u64, jitter_ms: u64) -> Self {
        Self {
            name: name.to_string(),
            default: LinkLatency { base_ms, jitter_ms },
            overrides: BTreeMap::new(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Nodes placed round-robin over `regions` (indices into [`REGIONS`]).
    pub fn regional(name: &str, n: usize, regions: &[usize]) -> Self {
        let mut p = Self::uniform(name, 0, 1);
        let region = |i: usize| regions[i % regions.len()];
        for a in 0..n {
            for b in 0..n {
                if a == b {
                    continue;
                }
                let base = REGION_ONE_WAY_MS[region(a)][region(b)];
                let link = LinkLatency {
                    base_ms: base,
                    jitter_ms: (base / 10).max(1),
                };
                p.overrides.insert((a as u32, b as u32), link);
            }
        }
        p
    }

    /// Looks up one of [`LatencyProfile::NAMES`] for an `n`-node network.
    pub fn named(name: &str, n: usize) -> Option<Self> {
        Some(match name {
            "zero" => Self::zero(),
            "one-region" => Self::regional(name, n, &[0]),
            "two-regions" => Self::regional(name, n, &[0, 3]),
            "four-regions" => Self::regional(name, n, &[0, 1, 2, 3]),
            _ => return None,
        })
    }

    pub fn link(&self, src: ValidatorId, dst: ValidatorId) -> LinkLatency {
        self.overrides
            .get(&(src.0, dst.0))
            .copied()
            .unwrap_or(self.default)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockMode {
    Virtual,
    Realtime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimClock {
    pub mode: ClockMode,
    pub now: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// The node stops processing anything for good.
    Crash,
    Byzantine(Behavior),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultEntry {
    pub node: ValidatorId,
    pub fault: Fault,
    /// Inclusive height window, judged by the height the node is working on.
    pub start_height: u64,
    pub end_height: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FaultSchedule {
    pub entries: Vec<FaultEntry>,
}

impl FaultSchedule {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn always(node: ValidatorId, fault: Fault) -> Self {
        Self {
            entries: vec![FaultEntry {
                node,
                fault,
                start_height: 1,
                end_height: u64::MAX,
            }],
        }
    }

    pub fn fault_at(&self, node: ValidatorId, height: u64) -> Option<Fault> {
        self.entries
            .iter()
            .find(|e| e.node == node && (e.start_height..=e.end_height).contains(&height))
            .map(|e| e.fault)
    }

    /// Largest number of distinct nodes faulty at any single height.
    pub fn max_simultaneous(&self) -> usize {
        let mut worst = 0;
        for e in &self.entries {
            let mut nodes: Vec<ValidatorId> = self
                .entries
                .iter()
                .filter(|o| o.start_height <= e.start_height && e.start_height <= o.end_height)
                .map(|o| o.node)
                .collect();
            nodes.sort();
            nodes.dedup();
            worst = worst.max(nodes.len());
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub timeouts: TimeoutConfig,
    pub mempool: MempoolConfig,
    pub max_block_bytes: usize,
    pub create_empty_blocks: bool,
    pub gossip_interval_ms: u64,
    pub trace: bool,
    pub genesis_app_hash: Digest,
    pub faults: FaultSchedule,
    pub clock: ClockMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            timeouts: TimeoutConfig::default(),
            mempool: MempoolConfig::default(),
            max_block_bytes: DEFAULT_MAX_BLOCK_BYTES,
            create_empty_blocks: false,
            gossip_interval_ms: 5,
            trace: false,
            genesis_app_hash: Digest::ZERO,
            faults: FaultSchedule::none(),
            clock: ClockMode::Virtual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid network configuration: {0}")]
    Config(String),
    #[error("deadline {deadline} ms exceeded with {pending} events pending")]
    DeadlineExceeded { deadline: u64, pending: usize },
    #[error("run_until_quiescent needs the virtual clock")]
    NotVirtual,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KindStats {
    pub count: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageStats {
    pub per_kind: BTreeMap<MsgKind, KindStats>,
    pub dropped: u64,
}

impl MessageStats {
    pub fn count(&self, kind: MsgKind) -> u64 {
        self.per_kind.get(&kind).map_or(0, |s| s.count)
    }

    pub fn votes(&self) -> u64 {
        self.count(MsgKind::Prevote) + self.count(MsgKind::Precommit)
    }

    pub fn total(&self) -> u64 {
        self.per_kind.values().map(|s| s.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimEvent {
    Committed {
        node: ValidatorId,
        record: Arc<BlockRecord>,
        round: Round,
        time: u64,
    },
    /// Result of a submission scheduled with [`Simulation::schedule_submit`].
    Submitted {
        node: ValidatorId,
        tag: u64,
        admission: Admission,
        time: u64,
    },
    Halted {
        node: ValidatorId,
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimReport {
    pub end_time: u64,
    pub events_processed: u64,
    pub heights: Vec<u64>,
    pub stats: MessageStats,
}

#[derive(Debug)]
enum Event {
    Deliver {
        from: ValidatorId,
        to: ValidatorId,
        bytes: Vec<u8>,
    },
    Timer {
        node: ValidatorId,
        timer: Timer,
    },
    Submit {
        node: ValidatorId,
        tag: u64,
        bytes: Vec<u8>,
    },
}

pub struct Simulation<B> {
    clock: SimClock,
    nodes: Vec<Node<B>>,
    crashed: Vec<bool>,
    queue: BTreeMap<(u64, u64), Event>,
    seq: u64,
    profile: LatencyProfile,
    link_rng: Vec<SplitMix64>,
    link_last: Vec<u64>,
    faults: FaultSchedule,
    stats: MessageStats,
    events: Vec<SimEvent>,
    traces: Vec<String>,
    keep_traces: bool,
    processed: u64,
}

/// Boots `n` validators from a common genesis and wires the message bus.
pub fn spawn_network<B: AbciBackend>(
    n: usize,
    latency: LatencyProfile,
    config: NetworkConfig,
    mut make_backend: impl FnMut(ValidatorId) -> B,
) -> Result<Simulation<B>, SimError> {
    if n == 0 {
        return Err(SimError::Config("a network needs at least one node".into()));
    }
    let t = &config.timeouts;
    if t.propose_ms == 0 || t.prevote_ms == 0 || t.precommit_ms == 0 {
        return Err(SimError::Config("propose/prevote/precommit timeouts must be > 0".into()));
    }
    if config.mempool.capacity == 0 {
        return Err(SimError::Config("mempool capacity must be at least 1".into()));
    }
    if config.gossip_interval_ms == 0 {
        return Err(SimError::Config("gossip interval must be > 0".into()));
    }
    if let Some(e) = config.faults.entries.iter().find(|e| e.node.index() >= n) {
        return Err(SimError::Config(format!("fault names unknown node {}", e.node)));
    }
    let vset = ValidatorSet::with_size(n);
    let nodes = (0..n as u32)
        .map(ValidatorId)
        .map(|id| {
            let cfg = NodeConfig {
                id,
                validators: vset.clone(),
                genesis_app_hash: config.genesis_app_hash,
                timeouts: config.timeouts,
                mempool: config.mempool,
                max_block_bytes: config.max_block_bytes,
                create_empty_blocks: config.create_empty_blocks,
                gossip_interval_ms: config.gossip_interval_ms,
                trace: config.trace,
            };
            Node::new(cfg, make_backend(id))
        })
        .collect();
    let link_rng = (0..(n * n) as u64)
        .map(|i| SplitMix64::for_index(latency.seed, i))
        .collect();
    let mut sim = Simulation {
        clock: SimClock {
            mode: config.clock,
            now: 0,
        },
        nodes,
        crashed: vec![false; n],
        queue: BTreeMap::new(),
        seq: 0,
        profile: latency,
        link_rng,
        link_last: vec![0; n * n],
        faults: config.faults,
        stats: MessageStats::default(),
        events: Vec::new(),
        traces: Vec::new(),
        keep_traces: config.trace,
        processed: 0,
    };
    for i in 0..n {
        if sim.prepare(i) {
            let effects = sim.nodes[i].start(0);
            sim.apply(i, effects);
        }
    }
    Ok(sim)
}

impl<B: AbciBackend> Simulation<B> {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn now(&self) -> u64 {
        self.clock.now
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    /// Moves the clock forward (realtime drivers). Never moves it back.
    pub fn advance_to(&mut self, now: u64) {
        self.clock.now = self.clock.now.max(now);
    }

    pub fn nodes(&self) -> &[Node<B>] {
        &self.nodes
    }

    pub fn node(&self, id: ValidatorId) -> &Node<B> {
        &self.nodes[id.index()]
    }

    pub fn node_mut(&mut self, id: ValidatorId) -> &mut Node<B> {
        &mut self.nodes[id.index()]
    }

    pub fn is_crashed(&self, id: ValidatorId) -> bool {
        self.crashed[id.index()]
    }

    pub fn profile(&self) -> &LatencyProfile {
        &self.profile
    }

    pub fn stats(&self) -> &MessageStats {
        &self.stats
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    pub fn peek_time(&self) -> Option<u64> {
        self.queue.keys().next().map(|(t, _)| *t)
    }

    pub fn take_events(&mut self) -> Vec<SimEvent> {
        core::mem::take(&mut self.events)
    }

    pub fn take_traces(&mut self) -> Vec<String> {
        core::mem::take(&mut self.traces)
    }

    /// Immediate client submission at the current time.
    pub fn submit(&mut self, node: ValidatorId, bytes: &[u8]) -> Admission {
        let i = node.index();
        if !self.prepare(i) {
            return Admission::Rejected(Rejection::App("node crashed".into()));
        }
        let now = self.clock.now;
        let (admission, effects) = self.nodes[i].submit(bytes, now);
        self.apply(i, effects);
        admission
    }

    /// Queues a client submission at virtual time `at`; its admission is
    /// reported as [`SimEvent::Submitted`] with the given tag.
    pub fn schedule_submit(&mut self, at: u64, node: ValidatorId, tag: u64, bytes: Vec<u8>) {
        self.push(at, Event::Submit { node, tag, bytes });
    }

    /// Processes the next event. Returns false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(((t, _), event)) = self.queue.pop_first() else {
            return false;
        };
        self.clock.now = self.clock.now.max(t);
        self.processed += 1;
        match event {
            Event::Deliver { from, to, bytes } => {
                let i = to.index();
                if self.prepare(i) {
                    let effects = self.nodes[i].on_wire(from, &bytes, self.clock.now);
                    self.apply(i, effects);
                } else {
                    self.stats.dropped += 1;
                }
            }
            Event::Timer { node, timer } => {
                let i = node.index();
                if self.prepare(i) {
                    let effects = self.nodes[i].on_timer(timer, self.clock.now);
                    self.apply(i, effects);
                }
            }
            Event::Submit { node, tag, bytes } => {
                let admission = self.submit(node, &bytes);
                self.events.push(SimEvent::Submitted {
                    node,
                    tag,
                    admission,
                    time: self.clock.now,
                });
            }
        }
        true
    }

    /// Processes every event due at or before `now`.
    pub fn step_until(&mut self, now: u64) {
        while self.peek_time().is_some_and(|t| t <= now) {
            self.step();
        }
        self.advance_to(now);
    }

    /// Runs until no events remain. Fails if the next event lies beyond
    /// `deadline` (virtual milliseconds).
    pub fn run_until_quiescent(&mut self, deadline: u64) -> Result<SimReport, SimError> {
        self.run_until(deadline, |_| false)
    }

    /// Runs until `done` holds or no events remain.
    pub fn run_until(
        &mut self,
        deadline: u64,
        mut done: impl FnMut(&Self) -> bool,
    ) -> Result<SimReport, SimError> {
        if self.clock.mode != ClockMode::Virtual {
            return Err(SimError::NotVirtual);
        }
        while !done(self) {
            match self.peek_time() {
                None => break,
                Some(t) if t > deadline => {
                    return Err(SimError::DeadlineExceeded {
                        deadline,
                        pending: self.queue.len(),
                    })
                }
                Some(_) => {
                    self.step();
                }
            }
        }
        Ok(self.report())
    }

    pub fn report(&self) -> SimReport {
        SimReport {
            end_time: self.clock.now,
            events_processed: self.processed,
            heights: self.nodes.iter().map(Node::height).collect(),
            stats: self.stats.clone(),
        }
    }

    fn push(&mut self, at: u64, event: Event) {
        self.queue.insert((at, self.seq), event);
        self.seq += 1;
    }

    /// Applies the fault schedule for node `i`; false if it is crashed.
    fn prepare(&mut self, i: usize) -> bool {
        if self.crashed[i] {
            return false;
        }
        let id = ValidatorId(i as u32);
        let height = self.nodes[i].height() + 1;
        match self.faults.fault_at(id, height) {
            Some(Fault::Crash) => {
                self.crashed[i] = true;
                false
            }
            Some(Fault::Byzantine(b)) => {
                self.nodes[i].set_behavior(b);
                true
            }
            None => {
                self.nodes[i].set_behavior(Behavior::Honest);
                true
            }
        }
    }

    fn apply(&mut self, i: usize, effects: Vec<Effect>) {
        let id = ValidatorId(i as u32);
        let n = self.nodes.len();
        let now = self.clock.now;
        for e in effects {
            match e {
                Effect::Send { to, kind, bytes } => {
                    let s = self.stats.per_kind.entry(kind).or_default();
                    s.count += 1;
                    s.bytes += bytes.len() as u64;
                    let link = id.index() * n + to.index();
                    let LinkLatency { base_ms, jitter_ms } = self.profile.link(id, to);
                    let delay = self.link_rng[link].range(base_ms, base_ms + jitter_ms);
                    let at = (now + delay).max(self.link_last[link]);
                    self.link_last[link] = at;
                    self.push(
                        at,
                        Event::Deliver {
                            from: id,
                            to,
                            bytes,
                        },
                    );
                }
                Effect::Arm { timer, delay_ms } => {
                    self.push(now + delay_ms, Event::Timer { node: id, timer });
                }
                Effect::Committed { record, round } => self.events.push(SimEvent::Committed {
                    node: id,
                    record,
                    round,
                    time: now,
                }),
                Effect::Halted(reason) => self.events.push(SimEvent::Halted { node: id, reason }),
                Effect::Trace(t) => {
                    if self.keep_traces {
                        self.traces.push(format!("{now:>8} {t}"));
                    }
                }
            }
        }
    }
}
