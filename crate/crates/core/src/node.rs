//! One validator: consensus, mempool, ledger and backend behind a single
//! serial event interface.
//!
//! A node never touches a clock or a socket. Callers feed it submissions,
//! wire messages and timer expirations together with the current time, and
//! carry out the returned [`Effect`]s.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::{format, vec};

use crate::abci::{AbciBackend, CheckResult};
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::consensus::{
    ConsensusConfig, ConsensusHost, ConsensusMsg, ConsensusState, Height, Output, Round,
    TimeoutConfig, ValidatorSet, Vote, VoteKind,
};
use crate::hash::Digest;
use crate::ledger::{BlockRecord, Ledger};
use crate::mempool::{Admission, Mempool, MempoolConfig, Rejection};
use crate::types::{BcTransaction, Block, BlockHeader, ValidatorId, DEFAULT_MAX_BLOCK_BYTES};

pub use crate::consensus::Timer;

/// Encoded size of a block with no transactions.
pub const BLOCK_OVERHEAD_BYTES: usize = 8 + 32 + 32 + 4 + 8 + 4 + 4;

#[derive(Debug, Clone)]
pub struct NodeConfig {
    pub id: ValidatorId,
    pub validators: ValidatorSet,
    /// State hash of the common initial backend state.
    pub genesis_app_hash: Digest,
    pub timeouts: TimeoutConfig,
    pub mempool: MempoolConfig,
    pub max_block_bytes: usize,
    pub create_empty_blocks: bool,
    pub gossip_interval_ms: u64,
    pub trace: bool,
}

impl NodeConfig {
    pub fn new(id: ValidatorId, validators: ValidatorSet, genesis_app_hash: Digest) -> Self {
        Self {
            id,
            validators,
            genesis_app_hash,
            timeouts: TimeoutConfig::default(),
            mempool: MempoolConfig::default(),
            max_block_bytes: DEFAULT_MAX_BLOCK_BYTES,
            create_empty_blocks: false,
            gossip_interval_ms: 5,
            trace: false,
        }
    }
}

/// Scripted deviation applied to a node's outgoing messages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Behavior {
    #[default]
    Honest,
    /// Sends nothing at all.
    Silent,
    /// As proposer, sends a second, different block to half of the peers.
    EquivocateProposal,
    /// Sends a contradicting vote to half of the peers.
    ConflictingVotes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MsgKind {
    Proposal,
    Prevote,
    Precommit,
    BlockRequest,
    BlockResponse,
    CommitCert,
    TxHashes,
    TxRequest,
    Txs,
}

impl MsgKind {
    pub const ALL: [MsgKind; 9] = [
        MsgKind::Proposal,
        MsgKind::Prevote,
        MsgKind::Precommit,
        MsgKind::BlockRequest,
        MsgKind::BlockResponse,
        MsgKind::CommitCert,
        MsgKind::TxHashes,
        MsgKind::TxRequest,
        MsgKind::Txs,
    ];

    pub fn is_vote(self) -> bool {
        matches!(self, MsgKind::Prevote | MsgKind::Precommit)
    }

    pub fn is_consensus(self) -> bool {
        !matches!(self, MsgKind::TxHashes | MsgKind::TxRequest | MsgKind::Txs)
    }

    pub fn name(self) -> &'static str {
        match self {
            MsgKind::Proposal => "proposal",
            MsgKind::Prevote => "prevote",
            MsgKind::Precommit => "precommit",
            MsgKind::BlockRequest => "block_request",
            MsgKind::BlockResponse => "block_response",
            MsgKind::CommitCert => "commit_cert",
            MsgKind::TxHashes => "tx_hashes",
            MsgKind::TxRequest => "tx_request",
            MsgKind::Txs => "txs",
        }
    }
}

/// Everything that travels between nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireMsg {
    Consensus(ConsensusMsg),
    TxHashes(Vec<Digest>),
    TxRequest(Vec<Digest>),
    Txs(Vec<BcTransaction>),
}

const TAG_TX_HASHES: u8 = 0x10;
const TAG_TX_REQUEST: u8 = 0x11;
const TAG_TXS: u8 = 0x12;

impl WireMsg {
    pub fn kind(&self) -> MsgKind {
        match self {
            WireMsg::Consensus(ConsensusMsg::Proposal(_)) => MsgKind::Proposal,
            WireMsg::Consensus(ConsensusMsg::Vote(v)) => match v.kind {
                VoteKind::Prevote => MsgKind::Prevote,
                VoteKind::Precommit => MsgKind::Precommit,
            },
            WireMsg::Consensus(ConsensusMsg::BlockRequest { .. }) => MsgKind::BlockRequest,
            WireMsg::Consensus(ConsensusMsg::BlockResponse(_)) => MsgKind::BlockResponse,
            WireMsg::Consensus(ConsensusMsg::CommitCert { .. }) => MsgKind::CommitCert,
            WireMsg::TxHashes(_) => MsgKind::TxHashes,
            WireMsg::TxRequest(_) => MsgKind::TxRequest,
            WireMsg::Txs(_) => MsgKind::Txs,
        }
    }
}

impl Encode for WireMsg {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            WireMsg::Consensus(m) => {
                w.put(m);
            }
            WireMsg::TxHashes(h) => {
                w.u8(TAG_TX_HASHES).list(h);
            }
            WireMsg::TxRequest(h) => {
                w.u8(TAG_TX_REQUEST).list(h);
            }
            WireMsg::Txs(t) => {
                w.u8(TAG_TXS).list(t);
            }
        }
    }
}

impl Decode for WireMsg {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let mut peek = r.clone();
        Ok(match peek.u8()? {
            TAG_TX_HASHES => {
                r.u8()?;
                WireMsg::TxHashes(r.list()?)
            }
            TAG_TX_REQUEST => {
                r.u8()?;
                WireMsg::TxRequest(r.list()?)
            }
            TAG_TXS => {
                r.u8()?;
                WireMsg::Txs(r.list()?)
            }
            _ => WireMsg::Consensus(r.get()?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Effect {
    Send {
        to: ValidatorId,
        kind: MsgKind,
        bytes: Vec<u8>,
    },
    Arm {
        timer: Timer,
        delay_ms: u64,
    },
    Committed {
        record: Arc<BlockRecord>,
        round: Round,
    },
    /// The node stopped after an unrecoverable backend or ledger failure.
    Halted(String),
    Trace(String),
}

pub struct Node<B> {
    cfg: NodeConfig,
    consensus: ConsensusState,
    mempool: Mempool,
    ledger: Ledger,
    backend: B,
    app_hash: Digest,
    behavior: Behavior,
    gossip_armed: bool,
    halted: Option<String>,
    peers: Vec<ValidatorId>,
}

/// Read access to node state for block creation and validation.
struct HostView<'a> {
    cfg: &'a NodeConfig,
    mempool: &'a Mempool,
    ledger: &'a Ledger,
    app_hash: Digest,
    now: u64,
}

impl HostView<'_> {
    fn prev_time(&self) -> u64 {
        self.ledger.tip().map_or(0, |r| r.block.header.block_time)
    }
}

impl ConsensusHost for HostView<'_> {
    fn create_block(&mut self, height: Height, proposer: ValidatorId) -> Option<Block> {
        let budget = self.cfg.max_block_bytes.saturating_sub(BLOCK_OVERHEAD_BYTES);
        let txs = self.mempool.reap(budget);
        if txs.is_empty() && !self.cfg.create_empty_blocks {
            return None;
        }
        Some(Block {
            header: BlockHeader {
                height,
                prev_block_hash: self.ledger.tip_hash(),
                app_hash: self.app_hash,
                proposer_id: proposer,
                block_time: self.now.max(self.prev_time() + 1),
                num_txs: txs.len() as u32,
            },
            txs,
        })
    }

    fn validate_block(&mut self, block: &Block) -> bool {
        let h = &block.header;
        if !block.is_well_formed()
            || h.height != self.ledger.height() + 1
            || h.prev_block_hash != self.ledger.tip_hash()
            || h.app_hash != self.app_hash
            || !self.cfg.validators.contains(h.proposer_id)
            || h.block_time <= self.prev_time()
            || (h.num_txs == 0 && !self.cfg.create_empty_blocks)
        {
            return false;
        }
        if block.encode().len() > self.cfg.max_block_bytes {
            return false;
        }
        let mut seen = alloc::collections::BTreeSet::new();
        block.txs.iter().all(|tx| {
            let hash = tx.hash();
            seen.insert(hash) && !self.mempool.is_committed(&hash)
        })
    }

    fn has_pending_txs(&self) -> bool {
        !self.mempool.is_empty()
    }
}

impl<B: AbciBackend> Node<B> {
    pub fn new(cfg: NodeConfig, backend: B) -> Self {
        let peers: Vec<ValidatorId> = cfg
            .validators
            .ids()
            .iter()
            .copied()
            .filter(|v| *v != cfg.id)
            .collect();
        let consensus = ConsensusState::new(ConsensusConfig {
            me: cfg.id,
            validators: cfg.validators.clone(),
            timeouts: cfg.timeouts,
            create_empty_blocks: cfg.create_empty_blocks,
            trace: cfg.trace,
        });
        Self {
            mempool: Mempool::new(cfg.mempool, peers.iter().copied()),
            app_hash: cfg.genesis_app_hash,
            consensus,
            ledger: Ledger::new(),
            backend,
            behavior: Behavior::Honest,
            gossip_armed: false,
            halted: None,
            peers,
            cfg,
        }
    }

    pub fn id(&self) -> ValidatorId {
        self.cfg.id
    }

    pub fn config(&self) -> &NodeConfig {
        &self.cfg
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn mempool(&self) -> &Mempool {
        &self.mempool
    }

    pub fn consensus(&self) -> &ConsensusState {
        &self.consensus
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    pub fn backend_mut(&mut self) -> &mut B {
        &mut self.backend
    }

    pub fn app_hash(&self) -> Digest {
        self.app_hash
    }

    pub fn height(&self) -> u64 {
        self.ledger.height()
    }

    pub fn halted(&self) -> Option<&str> {
        self.halted.as_deref()
    }

    pub fn behavior(&self) -> Behavior {
        self.behavior
    }

    pub fn set_behavior(&mut self, behavior: Behavior) {
        self.behavior = behavior;
    }

    /// Boots the node into height 1.
    pub fn start(&mut self, now: u64) -> Vec<Effect> {
        self.with_consensus(now, |c, host| c.start_height(host, 1))
    }

    /// Client submission: mempool admission, then the application's CheckTx.
    pub fn submit(&mut self, bytes: &[u8], now: u64) -> (Admission, Vec<Effect>) {
        if let Some(reason) = &self.halted {
            return (
                Admission::Rejected(Rejection::App(format!("node halted: {reason}"))),
                Vec::new(),
            );
        }
        let admission = self.mempool.check_tx(bytes);
        let admission = self.app_check(admission, bytes);
        let mut effects = Vec::new();
        if admission.is_accepted() {
            self.after_admission(now, &mut effects);
        }
        (admission, effects)
    }

    fn app_check(&mut self, admission: Admission, bytes: &[u8]) -> Admission {
        let Admission::Accepted(hash) = admission else {
            return admission;
        };
        match self.backend.check_tx(bytes) {
            Ok(CheckResult::Accept) => admission,
            Ok(CheckResult::Reject(reason)) => {
                self.mempool.remove(&hash);
                Admission::Rejected(Rejection::App(reason))
            }
            Err(e) => {
                self.mempool.remove(&hash);
                Admission::Rejected(Rejection::App(e.to_string()))
            }
        }
    }

    fn after_admission(&mut self, now: u64, effects: &mut Vec<Effect>) {
        self.arm_gossip(effects);
        let more = self.with_consensus(now, |c, host| c.poll(host));
        effects.extend(more);
    }

    fn arm_gossip(&mut self, effects: &mut Vec<Effect>) {
        if !self.gossip_armed && !self.peers.is_empty() && self.mempool.has_pending_gossip() {
            self.gossip_armed = true;
            effects.push(Effect::Arm {
                timer: Timer::Tick,
                delay_ms: self.cfg.gossip_interval_ms,
            });
        }
    }

    pub fn on_wire(&mut self, from: ValidatorId, bytes: &[u8], now: u64) -> Vec<Effect> {
        if self.halted.is_some() || from == self.cfg.id {
            return Vec::new();
        }
        let Ok(msg) = WireMsg::decode(bytes) else {
            return Vec::new();
        };
        match msg {
            WireMsg::Consensus(m) => self.with_consensus(now, |c, host| c.on_message(host, from, m)),
            WireMsg::TxHashes(hashes) => {
                let wanted = self.mempool.on_hashes(from, &hashes);
                let mut effects = Vec::new();
                if !wanted.is_empty() {
                    self.send(from, WireMsg::TxRequest(wanted), &mut effects);
                }
                effects
            }
            WireMsg::TxRequest(hashes) => {
                let txs = self.mempool.on_request(&hashes);
                let mut effects = Vec::new();
                if !txs.is_empty() {
                    self.send(from, WireMsg::Txs(txs), &mut effects);
                }
                effects
            }
            WireMsg::Txs(txs) => {
                let mut effects = Vec::new();
                let mut any = false;
                for tx in txs {
                    let bytes = tx.encode();
                    let admission = self.mempool.check_tx(&bytes);
                    if let Admission::Accepted(hash) = admission {
                        self.mempool.mark_known(from, hash);
                        any |= self.app_check(admission, &bytes).is_accepted();
                    }
                }
                if any {
                    self.after_admission(now, &mut effects);
                }
                effects
            }
        }
    }

    pub fn on_timer(&mut self, timer: Timer, now: u64) -> Vec<Effect> {
        if self.halted.is_some() {
            return Vec::new();
        }
        match timer {
            Timer::Tick => {
                self.gossip_armed = false;
                let mut effects = Vec::new();
                for (peer, hashes) in self.mempool.gossip_tick() {
                    self.send(peer, WireMsg::TxHashes(hashes), &mut effects);
                }
                self.arm_gossip(&mut effects);
                let more = self.with_consensus(now, |c, host| c.poll(host));
                effects.extend(more);
                effects
            }
            Timer::Commit { height } => {
                if height != self.ledger.height() {
                    return Vec::new();
                }
                self.with_consensus(now, |c, host| c.start_height(host, height + 1))
            }
            t => self.with_consensus(now, |c, host| c.on_timer(host, t)),
        }
    }

    fn with_consensus(
        &mut self,
        now: u64,
        f: impl FnOnce(&mut ConsensusState, &mut dyn ConsensusHost) -> Vec<Output>,
    ) -> Vec<Effect> {
        let mut host = HostView {
            cfg: &self.cfg,
            mempool: &self.mempool,
            ledger: &self.ledger,
            app_hash: self.app_hash,
            now,
        };
        let outputs = f(&mut self.consensus, &mut host);
        let mut effects = Vec::new();
        self.route(outputs, now, &mut effects);
        effects
    }

    fn route(&mut self, outputs: Vec<Output>, now: u64, effects: &mut Vec<Effect>) {
        for o in outputs {
            match o {
                Output::Broadcast(m) => self.broadcast(m, effects),
                Output::SendTo(to, m) => self.send(to, WireMsg::Consensus(m), effects),
                Output::Arm { timer, delay_ms } => effects.push(Effect::Arm { timer, delay_ms }),
                Output::Trace(t) => effects.push(Effect::Trace(format!("{} {t}", self.cfg.id))),
                Output::Decide {
                    block,
                    round,
                    precommits,
                } => {
                    if let Err(reason) = self.commit_block(block, round, precommits, now, effects) {
                        let msg = format!("{} halted: {reason}", self.cfg.id);
                        self.halted = Some(msg.clone());
                        effects.push(Effect::Halted(msg));
                        return;
                    }
                }
            }
        }
    }

    fn commit_block(
        &mut self,
        block: Block,
        round: Round,
        precommits: Vec<Vote>,
        now: u64,
        effects: &mut Vec<Effect>,
    ) -> Result<(), String> {
        let b = &mut self.backend;
        let handle = b.begin_block(&block.header).map_err(|e| e.to_string())?;
        let mut statuses = Vec::with_capacity(block.txs.len());
        for tx in &block.txs {
            statuses.push(b.deliver_tx(handle, &tx.encode()).map_err(|e| e.to_string())?);
        }
        b.end_block(handle).map_err(|e| e.to_string())?;
        let flat: Vec<_> = statuses.iter().flatten().cloned().collect();
        let app_hash = b.commit(handle, &flat).map_err(|e| e.to_string())?;
        let hashes: Vec<Digest> = block.txs.iter().map(BcTransaction::hash).collect();
        let record = self
            .ledger
            .append_block(block.clone(), statuses, app_hash)
            .map_err(|e| e.to_string())?;
        self.app_hash = app_hash;
        self.mempool.update_committed(hashes.iter());
        effects.push(Effect::Committed { record, round });
        let outs = self.consensus.on_committed(block, precommits);
        self.route(outs, now, effects);
        Ok(())
    }

    fn broadcast(&mut self, m: ConsensusMsg, effects: &mut Vec<Effect>) {
        let peers = self.peers.clone();
        let half = peers.len() / 2;
        let alternate = match (&m, self.behavior) {
            (ConsensusMsg::Proposal(p), Behavior::EquivocateProposal) => {
                let mut other = p.clone();
                other.block.header.block_time += 1;
                Some(ConsensusMsg::Proposal(other))
            }
            (ConsensusMsg::Vote(v), Behavior::ConflictingVotes) => {
                let mut other = v.clone();
                other.block_id = match v.block_id {
                    Some(_) => None,
                    None => Some(Digest::of(b"conflicting vote")),
                };
                Some(ConsensusMsg::Vote(other))
            }
            _ => None,
        };
        for (i, peer) in peers.into_iter().enumerate() {
            let msg = match &alternate {
                Some(alt) if i >= half => alt.clone(),
                _ => m.clone(),
            };
            self.send(peer, WireMsg::Consensus(msg), effects);
        }
    }

    fn send(&mut self, to: ValidatorId, msg: WireMsg, effects: &mut Vec<Effect>) {
        if self.behavior == Behavior::Silent {
            return;
        }
        effects.push(Effect::Send {
            to,
            kind: msg.kind(),
            bytes: msg.encode(),
        });
    }
}

/// Number of sends per message kind in an effect list.
pub fn count_kinds<'a>(effects: impl IntoIterator<Item = &'a Effect>) -> Vec<(MsgKind, usize)> {
    let mut counts = vec![0usize; MsgKind::ALL.len()];
    for e in effects {
        if let Effect::Send { kind, .. } = e {
            counts[MsgKind::ALL.iter().position(|k| k == kind).unwrap()] += 1;
        }
    }
    MsgKind::ALL.iter().copied().zip(counts).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abci::{DbTxHandle, QueryError, QueryResult};
    use crate::abci::AbciError;
    use crate::types::{ClientId, ExecStatus, WlStatement};

    /// Accepts everything; the state hash counts committed statements.
    #[derive(Default)]
    struct Counter {
        applied: u64,
        pending: u64,
    }

    impl AbciBackend for Counter {
        fn begin_block(&mut self, _: &BlockHeader) -> Result<DbTxHandle, AbciError> {
            self.pending = 0;
            Ok(DbTxHandle(1))
        }
        fn deliver_tx(&mut self, _: DbTxHandle, tx: &[u8]) -> Result<Vec<ExecStatus>, AbciError> {
            let tx = BcTransaction::decode(tx).unwrap();
            self.pending += tx.statements().len() as u64;
            Ok(tx.statements().iter().map(|_| ExecStatus::ok(Vec::new())).collect())
        }
        fn end_block(&mut self, _: DbTxHandle) -> Result<(), AbciError> {
            Ok(())
        }
        fn commit(&mut self, _: DbTxHandle, _: &[ExecStatus]) -> Result<Digest, AbciError> {
            self.applied += self.pending;
            Ok(Digest::of(&self.applied.to_be_bytes()))
        }
        fn check_tx(&mut self, _: &[u8]) -> Result<CheckResult, AbciError> {
            Ok(CheckResult::Accept)
        }
        fn query(&mut self, _: &str) -> Result<QueryResult, QueryError> {
            Err(QueryError::NotReadOnly)
        }
    }

    fn tx(i: u64) -> Vec<u8> {
        BcTransaction::new(vec![WlStatement::new("x", ClientId(0), i).unwrap()], i)
            .unwrap()
            .encode()
    }

    #[test]
    fn single_node_commits_on_submit() {
        let cfg = NodeConfig::new(ValidatorId(0), ValidatorSet::with_size(1), Digest::ZERO);
        let mut node = Node::new(cfg, Counter::default());
        assert!(node.start(0).is_empty());
        let (adm, effects) = node.submit(&tx(1), 5);
        assert!(adm.is_accepted());
        let committed: Vec<_> = effects
            .iter()
            .filter_map(|e| match e {
                Effect::Committed { record, round } => Some((record.height(), *round)),
                _ => None,
            })
            .collect();
        assert_eq!(committed, vec![(1, 0)]);
        assert!(count_kinds(&effects).iter().all(|(_, c)| *c == 0));
        assert_eq!(node.ledger().get_block(1).unwrap().block.header.block_time, 5);
        assert!(node.mempool().is_empty());
        let (dup, _) = node.submit(&tx(1), 6);
        assert_eq!(dup, Admission::Rejected(Rejection::Duplicate));
    }

    #[test]
    fn wire_messages_round_trip() {
        let msgs = vec![
            WireMsg::TxHashes(vec![Digest::of(b"a")]),
            WireMsg::TxRequest(vec![]),
            WireMsg::Txs(vec![BcTransaction::decode(&tx(3)).unwrap()]),
            WireMsg::Consensus(ConsensusMsg::Vote(Vote {
                kind: VoteKind::Prevote,
                height: 1,
                round: 0,
                block_id: None,
                voter: ValidatorId(1),
            })),
        ];
        for m in msgs {
            assert_eq!(WireMsg::decode(&m.encode()).unwrap(), m);
        }
    }

    #[test]
    fn silent_node_sends_nothing() {
        let cfg = NodeConfig::new(ValidatorId(1), ValidatorSet::with_size(4), Digest::ZERO);
        let mut node = Node::new(cfg, Counter::default());
        node.set_behavior(Behavior::Silent);
        node.start(0);
        let (_, effects) = node.submit(&tx(1), 0);
        assert!(effects.iter().all(|e| !matches!(e, Effect::Send { .. })));
    }
}
