//! Tendermint-style BFT consensus (propose, prevote, precommit with locking).
//!
//! The state machine is sans-IO: every entry point returns a list of
//! [`Output`]s (messages, timer requests, decisions) and never touches the
//! network or a clock. Own messages are looped back internally, so a single
//! validator decides without putting a single vote on the wire.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::Digest;
use crate::types::{hash_block, Block, ValidatorId};

pub type Height = u64;
pub type Round = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidatorSet {
    ids: Vec<ValidatorId>,
}

impl ValidatorSet {
    pub fn new(ids: Vec<ValidatorId>) -> Self {
        assert!(!ids.is_empty(), "validator set must not be empty");
        Self { ids }
    }

    /// Validators `0..n`.
    pub fn with_size(n: usize) -> Self {
        Self::new((0..n as u32).map(ValidatorId).collect())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[ValidatorId] {
        &self.ids
    }

    pub fn contains(&self, id: ValidatorId) -> bool {
        self.ids.contains(&id)
    }

    /// Smallest integer strictly greater than 2n/3.
    pub fn quorum(&self) -> usize {
        2 * self.len() / 3 + 1
    }

    /// f + 1 where f = n - quorum is the tolerated number of faulty validators.
    pub fn weak_quorum(&self) -> usize {
        self.len() - self.quorum() + 1
    }
}

/// Round-robin proposer schedule: `ids[(height + round) mod n]`.
pub fn proposer_for(height: Height, round: Round, vset: &ValidatorSet) -> ValidatorId {
    let n = vset.len() as u64;
    vset.ids[((height + round as u64) % n) as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeoutConfig {
    pub propose_ms: u64,
    pub prevote_ms: u64,
    pub precommit_ms: u64,
    pub commit_ms: u64,
}

impl Default for TimeoutConfig {
    fn default() -> Self {
        Self {
            propose_ms: 3000,
            prevote_ms: 1000,
            precommit_ms: 1000,
            commit_ms: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VoteKind {
    Prevote,
    Precommit,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Vote {
    pub kind: VoteKind,
    pub height: Height,
    pub round: Round,
    /// `None` is a vote for nil.
    pub block_id: Option<Digest>,
    pub voter: ValidatorId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub height: Height,
    pub round: Round,
    pub block: Block,
    pub proposer_id: ValidatorId,
    /// Round in which the re-proposed block got a polka, if this is a re-proposal.
    pub valid_round: Option<Round>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsensusMsg {
    Proposal(Proposal),
    Vote(Vote),
    BlockRequest { height: Height, block_id: Digest },
    BlockResponse(Block),
    /// A decided block with the precommits that justify it, sent to peers
    /// that are still working on an already decided height.
    CommitCert { block: Block, precommits: Vec<Vote> },
}

impl ConsensusMsg {
    pub fn height(&self) -> Height {
        match self {
            ConsensusMsg::Proposal(p) => p.height,
            ConsensusMsg::Vote(v) => v.height,
            ConsensusMsg::BlockRequest { height, .. } => *height,
            ConsensusMsg::BlockResponse(b) => b.header.height,
            ConsensusMsg::CommitCert { block, .. } => block.header.height,
        }
    }

    pub fn round(&self) -> Option<Round> {
        match self {
            ConsensusMsg::Proposal(p) => Some(p.round),
            ConsensusMsg::Vote(v) => Some(v.round),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    Propose,
    Prevote,
    Precommit,
    CommitWait,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Propose { height: Height, round: Round },
    Prevote { height: Height, round: Round },
    Precommit { height: Height, round: Round },
    Commit { height: Height },
    /// Gossip / pool polling tick (owned by the node, not consensus).
    Tick,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Output {
    Broadcast(ConsensusMsg),
    SendTo(ValidatorId, ConsensusMsg),
    Arm { timer: Timer, delay_ms: u64 },
    Decide { block: Block, round: Round, precommits: Vec<Vote> },
    Trace(String),
}

/// What consensus needs from the node it runs in.
pub trait ConsensusHost {
    /// A fresh block for `height`, or `None` when no block should be made
    /// (empty pool with empty blocks disabled).
    fn create_block(&mut self, height: Height, proposer: ValidatorId) -> Option<Block>;
    fn validate_block(&mut self, block: &Block) -> bool;
    fn has_pending_txs(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Equivocation {
    pub voter: ValidatorId,
    pub height: Height,
    pub round: Round,
    pub kind: VoteKind,
    pub first: Option<Digest>,
    pub second: Option<Digest>,
}

#[derive(Debug, Default, Clone)]
struct RoundVotes {
    prevotes: BTreeMap<ValidatorId, Option<Digest>>,
    precommits: BTreeMap<ValidatorId, Option<Digest>>,
}

impl RoundVotes {
    fn tally(&self, kind: VoteKind) -> &BTreeMap<ValidatorId, Option<Digest>> {
        match kind {
            VoteKind::Prevote => &self.prevotes,
            VoteKind::Precommit => &self.precommits,
        }
    }

    fn count(&self, kind: VoteKind, id: Option<Digest>) -> usize {
        self.tally(kind).values().filter(|v| **v == id).count()
    }

    /// The block id (non-nil) that has at least `q` votes of `kind`, if any.
    fn block_with(&self, kind: VoteKind, q: usize) -> Option<Digest> {
        let mut counts: BTreeMap<Digest, usize> = BTreeMap::new();
        for id in self.tally(kind).values().flatten() {
            *counts.entry(*id).or_default() += 1;
        }
        counts.into_iter().find(|(_, c)| *c >= q).map(|(id, _)| id)
    }
}

#[derive(Debug, Clone)]
struct RoundProposal {
    block_id: Digest,
    valid_round: Option<Round>,
}

#[derive(Debug, Clone)]
pub struct ConsensusConfig {
    pub me: ValidatorId,
    pub validators: ValidatorSet,
    pub timeouts: TimeoutConfig,
    pub create_empty_blocks: bool,
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct ConsensusState {
    cfg: ConsensusConfig,
    height: Height,
    round: Round,
    step: Step,
    locked: Option<(Round, Digest)>,
    valid: Option<(Round, Digest)>,
    awaiting_txs: bool,
    blocks: BTreeMap<Digest, Block>,
    validity: BTreeMap<Digest, bool>,
    proposals: BTreeMap<Round, RoundProposal>,
    votes: BTreeMap<Round, RoundVotes>,
    senders: BTreeMap<Round, BTreeSet<ValidatorId>>,
    prevote_timer_armed: BTreeSet<Round>,
    precommit_timer_armed: BTreeSet<Round>,
    polka_handled: BTreeSet<Round>,
    requested: BTreeSet<Digest>,
    future: Vec<(ValidatorId, ConsensusMsg)>,
    certificates: BTreeMap<Height, (Block, Vec<Vote>)>,
    certs_sent: BTreeSet<(ValidatorId, Height)>,
    equivocations: Vec<Equivocation>,
    self_queue: VecDeque<ConsensusMsg>,
    decided_round: Option<Round>,
}

impl ConsensusState {
    pub fn new(cfg: ConsensusConfig) -> Self {
        assert!(cfg.validators.contains(cfg.me), "node is not a validator");
        Self {
            cfg,
            height: 0,
            round: 0,
            step: Step::CommitWait,
            locked: None,
            valid: None,
            awaiting_txs: false,
            blocks: BTreeMap::new(),
            validity: BTreeMap::new(),
            proposals: BTreeMap::new(),
            votes: BTreeMap::new(),
            senders: BTreeMap::new(),
            prevote_timer_armed: BTreeSet::new(),
            precommit_timer_armed: BTreeSet::new(),
            polka_handled: BTreeSet::new(),
            requested: BTreeSet::new(),
            future: Vec::new(),
            certificates: BTreeMap::new(),
            certs_sent: BTreeSet::new(),
            equivocations: Vec::new(),
            self_queue: VecDeque::new(),
            decided_round: None,
        }
    }

    pub fn height(&self) -> Height {
        self.height
    }

    pub fn round(&self) -> Round {
        self.round
    }

    pub fn step(&self) -> Step {
        self.step
    }

    pub fn locked(&self) -> Option<(Round, Digest)> {
        self.locked
    }

    pub fn valid_value(&self) -> Option<(Round, Digest)> {
        self.valid
    }

    pub fn is_awaiting_txs(&self) -> bool {
        self.awaiting_txs
    }

    pub fn equivocations(&self) -> &[Equivocation] {
        &self.equivocations
    }

    pub fn validators(&self) -> &ValidatorSet {
        &self.cfg.validators
    }

    pub fn me(&self) -> ValidatorId {
        self.cfg.me
    }

    /// Resets per-height state and enters round 0 of `height`.
    pub fn start_height(&mut self, host: &mut dyn ConsensusHost, height: Height) -> Vec<Output> {
        let mut out = Vec::new();
        self.height = height;
        self.locked = None;
        self.valid = None;
        self.blocks.clear();
        self.validity.clear();
        self.proposals.clear();
        self.votes.clear();
        self.senders.clear();
        self.prevote_timer_armed.clear();
        self.precommit_timer_armed.clear();
        self.polka_handled.clear();
        self.requested.clear();
        self.decided_round = None;
        // keep a bounded window of certificates for lagging peers
        while self.certificates.len() > 16 {
            let first = *self.certificates.keys().next().unwrap();
            self.certificates.remove(&first);
        }
        self.start_round(host, 0, &mut out);
        let buffered = core::mem::take(&mut self.future);
        for (from, msg) in buffered {
            if msg.height() == height {
                self.dispatch(host, from, msg, &mut out);
            } else if msg.height() > height {
                self.future.push((from, msg));
            }
        }
        self.settle(host, &mut out);
        out
    }

    /// Re-checks the empty-pool wait; called on new transactions and ticks.
    pub fn poll(&mut self, host: &mut dyn ConsensusHost) -> Vec<Output> {
        let mut out = Vec::new();
        if self.awaiting_txs && self.step == Step::Propose && host.has_pending_txs() {
            self.awaiting_txs = false;
            self.enter_propose(host, &mut out);
            self.settle(host, &mut out);
        }
        out
    }

    pub fn on_message(
        &mut self,
        host: &mut dyn ConsensusHost,
        from: ValidatorId,
        msg: ConsensusMsg,
    ) -> Vec<Output> {
        let mut out = Vec::new();
        if !self.cfg.validators.contains(from) {
            return out;
        }
        self.dispatch(host, from, msg, &mut out);
        self.settle(host, &mut out);
        out
    }

    pub fn on_timer(&mut self, host: &mut dyn ConsensusHost, timer: Timer) -> Vec<Output> {
        let mut out = Vec::new();
        match timer {
            Timer::Propose { height, round }
                if height == self.height && round == self.round && self.step == Step::Propose =>
            {
                self.trace(&mut out, "timeout propose");
                self.cast(VoteKind::Prevote, None, &mut out);
                self.step = Step::Prevote;
            }
            Timer::Prevote { height, round }
                if height == self.height && round == self.round && self.step == Step::Prevote =>
            {
                self.trace(&mut out, "timeout prevote");
                self.cast(VoteKind::Precommit, None, &mut out);
                self.step = Step::Precommit;
            }
            Timer::Precommit { height, round }
                if height == self.height
                    && round == self.round
                    && self.step != Step::CommitWait =>
            {
                self.trace(&mut out, "timeout precommit");
                self.start_round(host, round + 1, &mut out);
            }
            _ => return out,
        }
        self.settle(host, &mut out);
        out
    }

    /// Called by the node once the decided block is executed and stored;
    /// arms the post-decision commit wait.
    pub fn on_committed(&mut self, block: Block, precommits: Vec<Vote>) -> Vec<Output> {
        let height = block.header.height;
        self.certificates.insert(height, (block, precommits));
        alloc::vec![Output::Arm {
            timer: Timer::Commit { height },
            delay_ms: self.cfg.timeouts.commit_ms,
        }]
    }

    fn trace(&self, out: &mut Vec<Output>, what: &str) {
        if self.cfg.trace {
            out.push(Output::Trace(format!(
                "h={} r={} step={:?} {}",
                self.height, self.round, self.step, what
            )));
        }
    }

    fn start_round(&mut self, host: &mut dyn ConsensusHost, round: Round, out: &mut Vec<Output>) {
        self.round = round;
        self.step = Step::Propose;
        self.awaiting_txs = false;
        self.trace(out, "start round");
        let must_wait = round == 0 && !self.cfg.create_empty_blocks && !host.has_pending_txs();
        if must_wait && self.valid.is_none() {
            self.awaiting_txs = true;
            return;
        }
        self.enter_propose(host, out);
    }

    fn enter_propose(&mut self, host: &mut dyn ConsensusHost, out: &mut Vec<Output>) {
        let proposer = proposer_for(self.height, self.round, &self.cfg.validators);
        if proposer == self.cfg.me {
            let (block, valid_round) = match self.valid {
                Some((vr, id)) => match self.blocks.get(&id) {
                    Some(b) => (Some(b.clone()), Some(vr)),
                    None => (host.create_block(self.height, self.cfg.me), None),
                },
                None => (host.create_block(self.height, self.cfg.me), None),
            };
            match block {
                Some(block) => {
                    self.trace(out, "propose");
                    let p = Proposal {
                        height: self.height,
                        round: self.round,
                        block,
                        proposer_id: self.cfg.me,
                        valid_round,
                    };
                    self.broadcast(ConsensusMsg::Proposal(p), out);
                }
                None => {
                    // nothing to propose yet; wait for transactions
                    self.awaiting_txs = true;
                }
            }
        } else {
            out.push(Output::Arm {
                timer: Timer::Propose {
                    height: self.height,
                    round: self.round,
                },
                delay_ms: self.cfg.timeouts.propose_ms,
            });
        }
    }

    fn broadcast(&mut self, msg: ConsensusMsg, out: &mut Vec<Output>) {
        if self.cfg.validators.len() > 1 {
            out.push(Output::Broadcast(msg.clone()));
        }
        self.self_queue.push_back(msg);
    }

    fn cast(&mut self, kind: VoteKind, block_id: Option<Digest>, out: &mut Vec<Output>) {
        let vote = Vote {
            kind,
            height: self.height,
            round: self.round,
            block_id,
            voter: self.cfg.me,
        };
        if self.cfg.trace {
            out.push(Output::Trace(format!(
                "h={} r={} cast {:?} {}",
                self.height,
                self.round,
                kind,
                block_id.map_or(String::from("nil"), |d| format!("{:016x}", d.short()))
            )));
        }
        self.broadcast(ConsensusMsg::Vote(vote), out);
    }

    fn dispatch(
        &mut self,
        host: &mut dyn ConsensusHost,
        from: ValidatorId,
        msg: ConsensusMsg,
        out: &mut Vec<Output>,
    ) {
        let h = msg.height();
        if h > self.height {
            // cap the buffer; a flood of far-future messages is dropped
            if self.future.len() < 100_000 {
                self.future.push((from, msg));
            }
            return;
        }
        if h < self.height {
            self.help_lagging(from, h, &msg, out);
            return;
        }
        match msg {
            ConsensusMsg::Proposal(p) => self.on_proposal(host, from, p),
            ConsensusMsg::Vote(v) => self.on_vote(from, v),
            ConsensusMsg::BlockRequest { block_id, .. } => {
                if let Some(b) = self.blocks.get(&block_id) {
                    out.push(Output::SendTo(from, ConsensusMsg::BlockResponse(b.clone())));
                }
            }
            ConsensusMsg::BlockResponse(block) => {
                let id = hash_block(&block);
                if self.requested.contains(&id) {
                    self.blocks.entry(id).or_insert(block);
                }
            }
            ConsensusMsg::CommitCert { block, precommits } => {
                self.on_certificate(block, precommits);
            }
        }
    }

    /// Answers a message about an already decided height with its certificate.
    fn help_lagging(
        &mut self,
        from: ValidatorId,
        h: Height,
        msg: &ConsensusMsg,
        out: &mut Vec<Output>,
    ) {
        if from == self.cfg.me || matches!(msg, ConsensusMsg::CommitCert { .. }) {
            return;
        }
        if let Some((block, precommits)) = self.certificates.get(&h) {
            if self.certs_sent.insert((from, h)) {
                out.push(Output::SendTo(
                    from,
                    ConsensusMsg::CommitCert {
                        block: block.clone(),
                        precommits: precommits.clone(),
                    },
                ));
            }
        }
    }

    fn on_proposal(&mut self, host: &mut dyn ConsensusHost, from: ValidatorId, p: Proposal) {
        let scheduled = proposer_for(p.height, p.round, &self.cfg.validators);
        if p.proposer_id != from || scheduled != from {
            return;
        }
        if p.valid_round.is_some_and(|vr| vr >= p.round) {
            return;
        }
        self.senders.entry(p.round).or_default().insert(from);
        if self.proposals.contains_key(&p.round) {
            // first proposal per round wins; later ones are equivocation
            return;
        }
        let id = hash_block(&p.block);
        self.validity.entry(id).or_insert_with(|| host.validate_block(&p.block));
        self.blocks.entry(id).or_insert(p.block);
        self.proposals.insert(
            p.round,
            RoundProposal {
                block_id: id,
                valid_round: p.valid_round,
            },
        );
    }

    fn on_vote(&mut self, from: ValidatorId, v: Vote) {
        if v.voter != from {
            return;
        }
        self.record_vote(v);
    }

    fn record_vote(&mut self, v: Vote) {
        self.senders.entry(v.round).or_default().insert(v.voter);
        let round = self.votes.entry(v.round).or_default();
        let tally = match v.kind {
            VoteKind::Prevote => &mut round.prevotes,
            VoteKind::Precommit => &mut round.precommits,
        };
        match tally.get(&v.voter) {
            None => {
                tally.insert(v.voter, v.block_id);
            }
            Some(prev) if *prev != v.block_id => {
                self.equivocations.push(Equivocation {
                    voter: v.voter,
                    height: v.height,
                    round: v.round,
                    kind: v.kind,
                    first: *prev,
                    second: v.block_id,
                });
            }
            Some(_) => {}
        }
    }

    fn on_certificate(&mut self, block: Block, precommits: Vec<Vote>) {
        if self.decided_round.is_some() {
            return;
        }
        let id = hash_block(&block);
        let Some(first) = precommits.first() else {
            return;
        };
        let round = first.round;
        let mut voters = BTreeSet::new();
        for v in &precommits {
            let well_formed = v.kind == VoteKind::Precommit
                && v.height == self.height
                && v.round == round
                && v.block_id == Some(id)
                && self.cfg.validators.contains(v.voter);
            if !well_formed {
                return;
            }
            voters.insert(v.voter);
        }
        if voters.len() < self.cfg.validators.quorum() {
            return;
        }
        self.blocks.entry(id).or_insert(block);
        for v in precommits {
            self.record_vote(v);
        }
    }

    fn is_valid(&mut self, host: &mut dyn ConsensusHost, id: &Digest) -> Option<bool> {
        if let Some(v) = self.validity.get(id) {
            return Some(*v);
        }
        let block = self.blocks.get(id)?;
        let ok = host.validate_block(block);
        self.validity.insert(*id, ok);
        Some(ok)
    }

    /// Drains own messages and fires every enabled rule until nothing changes.
    fn settle(&mut self, host: &mut dyn ConsensusHost, out: &mut Vec<Output>) {
        loop {
            while let Some(msg) = self.self_queue.pop_front() {
                let me = self.cfg.me;
                self.dispatch(host, me, msg, out);
            }
            if !self.apply_rules(host, out) && self.self_queue.is_empty() {
                break;
            }
        }
    }

    fn apply_rules(&mut self, host: &mut dyn ConsensusHost, out: &mut Vec<Output>) -> bool {
        if self.decided_round.is_some() {
            return false;
        }
        let q = self.cfg.validators.quorum();

        // decide: a known valid block with a quorum of precommits in any round
        let rounds: Vec<Round> = self.votes.keys().copied().collect();
        for r in rounds {
            let Some(id) = self.votes[&r].block_with(VoteKind::Precommit, q) else {
                continue;
            };
            match self.is_valid(host, &id) {
                Some(true) => {
                    self.decide(r, id, out);
                    return true;
                }
                Some(false) => {}
                None => {
                    if self.requested.insert(id) {
                        let voters: Vec<ValidatorId> = self.votes[&r]
                            .precommits
                            .iter()
                            .filter(|(v, b)| **b == Some(id) && **v != self.cfg.me)
                            .map(|(v, _)| *v)
                            .collect();
                        for v in voters {
                            out.push(Output::SendTo(
                                v,
                                ConsensusMsg::BlockRequest {
                                    height: self.height,
                                    block_id: id,
                                },
                            ));
                        }
                    }
                }
            }
        }

        // skip ahead when f+1 validators are already in a later round
        let weak = self.cfg.validators.weak_quorum();
        let ahead = self
            .senders
            .iter()
            .filter(|(r, s)| **r > self.round && s.len() >= weak)
            .map(|(r, _)| *r)
            .max();
        if let Some(r) = ahead {
            self.trace(out, "round skip");
            self.start_round(host, r, out);
            return true;
        }

        let round = self.round;
        let votes = self.votes.get(&round).cloned().unwrap_or_default();

        if self.step == Step::Propose {
            if let Some(p) = self.proposals.get(&round).cloned() {
                let valid = self.is_valid(host, &p.block_id).unwrap_or(false);
                match p.valid_round {
                    None => {
                        let lock_ok = self.locked.is_none_or(|(_, l)| l == p.block_id);
                        let vote = (valid && lock_ok).then_some(p.block_id);
                        self.awaiting_txs = false;
                        self.cast(VoteKind::Prevote, vote, out);
                        self.step = Step::Prevote;
                        return true;
                    }
                    Some(vr) => {
                        let polka = self
                            .votes
                            .get(&vr)
                            .is_some_and(|rv| rv.count(VoteKind::Prevote, Some(p.block_id)) >= q);
                        if polka {
                            let lock_ok = self
                                .locked
                                .is_none_or(|(lr, l)| lr <= vr || l == p.block_id);
                            let vote = (valid && lock_ok).then_some(p.block_id);
                            self.awaiting_txs = false;
                            self.cast(VoteKind::Prevote, vote, out);
                            self.step = Step::Prevote;
                            return true;
                        }
                    }
                }
            }
        }

        if self.step == Step::Prevote
            && votes.prevotes.len() >= q
            && self.prevote_timer_armed.insert(round)
        {
            out.push(Output::Arm {
                timer: Timer::Prevote {
                    height: self.height,
                    round,
                },
                delay_ms: self.cfg.timeouts.prevote_ms,
            });
        }

        if self.step >= Step::Prevote && !self.polka_handled.contains(&round) {
            if let Some(p) = self.proposals.get(&round).cloned() {
                if votes.count(VoteKind::Prevote, Some(p.block_id)) >= q
                    && self.is_valid(host, &p.block_id) == Some(true)
                {
                    self.polka_handled.insert(round);
                    if self.step == Step::Prevote {
                        self.trace(out, "polka: lock");
                        self.locked = Some((round, p.block_id));
                        self.cast(VoteKind::Precommit, Some(p.block_id), out);
                        self.step = Step::Precommit;
                    }
                    self.valid = Some((round, p.block_id));
                    return true;
                }
            }
        }

        if self.step == Step::Prevote && votes.count(VoteKind::Prevote, None) >= q {
            self.cast(VoteKind::Precommit, None, out);
            self.step = Step::Precommit;
            return true;
        }

        if votes.precommits.len() >= q && self.precommit_timer_armed.insert(round) {
            out.push(Output::Arm {
                timer: Timer::Precommit {
                    height: self.height,
                    round,
                },
                delay_ms: self.cfg.timeouts.precommit_ms,
            });
        }
        false
    }

    fn decide(&mut self, round: Round, id: Digest, out: &mut Vec<Output>) {
        let block = self.blocks[&id].clone();
        let precommits: Vec<Vote> = self.votes[&round]
            .precommits
            .iter()
            .filter(|(_, b)| **b == Some(id))
            .map(|(voter, _)| Vote {
                kind: VoteKind::Precommit,
                height: self.height,
                round,
                block_id: Some(id),
                voter: *voter,
            })
            .collect();
        self.decided_round = Some(round);
        self.step = Step::CommitWait;
        self.awaiting_txs = false;
        self.trace(out, "decide");
        out.push(Output::Decide {
            block,
            round,
            precommits,
        });
    }
}

const TAG_PROPOSAL: u8 = 0x01;
const TAG_VOTE: u8 = 0x02;
const TAG_BLOCK_REQUEST: u8 = 0x03;
const TAG_BLOCK_RESPONSE: u8 = 0x04;
const TAG_COMMIT_CERT: u8 = 0x05;

impl Encode for Vote {
    fn encode_to(&self, w: &mut Writer) {
        w.u8(match self.kind {
            VoteKind::Prevote => 1,
            VoteKind::Precommit => 2,
        })
        .u64(self.height)
        .u32(self.round)
        .put(&self.block_id)
        .u32(self.voter.0);
    }
}

impl Decode for Vote {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.position();
        let kind = match r.u8()? {
            1 => VoteKind::Prevote,
            2 => VoteKind::Precommit,
            tag => return Err(DecodeError::InvalidTag { offset, tag }),
        };
        Ok(Vote {
            kind,
            height: r.u64()?,
            round: r.u32()?,
            block_id: r.get()?,
            voter: ValidatorId(r.u32()?),
        })
    }
}

impl Encode for ConsensusMsg {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            ConsensusMsg::Proposal(p) => {
                w.u8(TAG_PROPOSAL)
                    .u64(p.height)
                    .u32(p.round)
                    .put(&p.block)
                    .u32(p.proposer_id.0);
                match p.valid_round {
                    None => w.u8(0),
                    Some(r) => w.u8(1).u32(r),
                };
            }
            ConsensusMsg::Vote(v) => {
                w.u8(TAG_VOTE).put(v);
            }
            ConsensusMsg::BlockRequest { height, block_id } => {
                w.u8(TAG_BLOCK_REQUEST).u64(*height).put(block_id);
            }
            ConsensusMsg::BlockResponse(b) => {
                w.u8(TAG_BLOCK_RESPONSE).put(b);
            }
            ConsensusMsg::CommitCert { block, precommits } => {
                w.u8(TAG_COMMIT_CERT).put(block).list(precommits);
            }
        }
    }
}

impl Decode for ConsensusMsg {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.position();
        Ok(match r.u8()? {
            TAG_PROPOSAL => {
                let height = r.u64()?;
                let round = r.u32()?;
                let block = r.get()?;
                let proposer_id = ValidatorId(r.u32()?);
                let valid_round = match r.u8()? {
                    0 => None,
                    1 => Some(r.u32()?),
                    tag => {
                        return Err(DecodeError::InvalidTag {
                            offset: r.position() - 1,
                            tag,
                        })
                    }
                };
                ConsensusMsg::Proposal(Proposal {
                    height,
                    round,
                    block,
                    proposer_id,
                    valid_round,
                })
            }
            TAG_VOTE => ConsensusMsg::Vote(r.get()?),
            TAG_BLOCK_REQUEST => ConsensusMsg::BlockRequest {
                height: r.u64()?,
                block_id: r.get()?,
            },
            TAG_BLOCK_RESPONSE => ConsensusMsg::BlockResponse(r.get()?),
            TAG_COMMIT_CERT => ConsensusMsg::CommitCert {
                block: r.get()?,
                precommits: r.list()?,
            },
            tag => return Err(DecodeError::InvalidTag { offset, tag }),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BcTransaction, BlockHeader, ClientId, WlStatement};
    use alloc::vec;

    #[test]
    fn quorum_thresholds() {
        for (n, q, weak) in [(1, 1, 1), (2, 2, 1), (3, 3, 1), (4, 3, 2), (7, 5, 3), (8, 6, 3)] {
            let v = ValidatorSet::with_size(n);
            assert_eq!(v.quorum(), q, "n={n}");
            assert_eq!(v.weak_quorum(), weak, "n={n}");
        }
    }

    #[test]
    fn proposer_rotation() {
        let one = ValidatorSet::with_size(1);
        for h in 1..10 {
            for r in 0..3 {
                assert_eq!(proposer_for(h, r, &one), ValidatorId(0));
            }
        }
        let four = ValidatorSet::with_size(4);
        let got: Vec<u32> = (0..4).map(|r| proposer_for(1, r, &four).0).collect();
        assert_eq!(got, vec![1, 2, 3, 0]);
    }

    struct Host {
        has_txs: bool,
        proposals_made: usize,
    }

    fn sample_block(height: Height, proposer: ValidatorId) -> Block {
        let tx = BcTransaction::new(vec![WlStatement::new("x", ClientId(0), 0).unwrap()], 0)
            .unwrap();
        Block {
            header: BlockHeader {
                height,
                prev_block_hash: Digest::ZERO,
                app_hash: Digest::ZERO,
                proposer_id: proposer,
                block_time: 1,
                num_txs: 1,
            },
            txs: vec![tx],
        }
    }

    impl ConsensusHost for Host {
        fn create_block(&mut self, height: Height, proposer: ValidatorId) -> Option<Block> {
            if !self.has_txs {
                return None;
            }
            self.proposals_made += 1;
            Some(sample_block(height, proposer))
        }
        fn validate_block(&mut self, _: &Block) -> bool {
            true
        }
        fn has_pending_txs(&self) -> bool {
            self.has_txs
        }
    }

    fn state(n: usize, me: u32) -> ConsensusState {
        ConsensusState::new(ConsensusConfig {
            me: ValidatorId(me),
            validators: ValidatorSet::with_size(n),
            timeouts: TimeoutConfig::default(),
            create_empty_blocks: false,
            trace: false,
        })
    }

    #[test]
    fn single_validator_decides_without_wire_votes() {
        let mut s = state(1, 0);
        let mut host = Host {
            has_txs: true,
            proposals_made: 0,
        };
        let out = s.start_height(&mut host, 1);
        assert!(out.iter().all(|o| !matches!(o, Output::Broadcast(_) | Output::SendTo(..))));
        let decided: Vec<_> = out
            .iter()
            .filter_map(|o| match o {
                Output::Decide { round, .. } => Some(*round),
                _ => None,
            })
            .collect();
        assert_eq!(decided, vec![0]);
    }

    #[test]
    fn empty_pool_waits_without_timers() {
        let mut s = state(4, 1);
        let mut host = Host {
            has_txs: false,
            proposals_made: 0,
        };
        let out = s.start_height(&mut host, 1);
        assert!(out.is_empty());
        assert!(s.is_awaiting_txs());
        host.has_txs = true;
        let out = s.poll(&mut host);
        assert_eq!(host.proposals_made, 1);
        assert!(matches!(out[0], Output::Broadcast(ConsensusMsg::Proposal(_))));
    }

    #[test]
    fn proposal_from_wrong_validator_ignored() {
        let mut s = state(4, 0);
        let mut host = Host {
            has_txs: true,
            proposals_made: 0,
        };
        s.start_height(&mut host, 1);
        // validator 2 is not the proposer for (1, 0)
        let p = Proposal {
            height: 1,
            round: 0,
            block: sample_block(1, ValidatorId(2)),
            proposer_id: ValidatorId(2),
            valid_round: None,
        };
        let out = s.on_message(&mut host, ValidatorId(2), ConsensusMsg::Proposal(p));
        assert!(out.is_empty());
        assert_eq!(s.step(), Step::Propose);
    }

    #[test]
    fn conflicting_votes_recorded_as_equivocation() {
        let mut s = state(4, 0);
        let mut host = Host {
            has_txs: true,
            proposals_made: 0,
        };
        s.start_height(&mut host, 1);
        let v = |id| Vote {
            kind: VoteKind::Prevote,
            height: 1,
            round: 0,
            block_id: id,
            voter: ValidatorId(3),
        };
        s.on_message(&mut host, ValidatorId(3), ConsensusMsg::Vote(v(None)));
        s.on_message(&mut host, ValidatorId(3), ConsensusMsg::Vote(v(Some(Digest::of(b"x")))));
        assert_eq!(s.equivocations().len(), 1);
        assert_eq!(s.equivocations()[0].voter, ValidatorId(3));
    }

    #[test]
    fn message_encoding_round_trips() {
        let msgs = vec![
            ConsensusMsg::Proposal(Proposal {
                height: 3,
                round: 2,
                block: sample_block(3, ValidatorId(1)),
                proposer_id: ValidatorId(1),
                valid_round: Some(1),
            }),
            ConsensusMsg::Vote(Vote {
                kind: VoteKind::Precommit,
                height: 3,
                round: 0,
                block_id: None,
                voter: ValidatorId(2),
            }),
            ConsensusMsg::BlockRequest {
                height: 9,
                block_id: Digest::of(b"b"),
            },
        ];
        for m in msgs {
            assert_eq!(ConsensusMsg::decode(&m.encode()).unwrap(), m);
        }
    }
}
