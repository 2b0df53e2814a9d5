//! Per-node pending transaction pool with FIFO reaping and hash-first gossip.
//!
//! The pool is owned by its node's event loop; every admission, reap, commit
//! update and gossip step goes through `&mut self`, so calls are serialized by
//! construction.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::codec::{Decode, Encode};
use crate::hash::Digest;
use crate::types::{BcTransaction, ValidatorId};

pub const DEFAULT_CAPACITY: usize = 100_000;
pub const DEFAULT_MAX_TX_BYTES: usize = 4 * 1024 * 1024;
/// Hashes announced to one peer per gossip tick.
pub const GOSSIP_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MempoolConfig {
    pub capacity: usize,
    pub max_tx_bytes: usize,
}

impl Default for MempoolConfig {
    fn default() -> Self {
        Self {
            capacity: DEFAULT_CAPACITY,
            max_tx_bytes: DEFAULT_MAX_TX_BYTES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    PoolFull,
    Duplicate,
    Malformed(String),
    TooLarge { size: usize, max: usize },
    /// Refused by the application's CheckTx.
    App(String),
}

impl core::fmt::Display for Rejection {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Rejection::PoolFull => f.write_str("mempool is full"),
            Rejection::Duplicate => f.write_str("duplicate transaction"),
            Rejection::Malformed(m) => write!(f, "malformed transaction: {m}"),
            Rejection::TooLarge { size, max } => {
                write!(f, "transaction of {size} bytes exceeds {max}")
            }
            Rejection::App(m) => write!(f, "rejected by application: {m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Admission {
    Accepted(Digest),
    Rejected(Rejection),
}

impl Admission {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Admission::Accepted(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolEntry {
    pub tx: BcTransaction,
    pub tx_hash: Digest,
    pub arrival_seq: u64,
    pub size: usize,
}

#[derive(Debug, Default, Clone)]
struct PeerGossip {
    known: BTreeSet<Digest>,
    cursor: u64,
}

#[derive(Debug, Clone)]
pub struct Mempool {
    config: MempoolConfig,
    entries: BTreeMap<u64, PoolEntry>,
    by_hash: BTreeMap<Digest, u64>,
    committed: BTreeSet<Digest>,
    next_seq: u64,
    peers: BTreeMap<ValidatorId, PeerGossip>,
}

impl Mempool {
    pub fn new(config: MempoolConfig, peers: impl IntoIterator<Item = ValidatorId>) -> Self {
        assert!(config.capacity >= 1, "mempool capacity must be at least 1");
        Self {
            config,
            entries: BTreeMap::new(),
            by_hash: BTreeMap::new(),
            committed: BTreeSet::new(),
            next_seq: 0,
            peers: peers
                .into_iter()
                .map(|p| (p, PeerGossip::default()))
                .collect(),
        }
    }

    pub fn config(&self) -> &MempoolConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, hash: &Digest) -> bool {
        self.by_hash.contains_key(hash)
    }

    pub fn is_committed(&self, hash: &Digest) -> bool {
        self.committed.contains(hash)
    }

    pub fn get(&self, hash: &Digest) -> Option<&BcTransaction> {
        self.by_hash
            .get(hash)
            .and_then(|seq| self.entries.get(seq))
            .map(|e| &e.tx)
    }

    /// Encoding-level admission check. SQL text is not validated here.
    pub fn check_tx(&mut self, bytes: &[u8]) -> Admission {
        match BcTransaction::decode(bytes) {
            Ok(tx) => self.admit(tx, Digest::of(bytes), bytes.len()),
            Err(e) => Admission::Rejected(Rejection::Malformed(e.to_string())),
        }
    }

    /// Admission for an already decoded transaction.
    pub fn insert(&mut self, tx: BcTransaction) -> Admission {
        let bytes = tx.encode();
        self.admit(tx, Digest::of(&bytes), bytes.len())
    }

    fn admit(&mut self, tx: BcTransaction, tx_hash: Digest, size: usize) -> Admission {
        if size > self.config.max_tx_bytes {
            return Admission::Rejected(Rejection::TooLarge {
                size,
                max: self.config.max_tx_bytes,
            });
        }
        if self.by_hash.contains_key(&tx_hash) || self.committed.contains(&tx_hash) {
            return Admission::Rejected(Rejection::Duplicate);
        }
        if self.entries.len() >= self.config.capacity {
            return Admission::Rejected(Rejection::PoolFull);
        }
        let arrival_seq = self.next_seq;
        self.next_seq += 1;
        self.by_hash.insert(tx_hash, arrival_seq);
        self.entries.insert(
            arrival_seq,
            PoolEntry {
                tx,
                tx_hash,
                arrival_seq,
                size,
            },
        );
        Admission::Accepted(tx_hash)
    }

    /// FIFO prefix of the pool whose total encoded size fits in `max_bytes`.
    /// The pool itself is left unchanged.
    pub fn reap(&self, max_bytes: usize) -> Vec<BcTransaction> {
        let mut total = 0usize;
        let mut out = Vec::new();
        for e in self.entries.values() {
            if total + e.size > max_bytes {
                break;
            }
            total += e.size;
            out.push(e.tx.clone());
        }
        out
    }

    /// Drops a pending transaction without marking it committed.
    pub fn remove(&mut self, hash: &Digest) -> bool {
        match self.by_hash.remove(hash) {
            Some(seq) => {
                self.entries.remove(&seq);
                true
            }
            None => false,
        }
    }

    /// Removes committed transactions and remembers their hashes so late
    /// gossip cannot re-admit them.
    pub fn update_committed<'a>(&mut self, hashes: impl IntoIterator<Item = &'a Digest>) {
        for h in hashes {
            if let Some(seq) = self.by_hash.remove(h) {
                self.entries.remove(&seq);
            }
            self.committed.insert(*h);
            for peer in self.peers.values_mut() {
                peer.known.remove(h);
            }
        }
    }

    pub fn has_pending_gossip(&self) -> bool {
        self.peers.values().any(|p| {
            self.entries
                .range(p.cursor..)
                .any(|(_, e)| !p.known.contains(&e.tx_hash))
        })
    }

    /// Announces up to [`GOSSIP_BATCH`] unseen hashes to every peer.
    pub fn gossip_tick(&mut self) -> Vec<(ValidatorId, Vec<Digest>)> {
        let mut sends = Vec::new();
        for (&peer, state) in self.peers.iter_mut() {
            let mut batch = Vec::new();
            let mut cursor = state.cursor;
            for (&seq, e) in self.entries.range(state.cursor..) {
                if batch.len() == GOSSIP_BATCH {
                    break;
                }
                cursor = seq + 1;
                if state.known.insert(e.tx_hash) {
                    batch.push(e.tx_hash);
                }
            }
            state.cursor = cursor.max(state.cursor);
            if !batch.is_empty() {
                sends.push((peer, batch));
            }
        }
        sends
    }

    /// Handles a hash announcement; returns the hashes worth requesting.
    pub fn on_hashes(&mut self, from: ValidatorId, hashes: &[Digest]) -> Vec<Digest> {
        if let Some(state) = self.peers.get_mut(&from) {
            state.known.extend(hashes.iter().copied());
        }
        hashes
            .iter()
            .filter(|h| !self.by_hash.contains_key(h) && !self.committed.contains(h))
            .copied()
            .collect()
    }

    pub fn on_request(&self, hashes: &[Digest]) -> Vec<BcTransaction> {
        hashes.iter().filter_map(|h| self.get(h)).cloned().collect()
    }

    /// Marks the hash as known to `peer` so it is not announced back.
    pub fn mark_known(&mut self, peer: ValidatorId, hash: Digest) {
        if let Some(state) = self.peers.get_mut(&peer) {
            state.known.insert(hash);
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClientId, WlStatement};
    use alloc::vec;

    fn tx(i: u64) -> BcTransaction {
        BcTransaction::new(
            vec![WlStatement::new(alloc::format!("stmt {i}"), ClientId(0), i).unwrap()],
            i,
        )
        .unwrap()
    }

    fn big_tx(i: u64, bytes: usize) -> BcTransaction {
        let text = "x".repeat(bytes);
        BcTransaction::new(vec![WlStatement::new(text, ClientId(0), i).unwrap()], i).unwrap()
    }

    #[test]
    fn fresh_then_duplicate() {
        let mut p = Mempool::new(MempoolConfig::default(), []);
        assert!(p.insert(tx(1)).is_accepted());
        assert_eq!(p.insert(tx(1)), Admission::Rejected(Rejection::Duplicate));
    }

    #[test]
    fn capacity_is_enforced_at_default_size() {
        let mut p = Mempool::new(MempoolConfig::default(), []);
        for i in 0..100_000 {
            assert!(p.insert(tx(i)).is_accepted());
        }
        assert_eq!(p.insert(tx(100_000)), Admission::Rejected(Rejection::PoolFull));
        assert_eq!(p.len(), 100_000);
    }

    #[test]
    fn malformed_bytes_rejected() {
        let mut p = Mempool::new(MempoolConfig::default(), []);
        assert!(matches!(
            p.check_tx(&[1, 2, 3]),
            Admission::Rejected(Rejection::Malformed(_))
        ));
    }

    #[test]
    fn reap_is_fifo_prefix() {
        let mut p = Mempool::new(MempoolConfig::default(), []);
        assert!(p.reap(usize::MAX).is_empty());
        for i in [3, 1, 2] {
            p.insert(tx(i));
        }
        let nonces: Vec<u64> = p.reap(1 << 20).iter().map(|t| t.nonce()).collect();
        assert_eq!(nonces, vec![3, 1, 2]);
        assert_eq!(p.len(), 3, "reap leaves the pool unchanged");
    }

    #[test]
    fn reap_respects_block_cap() {
        let cfg = MempoolConfig {
            capacity: 10,
            max_tx_bytes: 11_000_000,
        };
        let mut p = Mempool::new(cfg, []);
        for i in 0..3 {
            assert!(p.insert(big_tx(i, 10_000_000)).is_accepted());
        }
        let reaped = p.reap(crate::types::DEFAULT_MAX_BLOCK_BYTES);
        assert_eq!(reaped.iter().map(|t| t.nonce()).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn committed_txs_cannot_return() {
        let mut p = Mempool::new(MempoolConfig::default(), []);
        let t = tx(7);
        let h = t.hash();
        p.insert(t.clone());
        p.update_committed([&h]);
        assert!(p.is_empty());
        assert_eq!(p.insert(t), Admission::Rejected(Rejection::Duplicate));
    }

    #[test]
    fn single_node_gossip_is_silent() {
        let mut p = Mempool::new(MempoolConfig::default(), []);
        p.insert(tx(1));
        assert!(p.gossip_tick().is_empty());
        assert!(!p.has_pending_gossip());
    }

    #[test]
    fn gossip_batches_and_never_resends() {
        let peer = ValidatorId(1);
        let mut p = Mempool::new(MempoolConfig::default(), [peer]);
        for i in 0..100 {
            p.insert(tx(i));
        }
        let first = p.gossip_tick();
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].1.len(), GOSSIP_BATCH);
        let second = p.gossip_tick();
        assert_eq!(second[0].1.len(), 100 - GOSSIP_BATCH);
        assert!(p.gossip_tick().is_empty());
        assert!(!p.has_pending_gossip());
    }

    #[test]
    fn hashes_known_to_peer_are_not_announced() {
        let peer = ValidatorId(1);
        let mut p = Mempool::new(MempoolConfig::default(), [peer]);
        let t = tx(1);
        let h = t.hash();
        assert_eq!(p.on_hashes(peer, &[h]), vec![h]);
        p.insert(t);
        assert!(p.gossip_tick().is_empty());
    }
}
