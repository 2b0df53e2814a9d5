//! Append-only per-node ledger.

use alloc::sync::Arc;
use alloc::vec::Vec;

use thiserror::Error;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::Digest;
use crate::types::{hash_block, Block, ExecStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("chain mismatch at height {height}: {reason}")]
    ChainMismatch { height: u64, reason: &'static str },
    #[error("no block at height {0}")]
    NotFound(u64),
    #[error("ledger corrupt at height {0}")]
    Corrupt(u64),
    #[error("malformed ledger export: {0}")]
    Decode(#[from] DecodeError),
}

/// A committed block together with the per-statement execution results.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockRecord {
    pub block: Block,
    pub block_id: Digest,
    /// One list per bc-transaction, one status per statement.
    pub statuses: Vec<Vec<ExecStatus>>,
    /// Backend state hash after this block was committed or rolled back.
    pub app_hash_after: Digest,
}

impl BlockRecord {
    pub fn height(&self) -> u64 {
        self.block.header.height
    }

    pub fn all_ok(&self) -> bool {
        self.statuses.iter().flatten().all(ExecStatus::is_ok)
    }
}

#[derive(Debug, Default, Clone)]
pub struct Ledger {
    records: Vec<Arc<BlockRecord>>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn height(&self) -> u64 {
        self.records.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn tip_hash(&self) -> Digest {
        self.records.last().map_or(Digest::ZERO, |r| r.block_id)
    }

    pub fn tip(&self) -> Option<&Arc<BlockRecord>> {
        self.records.last()
    }

    pub fn append_block(
        &mut self,
        block: Block,
        statuses: Vec<Vec<ExecStatus>>,
        app_hash_after: Digest,
    ) -> Result<Arc<BlockRecord>, LedgerError> {
        let height = block.header.height;
        if height != self.height() + 1 {
            return Err(LedgerError::ChainMismatch {
                height,
                reason: "height is not tip + 1",
            });
        }
        if block.header.prev_block_hash != self.tip_hash() {
            return Err(LedgerError::ChainMismatch {
                height,
                reason: "prev_block_hash does not reference the tip",
            });
        }
        if statuses.len() != block.txs.len() {
            return Err(LedgerError::ChainMismatch {
                height,
                reason: "status list does not match transaction count",
            });
        }
        let record = Arc::new(BlockRecord {
            block_id: hash_block(&block),
            block,
            statuses,
            app_hash_after,
        });
        self.records.push(record.clone());
        Ok(record)
    }

    pub fn get_block(&self, height: u64) -> Result<&Arc<BlockRecord>, LedgerError> {
        if height == 0 {
            return Err(LedgerError::NotFound(height));
        }
        self.records
            .get((height - 1) as usize)
            .ok_or(LedgerError::NotFound(height))
    }

    pub fn records(&self) -> &[Arc<BlockRecord>] {
        &self.records
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.records.iter().map(|r| &r.block)
    }

    /// Heights whose stored block no longer hashes to its recorded id, plus
    /// every height after the first such block.
    pub fn invalid_heights(&self) -> Vec<u64> {
        let mut bad = Vec::new();
        let mut prev = Digest::ZERO;
        let mut broken = false;
        for (i, r) in self.records.iter().enumerate() {
            let height = i as u64 + 1;
            broken = broken
                || r.block.header.height != height
                || r.block.header.prev_block_hash != prev
                || hash_block(&r.block) != r.block_id;
            if broken {
                bad.push(height);
            }
            prev = r.block_id;
        }
        bad
    }

    pub fn verify(&self) -> Result<(), LedgerError> {
        match self.invalid_heights().first() {
            Some(h) => Err(LedgerError::Corrupt(*h)),
            None => Ok(()),
        }
    }

    /// Replaces a stored block without touching its recorded id. Only for
    /// tamper-detection tests.
    #[doc(hidden)]
    pub fn tamper(&mut self, height: u64, f: impl FnOnce(&mut Block)) {
        let rec = &mut self.records[(height - 1) as usize];
        let mut copy = (**rec).clone();
        f(&mut copy.block);
        *rec = Arc::new(copy);
    }

    /// Export format: a sequence of `u32` big-endian length + canonical block encoding.
    pub fn export(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for r in &self.records {
            w.bytes(&r.block.encode());
        }
        w.into_bytes()
    }
}

/// Parses an export file into its blocks.
pub fn parse_export(bytes: &[u8]) -> Result<Vec<Block>, LedgerError> {
    let mut r = Reader::new(bytes);
    let mut out = Vec::new();
    while r.remaining() > 0 {
        out.push(Block::decode(r.bytes()?)?);
    }
    Ok(out)
}

/// Checks an exported chain end to end against a trusted tip digest.
pub fn verify_export(bytes: &[u8], trusted_tip: &Digest) -> Result<u64, LedgerError> {
    let blocks = parse_export(bytes)?;
    let mut prev = Digest::ZERO;
    for (i, b) in blocks.iter().enumerate() {
        let height = i as u64 + 1;
        if b.header.height != height || b.header.prev_block_hash != prev {
            return Err(LedgerError::Corrupt(height));
        }
        prev = hash_block(b);
    }
    if prev != *trusted_tip {
        return Err(LedgerError::Corrupt(blocks.len() as u64));
    }
    Ok(blocks.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BcTransaction, BlockHeader, ClientId, ValidatorId, WlStatement};
    use alloc::vec;

    fn block(height: u64, prev: Digest, text: &str) -> Block {
        let tx = BcTransaction::new(vec![WlStatement::new(text, ClientId(0), height).unwrap()], 0)
            .unwrap();
        Block {
            header: BlockHeader {
                height,
                prev_block_hash: prev,
                app_hash: Digest::ZERO,
                proposer_id: ValidatorId(0),
                block_time: height,
                num_txs: 1,
            },
            txs: vec![tx],
        }
    }

    fn ok() -> Vec<Vec<ExecStatus>> {
        vec![vec![ExecStatus::ok(vec![])]]
    }

    #[test]
    fn append_checks_height_and_prev_hash() {
        let mut l = Ledger::new();
        assert!(matches!(
            l.append_block(block(2, Digest::ZERO, "a"), ok(), Digest::ZERO),
            Err(LedgerError::ChainMismatch { height: 2, .. })
        ));
        assert!(matches!(
            l.append_block(block(1, Digest::of(b"x"), "a"), ok(), Digest::ZERO),
            Err(LedgerError::ChainMismatch { height: 1, .. })
        ));
        l.append_block(block(1, Digest::ZERO, "a"), ok(), Digest::ZERO).unwrap();
        assert_eq!(l.height(), 1);
    }

    #[test]
    fn get_block_out_of_range() {
        let l = Ledger::new();
        assert_eq!(l.get_block(0).unwrap_err(), LedgerError::NotFound(0));
        assert_eq!(l.get_block(1).unwrap_err(), LedgerError::NotFound(1));
    }

    #[test]
    fn statuses_stored_alongside() {
        let mut l = Ledger::new();
        let statuses = vec![vec![ExecStatus::failed("nope")]];
        l.append_block(block(1, Digest::ZERO, "a"), statuses.clone(), Digest::ZERO)
            .unwrap();
        let rec = l.get_block(1).unwrap();
        assert_eq!(rec.statuses, statuses);
        assert!(!rec.all_ok());
    }
}
