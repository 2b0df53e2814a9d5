//! Packing wl-transactions into bc-transactions.

use alloc::vec::Vec;

use crate::types::{BcTransaction, WlStatement};

/// Number of wl-transactions per bc-transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub size: usize,
}

impl BatchPlan {
    /// The batch sizes of the packing sweep: 1, 2, 4, ..., 2048.
    pub const SWEEP: [usize; 12] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048];

    pub fn new(size: usize) -> Option<Self> {
        (size >= 1).then_some(Self { size })
    }

    pub fn chunks(&self, total: usize) -> usize {
        total.div_ceil(self.size)
    }
}

/// Consecutive chunks of `size` statements, order preserved. The nonce of
/// each bc-transaction is its chunk index.
pub fn batch(statements: Vec<WlStatement>, plan: BatchPlan) -> Vec<BcTransaction> {
    let mut out = Vec::with_capacity(plan.chunks(statements.len()));
    let mut it = statements.into_iter().peekable();
    let mut nonce = 0u64;
    while it.peek().is_some() {
        let chunk: Vec<WlStatement> = it.by_ref().take(plan.size).collect();
        out.push(BcTransaction::new(chunk, nonce).expect("non-empty chunk"));
        nonce += 1;
    }
    out
}
