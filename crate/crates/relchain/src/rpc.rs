//! Client-facing node API types.

use relchain_core::{BlockHeader, Digest, ExecStatus};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub struct CommitResponse {
    pub tx_hash: Digest,
    pub height: u64,
    /// One status per statement of the bc-transaction.
    pub statuses: Vec<ExecStatus>,
    pub elapsed_ms: f64,
}

impl CommitResponse {
    pub fn all_ok(&self) -> bool {
        self.statuses.iter().all(ExecStatus::is_ok)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionResponse {
    pub tx_hash: Digest,
    pub accepted: bool,
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewBlockHeaderEvent {
    pub header: BlockHeader,
    pub block_id: Digest,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RpcError {
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error("timed out waiting for commit")]
    Timeout,
    #[error("no block at height {0}")]
    NotFound(u64),
    #[error("node halted: {0}")]
    Halted(String),
    #[error("node runtime has shut down")]
    Disconnected,
}
