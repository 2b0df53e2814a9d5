//! Builtin backend with concurrent read access to the last committed state.

use std::sync::{Arc, RwLock};

use relchain_core::abci::{AbciBackend, AbciError, CheckResult, DbTxHandle, QueryError, QueryResult};
use relchain_core::relational::{Engine, RelationalBackend, Snapshot};
use relchain_core::{BlockHeader, Digest, ExecStatus};

/// Anything that can answer read-only queries from any thread.
pub trait QueryService: Send + Sync {
    fn query(&self, text: &str) -> Result<QueryResult, QueryError>;
}

/// The most recently committed snapshot of one node's engine.
#[derive(Clone)]
pub struct SnapshotHandle(Arc<RwLock<Snapshot>>);

impl SnapshotHandle {
    pub fn current(&self) -> Snapshot {
        self.0.read().expect("snapshot lock").clone()
    }

    pub fn state_hash(&self) -> Digest {
        self.0.read().expect("snapshot lock").state_hash()
    }
}

impl QueryService for SnapshotHandle {
    fn query(&self, text: &str) -> Result<QueryResult, QueryError> {
        let snap = self.current();
        snap.query_payload(text).map(|payload| QueryResult { payload })
    }
}

/// [`RelationalBackend`] that publishes a new snapshot after every commit so
/// queries never wait for block execution.
pub struct PublishingBackend {
    inner: RelationalBackend,
    published: SnapshotHandle,
}

impl PublishingBackend {
    pub fn new(engine: Engine) -> Self {
        let inner = RelationalBackend::new(engine);
        let published = SnapshotHandle(Arc::new(RwLock::new(inner.snapshot())));
        Self { inner, published }
    }

    pub fn snapshots(&self) -> SnapshotHandle {
        self.published.clone()
    }

    pub fn inner(&self) -> &RelationalBackend {
        &self.inner
    }
}

impl AbciBackend for PublishingBackend {
    fn begin_block(&mut self, header: &BlockHeader) -> Result<DbTxHandle, AbciError> {
        self.inner.begin_block(header)
    }

    fn deliver_tx(&mut self, handle: DbTxHandle, tx: &[u8]) -> Result<Vec<ExecStatus>, AbciError> {
        self.inner.deliver_tx(handle, tx)
    }

    fn end_block(&mut self, handle: DbTxHandle) -> Result<(), AbciError> {
        self.inner.end_block(handle)
    }

    fn commit(&mut self, handle: DbTxHandle, statuses: &[ExecStatus]) -> Result<Digest, AbciError> {
        let hash = self.inner.commit(handle, statuses)?;
        *self.published.0.write().expect("snapshot lock") = self.inner.snapshot();
        Ok(hash)
    }

    fn check_tx(&mut self, tx: &[u8]) -> Result<CheckResult, AbciError> {
        self.inner.check_tx(tx)
    }

    fn query(&mut self, request: &str) -> Result<QueryResult, QueryError> {
        self.published.query(request)
    }
}
