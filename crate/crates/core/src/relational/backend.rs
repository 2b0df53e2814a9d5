//! The relational engine behind the ABCI contract.

use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::engine::{Engine, Snapshot};
use crate::abci::{AbciBackend, AbciError, CheckResult, DbTxHandle, LifecycleGuard, QueryError, QueryResult};
use crate::codec::Decode;
use crate::hash::Digest;
use crate::types::{BcTransaction, BlockHeader, ExecStatus};

/// Builtin backend: one db-transaction per block, rolled back as a whole when
/// any statement in the block failed.
#[derive(Debug, Clone)]
pub struct RelationalBackend {
    engine: Engine,
    guard: LifecycleGuard,
}

impl RelationalBackend {
    pub fn new(engine: Engine) -> Self {
        Self {
            engine,
            guard: LifecycleGuard::new(),
        }
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn into_engine(self) -> Engine {
        self.engine
    }

    pub fn snapshot(&self) -> Snapshot {
        self.engine.snapshot()
    }

    pub fn state_hash(&self) -> Digest {
        self.engine.committed_hash()
    }
}

impl AbciBackend for RelationalBackend {
    fn begin_block(&mut self, header: &BlockHeader) -> Result<DbTxHandle, AbciError> {
        let handle = self.guard.begin()?;
        self.engine
            .begin(header.block_time)
            .map_err(|e| AbciError::ContractViolation(e.to_string()))?;
        Ok(handle)
    }

    fn deliver_tx(&mut self, handle: DbTxHandle, tx: &[u8]) -> Result<Vec<ExecStatus>, AbciError> {
        self.guard.deliver(handle)?;
        let tx = match BcTransaction::decode(tx) {
            Ok(tx) => tx,
            Err(e) => return Ok(vec![ExecStatus::failed(alloc::format!("malformed transaction: {e}"))]),
        };
        Ok(tx
            .statements()
            .iter()
            .map(|s| self.engine.execute_status(&s.text))
            .collect())
    }

    fn end_block(&mut self, handle: DbTxHandle) -> Result<(), AbciError> {
        self.guard.end(handle)
    }

    fn commit(&mut self, handle: DbTxHandle, statuses: &[ExecStatus]) -> Result<Digest, AbciError> {
        self.guard.commit(handle)?;
        Ok(if statuses.iter().all(ExecStatus::is_ok) {
            self.engine.commit()
        } else {
            self.engine.rollback()
        })
    }

    fn check_tx(&mut self, tx: &[u8]) -> Result<CheckResult, AbciError> {
        Ok(match BcTransaction::decode(tx) {
            Ok(_) => CheckResult::Accept,
            Err(e) => CheckResult::Reject(alloc::format!("malformed transaction: {e}")),
        })
    }

    fn query(&mut self, request: &str) -> Result<QueryResult, QueryError> {
        self.engine
            .snapshot()
            .query_payload(request)
            .map(|payload| QueryResult { payload })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Encode;
    use crate::relational::{decode_results, ProcRegistry, Schema, StmtResult, Value};
    use crate::types::{ClientId, ValidatorId, WlStatement};
    use alloc::string::ToString;

    fn backend() -> RelationalBackend {
        let schema = Schema::parse("table t\n k int\n v int\n primary key (k)\n").unwrap();
        let mut e = Engine::new(schema, ProcRegistry::default());
        e.load([("t".to_string(), vec![vec![Value::Int(1), Value::Int(0)]])]).unwrap();
        RelationalBackend::new(e)
    }

    fn tx(stmts: &[&str]) -> Vec<u8> {
        let s = stmts
            .iter()
            .enumerate()
            .map(|(i, t)| WlStatement::new(*t, ClientId(1), i as u64).unwrap())
            .collect();
        BcTransaction::new(s, 0).unwrap().encode()
    }

    fn header(t: u64) -> BlockHeader {
        BlockHeader {
            height: 1,
            prev_block_hash: Digest::default(),
            app_hash: Digest::default(),
            proposer_id: ValidatorId(0),
            block_time: t,
            num_txs: 1,
        }
    }

    fn run(b: &mut RelationalBackend, txs: &[Vec<u8>]) -> (Vec<ExecStatus>, Digest) {
        let h = b.begin_block(&header(1)).unwrap();
        let mut all = Vec::new();
        for t in txs {
            all.extend(b.deliver_tx(h, t).unwrap());
        }
        b.end_block(h).unwrap();
        let d = b.commit(h, &all).unwrap();
        (all, d)
    }

    #[test]
    fn failed_statement_rolls_back_the_block() {
        let mut b = backend();
        let genesis = b.state_hash();
        let (st, d) = run(&mut b, &[tx(&["UPDATE t SET v = v + 1 WHERE k = 1"]), tx(&["UPDATE nope SET v = 1"])]);
        assert!(st[0].is_ok());
        assert_eq!(st[1].failure_reason(), Some("unknown table nope"));
        assert_eq!(d, genesis);
        let (st, d) = run(&mut b, &[tx(&["UPDATE t SET v = v + 1 WHERE k = 1"])]);
        assert!(st[0].is_ok());
        assert_ne!(d, genesis);
        let q = b.query("SELECT v FROM t WHERE k = 1").unwrap();
        let StmtResult::Rows(rs) = &decode_results(&q.payload).unwrap()[0] else { panic!() };
        assert_eq!(rs.rows, vec![vec![Value::Int(1)]]);
    }

    #[test]
    fn malformed_tx_is_one_failed_status() {
        let mut b = backend();
        let (st, _) = run(&mut b, &[vec![0xFF]]);
        assert_eq!(st.len(), 1);
        assert!(!st[0].is_ok());
        assert!(matches!(b.check_tx(&[0xFF]).unwrap(), CheckResult::Reject(_)));
        assert_eq!(b.check_tx(&tx(&["x"])).unwrap(), CheckResult::Accept);
    }

    #[test]
    fn lifecycle_is_enforced() {
        let mut b = backend();
        assert!(b.deliver_tx(DbTxHandle(9), &tx(&["x"])).is_err());
        let h = b.begin_block(&header(1)).unwrap();
        assert!(b.begin_block(&header(1)).is_err());
        assert!(b.commit(h, &[]).is_err());
    }
}
