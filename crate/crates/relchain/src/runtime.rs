//! Wall-clock driver for a simulated network plus the in-process node RPC.
//!
//! One thread owns the [`Simulation`] and processes its events when they
//! fall due; RPC calls reach it through a command channel.

use std::collections::HashMap;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender};
use std::sync::{Arc, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use log::error;
use relchain_core::abci::{AbciBackend, QueryError, QueryResult};
use relchain_core::ledger::BlockRecord;
use relchain_core::mempool::Admission;
use relchain_core::sim::{SimEvent, Simulation};
use relchain_core::{Block, Digest, ExecStatus, ValidatorId};

use crate::backend::QueryService;
use crate::rpc::{AdmissionResponse, CommitResponse, NewBlockHeaderEvent, RpcError};

pub type DynBackend = Box<dyn AbciBackend + Send>;

/// Default `timeout_broadcast_tx_commit`.
pub const COMMIT_TIMEOUT: Duration = Duration::from_secs(10);

/// Capacity of each subscriber's event buffer.
pub const SUBSCRIBER_BUFFER: usize = 1024;

enum Command {
    Submit {
        node: ValidatorId,
        bytes: Vec<u8>,
        reply: Option<Sender<AdmissionResponse>>,
    },
    SubmitCommit {
        node: ValidatorId,
        bytes: Vec<u8>,
        started: Instant,
        reply: Sender<Result<CommitResponse, RpcError>>,
    },
    Subscribe {
        node: ValidatorId,
        sink: SyncSender<NewBlockHeaderEvent>,
    },
    Shutdown,
}

struct NodeShared {
    ledger: RwLock<Vec<Arc<BlockRecord>>>,
    rounds: RwLock<Vec<u32>>,
    halted: RwLock<Option<String>>,
    query: Arc<dyn QueryService>,
}

/// A running network. Dropping it without [`RealtimeNetwork::shutdown`]
/// stops the driver and discards its state.
pub struct RealtimeNetwork {
    cmd: Sender<Command>,
    shared: Vec<Arc<NodeShared>>,
    driver: Option<JoinHandle<Simulation<DynBackend>>>,
    started: Instant,
}

impl RealtimeNetwork {
    /// Starts driving `sim`. `queries[i]` answers read-only queries for node `i`.
    pub fn start(sim: Simulation<DynBackend>, queries: Vec<Arc<dyn QueryService>>) -> Self {
        assert_eq!(sim.len(), queries.len(), "one query service per node");
        let shared: Vec<Arc<NodeShared>> = queries
            .into_iter()
            .map(|query| {
                Arc::new(NodeShared {
                    ledger: RwLock::new(Vec::new()),
                    rounds: RwLock::new(Vec::new()),
                    halted: RwLock::new(None),
                    query,
                })
            })
            .collect();
        let (tx, rx) = mpsc::channel();
        let started = Instant::now();
        let driver_shared = shared.clone();
        let driver = std::thread::Builder::new()
            .name("relchain-driver".into())
            .spawn(move || Driver::new(sim, rx, driver_shared, started).run())
            .expect("spawn driver thread");
        Self {
            cmd: tx,
            shared,
            driver: Some(driver),
            started,
        }
    }

    pub fn len(&self) -> usize {
        self.shared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.is_empty()
    }

    pub fn started(&self) -> Instant {
        self.started
    }

    pub fn client(&self, node: ValidatorId) -> NodeClient {
        NodeClient {
            node,
            cmd: self.cmd.clone(),
            shared: self.shared[node.index()].clone(),
            commit_timeout: COMMIT_TIMEOUT,
        }
    }

    /// Stops the driver and hands back the simulation with every node's state.
    pub fn shutdown(mut self) -> Simulation<DynBackend> {
        let _ = self.cmd.send(Command::Shutdown);
        self.driver
            .take()
            .expect("driver present")
            .join()
            .expect("driver thread panicked")
    }
}

impl Drop for RealtimeNetwork {
    fn drop(&mut self) {
        if let Some(h) = self.driver.take() {
            let _ = self.cmd.send(Command::Shutdown);
            let _ = h.join();
        }
    }
}

/// RPC handle for one node. Cheap to clone and usable from any thread.
#[derive(Clone)]
pub struct NodeClient {
    node: ValidatorId,
    cmd: Sender<Command>,
    shared: Arc<NodeShared>,
    commit_timeout: Duration,
}

impl NodeClient {
    pub fn node(&self) -> ValidatorId {
        self.node
    }

    pub fn with_commit_timeout(mut self, timeout: Duration) -> Self {
        self.commit_timeout = timeout;
        self
    }

    /// Submits and waits until the transaction's block is committed.
    pub fn broadcast_tx_commit(&self, tx: Vec<u8>) -> Result<CommitResponse, RpcError> {
        let (reply, rx) = mpsc::channel();
        self.cmd
            .send(Command::SubmitCommit {
                node: self.node,
                bytes: tx,
                started: Instant::now(),
                reply,
            })
            .map_err(|_| RpcError::Disconnected)?;
        match rx.recv_timeout(self.commit_timeout) {
            Ok(r) => r,
            Err(RecvTimeoutError::Timeout) => Err(RpcError::Timeout),
            Err(RecvTimeoutError::Disconnected) => Err(RpcError::Disconnected),
        }
    }

    /// Submits and returns the admission decision.
    pub fn broadcast_tx_sync(&self, tx: Vec<u8>) -> Result<AdmissionResponse, RpcError> {
        let (reply, rx) = mpsc::channel();
        self.cmd
            .send(Command::Submit {
                node: self.node,
                bytes: tx,
                reply: Some(reply),
            })
            .map_err(|_| RpcError::Disconnected)?;
        rx.recv().map_err(|_| RpcError::Disconnected)
    }

    /// Fire and forget.
    pub fn broadcast_tx_async(&self, tx: Vec<u8>) -> Result<Digest, RpcError> {
        let hash = Digest::of(&tx);
        self.cmd
            .send(Command::Submit {
                node: self.node,
                bytes: tx,
                reply: None,
            })
            .map_err(|_| RpcError::Disconnected)?;
        Ok(hash)
    }

    /// Read-only query against the node's last committed state. Bypasses
    /// consensus entirely.
    pub fn query(&self, sql: &str) -> Result<QueryResult, QueryError> {
        self.shared.query.query(sql)
    }

    /// Every header committed after this call, in height order.
    pub fn subscribe_new_block_header(&self) -> Result<Receiver<NewBlockHeaderEvent>, RpcError> {
        let (sink, rx) = mpsc::sync_channel(SUBSCRIBER_BUFFER);
        self.cmd
            .send(Command::Subscribe { node: self.node, sink })
            .map_err(|_| RpcError::Disconnected)?;
        Ok(rx)
    }

    pub fn fetch_block(&self, height: u64) -> Result<(Block, Vec<Vec<ExecStatus>>), RpcError> {
        let ledger = self.shared.ledger.read().expect("ledger lock");
        let rec = height
            .checked_sub(1)
            .and_then(|i| ledger.get(i as usize))
            .ok_or(RpcError::NotFound(height))?;
        Ok((rec.block.clone(), rec.statuses.clone()))
    }

    pub fn height(&self) -> u64 {
        self.shared.ledger.read().expect("ledger lock").len() as u64
    }

    /// App hash after the latest committed block, if any.
    pub fn last_app_hash(&self) -> Option<Digest> {
        self.shared.ledger.read().expect("ledger lock").last().map(|r| r.app_hash_after)
    }

    /// Consensus round in which each committed height was decided.
    pub fn decide_rounds(&self) -> Vec<u32> {
        self.shared.rounds.read().expect("rounds lock").clone()
    }

    pub fn halted(&self) -> Option<String> {
        self.shared.halted.read().expect("halt lock").clone()
    }
}

type Waiter = (Instant, Sender<Result<CommitResponse, RpcError>>);

struct Driver {
    sim: Simulation<DynBackend>,
    rx: Receiver<Command>,
    shared: Vec<Arc<NodeShared>>,
    started: Instant,
    waiters: HashMap<(ValidatorId, Digest), Vec<Waiter>>,
    subscribers: Vec<(ValidatorId, SyncSender<NewBlockHeaderEvent>)>,
}

impl Driver {
    fn new(
        sim: Simulation<DynBackend>,
        rx: Receiver<Command>,
        shared: Vec<Arc<NodeShared>>,
        started: Instant,
    ) -> Self {
        Self {
            sim,
            rx,
            shared,
            started,
            waiters: HashMap::new(),
            subscribers: Vec::new(),
        }
    }

    fn elapsed_ms(&self) -> u64 {
        self.started.elapsed().as_millis() as u64
    }

    fn run(mut self) -> Simulation<DynBackend> {
        loop {
            loop {
                match self.rx.try_recv() {
                    Ok(Command::Shutdown) => return self.sim,
                    Ok(cmd) => self.handle(cmd),
                    Err(mpsc::TryRecvError::Empty) => break,
                    Err(mpsc::TryRecvError::Disconnected) => return self.sim,
                }
            }
            let mut stepped = 0;
            while let Some(t) = self.sim.peek_time() {
                let now = self.elapsed_ms();
                if t > now {
                    break;
                }
                self.sim.advance_to(now);
                self.sim.step();
                stepped += 1;
                // let commands in during long bursts of events
                if stepped % 256 == 0 {
                    break;
                }
            }
            self.dispatch();
            if stepped > 0 && stepped % 256 == 0 {
                continue;
            }
            let wait = match self.sim.peek_time() {
                Some(t) => Duration::from_millis(t.saturating_sub(self.elapsed_ms())),
                None => Duration::from_millis(50),
            };
            if wait.is_zero() {
                continue;
            }
            match self.rx.recv_timeout(wait) {
                Ok(Command::Shutdown) => return self.sim,
                Ok(cmd) => self.handle(cmd),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => return self.sim,
            }
        }
    }

    fn handle(&mut self, cmd: Command) {
        let now = self.elapsed_ms();
        self.sim.advance_to(now);
        match cmd {
            Command::Submit { node, bytes, reply } => {
                let hash = Digest::of(&bytes);
                let admission = self.sim.submit(node, &bytes);
                if let Some(reply) = reply {
                    let _ = reply.send(match admission {
                        Admission::Accepted(tx_hash) => AdmissionResponse {
                            tx_hash,
                            accepted: true,
                            reason: None,
                        },
                        Admission::Rejected(r) => AdmissionResponse {
                            tx_hash: hash,
                            accepted: false,
                            reason: Some(r.to_string()),
                        },
                    });
                }
            }
            Command::SubmitCommit {
                node,
                bytes,
                started,
                reply,
            } => {
                if let Some(h) = self.shared[node.index()].halted.read().expect("halt lock").clone() {
                    let _ = reply.send(Err(RpcError::Halted(h)));
                    return;
                }
                match self.sim.submit(node, &bytes) {
                    Admission::Accepted(hash) => {
                        self.waiters.entry((node, hash)).or_default().push((started, reply));
                    }
                    Admission::Rejected(r) => {
                        let _ = reply.send(Err(RpcError::Rejected(r.to_string())));
                    }
                }
            }
            Command::Subscribe { node, sink } => self.subscribers.push((node, sink)),
            Command::Shutdown => unreachable!("handled by the loop"),
        }
        self.dispatch();
    }

    fn dispatch(&mut self) {
        for ev in self.sim.take_events() {
            match ev {
                SimEvent::Committed { node, record, round, .. } => {
                    self.shared[node.index()].rounds.write().expect("rounds lock").push(round);
                    self.shared[node.index()]
                        .ledger
                        .write()
                        .expect("ledger lock")
                        .push(record.clone());
                    if !self.waiters.is_empty() {
                        for (i, tx) in record.block.txs.iter().enumerate() {
                            if let Some(ws) = self.waiters.remove(&(node, tx.hash())) {
                                for (started, reply) in ws {
                                    let _ = reply.send(Ok(CommitResponse {
                                        tx_hash: tx.hash(),
                                        height: record.height(),
                                        statuses: record.statuses[i].clone(),
                                        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
                                    }));
                                }
                            }
                        }
                    }
                    let event = NewBlockHeaderEvent {
                        header: record.block.header.clone(),
                        block_id: record.block_id,
                    };
                    // a full buffer blocks the driver: back-pressure, never loss
                    self.subscribers
                        .retain(|(n, sink)| *n != node || sink.send(event.clone()).is_ok());
                }
                SimEvent::Halted { node, reason } => {
                    error!("node {node} halted: {reason}");
                    *self.shared[node.index()].halted.write().expect("halt lock") = Some(reason.clone());
                    let keys: Vec<_> = self.waiters.keys().filter(|(n, _)| *n == node).copied().collect();
                    for k in keys {
                        for (_, reply) in self.waiters.remove(&k).unwrap_or_default() {
                            let _ = reply.send(Err(RpcError::Halted(reason.clone())));
                        }
                    }
                }
                SimEvent::Submitted { .. } => {}
            }
        }
    }
}
