//! Benchmark drivers: synchronous and pseudo-synchronous submission, the
//! asynchronous sender/listener/coordinator workflow, standalone replay and
//! parameter sweeps.

use std::net::SocketAddr;
use std::sync::mpsc;
use std::time::{Duration, Instant};

use log::{info, warn};
use relchain_core::codec::Encode;
use relchain_core::consensus::TimeoutConfig;
use relchain_core::ledger::BlockRecord;
use relchain_core::mempool::MempoolConfig;
use relchain_core::relational::Engine;
use relchain_core::sim::{ClockMode, LatencyProfile, NetworkConfig};
use relchain_core::workloads::{batch, BatchPlan, Workload};
use relchain_core::{Block, Digest, ExecStatus, ValidatorId, WlStatement};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{assemble, AbciVariant, Assembled, HarnessError, NetworkSpec, DEFAULT_ABCI_ADDRESS};
use crate::rpc::RpcError;
use crate::runtime::{NodeClient, RealtimeNetwork};

/// Statement text substituted at the injection index by [`RunConfig::inject_malformed`].
pub const MALFORMED_STATEMENT: &str = "UPDATTE accounts SET checking = 0 WHERE custid = 1";

/// Mempool capacity used for benchmark runs, large enough for every sequence.
pub const BENCH_MEMPOOL_CAPACITY: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// One wl-transaction per bc-transaction, each awaited.
    Sync,
    /// `B` wl-transactions per bc-transaction, each awaited.
    PseudoSync(usize),
    /// Fire everything, then wait for the blocks.
    Async,
}

impl Mode {
    pub fn from_batch(b: usize) -> Mode {
        if b <= 1 {
            Mode::Sync
        } else {
            Mode::PseudoSync(b)
        }
    }

    pub fn batch(self) -> usize {
        match self {
            Mode::PseudoSync(b) => b,
            Mode::Sync | Mode::Async => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::PseudoSync(_) => "pseudo-sync",
            Mode::Async => "async",
        }
    }

    pub fn default_txs(self) -> u64 {
        match self {
            Mode::Async => 10_000,
            _ => 1_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub workload: Workload,
    pub mode: Mode,
    /// wl-transactions to fire.
    pub n_txs: u64,
    pub nodes: usize,
    pub latency: LatencyProfile,
    pub timeout_commit_ms: u64,
    pub abci: AbciVariant,
    pub abci_address: SocketAddr,
    pub reps: usize,
    /// Async listener gives up after this long without a new block.
    pub watchdog: Duration,
    /// `timeout_broadcast_tx_commit`.
    pub commit_timeout: Duration,
    /// Replace the wl-transaction at this index with a malformed statement.
    pub inject_malformed: Option<u64>,
    /// Async sender sleeps this long between broadcasts.
    pub pace: Option<Duration>,
}

impl RunConfig {
    pub fn new(workload: Workload, mode: Mode) -> Self {
        Self {
            workload,
            mode,
            n_txs: mode.default_txs(),
            nodes: 4,
            latency: LatencyProfile::zero(),
            timeout_commit_ms: 100,
            abci: AbciVariant::Builtin,
            abci_address: DEFAULT_ABCI_ADDRESS,
            reps: 3,
            watchdog: Duration::from_secs(60),
            commit_timeout: Duration::from_secs(10),
            inject_malformed: None,
            pace: None,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Config(m.to_string()));
        if self.nodes == 0 {
            return bad("at least one node is required");
        }
        if self.n_txs == 0 {
            return bad("at least one transaction is required");
        }
        if self.mode == Mode::PseudoSync(0) {
            return bad("batch size must be at least 1");
        }
        if self.reps == 0 {
            return bad("at least one repetition is required");
        }
        self.workload.validate().map_err(RunError::Config)
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            nodes: self.nodes,
            latency: self.latency.clone(),
            config: NetworkConfig {
                timeouts: TimeoutConfig {
                    commit_ms: self.timeout_commit_ms,
                    ..TimeoutConfig::default()
                },
                mempool: MempoolConfig {
                    capacity: BENCH_MEMPOOL_CAPACITY,
                    ..MempoolConfig::default()
                },
                clock: ClockMode::Realtime,
                ..NetworkConfig::default()
            },
            abci: self.abci,
            abci_address: self.abci_address,
        }
    }

    /// The wl-transactions of this run, with the injection applied.
    pub fn statements(&self) -> Vec<WlStatement> {
        let mut stmts = self.workload.statements(self.n_txs);
        if let Some(i) = self.inject_malformed {
            if let Some(s) = stmts.get_mut(i as usize) {
                s.text = MALFORMED_STATEMENT.to_string();
            }
        }
        stmts
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("rpc failed after {completed} bc-transactions: {error}")]
    Rpc { completed: usize, error: RpcError },
    #[error("listener stalled: saw {seen} of {admitted} bc-transactions")]
    Stall { seen: u64, admitted: u64 },
}

/// A committed block as observed by the listener.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSample {
    pub height: u64,
    /// Milliseconds from the first submission to the block notification.
    pub at_ms: f64,
    pub num_txs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailedStatement {
    pub height: u64,
    pub tx_index: usize,
    pub stmt_index: usize,
    pub client_id: u64,
    pub seq_no: u64,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedBlock {
    pub height: u64,
    pub block_time: u64,
    pub statements: Vec<String>,
}

/// The wl-transactions of each committed block, in commit order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PackingRecord {
    pub workload: String,
    pub blocks: Vec<PackedBlock>,
}

impl PackingRecord {
    pub fn from_blocks<'a>(workload: &str, blocks: impl IntoIterator<Item = &'a Block>) -> Self {
        Self {
            workload: workload.to_string(),
            blocks: blocks
                .into_iter()
                .map(|b| PackedBlock {
                    height: b.header.height,
                    block_time: b.header.block_time,
                    statements: b
                        .txs
                        .iter()
                        .flat_map(|t| t.statements().iter().map(|s| s.text.clone()))
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn statement_count(&self) -> usize {
        self.blocks.iter().map(|b| b.statements.len()).sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub run_id: String,
    pub workload: String,
    pub mode: Mode,
    pub batch: usize,
    pub nodes: usize,
    pub timeout_commit_ms: u64,
    pub abci: AbciVariant,
    pub latency_profile: String,
    /// wl-transactions fired.
    pub n_txs: u64,
    pub submitted: usize,
    pub admitted: usize,
    /// Per bc-transaction latency (sync and pseudo-sync).
    pub latencies_ms: Vec<f64>,
    pub blocks: Vec<BlockSample>,
    /// Submission of the first bc-transaction until the last is known committed.
    pub processing_ms: f64,
    /// Fetching and checking the committed blocks.
    pub inspection_ms: f64,
    pub end_to_end_ms: f64,
    pub failures: Vec<FailedStatement>,
    pub packing: PackingRecord,
    pub final_app_hash: String,
    /// App hash at genesis followed by the hash after each height of node 0.
    pub app_hashes: Vec<String>,
    /// All nodes agree on the app hash at the lowest common height.
    pub nodes_agree: bool,
    pub vote_messages: u64,
    pub max_decide_round: u32,
}

impl MetricsReport {
    pub fn txs_per_block(&self) -> f64 {
        if self.blocks.is_empty() {
            0.0
        } else {
            self.blocks.iter().map(|b| b.num_txs as f64).sum::<f64>() / self.blocks.len() as f64
        }
    }

    /// Latency of one wl-transaction: the bc-transaction latency divided by
    /// the batch size.
    pub fn wl_latencies_ms(&self) -> Vec<f64> {
        let b = self.batch.max(1) as f64;
        self.latencies_ms.iter().map(|l| l / b).collect()
    }
}

/// Checks every status of the given blocks.
pub fn verify_blocks<'a>(records: impl IntoIterator<Item = (&'a Block, &'a [Vec<ExecStatus>])>) -> Vec<FailedStatement> {
    let mut out = Vec::new();
    for (block, statuses) in records {
        for (ti, (tx, st)) in block.txs.iter().zip(statuses).enumerate() {
            for (si, status) in st.iter().enumerate() {
                if let Some(reason) = status.failure_reason() {
                    let stmt = tx.statements().get(si);
                    out.push(FailedStatement {
                        height: block.header.height,
                        tx_index: ti,
                        stmt_index: si,
                        client_id: stmt.map_or(0, |s| s.client_id.0),
                        seq_no: stmt.map_or(0, |s| s.seq_no),
                        text: stmt.map_or_else(String::new, |s| s.text.clone()),
                        reason: reason.to_string(),
                    });
                }
            }
        }
    }
    out
}

pub fn verify_records(records: &[std::sync::Arc<BlockRecord>]) -> Vec<FailedStatement> {
    verify_blocks(records.iter().map(|r| (&r.block, r.statuses.as_slice())))
}

/// Runs `cfg` once against a fresh network whose nodes start from `engine`.
pub fn run_once(cfg: &RunConfig, engine: &Engine, run_id: &str) -> Result<MetricsReport, RunError> {
    cfg.validate()?;
    let Assembled {
        sim, queries, servers, ..
    } = assemble(&cfg.network_spec(), engine)?;
    let plan = BatchPlan::new(cfg.mode.batch()).expect("validated batch size");
    let txs: Vec<Vec<u8>> = batch(cfg.statements(), plan).iter().map(Encode::encode).collect();

    let net = RealtimeNetwork::start(sim, queries);
    let client = net.client(ValidatorId(0)).with_commit_timeout(cfg.commit_timeout);
    let outcome = match cfg.mode {
        Mode::Sync | Mode::PseudoSync(_) => drive_sync(&client, &txs),
        Mode::Async => drive_async(&client, &txs, cfg.watchdog, cfg.pace),
    };
    let rounds = client.decide_rounds();
    let sim = net.shutdown();
    drop(servers);
    let outcome = outcome?;

    let nodes = sim.nodes();
    let min_height = nodes.iter().map(|n| n.height()).min().unwrap_or(0);
    let nodes_agree = min_height == 0
        || nodes
            .iter()
            .map(|n| n.ledger().get_block(min_height).map(|r| r.app_hash_after).ok())
            .collect::<std::collections::BTreeSet<_>>()
            .len()
            == 1;
    let ledger = nodes[0].ledger();
    let failures = match outcome.failures {
        Some(f) => f,
        None => verify_records(ledger.records()),
    };
    let report = MetricsReport {
        run_id: run_id.to_string(),
        workload: cfg.workload.name().to_string(),
        mode: cfg.mode,
        batch: plan.size,
        nodes: cfg.nodes,
        timeout_commit_ms: cfg.timeout_commit_ms,
        abci: cfg.abci,
        latency_profile: cfg.latency.name.clone(),
        n_txs: cfg.n_txs,
        submitted: txs.len(),
        admitted: outcome.admitted,
        latencies_ms: outcome.latencies_ms,
        blocks: outcome.blocks,
        processing_ms: outcome.processing_ms,
        inspection_ms: outcome.inspection_ms,
        end_to_end_ms: outcome.processing_ms + outcome.inspection_ms,
        failures,
        packing: PackingRecord::from_blocks(cfg.workload.name(), ledger.blocks()),
        final_app_hash: nodes[0].app_hash().to_string(),
        app_hashes: std::iter::once(engine.committed_hash())
            .chain(ledger.records().iter().map(|r| r.app_hash_after))
            .map(|h| h.to_string())
            .collect(),
        nodes_agree,
        vote_messages: sim.stats().votes(),
        max_decide_round: rounds.iter().copied().max().unwrap_or(0),
    };
    info!(
        "{} {} B={} n={} tc={}ms {}: {:.1} ms, {} blocks",
        report.workload,
        report.mode.name(),
        report.batch,
        report.nodes,
        report.timeout_commit_ms,
        report.abci.name(),
        report.end_to_end_ms,
        report.blocks.len()
    );
    Ok(report)
}

struct Outcome {
    admitted: usize,
    latencies_ms: Vec<f64>,
    blocks: Vec<BlockSample>,
    processing_ms: f64,
    inspection_ms: f64,
    /// Already verified by the driver.
    failures: Option<Vec<FailedStatement>>,
}

fn drive_sync(client: &NodeClient, txs: &[Vec<u8>]) -> Result<Outcome, RunError> {
    let start = Instant::now();
    let mut latencies = Vec::with_capacity(txs.len());
    let mut blocks: Vec<BlockSample> = Vec::new();
    for (i, tx) in txs.iter().enumerate() {
        let t = Instant::now();
        let resp = client
            .broadcast_tx_commit(tx.clone())
            .map_err(|error| RunError::Rpc { completed: i, error })?;
        latencies.push(t.elapsed().as_secs_f64() * 1e3);
        let at_ms = start.elapsed().as_secs_f64() * 1e3;
        match blocks.last_mut() {
            Some(b) if b.height == resp.height => b.num_txs += 1,
            _ => blocks.push(BlockSample {
                height: resp.height,
                at_ms,
                num_txs: 1,
            }),
        }
    }
    Ok(Outcome {
        admitted: txs.len(),
        latencies_ms: latencies,
        blocks,
        processing_ms: start.elapsed().as_secs_f64() * 1e3,
        inspection_ms: 0.0,
        failures: None,
    })
}

/// The listener subscribes first, the sender fires everything with
/// `broadcast_tx_sync` and reports how many were admitted, the listener
/// tallies `num_txs` until that count is reached, and the coordinator then
/// fetches and checks every block it saw.
fn drive_async(
    client: &NodeClient,
    txs: &[Vec<u8>],
    watchdog: Duration,
    pace: Option<Duration>,
) -> Result<Outcome, RunError> {
    let events = client
        .subscribe_new_block_header()
        .map_err(|error| RunError::Rpc { completed: 0, error })?;
    let (count_tx, count_rx) = mpsc::channel::<u64>();
    let start = Instant::now();

    let listener = std::thread::Builder::new()
        .name("bench-listener".into())
        .spawn(move || -> Result<Vec<BlockSample>, (u64, u64)> {
            let mut samples = Vec::new();
            let mut seen = 0u64;
            let mut target: Option<u64> = None;
            let mut last_event = Instant::now();
            loop {
                if target.is_none() {
                    target = count_rx.try_recv().ok();
                }
                if let Some(t) = target {
                    if seen >= t {
                        return Ok(samples);
                    }
                }
                match events.recv_timeout(Duration::from_millis(2)) {
                    Ok(ev) => {
                        seen += ev.header.num_txs as u64;
                        samples.push(BlockSample {
                            height: ev.header.height,
                            at_ms: start.elapsed().as_secs_f64() * 1e3,
                            num_txs: ev.header.num_txs,
                        });
                        last_event = Instant::now();
                    }
                    Err(mpsc::RecvTimeoutError::Timeout) => {
                        if last_event.elapsed() > watchdog {
                            return Err((seen, target.unwrap_or(0)));
                        }
                    }
                    Err(mpsc::RecvTimeoutError::Disconnected) => return Err((seen, target.unwrap_or(0))),
                }
            }
        })
        .expect("spawn listener");

    let mut admitted = 0usize;
    for (i, tx) in txs.iter().enumerate() {
        if let (Some(p), true) = (pace, i > 0) {
            std::thread::sleep(p);
        }
        let r = client
            .broadcast_tx_sync(tx.clone())
            .map_err(|error| RunError::Rpc { completed: i, error })?;
        if r.accepted {
            admitted += 1;
        } else {
            warn!("bc-transaction {i} rejected: {}", r.reason.unwrap_or_default());
        }
    }
    let _ = count_tx.send(admitted as u64);
    let samples = listener
        .join()
        .expect("listener panicked")
        .map_err(|(seen, admitted)| RunError::Stall { seen, admitted })?;
    let processing_ms = start.elapsed().as_secs_f64() * 1e3;

    let t = Instant::now();
    let mut fetched = Vec::with_capacity(samples.len());
    for s in &samples {
        fetched.push(client.fetch_block(s.height).map_err(|error| RunError::Rpc {
            completed: txs.len(),
            error,
        })?);
    }
    let failures = verify_blocks(fetched.iter().map(|(b, s)| (b, s.as_slice())));
    let inspection_ms = t.elapsed().as_secs_f64() * 1e3;
    Ok(Outcome {
        admitted,
        latencies_ms: Vec::new(),
        blocks: samples,
        processing_ms,
        inspection_ms,
        failures: Some(failures),
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub runtime_ms: u64,
    pub runtime_us: u64,
    pub blocks: usize,
    pub statements: usize,
    pub final_hash: Digest,
}

/// Executes each recorded block as one db-transaction directly against a
/// bare engine: no consensus, no mempool, no network.
pub fn replay_standalone(packing: &PackingRecord, engine: &Engine) -> ReplayReport {
    let mut e = engine.clone();
    let t = Instant::now();
    let mut statements = 0;
    for b in &packing.blocks {
        e.begin(b.block_time).expect("no open db-transaction");
        let mut ok = true;
        for s in &b.statements {
            statements += 1;
            ok &= e.execute_status(s).is_ok();
        }
        if ok {
            e.commit();
        } else {
            e.rollback();
        }
    }
    let elapsed = t.elapsed();
    ReplayReport {
        runtime_ms: elapsed.as_millis() as u64,
        runtime_us: elapsed.as_micros() as u64,
        blocks: packing.blocks.len(),
        statements,
        final_hash: e.committed_hash(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Dimension {
    Batch(Vec<usize>),
    TimeoutCommit(Vec<u64>),
    Nodes(Vec<usize>),
}

impl Dimension {
    pub const TIMEOUTS: [u64; 6] = [25, 50, 100, 250, 500, 1000];
    pub const NODES: [usize; 3] = [1, 4, 8];

    pub fn name(&self) -> &'static str {
        match self {
            Dimension::Batch(_) => "batch",
            Dimension::TimeoutCommit(_) => "timeout_commit",
            Dimension::Nodes(_) => "nodes",
        }
    }

    pub fn default_for(name: &str) -> Option<Dimension> {
        match name {
            "batch" => Some(Dimension::Batch(BatchPlan::SWEEP.to_vec())),
            "timeout_commit" | "timeout-commit" => Some(Dimension::TimeoutCommit(Self::TIMEOUTS.to_vec())),
            "nodes" => Some(Dimension::Nodes(Self::NODES.to_vec())),
            _ => None,
        }
    }

    fn points(&self) -> Vec<u64> {
        match self {
            Dimension::Batch(v) => v.iter().map(|&b| b as u64).collect(),
            Dimension::TimeoutCommit(v) => v.clone(),
            Dimension::Nodes(v) => v.iter().map(|&n| n as u64).collect(),
        }
    }

    fn apply(&self, base: &RunConfig, value: u64) -> RunConfig {
        let mut c = base.clone();
        match self {
            Dimension::Batch(_) => c.mode = Mode::from_batch(value as usize),
            Dimension::TimeoutCommit(_) => c.timeout_commit_ms = value,
            Dimension::Nodes(_) => c.nodes = value as usize,
        }
        c
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub value: u64,
    pub reports: Vec<MetricsReport>,
}

impl SweepPoint {
    pub fn end_to_end(&self) -> crate::metrics::Summary {
        crate::metrics::Summary::of(&self.reports.iter().map(|r| r.end_to_end_ms).collect::<Vec<_>>())
    }
}

/// Runs `base` at every point of `dim`, `base.reps` times each.
pub fn sweep(base: &RunConfig, dim: &Dimension, engine: &Engine) -> Result<Vec<SweepPoint>, RunError> {
    let mut out = Vec::new();
    for v in dim.points() {
        let cfg = dim.apply(base, v);
        let reports = (0..base.reps)
            .map(|rep| run_once(&cfg, engine, &format!("{}={v}/rep{rep}", dim.name())))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(SweepPoint { value: v, reports });
    }
    Ok(out)
}

/// Runs `cfg.reps` repetitions.
pub fn run_reps(cfg: &RunConfig, engine: &Engine) -> Result<Vec<MetricsReport>, RunError> {
    (0..cfg.reps)
        .map(|rep| run_once(cfg, engine, &format!("rep{rep}")))
        .collect()
}
