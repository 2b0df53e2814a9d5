use std::fs::File;
use std::io;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use relchain::bench::{self, Dimension, MetricsReport, Mode, RunConfig};
use relchain::files::{load_packing, resolve_latency_profile, save_packing};
use relchain::harness::{assemble, AbciVariant, NetworkSpec, DEFAULT_ABCI_ADDRESS};
use relchain::metrics::{write_csv, Summary};
use relchain::rpc_socket::serve_rpc;
use relchain::runtime::RealtimeNetwork;
use relchain_core::consensus::TimeoutConfig;
use relchain_core::sim::ClockMode;
use relchain_core::workloads::{SmallbankConfig, TpccConfig, TpccMix, Workload};
use relchain_core::ValidatorId;

#[derive(Parser)]
#[command(name = "relchain", version, about = "Relational blockchain node simulator and benchmark driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark configuration.
    Bench(BenchArgs),
    /// Vary one parameter and run a benchmark at every point.
    Sweep(SweepArgs),
    /// Execute a packing record directly against a fresh backend.
    Replay(ReplayArgs),
    /// Serve a workload's backend over the ABCI socket protocol.
    ServeAbci(ServeAbciArgs),
    /// Run a realtime network and expose node 0 on the RPC socket.
    Node(NodeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum WorkloadKind {
    Smallbank,
    Tpcc,
}

#[derive(Clone, Copy, ValueEnum)]
enum MixArg {
    Writes,
    NewOrder,
    Payment,
    OrderStatus,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Sync,
    PseudoSync,
    Async,
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    #[arg(long, value_enum, default_value = "smallbank")]
    workload: WorkloadKind,
    #[arg(long, default_value_t = 100_000)]
    accounts: u64,
    #[arg(long, default_value_t = 10)]
    warehouses: u64,
    /// Customers per district.
    #[arg(long, default_value_t = 3000)]
    customers: u64,
    #[arg(long, default_value_t = 100_000)]
    items: u64,
    /// Initial orders per district.
    #[arg(long, default_value_t = 3000)]
    orders: u64,
    #[arg(long, value_enum, default_value = "writes")]
    tpcc_mix: MixArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl WorkloadArgs {
    fn workload(&self) -> Workload {
        match self.workload {
            WorkloadKind::Smallbank => Workload::Smallbank(SmallbankConfig::with_accounts(self.accounts, self.seed)),
            WorkloadKind::Tpcc => Workload::Tpcc(TpccConfig {
                n_warehouses: self.warehouses,
                customers_per_district: self.customers,
                items: self.items,
                orders_per_district: self.orders,
                seed: self.seed,
                mix: match self.tpcc_mix {
                    MixArg::Writes => TpccMix::Writes,
                    MixArg::NewOrder => TpccMix::NewOrder,
                    MixArg::Payment => TpccMix::Payment,
                    MixArg::OrderStatus => TpccMix::OrderStatus,
                },
                ..TpccConfig::default()
            }),
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    #[command(flatten)]
    wl: WorkloadArgs,
    #[arg(long, value_enum, default_value = "async")]
    mode: ModeArg,
    /// wl-transactions per bc-transaction (pseudo-sync only).
    #[arg(long, default_value_t = 1)]
    batch: usize,
    /// wl-transactions to fire; defaults to 1,000 for sync modes and 10,000 for async.
    #[arg(long)]
    txs: Option<u64>,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    /// zero, one-region, two-regions, four-regions, or a TOML file.
    #[arg(long, default_value = "zero")]
    latency_profile: String,
    /// timeout_commit in milliseconds.
    #[arg(long, default_value_t = 100)]
    timeout_commit: u64,
    #[arg(long, value_enum, default_value = "builtin")]
    abci_variant: AbciVariant,
    #[arg(long, default_value_t = DEFAULT_ABCI_ADDRESS)]
    abci_address: SocketAddr,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    /// Async listener watchdog in seconds.
    #[arg(long, default_value_t = 60)]
    watchdog: u64,
    /// Milliseconds between async broadcasts.
    #[arg(long)]
    pace: Option<u64>,
    /// CSV output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig, String> {
        let mode = match self.mode {
            ModeArg::Sync if self.batch != 1 => return Err("--mode sync requires --batch 1".into()),
            ModeArg::Sync => Mode::Sync,
            ModeArg::PseudoSync => Mode::PseudoSync(self.batch),
            ModeArg::Async if self.batch != 1 => return Err("--mode async sends one statement per bc-transaction".into()),
            ModeArg::Async => Mode::Async,
        };
        let mut c = RunConfig::new(self.wl.workload(), mode);
        c.n_txs = self.txs.unwrap_or(mode.default_txs());
        c.nodes = self.nodes;
        c.latency = resolve_latency_profile(&self.latency_profile, self.nodes).map_err(|e| e.to_string())?;
        c.timeout_commit_ms = self.timeout_commit;
        c.abci = self.abci_variant;
        c.abci_address = self.abci_address;
        c.reps = self.reps;
        c.watchdog = Duration::from_secs(self.watchdog);
        c.pace = self.pace.map(Duration::from_millis);
        c.validate().map_err(|e| e.to_string())?;
        Ok(c)
    }

    fn emit(&self, reports: &[MetricsReport]) -> io::Result<()> {
        let res = match &self.out {
            Some(p) => write_csv(File::create(p)?, reports),
            None => write_csv(io::stdout().lock(), reports),
        };
        res.map_err(io::Error::other)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Write the packing record of the last repetition as JSON.
    #[arg(long)]
    packing_out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_parser = ["batch", "timeout-commit", "nodes"])]
    dimension: String,
    /// Comma-separated points; the standard range when absent.
    #[arg(long, value_delimiter = ',')]
    values: Vec<u64>,
}

#[derive(Args)]
struct ReplayArgs {
    #[command(flatten)]
    wl: WorkloadArgs,
    #[arg(long)]
    packing: PathBuf,
    /// Fail unless the final state hash equals this hex digest.
    #[arg(long)]
    expect_hash: Option<String>,
}

#[derive(Args)]
struct ServeAbciArgs {
    #[command(flatten)]
    wl: WorkloadArgs,
    #[arg(long, default_value = "127.0.0.1:26658")]
    abci_address: SocketAddr,
}

#[derive(Args)]
struct NodeArgs {
    #[command(flatten)]
    wl: WorkloadArgs,
    #[arg(long, default_value_t = 4)]
    nodes: usize,
    #[arg(long, default_value = "zero")]
    latency_profile: String,
    #[arg(long, default_value_t = 100)]
    timeout_commit: u64,
    #[arg(long, value_enum, default_value = "builtin")]
    abci_variant: AbciVariant,
    #[arg(long, default_value = "127.0.0.1:26657")]
    rpc_address: SocketAddr,
}

fn fail(msg: impl std::fmt::Display) -> ExitCode {
    error!("{msg}");
    eprintln!("error: {msg}");
    ExitCode::FAILURE
}

fn report_problems(reports: &[MetricsReport]) -> bool {
    let mut bad = false;
    for r in reports {
        for f in &r.failures {
            bad = true;
            eprintln!(
                "{}: failed statement at height {} tx {} stmt {}: {} ({})",
                r.run_id, f.height, f.tx_index, f.stmt_index, f.text, f.reason
            );
        }
        if !r.nodes_agree {
            bad = true;
            eprintln!("{}: nodes disagree on the app hash", r.run_id);
        }
    }
    bad
}

fn bench_cmd(args: BenchArgs) -> ExitCode {
    let cfg = match args.run.config() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let engine = cfg.workload.init();
    let reports = match bench::run_reps(&cfg, &engine) {
        Ok(r) => r,
        Err(e) => return fail(e),
    };
    if let Err(e) = args.run.emit(&reports) {
        return fail(e);
    }
    if let (Some(path), Some(last)) = (&args.packing_out, reports.last()) {
        if let Err(e) = save_packing(path, &last.packing) {
            return fail(e);
        }
    }
    let e2e = Summary::of(&reports.iter().map(|r| r.end_to_end_ms).collect::<Vec<_>>());
    eprintln!(
        "end-to-end ms: mean {:.1} min {:.1} max {:.1} over {} runs",
        e2e.mean, e2e.min, e2e.max, e2e.n
    );
    if report_problems(&reports) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn sweep_cmd(args: SweepArgs) -> ExitCode {
    let cfg = match args.run.config() {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let mut dim = Dimension::default_for(&args.dimension).expect("validated by clap");
    if !args.values.is_empty() {
        dim = match dim {
            Dimension::Batch(_) => Dimension::Batch(args.values.iter().map(|&v| v as usize).collect()),
            Dimension::TimeoutCommit(_) => Dimension::TimeoutCommit(args.values.clone()),
            Dimension::Nodes(_) => Dimension::Nodes(args.values.iter().map(|&v| v as usize).collect()),
        };
    }
    let engine = cfg.workload.init();
    let points = match bench::sweep(&cfg, &dim, &engine) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let reports: Vec<MetricsReport> = points.iter().flat_map(|p| p.reports.iter().cloned()).collect();
    if let Err(e) = args.run.emit(&reports) {
        return fail(e);
    }
    for p in &points {
        let s = p.end_to_end();
        eprintln!(
            "{}={}: end-to-end ms mean {:.1} min {:.1} max {:.1}",
            dim.name(),
            p.value,
            s.mean,
            s.min,
            s.max
        );
    }
    if report_problems(&reports) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn replay_cmd(args: ReplayArgs) -> ExitCode {
    let packing = match load_packing(&args.packing) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let wl = args.wl.workload();
    if packing.workload != wl.name() {
        return fail(format!("packing record is for {}, not {}", packing.workload, wl.name()));
    }
    let r = bench::replay_standalone(&packing, &wl.init());
    println!(
        "blocks {} statements {} runtime_ms {:.3} final_hash {}",
        r.blocks,
        r.statements,
        r.runtime_us as f64 / 1e3,
        r.final_hash
    );
    match args.expect_hash {
        Some(h) if h != r.final_hash.to_string() => fail(format!("final hash {} != expected {h}", r.final_hash)),
        _ => ExitCode::SUCCESS,
    }
}

fn serve_abci_cmd(args: ServeAbciArgs) -> ExitCode {
    let backend = relchain::backend::PublishingBackend::new(args.wl.workload().init());
    match relchain::abci_socket::serve_abci(backend, args.abci_address) {
        Ok(server) => {
            eprintln!("serving abci on {}", server.local_addr());
            loop {
                std::thread::park();
            }
        }
        Err(e) => fail(e),
    }
}

fn node_cmd(args: NodeArgs) -> ExitCode {
    let latency = match resolve_latency_profile(&args.latency_profile, args.nodes) {
        Ok(l) => l,
        Err(e) => return fail(e),
    };
    let mut spec = NetworkSpec::new(args.nodes);
    spec.latency = latency;
    spec.abci = args.abci_variant;
    spec.config.clock = ClockMode::Realtime;
    spec.config.timeouts = TimeoutConfig {
        commit_ms: args.timeout_commit,
        ..TimeoutConfig::default()
    };
    let assembled = match assemble(&spec, &args.wl.workload().init()) {
        Ok(a) => a,
        Err(e) => return fail(e),
    };
    let net = RealtimeNetwork::start(assembled.sim, assembled.queries);
    match serve_rpc(net.client(ValidatorId(0)), args.rpc_address) {
        Ok(server) => {
            eprintln!("node 0 rpc on {}", server.local_addr());
            loop {
                std::thread::park();
            }
        }
        Err(e) => fail(e),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Bench(a) => bench_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Replay(a) => replay_cmd(a),
        Command::ServeAbci(a) => serve_abci_cmd(a),
        Command::Node(a) => node_cmd(a),
    }
}
