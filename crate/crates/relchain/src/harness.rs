//! Network assembly shared by the realtime benchmarks and virtual-time runs.

use std::io;
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use relchain_core::mempool::Admission;
use relchain_core::relational::Engine;
use relchain_core::sim::{spawn_network, LatencyProfile, NetworkConfig, SimError, SimEvent, SimReport, Simulation};
use relchain_core::{BcTransaction, Digest, ValidatorId};
use thiserror::Error;

use crate::abci_socket::{connect_abci, serve_abci, AbciServer, SocketQuery};
use crate::backend::{PublishingBackend, QueryService};
use crate::runtime::DynBackend;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, clap::ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbciVariant {
    /// Backend called in-process.
    Builtin,
    /// Backend behind a loopback TCP socket.
    Server,
}

impl AbciVariant {
    pub fn name(self) -> &'static str {
        match self {
            AbciVariant::Builtin => "builtin",
            AbciVariant::Server => "server",
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("abci socket: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Per-node backends for one network, plus what keeps them alive.
pub struct Backends {
    pub backends: Vec<DynBackend>,
    pub queries: Vec<Arc<dyn QueryService>>,
    pub servers: Vec<AbciServer>,
    /// State hash of the initial state, identical on every node.
    pub genesis: Digest,
}

/// Default bind address for the server variant: loopback, ephemeral ports.
pub const DEFAULT_ABCI_ADDRESS: SocketAddr = SocketAddr::new(IpAddr::V4(Ipv4Addr::LOCALHOST), 0);

/// Gives every node its own copy of `engine`. With the server variant node
/// `i` listens on `bind` with the port offset by `i` (unless the port is 0).
pub fn build_backends(
    engine: &Engine,
    n: usize,
    variant: AbciVariant,
    bind: SocketAddr,
) -> Result<Backends, HarnessError> {
    let genesis = engine.committed_hash();
    let mut out = Backends {
        backends: Vec::with_capacity(n),
        queries: Vec::with_capacity(n),
        servers: Vec::new(),
        genesis,
    };
    for i in 0..n {
        let backend = PublishingBackend::new(engine.clone());
        match variant {
            AbciVariant::Builtin => {
                out.queries.push(Arc::new(backend.snapshots()));
                out.backends.push(Box::new(backend));
            }
            AbciVariant::Server => {
                let mut at = bind;
                if at.port() != 0 {
                    at.set_port(at.port() + i as u16);
                }
                let server = serve_abci(backend, at)?;
                let addr = server.local_addr();
                out.backends.push(Box::new(connect_abci(addr, Duration::from_secs(5))?));
                out.queries
                    .push(Arc::new(SocketQuery::new(connect_abci(addr, Duration::from_secs(5))?)));
                out.servers.push(server);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct NetworkSpec {
    pub nodes: usize,
    pub latency: LatencyProfile,
    pub config: NetworkConfig,
    pub abci: AbciVariant,
    pub abci_address: SocketAddr,
}

impl NetworkSpec {
    pub fn new(nodes: usize) -> Self {
        Self {
            nodes,
            latency: LatencyProfile::zero(),
            config: NetworkConfig::default(),
            abci: AbciVariant::Builtin,
            abci_address: DEFAULT_ABCI_ADDRESS,
        }
    }
}

/// A simulated network with its backends wired in.
pub struct Assembled {
    pub sim: Simulation<DynBackend>,
    pub queries: Vec<Arc<dyn QueryService>>,
    pub servers: Vec<AbciServer>,
    pub genesis: Digest,
}

pub fn assemble(spec: &NetworkSpec, engine: &Engine) -> Result<Assembled, HarnessError> {
    let b = build_backends(engine, spec.nodes, spec.abci, spec.abci_address)?;
    let mut config = spec.config.clone();
    config.genesis_app_hash = b.genesis;
    let mut backends = b.backends.into_iter().map(Some).collect::<Vec<_>>();
    let sim = spawn_network(spec.nodes, spec.latency.clone(), config, |id| {
        backends[id.index()].take().expect("one backend per node")
    })?;
    Ok(Assembled {
        sim,
        queries: b.queries,
        servers: b.servers,
        genesis: b.genesis,
    })
}

/// Outcome of a virtual-time run.
pub struct VirtualRun {
    pub sim: Simulation<DynBackend>,
    pub servers: Vec<AbciServer>,
    pub genesis: Digest,
    pub report: SimReport,
    pub admitted: Vec<Digest>,
    pub rejected: usize,
}

impl VirtualRun {
    /// Canonical ledger export of every node.
    pub fn ledger_exports(&self) -> Vec<Vec<u8>> {
        self.sim.nodes().iter().map(|n| n.ledger().export()).collect()
    }

    pub fn app_hashes(&self) -> Vec<Digest> {
        self.sim.nodes().iter().map(|n| n.app_hash()).collect()
    }
}

/// Submits `txs` to node 0 at `per_ms` transactions per virtual millisecond
/// and runs until the network is quiescent.
pub fn run_virtual(
    spec: &NetworkSpec,
    engine: &Engine,
    txs: &[BcTransaction],
    per_ms: u64,
    deadline_ms: u64,
) -> Result<VirtualRun, HarnessError> {
    let Assembled {
        mut sim,
        servers,
        genesis,
        ..
    } = assemble(spec, engine)?;
    let per_ms = per_ms.max(1);
    for (i, tx) in txs.iter().enumerate() {
        let at = i as u64 / per_ms;
        sim.schedule_submit(at, ValidatorId(0), i as u64, relchain_core::codec::Encode::encode(tx));
    }
    let report = sim.run_until_quiescent(deadline_ms)?;
    let mut admitted = Vec::new();
    let mut rejected = 0;
    for ev in sim.take_events() {
        if let SimEvent::Submitted { admission, .. } = ev {
            match admission {
                Admission::Accepted(h) => admitted.push(h),
                Admission::Rejected(_) => rejected += 1,
            }
        }
    }
    Ok(VirtualRun {
        sim,
        servers,
        genesis,
        report,
        admitted,
        rejected,
    })
}
