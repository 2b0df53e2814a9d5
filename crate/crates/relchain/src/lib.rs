//! Threads, sockets and files around `relchain-core`: the realtime node
//! runtime, the socket ABCI server, the node RPC, and the benchmark harness
//! behind the `relchain` binary.

pub mod abci_socket;
pub mod backend;
pub mod bench;
pub mod files;
pub mod harness;
pub mod metrics;
pub mod rpc;
pub mod rpc_socket;
pub mod runtime;

pub use bench::{run_once, run_reps, replay_standalone, sweep, Mode, MetricsReport, PackingRecord, RunConfig};
pub use harness::AbciVariant;
pub use rpc::{AdmissionResponse, CommitResponse, NewBlockHeaderEvent, RpcError};
pub use runtime::{NodeClient, RealtimeNetwork};
