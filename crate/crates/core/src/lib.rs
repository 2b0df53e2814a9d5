//! Core of a Tendermint-style replicated chain with a deterministic
//! relational backend.
//!
//! Everything here is `no_std` (with `alloc`) and free of clocks, threads and
//! IO: nodes, the consensus state machine and the simulated network are driven
//! by explicit events, which makes every virtual-time run reproducible.

#![no_std]

extern crate alloc;

pub mod abci;
pub mod codec;
pub mod consensus;
pub mod hash;
pub mod ledger;
pub mod mempool;
pub mod node;
pub mod relational;
pub mod rng;
pub mod sim;
pub mod sql;
pub mod types;
pub mod workloads;

pub use hash::Digest;
pub use types::{BcTransaction, Block, BlockHeader, ClientId, ExecStatus, ValidatorId, WlStatement};
