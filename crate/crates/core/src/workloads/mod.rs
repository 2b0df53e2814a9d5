//! Benchmark workloads: Smallbank, a TPC-C subset, and batching.

mod batch;
pub mod smallbank;
pub mod tpcc;

use alloc::vec::Vec;

pub use batch::{batch, BatchPlan};
pub use smallbank::SmallbankConfig;
pub use tpcc::{TpccConfig, TpccMix};

use crate::relational::Engine;
use crate::types::WlStatement;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Workload {
    Smallbank(SmallbankConfig),
    Tpcc(TpccConfig),
}

impl Workload {
    pub fn name(&self) -> &'static str {
        match self {
            Workload::Smallbank(_) => "smallbank",
            Workload::Tpcc(_) => "tpcc",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Workload::Smallbank(c) => c.seed,
            Workload::Tpcc(c) => c.seed,
        }
    }

    pub fn validate(&self) -> Result<(), alloc::string::String> {
        match self {
            Workload::Smallbank(c) => c.validate(),
            Workload::Tpcc(c) => c.validate(),
        }
    }

    /// Populated engine with the workload's schema and procedures.
    pub fn init(&self) -> Engine {
        match self {
            Workload::Smallbank(c) => smallbank::init(c),
            Workload::Tpcc(c) => tpcc::init(c),
        }
    }

    pub fn next(&self, i: u64) -> WlStatement {
        match self {
            Workload::Smallbank(c) => smallbank::next(c, i),
            Workload::Tpcc(c) => tpcc::next(c, i),
        }
    }

    pub fn statements(&self, count: u64) -> Vec<WlStatement> {
        (0..count).map(|i| self.next(i)).collect()
    }
}
