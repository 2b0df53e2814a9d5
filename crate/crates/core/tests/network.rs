use std::collections::BTreeMap;

use relchain_core::codec::Encode;
use relchain_core::ledger::verify_export;
use relchain_core::mempool::{Admission, Rejection};
use relchain_core::node::Behavior;
use relchain_core::relational::RelationalBackend;
use relchain_core::sim::{spawn_network, Fault, FaultEntry, FaultSchedule, LatencyProfile, NetworkConfig, SimEvent, Simulation};
use relchain_core::workloads::{batch, BatchPlan, SmallbankConfig, Workload};
use relchain_core::{Digest, ValidatorId};

fn smallbank(n_accounts: u64) -> Workload {
    Workload::Smallbank(SmallbankConfig::with_accounts(n_accounts, 17))
}

fn network(n: usize, latency: LatencyProfile, mut config: NetworkConfig) -> Simulation<RelationalBackend> {
    let engine = smallbank(500).init();
    config.genesis_app_hash = engine.committed_hash();
    spawn_network(n, latency, config, |_| RelationalBackend::new(engine.clone())).unwrap()
}

fn schedule(sim: &mut Simulation<RelationalBackend>, to: ValidatorId, count: u64, every_ms: u64) {
    let txs = batch(smallbank(500).statements(count), BatchPlan::new(1).unwrap());
    for (i, tx) in txs.iter().enumerate() {
        sim.schedule_submit(i as u64 * every_ms, to, i as u64, tx.encode());
    }
}

/// Block ids per height over the given nodes; panics on a fork.
fn assert_agreement(sim: &Simulation<RelationalBackend>, nodes: &[usize]) -> u64 {
    let mut seen: BTreeMap<u64, Digest> = BTreeMap::new();
    for &i in nodes {
        for r in sim.nodes()[i].ledger().records() {
            let prev = seen.insert(r.height(), r.block_id);
            assert!(prev.is_none() || prev == Some(r.block_id), "fork at height {}", r.height());
        }
    }
    nodes.iter().map(|&i| sim.nodes()[i].height()).min().unwrap()
}

fn committed_txs(sim: &Simulation<RelationalBackend>, node: usize) -> usize {
    sim.nodes()[node].ledger().blocks().map(|b| b.txs.len()).sum()
}

#[test]
fn four_nodes_commit_everything_and_agree() {
    let mut sim = network(4, LatencyProfile::uniform("lan", 1, 3).with_seed(5), NetworkConfig::default());
    schedule(&mut sim, ValidatorId(2), 200, 2);
    sim.run_until_quiescent(600_000).unwrap();
    let h = assert_agreement(&sim, &[0, 1, 2, 3]);
    assert!(h >= 1);
    for i in 0..4 {
        assert_eq!(committed_txs(&sim, i), 200);
        assert_eq!(sim.nodes()[i].app_hash(), sim.nodes()[0].app_hash());
        assert!(sim.nodes()[i].ledger().verify().is_ok());
        assert!(sim.nodes()[i].mempool().is_empty());
    }
    let export = sim.nodes()[1].ledger().export();
    assert_eq!(verify_export(&export, &sim.nodes()[1].ledger().tip_hash()).unwrap(), h);
}

#[test]
fn identical_runs_are_byte_identical() {
    let run = || {
        let mut sim = network(4, LatencyProfile::named("four-regions", 4).unwrap(), NetworkConfig::default());
        schedule(&mut sim, ValidatorId(0), 100, 1);
        sim.run_until_quiescent(600_000).unwrap();
        (
            sim.nodes().iter().map(|n| n.ledger().export()).collect::<Vec<_>>(),
            sim.report(),
        )
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(a, b);
    assert_eq!(ra, rb);
    assert!(a.iter().all(|e| e == &a[0]));
}

#[test]
fn single_node_never_votes_on_the_bus() {
    let mut sim = network(1, LatencyProfile::zero(), NetworkConfig::default());
    schedule(&mut sim, ValidatorId(0), 300, 1);
    sim.run_until_quiescent(600_000).unwrap();
    assert_eq!(committed_txs(&sim, 0), 300);
    assert_eq!(sim.stats().votes(), 0);
    let rounds: Vec<u32> = sim
        .take_events()
        .into_iter()
        .filter_map(|e| match e {
            SimEvent::Committed { round, .. } => Some(round),
            _ => None,
        })
        .collect();
    assert_eq!(rounds.len() as u64, sim.nodes()[0].height());
    assert!(rounds.iter().all(|&r| r == 0));
}

#[test]
fn byzantine_minority_cannot_fork() {
    for seed in 0..12u64 {
        let behavior = [Behavior::Silent, Behavior::EquivocateProposal, Behavior::ConflictingVotes][seed as usize % 3];
        let bad = (seed % 4) as u32;
        let config = NetworkConfig {
            faults: FaultSchedule::always(ValidatorId(bad), Fault::Byzantine(behavior)),
            ..NetworkConfig::default()
        };
        let mut sim = network(4, LatencyProfile::uniform("jitter", 1, 6).with_seed(seed), config);
        let honest: Vec<usize> = (0..4).filter(|&i| i != bad as usize).collect();
        schedule(&mut sim, ValidatorId(honest[0] as u32), 60, 7);
        sim.run_until_quiescent(10_000_000).unwrap();
        let h = assert_agreement(&sim, &honest);
        assert!(h >= 1, "seed {seed}: no progress under {behavior:?}");
        for &i in &honest {
            assert_eq!(committed_txs(&sim, i), 60, "seed {seed} node {i}");
        }
    }
}

#[test]
fn one_crash_is_tolerated_two_stall() {
    let crash = |nodes: &[u32]| NetworkConfig {
        faults: FaultSchedule {
            entries: nodes
                .iter()
                .map(|&n| FaultEntry {
                    node: ValidatorId(n),
                    fault: Fault::Crash,
                    start_height: 2,
                    end_height: u64::MAX,
                })
                .collect(),
        },
        ..NetworkConfig::default()
    };

    let mut sim = network(4, LatencyProfile::zero(), crash(&[3]));
    schedule(&mut sim, ValidatorId(0), 50, 20);
    sim.run_until_quiescent(10_000_000).unwrap();
    assert_agreement(&sim, &[0, 1, 2]);
    assert_eq!(committed_txs(&sim, 0), 50);
    assert!(sim.is_crashed(ValidatorId(3)));

    let mut sim = network(4, LatencyProfile::zero(), crash(&[2, 3]));
    schedule(&mut sim, ValidatorId(0), 50, 20);
    let _ = sim.run_until(60_000, |s| s.now() > 50_000);
    let h = assert_agreement(&sim, &[0, 1]);
    assert!(h <= 1, "committed height {h} without a quorum");
    assert!(committed_txs(&sim, 0) < 50);
}

#[test]
fn duplicate_submission_is_rejected() {
    let mut sim = network(4, LatencyProfile::zero(), NetworkConfig::default());
    let tx = batch(smallbank(500).statements(1), BatchPlan::new(1).unwrap()).remove(0).encode();
    assert!(sim.submit(ValidatorId(0), &tx).is_accepted());
    assert_eq!(sim.submit(ValidatorId(0), &tx), Admission::Rejected(Rejection::Duplicate));
    assert!(matches!(sim.submit(ValidatorId(0), b"junk"), Admission::Rejected(Rejection::Malformed(_))));
}
