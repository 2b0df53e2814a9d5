use std::time::Duration;

use relchain::harness::{assemble, NetworkSpec};
use relchain::rpc_socket::{serve_rpc, RpcSocketClient, RpcSocketError};
use relchain::{RealtimeNetwork, RpcError};
use relchain_core::codec::Encode;
use relchain_core::consensus::TimeoutConfig;
use relchain_core::sim::ClockMode;
use relchain_core::workloads::{batch, BatchPlan, SmallbankConfig, Workload};
use relchain_core::ValidatorId;

const TIMEOUT: Duration = Duration::from_secs(10);

fn network(nodes: usize) -> (RealtimeNetwork, Workload, Vec<relchain::abci_socket::AbciServer>) {
    let w = Workload::Smallbank(SmallbankConfig::with_accounts(100, 1));
    let mut spec = NetworkSpec::new(nodes);
    spec.config.clock = ClockMode::Realtime;
    spec.config.timeouts = TimeoutConfig {
        commit_ms: 20,
        ..TimeoutConfig::default()
    };
    let a = assemble(&spec, &w.init()).unwrap();
    (RealtimeNetwork::start(a.sim, a.queries), w, a.servers)
}

#[test]
fn commit_query_and_fetch_over_the_socket() {
    let (net, w, _servers) = network(4);
    let server = serve_rpc(net.client(ValidatorId(0)), "127.0.0.1:0").unwrap();
    let mut c = RpcSocketClient::connect(server.local_addr(), TIMEOUT).unwrap();

    let txs = batch(w.statements(3), BatchPlan::new(1).unwrap());
    let r = c.broadcast_tx_commit(&txs[0].encode()).unwrap();
    assert!(r.all_ok());
    assert_eq!(r.tx_hash, txs[0].hash());
    assert_eq!(r.statuses.len(), 1);

    let (block, statuses) = c.fetch_block(r.height).unwrap();
    assert_eq!(block.header.height, r.height);
    assert!(block.txs.contains(&txs[0]));
    assert_eq!(statuses.len(), block.txs.len());

    let adm = c.broadcast_tx_sync(&txs[1].encode()).unwrap();
    assert!(adm.accepted);
    let dup = c.broadcast_tx_sync(&txs[1].encode()).unwrap();
    assert!(!dup.accepted);
    assert_eq!(c.broadcast_tx_async(&txs[2].encode()).unwrap(), txs[2].hash());

    let q = c.query("SELECT checking FROM accounts WHERE custid = 1").unwrap();
    assert!(q.is_ok());
    assert!(c.query("DELETE FROM accounts").unwrap().is_err());

    match c.fetch_block(1_000_000) {
        Err(RpcSocketError::Rpc(RpcError::NotFound(h))) => assert_eq!(h, 1_000_000),
        other => panic!("expected NotFound, got {other:?}"),
    }
    drop(c);
    drop(server);
    net.shutdown();
}

#[test]
fn subscription_streams_headers_in_height_order() {
    let (net, w, _servers) = network(1);
    let server = serve_rpc(net.client(ValidatorId(0)), "127.0.0.1:0").unwrap();
    let events = RpcSocketClient::connect(server.local_addr(), TIMEOUT)
        .unwrap()
        .subscribe_new_block_header()
        .unwrap();
    let mut sender = RpcSocketClient::connect(server.local_addr(), TIMEOUT).unwrap();
    for tx in batch(w.statements(30), BatchPlan::new(1).unwrap()) {
        assert!(sender.broadcast_tx_sync(&tx.encode()).unwrap().accepted);
    }
    let mut seen = 0;
    let mut last = 0;
    while seen < 30 {
        let ev = events.recv_timeout(TIMEOUT).expect("header");
        assert!(ev.header.height > last);
        last = ev.header.height;
        seen += ev.header.num_txs;
    }
    assert_eq!(seen, 30);
    drop(sender);
    drop(server);
    net.shutdown();
}

#[test]
fn garbage_transaction_is_rejected() {
    let (net, _w, _servers) = network(1);
    let server = serve_rpc(net.client(ValidatorId(0)), "127.0.0.1:0").unwrap();
    let mut c = RpcSocketClient::connect(server.local_addr(), TIMEOUT).unwrap();
    let r = c.broadcast_tx_sync(&[1, 2, 3]).unwrap();
    assert!(!r.accepted);
    assert!(r.reason.is_some());
    assert!(c.broadcast_tx_commit(&[1, 2, 3]).is_err());
    drop(c);
    drop(server);
    net.shutdown();
}
