//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

#[path = "../../core/tests/oracles/mod.rs"]
mod oracles;

use std::collections::BTreeMap;
use std::panic::{self, AssertUnwindSafe};
use std::time::{Duration, Instant};

use relchain::bench::MALFORMED_STATEMENT;
use relchain::harness::{assemble, run_virtual, AbciVariant, NetworkSpec};
use relchain::metrics::mean;
use relchain::{replay_standalone, run_once, run_reps, MetricsReport, Mode, RealtimeNetwork, RunConfig};
use relchain_core::codec::Encode;
use relchain_core::node::Behavior;
use relchain_core::sim::{Fault, FaultSchedule, LatencyProfile, NetworkConfig, Simulation};
use relchain_core::workloads::{batch, BatchPlan, SmallbankConfig, TpccConfig, TpccMix, Workload};
use relchain_core::{Digest, ValidatorId};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnMut() -> Outcome + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn smallbank() -> Workload {
    Workload::Smallbank(SmallbankConfig::with_accounts(100_000, 7))
}

fn tpcc(mix: TpccMix) -> Workload {
    let mut cfg = TpccConfig::small(1, 7);
    cfg.mix = mix;
    Workload::Tpcc(cfg)
}

fn bc_txs(w: &Workload, count: u64) -> Vec<relchain_core::BcTransaction> {
    batch(w.statements(count), BatchPlan::new(1).unwrap())
}

fn async_cfg(w: Workload, n_txs: u64) -> RunConfig {
    let mut c = RunConfig::new(w, Mode::Async);
    c.n_txs = n_txs;
    c
}

fn e2e(reports: &[MetricsReport]) -> f64 {
    mean(&reports.iter().map(|r| r.end_to_end_ms).collect::<Vec<_>>())
}

fn clean(reports: &[MetricsReport]) -> Result<(), String> {
    for r in reports {
        ensure(r.failures.is_empty(), format!("{} failed statements", r.failures.len()))?;
        ensure(r.nodes_agree, "nodes disagree on the app hash")?;
    }
    Ok(())
}

fn run(w: Workload, mode: Mode, n_txs: u64, nodes: usize, reps: usize) -> Result<Vec<MetricsReport>, String> {
    let engine = w.init();
    let mut c = RunConfig::new(w, mode);
    c.n_txs = n_txs;
    c.nodes = nodes;
    c.reps = reps;
    let reports = run_reps(&c, &engine).map_err(|e| e.to_string())?;
    clean(&reports)?;
    Ok(reports)
}

fn determinism() -> Outcome {
    let w = smallbank();
    let engine = w.init();
    let txs = bc_txs(&w, 1000);
    let mut exports: Vec<Vec<u8>> = Vec::new();
    let mut hashes: Vec<Digest> = Vec::new();
    for _ in 0..3 {
        let r = run_virtual(&NetworkSpec::new(4), &engine, &txs, 10, 10_000_000).map_err(|e| e.to_string())?;
        ensure(r.admitted.len() == 1000, format!("{} admitted", r.admitted.len()))?;
        let committed: usize = r.sim.nodes()[0].ledger().blocks().map(|b| b.txs.len()).sum();
        ensure(committed == 1000, format!("{committed} committed"))?;
        exports.extend(r.ledger_exports());
        hashes.extend(r.app_hashes());
    }
    ensure(exports.iter().all(|e| e == &exports[0]), "ledger exports differ")?;
    ensure(hashes.iter().all(|h| h == &hashes[0]), "final app hashes differ")?;
    Ok(format!("12 ledgers identical ({} bytes), app_hash {}", exports[0].len(), hashes[0]))
}

fn byzantine_safety() -> Outcome {
    const TARGET: u64 = 10;
    const TXS: u64 = 20;
    let w = Workload::Smallbank(SmallbankConfig::with_accounts(1000, 3));
    let engine = w.init();
    let txs = bc_txs(&w, TXS);
    let behaviors = [Behavior::Silent, Behavior::EquivocateProposal, Behavior::ConflictingVotes];
    let mut max_time = 0;
    for r in 0..100u64 {
        let bad = (r % 4) as usize;
        let behavior = behaviors[r as usize % 3];
        let mut spec = NetworkSpec::new(4);
        spec.latency = LatencyProfile::uniform("jitter", 1, 8).with_seed(r);
        spec.config = NetworkConfig {
            faults: FaultSchedule::always(ValidatorId(bad as u32), Fault::Byzantine(behavior)),
            create_empty_blocks: true,
            ..NetworkConfig::default()
        };
        let mut a = assemble(&spec, &engine).map_err(|e| e.to_string())?;
        let honest: Vec<usize> = (0..4).filter(|&i| i != bad).collect();
        let entry = ValidatorId(honest[r as usize % 3] as u32);
        for (i, tx) in txs.iter().enumerate() {
            a.sim.schedule_submit(i as u64 * 25, entry, i as u64, tx.encode());
        }
        let reached = |s: &Simulation<_>| {
            honest.iter().all(|&i| {
                let n = &s.nodes()[i];
                n.height() >= TARGET && n.ledger().blocks().map(|b| b.txs.len() as u64).sum::<u64>() == TXS
            })
        };
        a.sim
            .run_until(3_600_000, reached)
            .map_err(|e| format!("run {r} ({behavior:?} at node {bad}): {e}"))?;
        ensure(reached(&a.sim), format!("run {r} ({behavior:?} at node {bad}) stopped short of the target"))?;
        let mut seen: BTreeMap<u64, Digest> = BTreeMap::new();
        for &i in &honest {
            for rec in a.sim.nodes()[i].ledger().records() {
                if let Some(prev) = seen.insert(rec.height(), rec.block_id) {
                    ensure(prev == rec.block_id, format!("run {r}: honest nodes differ at height {}", rec.height()))?;
                }
            }
        }
        max_time = max_time.max(a.sim.now());
    }
    Ok(format!("100 runs, no conflicting commits, all reached height {TARGET} (longest {max_time} virtual ms)"))
}

fn block_atomicity() -> Outcome {
    const AT: u64 = 25;
    let w = smallbank();
    let engine = w.init();
    let mut c = async_cfg(w, 50);
    c.inject_malformed = Some(AT);
    c.pace = Some(Duration::from_millis(6));
    let r = run_once(&c, &engine, "atomicity").map_err(|e| e.to_string())?;
    ensure(r.failures.len() == 1, format!("{} failures reported", r.failures.len()))?;
    let f = &r.failures[0];
    ensure(
        f.seq_no == AT && f.text == MALFORMED_STATEMENT,
        format!("wrong statement named: seq {} {:?}", f.seq_no, f.text),
    )?;
    let h = f.height as usize;
    ensure(r.app_hashes[h] == r.app_hashes[h - 1], "failed block changed the state")?;
    let mut others = 0;
    for b in &r.packing.blocks {
        if b.height != f.height {
            others += 1;
            let i = b.height as usize;
            ensure(r.app_hashes[i] != r.app_hashes[i - 1], format!("block {} did not commit", b.height))?;
        }
    }
    ensure(others > 0, "only one block was produced")?;
    ensure(r.packing.statement_count() == 50, "not every statement was committed")?;
    Ok(format!("failed block {h} left the state unchanged, {others} other blocks committed"))
}

fn replay_equivalence() -> Outcome {
    let mut parts = Vec::new();
    for (w, n) in [(smallbank(), 10_000), (tpcc(TpccMix::Writes), 1_000)] {
        let name = w.name();
        let engine = w.init();
        let r = run_once(&async_cfg(w, n), &engine, "replay").map_err(|e| e.to_string())?;
        clean(std::slice::from_ref(&r))?;
        ensure(r.packing.statement_count() == n as usize, format!("{name}: missing statements"))?;
        let replay = replay_standalone(&r.packing, &engine);
        ensure(
            replay.final_hash.to_string() == r.final_app_hash,
            format!("{name}: replay {} chain {}", replay.final_hash, r.final_app_hash),
        )?;
        parts.push(format!("{name} {n} txs in {} blocks", r.packing.blocks.len()));
    }
    Ok(parts.join(", "))
}

/// Sync B=1 runtime measured by the batching criterion, reused by the next.
type Shared = std::cell::Cell<Option<f64>>;

fn batching(shared: &Shared) -> Outcome {
    let mut times = Vec::new();
    for b in [1usize, 8, 64, 512] {
        let r = run(smallbank(), Mode::from_batch(b), 1000, 4, 1)?;
        times.push(r[0].end_to_end_ms);
    }
    shared.set(Some(times[0]));
    let fmt = times.iter().map(|t| format!("{t:.0}")).collect::<Vec<_>>().join("/");
    ensure(times[0] >= 3.0 * times[2], format!("B=1 not 3x slower than B=64: {fmt} ms"))?;
    for w in times.windows(2) {
        ensure(w[1] <= w[0] * 1.10, format!("trend rises by more than 10%: {fmt} ms"))?;
    }
    Ok(format!("B=1/8/64/512: {fmt} ms, B=1 / B=64 = {:.1}", times[0] / times[2]))
}

fn sync_vs_async(shared: &Shared) -> Outcome {
    let sync = match shared.get() {
        Some(t) => t,
        None => run(smallbank(), Mode::Sync, 1000, 4, 1)?[0].end_to_end_ms,
    };
    let asy = e2e(&run(smallbank(), Mode::Async, 1000, 4, 3)?);
    ensure(sync >= 2.0 * asy, format!("sync {sync:.0} ms, async {asy:.0} ms"))?;
    Ok(format!("sync {sync:.0} ms, async {asy:.0} ms, ratio {:.1}", sync / asy))
}

fn overhead_ratio(w: Workload) -> Result<f64, String> {
    let engine = w.init();
    let mut ratios = Vec::new();
    for i in 0..3 {
        let r = run_once(&async_cfg(w.clone(), 1000), &engine, &format!("overhead-{i}")).map_err(|e| e.to_string())?;
        clean(std::slice::from_ref(&r))?;
        let replay = replay_standalone(&r.packing, &engine);
        ratios.push(r.end_to_end_ms / (replay.runtime_us.max(1) as f64 / 1e3));
    }
    Ok(mean(&ratios))
}

fn workload_complexity() -> Outcome {
    let sb = overhead_ratio(smallbank())?;
    let tp = overhead_ratio(tpcc(TpccMix::Writes))?;
    ensure(tp < sb, format!("tpcc {tp:.1}x, smallbank {sb:.1}x"))?;
    Ok(format!("overhead tpcc {tp:.1}x < smallbank {sb:.1}x"))
}

fn query_bypass() -> Outcome {
    let w = tpcc(TpccMix::OrderStatus);
    let engine = w.init();
    let cfg = async_cfg(w.clone(), 1000);
    let a = assemble(&cfg.network_spec(), &engine).map_err(|e| e.to_string())?;
    let net = RealtimeNetwork::start(a.sim, a.queries);
    let client = net.client(ValidatorId(0));
    let stmts = w.statements(1000);
    std::thread::sleep(Duration::from_millis(200));
    let (h0, hash0) = (client.height(), client.last_app_hash());
    let t = Instant::now();
    let mut errors = 0;
    for s in &stmts {
        if client.query(&s.text).is_err() {
            errors += 1;
        }
    }
    let query_ms = t.elapsed().as_secs_f64() * 1e3;
    std::thread::sleep(Duration::from_millis(3 * cfg.timeout_commit_ms));
    let (h1, hash1) = (client.height(), client.last_app_hash());
    let sim = net.shutdown();
    drop(a.servers);
    ensure(errors == 0, format!("{errors} queries failed"))?;
    ensure(h0 == 0 && h1 == 0, format!("height moved from {h0} to {h1}"))?;
    ensure(hash0 == hash1, "app hash changed")?;
    ensure(
        sim.nodes().iter().all(|n| n.app_hash() == a.genesis),
        "node state differs from genesis",
    )?;

    let writes = run_once(&cfg, &engine, "order-status-writes").map_err(|e| e.to_string())?;
    clean(std::slice::from_ref(&writes))?;
    ensure(
        query_ms < writes.end_to_end_ms,
        format!("queries {query_ms:.1} ms, write path {:.1} ms", writes.end_to_end_ms),
    )?;
    Ok(format!(
        "no blocks, height 0, hash unchanged; queries {query_ms:.1} ms vs write path {:.1} ms",
        writes.end_to_end_ms
    ))
}

fn one_node_skip() -> Outcome {
    let one = run(smallbank(), Mode::Async, 1000, 1, 3)?;
    let four = run(smallbank(), Mode::Async, 1000, 4, 3)?;
    let eight = run(smallbank(), Mode::Async, 1000, 8, 3)?;
    for r in &one {
        ensure(r.max_decide_round == 0, format!("n=1 decided in round {}", r.max_decide_round))?;
        ensure(r.vote_messages == 0, format!("n=1 sent {} votes", r.vote_messages))?;
    }
    let (t1, t4, t8) = (e2e(&one), e2e(&four), e2e(&eight));
    let detail = format!("n=1 {t1:.0} ms, n=4 {t4:.0} ms, n=8 {t8:.0} ms (x{:.2})", t8 / t4);
    ensure(t1 < t4, format!("n=1 not faster: {detail}"))?;
    ensure(t8 > t4 && t8 < 2.0 * t4, format!("n=8 not sublinear: {detail}"))?;
    Ok(format!("n=1 round 0, zero votes; {detail}"))
}

fn timeout_commit() -> Outcome {
    let w = smallbank();
    let engine = w.init();
    let mut c = async_cfg(w, 1000);
    c.reps = 3;
    let short = run_reps(&c, &engine).map_err(|e| e.to_string())?;
    c.timeout_commit_ms = 1000;
    let long = run_reps(&c, &engine).map_err(|e| e.to_string())?;
    clean(&short)?;
    clean(&long)?;
    let (s, l) = (e2e(&short), e2e(&long));
    ensure(l > s, format!("1000 ms: {l:.0} ms, 100 ms: {s:.0} ms"))?;
    Ok(format!("timeout_commit 1000 ms: {l:.0} ms > 100 ms: {s:.0} ms"))
}

fn abci_variants() -> Outcome {
    let w = smallbank();
    let engine = w.init();
    let txs = bc_txs(&w, 1000);
    let mut virt = Vec::new();
    for abci in [AbciVariant::Builtin, AbciVariant::Server] {
        let mut spec = NetworkSpec::new(4);
        spec.abci = abci;
        let r = run_virtual(&spec, &engine, &txs, 10, 10_000_000).map_err(|e| e.to_string())?;
        virt.push((r.ledger_exports(), r.app_hashes()));
    }
    ensure(virt[0] == virt[1], "builtin and server ledgers differ")?;

    let mut c = async_cfg(w, 1000);
    c.reps = 3;
    let builtin = run_reps(&c, &engine).map_err(|e| e.to_string())?;
    c.abci = AbciVariant::Server;
    let server = run_reps(&c, &engine).map_err(|e| e.to_string())?;
    clean(&builtin)?;
    clean(&server)?;
    let hashes: std::collections::BTreeSet<_> = builtin.iter().chain(&server).map(|r| &r.final_app_hash).collect();
    ensure(hashes.len() == 1, "final hashes differ between variants")?;
    let (b, s) = (e2e(&builtin), e2e(&server));
    ensure(s > b, format!("server {s:.0} ms, builtin {b:.0} ms"))?;
    Ok(format!("ledgers and hashes identical; server {s:.0} ms > builtin {b:.0} ms"))
}

fn oracle_suites() -> Outcome {
    oracles::run(10_000, oracles::script(), |s| oracles::check_round_trip(&s)).map_err(|e| format!("sql: {e}"))?;
    oracles::run(1_000, oracles::undo_case(), |(init, stmts, k)| oracles::check_undo(&init, &stmts, k))
        .map_err(|e| format!("undo: {e}"))?;
    oracles::run(200, oracles::smallbank_case(), |(cfg, n, b)| {
        oracles::check_smallbank_conservation(&cfg, n, b)
    })
    .map_err(|e| format!("smallbank: {e}"))?;
    oracles::run(200, oracles::tpcc_case(), |(cfg, n, bad)| oracles::check_next_o_id(&cfg, n, bad))
        .map_err(|e| format!("tpcc: {e}"))?;
    Ok("10000 sql scripts, 1000 rollbacks, 200 smallbank and 200 tpcc cases".to_string())
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let shared = Shared::new(None);
    let criteria: Vec<Criterion> = vec![
        ("determinism", Box::new(determinism)),
        ("byzantine safety", Box::new(byzantine_safety)),
        ("block atomicity", Box::new(block_atomicity)),
        ("replay equivalence", Box::new(replay_equivalence)),
        ("batching trend", Box::new(|| batching(&shared))),
        ("sync vs async", Box::new(|| sync_vs_async(&shared))),
        ("workload complexity", Box::new(workload_complexity)),
        ("query bypass", Box::new(query_bypass)),
        ("one-node consensus skip", Box::new(one_node_skip)),
        ("timeout_commit", Box::new(timeout_commit)),
        ("builtin vs server abci", Box::new(abci_variants)),
        ("oracle suites", Box::new(oracle_suites)),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, mut f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let out = panic::catch_unwind(AssertUnwindSafe(&mut f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".to_string()))
        });
        let secs = t.elapsed().as_secs_f64();
        match out {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {why}", i + 1);
            }
        }
    }
    println!("{} of 12 passed in {:.0} s", 12 - failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
