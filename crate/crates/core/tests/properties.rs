mod oracles;

use proptest::prelude::*;
use relchain_core::codec::{Decode, Encode};
use relchain_core::ledger::Ledger;
use relchain_core::relational::{Engine, ProcRegistry, Schema, Value};
use relchain_core::types::{decode_tx, encode_tx};
use relchain_core::workloads::{batch, BatchPlan};
use relchain_core::{BcTransaction, Block, BlockHeader, ClientId, Digest, ExecStatus, ValidatorId, WlStatement};

fn digest() -> impl Strategy<Value = Digest> {
    any::<[u8; 32]>().prop_map(Digest)
}

fn wl() -> impl Strategy<Value = WlStatement> {
    ("\\PC{1,40}", any::<u64>(), any::<u64>()).prop_map(|(t, c, s)| WlStatement::new(t, ClientId(c), s).unwrap())
}

fn bc_tx() -> impl Strategy<Value = BcTransaction> {
    (prop::collection::vec(wl(), 1..5), any::<u64>()).prop_map(|(s, n)| BcTransaction::new(s, n).unwrap())
}

fn block() -> impl Strategy<Value = Block> {
    (
        1u64..u64::MAX,
        digest(),
        digest(),
        any::<u32>(),
        any::<u64>(),
        prop::collection::vec(bc_tx(), 0..4),
    )
        .prop_map(|(height, prev, app, proposer, time, txs)| Block {
            header: BlockHeader {
                height,
                prev_block_hash: prev,
                app_hash: app,
                proposer_id: ValidatorId(proposer),
                block_time: time,
                num_txs: txs.len() as u32,
            },
            txs,
        })
}

fn status() -> impl Strategy<Value = ExecStatus> {
    prop_oneof![
        prop::collection::vec(any::<u8>(), 0..16).prop_map(ExecStatus::ok),
        "\\PC{1,20}".prop_map(ExecStatus::failed),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn tx_codec_round_trip(tx in bc_tx()) {
        let bytes = encode_tx(&tx);
        prop_assert_eq!(decode_tx(&bytes).unwrap(), tx);
    }

    #[test]
    fn block_codec_round_trip(b in block()) {
        let bytes = b.encode();
        let back = Block::decode(&bytes).unwrap();
        prop_assert_eq!(back.hash(), b.hash());
        prop_assert_eq!(back, b);
    }

    #[test]
    fn status_codec_round_trip(s in status()) {
        prop_assert_eq!(ExecStatus::decode(&s.encode()).unwrap(), s);
    }

    #[test]
    fn decoding_is_canonical(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        // anything that decodes re-encodes to the same bytes
        if let Ok(tx) = decode_tx(&bytes) {
            prop_assert_eq!(encode_tx(&tx), bytes.clone());
        }
        if let Ok(b) = Block::decode(&bytes) {
            prop_assert_eq!(b.encode(), bytes);
        }
    }

    #[test]
    fn truncation_is_rejected(tx in bc_tx(), cut in any::<prop::sample::Index>()) {
        let bytes = encode_tx(&tx);
        let n = cut.index(bytes.len());
        prop_assert!(decode_tx(&bytes[..n]).is_err());
    }

    #[test]
    fn sql_round_trip(stmts in oracles::script()) {
        oracles::check_round_trip(&stmts)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1_000))]

    #[test]
    fn rollback_restores_any_prefix((init, stmts, prefix) in oracles::undo_case()) {
        oracles::check_undo(&init, &stmts, prefix)?;
    }

    #[test]
    fn state_hash_ignores_load_order(
        rows in prop::collection::btree_map(0i64..1000, (any::<i64>(), "[a-z]{0,5}"), 0..40)
            .prop_map(|m| m.into_iter().collect::<Vec<_>>())
            .prop_shuffle()
    ) {
        let schema = Schema::parse(oracles::UNDO_SCHEMA).unwrap();
        let make = |rows: &[(i64, (i64, String))]| {
            let mut e = Engine::new(schema.clone(), ProcRegistry::default());
            e.load([(
                "kv".to_string(),
                rows.iter()
                    .map(|(k, (a, t))| vec![Value::Int(*k), Value::Str(t.clone()), Value::Dec(a % 100_000_000_000), Value::Int(0)])
                    .collect(),
            )])
            .unwrap();
            e
        };
        let mut sorted = rows.clone();
        sorted.sort();
        let (a, b) = (make(&rows), make(&sorted));
        prop_assert_eq!(a.committed_hash(), b.committed_hash());
        prop_assert_eq!(a.database().serialized_digest(), b.database().serialized_digest());
    }

    #[test]
    fn batching_preserves_order(n in 0usize..300, b in 1usize..70) {
        let stmts: Vec<WlStatement> = (0..n as u64)
            .map(|i| WlStatement::new(format!("s{i}"), ClientId(0), i).unwrap())
            .collect();
        let txs = batch(stmts.clone(), BatchPlan::new(b).unwrap());
        prop_assert_eq!(txs.len(), n.div_ceil(b));
        prop_assert!(txs.iter().rev().skip(1).all(|t| t.statements().len() == b));
        let flat: Vec<WlStatement> = txs.into_iter().flat_map(BcTransaction::into_statements).collect();
        prop_assert_eq!(flat, stmts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smallbank_conservation((cfg, count, per_block) in oracles::smallbank_case()) {
        oracles::check_smallbank_conservation(&cfg, count, per_block)?;
    }

    #[test]
    fn new_order_increments_next_o_id((cfg, count, bad) in oracles::tpcc_case()) {
        oracles::check_next_o_id(&cfg, count, bad)?;
    }

    #[test]
    fn tampering_is_detected(blocks in prop::collection::vec(prop::collection::vec(bc_tx(), 0..3), 1..6), at in any::<prop::sample::Index>()) {
        let mut ledger = Ledger::new();
        let mut app = Digest::ZERO;
        for (i, txs) in blocks.into_iter().enumerate() {
            let b = Block {
                header: BlockHeader {
                    height: i as u64 + 1,
                    prev_block_hash: ledger.tip_hash(),
                    app_hash: app,
                    proposer_id: ValidatorId(0),
                    block_time: i as u64,
                    num_txs: txs.len() as u32,
                },
                txs,
            };
            let statuses = b.txs.iter().map(|t| vec![ExecStatus::ok(vec![]); t.statements().len()]).collect();
            app = Digest::of(&app.0);
            ledger.append_block(b, statuses, app).unwrap();
        }
        prop_assert!(ledger.verify().is_ok());
        let h = at.index(ledger.height() as usize) as u64 + 1;
        ledger.tamper(h, |b| b.header.block_time ^= 1);
        prop_assert!(ledger.verify().is_err());
        prop_assert!(ledger.invalid_heights().contains(&h));
    }
}
