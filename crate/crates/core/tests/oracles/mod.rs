//! Property checkers shared by the core property tests and the acceptance
//! run. Each `check_*` returns `Err` with a description on violation.

#![allow(dead_code)]

use std::collections::BTreeMap;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use relchain_core::relational::{Engine, ProcRegistry, Row, Schema, Value};
use relchain_core::sql::{
    is_keyword, parse_sql, print_script, AddOp, Assignment, Condition, Expr, Literal, Operand, Projection,
    Statement,
};
use relchain_core::workloads::smallbank::{self, SmallbankOp};
use relchain_core::workloads::tpcc::{self, TpccOp};
use relchain_core::workloads::{SmallbankConfig, TpccConfig, TpccMix};

// ---- SQL scripts ----------------------------------------------------------

pub fn ident() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9_]{0,10}".prop_filter("keywords are reserved", |s| !is_keyword(s))
}

pub fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        any::<i64>().prop_map(Literal::Int),
        any::<i64>().prop_map(Literal::Dec),
        "[ -~]{0,12}".prop_map(Literal::Str),
        "\\PC{0,6}".prop_map(Literal::Str),
    ]
}

fn operand() -> impl Strategy<Value = Operand> {
    prop_oneof![ident().prop_map(Operand::Column), literal().prop_map(Operand::Lit)]
}

fn expr() -> impl Strategy<Value = Expr> {
    (
        operand(),
        prop::collection::vec((prop_oneof![Just(AddOp::Add), Just(AddOp::Sub)], operand()), 0..4),
    )
        .prop_map(|(first, rest)| Expr { first, rest })
}

fn filter() -> impl Strategy<Value = Vec<Condition>> {
    prop::collection::vec((ident(), literal()).prop_map(|(column, value)| Condition { column, value }), 0..4)
}

pub fn statement() -> impl Strategy<Value = Statement> {
    prop_oneof![
        (
            ident(),
            prop::collection::vec((ident(), expr()).prop_map(|(column, expr)| Assignment { column, expr }), 1..4),
            filter()
        )
            .prop_map(|(table, set, filter)| Statement::Update { table, set, filter }),
        (
            prop_oneof![
                Just(Projection::All),
                prop::collection::vec(ident(), 1..4).prop_map(Projection::Columns)
            ],
            ident(),
            filter()
        )
            .prop_map(|(projection, table, filter)| Statement::Select {
                projection,
                table,
                filter
            }),
        (
            ident(),
            prop::option::of(prop::collection::vec(ident(), 1..4)),
            prop::collection::vec(literal(), 1..5)
        )
            .prop_map(|(table, columns, values)| Statement::Insert { table, columns, values }),
        (ident(), prop::collection::vec(literal(), 0..6)).prop_map(|(name, args)| Statement::Call { name, args }),
    ]
}

pub fn script() -> impl Strategy<Value = Vec<Statement>> {
    prop::collection::vec(statement(), 1..5)
}

/// Printing then parsing gives back the same statements.
pub fn check_round_trip(stmts: &[Statement]) -> Result<(), TestCaseError> {
    let text = print_script(stmts);
    let parsed = parse_sql(&text).map_err(|e| TestCaseError::fail(format!("{e} in {text:?}")))?;
    prop_assert_eq!(&parsed[..], stmts, "text: {}", text);
    Ok(())
}

// ---- undo log --------------------------------------------------------------

pub const UNDO_SCHEMA: &str = "\
table kv
  k    int
  tag  string
  amt  decimal
  n    int
  primary key (k)

table pair
  a    int
  b    int
  v    int
  primary key (a, b)
";

pub fn undo_engine(initial: &[(i64, i64)]) -> Engine {
    let mut e = Engine::new(Schema::parse(UNDO_SCHEMA).unwrap(), ProcRegistry::default());
    let kv: Vec<Row> = initial
        .iter()
        .map(|&(k, amt)| vec![Value::Int(k), Value::Str(format!("t{k}")), Value::Dec(amt), Value::Int(0)])
        .collect();
    e.load([("kv".to_string(), kv)]).unwrap();
    e
}

/// Statements over [`UNDO_SCHEMA`]; some of them fail on purpose
/// (duplicate keys, overflow, unknown columns).
pub fn undo_statement() -> impl Strategy<Value = String> {
    prop_oneof![
        4 => (0i64..20, -5000i64..5000).prop_map(|(k, d)| format!("UPDATE kv SET amt = amt + {d}.25, n = n + 1 WHERE k = {k}")),
        3 => (0i64..30, -999i64..999).prop_map(|(k, a)| format!("INSERT INTO kv VALUES ({k}, 'new', {a}.50, 7)")),
        2 => (0i64..5, 0i64..5, any::<i32>()).prop_map(|(a, b, v)| format!("INSERT INTO pair VALUES ({a}, {b}, {v})")),
        2 => (0i64..5, 0i64..5).prop_map(|(a, b)| format!("UPDATE pair SET v = v + 1 WHERE a = {a} AND b = {b}")),
        1 => (0i64..5).prop_map(|a| format!("UPDATE pair SET v = v - 3 WHERE a = {a}")),
        1 => (0i64..20).prop_map(|k| format!("UPDATE kv SET n = n + 9223372036854775807, tag = 'x' WHERE k = {k}")),
        1 => Just("UPDATE kv SET nope = 1".to_string()),
        1 => (0i64..20).prop_map(|k| format!("UPDATE kv SET tag = 'r''{k}' WHERE k = {k}")),
    ]
}

/// Executes the first `prefix` statements inside a db-transaction, rolls
/// back, and demands the committed state back bit for bit. Then commits the
/// same prefix on a copy and checks the incrementally maintained hash
/// against a from-scratch load of the resulting rows.
pub fn check_undo(initial: &[(i64, i64)], stmts: &[String], prefix: usize) -> Result<(), TestCaseError> {
    let mut e = undo_engine(initial);
    let h0 = e.committed_hash();
    let s0 = e.database().serialized_digest();
    let mut committed = e.clone();

    e.begin(1).unwrap();
    for s in &stmts[..prefix] {
        let _ = e.execute_status(s);
    }
    prop_assert_eq!(e.rollback(), h0);
    prop_assert_eq!(e.working_hash(), h0);
    prop_assert_eq!(e.database().serialized_digest(), s0);
    prop_assert_eq!(e.undo_len(), 0);

    committed.begin(1).unwrap();
    for s in &stmts[..prefix] {
        let _ = committed.execute_status(s);
    }
    let h1 = committed.commit();
    let db = committed.database();
    let mut fresh = Engine::new(Schema::parse(UNDO_SCHEMA).unwrap(), ProcRegistry::default());
    fresh
        .load((0..db.schema().tables.len()).map(|t| {
            (
                db.schema().tables[t].name.clone(),
                db.table(t).values().cloned().collect::<Vec<_>>(),
            )
        }))
        .unwrap();
    prop_assert_eq!(fresh.committed_hash(), h1);
    prop_assert_eq!(fresh.database().serialized_digest(), db.serialized_digest());
    Ok(())
}

pub fn undo_case() -> impl Strategy<Value = (Vec<(i64, i64)>, Vec<String>, usize)> {
    (
        prop::collection::btree_map(0i64..20, -100_000i64..100_000, 0..12),
        prop::collection::vec(undo_statement(), 0..40),
    )
        .prop_flat_map(|(init, stmts)| {
            let n = stmts.len();
            (Just(init.into_iter().collect::<Vec<_>>()), Just(stmts), 0..=n)
        })
}

// ---- Smallbank conservation --------------------------------------------------

/// Balances in cents, keyed by custid, evaluated directly from the
/// structured operations rather than through SQL.
pub fn smallbank_interpret(cfg: &SmallbankConfig, count: u64) -> (BTreeMap<u64, (i64, i64)>, i64) {
    let mut bal: BTreeMap<u64, (i64, i64)> = smallbank::initial_balances(cfg)
        .into_iter()
        .map(|(id, c, s)| (id, (c, s)))
        .collect();
    let mut external = 0i64;
    for i in 0..count {
        match smallbank::generate(cfg, i) {
            SmallbankOp::TransactSavings { custid, amount } => {
                bal.get_mut(&custid).unwrap().1 += amount as i64 * 100;
                external += amount as i64 * 100;
            }
            SmallbankOp::DepositChecking { custid, amount } => {
                bal.get_mut(&custid).unwrap().0 += amount as i64 * 100;
                external += amount as i64 * 100;
            }
            SmallbankOp::WriteCheck { custid, amount } => {
                bal.get_mut(&custid).unwrap().0 -= amount as i64 * 100;
                external -= amount as i64 * 100;
            }
            SmallbankOp::SendPayment { from, to, amount } => {
                bal.get_mut(&from).unwrap().0 -= amount as i64 * 100;
                bal.get_mut(&to).unwrap().0 += amount as i64 * 100;
            }
            SmallbankOp::Amalgamate { custid } => {
                let b = bal.get_mut(&custid).unwrap();
                b.0 += b.1;
                b.1 = 0;
            }
        }
    }
    (bal, external)
}

fn total(bal: &BTreeMap<u64, (i64, i64)>) -> i64 {
    bal.values().map(|(c, s)| c + s).sum()
}

/// Runs `count` generated statements through the SQL engine, `per_block`
/// statements per db-transaction, and compares against the interpreter:
/// global total equals initial total plus the signed external amounts, and
/// every account matches exactly.
pub fn check_smallbank_conservation(cfg: &SmallbankConfig, count: u64, per_block: usize) -> Result<(), TestCaseError> {
    let initial: BTreeMap<u64, (i64, i64)> = smallbank::initial_balances(cfg)
        .into_iter()
        .map(|(id, c, s)| (id, (c, s)))
        .collect();
    let (expected, external) = smallbank_interpret(cfg, count);
    prop_assert_eq!(total(&expected), total(&initial) + external);

    let mut e = smallbank::init(cfg);
    let stmts = smallbank::statements(cfg, count);
    for (b, chunk) in stmts.chunks(per_block.max(1)).enumerate() {
        e.begin(b as u64).unwrap();
        for s in chunk {
            let st = e.execute_status(&s.text);
            prop_assert!(st.is_ok(), "{} failed: {:?}", s.text, st.failure_reason());
        }
        e.commit();
    }
    let t = e.database().schema().table_index("accounts").unwrap();
    let mut got = BTreeMap::new();
    for row in e.database().table(t).values() {
        let id = row[0].as_int().unwrap() as u64;
        got.insert(id, (row[2].as_cents().unwrap(), row[3].as_cents().unwrap()));
    }
    prop_assert_eq!(total(&got), total(&initial) + external);
    prop_assert_eq!(got, expected);
    Ok(())
}

pub fn smallbank_case() -> impl Strategy<Value = (SmallbankConfig, u64, usize)> {
    (1u64..60, any::<u64>(), 0u64..400, 1usize..64)
        .prop_map(|(n, seed, count, per_block)| (SmallbankConfig::with_accounts(n, seed), count, per_block))
}

// ---- TPC-C next order id ---------------------------------------------------

fn next_o_id(e: &Engine, w: u64, d: u64) -> i64 {
    let db = e.database();
    let t = db.schema().table_index("district").unwrap();
    let col = db.schema().tables[t].column_index("d_next_o_id").unwrap();
    db.get(t, &[Value::Int(w as i64), Value::Int(d as i64)]).unwrap()[col]
        .as_int()
        .unwrap()
}

/// Every successful NewOrder raises its district's next order id by exactly
/// one; failed calls and other districts are untouched. `bad_item` makes
/// every `bad_item`-th call reference a nonexistent item so failures occur.
pub fn check_next_o_id(cfg: &TpccConfig, count: u64, bad_item: u64) -> Result<(), TestCaseError> {
    let mut e = tpcc::init(cfg);
    let districts: Vec<(u64, u64)> = (1..=cfg.n_warehouses)
        .flat_map(|w| (1..=cfg.districts_per_warehouse).map(move |d| (w, d)))
        .collect();
    let mut expected: BTreeMap<(u64, u64), i64> = districts.iter().map(|&(w, d)| ((w, d), next_o_id(&e, w, d))).collect();
    let mut successes = 0;
    let mut forced = 0;
    for i in 0..count {
        let mut op = tpcc::generate(cfg, i);
        let TpccOp::NewOrder { w_id, d_id, lines, .. } = &mut op else {
            return Err(TestCaseError::fail("mix must be NewOrder"));
        };
        let key = (*w_id, *d_id);
        if bad_item > 0 && i % bad_item == 0 {
            lines.last_mut().unwrap().i_id = cfg.items + 1;
            forced += 1;
        }
        e.begin(i).unwrap();
        let ok = e.execute_status(&op.to_sql()).is_ok();
        if ok {
            e.commit();
            *expected.get_mut(&key).unwrap() += 1;
            successes += 1;
        } else {
            e.rollback();
        }
        for &(w, d) in &districts {
            prop_assert_eq!(next_o_id(&e, w, d), expected[&(w, d)], "after call {} ({})", i, ok);
        }
    }
    prop_assert_eq!(successes, count - forced);
    Ok(())
}

pub fn tpcc_case() -> impl Strategy<Value = (TpccConfig, u64, u64)> {
    (1u64..3, any::<u64>(), 1u64..25, 0u64..6).prop_map(|(w, seed, count, bad)| {
        let cfg = TpccConfig {
            districts_per_warehouse: 3,
            customers_per_district: 10,
            items: 50,
            orders_per_district: 10,
            mix: TpccMix::NewOrder,
            ..TpccConfig::small(w, seed)
        };
        (cfg, count, bad)
    })
}

// ---- runner for callers outside proptest! ------------------------------------

/// Runs `check` on `cases` generated inputs with a fixed seed.
pub fn run<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<(), String>
where
    S::Value: std::fmt::Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, proptest::test_runner::TestRng::deterministic_rng(config_algorithm()));
    runner.run(&strategy, check).map_err(|e| e.to_string())
}

fn config_algorithm() -> proptest::test_runner::RngAlgorithm {
    proptest::test_runner::RngAlgorithm::ChaCha
}
