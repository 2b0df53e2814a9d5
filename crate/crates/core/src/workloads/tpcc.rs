//! TPC-C subset: NewOrder and Payment as writes, OrderStatus as a read, all
//! registered as stored procedures and sent as `CALL` statements.
//!
//! ```text
//! CALL NewOrder(w_id, d_id, c_id, ol_cnt, i_id_1, supply_w_id_1, quantity_1, ...)
//! CALL Payment(w_id, d_id, c_w_id, c_d_id, c_id, h_amount)
//! CALL OrderStatus(w_id, d_id, c_id)
//! ```
//!
//! Parameters are uniform within the standard bounds. Customers are always
//! selected by id, and NewOrder has no deliberate-rollback variant.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::relational::{
    arg_cents, arg_int, Arity, Engine, ExecError, ProcContext, ProcRegistry, Procedure, ResultSet, Row, Schema,
    Value,
};
use crate::rng::{mix, SplitMix64};
use crate::types::{ClientId, WlStatement};

pub const SCHEMA: &str = include_str!("../../schemas/tpcc.schema");

pub const POPULATION_SALT: u64 = 0x79CC_0000_0000_0001;

pub const TABLES: [&str; 9] = [
    "warehouse",
    "district",
    "customer",
    "history",
    "new_order",
    "orders",
    "order_line",
    "item",
    "stock",
];

const WAREHOUSE: usize = 0;
const DISTRICT: usize = 1;
const CUSTOMER: usize = 2;
const HISTORY: usize = 3;
const NEW_ORDER: usize = 4;
const ORDERS: usize = 5;
const ORDER_LINE: usize = 6;
const ITEM: usize = 7;
const STOCK: usize = 8;

// column positions, checked against the schema file in the tests
const W_NAME: usize = 1;
const W_TAX: usize = 5;
const W_YTD: usize = 6;
const D_NAME: usize = 2;
const D_TAX: usize = 6;
const D_YTD: usize = 7;
const D_NEXT_O_ID: usize = 8;
const C_FIRST: usize = 3;
const C_LAST: usize = 4;
const C_CREDIT: usize = 7;
const C_DISCOUNT: usize = 9;
const C_BALANCE: usize = 10;
const C_YTD_PAYMENT: usize = 11;
const C_PAYMENT_CNT: usize = 12;
const C_DATA: usize = 14;
const O_C_ID: usize = 3;
const O_ENTRY_D: usize = 4;
const O_CARRIER_ID: usize = 5;
const I_PRICE: usize = 3;
const S_QUANTITY: usize = 2;
const S_DIST_INFO: usize = 3;
const S_YTD: usize = 4;
const S_ORDER_CNT: usize = 5;
const S_REMOTE_CNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TpccMix {
    /// NewOrder and Payment with equal probability.
    Writes,
    NewOrder,
    Payment,
    OrderStatus,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TpccConfig {
    pub n_warehouses: u64,
    pub districts_per_warehouse: u64,
    pub customers_per_district: u64,
    pub items: u64,
    /// Initial orders per district; the last 30% are undelivered.
    pub orders_per_district: u64,
    pub seed: u64,
    pub mix: TpccMix,
}

impl Default for TpccConfig {
    fn default() -> Self {
        Self {
            n_warehouses: 10,
            districts_per_warehouse: 10,
            customers_per_district: 3000,
            items: 100_000,
            orders_per_district: 3000,
            seed: 0,
            mix: TpccMix::Writes,
        }
    }
}

impl TpccConfig {
    /// Scaled-down population for tests and quick runs.
    pub fn small(n_warehouses: u64, seed: u64) -> Self {
        Self {
            n_warehouses,
            customers_per_district: 30,
            items: 1000,
            orders_per_district: 30,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_warehouses == 0 || self.districts_per_warehouse == 0 || self.customers_per_district == 0 {
            return Err("warehouses, districts and customers must be positive".to_string());
        }
        if self.items < 15 {
            return Err("at least 15 items are required".to_string());
        }
        if self.orders_per_district > self.customers_per_district {
            return Err("initial orders cannot exceed customers per district".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderLine {
    pub i_id: u64,
    pub supply_w_id: u64,
    pub quantity: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TpccOp {
    NewOrder {
        w_id: u64,
        d_id: u64,
        c_id: u64,
        lines: Vec<OrderLine>,
    },
    Payment {
        w_id: u64,
        d_id: u64,
        c_w_id: u64,
        c_d_id: u64,
        c_id: u64,
        amount_cents: i64,
    },
    OrderStatus {
        w_id: u64,
        d_id: u64,
        c_id: u64,
    },
}

impl TpccOp {
    pub fn name(&self) -> &'static str {
        match self {
            TpccOp::NewOrder { .. } => "NewOrder",
            TpccOp::Payment { .. } => "Payment",
            TpccOp::OrderStatus { .. } => "OrderStatus",
        }
    }

    pub fn to_sql(&self) -> String {
        match self {
            TpccOp::NewOrder { w_id, d_id, c_id, lines } => {
                let mut s = format!("CALL NewOrder({w_id}, {d_id}, {c_id}, {}", lines.len());
                for l in lines {
                    s.push_str(&format!(", {}, {}, {}", l.i_id, l.supply_w_id, l.quantity));
                }
                s.push(')');
                s
            }
            TpccOp::Payment {
                w_id,
                d_id,
                c_w_id,
                c_d_id,
                c_id,
                amount_cents,
            } => format!(
                "CALL Payment({w_id}, {d_id}, {c_w_id}, {c_d_id}, {c_id}, {})",
                Value::Dec(*amount_cents)
            ),
            TpccOp::OrderStatus { w_id, d_id, c_id } => format!("CALL OrderStatus({w_id}, {d_id}, {c_id})"),
        }
    }
}

/// Uniform in `[1, n]` excluding `not`; `n >= 2`.
fn other(rng: &mut SplitMix64, n: u64, not: u64) -> u64 {
    let v = rng.range(1, n - 1);
    if v >= not {
        v + 1
    } else {
        v
    }
}

pub fn generate(cfg: &TpccConfig, i: u64) -> TpccOp {
    let mut rng = SplitMix64::for_index(cfg.seed, i);
    let write_new_order = match cfg.mix {
        TpccMix::Writes => Some(rng.range(0, 1) == 0),
        TpccMix::NewOrder => Some(true),
        TpccMix::Payment => Some(false),
        TpccMix::OrderStatus => None,
    };
    let w_id = rng.range(1, cfg.n_warehouses);
    let d_id = rng.range(1, cfg.districts_per_warehouse);
    let c_id = rng.range(1, cfg.customers_per_district);
    match write_new_order {
        None => TpccOp::OrderStatus { w_id, d_id, c_id },
        Some(true) => {
            let ol_cnt = rng.range(5, 15);
            let lines = (0..ol_cnt)
                .map(|_| {
                    let i_id = rng.range(1, cfg.items);
                    let supply_w_id = if cfg.n_warehouses > 1 && rng.chance(1, 100) {
                        other(&mut rng, cfg.n_warehouses, w_id)
                    } else {
                        w_id
                    };
                    OrderLine {
                        i_id,
                        supply_w_id,
                        quantity: rng.range(1, 10),
                    }
                })
                .collect();
            TpccOp::NewOrder { w_id, d_id, c_id, lines }
        }
        Some(false) => {
            let (c_w_id, c_d_id) = if cfg.n_warehouses > 1 && rng.chance(15, 100) {
                (
                    other(&mut rng, cfg.n_warehouses, w_id),
                    rng.range(1, cfg.districts_per_warehouse),
                )
            } else {
                (w_id, d_id)
            };
            TpccOp::Payment {
                w_id,
                d_id,
                c_w_id,
                c_d_id,
                c_id,
                amount_cents: rng.range(100, 500_000) as i64,
            }
        }
    }
}

pub fn next(cfg: &TpccConfig, i: u64) -> WlStatement {
    WlStatement::new(generate(cfg, i).to_sql(), ClientId(0), i).expect("non-empty statement")
}

pub fn statements(cfg: &TpccConfig, count: u64) -> Vec<WlStatement> {
    (0..count).map(|i| next(cfg, i)).collect()
}

pub fn schema() -> Schema {
    Schema::parse(SCHEMA).expect("bundled tpcc schema")
}

const SYLLABLES: [&str; 10] = [
    "BAR", "OUGHT", "ABLE", "PRI", "PRES", "ESE", "ANTI", "CALLY", "ATION", "EING",
];

/// Customer last name for a number in `0..1000`.
pub fn last_name(n: u64) -> String {
    let mut s = String::new();
    for d in [n / 100, (n / 10) % 10, n % 10] {
        s.push_str(SYLLABLES[d as usize]);
    }
    s
}

struct Pop(SplitMix64);

impl Pop {
    fn int(&mut self, lo: u64, hi: u64) -> i64 {
        self.0.range(lo, hi) as i64
    }

    fn alnum(&mut self, lo: u64, hi: u64) -> String {
        const CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
        let len = self.0.range(lo, hi);
        (0..len)
            .map(|_| CHARS[self.0.range(0, CHARS.len() as u64 - 1) as usize] as char)
            .collect()
    }

    fn digits(&mut self, len: u64) -> String {
        (0..len).map(|_| (b'0' + self.0.range(0, 9) as u8) as char).collect()
    }

    fn zip(&mut self) -> String {
        let mut z = self.digits(4);
        z.push_str("11111");
        z
    }

    /// 10% of rows carry "ORIGINAL" somewhere in their data.
    fn data(&mut self, lo: u64, hi: u64) -> String {
        let mut s = self.alnum(lo, hi);
        if self.0.chance(1, 10) {
            let at = self.0.range(0, (s.len() - 8) as u64) as usize;
            s.replace_range(at..at + 8, "ORIGINAL");
        }
        s
    }
}

fn int(v: u64) -> Value {
    Value::Int(v as i64)
}

/// Initial rows for every table, keyed by table name.
pub fn initial_rows(cfg: &TpccConfig) -> Vec<(String, Vec<Row>)> {
    let mut p = Pop(SplitMix64::new(mix(cfg.seed ^ POPULATION_SALT)));
    let mut t: Vec<Vec<Row>> = vec![Vec::new(); TABLES.len()];

    for i in 1..=cfg.items {
        t[ITEM].push(vec![
            int(i),
            Value::Int(p.int(1, 10_000)),
            Value::Str(p.alnum(14, 24)),
            Value::Dec(p.int(100, 10_000)),
            Value::Str(p.data(26, 50)),
        ]);
    }
    let undelivered_from = cfg.orders_per_district - cfg.orders_per_district * 3 / 10 + 1;
    for w in 1..=cfg.n_warehouses {
        t[WAREHOUSE].push(vec![
            int(w),
            Value::Str(p.alnum(6, 10)),
            Value::Str(p.alnum(10, 20)),
            Value::Str(p.alnum(10, 20)),
            Value::Str(p.zip()),
            Value::Int(p.int(0, 2000)),
            Value::Dec(30_000_000),
        ]);
        for i in 1..=cfg.items {
            t[STOCK].push(vec![
                int(w),
                int(i),
                Value::Int(p.int(10, 100)),
                Value::Str(p.alnum(24, 24)),
                Value::Int(0),
                Value::Int(0),
                Value::Int(0),
                Value::Str(p.data(26, 50)),
            ]);
        }
        for d in 1..=cfg.districts_per_warehouse {
            t[DISTRICT].push(vec![
                int(w),
                int(d),
                Value::Str(p.alnum(6, 10)),
                Value::Str(p.alnum(10, 20)),
                Value::Str(p.alnum(10, 20)),
                Value::Str(p.zip()),
                Value::Int(p.int(0, 2000)),
                Value::Dec(3_000_000),
                int(cfg.orders_per_district + 1),
            ]);
            for c in 1..=cfg.customers_per_district {
                let last = if c <= 1000 { c - 1 } else { p.0.range(0, 999) };
                let credit = if p.0.chance(1, 10) { "BC" } else { "GC" };
                t[CUSTOMER].push(vec![
                    int(w),
                    int(d),
                    int(c),
                    Value::Str(p.alnum(8, 16)),
                    Value::Str(last_name(last)),
                    Value::Str(p.digits(16)),
                    Value::Int(0),
                    Value::Str(credit.to_string()),
                    Value::Dec(5_000_000),
                    Value::Int(p.int(0, 5000)),
                    Value::Dec(-1000),
                    Value::Dec(1000),
                    Value::Int(1),
                    Value::Int(0),
                    Value::Str(p.alnum(300, 500)),
                ]);
                t[HISTORY].push(vec![
                    int(w),
                    int(d),
                    int(c),
                    Value::Int(1),
                    int(w),
                    int(d),
                    Value::Int(0),
                    Value::Dec(1000),
                    Value::Str(p.alnum(12, 24)),
                ]);
            }
            // customer ids of the initial orders are a random permutation
            let mut owners: Vec<u64> = (1..=cfg.customers_per_district).collect();
            for k in (1..owners.len()).rev() {
                let j = p.0.range(0, k as u64) as usize;
                owners.swap(k, j);
            }
            for o in 1..=cfg.orders_per_district {
                let delivered = o < undelivered_from;
                let ol_cnt = p.0.range(5, 15);
                t[ORDERS].push(vec![
                    int(w),
                    int(d),
                    int(o),
                    int(owners[(o - 1) as usize]),
                    Value::Int(0),
                    Value::Int(if delivered { p.int(1, 10) } else { 0 }),
                    int(ol_cnt),
                    Value::Int(1),
                ]);
                if !delivered {
                    t[NEW_ORDER].push(vec![int(w), int(d), int(o)]);
                }
                for n in 1..=ol_cnt {
                    t[ORDER_LINE].push(vec![
                        int(w),
                        int(d),
                        int(o),
                        int(n),
                        Value::Int(p.int(1, cfg.items)),
                        int(w),
                        Value::Int(0),
                        Value::Int(5),
                        Value::Dec(if delivered { 0 } else { p.int(1, 999_999) }),
                        Value::Str(p.alnum(24, 24)),
                    ]);
                }
            }
        }
    }
    TABLES.iter().map(|s| s.to_string()).zip(t).collect()
}

/// The three stored procedures.
pub fn procedures() -> ProcRegistry {
    let mut r = ProcRegistry::default();
    for p in [
        Procedure {
            name: "NewOrder".into(),
            arity: Arity::AtLeast(4),
            read_only: false,
            func: new_order,
        },
        Procedure {
            name: "Payment".into(),
            arity: Arity::Exact(6),
            read_only: false,
            func: payment,
        },
        Procedure {
            name: "OrderStatus".into(),
            arity: Arity::Exact(3),
            read_only: true,
            func: order_status,
        },
    ] {
        r.register(p).expect("distinct procedure names");
    }
    r
}

pub fn init(cfg: &TpccConfig) -> Engine {
    let mut e = Engine::new(schema(), procedures());
    e.load(initial_rows(cfg)).expect("generated rows match the schema");
    e
}

fn fail(msg: &str) -> ExecError {
    ExecError::Procedure(msg.to_string())
}

fn fetch(ctx: &dyn ProcContext, table: usize, key: &[Value], what: &str) -> Result<Row, ExecError> {
    ctx.get(table, key).ok_or_else(|| fail(&format!("{what} not found")))
}

fn num(row: &Row, col: usize) -> i64 {
    match row[col] {
        Value::Int(v) | Value::Dec(v) => v,
        Value::Str(_) => 0,
    }
}

fn add(row: &mut Row, col: usize, delta: i64) -> Result<(), ExecError> {
    let v = num(row, col).checked_add(delta).ok_or_else(|| fail("arithmetic overflow"))?;
    row[col] = match row[col] {
        Value::Dec(_) => Value::Dec(v),
        _ => Value::Int(v),
    };
    Ok(())
}

fn new_order(ctx: &mut dyn ProcContext, args: &[Value]) -> Result<ResultSet, ExecError> {
    let w = arg_int(args, 0)?;
    let d = arg_int(args, 1)?;
    let c = arg_int(args, 2)?;
    let ol_cnt = arg_int(args, 3)?;
    if !(1..=15).contains(&ol_cnt) || args.len() != 4 + 3 * ol_cnt as usize {
        return Err(fail("order line count does not match arguments"));
    }
    let mut lines = Vec::with_capacity(ol_cnt as usize);
    for n in 0..ol_cnt as usize {
        let base = 4 + 3 * n;
        let qty = arg_int(args, base + 2)?;
        if !(1..=10).contains(&qty) {
            return Err(fail("quantity out of range"));
        }
        lines.push((arg_int(args, base)?, arg_int(args, base + 1)?, qty));
    }

    let warehouse = fetch(ctx, WAREHOUSE, &[Value::Int(w)], "warehouse")?;
    let mut district = fetch(ctx, DISTRICT, &[Value::Int(w), Value::Int(d)], "district")?;
    let customer = fetch(ctx, CUSTOMER, &[Value::Int(w), Value::Int(d), Value::Int(c)], "customer")?;
    let o_id = num(&district, D_NEXT_O_ID);
    add(&mut district, D_NEXT_O_ID, 1)?;
    ctx.update(DISTRICT, district.clone())?;

    let all_local = lines.iter().all(|&(_, s, _)| s == w);
    let now = ctx.block_time() as i64;
    ctx.insert(
        ORDERS,
        vec![
            Value::Int(w),
            Value::Int(d),
            Value::Int(o_id),
            Value::Int(c),
            Value::Int(now),
            Value::Int(0),
            Value::Int(ol_cnt),
            Value::Int(all_local as i64),
        ],
    )?;
    ctx.insert(NEW_ORDER, vec![Value::Int(w), Value::Int(d), Value::Int(o_id)])?;

    let mut total: i64 = 0;
    for (n, &(i_id, supply_w, qty)) in lines.iter().enumerate() {
        let item = fetch(ctx, ITEM, &[Value::Int(i_id)], "item")?;
        let mut stock = fetch(ctx, STOCK, &[Value::Int(supply_w), Value::Int(i_id)], "stock")?;
        let s_qty = num(&stock, S_QUANTITY);
        let new_qty = if s_qty >= qty + 10 { s_qty - qty } else { s_qty - qty + 91 };
        stock[S_QUANTITY] = Value::Int(new_qty);
        add(&mut stock, S_YTD, qty)?;
        add(&mut stock, S_ORDER_CNT, 1)?;
        if supply_w != w {
            add(&mut stock, S_REMOTE_CNT, 1)?;
        }
        let dist_info = stock[S_DIST_INFO].clone();
        ctx.update(STOCK, stock)?;
        let amount = num(&item, I_PRICE) * qty;
        total += amount;
        ctx.insert(
            ORDER_LINE,
            vec![
                Value::Int(w),
                Value::Int(d),
                Value::Int(o_id),
                Value::Int(n as i64 + 1),
                Value::Int(i_id),
                Value::Int(supply_w),
                Value::Int(0),
                Value::Int(qty),
                Value::Dec(amount),
                dist_info,
            ],
        )?;
    }
    let discount = num(&customer, C_DISCOUNT);
    let tax = num(&warehouse, W_TAX) + num(&district, D_TAX);
    let total = (total as i128 * (10_000 - discount) as i128 * (10_000 + tax) as i128 / 100_000_000) as i64;
    Ok(ResultSet {
        columns: vec!["o_id".into(), "c_last".into(), "c_credit".into(), "total".into()],
        rows: vec![vec![
            Value::Int(o_id),
            customer[C_LAST].clone(),
            customer[C_CREDIT].clone(),
            Value::Dec(total),
        ]],
    })
}

fn payment(ctx: &mut dyn ProcContext, args: &[Value]) -> Result<ResultSet, ExecError> {
    let w = arg_int(args, 0)?;
    let d = arg_int(args, 1)?;
    let c_w = arg_int(args, 2)?;
    let c_d = arg_int(args, 3)?;
    let c = arg_int(args, 4)?;
    let amount = arg_cents(args, 5)?;
    if amount <= 0 {
        return Err(fail("payment amount must be positive"));
    }

    let mut warehouse = fetch(ctx, WAREHOUSE, &[Value::Int(w)], "warehouse")?;
    add(&mut warehouse, W_YTD, amount)?;
    let w_name = warehouse[W_NAME].clone();
    ctx.update(WAREHOUSE, warehouse)?;

    let mut district = fetch(ctx, DISTRICT, &[Value::Int(w), Value::Int(d)], "district")?;
    add(&mut district, D_YTD, amount)?;
    let d_name = district[D_NAME].clone();
    ctx.update(DISTRICT, district)?;

    let mut customer = fetch(ctx, CUSTOMER, &[Value::Int(c_w), Value::Int(c_d), Value::Int(c)], "customer")?;
    add(&mut customer, C_BALANCE, -amount)?;
    add(&mut customer, C_YTD_PAYMENT, amount)?;
    add(&mut customer, C_PAYMENT_CNT, 1)?;
    let seq = num(&customer, C_PAYMENT_CNT);
    if customer[C_CREDIT].as_str() == Some("BC") {
        let old = customer[C_DATA].as_str().unwrap_or("");
        let mut data = format!("{c} {c_d} {c_w} {d} {w} {} | {old}", Value::Dec(amount));
        data.truncate(500);
        customer[C_DATA] = Value::Str(data);
    }
    let balance = customer[C_BALANCE].clone();
    ctx.update(CUSTOMER, customer)?;

    let now = ctx.block_time() as i64;
    ctx.insert(
        HISTORY,
        vec![
            Value::Int(c_w),
            Value::Int(c_d),
            Value::Int(c),
            Value::Int(seq),
            Value::Int(w),
            Value::Int(d),
            Value::Int(now),
            Value::Dec(amount),
            Value::Str(format!("{}    {}", w_name, d_name)),
        ],
    )?;
    Ok(ResultSet {
        columns: vec!["c_balance".into()],
        rows: vec![vec![balance]],
    })
}

/// One row per line of the customer's most recent order, or a single row
/// with `o_id = 0` when the customer has no orders.
fn order_status(ctx: &mut dyn ProcContext, args: &[Value]) -> Result<ResultSet, ExecError> {
    let w = arg_int(args, 0)?;
    let d = arg_int(args, 1)?;
    let c = arg_int(args, 2)?;
    let customer = fetch(ctx, CUSTOMER, &[Value::Int(w), Value::Int(d), Value::Int(c)], "customer")?;
    let head = [
        Value::Int(c),
        customer[C_FIRST].clone(),
        customer[C_LAST].clone(),
        customer[C_BALANCE].clone(),
    ];
    let columns = [
        "c_id",
        "c_first",
        "c_last",
        "c_balance",
        "o_id",
        "o_entry_d",
        "o_carrier_id",
        "ol_i_id",
        "ol_supply_w_id",
        "ol_quantity",
        "ol_amount",
        "ol_delivery_d",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let order = ctx.find_last(ORDERS, &[Value::Int(w), Value::Int(d)], &mut |r| {
        r[O_C_ID] == Value::Int(c)
    });
    let Some(order) = order else {
        let mut row = head.to_vec();
        row.extend([Value::Int(0), Value::Int(0), Value::Int(0)]);
        row.extend([Value::Int(0), Value::Int(0), Value::Int(0), Value::Dec(0), Value::Int(0)]);
        return Ok(ResultSet {
            columns,
            rows: vec![row],
        });
    };
    let o_id = order[2].clone();
    let rows = ctx
        .scan_prefix(ORDER_LINE, &[Value::Int(w), Value::Int(d), o_id.clone()])
        .into_iter()
        .map(|ol| {
            let mut row = head.to_vec();
            row.extend([o_id.clone(), order[O_ENTRY_D].clone(), order[O_CARRIER_ID].clone()]);
            row.extend([ol[4].clone(), ol[5].clone(), ol[7].clone(), ol[8].clone(), ol[6].clone()]);
            row
        })
        .collect();
    Ok(ResultSet { columns, rows })
}
