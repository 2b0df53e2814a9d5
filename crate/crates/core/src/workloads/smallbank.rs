//! Smallbank: five unconditional balance updates sent as raw SQL.
//!
//! Statement `i` draws from `SplitMix64::for_index(seed, i)` in this order:
//! type `range(0, 4)` (`range(0, 3)` over the types other than SendPayment
//! when there is one account), custid `range(1, n)`, for SendPayment a second
//! custid `range(1, n - 1)` bumped by one when `>=` the first, and finally the
//! amount `range(amount_min, amount_max)` except for Amalgamate.
//!
//! Initial balances draw from `SplitMix64::new(mix(seed ^ BALANCE_SALT))`:
//! checking then savings for custid 1, 2, ..., each `range(balance_min,
//! balance_max)` whole units.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::relational::{Engine, ProcRegistry, Row, Schema, Value};
use crate::rng::{mix, SplitMix64};
use crate::types::{ClientId, WlStatement};

pub const SCHEMA: &str = include_str!("../../schemas/smallbank.schema");

pub const BALANCE_SALT: u64 = 0x5A11_BA4C_0000_0001;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmallbankConfig {
    pub n_accounts: u64,
    pub amount_min: u64,
    pub amount_max: u64,
    pub balance_min: u64,
    pub balance_max: u64,
    pub seed: u64,
}

impl Default for SmallbankConfig {
    fn default() -> Self {
        Self {
            n_accounts: 100_000,
            amount_min: 1,
            amount_max: 100,
            balance_min: 10_000,
            balance_max: 50_000,
            seed: 0,
        }
    }
}

impl SmallbankConfig {
    pub fn with_accounts(n_accounts: u64, seed: u64) -> Self {
        Self {
            n_accounts,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_accounts == 0 {
            return Err("at least one account is required".to_string());
        }
        if self.amount_min == 0 || self.amount_min > self.amount_max {
            return Err("amounts must be positive with min <= max".to_string());
        }
        if self.balance_min > self.balance_max {
            return Err("balance range is empty".to_string());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxType {
    TransactSavings,
    DepositChecking,
    SendPayment,
    WriteCheck,
    Amalgamate,
}

impl TxType {
    pub const ALL: [TxType; 5] = [
        TxType::TransactSavings,
        TxType::DepositChecking,
        TxType::SendPayment,
        TxType::WriteCheck,
        TxType::Amalgamate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TxType::TransactSavings => "TransactSavings",
            TxType::DepositChecking => "DepositChecking",
            TxType::SendPayment => "SendPayment",
            TxType::WriteCheck => "WriteCheck",
            TxType::Amalgamate => "Amalgamate",
        }
    }
}

/// One generated wl-transaction in structured form. `amount` is in whole units.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallbankOp {
    TransactSavings { custid: u64, amount: u64 },
    DepositChecking { custid: u64, amount: u64 },
    SendPayment { from: u64, to: u64, amount: u64 },
    WriteCheck { custid: u64, amount: u64 },
    Amalgamate { custid: u64 },
}

impl SmallbankOp {
    pub fn kind(&self) -> TxType {
        match self {
            SmallbankOp::TransactSavings { .. } => TxType::TransactSavings,
            SmallbankOp::DepositChecking { .. } => TxType::DepositChecking,
            SmallbankOp::SendPayment { .. } => TxType::SendPayment,
            SmallbankOp::WriteCheck { .. } => TxType::WriteCheck,
            SmallbankOp::Amalgamate { .. } => TxType::Amalgamate,
        }
    }

    pub fn to_sql(&self) -> String {
        match *self {
            SmallbankOp::TransactSavings { custid, amount } => {
                format!("UPDATE accounts SET savings = savings + {amount} WHERE custid = {custid}")
            }
            SmallbankOp::DepositChecking { custid, amount } => {
                format!("UPDATE accounts SET checking = checking + {amount} WHERE custid = {custid}")
            }
            SmallbankOp::SendPayment { from, to, amount } => format!(
                "UPDATE accounts SET checking = checking - {amount} WHERE custid = {from}; \
                 UPDATE accounts SET checking = checking + {amount} WHERE custid = {to}"
            ),
            SmallbankOp::WriteCheck { custid, amount } => {
                format!("UPDATE accounts SET checking = checking - {amount} WHERE custid = {custid}")
            }
            SmallbankOp::Amalgamate { custid } => format!(
                "UPDATE accounts SET checking = checking + savings, savings = 0 WHERE custid = {custid}"
            ),
        }
    }
}

pub fn generate(cfg: &SmallbankConfig, i: u64) -> SmallbankOp {
    let n = cfg.n_accounts;
    let mut rng = SplitMix64::for_index(cfg.seed, i);
    let kind = if n == 1 {
        [
            TxType::TransactSavings,
            TxType::DepositChecking,
            TxType::WriteCheck,
            TxType::Amalgamate,
        ][rng.range(0, 3) as usize]
    } else {
        TxType::ALL[rng.range(0, 4) as usize]
    };
    let custid = rng.range(1, n);
    let to = if kind == TxType::SendPayment {
        let c = rng.range(1, n - 1);
        if c >= custid {
            c + 1
        } else {
            c
        }
    } else {
        0
    };
    let mut amount = || rng.range(cfg.amount_min, cfg.amount_max);
    match kind {
        TxType::TransactSavings => SmallbankOp::TransactSavings { custid, amount: amount() },
        TxType::DepositChecking => SmallbankOp::DepositChecking { custid, amount: amount() },
        TxType::SendPayment => SmallbankOp::SendPayment {
            from: custid,
            to,
            amount: amount(),
        },
        TxType::WriteCheck => SmallbankOp::WriteCheck { custid, amount: amount() },
        TxType::Amalgamate => SmallbankOp::Amalgamate { custid },
    }
}

/// The `i`-th wl-transaction as SQL text.
pub fn next(cfg: &SmallbankConfig, i: u64) -> WlStatement {
    WlStatement::new(generate(cfg, i).to_sql(), ClientId(0), i).expect("non-empty statement")
}

pub fn statements(cfg: &SmallbankConfig, count: u64) -> Vec<WlStatement> {
    (0..count).map(|i| next(cfg, i)).collect()
}

/// Initial `(custid, checking, savings)` balances in cents.
pub fn initial_balances(cfg: &SmallbankConfig) -> Vec<(u64, i64, i64)> {
    let mut rng = SplitMix64::new(mix(cfg.seed ^ BALANCE_SALT));
    (1..=cfg.n_accounts)
        .map(|id| {
            let checking = rng.range(cfg.balance_min, cfg.balance_max) as i64 * 100;
            let savings = rng.range(cfg.balance_min, cfg.balance_max) as i64 * 100;
            (id, checking, savings)
        })
        .collect()
}

pub fn schema() -> Schema {
    Schema::parse(SCHEMA).expect("bundled smallbank schema")
}

pub fn initial_rows(cfg: &SmallbankConfig) -> Vec<Row> {
    initial_balances(cfg)
        .into_iter()
        .map(|(id, c, s)| {
            vec![
                Value::Int(id as i64),
                Value::Str(format!("Cust{id}")),
                Value::Dec(c),
                Value::Dec(s),
            ]
        })
        .collect()
}

/// A populated engine.
pub fn init(cfg: &SmallbankConfig) -> Engine {
    let mut e = Engine::new(schema(), ProcRegistry::default());
    e.load([("accounts".to_string(), initial_rows(cfg))])
        .expect("generated rows match the schema");
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse_sql;

    #[test]
    fn send_payment_uses_distinct_accounts() {
        for n in [2, 3, 10] {
            let cfg = SmallbankConfig::with_accounts(n, 9);
            for i in 0..2000 {
                if let SmallbankOp::SendPayment { from, to, .. } = generate(&cfg, i) {
                    assert_ne!(from, to);
                    assert!((1..=n).contains(&to));
                }
            }
        }
    }

    #[test]
    fn one_account_never_sends() {
        let cfg = SmallbankConfig::with_accounts(1, 3);
        assert!((0..500).all(|i| generate(&cfg, i).kind() != TxType::SendPayment));
    }

    #[test]
    fn uniform_mix() {
        let cfg = SmallbankConfig::with_accounts(1000, 11);
        let n = 20_000u64;
        let mut counts = [0u64; 5];
        for i in 0..n {
            counts[generate(&cfg, i).kind() as usize] += 1;
        }
        let expected = n as f64 / 5.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected) * (c as f64 - expected) / expected)
            .sum();
        // 99.9th percentile of chi-square with 4 degrees of freedom
        assert!(chi2 < 18.47, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn statements_parse() {
        let cfg = SmallbankConfig::with_accounts(50, 1);
        for s in statements(&cfg, 200) {
            let parsed = parse_sql(&s.text).unwrap();
            assert!(parsed.len() == 1 || parsed.len() == 2);
        }
    }

    #[test]
    fn balances_in_range() {
        let cfg = SmallbankConfig::with_accounts(100, 5);
        for (_, c, s) in initial_balances(&cfg) {
            assert!((1_000_000..=5_000_000).contains(&c));
            assert!((1_000_000..=5_000_000).contains(&s));
            assert_eq!(c % 100, 0);
        }
        assert_eq!(init(&cfg).database().table(0).size(), 100);
    }
}
