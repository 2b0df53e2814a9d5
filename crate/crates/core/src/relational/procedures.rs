//! Stored procedures: native functions run inside the block's db-transaction.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use super::engine::{ExecError, ResultSet};
use super::schema::Schema;
use super::value::{Row, Value};

/// What a procedure body may do to the database.
pub trait ProcContext {
    fn block_time(&self) -> u64;
    fn schema(&self) -> &Schema;
    fn get(&self, table: usize, key: &[Value]) -> Option<Row>;
    /// Rows whose key starts with `prefix`, in key order.
    fn scan_prefix(&self, table: usize, prefix: &[Value]) -> Vec<Row>;
    /// Highest-keyed row under `prefix` for which `pred` holds.
    fn find_last(&self, table: usize, prefix: &[Value], pred: &mut dyn FnMut(&Row) -> bool) -> Option<Row>;
    fn insert(&mut self, table: usize, row: Row) -> Result<(), ExecError>;
    /// Replaces an existing row with the same key.
    fn update(&mut self, table: usize, row: Row) -> Result<(), ExecError>;

    fn table(&self, name: &str) -> Result<usize, ExecError> {
        self.schema()
            .table_index(name)
            .ok_or_else(|| ExecError::UnknownTable(name.to_string()))
    }

    fn column(&self, table: usize, name: &str) -> Result<usize, ExecError> {
        let ts = &self.schema().tables[table];
        ts.column_index(name).ok_or_else(|| ExecError::UnknownColumn {
            table: ts.name.clone(),
            column: name.to_string(),
        })
    }
}

pub type ProcFn = fn(&mut dyn ProcContext, &[Value]) -> Result<ResultSet, ExecError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arity {
    Exact(usize),
    AtLeast(usize),
}

impl Arity {
    pub fn accepts(self, n: usize) -> bool {
        match self {
            Arity::Exact(k) => n == k,
            Arity::AtLeast(k) => n >= k,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Exact(k) => write!(f, "{k}"),
            Arity::AtLeast(k) => write!(f, "at least {k}"),
        }
    }
}

#[derive(Clone)]
pub struct Procedure {
    pub name: String,
    pub arity: Arity,
    pub read_only: bool,
    pub func: ProcFn,
}

impl fmt::Debug for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Procedure")
            .field("name", &self.name)
            .field("arity", &self.arity)
            .field("read_only", &self.read_only)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("procedure {0} registered twice")]
pub struct DuplicateProcedure(pub String);

#[derive(Debug, Clone, Default)]
pub struct ProcRegistry {
    procs: BTreeMap<String, Procedure>,
}

impl ProcRegistry {
    pub fn register(&mut self, p: Procedure) -> Result<(), DuplicateProcedure> {
        if self.procs.contains_key(&p.name) {
            return Err(DuplicateProcedure(p.name));
        }
        self.procs.insert(p.name.clone(), p);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Procedure> {
        self.procs.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.procs.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.procs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.procs.is_empty()
    }
}

/// Helpers for reading procedure arguments.
pub fn arg_int(args: &[Value], i: usize) -> Result<i64, ExecError> {
    args.get(i)
        .and_then(Value::as_int)
        .ok_or_else(|| ExecError::Procedure(alloc::format!("argument {i} must be an integer")))
}

pub fn arg_cents(args: &[Value], i: usize) -> Result<i64, ExecError> {
    args.get(i)
        .and_then(|v| match v {
            Value::Int(x) => x.checked_mul(100),
            v => v.as_cents(),
        })
        .ok_or_else(|| ExecError::Procedure(alloc::format!("argument {i} must be numeric")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nop(_: &mut dyn ProcContext, _: &[Value]) -> Result<ResultSet, ExecError> {
        Ok(ResultSet::default())
    }

    #[test]
    fn duplicate_registration_fails() {
        let p = Procedure {
            name: "P".into(),
            arity: Arity::AtLeast(1),
            read_only: true,
            func: nop,
        };
        let mut r = ProcRegistry::default();
        r.register(p.clone()).unwrap();
        assert_eq!(r.register(p), Err(DuplicateProcedure("P".into())));
        assert_eq!(r.names().collect::<Vec<_>>(), ["P"]);
    }

    #[test]
    fn arity() {
        assert!(Arity::AtLeast(2).accepts(5));
        assert!(!Arity::Exact(2).accepts(3));
        assert_eq!(Arity::AtLeast(2).to_string(), "at least 2");
    }
}
