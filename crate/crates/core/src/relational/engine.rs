//! Row store, statement executor, undo log and state hashing.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use alloc::vec;
use core::ops::Bound;

use rpds::RedBlackTreeMapSync;
use thiserror::Error;

use super::procedures::{Arity, ProcContext, ProcRegistry};
use super::schema::{Schema, TableSchema};
use super::value::{ColumnType, Key, Row, Value, DEC_LIMIT};
use crate::abci::QueryError;
use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::{Digest, Hasher};
use crate::sql::{parse_sql, AddOp, Assignment, Condition, Expr, Literal, Operand, ParseError, Projection, Statement};
use crate::types::ExecStatus;

pub type TableData = RedBlackTreeMapSync<Key, Row>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExecError {
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("unknown table {0}")]
    UnknownTable(String),
    #[error("unknown column {column} in {table}")]
    UnknownColumn { table: String, column: String },
    #[error("type mismatch for column {column}: expected {expected}")]
    TypeMismatch { column: String, expected: &'static str },
    #[error("duplicate key in {0}")]
    DuplicateKey(String),
    #[error("no such row in {0}")]
    RowNotFound(String),
    #[error("primary key column {0} cannot be updated")]
    PrimaryKeyUpdate(String),
    #[error("expected {expected} values, got {got}")]
    ColumnCount { expected: usize, got: usize },
    #[error("arithmetic overflow in column {0}")]
    Overflow(String),
    #[error("value out of decimal(12,2) range in column {0}")]
    OutOfRange(String),
    #[error("unknown procedure {0}")]
    UnknownProcedure(String),
    #[error("procedure {name} takes {expected} arguments, got {got}")]
    WrongArity { name: String, expected: Arity, got: usize },
    #[error("statement is not read-only")]
    NotReadOnly,
    #[error("no db-transaction open")]
    NoTransaction,
    #[error("{0}")]
    Procedure(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ResultSet {
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
}

impl Encode for ResultSet {
    fn encode_to(&self, w: &mut Writer) {
        w.list(&self.columns).list(&self.rows);
    }
}

impl Decode for ResultSet {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            columns: r.list()?,
            rows: r.list()?,
        })
    }
}

/// Result of one SQL statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtResult {
    Affected(u64),
    Rows(ResultSet),
}

impl Encode for StmtResult {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            StmtResult::Affected(n) => w.u8(0).u64(*n),
            StmtResult::Rows(rs) => w.u8(1).put(rs),
        };
    }
}

impl Decode for StmtResult {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.position();
        Ok(match r.u8()? {
            0 => StmtResult::Affected(r.u64()?),
            1 => StmtResult::Rows(r.get()?),
            tag => return Err(DecodeError::InvalidTag { offset, tag }),
        })
    }
}

/// Decodes a status or query payload: one result per statement of the script.
pub fn decode_results(payload: &[u8]) -> Result<Vec<StmtResult>, DecodeError> {
    Vec::<StmtResult>::decode(payload)
}

/// Order-independent digest of a table's rows: the lane-wise wrapping sum of
/// the SHA-256 of every encoded row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
struct RowSum([u64; 4]);

impl RowSum {
    fn lanes(row: &[Value]) -> [u64; 4] {
        let mut w = Writer::with_capacity(64);
        for v in row {
            v.encode_to(&mut w);
        }
        let d = Digest::of(w.as_slice());
        let mut out = [0u64; 4];
        for (i, chunk) in d.0.chunks_exact(8).enumerate() {
            out[i] = u64::from_be_bytes(chunk.try_into().unwrap());
        }
        out
    }

    fn add(&mut self, row: &[Value]) {
        for (a, b) in self.0.iter_mut().zip(Self::lanes(row)) {
            *a = a.wrapping_add(b);
        }
    }

    fn sub(&mut self, row: &[Value]) {
        for (a, b) in self.0.iter_mut().zip(Self::lanes(row)) {
            *a = a.wrapping_sub(b);
        }
    }
}

/// A full set of tables. Cloning is O(number of tables).
#[derive(Debug, Clone)]
pub struct Database {
    schema: Arc<Schema>,
    tables: Vec<TableData>,
    sums: Vec<RowSum>,
}

impl Database {
    pub fn new(schema: Arc<Schema>) -> Self {
        let tables = schema.tables.iter().map(|_| RedBlackTreeMapSync::new_sync()).collect();
        let sums = vec![RowSum::default(); schema.tables.len()];
        Self { schema, tables, sums }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn table(&self, idx: usize) -> &TableData {
        &self.tables[idx]
    }

    pub fn row_count(&self) -> usize {
        self.tables.iter().map(|t| t.size()).sum()
    }

    pub fn get(&self, table: usize, key: &[Value]) -> Option<&Row> {
        self.tables[table].get(key)
    }

    pub fn scan_prefix(&self, table: usize, prefix: &[Value]) -> Vec<Row> {
        self.tables[table]
            .range::<[Value], _>((Bound::Included(prefix), Bound::Unbounded))
            .take_while(|(k, _)| k.starts_with(prefix))
            .map(|(_, r)| r.clone())
            .collect()
    }

    /// Highest-keyed row under `prefix` satisfying `pred`.
    pub fn find_last(&self, table: usize, prefix: &[Value], pred: &mut dyn FnMut(&Row) -> bool) -> Option<&Row> {
        let t = &self.tables[table];
        let upper = match prefix.split_last() {
            Some((Value::Int(x), head)) if *x < i64::MAX => {
                let mut k = head.to_vec();
                k.push(Value::Int(x + 1));
                Some(k)
            }
            _ => None,
        };
        match upper {
            Some(upper) => t
                .range::<[Value], _>((Bound::Included(prefix), Bound::Excluded(upper.as_slice())))
                .rev()
                .map(|(_, r)| r)
                .find(|r| pred(r)),
            None => t
                .range::<[Value], _>((Bound::Included(prefix), Bound::Unbounded))
                .take_while(|(k, _)| k.starts_with(prefix))
                .map(|(_, r)| r)
                .filter(|r| pred(r))
                .last(),
        }
    }

    fn put(&mut self, table: usize, key: Key, row: Row) {
        if let Some(old) = self.tables[table].get(&key) {
            self.sums[table].sub(old);
        }
        self.sums[table].add(&row);
        self.tables[table].insert_mut(key, row);
    }

    fn remove(&mut self, table: usize, key: &[Value]) {
        if let Some(old) = self.tables[table].get(key) {
            self.sums[table].sub(old);
            self.tables[table].remove_mut(key);
        }
    }

    /// SHA-256 over every table in schema order: name, row count and the
    /// table's row digest sum. Independent of insertion order and O(tables).
    pub fn state_hash(&self) -> Digest {
        let mut w = Writer::with_capacity(64 * self.tables.len());
        for ((ts, data), sum) in self.schema.tables.iter().zip(&self.tables).zip(&self.sums) {
            w.str(&ts.name).u64(data.size() as u64);
            for lane in sum.0 {
                w.u64(lane);
            }
        }
        Digest::of(w.as_slice())
    }

    /// Digest of the full canonical serialization: tables in schema order,
    /// rows in primary-key order. Linear in the state size.
    pub fn serialized_digest(&self) -> Digest {
        let mut h = Hasher::new();
        let mut w = Writer::with_capacity(1 << 16);
        for (ts, data) in self.schema.tables.iter().zip(&self.tables) {
            w.str(&ts.name).u64(data.size() as u64);
            for row in data.values() {
                for v in row {
                    v.encode_to(&mut w);
                }
                if w.byte_len() >= 1 << 15 {
                    h.update(w.as_slice());
                    w.clear();
                }
            }
        }
        h.update(w.as_slice());
        h.finish()
    }

    fn table_index(&self, name: &str) -> Result<usize, ExecError> {
        self.schema
            .table_index(name)
            .ok_or_else(|| ExecError::UnknownTable(name.to_string()))
    }

    /// Type and range check of a full row.
    fn check_row(ts: &TableSchema, row: &[Value]) -> Result<(), ExecError> {
        if row.len() != ts.columns.len() {
            return Err(ExecError::ColumnCount {
                expected: ts.columns.len(),
                got: row.len(),
            });
        }
        for (c, v) in ts.columns.iter().zip(row) {
            if v.column_type() != c.ty {
                return Err(ExecError::TypeMismatch {
                    column: c.name.clone(),
                    expected: c.ty.name(),
                });
            }
            if let Value::Dec(x) = v {
                if x.unsigned_abs() >= DEC_LIMIT as u64 {
                    return Err(ExecError::OutOfRange(c.name.clone()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct UndoEntry {
    table: usize,
    key: Key,
    /// `None` marks a row inserted by the transaction.
    before: Option<Row>,
}

/// Mutable access to the working tables with undo logging.
struct Txn<'a> {
    db: &'a mut Database,
    undo: &'a mut Vec<UndoEntry>,
    block_time: u64,
}

impl Txn<'_> {
    fn put_row(&mut self, table: usize, row: Row, must_exist: bool) -> Result<(), ExecError> {
        let ts = &self.db.schema.tables[table];
        Database::check_row(ts, &row)?;
        let key = ts.key_of(&row);
        let before = self.db.tables[table].get(&key).cloned();
        match (&before, must_exist) {
            (None, true) => return Err(ExecError::RowNotFound(ts.name.clone())),
            (Some(_), false) => return Err(ExecError::DuplicateKey(ts.name.clone())),
            _ => {}
        }
        self.undo.push(UndoEntry {
            table,
            key: key.clone(),
            before,
        });
        self.db.put(table, key, row);
        Ok(())
    }
}

/// Read-only view used by queries.
struct ReadView<'a> {
    db: &'a Database,
    block_time: u64,
}

impl ProcContext for Txn<'_> {
    fn block_time(&self) -> u64 {
        self.block_time
    }
    fn schema(&self) -> &Schema {
        &self.db.schema
    }
    fn get(&self, table: usize, key: &[Value]) -> Option<Row> {
        self.db.get(table, key).cloned()
    }
    fn scan_prefix(&self, table: usize, prefix: &[Value]) -> Vec<Row> {
        self.db.scan_prefix(table, prefix)
    }
    fn find_last(&self, table: usize, prefix: &[Value], pred: &mut dyn FnMut(&Row) -> bool) -> Option<Row> {
        self.db.find_last(table, prefix, pred).cloned()
    }
    fn insert(&mut self, table: usize, row: Row) -> Result<(), ExecError> {
        self.put_row(table, row, false)
    }
    fn update(&mut self, table: usize, row: Row) -> Result<(), ExecError> {
        self.put_row(table, row, true)
    }
}

impl ProcContext for ReadView<'_> {
    fn block_time(&self) -> u64 {
        self.block_time
    }
    fn schema(&self) -> &Schema {
        &self.db.schema
    }
    fn get(&self, table: usize, key: &[Value]) -> Option<Row> {
        self.db.get(table, key).cloned()
    }
    fn scan_prefix(&self, table: usize, prefix: &[Value]) -> Vec<Row> {
        self.db.scan_prefix(table, prefix)
    }
    fn find_last(&self, table: usize, prefix: &[Value], pred: &mut dyn FnMut(&Row) -> bool) -> Option<Row> {
        self.db.find_last(table, prefix, pred).cloned()
    }
    fn insert(&mut self, _: usize, _: Row) -> Result<(), ExecError> {
        Err(ExecError::NotReadOnly)
    }
    fn update(&mut self, _: usize, _: Row) -> Result<(), ExecError> {
        Err(ExecError::NotReadOnly)
    }
}

fn column(ts: &TableSchema, name: &str) -> Result<usize, ExecError> {
    ts.column_index(name).ok_or_else(|| ExecError::UnknownColumn {
        table: ts.name.clone(),
        column: name.to_string(),
    })
}

fn mismatch(ts: &TableSchema, idx: usize) -> ExecError {
    let c = &ts.columns[idx];
    ExecError::TypeMismatch {
        column: c.name.clone(),
        expected: c.ty.name(),
    }
}

fn compile_filter(ts: &TableSchema, filter: &[Condition]) -> Result<Vec<(usize, Value)>, ExecError> {
    filter
        .iter()
        .map(|c| {
            let idx = column(ts, &c.column)?;
            let v = Value::coerce(&c.value, ts.columns[idx].ty).ok_or_else(|| mismatch(ts, idx))?;
            Ok((idx, v))
        })
        .collect()
}

/// Rows matching a conjunction, in primary-key order. Uses a point lookup
/// when every key column is constrained.
fn matching_rows(db: &Database, table: usize, conds: &[(usize, Value)]) -> Vec<Row> {
    let ts = &db.schema.tables[table];
    let matches = |row: &Row| conds.iter().all(|(i, v)| row[*i] == *v);
    let key: Option<Key> = ts
        .pk
        .iter()
        .map(|k| conds.iter().find(|(i, _)| i == k).map(|(_, v)| v.clone()))
        .collect();
    match key {
        Some(key) => db
            .get(table, &key)
            .filter(|r| matches(r))
            .cloned()
            .into_iter()
            .collect(),
        None => db.tables[table]
            .values()
            .filter(|r| matches(r))
            .cloned()
            .collect(),
    }
}

enum Term {
    Col(usize),
    Lit(Value),
}

struct Compiled {
    target: usize,
    first: Term,
    rest: Vec<(AddOp, Term)>,
}

fn compile_assignment(ts: &TableSchema, a: &Assignment) -> Result<Compiled, ExecError> {
    let target = column(ts, &a.column)?;
    if ts.is_pk_column(target) {
        return Err(ExecError::PrimaryKeyUpdate(a.column.clone()));
    }
    let ty = ts.columns[target].ty;
    let term = |o: &Operand| -> Result<Term, ExecError> {
        match o {
            Operand::Column(c) => {
                let idx = column(ts, c)?;
                if ts.columns[idx].ty != ty {
                    return Err(mismatch(ts, target));
                }
                Ok(Term::Col(idx))
            }
            Operand::Lit(l) => Value::coerce(l, ty)
                .map(Term::Lit)
                .ok_or_else(|| mismatch(ts, target)),
        }
    };
    let Expr { first, rest } = &a.expr;
    if ty == ColumnType::Str && !rest.is_empty() {
        return Err(mismatch(ts, target));
    }
    Ok(Compiled {
        target,
        first: term(first)?,
        rest: rest
            .iter()
            .map(|(op, o)| Ok((*op, term(o)?)))
            .collect::<Result<_, ExecError>>()?,
    })
}

fn eval(ts: &TableSchema, c: &Compiled, row: &Row) -> Result<Value, ExecError> {
    let get = |t: &Term| match t {
        Term::Col(i) => row[*i].clone(),
        Term::Lit(v) => v.clone(),
    };
    let first = get(&c.first);
    if c.rest.is_empty() {
        return Ok(first);
    }
    let name = || ts.columns[c.target].name.clone();
    let num = |v: &Value| match v {
        Value::Int(x) | Value::Dec(x) => *x,
        Value::Str(_) => unreachable!("string arithmetic rejected at compile time"),
    };
    let mut acc = num(&first);
    for (op, t) in &c.rest {
        let x = num(&get(t));
        acc = match op {
            AddOp::Add => acc.checked_add(x),
            AddOp::Sub => acc.checked_sub(x),
        }
        .ok_or_else(|| ExecError::Overflow(name()))?;
    }
    Ok(match first {
        Value::Int(_) => Value::Int(acc),
        _ => Value::Dec(acc),
    })
}

fn exec_select(
    db: &Database,
    projection: &Projection,
    table: &str,
    filter: &[Condition],
) -> Result<ResultSet, ExecError> {
    let ti = db.table_index(table)?;
    let ts = &db.schema.tables[ti];
    let cols: Vec<usize> = match projection {
        Projection::All => (0..ts.columns.len()).collect(),
        Projection::Columns(names) => names.iter().map(|n| column(ts, n)).collect::<Result<_, _>>()?,
    };
    let conds = compile_filter(ts, filter)?;
    let rows = matching_rows(db, ti, &conds)
        .into_iter()
        .map(|r| cols.iter().map(|&i| r[i].clone()).collect())
        .collect();
    Ok(ResultSet {
        columns: cols.iter().map(|&i| ts.columns[i].name.clone()).collect(),
        rows,
    })
}

fn call(
    procs: &ProcRegistry,
    ctx: &mut dyn ProcContext,
    name: &str,
    args: &[Literal],
    read_only: bool,
) -> Result<ResultSet, ExecError> {
    let p = procs
        .get(name)
        .ok_or_else(|| ExecError::UnknownProcedure(name.to_string()))?;
    if !p.arity.accepts(args.len()) {
        return Err(ExecError::WrongArity {
            name: name.to_string(),
            expected: p.arity,
            got: args.len(),
        });
    }
    if read_only && !p.read_only {
        return Err(ExecError::NotReadOnly);
    }
    let values: Vec<Value> = args.iter().map(Value::from_literal).collect();
    (p.func)(ctx, &values)
}

impl Txn<'_> {
    fn execute(&mut self, procs: &ProcRegistry, stmt: &Statement) -> Result<StmtResult, ExecError> {
        match stmt {
            Statement::Select {
                projection,
                table,
                filter,
            } => exec_select(self.db, projection, table, filter).map(StmtResult::Rows),
            Statement::Update { table, set, filter } => {
                let ti = self.db.table_index(table)?;
                let ts = &self.db.schema.tables[ti];
                let compiled: Vec<Compiled> = set
                    .iter()
                    .map(|a| compile_assignment(ts, a))
                    .collect::<Result<_, _>>()?;
                let conds = compile_filter(ts, filter)?;
                let rows = matching_rows(self.db, ti, &conds);
                let mut updated = Vec::with_capacity(rows.len());
                for row in &rows {
                    // every SET expression sees the pre-statement row
                    let mut new = row.clone();
                    for c in &compiled {
                        new[c.target] = eval(ts, c, row)?;
                    }
                    updated.push(new);
                }
                let n = updated.len() as u64;
                for row in updated {
                    self.put_row(ti, row, true)?;
                }
                Ok(StmtResult::Affected(n))
            }
            Statement::Insert {
                table,
                columns,
                values,
            } => {
                let ti = self.db.table_index(table)?;
                let ts = &self.db.schema.tables[ti];
                let order: Vec<usize> = match columns {
                    None => (0..ts.columns.len()).collect(),
                    Some(names) => {
                        let idx: Vec<usize> =
                            names.iter().map(|n| column(ts, n)).collect::<Result<_, _>>()?;
                        let mut sorted = idx.clone();
                        sorted.sort_unstable();
                        sorted.dedup();
                        if sorted.len() != ts.columns.len() || idx.len() != sorted.len() {
                            return Err(ExecError::ColumnCount {
                                expected: ts.columns.len(),
                                got: sorted.len(),
                            });
                        }
                        idx
                    }
                };
                if values.len() != order.len() {
                    return Err(ExecError::ColumnCount {
                        expected: order.len(),
                        got: values.len(),
                    });
                }
                let mut row = vec![Value::Int(0); ts.columns.len()];
                for (&ci, lit) in order.iter().zip(values) {
                    row[ci] = Value::coerce(lit, ts.columns[ci].ty).ok_or_else(|| mismatch(ts, ci))?;
                }
                self.put_row(ti, row, false)?;
                Ok(StmtResult::Affected(1))
            }
            Statement::Call { name, args } => {
                call(procs, self, name, args, false).map(StmtResult::Rows)
            }
        }
    }
}

/// Last committed state, safe to query from any thread.
#[derive(Debug, Clone)]
pub struct Snapshot {
    db: Database,
    hash: Digest,
    block_time: u64,
    procs: Arc<ProcRegistry>,
}

impl Snapshot {
    pub fn state_hash(&self) -> Digest {
        self.hash
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    /// Runs a read-only script (SELECTs and read-only procedures).
    pub fn query(&self, text: &str) -> Result<Vec<StmtResult>, QueryError> {
        let stmts = parse_sql(text).map_err(|e| QueryError::Parse {
            offset: e.offset,
            expected: e.expected,
        })?;
        let mut out = Vec::with_capacity(stmts.len());
        for s in &stmts {
            let r = match s {
                Statement::Select {
                    projection,
                    table,
                    filter,
                } => exec_select(&self.db, projection, table, filter),
                Statement::Call { name, args } => {
                    let mut view = ReadView {
                        db: &self.db,
                        block_time: self.block_time,
                    };
                    call(&self.procs, &mut view, name, args, true)
                }
                _ => return Err(QueryError::NotReadOnly),
            };
            match r {
                Ok(rs) => out.push(StmtResult::Rows(rs)),
                Err(ExecError::NotReadOnly) => return Err(QueryError::NotReadOnly),
                Err(e) => return Err(QueryError::Failed(e.to_string())),
            }
        }
        Ok(out)
    }

    pub fn query_payload(&self, text: &str) -> Result<Vec<u8>, QueryError> {
        self.query(text).map(|r| r.encode())
    }
}

/// The relational engine: one open db-transaction at a time, rolled back by
/// replaying its undo log in reverse.
#[derive(Debug, Clone)]
pub struct Engine {
    db: Database,
    committed: Snapshot,
    undo: Vec<UndoEntry>,
    open: bool,
    block_time: u64,
}

impl Engine {
    pub fn new(schema: Schema, procs: ProcRegistry) -> Self {
        let db = Database::new(Arc::new(schema));
        let hash = db.state_hash();
        Self {
            committed: Snapshot {
                db: db.clone(),
                hash,
                block_time: 0,
                procs: Arc::new(procs),
            },
            db,
            undo: Vec::new(),
            open: false,
            block_time: 0,
        }
    }

    /// Bulk-loads initial rows outside any db-transaction.
    pub fn load<I>(&mut self, tables: I) -> Result<(), ExecError>
    where
        I: IntoIterator<Item = (String, Vec<Row>)>,
    {
        assert!(!self.open, "load while a db-transaction is open");
        for (name, rows) in tables {
            let ti = self.db.table_index(&name)?;
            for row in rows {
                let ts = &self.db.schema.tables[ti];
                Database::check_row(ts, &row)?;
                let key = ts.key_of(&row);
                if self.db.tables[ti].contains_key(&key) {
                    return Err(ExecError::DuplicateKey(name.clone()));
                }
                self.db.put(ti, key, row);
            }
        }
        self.committed.db = self.db.clone();
        self.committed.hash = self.db.state_hash();
        Ok(())
    }

    pub fn schema(&self) -> &Schema {
        &self.db.schema
    }

    pub fn procedures(&self) -> &ProcRegistry {
        &self.committed.procs
    }

    pub fn database(&self) -> &Database {
        &self.db
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn undo_len(&self) -> usize {
        self.undo.len()
    }

    /// Hash of the last committed state.
    pub fn committed_hash(&self) -> Digest {
        self.committed.hash
    }

    /// Hash of the working state, including uncommitted changes.
    pub fn working_hash(&self) -> Digest {
        self.db.state_hash()
    }

    pub fn snapshot(&self) -> Snapshot {
        self.committed.clone()
    }

    pub fn begin(&mut self, block_time: u64) -> Result<(), ExecError> {
        if self.open {
            return Err(ExecError::Procedure("db-transaction already open".into()));
        }
        self.open = true;
        self.block_time = block_time;
        Ok(())
    }

    pub fn execute(&mut self, stmt: &Statement) -> Result<StmtResult, ExecError> {
        if !self.open {
            return Err(ExecError::NoTransaction);
        }
        let procs = self.committed.procs.clone();
        let mut txn = Txn {
            db: &mut self.db,
            undo: &mut self.undo,
            block_time: self.block_time,
        };
        txn.execute(&procs, stmt)
    }

    /// Parses and executes a script, stopping at the first failure.
    pub fn execute_script(&mut self, text: &str) -> Result<Vec<StmtResult>, ExecError> {
        let stmts = parse_sql(text)?;
        stmts.iter().map(|s| self.execute(s)).collect()
    }

    /// One workload statement as an execution status.
    pub fn execute_status(&mut self, text: &str) -> ExecStatus {
        match self.execute_script(text) {
            Ok(results) => ExecStatus::ok(results.encode()),
            Err(e) => ExecStatus::failed(e.to_string()),
        }
    }

    pub fn commit(&mut self) -> Digest {
        let changed = !self.undo.is_empty();
        self.undo.clear();
        self.open = false;
        if changed {
            self.committed.hash = self.db.state_hash();
            self.committed.db = self.db.clone();
        }
        self.committed.block_time = self.block_time;
        self.committed.hash
    }

    pub fn rollback(&mut self) -> Digest {
        while let Some(u) = self.undo.pop() {
            match u.before {
                Some(row) => self.db.put(u.table, u.key, row),
                None => self.db.remove(u.table, &u.key),
            }
        }
        self.open = false;
        self.committed.hash
    }
}
