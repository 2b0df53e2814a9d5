//! Deterministic in-memory relational engine.

mod backend;
mod engine;
mod procedures;
mod schema;
mod value;

pub use backend::RelationalBackend;
pub use engine::{decode_results, Database, Engine, ExecError, ResultSet, Snapshot, StmtResult, TableData};
pub use procedures::{arg_cents, arg_int, Arity, DuplicateProcedure, ProcContext, ProcFn, ProcRegistry, Procedure};
pub use schema::{Column, Schema, SchemaError, TableSchema};
pub use value::{ColumnType, Key, Row, Value, DEC_LIMIT};
