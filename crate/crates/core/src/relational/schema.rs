//! Table definitions and the schema file format.
//!
//! ```text
//! # comment
//! table accounts
//!   custid    int
//!   name      string
//!   checking  decimal
//!   savings   decimal
//!   primary key (custid)
//! ```

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use thiserror::Error;

use super::value::{ColumnType, Key, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: ColumnType,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableSchema {
    pub name: String,
    pub columns: Vec<Column>,
    /// Column indices of the primary key, in key order.
    pub pk: Vec<usize>,
}

impl TableSchema {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn key_of(&self, row: &[Value]) -> Key {
        self.pk.iter().map(|&i| row[i].clone()).collect()
    }

    pub fn is_pk_column(&self, idx: usize) -> bool {
        self.pk.contains(&idx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Schema {
    pub tables: Vec<TableSchema>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("schema line {line}: {message}")]
pub struct SchemaError {
    pub line: usize,
    pub message: String,
}

impl Schema {
    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables.iter().position(|t| t.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn parse(text: &str) -> Result<Schema, SchemaError> {
        let mut tables: Vec<TableSchema> = Vec::new();
        let mut pk_names: Vec<Vec<String>> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |message: String| SchemaError { line, message };
            let content = raw.split('#').next().unwrap().trim();
            if content.is_empty() {
                continue;
            }
            let words: Vec<&str> = content.split_whitespace().collect();
            match words.as_slice() {
                ["table", name] => {
                    if tables.iter().any(|t| t.name == *name) {
                        return Err(err(format!("table {name} defined twice")));
                    }
                    tables.push(TableSchema {
                        name: name.to_string(),
                        columns: Vec::new(),
                        pk: Vec::new(),
                    });
                    pk_names.push(Vec::new());
                }
                ["primary", "key", ..] => {
                    let Some(t) = pk_names.last_mut() else {
                        return Err(err("primary key outside a table".into()));
                    };
                    if !t.is_empty() {
                        return Err(err("second primary key".into()));
                    }
                    let rest = content["primary".len()..].trim_start()["key".len()..].trim();
                    let inner = rest
                        .strip_prefix('(')
                        .and_then(|r| r.strip_suffix(')'))
                        .ok_or_else(|| err("expected primary key (col, ...)".into()))?;
                    for c in inner.split(',') {
                        t.push(c.trim().to_string());
                    }
                }
                [col, ty] => {
                    let Some(t) = tables.last_mut() else {
                        return Err(err("column outside a table".into()));
                    };
                    let ty = match *ty {
                        "int" => ColumnType::Int,
                        "decimal" => ColumnType::Dec,
                        "string" => ColumnType::Str,
                        other => return Err(err(format!("unknown type {other}"))),
                    };
                    if t.column_index(col).is_some() {
                        return Err(err(format!("column {col} defined twice")));
                    }
                    t.columns.push(Column {
                        name: col.to_string(),
                        ty,
                    });
                }
                _ => return Err(err(format!("cannot parse `{content}`"))),
            }
        }
        for (t, names) in tables.iter_mut().zip(pk_names) {
            let err = |message: String| SchemaError { line: 0, message };
            if names.is_empty() {
                return Err(err(format!("table {} has no primary key", t.name)));
            }
            for n in names {
                let idx = t
                    .column_index(&n)
                    .ok_or_else(|| err(format!("unknown key column {n} in {}", t.name)))?;
                t.pk.push(idx);
            }
        }
        Ok(Schema { tables })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_tables_and_keys() {
        let s = Schema::parse(
            "# bank\ntable accounts\n  custid int\n  name string\n  checking decimal\n  primary key (custid)\n\ntable h\n a int\n b int\n primary key (b, a)\n",
        )
        .unwrap();
        assert_eq!(s.tables.len(), 2);
        assert_eq!(s.tables[0].pk, [0]);
        assert_eq!(s.tables[1].pk, [1, 0]);
        assert_eq!(s.tables[0].columns[2].ty, ColumnType::Dec);
    }

    #[test]
    fn rejects_bad_files() {
        assert!(Schema::parse("table t\n a int\n").is_err());
        assert!(Schema::parse("table t\n a float\n primary key (a)").is_err());
        assert!(Schema::parse("a int").is_err());
        assert!(Schema::parse("table t\n a int\n primary key (b)").is_err());
    }
}
