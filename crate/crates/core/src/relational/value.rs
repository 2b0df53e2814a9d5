use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::sql::{fmt_cents, Literal};

/// Exclusive bound on the magnitude of a `decimal(12,2)` value, in cents.
pub const DEC_LIMIT: i64 = 1_000_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ColumnType {
    Int,
    /// `decimal(12,2)` stored as an integer number of hundredths.
    Dec,
    Str,
}

impl ColumnType {
    pub fn name(self) -> &'static str {
        match self {
            ColumnType::Int => "int",
            ColumnType::Dec => "decimal",
            ColumnType::Str => "string",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(i64),
    Dec(i64),
    Str(String),
}

pub type Row = Vec<Value>;
pub type Key = Vec<Value>;

impl Value {
    pub fn column_type(&self) -> ColumnType {
        match self {
            Value::Int(_) => ColumnType::Int,
            Value::Dec(_) => ColumnType::Dec,
            Value::Str(_) => ColumnType::Str,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            _ => None,
        }
    }

    /// Hundredths for decimals.
    pub fn as_cents(&self) -> Option<i64> {
        match self {
            Value::Dec(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Converts a literal for storage in a column of type `ty`. Integers
    /// widen to decimals; nothing else converts.
    pub fn coerce(lit: &Literal, ty: ColumnType) -> Option<Value> {
        match (lit, ty) {
            (Literal::Int(v), ColumnType::Int) => Some(Value::Int(*v)),
            (Literal::Int(v), ColumnType::Dec) => v.checked_mul(100).map(Value::Dec),
            (Literal::Dec(v), ColumnType::Dec) => Some(Value::Dec(*v)),
            (Literal::Str(s), ColumnType::Str) => Some(Value::Str(s.clone())),
            _ => None,
        }
    }

    pub fn from_literal(lit: &Literal) -> Value {
        match lit {
            Literal::Int(v) => Value::Int(*v),
            Literal::Dec(v) => Value::Dec(*v),
            Literal::Str(s) => Value::Str(s.clone()),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(v) => write!(f, "{v}"),
            Value::Dec(v) => fmt_cents(*v, f),
            Value::Str(s) => f.write_str(s),
        }
    }
}

impl Encode for Value {
    fn encode_to(&self, w: &mut Writer) {
        match self {
            Value::Int(v) => w.u8(0).i64(*v),
            Value::Dec(v) => w.u8(1).i64(*v),
            Value::Str(s) => w.u8(2).str(s),
        };
    }
}

impl Decode for Value {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.position();
        Ok(match r.u8()? {
            0 => Value::Int(r.i64()?),
            1 => Value::Dec(r.i64()?),
            2 => Value::Str(r.string()?),
            tag => return Err(DecodeError::InvalidTag { offset, tag }),
        })
    }
}
