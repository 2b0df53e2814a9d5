//! Parser and printer for the SQL subset understood by the relational engine.
//!
//! ```text
//! script     = statement { ";" statement } [ ";" ] ;
//! statement  = update | select | insert | call ;
//! update     = "UPDATE" ident "SET" assignment { "," assignment } [ where ] ;
//! assignment = ident "=" expr ;
//! expr       = operand { ( "+" | "-" ) operand } ;
//! operand    = ident | literal ;
//! select     = "SELECT" ( "*" | ident { "," ident } ) "FROM" ident [ where ] ;
//! insert     = "INSERT" "INTO" ident [ "(" ident { "," ident } ")" ]
//!              "VALUES" "(" literal { "," literal } ")" ;
//! call       = "CALL" ident "(" [ literal { "," literal } ] ")" ;
//! where      = "WHERE" ident "=" literal { "AND" ident "=" literal } ;
//! literal    = [ "-" ] digits [ "." digit [ digit ] ] | "'" { char | "''" } "'" ;
//! ident      = ( letter | "_" ) { letter | digit | "_" } ;
//! ```
//!
//! Keywords are case-insensitive and reserved. Printing a parsed script and
//! parsing the result yields the same tree.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Literal {
    Int(i64),
    /// Decimal scaled by 100 (two fractional digits).
    Dec(i64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Column(String),
    Lit(Literal),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AddOp {
    Add,
    Sub,
}

/// `first (op operand)*`, evaluated left to right.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Expr {
    pub first: Operand,
    pub rest: Vec<(AddOp, Operand)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    pub column: String,
    pub expr: Expr,
}

/// One `column = literal` term of a WHERE conjunction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Condition {
    pub column: String,
    pub value: Literal,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Projection {
    All,
    Columns(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Statement {
    Update {
        table: String,
        set: Vec<Assignment>,
        filter: Vec<Condition>,
    },
    Select {
        projection: Projection,
        table: String,
        filter: Vec<Condition>,
    },
    Insert {
        table: String,
        columns: Option<Vec<String>>,
        values: Vec<Literal>,
    },
    Call {
        name: String,
        args: Vec<Literal>,
    },
}

impl Statement {
    pub fn is_read_only(&self) -> bool {
        matches!(self, Statement::Select { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at offset {offset}: expected {expected}")]
pub struct ParseError {
    pub offset: usize,
    pub expected: String,
}

pub const KEYWORDS: [&str; 10] = [
    "UPDATE", "SET", "WHERE", "AND", "SELECT", "FROM", "INSERT", "INTO", "VALUES", "CALL",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.iter().any(|k| k.eq_ignore_ascii_case(word))
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Word(String),
    /// Unsigned number: integer part and optional fraction in hundredths.
    Num { int: u128, frac: Option<u8> },
    Str(String),
    Punct(char),
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Word(w) => alloc::format!("`{w}`"),
        Tok::Num { .. } => "number".into(),
        Tok::Str(_) => "string".into(),
        Tok::Punct(c) => alloc::format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn err<T>(&self, offset: usize, expected: &str) -> Result<T, ParseError> {
        Err(ParseError {
            offset,
            expected: expected.to_string(),
        })
    }

    fn next(&mut self) -> Result<(usize, Tok), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok((start, Tok::End));
        };
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            return Ok((start, Tok::Word(self.src[start..self.pos].to_string())));
        }
        if c.is_ascii_digit() {
            let mut int: u128 = 0;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                int = int * 10 + (bytes[self.pos] - b'0') as u128;
                if int > u64::MAX as u128 {
                    return self.err(start, "number within 64-bit range");
                }
                self.pos += 1;
            }
            let mut frac = None;
            if bytes.get(self.pos) == Some(&b'.') {
                self.pos += 1;
                let fstart = self.pos;
                let mut f: u8 = 0;
                while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                    if self.pos - fstart == 2 {
                        return self.err(self.pos, "at most two fractional digits");
                    }
                    f = f * 10 + (bytes[self.pos] - b'0');
                    self.pos += 1;
                }
                match self.pos - fstart {
                    0 => return self.err(self.pos, "fractional digit"),
                    1 => f *= 10,
                    _ => {}
                }
                frac = Some(f);
            }
            if self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphabetic() || bytes[self.pos] == b'_')
            {
                return self.err(self.pos, "delimiter after number");
            }
            return Ok((start, Tok::Num { int, frac }));
        }
        if c == b'\'' {
            let mut out = String::new();
            self.pos += 1;
            loop {
                let rest = &self.src[self.pos..];
                let Some(q) = rest.find('\'') else {
                    return self.err(self.src.len(), "closing quote");
                };
                out.push_str(&rest[..q]);
                self.pos += q + 1;
                if self.src.as_bytes().get(self.pos) == Some(&b'\'') {
                    out.push('\'');
                    self.pos += 1;
                } else {
                    return Ok((start, Tok::Str(out)));
                }
            }
        }
        if b",;()=+-*".contains(&c) {
            self.pos += 1;
            return Ok((start, Tok::Punct(c as char)));
        }
        let ch = self.src[start..].chars().next().unwrap();
        self.err(start, &alloc::format!("a token, found {ch:?}"))
    }
}

struct Parser<'a> {
    lex: Lexer<'a>,
    tok: Tok,
    at: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut lex = Lexer { src, pos: 0 };
        let (at, tok) = lex.next()?;
        Ok(Self { lex, tok, at })
    }

    fn bump(&mut self) -> Result<Tok, ParseError> {
        let (at, tok) = self.lex.next()?;
        self.at = at;
        Ok(core::mem::replace(&mut self.tok, tok))
    }

    fn fail<T>(&self, expected: &str) -> Result<T, ParseError> {
        Err(ParseError {
            offset: self.at,
            expected: alloc::format!("{expected}, found {}", describe(&self.tok)),
        })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.tok, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_kw(kw) {
            self.bump()?;
            Ok(())
        } else {
            self.fail(kw)
        }
    }

    fn punct(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Punct(c) {
            self.bump()?;
            Ok(())
        } else {
            self.fail(&alloc::format!("`{c}`"))
        }
    }

    fn eat(&mut self, c: char) -> Result<bool, ParseError> {
        if self.tok == Tok::Punct(c) {
            self.bump()?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match &self.tok {
            Tok::Word(w) if !is_keyword(w) => {
                let w = w.clone();
                self.bump()?;
                Ok(w)
            }
            _ => self.fail("identifier"),
        }
    }

    fn ident_list(&mut self) -> Result<Vec<String>, ParseError> {
        let mut out = alloc::vec![self.ident()?];
        while self.eat(',')? {
            out.push(self.ident()?);
        }
        Ok(out)
    }

    fn literal(&mut self) -> Result<Literal, ParseError> {
        let start = self.at;
        let negative = self.eat('-')?;
        match self.tok.clone() {
            Tok::Num { int, frac } => {
                let magnitude = match frac {
                    None => int as i128,
                    Some(f) => int as i128 * 100 + f as i128,
                };
                let v = if negative { -magnitude } else { magnitude };
                if v < i64::MIN as i128 || v > i64::MAX as i128 {
                    return Err(ParseError {
                        offset: start,
                        expected: "number within 64-bit range".into(),
                    });
                }
                self.bump()?;
                Ok(match frac {
                    None => Literal::Int(v as i64),
                    Some(_) => Literal::Dec(v as i64),
                })
            }
            Tok::Str(s) if !negative => {
                self.bump()?;
                Ok(Literal::Str(s))
            }
            _ if negative => self.fail("number"),
            _ => self.fail("literal"),
        }
    }

    fn literal_list(&mut self) -> Result<Vec<Literal>, ParseError> {
        let mut out = alloc::vec![self.literal()?];
        while self.eat(',')? {
            out.push(self.literal()?);
        }
        Ok(out)
    }

    fn operand(&mut self) -> Result<Operand, ParseError> {
        match &self.tok {
            Tok::Word(_) => Ok(Operand::Column(self.ident()?)),
            _ => Ok(Operand::Lit(self.literal()?)),
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let first = self.operand()?;
        let mut rest = Vec::new();
        loop {
            let op = if self.eat('+')? {
                AddOp::Add
            } else if self.eat('-')? {
                AddOp::Sub
            } else {
                break;
            };
            rest.push((op, self.operand()?));
        }
        Ok(Expr { first, rest })
    }

    fn filter(&mut self) -> Result<Vec<Condition>, ParseError> {
        let mut out = Vec::new();
        if !self.is_kw("WHERE") {
            return Ok(out);
        }
        self.bump()?;
        loop {
            let column = self.ident()?;
            self.punct('=')?;
            let value = self.literal()?;
            out.push(Condition { column, value });
            if !self.is_kw("AND") {
                return Ok(out);
            }
            self.bump()?;
        }
    }

    fn statement(&mut self) -> Result<Statement, ParseError> {
        if self.is_kw("UPDATE") {
            self.bump()?;
            let table = self.ident()?;
            self.keyword("SET")?;
            let mut set = Vec::new();
            loop {
                let column = self.ident()?;
                self.punct('=')?;
                set.push(Assignment {
                    column,
                    expr: self.expr()?,
                });
                if !self.eat(',')? {
                    break;
                }
            }
            let filter = self.filter()?;
            Ok(Statement::Update { table, set, filter })
        } else if self.is_kw("SELECT") {
            self.bump()?;
            let projection = if self.eat('*')? {
                Projection::All
            } else {
                Projection::Columns(self.ident_list()?)
            };
            self.keyword("FROM")?;
            let table = self.ident()?;
            let filter = self.filter()?;
            Ok(Statement::Select {
                projection,
                table,
                filter,
            })
        } else if self.is_kw("INSERT") {
            self.bump()?;
            self.keyword("INTO")?;
            let table = self.ident()?;
            let columns = if self.eat('(')? {
                let c = self.ident_list()?;
                self.punct(')')?;
                Some(c)
            } else {
                None
            };
            self.keyword("VALUES")?;
            self.punct('(')?;
            let values = self.literal_list()?;
            self.punct(')')?;
            Ok(Statement::Insert {
                table,
                columns,
                values,
            })
        } else if self.is_kw("CALL") {
            self.bump()?;
            let name = self.ident()?;
            self.punct('(')?;
            let args = if self.tok == Tok::Punct(')') {
                Vec::new()
            } else {
                self.literal_list()?
            };
            self.punct(')')?;
            Ok(Statement::Call { name, args })
        } else {
            self.fail("UPDATE, SELECT, INSERT or CALL")
        }
    }
}

/// Parses a semicolon-separated script into its statements, in order.
pub fn parse_sql(text: &str) -> Result<Vec<Statement>, ParseError> {
    let mut p = Parser::new(text)?;
    let mut out = alloc::vec![p.statement()?];
    while p.eat(';')? {
        if p.tok == Tok::End {
            break;
        }
        out.push(p.statement()?);
    }
    if p.tok != Tok::End {
        return p.fail("`;` or end of input");
    }
    Ok(out)
}

/// Canonical text of a script: statements joined by `"; "`.
pub fn print_script(stmts: &[Statement]) -> String {
    let mut out = String::new();
    for (i, s) in stmts.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&s.to_string());
    }
    out
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Int(v) => write!(f, "{v}"),
            Literal::Dec(v) => fmt_cents(*v, f),
            Literal::Str(s) => {
                f.write_str("'")?;
                for part in s.split('\'').enumerate() {
                    if part.0 > 0 {
                        f.write_str("''")?;
                    }
                    f.write_str(part.1)?;
                }
                f.write_str("'")
            }
        }
    }
}

/// Writes a value scaled by 100 with exactly two fractional digits.
pub fn fmt_cents(v: i64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    write!(f, "{sign}{}.{:02}", a / 100, a % 100)
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Column(c) => f.write_str(c),
            Operand::Lit(l) => write!(f, "{l}"),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.first)?;
        for (op, o) in &self.rest {
            let sym = match op {
                AddOp::Add => '+',
                AddOp::Sub => '-',
            };
            write!(f, " {sym} {o}")?;
        }
        Ok(())
    }
}

fn write_filter(f: &mut fmt::Formatter<'_>, filter: &[Condition]) -> fmt::Result {
    for (i, c) in filter.iter().enumerate() {
        f.write_str(if i == 0 { " WHERE " } else { " AND " })?;
        write!(f, "{} = {}", c.column, c.value)?;
    }
    Ok(())
}

fn write_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Update { table, set, filter } => {
                write!(f, "UPDATE {table} SET ")?;
                for (i, a) in set.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{} = {}", a.column, a.expr)?;
                }
                write_filter(f, filter)
            }
            Statement::Select {
                projection,
                table,
                filter,
            } => {
                f.write_str("SELECT ")?;
                match projection {
                    Projection::All => f.write_str("*")?,
                    Projection::Columns(c) => write_list(f, c)?,
                }
                write!(f, " FROM {table}")?;
                write_filter(f, filter)
            }
            Statement::Insert {
                table,
                columns,
                values,
            } => {
                write!(f, "INSERT INTO {table}")?;
                if let Some(c) = columns {
                    f.write_str(" (")?;
                    write_list(f, c)?;
                    f.write_str(")")?;
                }
                f.write_str(" VALUES (")?;
                write_list(f, values)?;
                f.write_str(")")
            }
            Statement::Call { name, args } => {
                write!(f, "CALL {name}(")?;
                write_list(f, args)?;
                f.write_str(")")
            }
        }
    }
}
