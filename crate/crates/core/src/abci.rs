//! Application-blockchain interface: the block lifecycle plus CheckTx and Query.
//!
//! [`AbciBackend`] is called in-process by the builtin variant. The server
//! variant carries the same calls over [`Frame`]s:
//!
//! ```text
//! u32 BE length | opcode | payload        length = 1 + payload length
//! ```
//!
//! Requests use opcodes `0x01..=0x06`; responses use the request opcode with
//! the high bit set. A response payload starts with a status byte: `0` ok
//! followed by the body, `1` contract violation or `2` backend failure
//! followed by a message string.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::hash::Digest;
use crate::types::{BlockHeader, ExecStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DbTxHandle(pub u64);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbciError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("lifecycle contract violation: {0}")]
    ContractViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CheckResult {
    Accept,
    Reject(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryResult {
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("statement is not read-only")]
    NotReadOnly,
    #[error("parse error at offset {offset}: expected {expected}")]
    Parse { offset: usize, expected: String },
    #[error("query failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Backend(#[from] AbciError),
}

/// The backend contract. Calls for one block arrive strictly as
/// `begin_block`, `deliver_tx`*, `end_block`, `commit`.
pub trait AbciBackend {
    fn begin_block(&mut self, header: &BlockHeader) -> Result<DbTxHandle, AbciError>;

    /// Executes every statement of the encoded bc-transaction in order and
    /// returns one status per statement.
    fn deliver_tx(&mut self, handle: DbTxHandle, tx: &[u8]) -> Result<Vec<ExecStatus>, AbciError>;

    fn end_block(&mut self, handle: DbTxHandle) -> Result<(), AbciError>;

    /// Commits the block's db-transaction, or rolls it back when any status
    /// failed. Returns the resulting state hash.
    fn commit(&mut self, handle: DbTxHandle, statuses: &[ExecStatus]) -> Result<Digest, AbciError>;

    fn check_tx(&mut self, tx: &[u8]) -> Result<CheckResult, AbciError>;

    /// Read-only request against the last committed state.
    fn query(&mut self, request: &str) -> Result<QueryResult, QueryError>;
}

impl<B: AbciBackend + ?Sized> AbciBackend for alloc::boxed::Box<B> {
    fn begin_block(&mut self, header: &BlockHeader) -> Result<DbTxHandle, AbciError> {
        (**self).begin_block(header)
    }
    fn deliver_tx(&mut self, handle: DbTxHandle, tx: &[u8]) -> Result<Vec<ExecStatus>, AbciError> {
        (**self).deliver_tx(handle, tx)
    }
    fn end_block(&mut self, handle: DbTxHandle) -> Result<(), AbciError> {
        (**self).end_block(handle)
    }
    fn commit(&mut self, handle: DbTxHandle, statuses: &[ExecStatus]) -> Result<Digest, AbciError> {
        (**self).commit(handle, statuses)
    }
    fn check_tx(&mut self, tx: &[u8]) -> Result<CheckResult, AbciError> {
        (**self).check_tx(tx)
    }
    fn query(&mut self, request: &str) -> Result<QueryResult, QueryError> {
        (**self).query(request)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Open(u64),
    Ended(u64),
}

/// Enforces the begin / deliver* / end / commit ordering.
#[derive(Debug, Clone)]
pub struct LifecycleGuard {
    phase: Phase,
    next: u64,
}

impl Default for LifecycleGuard {
    fn default() -> Self {
        Self {
            phase: Phase::Idle,
            next: 1,
        }
    }
}

fn violation(what: &str, phase: Phase) -> AbciError {
    let state = match phase {
        Phase::Idle => "no block in flight".to_string(),
        Phase::Open(h) => alloc::format!("block {h} open"),
        Phase::Ended(h) => alloc::format!("block {h} ended"),
    };
    AbciError::ContractViolation(alloc::format!("{what} with {state}"))
}

impl LifecycleGuard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn in_flight(&self) -> bool {
        self.phase != Phase::Idle
    }

    pub fn begin(&mut self) -> Result<DbTxHandle, AbciError> {
        if self.phase != Phase::Idle {
            return Err(violation("begin_block", self.phase));
        }
        let h = self.next;
        self.next += 1;
        self.phase = Phase::Open(h);
        Ok(DbTxHandle(h))
    }

    pub fn deliver(&self, handle: DbTxHandle) -> Result<(), AbciError> {
        match self.phase {
            Phase::Open(h) if h == handle.0 => Ok(()),
            p => Err(violation("deliver_tx", p)),
        }
    }

    pub fn end(&mut self, handle: DbTxHandle) -> Result<(), AbciError> {
        match self.phase {
            Phase::Open(h) if h == handle.0 => {
                self.phase = Phase::Ended(h);
                Ok(())
            }
            p => Err(violation("end_block", p)),
        }
    }

    pub fn commit(&mut self, handle: DbTxHandle) -> Result<(), AbciError> {
        match self.phase {
            Phase::Ended(h) if h == handle.0 => {
                self.phase = Phase::Idle;
                Ok(())
            }
            p => Err(violation("commit", p)),
        }
    }
}

pub const OP_BEGIN_BLOCK: u8 = 0x01;
pub const OP_DELIVER_TX: u8 = 0x02;
pub const OP_END_BLOCK: u8 = 0x03;
pub const OP_COMMIT: u8 = 0x04;
pub const OP_CHECK_TX: u8 = 0x05;
pub const OP_QUERY: u8 = 0x06;
pub const RESPONSE_BIT: u8 = 0x80;

/// Frames larger than this are refused.
pub const MAX_FRAME_LEN: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrameError {
    #[error("frame length {0} out of range")]
    BadLength(usize),
    #[error("unknown opcode {0:#04x}")]
    UnknownOpcode(u8),
    #[error("malformed payload: {0}")]
    Payload(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u8,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: u8, payload: Vec<u8>) -> Self {
        Self { opcode, payload }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + self.payload.len());
        out.extend_from_slice(&((self.payload.len() + 1) as u32).to_be_bytes());
        out.push(self.opcode);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one frame from the front of `buf`. Returns `Ok(None)` when more
    /// bytes are needed, otherwise the frame and the bytes it consumed.
    pub fn parse(buf: &[u8]) -> Result<Option<(Frame, usize)>, FrameError> {
        if buf.len() < 4 {
            return Ok(None);
        }
        let len = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
        if len == 0 || len > MAX_FRAME_LEN {
            return Err(FrameError::BadLength(len));
        }
        if buf.len() < 4 + len {
            return Ok(None);
        }
        let frame = Frame {
            opcode: buf[4],
            payload: buf[5..4 + len].to_vec(),
        };
        Ok(Some((frame, 4 + len)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Request {
    BeginBlock(BlockHeader),
    DeliverTx { handle: DbTxHandle, tx: Vec<u8> },
    EndBlock(DbTxHandle),
    Commit { handle: DbTxHandle, statuses: Vec<ExecStatus> },
    CheckTx(Vec<u8>),
    Query(String),
}

impl Request {
    pub fn opcode(&self) -> u8 {
        match self {
            Request::BeginBlock(_) => OP_BEGIN_BLOCK,
            Request::DeliverTx { .. } => OP_DELIVER_TX,
            Request::EndBlock(_) => OP_END_BLOCK,
            Request::Commit { .. } => OP_COMMIT,
            Request::CheckTx(_) => OP_CHECK_TX,
            Request::Query(_) => OP_QUERY,
        }
    }

    pub fn to_frame(&self) -> Frame {
        let mut w = Writer::new();
        match self {
            Request::BeginBlock(h) => {
                w.put(h);
            }
            Request::DeliverTx { handle, tx } => {
                w.u64(handle.0).bytes(tx);
            }
            Request::EndBlock(handle) => {
                w.u64(handle.0);
            }
            Request::Commit { handle, statuses } => {
                w.u64(handle.0).list(statuses);
            }
            Request::CheckTx(tx) => {
                w.bytes(tx);
            }
            Request::Query(q) => {
                w.str(q);
            }
        }
        Frame::new(self.opcode(), w.into_bytes())
    }

    pub fn from_frame(frame: &Frame) -> Result<Request, FrameError> {
        let mut r = Reader::new(&frame.payload);
        let req = match frame.opcode {
            OP_BEGIN_BLOCK => Request::BeginBlock(r.get()?),
            OP_DELIVER_TX => Request::DeliverTx {
                handle: DbTxHandle(r.u64()?),
                tx: r.bytes()?.to_vec(),
            },
            OP_END_BLOCK => Request::EndBlock(DbTxHandle(r.u64()?)),
            OP_COMMIT => Request::Commit {
                handle: DbTxHandle(r.u64()?),
                statuses: r.list()?,
            },
            OP_CHECK_TX => Request::CheckTx(r.bytes()?.to_vec()),
            OP_QUERY => Request::Query(r.string()?),
            op => return Err(FrameError::UnknownOpcode(op)),
        };
        r.finish()?;
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Response {
    BeginBlock(DbTxHandle),
    DeliverTx(Vec<ExecStatus>),
    EndBlock,
    Commit(Digest),
    CheckTx(CheckResult),
    Query(Result<QueryResult, QueryError>),
    /// The call failed; `opcode` is the request opcode.
    Error { opcode: u8, error: AbciError },
}

impl Response {
    pub fn opcode(&self) -> u8 {
        RESPONSE_BIT
            | match self {
                Response::BeginBlock(_) => OP_BEGIN_BLOCK,
                Response::DeliverTx(_) => OP_DELIVER_TX,
                Response::EndBlock => OP_END_BLOCK,
                Response::Commit(_) => OP_COMMIT,
                Response::CheckTx(_) => OP_CHECK_TX,
                Response::Query(_) => OP_QUERY,
                Response::Error { opcode, .. } => *opcode,
            }
    }

    pub fn to_frame(&self) -> Frame {
        let mut w = Writer::new();
        match self {
            Response::Error { error, .. } => {
                match error {
                    AbciError::ContractViolation(m) => w.u8(1).str(m),
                    AbciError::BackendUnavailable(m) => w.u8(2).str(m),
                };
            }
            ok => {
                w.u8(0);
                match ok {
                    Response::BeginBlock(h) => {
                        w.u64(h.0);
                    }
                    Response::DeliverTx(s) => {
                        w.list(s);
                    }
                    Response::EndBlock => {}
                    Response::Commit(d) => {
                        w.put(d);
                    }
                    Response::CheckTx(CheckResult::Accept) => {
                        w.u8(0);
                    }
                    Response::CheckTx(CheckResult::Reject(m)) => {
                        w.u8(1).str(m);
                    }
                    Response::Query(Ok(q)) => {
                        w.u8(0).bytes(&q.payload);
                    }
                    Response::Query(Err(e)) => match e {
                        QueryError::NotReadOnly => {
                            w.u8(1);
                        }
                        QueryError::Parse { offset, expected } => {
                            w.u8(2).u64(*offset as u64).str(expected);
                        }
                        QueryError::Failed(m) => {
                            w.u8(3).str(m);
                        }
                        QueryError::Backend(b) => {
                            w.u8(4).str(&b.to_string());
                        }
                    },
                    Response::Error { .. } => unreachable!(),
                }
            }
        }
        Frame::new(self.opcode(), w.into_bytes())
    }

    pub fn from_frame(frame: &Frame) -> Result<Response, FrameError> {
        if frame.opcode & RESPONSE_BIT == 0 {
            return Err(FrameError::UnknownOpcode(frame.opcode));
        }
        let op = frame.opcode & !RESPONSE_BIT;
        if !(OP_BEGIN_BLOCK..=OP_QUERY).contains(&op) {
            return Err(FrameError::UnknownOpcode(frame.opcode));
        }
        let mut r = Reader::new(&frame.payload);
        let offset = r.position();
        let resp = match r.u8()? {
            0 => match op {
                OP_BEGIN_BLOCK => Response::BeginBlock(DbTxHandle(r.u64()?)),
                OP_DELIVER_TX => Response::DeliverTx(r.list()?),
                OP_END_BLOCK => Response::EndBlock,
                OP_COMMIT => Response::Commit(r.get()?),
                OP_CHECK_TX => Response::CheckTx(match r.u8()? {
                    0 => CheckResult::Accept,
                    1 => CheckResult::Reject(r.string()?),
                    tag => return Err(DecodeError::InvalidTag { offset: 1, tag }.into()),
                }),
                _ => Response::Query(match r.u8()? {
                    0 => Ok(QueryResult {
                        payload: r.bytes()?.to_vec(),
                    }),
                    1 => Err(QueryError::NotReadOnly),
                    2 => Err(QueryError::Parse {
                        offset: r.u64()? as usize,
                        expected: r.string()?,
                    }),
                    3 => Err(QueryError::Failed(r.string()?)),
                    4 => Err(QueryError::Backend(AbciError::BackendUnavailable(r.string()?))),
                    tag => return Err(DecodeError::InvalidTag { offset: 1, tag }.into()),
                }),
            },
            1 => Response::Error {
                opcode: op,
                error: AbciError::ContractViolation(r.string()?),
            },
            2 => Response::Error {
                opcode: op,
                error: AbciError::BackendUnavailable(r.string()?),
            },
            tag => return Err(DecodeError::InvalidTag { offset, tag }.into()),
        };
        r.finish()?;
        Ok(resp)
    }
}

/// Dispatches one decoded request to a backend. Used by the socket server.
pub fn handle_request(backend: &mut dyn AbciBackend, req: Request) -> Response {
    let opcode = req.opcode();
    let res = match req {
        Request::BeginBlock(h) => backend.begin_block(&h).map(Response::BeginBlock),
        Request::DeliverTx { handle, tx } => backend.deliver_tx(handle, &tx).map(Response::DeliverTx),
        Request::EndBlock(h) => backend.end_block(h).map(|_| Response::EndBlock),
        Request::Commit { handle, statuses } => {
            backend.commit(handle, &statuses).map(Response::Commit)
        }
        Request::CheckTx(tx) => backend.check_tx(&tx).map(Response::CheckTx),
        Request::Query(q) => Ok(Response::Query(backend.query(&q))),
    };
    res.unwrap_or_else(|error| Response::Error { opcode, error })
}
