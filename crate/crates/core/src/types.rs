//! Chain data types and their canonical encodings.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::codec::{Decode, DecodeError, Encode, Reader, Writer};
use crate::hash::Digest;

/// Default block size cap in bytes (21 MB).
pub const DEFAULT_MAX_BLOCK_BYTES: usize = 21 * 1000 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ClientId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ValidatorId(pub u32);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl ValidatorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TxError {
    #[error("a bc-transaction must carry at least one statement")]
    EmptyBatch,
    #[error("statement text must not be empty")]
    EmptyStatement,
}

/// One workload transaction: a SQL script or a `CALL proc(args)` invocation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WlStatement {
    pub text: String,
    pub client_id: ClientId,
    pub seq_no: u64,
}

impl WlStatement {
    pub fn new(text: impl Into<String>, client_id: ClientId, seq_no: u64) -> Result<Self, TxError> {
        let text = text.into();
        if text.is_empty() {
            return Err(TxError::EmptyStatement);
        }
        Ok(Self {
            text,
            client_id,
            seq_no,
        })
    }
}

impl Encode for WlStatement {
    fn encode_to(&self, w: &mut Writer) {
        w.str(&self.text).u64(self.client_id.0).u64(self.seq_no);
    }
}

impl Decode for WlStatement {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let text = r.string()?;
        if text.is_empty() {
            return Err(DecodeError::Invalid("empty statement text"));
        }
        Ok(Self {
            text,
            client_id: ClientId(r.u64()?),
            seq_no: r.u64()?,
        })
    }
}

/// The unit submitted to the network: a non-empty batch of statements.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BcTransaction {
    statements: Vec<WlStatement>,
    nonce: u64,
}

impl BcTransaction {
    pub fn new(statements: Vec<WlStatement>, nonce: u64) -> Result<Self, TxError> {
        if statements.is_empty() {
            return Err(TxError::EmptyBatch);
        }
        Ok(Self { statements, nonce })
    }

    pub fn statements(&self) -> &[WlStatement] {
        &self.statements
    }

    pub fn nonce(&self) -> u64 {
        self.nonce
    }

    pub fn into_statements(self) -> Vec<WlStatement> {
        self.statements
    }

    pub fn hash(&self) -> Digest {
        Digest::of(&self.encode())
    }
}

impl Encode for BcTransaction {
    fn encode_to(&self, w: &mut Writer) {
        w.list(&self.statements).u64(self.nonce);
    }
}

impl Decode for BcTransaction {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let statements: Vec<WlStatement> = r.list()?;
        if statements.is_empty() {
            return Err(DecodeError::Invalid("empty bc-transaction"));
        }
        Ok(Self {
            statements,
            nonce: r.u64()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BlockHeader {
    pub height: u64,
    pub prev_block_hash: Digest,
    /// State hash after executing the previous block (initial state for height 1).
    pub app_hash: Digest,
    pub proposer_id: ValidatorId,
    /// Logical milliseconds since genesis, chosen by the proposer.
    pub block_time: u64,
    pub num_txs: u32,
}

impl Encode for BlockHeader {
    fn encode_to(&self, w: &mut Writer) {
        w.u64(self.height)
            .put(&self.prev_block_hash)
            .put(&self.app_hash)
            .u32(self.proposer_id.0)
            .u64(self.block_time)
            .u32(self.num_txs);
    }
}

impl Decode for BlockHeader {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        Ok(Self {
            height: r.u64()?,
            prev_block_hash: r.get()?,
            app_hash: r.get()?,
            proposer_id: ValidatorId(r.u32()?),
            block_time: r.u64()?,
            num_txs: r.u32()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<BcTransaction>,
}

impl Block {
    pub fn hash(&self) -> Digest {
        hash_block(self)
    }

    pub fn is_well_formed(&self) -> bool {
        self.header.num_txs as usize == self.txs.len() && self.header.height >= 1
    }
}

impl Encode for Block {
    fn encode_to(&self, w: &mut Writer) {
        w.put(&self.header).list(&self.txs);
    }
}

impl Decode for Block {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let header: BlockHeader = r.get()?;
        let txs: Vec<BcTransaction> = r.list()?;
        if txs.len() != header.num_txs as usize {
            return Err(DecodeError::Invalid("num_txs does not match transaction count"));
        }
        Ok(Self { header, txs })
    }
}

/// Canonical byte encoding of a bc-transaction.
pub fn encode_tx(tx: &BcTransaction) -> Vec<u8> {
    tx.encode()
}

pub fn decode_tx(bytes: &[u8]) -> Result<BcTransaction, DecodeError> {
    BcTransaction::decode(bytes)
}

/// SHA-256 over the canonical block encoding.
pub fn hash_block(b: &Block) -> Digest {
    Digest::of(&b.encode())
}

/// Outcome of executing one workload statement.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ExecCode {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExecStatus {
    pub code: ExecCode,
    pub result_payload: Vec<u8>,
}

impl ExecStatus {
    pub fn ok(result_payload: Vec<u8>) -> Self {
        Self {
            code: ExecCode::Ok,
            result_payload,
        }
    }

    /// A failed status. An empty reason is replaced so the status always says why.
    pub fn failed(reason: impl Into<String>) -> Self {
        let mut reason = reason.into();
        if reason.is_empty() {
            reason.push_str("unspecified failure");
        }
        Self {
            code: ExecCode::Failed(reason),
            result_payload: Vec::new(),
        }
    }

    pub fn is_ok(&self) -> bool {
        matches!(self.code, ExecCode::Ok)
    }

    pub fn failure_reason(&self) -> Option<&str> {
        match &self.code {
            ExecCode::Ok => None,
            ExecCode::Failed(r) => Some(r),
        }
    }
}

impl Encode for ExecStatus {
    fn encode_to(&self, w: &mut Writer) {
        match &self.code {
            ExecCode::Ok => {
                w.u8(0);
            }
            ExecCode::Failed(reason) => {
                w.u8(1).str(reason);
            }
        }
        w.bytes(&self.result_payload);
    }
}

impl Decode for ExecStatus {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let offset = r.position();
        let code = match r.u8()? {
            0 => ExecCode::Ok,
            1 => {
                let reason = r.string()?;
                if reason.is_empty() {
                    return Err(DecodeError::Invalid("failed status without reason"));
                }
                ExecCode::Failed(reason)
            }
            tag => return Err(DecodeError::InvalidTag { offset, tag }),
        };
        Ok(Self {
            code,
            result_payload: r.bytes()?.into(),
        })
    }
}
