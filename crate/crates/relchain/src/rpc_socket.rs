//! Socket endpoint for the node RPC, for drivers running in another process.
//! Uses the ABCI frame layout with request opcodes 0x10-0x15; responses set
//! the high bit.

use std::io::{self, BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, Receiver};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};
use relchain_core::abci::{Frame, QueryError, QueryResult};
use relchain_core::codec::{DecodeError, Reader, Writer};
use relchain_core::{Block, BlockHeader, Digest, ExecStatus};
use thiserror::Error;

use crate::abci_socket::{read_frame, write_frame};
use crate::rpc::{AdmissionResponse, CommitResponse, NewBlockHeaderEvent, RpcError};
use crate::runtime::NodeClient;

pub const OP_BROADCAST_COMMIT: u8 = 0x10;
pub const OP_BROADCAST_SYNC: u8 = 0x11;
pub const OP_BROADCAST_ASYNC: u8 = 0x12;
pub const OP_QUERY: u8 = 0x13;
pub const OP_FETCH_BLOCK: u8 = 0x14;
pub const OP_SUBSCRIBE: u8 = 0x15;
pub const RESPONSE_BIT: u8 = 0x80;

#[derive(Debug, Error)]
pub enum RpcSocketError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed payload: {0}")]
    Decode(#[from] DecodeError),
    #[error("unexpected response opcode {0:#04x}")]
    Opcode(u8),
    #[error(transparent)]
    Rpc(#[from] RpcError),
    #[error("connection closed")]
    Closed,
}

fn put_rpc_error(w: &mut Writer, e: &RpcError) {
    match e {
        RpcError::Rejected(m) => w.u8(1).str(m),
        RpcError::Timeout => w.u8(2),
        RpcError::NotFound(h) => w.u8(3).u64(*h),
        RpcError::Halted(m) => w.u8(4).str(m),
        RpcError::Disconnected => w.u8(5),
    };
}

fn get_rpc_error(r: &mut Reader<'_>, tag: u8) -> Result<RpcError, DecodeError> {
    Ok(match tag {
        1 => RpcError::Rejected(r.string()?),
        2 => RpcError::Timeout,
        3 => RpcError::NotFound(r.u64()?),
        4 => RpcError::Halted(r.string()?),
        5 => RpcError::Disconnected,
        tag => {
            return Err(DecodeError::InvalidTag {
                offset: r.position() - 1,
                tag,
            })
        }
    })
}

fn put_query(w: &mut Writer, q: &Result<QueryResult, QueryError>) {
    match q {
        Ok(q) => w.u8(0).bytes(&q.payload),
        Err(QueryError::NotReadOnly) => w.u8(1),
        Err(QueryError::Parse { offset, expected }) => w.u8(2).u64(*offset as u64).str(expected),
        Err(QueryError::Failed(m)) => w.u8(3).str(m),
        Err(QueryError::Backend(b)) => w.u8(4).str(&b.to_string()),
    };
}

fn get_query(r: &mut Reader<'_>) -> Result<Result<QueryResult, QueryError>, DecodeError> {
    Ok(match r.u8()? {
        0 => Ok(QueryResult {
            payload: r.bytes()?.to_vec(),
        }),
        1 => Err(QueryError::NotReadOnly),
        2 => Err(QueryError::Parse {
            offset: r.u64()? as usize,
            expected: r.string()?,
        }),
        3 => Err(QueryError::Failed(r.string()?)),
        4 => Err(QueryError::Failed(r.string()?)),
        tag => {
            return Err(DecodeError::InvalidTag {
                offset: r.position() - 1,
                tag,
            })
        }
    })
}

fn header_frame(ev: &NewBlockHeaderEvent) -> Frame {
    let mut w = Writer::new();
    w.put(&ev.header).put(&ev.block_id);
    Frame::new(OP_SUBSCRIBE | RESPONSE_BIT, w.into_bytes())
}

/// Answers one request frame. `None` for a subscription, which the caller
/// turns into an event stream.
fn answer(client: &NodeClient, frame: &Frame) -> Result<Option<Frame>, DecodeError> {
    let mut r = Reader::new(&frame.payload);
    let mut w = Writer::new();
    match frame.opcode {
        OP_BROADCAST_COMMIT => {
            let tx = r.bytes()?.to_vec();
            r.finish()?;
            match client.broadcast_tx_commit(tx) {
                Ok(c) => {
                    w.u8(0)
                        .put(&c.tx_hash)
                        .u64(c.height)
                        .list(&c.statuses)
                        .u64((c.elapsed_ms * 1e3) as u64);
                }
                Err(e) => put_rpc_error(&mut w, &e),
            }
        }
        OP_BROADCAST_SYNC => {
            let tx = r.bytes()?.to_vec();
            r.finish()?;
            match client.broadcast_tx_sync(tx) {
                Ok(a) => {
                    w.u8(0).put(&a.tx_hash).bool(a.accepted).put(&a.reason);
                }
                Err(e) => put_rpc_error(&mut w, &e),
            }
        }
        OP_BROADCAST_ASYNC => {
            let tx = r.bytes()?.to_vec();
            r.finish()?;
            match client.broadcast_tx_async(tx) {
                Ok(h) => {
                    w.u8(0).put(&h);
                }
                Err(e) => put_rpc_error(&mut w, &e),
            }
        }
        OP_QUERY => {
            let text = r.string()?;
            r.finish()?;
            put_query(&mut w, &client.query(&text));
        }
        OP_FETCH_BLOCK => {
            let h = r.u64()?;
            r.finish()?;
            match client.fetch_block(h) {
                Ok((b, s)) => {
                    w.u8(0).put(&b).put(&s);
                }
                Err(e) => put_rpc_error(&mut w, &e),
            }
        }
        OP_SUBSCRIBE => {
            r.finish()?;
            return Ok(None);
        }
        op => {
            return Err(DecodeError::InvalidTag { offset: 0, tag: op });
        }
    }
    Ok(Some(Frame::new(frame.opcode | RESPONSE_BIT, w.into_bytes())))
}

fn serve_connection(stream: TcpStream, client: &NodeClient) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        match answer(client, &frame) {
            Ok(Some(resp)) => write_frame(&mut writer, &resp)?,
            Ok(None) => {
                let events = client
                    .subscribe_new_block_header()
                    .map_err(|e| io::Error::new(io::ErrorKind::BrokenPipe, e))?;
                write_frame(&mut writer, &Frame::new(OP_SUBSCRIBE | RESPONSE_BIT, Vec::new()))?;
                // the connection is a one-way event stream from here on
                for ev in events {
                    write_frame(&mut writer, &header_frame(&ev))?;
                }
                return Ok(());
            }
            Err(e) => {
                let mut w = Writer::new();
                w.u8(0xFF).str(&e.to_string());
                write_frame(&mut writer, &Frame::new(frame.opcode | RESPONSE_BIT, w.into_bytes()))?;
            }
        }
    }
    Ok(())
}

/// A running RPC endpoint for one node.
pub struct RpcServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl RpcServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }
}

impl Drop for RpcServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

pub fn serve_rpc(client: NodeClient, addr: impl ToSocketAddrs) -> io::Result<RpcServer> {
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = std::thread::Builder::new()
        .name(format!("rpc-accept-{addr}"))
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let client = client.clone();
                        let _ = std::thread::Builder::new().name("rpc-conn".into()).spawn(move || {
                            if let Err(e) = serve_connection(stream, &client) {
                                debug!("rpc connection closed: {e}");
                            }
                        });
                    }
                    Err(e) => warn!("rpc accept failed: {e}"),
                }
            }
        })?;
    Ok(RpcServer {
        addr,
        stop,
        accept: Some(accept),
    })
}

/// Blocking client for [`serve_rpc`].
pub struct RpcSocketClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl RpcSocketClient {
    pub fn connect(addr: SocketAddr, timeout: Duration) -> io::Result<Self> {
        let stream = TcpStream::connect_timeout(&addr, timeout)?;
        stream.set_nodelay(true)?;
        Ok(Self {
            reader: BufReader::new(stream.try_clone()?),
            writer: BufWriter::new(stream),
        })
    }

    fn call(&mut self, opcode: u8, payload: Vec<u8>) -> Result<Vec<u8>, RpcSocketError> {
        write_frame(&mut self.writer, &Frame::new(opcode, payload))?;
        let f = read_frame(&mut self.reader)?.ok_or(RpcSocketError::Closed)?;
        if f.opcode != opcode | RESPONSE_BIT {
            return Err(RpcSocketError::Opcode(f.opcode));
        }
        Ok(f.payload)
    }

    /// Decodes the status byte; `Ok(reader)` positioned after it on success.
    fn body<T>(
        payload: &[u8],
        ok: impl FnOnce(&mut Reader<'_>) -> Result<T, DecodeError>,
    ) -> Result<T, RpcSocketError> {
        let mut r = Reader::new(payload);
        let out = match r.u8()? {
            0 => ok(&mut r)?,
            0xFF => return Err(RpcSocketError::Decode(DecodeError::Invalid("server could not decode request"))),
            tag => return Err(get_rpc_error(&mut r, tag)?.into()),
        };
        r.finish()?;
        Ok(out)
    }

    pub fn broadcast_tx_commit(&mut self, tx: &[u8]) -> Result<CommitResponse, RpcSocketError> {
        let mut w = Writer::new();
        w.bytes(tx);
        let p = self.call(OP_BROADCAST_COMMIT, w.into_bytes())?;
        Self::body(&p, |r| {
            Ok(CommitResponse {
                tx_hash: r.get()?,
                height: r.u64()?,
                statuses: r.list::<ExecStatus>()?,
                elapsed_ms: r.u64()? as f64 / 1e3,
            })
        })
    }

    pub fn broadcast_tx_sync(&mut self, tx: &[u8]) -> Result<AdmissionResponse, RpcSocketError> {
        let mut w = Writer::new();
        w.bytes(tx);
        let p = self.call(OP_BROADCAST_SYNC, w.into_bytes())?;
        Self::body(&p, |r| {
            Ok(AdmissionResponse {
                tx_hash: r.get()?,
                accepted: r.bool()?,
                reason: r.get()?,
            })
        })
    }

    pub fn broadcast_tx_async(&mut self, tx: &[u8]) -> Result<Digest, RpcSocketError> {
        let mut w = Writer::new();
        w.bytes(tx);
        let p = self.call(OP_BROADCAST_ASYNC, w.into_bytes())?;
        Self::body(&p, |r| r.get())
    }

    pub fn query(&mut self, sql: &str) -> Result<Result<QueryResult, QueryError>, RpcSocketError> {
        let mut w = Writer::new();
        w.str(sql);
        let p = self.call(OP_QUERY, w.into_bytes())?;
        let mut r = Reader::new(&p);
        let q = get_query(&mut r)?;
        r.finish()?;
        Ok(q)
    }

    pub fn fetch_block(&mut self, height: u64) -> Result<(Block, Vec<Vec<ExecStatus>>), RpcSocketError> {
        let mut w = Writer::new();
        w.u64(height);
        let p = self.call(OP_FETCH_BLOCK, w.into_bytes())?;
        Self::body(&p, |r| Ok((r.get()?, r.get()?)))
    }

    /// Turns this connection into a header stream.
    pub fn subscribe_new_block_header(mut self) -> Result<Receiver<NewBlockHeaderEvent>, RpcSocketError> {
        let ack = self.call(OP_SUBSCRIBE, Vec::new())?;
        if !ack.is_empty() {
            return Err(DecodeError::TrailingBytes { count: ack.len() }.into());
        }
        let (tx, rx) = mpsc::channel();
        let mut reader = self.reader;
        std::thread::Builder::new().name("rpc-events".into()).spawn(move || {
            while let Ok(Some(f)) = read_frame(&mut reader) {
                let mut r = Reader::new(&f.payload);
                let ev = (|| {
                    let header: BlockHeader = r.get()?;
                    let block_id: Digest = r.get()?;
                    r.finish()?;
                    Ok::<_, DecodeError>(NewBlockHeaderEvent { header, block_id })
                })();
                match ev {
                    Ok(ev) => {
                        if tx.send(ev).is_err() {
                            break;
                        }
                    }
                    Err(_) => break,
                }
            }
        })?;
        Ok(rx)
    }
}
