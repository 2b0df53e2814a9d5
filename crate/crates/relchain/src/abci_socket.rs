//! Server variant of the ABCI: the backend behind a TCP socket speaking
//! length-prefixed frames.

use std::io::{self, BufReader, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use log::{debug, warn};
use relchain_core::abci::{
    handle_request, AbciBackend, AbciError, CheckResult, DbTxHandle, Frame, QueryError, QueryResult, Request,
    Response, MAX_FRAME_LEN,
};
use relchain_core::{BlockHeader, Digest, ExecStatus};

use crate::backend::QueryService;

pub(crate) fn read_frame(r: &mut impl Read) -> io::Result<Option<Frame>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len == 0 || len > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad frame length {len}")));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)?;
    let opcode = body[0];
    body.remove(0);
    Ok(Some(Frame::new(opcode, body)))
}

pub(crate) fn write_frame(w: &mut impl Write, frame: &Frame) -> io::Result<()> {
    w.write_all(&frame.encode())?;
    w.flush()
}

/// A running ABCI socket server. Dropping it stops accepting connections.
pub struct AbciServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
}

impl AbciServer {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn shutdown(mut self) {
        self.stop_accepting();
    }

    fn stop_accepting(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        if let Some(h) = self.accept.take() {
            let _ = h.join();
        }
    }
}

impl Drop for AbciServer {
    fn drop(&mut self) {
        self.stop_accepting();
    }
}

/// Serves `backend` on `addr`. Every connection gets its own thread; frames
/// on a connection are answered in order, and each call holds the backend
/// lock only for its own duration.
pub fn serve_abci<B>(backend: B, addr: impl ToSocketAddrs) -> io::Result<AbciServer>
where
    B: AbciBackend + Send + 'static,
{
    let listener = TcpListener::bind(addr)?;
    let addr = listener.local_addr()?;
    let backend = Arc::new(Mutex::new(backend));
    let stop = Arc::new(AtomicBool::new(false));
    let flag = stop.clone();
    let accept = std::thread::Builder::new()
        .name(format!("abci-accept-{addr}"))
        .spawn(move || {
            for conn in listener.incoming() {
                if flag.load(Ordering::SeqCst) {
                    break;
                }
                match conn {
                    Ok(stream) => {
                        let backend = backend.clone();
                        let _ = std::thread::Builder::new()
                            .name("abci-conn".into())
                            .spawn(move || {
                                if let Err(e) = serve_connection(stream, &backend) {
                                    debug!("abci connection closed: {e}");
                                }
                            });
                    }
                    Err(e) => warn!("abci accept failed: {e}"),
                }
            }
        })?;
    Ok(AbciServer {
        addr,
        stop,
        accept: Some(accept),
    })
}

fn serve_connection<B: AbciBackend>(stream: TcpStream, backend: &Mutex<B>) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    while let Some(frame) = read_frame(&mut reader)? {
        let response = match Request::from_frame(&frame) {
            Ok(req) => {
                let mut b = backend.lock().expect("backend lock");
                handle_request(&mut *b, req)
            }
            Err(e) => Response::Error {
                opcode: frame.opcode,
                error: AbciError::ContractViolation(e.to_string()),
            },
        };
        write_frame(&mut writer, &response.to_frame())?;
    }
    Ok(())
}

/// Client proxy implementing [`AbciBackend`] over one connection.
pub struct AbciClient {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

/// Connects to an ABCI server, retrying for up to `timeout`.
pub fn connect_abci(addr: SocketAddr, timeout: Duration) -> io::Result<AbciClient> {
    let stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_nodelay(true)?;
    Ok(AbciClient {
        reader: BufReader::new(stream.try_clone()?),
        writer: BufWriter::new(stream),
    })
}

impl AbciClient {
    pub fn call(&mut self, req: &Request) -> Result<Response, AbciError> {
        let unavailable = |e: &dyn std::fmt::Display| AbciError::BackendUnavailable(e.to_string());
        write_frame(&mut self.writer, &req.to_frame()).map_err(|e| unavailable(&e))?;
        let frame = read_frame(&mut self.reader)
            .map_err(|e| unavailable(&e))?
            .ok_or_else(|| unavailable(&"connection closed"))?;
        let resp = Response::from_frame(&frame).map_err(|e| unavailable(&e))?;
        match resp {
            Response::Error { error, .. } => Err(error),
            r if r.opcode() == (req.opcode() | relchain_core::abci::RESPONSE_BIT) => Ok(r),
            r => Err(AbciError::BackendUnavailable(format!(
                "response {:#04x} to request {:#04x}",
                r.opcode(),
                req.opcode()
            ))),
        }
    }
}

fn unexpected(r: Response) -> AbciError {
    AbciError::BackendUnavailable(format!("unexpected response {r:?}"))
}

impl AbciBackend for AbciClient {
    fn begin_block(&mut self, header: &BlockHeader) -> Result<DbTxHandle, AbciError> {
        match self.call(&Request::BeginBlock(header.clone()))? {
            Response::BeginBlock(h) => Ok(h),
            r => Err(unexpected(r)),
        }
    }

    fn deliver_tx(&mut self, handle: DbTxHandle, tx: &[u8]) -> Result<Vec<ExecStatus>, AbciError> {
        match self.call(&Request::DeliverTx {
            handle,
            tx: tx.to_vec(),
        })? {
            Response::DeliverTx(s) => Ok(s),
            r => Err(unexpected(r)),
        }
    }

    fn end_block(&mut self, handle: DbTxHandle) -> Result<(), AbciError> {
        match self.call(&Request::EndBlock(handle))? {
            Response::EndBlock => Ok(()),
            r => Err(unexpected(r)),
        }
    }

    fn commit(&mut self, handle: DbTxHandle, statuses: &[ExecStatus]) -> Result<Digest, AbciError> {
        match self.call(&Request::Commit {
            handle,
            statuses: statuses.to_vec(),
        })? {
            Response::Commit(d) => Ok(d),
            r => Err(unexpected(r)),
        }
    }

    fn check_tx(&mut self, tx: &[u8]) -> Result<CheckResult, AbciError> {
        match self.call(&Request::CheckTx(tx.to_vec()))? {
            Response::CheckTx(c) => Ok(c),
            r => Err(unexpected(r)),
        }
    }

    fn query(&mut self, request: &str) -> Result<QueryResult, QueryError> {
        match self.call(&Request::Query(request.to_string()))? {
            Response::Query(q) => q,
            r => Err(unexpected(r).into()),
        }
    }
}

/// A dedicated query connection, shareable between threads.
pub struct SocketQuery(Mutex<AbciClient>);

impl SocketQuery {
    pub fn new(client: AbciClient) -> Self {
        Self(Mutex::new(client))
    }
}

impl QueryService for SocketQuery {
    fn query(&self, text: &str) -> Result<QueryResult, QueryError> {
        self.0.lock().expect("query connection").query(text)
    }
}
