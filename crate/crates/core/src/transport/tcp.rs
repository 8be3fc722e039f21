//! TCP backend.
//!
//! Rank 0 doubles as the coordinator. Every other rank binds its own
//! listener, connects to the coordinator and registers:
//!
//! ```text
//! worker -> coordinator   "LFTX" | u32 version | u32 rank | u32 len | "host:port"
//! coordinator -> worker    u32 nranks | nranks x (u32 len | "host:port")
//! ```
//!
//! The registration connection stays open as the link between rank 0 and
//! that worker. Workers then connect to every lower nonzero rank, sending
//! `"LFTX" | u32 version | u32 rank`, and accept one connection from every
//! higher rank. All integers are little-endian.
//!
//! Established links carry frames of `u64 length | payload`.

use std::io::{self, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::{Duration, Instant};

use super::{check_peer, expect_len, Result, Transport, TransportError};

pub const MAGIC: &[u8; 4] = b"LFTX";
pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(30);

/// Largest frame accepted from the wire.
const MAX_FRAME: u64 = 1 << 36;
const MAX_ADDR_LEN: u32 = 1024;
const POLL_INTERVAL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone)]
pub struct TcpConfig {
    /// `host:port` of rank 0.
    pub coordinator: String,
    /// Port this rank listens on for peers. 0 picks a free port.
    pub listen_port: u16,
    pub handshake_timeout: Duration,
}

impl TcpConfig {
    pub fn new(coordinator: impl Into<String>) -> Self {
        TcpConfig {
            coordinator: coordinator.into(),
            listen_port: 0,
            handshake_timeout: DEFAULT_HANDSHAKE_TIMEOUT,
        }
    }
}

pub struct TcpEndpoint {
    rank: usize,
    nranks: usize,
    links: Vec<Option<TcpStream>>,
}

fn conn_err(context: &str, e: io::Error) -> TransportError {
    TransportError::Connection(format!("{context}: {e}"))
}

fn timeout_err(what: &str) -> TransportError {
    TransportError::Connection(format!("timed out waiting for {what}"))
}

fn remaining(deadline: Instant, what: &str) -> Result<Duration> {
    deadline
        .checked_duration_since(Instant::now())
        .filter(|d| !d.is_zero())
        .ok_or_else(|| timeout_err(what))
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_string(r: &mut impl Read) -> Result<String> {
    let len = read_u32(r).map_err(|e| conn_err("reading address", e))?;
    if len > MAX_ADDR_LEN {
        return Err(TransportError::Protocol(format!("address of {len} bytes")));
    }
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)
        .map_err(|e| conn_err("reading address", e))?;
    String::from_utf8(buf).map_err(|_| TransportError::Protocol("address is not UTF-8".into()))
}

fn put_string(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn hello(rank: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(12);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&PROTOCOL_VERSION.to_le_bytes());
    out.extend_from_slice(&(rank as u32).to_le_bytes());
    out
}

/// Reads magic, version and rank.
fn read_hello(r: &mut impl Read) -> Result<usize> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| conn_err("reading handshake", e))?;
    if &magic != MAGIC {
        return Err(TransportError::Protocol(format!("bad handshake magic {magic:02x?}")));
    }
    let version = read_u32(r).map_err(|e| conn_err("reading handshake", e))?;
    if version != PROTOCOL_VERSION {
        return Err(TransportError::Protocol(format!(
            "protocol version {version}, expected {PROTOCOL_VERSION}"
        )));
    }
    Ok(read_u32(r).map_err(|e| conn_err("reading handshake", e))? as usize)
}

fn accept_before(listener: &TcpListener, deadline: Instant, what: &str) -> Result<TcpStream> {
    listener
        .set_nonblocking(true)
        .map_err(|e| conn_err("configuring listener", e))?;
    loop {
        match listener.accept() {
            Ok((stream, _)) => {
                stream
                    .set_nonblocking(false)
                    .map_err(|e| conn_err("configuring stream", e))?;
                stream
                    .set_read_timeout(Some(remaining(deadline, what)?))
                    .map_err(|e| conn_err("configuring stream", e))?;
                return Ok(stream);
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                remaining(deadline, what)?;
                thread::sleep(POLL_INTERVAL);
            }
            Err(e) => return Err(conn_err("accepting", e)),
        }
    }
}

fn resolve(addr: &str) -> Result<Vec<SocketAddr>> {
    let addrs: Vec<SocketAddr> = addr
        .to_socket_addrs()
        .map_err(|e| conn_err(&format!("resolving {addr}"), e))?
        .collect();
    if addrs.is_empty() {
        return Err(TransportError::Connection(format!("{addr} resolves to nothing")));
    }
    Ok(addrs)
}

/// Connects, retrying refused attempts until the deadline.
fn connect_before(addr: &str, deadline: Instant) -> Result<TcpStream> {
    let addrs = resolve(addr)?;
    let what = format!("connection to {addr}");
    loop {
        let mut last = None;
        for a in &addrs {
            let budget = remaining(deadline, &what)?;
            match TcpStream::connect_timeout(a, budget) {
                Ok(s) => {
                    s.set_read_timeout(Some(remaining(deadline, &what)?))
                        .map_err(|e| conn_err("configuring stream", e))?;
                    return Ok(s);
                }
                Err(e) => last = Some(e),
            }
        }
        if Instant::now() >= deadline {
            return Err(conn_err(
                &format!("connecting to {addr}"),
                last.unwrap_or_else(|| io::Error::from(ErrorKind::TimedOut)),
            ));
        }
        thread::sleep(POLL_INTERVAL.max(Duration::from_millis(20)));
    }
}

fn finish_link(s: &TcpStream) -> Result<()> {
    s.set_read_timeout(None)
        .and_then(|_| s.set_nodelay(true))
        .map_err(|e| conn_err("configuring stream", e))
}

impl TcpEndpoint {
    /// Joins the job as `rank`. Rank 0 binds the coordinator address itself.
    pub fn open(rank: usize, nranks: usize, config: &TcpConfig) -> Result<Self> {
        if nranks == 0 || rank >= nranks {
            return Err(TransportError::Config(format!(
                "rank {rank} out of range for {nranks} ranks"
            )));
        }
        if nranks == 1 {
            return Ok(TcpEndpoint {
                rank,
                nranks,
                links: vec![None],
            });
        }
        if rank == 0 {
            let addr = resolve(&config.coordinator)?[0];
            let listener =
                TcpListener::bind(addr).map_err(|e| conn_err(&format!("binding {addr}"), e))?;
            Self::coordinate(listener, nranks, config.handshake_timeout)
        } else {
            Self::join(rank, nranks, config)
        }
    }

    /// Runs rank 0 on an already bound listener.
    pub fn coordinate(listener: TcpListener, nranks: usize, timeout: Duration) -> Result<Self> {
        if nranks == 0 {
            return Err(TransportError::Config("nranks must be at least 1".into()));
        }
        let deadline = Instant::now() + timeout;
        let own = listener
            .local_addr()
            .map_err(|e| conn_err("reading listener address", e))?
            .to_string();
        let mut links: Vec<Option<TcpStream>> = (0..nranks).map(|_| None).collect();
        let mut table = vec![String::new(); nranks];
        table[0] = own;
        for _ in 1..nranks {
            let mut s = accept_before(&listener, deadline, "workers to register")?;
            let rank = read_hello(&mut s)?;
            let addr = read_string(&mut s)?;
            if rank == 0 || rank >= nranks {
                return Err(TransportError::Config(format!(
                    "worker registered as rank {rank} in a job of {nranks}"
                )));
            }
            if links[rank].is_some() {
                return Err(TransportError::Config(format!("rank {rank} registered twice")));
            }
            table[rank] = addr;
            links[rank] = Some(s);
        }
        let mut reply = Vec::new();
        reply.extend_from_slice(&(nranks as u32).to_le_bytes());
        for a in &table {
            put_string(&mut reply, a);
        }
        for s in links.iter_mut().flatten() {
            s.write_all(&reply)
                .map_err(|e| conn_err("sending address table", e))?;
            finish_link(s)?;
        }
        Ok(TcpEndpoint {
            rank: 0,
            nranks,
            links,
        })
    }

    fn join(rank: usize, nranks: usize, config: &TcpConfig) -> Result<Self> {
        let deadline = Instant::now() + config.handshake_timeout;
        let listener = TcpListener::bind(("0.0.0.0", config.listen_port))
            .map_err(|e| conn_err(&format!("binding port {}", config.listen_port), e))?;
        let port = listener
            .local_addr()
            .map_err(|e| conn_err("reading listener address", e))?
            .port();

        let mut coord = connect_before(&config.coordinator, deadline)?;
        let host = coord
            .local_addr()
            .map_err(|e| conn_err("reading local address", e))?
            .ip();
        let advertised = SocketAddr::new(host, port).to_string();
        let mut msg = hello(rank);
        put_string(&mut msg, &advertised);
        coord
            .write_all(&msg)
            .map_err(|e| conn_err("registering with coordinator", e))?;

        let announced = read_u32(&mut coord).map_err(|e| match e.kind() {
            ErrorKind::WouldBlock | ErrorKind::TimedOut => timeout_err("the address table"),
            _ => conn_err("reading address table", e),
        })? as usize;
        if announced != nranks {
            return Err(TransportError::Config(format!(
                "coordinator runs {announced} ranks, this worker expected {nranks}"
            )));
        }
        let mut table = Vec::with_capacity(nranks);
        for _ in 0..nranks {
            table.push(read_string(&mut coord)?);
        }
        finish_link(&coord)?;

        let mut links: Vec<Option<TcpStream>> = (0..nranks).map(|_| None).collect();
        links[0] = Some(coord);
        for (lower, addr) in table.iter().enumerate().take(rank).skip(1) {
            let mut s = connect_before(addr, deadline)?;
            s.write_all(&hello(rank))
                .map_err(|e| conn_err(&format!("greeting rank {lower}"), e))?;
            finish_link(&s)?;
            links[lower] = Some(s);
        }
        for _ in rank + 1..nranks {
            let mut s = accept_before(&listener, deadline, "higher ranks to connect")?;
            let peer = read_hello(&mut s)?;
            if peer <= rank || peer >= nranks || links[peer].is_some() {
                return Err(TransportError::Config(format!(
                    "unexpected peer connection from rank {peer}"
                )));
            }
            finish_link(&s)?;
            links[peer] = Some(s);
        }
        Ok(TcpEndpoint {
            rank,
            nranks,
            links,
        })
    }

    fn link(&mut self, peer: usize) -> Result<&mut TcpStream> {
        check_peer(self.rank, self.nranks, peer)?;
        self.links[peer]
            .as_mut()
            .ok_or_else(|| TransportError::Connection("endpoint is closed".into()))
    }

    fn read_header(&mut self, from: usize) -> Result<u64> {
        let s = self.link(from)?;
        let mut len = [0u8; 8];
        s.read_exact(&mut len).map_err(|e| frame_err(from, e))?;
        let len = u64::from_le_bytes(len);
        if len > MAX_FRAME {
            return Err(TransportError::Protocol(format!(
                "frame of {len} bytes from rank {from}"
            )));
        }
        Ok(len)
    }
}

fn frame_err(peer: usize, e: io::Error) -> TransportError {
    match e.kind() {
        ErrorKind::UnexpectedEof => TransportError::Connection(format!("rank {peer} has closed")),
        _ => conn_err(&format!("link to rank {peer}"), e),
    }
}

impl Transport for TcpEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn nranks(&self) -> usize {
        self.nranks
    }

    fn send(&mut self, to: usize, payload: &[u8]) -> Result<()> {
        let s = self.link(to)?;
        s.write_all(&(payload.len() as u64).to_le_bytes())
            .and_then(|_| s.write_all(payload))
            .map_err(|e| frame_err(to, e))
    }

    fn recv(&mut self, from: usize) -> Result<Vec<u8>> {
        let len = self.read_header(from)?;
        let mut buf = vec![0u8; len as usize];
        self.link(from)?
            .read_exact(&mut buf)
            .map_err(|e| frame_err(from, e))?;
        Ok(buf)
    }

    fn recv_into(&mut self, from: usize, buf: &mut [u8]) -> Result<()> {
        let len = self.read_header(from)?;
        expect_len(from, len as usize, buf.len())?;
        self.link(from)?
            .read_exact(buf)
            .map_err(|e| frame_err(from, e))
    }

    fn close(&mut self) {
        for link in self.links.iter_mut() {
            if let Some(s) = link.take() {
                let _ = s.shutdown(std::net::Shutdown::Both);
            }
        }
    }
}

impl Drop for TcpEndpoint {
    fn drop(&mut self) {
        self.close();
    }
}
