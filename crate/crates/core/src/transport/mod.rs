//! Point-to-point byte messaging between ranks.
//!
//! A [`Transport`] delivers whole payloads between a fixed set of ranks.
//! Messages from one sender to one receiver arrive exactly once and in send
//! order; `send` and `recv` block. Two backends exist: [`InProcHub`] for
//! ranks running as threads of one process and [`TcpEndpoint`] for ranks in
//! separate processes.
//!
//! Halo exchange runs through an [`ExchangePlan`]: every rank visits its
//! overlapping peers in ascending order, and within each pair the lower rank
//! sends first. Every rank's local order then agrees with one global order on
//! pairs, so blocking calls can never wait in a cycle.

mod inproc;
mod instrument;
mod tcp;

pub use inproc::{InProcEndpoint, InProcHub};
pub use instrument::{Event, EventKind, Instrumented, Jitter, TransportStats};
pub use tcp::{TcpConfig, TcpEndpoint, DEFAULT_HANDSHAKE_TIMEOUT, MAGIC, PROTOCOL_VERSION};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("transport configuration error: {0}")]
    Config(String),
    #[error("connection error: {0}")]
    Connection(String),
    #[error("protocol error: {0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, TransportError>;

/// Blocking, ordered, reliable messaging for one rank.
pub trait Transport: Send {
    fn rank(&self) -> usize;

    fn nranks(&self) -> usize;

    fn send(&mut self, to: usize, payload: &[u8]) -> Result<()>;

    /// The oldest undelivered message from `from`.
    fn recv(&mut self, from: usize) -> Result<Vec<u8>>;

    /// Receives one message from `from` straight into `buf`.
    ///
    /// The message must be exactly `buf.len()` bytes long.
    fn recv_into(&mut self, from: usize, buf: &mut [u8]) -> Result<()> {
        let msg = self.recv(from)?;
        expect_len(from, msg.len(), buf.len())?;
        buf.copy_from_slice(&msg);
        Ok(())
    }

    /// Drops all connections. Calling it again does nothing.
    fn close(&mut self);
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn rank(&self) -> usize {
        (**self).rank()
    }
    fn nranks(&self) -> usize {
        (**self).nranks()
    }
    fn send(&mut self, to: usize, payload: &[u8]) -> Result<()> {
        (**self).send(to, payload)
    }
    fn recv(&mut self, from: usize) -> Result<Vec<u8>> {
        (**self).recv(from)
    }
    fn recv_into(&mut self, from: usize, buf: &mut [u8]) -> Result<()> {
        (**self).recv_into(from, buf)
    }
    fn close(&mut self) {
        (**self).close()
    }
}

pub(crate) fn check_peer(rank: usize, nranks: usize, peer: usize) -> Result<()> {
    if peer >= nranks {
        return Err(TransportError::Config(format!(
            "rank {peer} out of range for {nranks} ranks"
        )));
    }
    if peer == rank {
        return Err(TransportError::Config(format!(
            "rank {rank} cannot message itself"
        )));
    }
    Ok(())
}

pub(crate) fn expect_len(from: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(TransportError::Protocol(format!(
            "message from rank {from} is {got} bytes, expected {want}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    SendFirst,
    ReceiveFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Step {
    pub peer: usize,
    pub role: Role,
}

/// Ordered peer visits for one rank's halo exchange.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExchangePlan {
    rank: usize,
    steps: Vec<Step>,
}

/// Peers ascending; the lower rank of each pair sends first.
pub fn make_plan(rank: usize, peers: impl IntoIterator<Item = usize>) -> ExchangePlan {
    let mut peers: Vec<usize> = peers.into_iter().filter(|&p| p != rank).collect();
    peers.sort_unstable();
    peers.dedup();
    let steps = peers
        .into_iter()
        .map(|peer| Step {
            peer,
            role: if rank < peer {
                Role::SendFirst
            } else {
                Role::ReceiveFirst
            },
        })
        .collect();
    ExchangePlan { rank, steps }
}

/// Source and destination buffers for one exchange.
pub trait ExchangeBuffers {
    /// Writes the payload for `peer` into `out`. Returns false when nothing
    /// flows to that peer.
    fn gather(&mut self, peer: usize, out: &mut Vec<u8>) -> bool;

    /// Final resting place of the payload from `peer`, if one is expected.
    fn destination(&mut self, peer: usize) -> Option<&mut [u8]>;
}

impl ExchangePlan {
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Runs every step in order with blocking calls.
    pub fn execute<T, B>(&self, transport: &mut T, buffers: &mut B) -> Result<()>
    where
        T: Transport + ?Sized,
        B: ExchangeBuffers + ?Sized,
    {
        let mut scratch = Vec::new();
        for step in &self.steps {
            match step.role {
                Role::SendFirst => {
                    send_part(transport, buffers, step.peer, &mut scratch)?;
                    recv_part(transport, buffers, step.peer)?;
                }
                Role::ReceiveFirst => {
                    recv_part(transport, buffers, step.peer)?;
                    send_part(transport, buffers, step.peer, &mut scratch)?;
                }
            }
        }
        Ok(())
    }
}

fn send_part<T, B>(t: &mut T, b: &mut B, peer: usize, scratch: &mut Vec<u8>) -> Result<()>
where
    T: Transport + ?Sized,
    B: ExchangeBuffers + ?Sized,
{
    scratch.clear();
    if b.gather(peer, scratch) {
        t.send(peer, scratch)?;
    }
    Ok(())
}

fn recv_part<T, B>(t: &mut T, b: &mut B, peer: usize) -> Result<()>
where
    T: Transport + ?Sized,
    B: ExchangeBuffers + ?Sized,
{
    if let Some(dest) = b.destination(peer) {
        t.recv_into(peer, dest)?;
    }
    Ok(())
}

const BARRIER_ARRIVE: u8 = 0xA1;
const BARRIER_RELEASE: u8 = 0xB2;

/// Blocks until every rank has entered the barrier.
pub fn barrier<T: Transport + ?Sized>(t: &mut T) -> Result<()> {
    let n = t.nranks();
    if n == 1 {
        return Ok(());
    }
    if t.rank() == 0 {
        for p in 1..n {
            expect_token(p, &t.recv(p)?, BARRIER_ARRIVE)?;
        }
        for p in 1..n {
            t.send(p, &[BARRIER_RELEASE])?;
        }
    } else {
        t.send(0, &[BARRIER_ARRIVE])?;
        expect_token(0, &t.recv(0)?, BARRIER_RELEASE)?;
    }
    Ok(())
}

fn expect_token(from: usize, msg: &[u8], token: u8) -> Result<()> {
    if msg != [token] {
        return Err(TransportError::Protocol(format!(
            "rank {from} sent {msg:02x?} where barrier token {token:#04x} was expected"
        )));
    }
    Ok(())
}

/// Global maximum of `value` over all ranks, returned on every rank.
pub fn all_reduce_max<T: Transport + ?Sized>(t: &mut T, value: f64) -> Result<f64> {
    let n = t.nranks();
    if n == 1 {
        return Ok(value);
    }
    if t.rank() == 0 {
        let mut max = value;
        for p in 1..n {
            let mut buf = [0u8; 8];
            t.recv_into(p, &mut buf)?;
            max = max.max(f64::from_le_bytes(buf));
        }
        for p in 1..n {
            t.send(p, &max.to_le_bytes())?;
        }
        Ok(max)
    } else {
        t.send(0, &value.to_le_bytes())?;
        let mut buf = [0u8; 8];
        t.recv_into(0, &mut buf)?;
        Ok(f64::from_le_bytes(buf))
    }
}
