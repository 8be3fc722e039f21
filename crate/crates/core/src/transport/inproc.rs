use std::sync::mpsc::{self, Receiver, Sender, SyncSender};
use std::sync::Mutex;

use super::{check_peer, expect_len, Result, Transport, TransportError};

enum Outbox {
    Queued(Sender<Vec<u8>>),
    Rendezvous(SyncSender<Vec<u8>>),
}

impl Outbox {
    fn send(&self, msg: Vec<u8>) -> std::result::Result<(), mpsc::SendError<Vec<u8>>> {
        match self {
            Outbox::Queued(tx) => tx.send(msg),
            Outbox::Rendezvous(tx) => tx.send(msg),
        }
    }
}

struct Parts {
    outboxes: Vec<Option<Outbox>>,
    inboxes: Vec<Option<Receiver<Vec<u8>>>>,
}

/// Shared switchboard that hands out one endpoint per rank.
///
/// Every ordered pair of ranks gets its own channel. In queued mode `send`
/// returns as soon as the message is enqueued; in rendezvous mode it blocks
/// until the receiver takes the message, which is the strictest setting for
/// exercising deadlock freedom.
pub struct InProcHub {
    nranks: usize,
    parts: Mutex<Vec<Option<Parts>>>,
}

impl InProcHub {
    pub fn new(nranks: usize) -> Self {
        Self::build(nranks, false)
    }

    pub fn rendezvous(nranks: usize) -> Self {
        Self::build(nranks, true)
    }

    fn build(nranks: usize, rendezvous: bool) -> Self {
        let mut parts: Vec<Parts> = (0..nranks)
            .map(|_| Parts {
                outboxes: (0..nranks).map(|_| None).collect(),
                inboxes: (0..nranks).map(|_| None).collect(),
            })
            .collect();
        for from in 0..nranks {
            for to in 0..nranks {
                if from == to {
                    continue;
                }
                let (outbox, inbox) = if rendezvous {
                    let (tx, rx) = mpsc::sync_channel(0);
                    (Outbox::Rendezvous(tx), rx)
                } else {
                    let (tx, rx) = mpsc::channel();
                    (Outbox::Queued(tx), rx)
                };
                parts[from].outboxes[to] = Some(outbox);
                parts[to].inboxes[from] = Some(inbox);
            }
        }
        InProcHub {
            nranks,
            parts: Mutex::new(parts.into_iter().map(Some).collect()),
        }
    }

    pub fn nranks(&self) -> usize {
        self.nranks
    }

    /// Claims the endpoint of `rank`. Each rank can be claimed once.
    pub fn endpoint(&self, rank: usize) -> Result<InProcEndpoint> {
        if rank >= self.nranks {
            return Err(TransportError::Config(format!(
                "rank {rank} out of range for {} ranks",
                self.nranks
            )));
        }
        let mut parts = self.parts.lock().expect("hub lock poisoned");
        let parts = parts[rank]
            .take()
            .ok_or_else(|| TransportError::Config(format!("rank {rank} already claimed")))?;
        Ok(InProcEndpoint {
            rank,
            nranks: self.nranks,
            outboxes: parts.outboxes,
            inboxes: parts.inboxes,
        })
    }

    /// All endpoints of a fresh queued hub, in rank order.
    pub fn endpoints(nranks: usize) -> Vec<InProcEndpoint> {
        let hub = InProcHub::new(nranks);
        (0..nranks).map(|r| hub.endpoint(r).unwrap()).collect()
    }

    pub fn rendezvous_endpoints(nranks: usize) -> Vec<InProcEndpoint> {
        let hub = InProcHub::rendezvous(nranks);
        (0..nranks).map(|r| hub.endpoint(r).unwrap()).collect()
    }
}

pub struct InProcEndpoint {
    rank: usize,
    nranks: usize,
    outboxes: Vec<Option<Outbox>>,
    inboxes: Vec<Option<Receiver<Vec<u8>>>>,
}

impl InProcEndpoint {
    fn inbox(&self, from: usize) -> Result<&Receiver<Vec<u8>>> {
        check_peer(self.rank, self.nranks, from)?;
        self.inboxes[from]
            .as_ref()
            .ok_or_else(|| TransportError::Connection("endpoint is closed".into()))
    }
}

impl Transport for InProcEndpoint {
    fn rank(&self) -> usize {
        self.rank
    }

    fn nranks(&self) -> usize {
        self.nranks
    }

    fn send(&mut self, to: usize, payload: &[u8]) -> Result<()> {
        check_peer(self.rank, self.nranks, to)?;
        let outbox = self.outboxes[to]
            .as_ref()
            .ok_or_else(|| TransportError::Connection("endpoint is closed".into()))?;
        outbox
            .send(payload.to_vec())
            .map_err(|_| TransportError::Connection(format!("rank {to} has closed")))
    }

    fn recv(&mut self, from: usize) -> Result<Vec<u8>> {
        self.inbox(from)?
            .recv()
            .map_err(|_| TransportError::Connection(format!("rank {from} has closed")))
    }

    fn recv_into(&mut self, from: usize, buf: &mut [u8]) -> Result<()> {
        let msg = self.recv(from)?;
        expect_len(from, msg.len(), buf.len())?;
        buf.copy_from_slice(&msg);
        Ok(())
    }

    fn close(&mut self) {
        self.outboxes.iter_mut().for_each(|o| *o = None);
        self.inboxes.iter_mut().for_each(|i| *i = None);
    }
}
