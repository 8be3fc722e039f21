use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::{Result, Transport};
use crate::lattice::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Send,
    Recv,
    /// Receive written directly into a caller buffer starting at `dest`.
    RecvInto { dest: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub kind: EventKind,
    pub peer: usize,
    pub len: usize,
}

/// Counters shared between an [`Instrumented`] endpoint and its observers.
#[derive(Debug, Default)]
pub struct TransportStats {
    sends: AtomicUsize,
    recvs: AtomicUsize,
    in_send: AtomicUsize,
    in_recv: AtomicUsize,
    max_in_send: AtomicUsize,
    max_in_recv: AtomicUsize,
    events: Mutex<Vec<Event>>,
}

impl TransportStats {
    pub fn sends(&self) -> usize {
        self.sends.load(Ordering::SeqCst)
    }

    pub fn recvs(&self) -> usize {
        self.recvs.load(Ordering::SeqCst)
    }

    /// Highest number of sends in flight at once.
    pub fn max_concurrent_sends(&self) -> usize {
        self.max_in_send.load(Ordering::SeqCst)
    }

    pub fn max_concurrent_recvs(&self) -> usize {
        self.max_in_recv.load(Ordering::SeqCst)
    }

    pub fn events(&self) -> Vec<Event> {
        self.events.lock().unwrap().clone()
    }

    /// Messages sent, by destination.
    pub fn sends_by_peer(&self) -> BTreeMap<usize, usize> {
        let mut out = BTreeMap::new();
        for e in self.events.lock().unwrap().iter() {
            if e.kind == EventKind::Send {
                *out.entry(e.peer).or_default() += 1;
            }
        }
        out
    }

    pub fn reset(&self) {
        self.sends.store(0, Ordering::SeqCst);
        self.recvs.store(0, Ordering::SeqCst);
        self.max_in_send.store(0, Ordering::SeqCst);
        self.max_in_recv.store(0, Ordering::SeqCst);
        self.events.lock().unwrap().clear();
    }

    fn enter(current: &AtomicUsize, max: &AtomicUsize) {
        let now = current.fetch_add(1, Ordering::SeqCst) + 1;
        max.fetch_max(now, Ordering::SeqCst);
    }

    fn record(&self, kind: EventKind, peer: usize, len: usize) {
        self.events.lock().unwrap().push(Event { kind, peer, len });
    }
}

/// Wraps a transport and counts every operation.
pub struct Instrumented<T> {
    inner: T,
    stats: Arc<TransportStats>,
}

impl<T: Transport> Instrumented<T> {
    pub fn new(inner: T) -> Self {
        Instrumented {
            inner,
            stats: Arc::default(),
        }
    }

    pub fn stats(&self) -> Arc<TransportStats> {
        Arc::clone(&self.stats)
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Instrumented<T> {
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn nranks(&self) -> usize {
        self.inner.nranks()
    }

    fn send(&mut self, to: usize, payload: &[u8]) -> Result<()> {
        let s = &self.stats;
        TransportStats::enter(&s.in_send, &s.max_in_send);
        let r = self.inner.send(to, payload);
        s.in_send.fetch_sub(1, Ordering::SeqCst);
        if r.is_ok() {
            s.sends.fetch_add(1, Ordering::SeqCst);
            s.record(EventKind::Send, to, payload.len());
        }
        r
    }

    fn recv(&mut self, from: usize) -> Result<Vec<u8>> {
        let s = &self.stats;
        TransportStats::enter(&s.in_recv, &s.max_in_recv);
        let r = self.inner.recv(from);
        s.in_recv.fetch_sub(1, Ordering::SeqCst);
        if let Ok(msg) = &r {
            s.recvs.fetch_add(1, Ordering::SeqCst);
            s.record(EventKind::Recv, from, msg.len());
        }
        r
    }

    fn recv_into(&mut self, from: usize, buf: &mut [u8]) -> Result<()> {
        let s = &self.stats;
        TransportStats::enter(&s.in_recv, &s.max_in_recv);
        let dest = buf.as_ptr() as usize;
        let r = self.inner.recv_into(from, buf);
        s.in_recv.fetch_sub(1, Ordering::SeqCst);
        if r.is_ok() {
            s.recvs.fetch_add(1, Ordering::SeqCst);
            s.record(EventKind::RecvInto { dest }, from, buf.len());
        }
        r
    }

    fn close(&mut self) {
        self.inner.close()
    }
}

/// Inserts a random pause before every operation to shake up scheduling.
pub struct Jitter<T> {
    inner: T,
    rng: RngStream,
    max_pause: Duration,
}

impl<T: Transport> Jitter<T> {
    pub fn new(inner: T, seed: u64, max_pause: Duration) -> Self {
        Jitter {
            inner,
            rng: RngStream::from_seed(seed),
            max_pause,
        }
    }

    fn pause(&mut self) {
        let u = self.rng.uniform();
        if u < 0.3 {
            thread::yield_now();
        } else if u < 0.6 {
            thread::sleep(self.max_pause.mul_f64(self.rng.uniform()));
        }
    }
}

impl<T: Transport> Transport for Jitter<T> {
    fn rank(&self) -> usize {
        self.inner.rank()
    }

    fn nranks(&self) -> usize {
        self.inner.nranks()
    }

    fn send(&mut self, to: usize, payload: &[u8]) -> Result<()> {
        self.pause();
        self.inner.send(to, payload)
    }

    fn recv(&mut self, from: usize) -> Result<Vec<u8>> {
        self.pause();
        self.inner.recv(from)
    }

    fn recv_into(&mut self, from: usize, buf: &mut [u8]) -> Result<()> {
        self.pause();
        self.inner.recv_into(from, buf)
    }

    fn close(&mut self) {
        self.inner.close()
    }
}
