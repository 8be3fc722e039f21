#![allow(dead_code)]

use std::collections::HashSet;
use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use lattice_field::transport::{make_plan, ExchangeBuffers, ExchangePlan, Jitter, Role};
use lattice_field::{InProcHub, Lattice, LatticeSpec, Transport};

/// Runs `f` on every rank of a fresh in-process job and returns the results in rank order.
pub fn on_ranks<R, F>(nranks: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize, &mut dyn Transport) -> R + Sync,
{
    let endpoints = InProcHub::endpoints(nranks);
    thread::scope(|s| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .enumerate()
            .map(|(rank, mut ep)| {
                let f = &f;
                s.spawn(move || f(rank, &mut ep))
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

pub fn lattices(spec: &LatticeSpec) -> Vec<Arc<Lattice>> {
    (0..spec.nranks)
        .map(|r| Arc::new(Lattice::build(spec.clone(), r).unwrap()))
        .collect()
}

/// Unordered rank pairs that exchange at least one site.
pub fn overlapping_pairs(lattices: &[Arc<Lattice>]) -> usize {
    lattices
        .iter()
        .map(|l| l.overlapping_peers().iter().filter(|&&p| p > l.rank()).count())
        .sum()
}

/// Abstract operation of one rank under rendezvous semantics.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Op {
    Send(usize),
    Recv(usize),
}

pub fn ops(plan: &ExchangePlan) -> Vec<Op> {
    plan.steps()
        .iter()
        .flat_map(|s| match s.role {
            Role::SendFirst => [Op::Send(s.peer), Op::Recv(s.peer)],
            Role::ReceiveFirst => [Op::Recv(s.peer), Op::Send(s.peer)],
        })
        .collect()
}

/// Explores every interleaving in which a send completes together with the
/// matching receive. Returns false if some reachable state is stuck.
pub fn never_deadlocks(programs: &[Vec<Op>]) -> bool {
    let n = programs.len();
    let mut seen = HashSet::new();
    let mut stack = vec![vec![0usize; n]];
    while let Some(pc) = stack.pop() {
        if !seen.insert(pc.clone()) {
            continue;
        }
        let finished = (0..n).all(|r| pc[r] == programs[r].len());
        let mut moved = false;
        for r in 0..n {
            if let Some(&Op::Send(p)) = programs[r].get(pc[r]) {
                if programs[p].get(pc[p]) == Some(&Op::Recv(r)) {
                    let mut next = pc.clone();
                    next[r] += 1;
                    next[p] += 1;
                    stack.push(next);
                    moved = true;
                }
            }
        }
        if !finished && !moved {
            return false;
        }
    }
    true
}

struct Tokens {
    rank: usize,
    scratch: Vec<Vec<u8>>,
}

impl ExchangeBuffers for Tokens {
    fn gather(&mut self, peer: usize, out: &mut Vec<u8>) -> bool {
        out.extend_from_slice(&[self.rank as u8, peer as u8]);
        true
    }

    fn destination(&mut self, peer: usize) -> Option<&mut [u8]> {
        Some(&mut self.scratch[peer])
    }
}

/// Executes the plans for `peers` on rendezvous endpoints with jitter; false on timeout.
pub fn run_plans(peers: Vec<Vec<usize>>, seed: u64, timeout: Duration) -> bool {
    let n = peers.len();
    let (done_tx, done_rx) = mpsc::channel();
    for (rank, ep) in InProcHub::rendezvous_endpoints(n).into_iter().enumerate() {
        let my_peers = peers[rank].clone();
        let done = done_tx.clone();
        thread::spawn(move || {
            let mut ep = Jitter::new(ep, seed ^ rank as u64, Duration::from_micros(300));
            let plan = make_plan(rank, my_peers.iter().copied());
            let mut bufs = Tokens {
                rank,
                scratch: vec![vec![0; 2]; n],
            };
            plan.execute(&mut ep, &mut bufs).unwrap();
            for &p in &my_peers {
                assert_eq!(bufs.scratch[p], vec![p as u8, rank as u8]);
            }
            let _ = done.send(rank);
        });
    }
    drop(done_tx);
    (0..n).all(|_| done_rx.recv_timeout(timeout).is_ok())
}
