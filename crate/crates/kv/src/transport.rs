//! In-process message schema and transport.
//!
//! Every client/partition exchange is one [`Request`] answered by one
//! [`Response`], counted as two messages. Delivery runs the handler on the
//! caller's thread; the hop in each direction is a scheduling point (a yield,
//! or a sleep when latency is injected) so concurrent clients interleave
//! between messages the way they would on a network.

use crate::error::AbortReason;
use crate::locks::TxnHandle;
use lazykv_core::{Expr, FutureHandle, Key, ResolvedValues, Value};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

/// The part of a transaction's sets that lives on one partition.
#[derive(Clone, Debug, Default)]
pub struct Slice {
    /// Keys read concretely and the versions observed (validated by OCC).
    pub rset: Vec<(Key, u64)>,
    pub wset: Vec<(Key, Expr)>,
    pub frset: Vec<FutureHandle>,
    /// Future-key writes, tagged with their position in the transaction.
    pub fwset: Vec<(usize, Expr, Expr)>,
    /// OCC: conditions to re-check (single-partition commit only).
    /// 2PL: the transaction's own condition entries to remove.
    pub cset: Vec<(Expr, bool)>,
}

#[derive(Clone, Debug)]
pub enum Request {
    /// Unlocked point read.
    Get { key: Key },
    /// Read under a read lock kept until the transaction ends.
    LockRead { txn: Arc<TxnHandle>, key: Key },
    /// Exclusive lock taken at write time.
    LockWrite { txn: Arc<TxnHandle>, key: Key },
    /// Evaluate a one-key condition under a read lock, install it, downgrade.
    IsTrue { txn: Arc<TxnHandle>, key: Key, cond: Expr },
    /// Full commit of a transaction that touches only this partition.
    Commit { txn: Arc<TxnHandle>, slice: Slice },
    /// 2PC first prepare round.
    Prepare { txn: Arc<TxnHandle>, slice: Slice },
    /// 2PC second prepare round: keys only known after merging all votes.
    /// `None` takes an exclusive latch, `Some(v)` a write-value lock.
    PrepareWrites { txn: Arc<TxnHandle>, writes: Vec<(Key, Option<Value>)> },
    /// 2PC decision. `Some` installs the writes, `None` aborts.
    Decide { txn: Arc<TxnHandle>, writes: Option<Vec<(Key, Value)>> },
    /// Drop everything the transaction holds here.
    Release { txn: Arc<TxnHandle> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Response {
    Value { value: Value, version: u64 },
    Bool(bool),
    Ok,
    /// A yes vote: the partition's resolved futures, plus (2PL) the write
    /// keys whose values depend on futures from other partitions.
    Prepared { rvalues: ResolvedValues, pending: Vec<Key> },
    Committed { rvalues: ResolvedValues, commit_seq: u64 },
    /// A no vote or failed request. `rvalues` is advisory.
    Aborted { reason: AbortReason, rvalues: ResolvedValues },
}

impl Response {
    pub(crate) fn abort(reason: AbortReason) -> Response {
        Response::Aborted { reason, rvalues: ResolvedValues::new() }
    }
}

/// Per-transaction communication counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TxnStats {
    pub messages: u64,
    pub is_true_round_trips: u64,
    /// 0 for a local commit, otherwise 1 or 2.
    pub prepare_rounds: u32,
}

#[derive(Debug, Default)]
pub struct Transport {
    latency: Duration,
    messages: AtomicU64,
}

impl Transport {
    pub fn new(latency: Duration) -> Self {
        Self { latency, messages: AtomicU64::new(0) }
    }

    pub fn latency(&self) -> Duration {
        self.latency
    }

    pub fn messages_total(&self) -> u64 {
        self.messages.load(Ordering::Relaxed)
    }

    fn hop(&self) {
        if self.latency.is_zero() {
            thread::yield_now();
        } else {
            thread::sleep(self.latency);
        }
    }

    pub(crate) fn round_trip<R>(&self, stats: &mut TxnStats, handler: impl FnOnce() -> R) -> R {
        self.hop();
        let out = handler();
        self.hop();
        stats.messages += 2;
        self.messages.fetch_add(2, Ordering::Relaxed);
        out
    }
}
