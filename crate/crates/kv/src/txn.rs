//! Transaction contexts and the client-facing API.
//!
//! Futures, writes and conditions are buffered in a [`TxnContext`]; only
//! concrete reads, is-true probes and the commit talk to partitions.

use crate::dist::Cluster;
use crate::error::{AbortReason, TxnError};
use crate::locks::{TxnHandle, TxnStamp};
use crate::transport::{Request, Response, TxnStats};
use lazykv_core::routing::PartitionId;
use lazykv_core::{Expr, FutureHandle, Key, ResolvedValues, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Protocol {
    Occ,
    TwoPl,
    OccLsd,
    TwoPlLsd,
    /// LSD-aware OCC with speculative is-true.
    OccLsdPlus,
}

impl Protocol {
    pub const ALL: [Protocol; 5] = [Protocol::Occ, Protocol::TwoPl, Protocol::OccLsd, Protocol::TwoPlLsd, Protocol::OccLsdPlus];

    pub fn is_occ(self) -> bool {
        matches!(self, Protocol::Occ | Protocol::OccLsd | Protocol::OccLsdPlus)
    }

    pub fn is_lsd(self) -> bool {
        !matches!(self, Protocol::Occ | Protocol::TwoPl)
    }

    pub fn speculates(self) -> bool {
        self == Protocol::OccLsdPlus
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::Occ => "occ",
            Protocol::TwoPl => "2pl",
            Protocol::OccLsd => "occ-lsd",
            Protocol::TwoPlLsd => "2pl-lsd",
            Protocol::OccLsdPlus => "occ-lsd+",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Protocol::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| format!("unknown protocol {s:?}"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Active,
    Committed,
    Aborted,
}

/// Per-transaction sets and bookkeeping.
#[derive(Debug)]
pub struct TxnContext {
    pub(crate) handle: Arc<TxnHandle>,
    pub(crate) status: Status,
    pub(crate) begin_seq: u64,
    pub(crate) commit_seq: Option<u64>,
    next_handle: u32,
    pub(crate) rset: BTreeMap<Key, u64>,
    pub(crate) wset: BTreeMap<Key, Expr>,
    pub(crate) frset: BTreeSet<FutureHandle>,
    pub(crate) fwset: Vec<(Expr, Expr)>,
    pub(crate) cset: Vec<(Expr, bool)>,
    /// Partitions where this transaction holds 2PL locks.
    pub(crate) touched: BTreeSet<PartitionId>,
    pub(crate) stats: TxnStats,
}

impl TxnContext {
    pub(crate) fn new(handle: Arc<TxnHandle>, begin_seq: u64) -> Self {
        Self {
            handle,
            status: Status::Active,
            begin_seq,
            commit_seq: None,
            next_handle: 1,
            rset: BTreeMap::new(),
            wset: BTreeMap::new(),
            frset: BTreeSet::new(),
            fwset: Vec::new(),
            cset: Vec::new(),
            touched: BTreeSet::new(),
            stats: TxnStats::default(),
        }
    }

    pub fn stamp(&self) -> TxnStamp {
        self.handle.stamp()
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn begin_seq(&self) -> u64 {
        self.begin_seq
    }

    /// Logical time of the commit point, once committed.
    pub fn commit_seq(&self) -> Option<u64> {
        self.commit_seq
    }

    pub fn rset(&self) -> &BTreeMap<Key, u64> {
        &self.rset
    }

    pub fn wset(&self) -> &BTreeMap<Key, Expr> {
        &self.wset
    }

    pub fn frset(&self) -> &BTreeSet<FutureHandle> {
        &self.frset
    }

    pub fn fwset(&self) -> &[(Expr, Expr)] {
        &self.fwset
    }

    pub fn cset(&self) -> &[(Expr, bool)] {
        &self.cset
    }

    pub fn stats(&self) -> TxnStats {
        self.stats
    }
}

/// Resolves a key expression to a string key.
pub(crate) fn resolve_key(e: &Expr, rv: &ResolvedValues) -> Result<Key, AbortReason> {
    match e.resolve(rv) {
        Ok(Value::Str(s)) => Ok(s),
        _ => Err(AbortReason::Expr),
    }
}

/// The values a commit installs: the write set, then future-key writes in
/// list order, later entries overriding earlier ones on the same key.
pub(crate) fn final_writes(
    wset: &[(Key, Expr)],
    fwset: &[(usize, Expr, Expr)],
    rv: &ResolvedValues,
) -> Result<BTreeMap<Key, Value>, AbortReason> {
    let mut out = BTreeMap::new();
    for (k, e) in wset {
        out.insert(k.clone(), e.resolve(rv).map_err(|_| AbortReason::Expr)?);
    }
    for (_, ke, ve) in fwset {
        let k = resolve_key(ke, rv)?;
        out.insert(k, ve.resolve(rv).map_err(|_| AbortReason::Expr)?);
    }
    Ok(out)
}

/// A running transaction bound to a cluster. Dropping an active
/// transaction aborts it.
pub struct Txn<'c> {
    cluster: &'c Cluster,
    ctx: TxnContext,
    advisory: ResolvedValues,
}

impl<'c> Txn<'c> {
    pub(crate) fn new(cluster: &'c Cluster, ctx: TxnContext) -> Self {
        Self { cluster, ctx, advisory: ResolvedValues::new() }
    }

    pub fn context(&self) -> &TxnContext {
        &self.ctx
    }

    pub fn protocol(&self) -> Protocol {
        self.cluster.protocol()
    }

    fn ensure_active(&self) -> Result<(), TxnError> {
        if self.ctx.status == Status::Active {
            Ok(())
        } else {
            Err(TxnError::NotActive)
        }
    }

    fn check_handles(&self, e: &Expr) -> Result<(), TxnError> {
        match e.keys().into_iter().find(|h| !self.ctx.frset.contains(h)) {
            Some(h) => Err(TxnError::ForeignHandle(h)),
            None => Ok(()),
        }
    }

    fn fail(&mut self, reason: AbortReason) -> TxnError {
        self.release_locks();
        self.ctx.status = Status::Aborted;
        TxnError::Aborted(reason)
    }

    fn release_locks(&mut self) {
        for p in std::mem::take(&mut self.ctx.touched) {
            let req = Request::Release { txn: self.ctx.handle.clone() };
            self.cluster.call(&mut self.ctx.stats, p, req);
        }
    }

    /// A future for the value of `key`. Purely local. If the transaction
    /// already wrote `key`, the buffered expression is returned instead.
    pub fn read_future(&mut self, key: &str) -> Result<Expr, TxnError> {
        self.ensure_active()?;
        if let Some(e) = self.ctx.wset.get(key) {
            return Ok(e.clone());
        }
        let h = FutureHandle::new(self.ctx.next_handle, key);
        self.ctx.next_handle += 1;
        self.ctx.frset.insert(h.clone());
        Ok(Expr::read(h))
    }

    /// Classic concrete read.
    pub fn read(&mut self, key: &str) -> Result<Value, TxnError> {
        self.ensure_active()?;
        if let Some(e) = self.ctx.wset.get(key).cloned() {
            let mut rv = ResolvedValues::new();
            for h in e.keys() {
                let v = self.fetch(&h.key)?;
                let _ = rv.bind(h, v);
            }
            return e.resolve(&rv).map_err(|_| self.fail(AbortReason::Expr));
        }
        self.fetch(key)
    }

    fn fetch(&mut self, key: &str) -> Result<Value, TxnError> {
        let p = self.cluster.route(key)?;
        let req = if self.protocol().is_occ() {
            Request::Get { key: key.into() }
        } else {
            self.ctx.touched.insert(p);
            Request::LockRead { txn: self.ctx.handle.clone(), key: key.into() }
        };
        match self.cluster.call(&mut self.ctx.stats, p, req) {
            Response::Value { value, version } => {
                self.ctx.rset.entry(key.into()).or_insert(version);
                Ok(value)
            }
            Response::Aborted { reason, .. } => Err(self.fail(reason)),
            other => unreachable!("unexpected reply {other:?}"),
        }
    }

    /// Buffers a write. Under classic 2PL the exclusive lock is taken now.
    pub fn write(&mut self, key: &str, value: impl Into<Expr>) -> Result<(), TxnError> {
        self.ensure_active()?;
        let value = value.into();
        self.check_handles(&value)?;
        let p = self.cluster.route(key)?;
        if self.protocol() == Protocol::TwoPl {
            self.ctx.touched.insert(p);
            let req = Request::LockWrite { txn: self.ctx.handle.clone(), key: key.into() };
            if let Response::Aborted { reason, .. } = self.cluster.call(&mut self.ctx.stats, p, req) {
                return Err(self.fail(reason));
            }
        }
        self.ctx.wset.insert(key.into(), value);
        Ok(())
    }

    /// Buffers a write whose key is itself an expression, resolved at commit.
    pub fn write_future_key(&mut self, key: Expr, value: Expr) -> Result<(), TxnError> {
        self.ensure_active()?;
        self.check_handles(&key)?;
        self.check_handles(&value)?;
        self.ctx.fwset.push((key, value));
        Ok(())
    }

    /// Resolves `key` now by reading the futures it depends on, records the
    /// resolved key's version and returns a future for its value.
    pub fn read_future_key(&mut self, key: &Expr) -> Result<Expr, TxnError> {
        self.ensure_active()?;
        self.check_handles(key)?;
        let mut rv = ResolvedValues::new();
        for h in key.keys() {
            let v = self.fetch(&h.key)?;
            let _ = rv.bind(h, v);
        }
        let resolved = resolve_key(key, &rv).map_err(|r| self.fail(r))?;
        self.fetch(&resolved)?;
        self.read_future(&resolved)
    }

    /// Observes the current truth of `cond` and records it in the condition set.
    pub fn is_true(&mut self, cond: &Expr) -> Result<bool, TxnError> {
        self.ensure_active()?;
        self.check_handles(cond)?;
        let keys = cond.source_keys();
        let result = if keys.is_empty() {
            match cond.resolve(&ResolvedValues::new()) {
                Ok(Value::Bool(b)) => b,
                _ => return Err(self.fail(AbortReason::Expr)),
            }
        } else if self.protocol().is_occ() {
            let mut rv = ResolvedValues::new();
            for key in keys {
                let p = self.cluster.route(&key)?;
                self.ctx.stats.is_true_round_trips += 1;
                match self.cluster.call(&mut self.ctx.stats, p, Request::Get { key: key.clone() }) {
                    Response::Value { value, .. } => {
                        for h in cond.keys().into_iter().filter(|h| h.key == key) {
                            let _ = rv.bind(h, value.clone());
                        }
                    }
                    Response::Aborted { reason, .. } => return Err(self.fail(reason)),
                    other => unreachable!("unexpected reply {other:?}"),
                }
            }
            match cond.resolve(&rv) {
                Ok(Value::Bool(b)) => b,
                _ => return Err(self.fail(AbortReason::Expr)),
            }
        } else {
            if keys.len() > 1 {
                return Err(TxnError::UnsupportedCondition(keys.len()));
            }
            let key = keys.into_iter().next().unwrap_or_default();
            let p = self.cluster.route(&key)?;
            self.ctx.touched.insert(p);
            self.ctx.stats.is_true_round_trips += 1;
            let req = Request::IsTrue { txn: self.ctx.handle.clone(), key, cond: cond.clone() };
            match self.cluster.call(&mut self.ctx.stats, p, req) {
                Response::Bool(b) => b,
                Response::Aborted { reason, .. } => return Err(self.fail(reason)),
                other => unreachable!("unexpected reply {other:?}"),
            }
        };
        self.ctx.cset.push((cond.clone(), result));
        Ok(result)
    }

    /// Assumes `cond` evaluates to `assumed` without contacting storage;
    /// the commit arbitrates. OCC only.
    pub fn is_true_speculative(&mut self, cond: &Expr, assumed: bool) -> Result<bool, TxnError> {
        self.ensure_active()?;
        if !self.protocol().is_occ() {
            return Err(TxnError::Unsupported("speculative is-true"));
        }
        self.check_handles(cond)?;
        self.ctx.cset.push((cond.clone(), assumed));
        Ok(assumed)
    }

    /// Commits, returning the values every future resolved to.
    pub fn commit(&mut self) -> Result<ResolvedValues, TxnError> {
        self.ensure_active()?;
        match self.cluster.commit(&mut self.ctx) {
            Ok((rv, seq)) => {
                self.ctx.status = Status::Committed;
                self.ctx.commit_seq = Some(seq);
                self.ctx.touched.clear();
                Ok(rv)
            }
            Err((reason, rv)) => {
                self.ctx.status = Status::Aborted;
                self.ctx.touched.clear();
                self.advisory = rv;
                Err(TxnError::Aborted(reason))
            }
        }
    }

    /// Futures resolved by a failed commit before it aborted. Advisory only:
    /// they were never validated.
    pub fn advisory_rvalues(&self) -> &ResolvedValues {
        &self.advisory
    }

    /// Aborts at the application's request and returns the matching error.
    pub fn user_abort(&mut self) -> TxnError {
        self.abort();
        TxnError::Aborted(AbortReason::User)
    }

    /// Discards buffered effects and releases any locks. Idempotent.
    pub fn abort(&mut self) {
        if self.ctx.status == Status::Active {
            self.release_locks();
            self.ctx.status = Status::Aborted;
        }
    }
}

impl Drop for Txn<'_> {
    fn drop(&mut self) {
        self.abort();
    }
}
