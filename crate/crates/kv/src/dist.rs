//! Partitions, the cluster that routes to them, and the commit coordinator.
//!
//! A transaction whose keys all live on one partition commits with a single
//! `Commit` request. Anything wider runs 2PC from the client thread: a
//! prepare round to every participant, an optional second prepare round for
//! future-key writes that could not be routed up front (and, under 2PL, for
//! write values that depend on futures from other partitions), then the
//! decision.

use crate::error::{AbortReason, TxnError};
use crate::locks::{LockManager, LockRequest, TxnHandle, TxnStamp};
use crate::store::{SnapshotError, Store, VersionedRecord};
use crate::transport::{Request, Response, Slice, Transport, TxnStats};
use crate::txn::{final_writes, resolve_key, Protocol, Txn, TxnContext};
use crate::{occ, tpl};
use lazykv_core::routing::{PartitionId, PartitionMap};
use lazykv_core::serial::State;
use lazykv_core::{Key, ResolvedValues, Value};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub struct Partition {
    pub id: PartitionId,
    pub store: Store,
    pub locks: LockManager,
    occ: bool,
    pub(crate) wound_latches: bool,
    pub(crate) skip_condition_validation: bool,
    clock: Arc<AtomicU64>,
}

impl Partition {
    pub(crate) fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst) + 1
    }

    pub(crate) fn install(&self, writes: impl IntoIterator<Item = (Key, Value)>) {
        for (k, v) in writes {
            let version = self.store.next_version(&k);
            self.store.put(&k, v, version);
        }
    }

    /// Serves one request.
    pub fn handle(&self, req: Request) -> Response {
        match req {
            Request::Get { key } => match self.store.get(&key) {
                Some(VersionedRecord { value, version }) => Response::Value { value, version },
                None => Response::abort(AbortReason::NotFound),
            },
            Request::LockRead { txn, key } => match tpl::lock_read(self, &txn, &key) {
                Ok(VersionedRecord { value, version }) => Response::Value { value, version },
                Err(r) => Response::abort(r),
            },
            Request::LockWrite { txn, key } => match tpl::lock_write(self, &txn, &key) {
                Ok(()) => Response::Ok,
                Err(r) => Response::abort(r),
            },
            Request::IsTrue { txn, key, cond } => match tpl::is_true(self, &txn, &key, &cond) {
                Ok(b) => Response::Bool(b),
                Err(r) => Response::abort(r),
            },
            Request::Commit { txn, slice } => {
                if txn.is_wounded() {
                    self.locks.release_all(&txn);
                    return Response::abort(AbortReason::Wounded);
                }
                if self.occ {
                    occ::commit_local(self, &txn, &slice)
                } else {
                    tpl::commit_local(self, &txn, &slice)
                }
            }
            Request::Prepare { txn, slice } => {
                let prepared = if self.occ {
                    occ::prepare(self, &txn, &slice).map(|rvalues| (rvalues, Vec::new()))
                } else {
                    tpl::prepare(self, &txn, &slice).map(|p| (p.rvalues, p.pending))
                };
                match prepared {
                    Ok((rvalues, pending)) => Response::Prepared { rvalues, pending },
                    Err((reason, rvalues)) => Response::Aborted { reason, rvalues },
                }
            }
            Request::PrepareWrites { txn, mut writes } => {
                writes.sort_by(|a, b| a.0.cmp(&b.0));
                for (key, value) in writes {
                    let got = match value {
                        None => self.locks.acquire(&txn, &key, LockRequest::Write, self.wound_latches),
                        Some(v) => self.locks.acquire_write_value(&txn, &key, v),
                    };
                    if got.is_err() {
                        self.locks.release_all(&txn);
                        return Response::abort(AbortReason::Wounded);
                    }
                }
                Response::Ok
            }
            Request::Decide { txn, writes } => {
                if let Some(writes) = writes {
                    self.install(writes);
                }
                self.locks.release_all(&txn);
                Response::Ok
            }
            Request::Release { txn } => {
                self.locks.release_all(&txn);
                Response::Ok
            }
        }
    }
}

pub struct Cluster {
    protocol: Protocol,
    map: PartitionMap,
    partitions: Vec<Partition>,
    transport: Transport,
    clock: Arc<AtomicU64>,
}

pub(crate) type CommitResult = Result<(ResolvedValues, u64), (AbortReason, ResolvedValues)>;

impl Cluster {
    pub fn new(protocol: Protocol, map: PartitionMap) -> Self {
        Self::build(protocol, map, Duration::ZERO, false)
    }

    /// A single-partition cluster.
    pub fn centralized(protocol: Protocol) -> Self {
        Self::new(protocol, PartitionMap::Hash { partitions: 1 })
    }

    pub fn with_latency(protocol: Protocol, map: PartitionMap, latency: Duration) -> Self {
        Self::build(protocol, map, latency, false)
    }

    /// An OCC cluster that never re-checks conditions at commit. It is
    /// deliberately incorrect and exists so that correctness oracles can be
    /// shown to catch the bug.
    #[doc(hidden)]
    pub fn without_condition_validation(protocol: Protocol, map: PartitionMap) -> Self {
        Self::build(protocol, map, Duration::ZERO, true)
    }

    fn build(protocol: Protocol, map: PartitionMap, latency: Duration, skip: bool) -> Self {
        let clock = Arc::new(AtomicU64::new(0));
        let n = map.partitions();
        let partitions = (0..n)
            .map(|id| Partition {
                id,
                store: Store::new(),
                locks: LockManager::new(),
                occ: protocol.is_occ(),
                // A single partition latches in sorted order and never needs
                // to wound; cross-partition waits can cycle.
                wound_latches: n > 1,
                skip_condition_validation: skip,
                clock: clock.clone(),
            })
            .collect();
        Self { protocol, map, partitions, transport: Transport::new(latency), clock }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn partition_map(&self) -> &PartitionMap {
        &self.map
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn messages_total(&self) -> u64 {
        self.transport.messages_total()
    }

    pub fn route(&self, key: &str) -> Result<PartitionId, TxnError> {
        Ok(self.map.route(key)?)
    }

    fn tick(&self) -> u64 {
        self.clock.fetch_add(1, Ordering::SeqCst) + 1
    }

    /// Current logical time.
    pub fn now(&self) -> u64 {
        self.clock.load(Ordering::SeqCst)
    }

    pub fn begin(&self) -> Txn<'_> {
        let seq = self.tick();
        Txn::new(self, TxnContext::new(TxnHandle::new(seq), seq))
    }

    /// Begins a retry that keeps an earlier attempt's wound-wait priority.
    pub fn begin_with_stamp(&self, stamp: TxnStamp) -> Txn<'_> {
        let seq = self.tick();
        Txn::new(self, TxnContext::new(TxnHandle::new(stamp), seq))
    }

    /// Writes directly, outside any transaction. For loading initial data.
    pub fn load(&self, key: &str, value: impl Into<Value>) -> Result<(), TxnError> {
        let p = self.route(key)?;
        self.partitions[p].store.upsert(key, value.into());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<VersionedRecord> {
        let p = self.map.route(key).ok()?;
        self.partitions[p].store.get(key)
    }

    /// Union of every partition's contents.
    pub fn state(&self) -> State {
        let mut out = State::new();
        for p in &self.partitions {
            out.extend(p.store.state());
        }
        out
    }

    pub fn dump_lock(&self, key: &str) -> Result<String, TxnError> {
        let p = self.route(key)?;
        Ok(self.partitions[p].locks.dump(key))
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), SnapshotError> {
        let merged = Store::new();
        for p in &self.partitions {
            for (k, rec) in p.store.entries() {
                merged.put(&k, rec.value, rec.version);
            }
        }
        merged.save_snapshot(path)
    }

    /// Loads a snapshot, routing every record to its partition.
    pub fn load_snapshot(&self, path: &Path) -> Result<usize, SnapshotError> {
        let loaded = Store::load_snapshot(path)?;
        let entries = loaded.entries();
        for (k, rec) in &entries {
            let p = self.map.route(k).map_err(|_| SnapshotError::Corrupt("unroutable key"))?;
            self.partitions[p].store.put(k, rec.value.clone(), rec.version);
        }
        Ok(entries.len())
    }

    pub(crate) fn call(&self, stats: &mut TxnStats, p: PartitionId, req: Request) -> Response {
        let part = &self.partitions[p];
        self.transport.round_trip(stats, || part.handle(req))
    }

    fn slice_for(&self, ctx: &TxnContext, p: PartitionId, fw: bool, conds: bool) -> Slice {
        let here = |k: &str| self.map.route(k) == Ok(p);
        Slice {
            rset: ctx.rset.iter().filter(|(k, _)| here(k)).map(|(k, v)| (k.clone(), *v)).collect(),
            wset: ctx.wset.iter().filter(|(k, _)| here(k)).map(|(k, e)| (k.clone(), e.clone())).collect(),
            frset: ctx.frset.iter().filter(|h| here(&h.key)).cloned().collect(),
            fwset: if fw {
                ctx.fwset
                    .iter()
                    .enumerate()
                    .filter(|(_, (k, _))| self.map.static_partition(k) == Some(p))
                    .map(|(i, (k, v))| (i, k.clone(), v.clone()))
                    .collect()
            } else {
                Vec::new()
            },
            cset: if conds {
                ctx.cset.iter().filter(|(c, _)| c.source_keys().iter().any(|k| here(k))).cloned().collect()
            } else {
                Vec::new()
            },
        }
    }

    pub(crate) fn commit(&self, ctx: &mut TxnContext) -> CommitResult {
        let mut parts: BTreeSet<PartitionId> = ctx.touched.clone();
        let keys = ctx.rset.keys().chain(ctx.wset.keys()).chain(ctx.frset.iter().map(|h| &h.key));
        for k in keys {
            match self.map.route(k) {
                Ok(p) => {
                    parts.insert(p);
                }
                Err(_) => return Err(self.abort_all(ctx, &BTreeSet::new(), AbortReason::Expr, ResolvedValues::new())),
            }
        }
        if ctx.handle.is_wounded() {
            return Err(self.abort_all(ctx, &BTreeSet::new(), AbortReason::Wounded, ResolvedValues::new()));
        }
        let mut all_static = true;
        for (k, _) in &ctx.fwset {
            match self.map.static_partition(k) {
                Some(p) => {
                    parts.insert(p);
                }
                None => all_static = false,
            }
        }

        if all_static && parts.len() <= 1 {
            ctx.stats.prepare_rounds = 0;
            let Some(&p) = parts.first() else {
                return Ok((ResolvedValues::new(), self.tick()));
            };
            let slice = self.slice_for(ctx, p, true, true);
            let req = Request::Commit { txn: ctx.handle.clone(), slice };
            return match self.call(&mut ctx.stats, p, req) {
                Response::Committed { rvalues, commit_seq } => Ok((rvalues, commit_seq)),
                Response::Aborted { reason, rvalues } => Err((reason, rvalues)),
                other => unreachable!("unexpected reply {other:?}"),
            };
        }
        self.two_phase_commit(ctx, parts)
    }

    fn abort_all(
        &self,
        ctx: &mut TxnContext,
        parts: &BTreeSet<PartitionId>,
        reason: AbortReason,
        rv: ResolvedValues,
    ) -> (AbortReason, ResolvedValues) {
        for &p in parts.iter().chain(ctx.touched.clone().iter()).collect::<BTreeSet<_>>() {
            let req = Request::Decide { txn: ctx.handle.clone(), writes: None };
            self.call(&mut ctx.stats, p, req);
        }
        (reason, rv)
    }

    fn two_phase_commit(&self, ctx: &mut TxnContext, mut parts: BTreeSet<PartitionId>) -> CommitResult {
        let occ = self.protocol.is_occ();
        let skip = self.map.can_skip_extra_round(&ctx.fwset);
        ctx.stats.prepare_rounds = 1;

        let mut rv = ResolvedValues::new();
        let mut pending: Vec<Key> = Vec::new();
        for &p in &parts.clone() {
            let slice = self.slice_for(ctx, p, skip, !occ);
            let req = Request::Prepare { txn: ctx.handle.clone(), slice };
            match self.call(&mut ctx.stats, p, req) {
                Response::Prepared { rvalues, pending: more } => {
                    if rv.merge(rvalues).is_err() {
                        return Err(self.abort_all(ctx, &parts, AbortReason::Expr, rv));
                    }
                    pending.extend(more);
                }
                Response::Aborted { reason, rvalues } => {
                    let _ = rv.merge(rvalues);
                    parts.remove(&p);
                    return Err(self.abort_all(ctx, &parts, reason, rv));
                }
                other => unreachable!("unexpected reply {other:?}"),
            }
        }

        if occ && !self.partitions[0].skip_condition_validation {
            if let Err(reason) = occ::validate_conditions(&ctx.cset, &rv) {
                return Err(self.abort_all(ctx, &parts, reason, rv));
            }
        }

        let wset: Vec<(Key, lazykv_core::Expr)> = ctx.wset.iter().map(|(k, e)| (k.clone(), e.clone())).collect();
        let fwset: Vec<_> = ctx.fwset.iter().enumerate().map(|(i, (k, v))| (i, k.clone(), v.clone())).collect();
        let writes = match final_writes(&wset, &fwset, &rv) {
            Ok(w) => w,
            Err(reason) => return Err(self.abort_all(ctx, &parts, reason, rv)),
        };

        let mut round2: BTreeMap<PartitionId, Vec<(Key, Option<Value>)>> = BTreeMap::new();
        let mut late: Vec<Key> = Vec::new();
        if !ctx.fwset.is_empty() && !skip {
            for (_, ke, _) in &fwset {
                match resolve_key(ke, &rv) {
                    Ok(k) => late.push(k),
                    Err(reason) => return Err(self.abort_all(ctx, &parts, reason, rv)),
                }
            }
        }
        late.extend(pending);
        for k in late {
            let Ok(p) = self.map.route(&k) else {
                return Err(self.abort_all(ctx, &parts, AbortReason::Expr, rv));
            };
            let value = if occ { None } else { writes.get(&k).cloned() };
            round2.entry(p).or_default().push((k, value));
        }
        if !round2.is_empty() {
            ctx.stats.prepare_rounds = 2;
            for (p, keys) in round2 {
                parts.insert(p);
                let req = Request::PrepareWrites { txn: ctx.handle.clone(), writes: keys };
                if let Response::Aborted { reason, .. } = self.call(&mut ctx.stats, p, req) {
                    return Err(self.abort_all(ctx, &parts, reason, rv));
                }
            }
        }

        let commit_seq = self.tick();
        let mut by_part: BTreeMap<PartitionId, Vec<(Key, Value)>> = BTreeMap::new();
        for (k, v) in writes {
            // Routability was checked when the keys were prepared.
            if let Ok(p) = self.map.route(&k) {
                by_part.entry(p).or_default().push((k, v));
            }
        }
        for &p in &parts {
            let req = Request::Decide { txn: ctx.handle.clone(), writes: Some(by_part.remove(&p).unwrap_or_default()) };
            self.call(&mut ctx.stats, p, req);
        }
        Ok((rv, commit_seq))
    }
}
