//! Partition-side strict 2PL with condition locks.
//!
//! Every lock call uses wound-wait. Locks taken while the transaction runs
//! (classic reads and writes, is-true conditions) are held until the commit
//! or abort releases them.

use crate::dist::Partition;
use crate::error::AbortReason;
use crate::locks::TxnHandle;
use crate::occ::Abort;
use crate::store::VersionedRecord;
use crate::transport::{Response, Slice};
use crate::txn::{final_writes, resolve_key};
use lazykv_core::{Expr, ExprError, Key, ResolvedValues, Value};
use std::collections::BTreeMap;
use std::sync::Arc;

pub(crate) fn lock_read(part: &Partition, txn: &Arc<TxnHandle>, key: &str) -> Result<VersionedRecord, AbortReason> {
    part.locks.acquire_read(txn, key).map_err(|_| AbortReason::Wounded)?;
    part.store.get(key).ok_or(AbortReason::NotFound)
}

pub(crate) fn lock_write(part: &Partition, txn: &Arc<TxnHandle>, key: &str) -> Result<(), AbortReason> {
    part.locks.acquire_write(txn, key).map_err(|_| AbortReason::Wounded)
}

/// Observes `key` under a read lock, installs `cond` with its current
/// result and drops the plain read lock again unless it was already held.
pub(crate) fn is_true(part: &Partition, txn: &Arc<TxnHandle>, key: &str, cond: &Expr) -> Result<bool, AbortReason> {
    let held = part.locks.holds_any(txn, key);
    let rec = lock_read(part, txn, key)?;
    let rv: ResolvedValues = cond.keys().into_iter().map(|h| (h, rec.value.clone())).collect();
    let result = match cond.resolve(&rv) {
        Ok(Value::Bool(b)) => b,
        _ => return Err(AbortReason::Expr),
    };
    // A transaction already holding the key exclusively needs no condition.
    if part.locks.holds_read(txn, key) {
        part.locks.add_condition(txn, key, cond, result).map_err(|_| AbortReason::Wounded)?;
        if !held {
            part.locks.release_read(txn, key);
        }
    }
    Ok(result)
}

pub(crate) struct Prepared {
    pub rvalues: ResolvedValues,
    /// Write keys whose values need futures from other partitions.
    pub pending: Vec<Key>,
}

/// Reads the future-read keys under read locks, removes the transaction's
/// own conditions, then takes write-value locks in key order for every
/// write whose value is resolvable here.
pub(crate) fn prepare(part: &Partition, txn: &Arc<TxnHandle>, slice: &Slice) -> Result<Prepared, Abort> {
    let fail = |reason, rv| {
        part.locks.release_all(txn);
        (reason, rv)
    };
    let mut by_key: BTreeMap<&str, Vec<_>> = BTreeMap::new();
    for h in &slice.frset {
        by_key.entry(h.key.as_str()).or_default().push(h.clone());
    }
    let mut rv = ResolvedValues::new();
    for (key, handles) in by_key {
        match lock_read(part, txn, key) {
            Ok(rec) => {
                for h in handles {
                    let _ = rv.bind(h, rec.value.clone());
                }
            }
            Err(r) => return Err(fail(r, rv)),
        }
    }

    for (cond, _) in &slice.cset {
        if let Some(key) = cond.source_keys().into_iter().next() {
            part.locks.rem_condition(txn, &key, cond);
        }
    }

    let mut writes: BTreeMap<Key, &Expr> = slice.wset.iter().map(|(k, e)| (k.clone(), e)).collect();
    for (_, kexpr, vexpr) in &slice.fwset {
        match resolve_key(kexpr, &rv) {
            Ok(k) => {
                writes.insert(k, vexpr);
            }
            Err(r) => return Err(fail(r, rv)),
        }
    }
    let mut pending = Vec::new();
    for (key, expr) in writes {
        match expr.resolve(&rv) {
            Ok(v) => {
                if part.locks.acquire_write_value(txn, &key, v).is_err() {
                    return Err(fail(AbortReason::Wounded, rv));
                }
            }
            Err(ExprError::UnboundHandle(_)) => pending.push(key),
            Err(_) => return Err(fail(AbortReason::Expr, rv)),
        }
    }
    Ok(Prepared { rvalues: rv, pending })
}

pub(crate) fn commit_local(part: &Partition, txn: &Arc<TxnHandle>, slice: &Slice) -> Response {
    let prepared = match prepare(part, txn, slice) {
        Ok(p) => p,
        Err((reason, rvalues)) => return Response::Aborted { reason, rvalues },
    };
    let rv = prepared.rvalues;
    let writes = match final_writes(&slice.wset, &slice.fwset, &rv) {
        Ok(w) if prepared.pending.is_empty() => w,
        Ok(_) => {
            part.locks.release_all(txn);
            return Response::Aborted { reason: AbortReason::Expr, rvalues: rv };
        }
        Err(reason) => {
            part.locks.release_all(txn);
            return Response::Aborted { reason, rvalues: rv };
        }
    };
    let commit_seq = part.tick();
    part.install(writes);
    part.locks.release_all(txn);
    Response::Committed { rvalues: rv, commit_seq }
}
