//! Partition-side OCC: commit latching, validation and installation.
//!
//! Classic and LSD transactions share this path; a classic transaction is
//! just one with an empty frset and cset whose writes are constants.

use crate::dist::Partition;
use crate::error::AbortReason;
use crate::locks::{LockRequest, TxnHandle};
use crate::transport::{Response, Slice};
use crate::txn::{final_writes, resolve_key};
use lazykv_core::{Expr, Key, ResolvedValues, Value};
use std::collections::BTreeSet;
use std::sync::Arc;

pub(crate) type Abort = (AbortReason, ResolvedValues);

fn bail(part: &Partition, txn: &TxnHandle, reason: AbortReason, rv: ResolvedValues) -> Abort {
    part.locks.release_all(txn);
    (reason, rv)
}

/// Latches the slice's write and future-read keys in sorted order, reads the
/// futures, latches the future-write keys resolvable here and validates the
/// read set. On success the latches stay held.
pub(crate) fn prepare(part: &Partition, txn: &Arc<TxnHandle>, slice: &Slice) -> Result<ResolvedValues, Abort> {
    let wound = part.wound_latches;
    let mut hint: BTreeSet<Key> = BTreeSet::new();
    'attempt: loop {
        let mut latched: BTreeSet<Key> = slice.wset.iter().map(|(k, _)| k.clone()).collect();
        latched.extend(slice.frset.iter().map(|h| h.key.clone()));
        latched.extend(hint.iter().cloned());
        for k in &latched {
            if part.locks.acquire(txn, k, LockRequest::Write, wound).is_err() {
                return Err(bail(part, txn, AbortReason::Wounded, ResolvedValues::new()));
            }
        }

        let mut rv = ResolvedValues::new();
        for h in &slice.frset {
            match part.store.get(&h.key) {
                Some(rec) => {
                    let _ = rv.bind(h.clone(), rec.value);
                }
                None => return Err(bail(part, txn, AbortReason::NotFound, rv)),
            }
        }

        let mut fresh = BTreeSet::new();
        for (_, kexpr, _) in &slice.fwset {
            match resolve_key(kexpr, &rv) {
                Ok(k) if !latched.contains(&k) => {
                    fresh.insert(k);
                }
                Ok(_) => {}
                Err(r) => return Err(bail(part, txn, r, rv)),
            }
        }
        for k in fresh {
            let behind = latched.last().is_some_and(|max| k < *max);
            let got = if behind {
                part.locks.try_acquire(txn, &k, LockRequest::Write)
            } else {
                part.locks.acquire(txn, &k, LockRequest::Write, wound).map(|()| true)
            };
            match got {
                Ok(true) => {
                    latched.insert(k);
                }
                Ok(false) => {
                    // Out of order and contended: start over with the key in
                    // the initial sorted pass.
                    part.locks.release_all(txn);
                    hint.insert(k);
                    std::thread::yield_now();
                    continue 'attempt;
                }
                Err(_) => return Err(bail(part, txn, AbortReason::Wounded, rv)),
            }
        }

        for (k, version) in &slice.rset {
            if part.store.version(k) != Some(*version) || part.locks.write_held_by_other(k, txn.stamp()) {
                return Err(bail(part, txn, AbortReason::StaleRead, rv));
            }
        }
        return Ok(rv);
    }
}

pub(crate) fn validate_conditions(cset: &[(Expr, bool)], rv: &ResolvedValues) -> Result<(), AbortReason> {
    for (cond, expected) in cset {
        match cond.resolve(rv) {
            Ok(Value::Bool(b)) if b == *expected => {}
            _ => return Err(AbortReason::ConditionInvalidated),
        }
    }
    Ok(())
}

pub(crate) fn commit_local(part: &Partition, txn: &Arc<TxnHandle>, slice: &Slice) -> Response {
    let rv = match prepare(part, txn, slice) {
        Ok(rv) => rv,
        Err((reason, rvalues)) => return Response::Aborted { reason, rvalues },
    };
    if !part.skip_condition_validation {
        if let Err(reason) = validate_conditions(&slice.cset, &rv) {
            part.locks.release_all(txn);
            return Response::Aborted { reason, rvalues: rv };
        }
    }
    let writes = match final_writes(&slice.wset, &slice.fwset, &rv) {
        Ok(w) => w,
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
