//! Per-key lock manager with condition locks and wound-wait.
//!
//! Besides plain read (R) and write (W) modes, a key can carry condition
//! entries installed by is-true (read-condition mode) and be held in
//! write-value mode, where the writer declares the value it will install.
//! Compatibility follows [`lazykv_core::matrix`]; value-dependent cells are
//! decided by evaluating each installed condition against the declared value.
//!
//! Conflicts are resolved with wound-wait: an older requester sets the wound
//! flag of every younger transaction blocking it, a younger requester waits.
//! A wounded transaction notices the flag at its next lock call (or while
//! parked, since wounding wakes it) and at commit entry.

use dashmap::DashMap;
use lazykv_core::matrix::{classify_write, compatible, ModeClass};
use lazykv_core::{Expr, Key, Value};
use parking_lot::{Condvar, Mutex, MutexGuard};
use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

/// Begin timestamp; smaller is older.
pub type TxnStamp = u64;

const PARK_TIMEOUT: Duration = Duration::from_millis(5);

static NEXT_MANAGER_ID: AtomicUsize = AtomicUsize::new(0);

/// Shared per-transaction state the lock managers need: identity, the wound
/// flag and the keys held in each manager.
#[derive(Debug)]
pub struct TxnHandle {
    stamp: TxnStamp,
    wounded: AtomicBool,
    waiting_on: Mutex<Option<Arc<KeyLock>>>,
    held: Mutex<BTreeSet<(usize, Key)>>,
}

impl TxnHandle {
    pub fn new(stamp: TxnStamp) -> Arc<Self> {
        Arc::new(Self {
            stamp,
            wounded: AtomicBool::new(false),
            waiting_on: Mutex::new(None),
            held: Mutex::new(BTreeSet::new()),
        })
    }

    pub fn stamp(&self) -> TxnStamp {
        self.stamp
    }

    pub fn is_wounded(&self) -> bool {
        self.wounded.load(Ordering::SeqCst)
    }

    /// Sets the wound flag and returns the lock the victim is parked on, if any.
    fn wound(&self) -> Option<Arc<KeyLock>> {
        self.wounded.store(true, Ordering::SeqCst);
        self.waiting_on.lock().clone()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LockRequest {
    Read,
    Write,
    ReadCondition { cond: Expr, expected: bool },
    WriteValue(Value),
}

impl LockRequest {
    fn label(&self) -> String {
        match self {
            LockRequest::Read => "R".into(),
            LockRequest::Write => "W".into(),
            LockRequest::ReadCondition { cond, expected } => format!("R({cond}={expected})"),
            LockRequest::WriteValue(v) => format!("W({v})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum LockError {
    #[error("wounded by an older transaction")]
    Wounded,
    #[error("add_condition requires holding the key in read mode")]
    NotHoldingRead,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionEntry {
    pub cond: Expr,
    pub expected: bool,
    pub owner: TxnStamp,
}

#[derive(Clone, Debug)]
enum WriterMode {
    Exclusive,
    Value(Value),
}

#[derive(Debug)]
struct Waiter {
    txn: Arc<TxnHandle>,
    ticket: u64,
    req: LockRequest,
}

#[derive(Debug, Default)]
struct LockState {
    readers: Vec<Arc<TxnHandle>>,
    writer: Option<(Arc<TxnHandle>, WriterMode)>,
    conditions: Vec<(ConditionEntry, Arc<TxnHandle>)>,
    queue: VecDeque<Waiter>,
    next_ticket: u64,
}

#[derive(Debug)]
pub struct KeyLock {
    key: Key,
    state: Mutex<LockState>,
    cv: Condvar,
}

enum Held<'a> {
    Read,
    Write,
    WriteValue(&'a Value),
    Condition(&'a Expr, bool),
}

fn column(h: &Held<'_>) -> ModeClass {
    match h {
        Held::Read => ModeClass::R,
        Held::Write => ModeClass::W,
        Held::WriteValue(_) => ModeClass::WSat,
        Held::Condition(..) => ModeClass::RCond,
    }
}

fn conflicts(req: &LockRequest, held: Held<'_>) -> bool {
    let (row, col) = match (req, &held) {
        (LockRequest::Read, h) => (ModeClass::R, column(h)),
        (LockRequest::Write, h) => (ModeClass::W, column(h)),
        (LockRequest::ReadCondition { cond, expected }, Held::WriteValue(v)) => {
            (ModeClass::RCond, classify_write(cond, *expected, v))
        }
        (LockRequest::ReadCondition { .. }, h) => (ModeClass::RCond, column(h)),
        (LockRequest::WriteValue(v), Held::Condition(c, e)) => (classify_write(c, *e, v), ModeClass::RCond),
        (LockRequest::WriteValue(_), h) => (ModeClass::WSat, column(h)),
    };
    !compatible(row, col)
}

fn held_of(req: &LockRequest) -> Held<'_> {
    match req {
        LockRequest::Read => Held::Read,
        LockRequest::Write => Held::Write,
        LockRequest::WriteValue(v) => Held::WriteValue(v),
        LockRequest::ReadCondition { cond, expected } => Held::Condition(cond, *expected),
    }
}

impl LockState {
    fn holds(&self, stamp: TxnStamp) -> bool {
        self.readers.iter().any(|r| r.stamp == stamp) || self.writer.as_ref().is_some_and(|(w, _)| w.stamp == stamp)
    }

    /// Holders of other transactions whose modes conflict with `req`.
    fn blockers(&self, stamp: TxnStamp, req: &LockRequest) -> Vec<Arc<TxnHandle>> {
        let mut out = Vec::new();
        for r in &self.readers {
            if r.stamp != stamp && conflicts(req, Held::Read) {
                out.push(r.clone());
            }
        }
        if let Some((w, mode)) = &self.writer {
            let held = match mode {
                WriterMode::Exclusive => Held::Write,
                WriterMode::Value(v) => Held::WriteValue(v),
            };
            if w.stamp != stamp && conflicts(req, held) {
                out.push(w.clone());
            }
        }
        for (c, owner) in &self.conditions {
            if c.owner != stamp && conflicts(req, Held::Condition(&c.cond, c.expected)) && !out.iter().any(|o| o.stamp == c.owner) {
                out.push(owner.clone());
            }
        }
        out
    }

    /// Earlier, older waiters whose requests conflict with `req`. Younger
    /// waiters hold nothing, so an older request simply passes them.
    fn queued_ahead(&self, stamp: TxnStamp, ticket: Option<u64>, req: &LockRequest) -> Vec<Arc<TxnHandle>> {
        self.queue
            .iter()
            .filter(|w| w.txn.stamp < stamp && ticket.is_none_or(|t| w.ticket < t))
            .filter(|w| conflicts(req, held_of(&w.req)))
            .map(|w| w.txn.clone())
            .collect()
    }

    fn grant(&mut self, txn: &Arc<TxnHandle>, req: &LockRequest) {
        let stamp = txn.stamp;
        let is_writer = self.writer.as_ref().is_some_and(|(w, _)| w.stamp == stamp);
        match req {
            LockRequest::Read => {
                if !is_writer && !self.readers.iter().any(|r| r.stamp == stamp) {
                    self.readers.push(txn.clone());
                }
            }
            LockRequest::Write | LockRequest::WriteValue(_) => {
                self.readers.retain(|r| r.stamp != stamp);
                let mode = match req {
                    LockRequest::WriteValue(v) => WriterMode::Value(v.clone()),
                    _ => WriterMode::Exclusive,
                };
                self.writer = Some((txn.clone(), mode));
            }
            LockRequest::ReadCondition { cond, expected } => self.install_condition(txn, cond, *expected),
        }
    }

    fn install_condition(&mut self, txn: &Arc<TxnHandle>, cond: &Expr, expected: bool) {
        let exists = self.conditions.iter().any(|(c, _)| c.owner == txn.stamp && c.cond == *cond);
        if !exists {
            let entry = ConditionEntry { cond: cond.clone(), expected, owner: txn.stamp };
            self.conditions.push((entry, txn.clone()));
        }
    }

    fn remove_waiter(&mut self, stamp: TxnStamp, ticket: u64) {
        self.queue.retain(|w| !(w.txn.stamp == stamp && w.ticket == ticket));
    }

    fn drop_all(&mut self, stamp: TxnStamp) {
        self.readers.retain(|r| r.stamp != stamp);
        if self.writer.as_ref().is_some_and(|(w, _)| w.stamp == stamp) {
            self.writer = None;
        }
        self.conditions.retain(|(c, _)| c.owner != stamp);
    }
}

/// Snapshot of one key's lock state, for tests and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct LockView {
    pub readers: Vec<TxnStamp>,
    pub writer: Option<TxnStamp>,
    pub write_value: Option<Value>,
    pub conditions: Vec<ConditionEntry>,
    pub waiting: Vec<TxnStamp>,
}

#[derive(Debug)]
pub struct LockManager {
    id: usize,
    table: DashMap<Key, Arc<KeyLock>>,
}

impl Default for LockManager {
    fn default() -> Self {
        Self::new()
    }
}

impl LockManager {
    pub fn new() -> Self {
        Self { id: NEXT_MANAGER_ID.fetch_add(1, Ordering::Relaxed), table: DashMap::new() }
    }

    fn key_lock(&self, key: &str) -> Arc<KeyLock> {
        if let Some(k) = self.table.get(key) {
            return k.clone();
        }
        self.table
            .entry(key.into())
            .or_insert_with(|| Arc::new(KeyLock { key: key.into(), state: Mutex::new(LockState::default()), cv: Condvar::new() }))
            .clone()
    }

    fn note_held(&self, txn: &TxnHandle, key: &str) {
        txn.held.lock().insert((self.id, key.into()));
    }

    /// Blocking acquisition. With `wound` set, younger blockers are wounded;
    /// otherwise the caller only waits (it still aborts if it gets wounded).
    pub fn acquire(&self, txn: &Arc<TxnHandle>, key: &str, req: LockRequest, wound: bool) -> Result<(), LockError> {
        if txn.is_wounded() {
            return Err(LockError::Wounded);
        }
        let kl = self.key_lock(key);
        let mut st = kl.state.lock();
        let upgrade = st.holds(txn.stamp);
        if st.blockers(txn.stamp, &req).is_empty() && (upgrade || st.queued_ahead(txn.stamp, None, &req).is_empty()) {
            st.grant(txn, &req);
            drop(st);
            self.note_held(txn, key);
            return Ok(());
        }

        let ticket = st.next_ticket;
        st.next_ticket += 1;
        let waiter = Waiter { txn: txn.clone(), ticket, req: req.clone() };
        if upgrade {
            st.queue.push_front(waiter);
        } else {
            st.queue.push_back(waiter);
        }

        loop {
            if txn.is_wounded() {
                st.remove_waiter(txn.stamp, ticket);
                kl.cv.notify_all();
                return Err(LockError::Wounded);
            }
            let mut blockers = st.blockers(txn.stamp, &req);
            if !upgrade {
                blockers.extend(st.queued_ahead(txn.stamp, Some(ticket), &req));
            }
            if blockers.is_empty() {
                st.remove_waiter(txn.stamp, ticket);
                st.grant(txn, &req);
                kl.cv.notify_all();
                drop(st);
                self.note_held(txn, key);
                return Ok(());
            }
            if wound {
                let mut remote = Vec::new();
                let mut local = false;
                for victim in blockers.iter().filter(|b| b.stamp > txn.stamp && !b.is_wounded()) {
                    match victim.wound() {
                        Some(parked) if Arc::ptr_eq(&parked, &kl) => local = true,
                        Some(parked) => remote.push(parked),
                        None => {}
                    }
                }
                if local {
                    kl.cv.notify_all();
                }
                if !remote.is_empty() {
                    MutexGuard::unlocked(&mut st, || {
                        for other in remote {
                            let _g = other.state.lock();
                            other.cv.notify_all();
                        }
                    });
                    continue;
                }
            }
            *txn.waiting_on.lock() = Some(kl.clone());
            if !txn.is_wounded() {
                kl.cv.wait_for(&mut st, PARK_TIMEOUT);
            }
            *txn.waiting_on.lock() = None;
        }
    }

    /// Grants `req` only if that is possible without waiting.
    pub fn try_acquire(&self, txn: &Arc<TxnHandle>, key: &str, req: LockRequest) -> Result<bool, LockError> {
        if txn.is_wounded() {
            return Err(LockError::Wounded);
        }
        let kl = self.key_lock(key);
        let mut st = kl.state.lock();
        let upgrade = st.holds(txn.stamp);
        if st.blockers(txn.stamp, &req).is_empty() && (upgrade || st.queued_ahead(txn.stamp, None, &req).is_empty()) {
            st.grant(txn, &req);
            drop(st);
            self.note_held(txn, key);
            Ok(true)
        } else {
            Ok(false)
        }
    }

    pub fn acquire_read(&self, txn: &Arc<TxnHandle>, key: &str) -> Result<(), LockError> {
        self.acquire(txn, key, LockRequest::Read, true)
    }

    pub fn acquire_write(&self, txn: &Arc<TxnHandle>, key: &str) -> Result<(), LockError> {
        self.acquire(txn, key, LockRequest::Write, true)
    }

    pub fn acquire_write_value(&self, txn: &Arc<TxnHandle>, key: &str, value: Value) -> Result<(), LockError> {
        self.acquire(txn, key, LockRequest::WriteValue(value), true)
    }

    pub fn acquire_read_condition(&self, txn: &Arc<TxnHandle>, key: &str, cond: Expr, expected: bool) -> Result<(), LockError> {
        self.acquire(txn, key, LockRequest::ReadCondition { cond, expected }, true)
    }

    /// Installs a condition entry. The caller must hold `key` in read mode;
    /// it usually releases that read lock right after (the downgrade).
    pub fn add_condition(&self, txn: &Arc<TxnHandle>, key: &str, cond: &Expr, expected: bool) -> Result<(), LockError> {
        if txn.is_wounded() {
            return Err(LockError::Wounded);
        }
        let kl = self.key_lock(key);
        let mut st = kl.state.lock();
        if !st.readers.iter().any(|r| r.stamp == txn.stamp) {
            return Err(LockError::NotHoldingRead);
        }
        st.install_condition(txn, cond, expected);
        drop(st);
        self.note_held(txn, key);
        Ok(())
    }

    pub fn rem_condition(&self, txn: &TxnHandle, key: &str, cond: &Expr) {
        let Some(kl) = self.table.get(key).map(|k| k.clone()) else { return };
        let mut st = kl.state.lock();
        let before = st.conditions.len();
        st.conditions.retain(|(c, _)| !(c.owner == txn.stamp && c.cond == *cond));
        if st.conditions.len() != before {
            kl.cv.notify_all();
        }
    }

    /// Drops a plain read lock, keeping any condition entries.
    pub fn release_read(&self, txn: &TxnHandle, key: &str) {
        let Some(kl) = self.table.get(key).map(|k| k.clone()) else { return };
        let mut st = kl.state.lock();
        st.readers.retain(|r| r.stamp != txn.stamp);
        kl.cv.notify_all();
    }

    pub fn release(&self, txn: &TxnHandle, key: &str) {
        let Some(kl) = self.table.get(key).map(|k| k.clone()) else { return };
        let mut st = kl.state.lock();
        st.drop_all(txn.stamp);
        kl.cv.notify_all();
        drop(st);
        txn.held.lock().remove(&(self.id, key.to_string()));
    }

    /// Drops every mode and condition `txn` holds in this manager. Idempotent.
    pub fn release_all(&self, txn: &TxnHandle) {
        let keys: Vec<Key> = {
            let mut held = txn.held.lock();
            let mine: Vec<(usize, Key)> = held.iter().filter(|(m, _)| *m == self.id).cloned().collect();
            for k in &mine {
                held.remove(k);
            }
            mine.into_iter().map(|(_, k)| k).collect()
        };
        for key in keys {
            if let Some(kl) = self.table.get(&key).map(|k| k.clone()) {
                let mut st = kl.state.lock();
                st.drop_all(txn.stamp);
                kl.cv.notify_all();
            }
        }
    }

    pub fn holds_read(&self, txn: &TxnHandle, key: &str) -> bool {
        self.table.get(key).is_some_and(|kl| kl.state.lock().readers.iter().any(|r| r.stamp == txn.stamp))
    }

    pub fn holds_any(&self, txn: &TxnHandle, key: &str) -> bool {
        self.table.get(key).is_some_and(|kl| kl.state.lock().holds(txn.stamp))
    }

    /// True when another transaction holds `key` in W or write-value mode.
    pub fn write_held_by_other(&self, key: &str, stamp: TxnStamp) -> bool {
        self.table
            .get(key)
            .is_some_and(|kl| kl.state.lock().writer.as_ref().is_some_and(|(w, _)| w.stamp != stamp))
    }

    pub fn view(&self, key: &str) -> LockView {
        let Some(kl) = self.table.get(key).map(|k| k.clone()) else {
            return LockView { readers: vec![], writer: None, write_value: None, conditions: vec![], waiting: vec![] };
        };
        let st = kl.state.lock();
        LockView {
            readers: st.readers.iter().map(|r| r.stamp).collect(),
            writer: st.writer.as_ref().map(|(w, _)| w.stamp),
            write_value: st.writer.as_ref().and_then(|(_, m)| match m {
                WriterMode::Value(v) => Some(v.clone()),
                WriterMode::Exclusive => None,
            }),
            conditions: st.conditions.iter().map(|(c, _)| c.clone()).collect(),
            waiting: st.queue.iter().map(|w| w.txn.stamp).collect(),
        }
    }

    /// Human-readable dump of a key's lock state.
    pub fn dump(&self, key: &str) -> String {
        let Some(kl) = self.table.get(key).map(|k| k.clone()) else {
            return format!("{key}: unlocked");
        };
        let st = kl.state.lock();
        let mut out = format!("{}:", kl.key);
        let mode = match (&st.writer, st.readers.is_empty(), st.conditions.is_empty()) {
            (Some((_, WriterMode::Exclusive)), ..) => "W",
            (Some((_, WriterMode::Value(_))), ..) => "W(v)",
            (None, false, _) => "R",
            (None, true, false) => "R(p)",
            (None, true, true) => "free",
        };
        let _ = write!(out, " mode={mode}");
        let readers: Vec<String> = st.readers.iter().map(|r| r.stamp.to_string()).collect();
        let _ = write!(out, " readers=[{}]", readers.join(","));
        match &st.writer {
            Some((w, WriterMode::Exclusive)) => {
                let _ = write!(out, " writer={}", w.stamp);
            }
            Some((w, WriterMode::Value(v))) => {
                let _ = write!(out, " writer={} value={v}", w.stamp);
            }
            None => out.push_str(" writer=none"),
        }
        for (c, _) in &st.conditions {
            let _ = write!(out, "\n  condition {} expects {} (txn {})", c.cond, c.expected, c.owner);
        }
        for w in &st.queue {
            let _ = write!(out, "\n  waiting txn {} for {}", w.txn.stamp, w.req.label());
        }
        out
    }
}
