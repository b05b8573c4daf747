use lazykv::locks::{LockManager, LockRequest, TxnHandle};
use lazykv::{Expr, FutureHandle, Value};
use std::sync::Arc;
use std::time::Duration;

/// The condition used by every value-dependent cell: stock >= 10.
fn cond() -> Expr {
    Expr::read(FutureHandle::new(1, "stock")).ge(&Expr::constant(10))
}

const SAT: i64 = 32;
const VIOL: i64 = 5;

#[derive(Clone, Copy, Debug)]
enum Mode {
    R,
    W,
    RCond,
    WSat,
    WViol,
}

const MODES: [Mode; 5] = [Mode::R, Mode::W, Mode::RCond, Mode::WSat, Mode::WViol];

/// Row = requested, column = held by another transaction.
#[rustfmt::skip]
const EXPECTED: [[bool; 5]; 5] = [
    [true,  false, true,  false, false],
    [false, false, false, false, false],
    [true,  false, true,  true,  false],
    [false, false, true,  false, false],
    [false, false, false, false, false],
];

fn hold(lm: &LockManager, t: &Arc<TxnHandle>, m: Mode) {
    match m {
        Mode::R => lm.acquire_read(t, "stock").unwrap(),
        Mode::W => lm.acquire_write(t, "stock").unwrap(),
        Mode::RCond => {
            lm.acquire_read(t, "stock").unwrap();
            lm.add_condition(t, "stock", &cond(), true).unwrap();
            lm.release_read(t, "stock");
        }
        Mode::WSat => lm.acquire_write_value(t, "stock", Value::Int(SAT)).unwrap(),
        Mode::WViol => lm.acquire_write_value(t, "stock", Value::Int(VIOL)).unwrap(),
    }
}

fn request(m: Mode) -> LockRequest {
    match m {
        Mode::R => LockRequest::Read,
        Mode::W => LockRequest::Write,
        Mode::RCond => LockRequest::ReadCondition { cond: cond(), expected: true },
        Mode::WSat => LockRequest::WriteValue(Value::Int(SAT)),
        Mode::WViol => LockRequest::WriteValue(Value::Int(VIOL)),
    }
}

#[test]
fn every_cell_of_the_matrix() {
    for (r, &row) in MODES.iter().enumerate() {
        for (c, &col) in MODES.iter().enumerate() {
            let lm = LockManager::new();
            let holder = TxnHandle::new(1);
            let requester = TxnHandle::new(2);
            hold(&lm, &holder, col);
            let granted = lm.try_acquire(&requester, "stock", request(row)).unwrap();
            assert_eq!(granted, EXPECTED[r][c], "request {row:?} while {col:?} is held");
            assert!(!holder.is_wounded());
        }
    }
}

#[test]
fn same_transaction_never_conflicts_with_itself() {
    for &row in &MODES {
        for &col in &MODES {
            let lm = LockManager::new();
            let t = TxnHandle::new(1);
            hold(&lm, &t, col);
            assert!(lm.try_acquire(&t, "stock", request(row)).unwrap(), "{row:?} over own {col:?}");
        }
    }
}

#[test]
fn negated_conditions_flip_the_value_cells() {
    let lm = LockManager::new();
    let holder = TxnHandle::new(1);
    lm.acquire_read(&holder, "stock").unwrap();
    lm.add_condition(&holder, "stock", &cond(), false).unwrap();
    lm.release_read(&holder, "stock");
    let t = TxnHandle::new(2);
    assert!(!lm.try_acquire(&t, "stock", LockRequest::WriteValue(Value::Int(SAT))).unwrap());
    assert!(lm.try_acquire(&t, "stock", LockRequest::WriteValue(Value::Int(VIOL))).unwrap());
}

#[test]
fn condition_entries() {
    let lm = LockManager::new();
    let a = TxnHandle::new(1);
    let b = TxnHandle::new(2);
    assert!(lm.add_condition(&a, "stock", &cond(), true).is_err());
    for t in [&a, &b] {
        lm.acquire_read(t, "stock").unwrap();
        lm.add_condition(t, "stock", &cond(), true).unwrap();
        lm.add_condition(t, "stock", &cond(), true).unwrap();
        lm.release_read(t, "stock");
    }
    assert_eq!(lm.view("stock").conditions.len(), 2);
    lm.rem_condition(&a, "stock", &cond());
    lm.rem_condition(&a, "stock", &cond());
    let left = lm.view("stock").conditions;
    assert_eq!(left.len(), 1);
    assert_eq!(left[0].owner, 2);

    let w = TxnHandle::new(3);
    assert!(!lm.try_acquire(&w, "stock", LockRequest::WriteValue(Value::Int(VIOL))).unwrap());
    lm.rem_condition(&b, "stock", &cond());
    assert!(lm.try_acquire(&w, "stock", LockRequest::WriteValue(Value::Int(VIOL))).unwrap());
}

#[test]
fn release_is_idempotent() {
    let lm = LockManager::new();
    let a = TxnHandle::new(1);
    lm.release_all(&a);
    lm.acquire_write(&a, "k").unwrap();
    lm.release_all(&a);
    lm.release_all(&a);
    let b = TxnHandle::new(2);
    assert!(lm.try_acquire(&b, "k", LockRequest::Write).unwrap());
}

/// Wound-wait: an older requester wounds a younger holder, a younger
/// requester waits. Each case is (holder stamp, requester stamp, held mode,
/// requested mode, requester should wound).
#[test]
fn wound_wait_cases() {
    let cases = [
        (2, 1, Mode::R, Mode::W, true),
        (2, 1, Mode::W, Mode::R, true),
        (2, 1, Mode::W, Mode::W, true),
        (2, 1, Mode::RCond, Mode::WViol, true),
        (1, 2, Mode::R, Mode::W, false),
        (1, 2, Mode::W, Mode::R, false),
        (1, 2, Mode::W, Mode::W, false),
        (1, 2, Mode::RCond, Mode::WViol, false),
    ];
    for (h, r, held, req, wounds) in cases {
        let lm = LockManager::new();
        let holder = TxnHandle::new(h);
        let requester = TxnHandle::new(r);
        hold(&lm, &holder, held);
        std::thread::scope(|s| {
            let waiter = s.spawn(|| lm.acquire(&requester, "stock", request(req), true));
            std::thread::sleep(Duration::from_millis(30));
            assert_eq!(holder.is_wounded(), wounds, "{held:?} by {h}, {req:?} by {r}");
            assert!(!waiter.is_finished(), "{held:?} by {h}, {req:?} by {r} did not wait for the release");
            assert_eq!(lm.view("stock").waiting, vec![r]);
            lm.release_all(&holder);
            waiter.join().unwrap().unwrap();
        });
        assert!(!requester.is_wounded());
    }
}

#[test]
fn wounded_waiter_gives_up() {
    let lm = LockManager::new();
    let old = TxnHandle::new(1);
    let young = TxnHandle::new(2);
    let holder_of_b = TxnHandle::new(3);
    lm.acquire_write(&young, "a").unwrap();
    lm.acquire_write(&holder_of_b, "b").unwrap();
    std::thread::scope(|s| {
        let parked = s.spawn(|| lm.acquire(&young, "b", LockRequest::Write, false));
        std::thread::sleep(Duration::from_millis(20));
        let winner = s.spawn(|| lm.acquire(&old, "a", LockRequest::Write, true));
        assert!(parked.join().unwrap().is_err());
        lm.release_all(&young);
        winner.join().unwrap().unwrap();
    });
}
