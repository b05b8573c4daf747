//! Transfers between random accounts, locked in random order, must neither
//! deadlock nor lose money.

use lazykv::{Cluster, Expr, PartitionMap, Protocol, TxnError, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::mpsc;
use std::time::Duration;

const ACCOUNTS: usize = 6;
const THREADS: usize = 8;
const TRANSFERS: usize = 150;
const WATCHDOG: Duration = Duration::from_secs(60);

fn account(i: usize) -> String {
    format!("acct/{i}")
}

fn transfer(db: &Cluster, from: usize, to: usize, stamp: &mut Option<u64>) -> Result<(), TxnError> {
    let mut t = match *stamp {
        None => db.begin(),
        Some(s) => db.begin_with_stamp(s),
    };
    *stamp = Some(t.context().stamp());
    let (a, b) = (account(from), account(to));
    if t.protocol().is_lsd() {
        let fa = t.read_future(&a)?;
        let fb = t.read_future(&b)?;
        if t.is_true(&fa.ge(&Expr::constant(1)))? {
            t.write(&a, fa.sub(&Expr::constant(1)))?;
            t.write(&b, fb.add(&Expr::constant(1)))?;
        }
    } else {
        let va = t.read(&a)?.as_int().unwrap();
        let vb = t.read(&b)?.as_int().unwrap();
        if va >= 1 {
            t.write(&a, Value::Int(va - 1))?;
            t.write(&b, Value::Int(vb + 1))?;
        }
    }
    t.commit().map(|_| ())
}

fn stress(protocol: Protocol, partitions: usize) {
    let db = Cluster::new(protocol, PartitionMap::hash(partitions).unwrap());
    for i in 0..ACCOUNTS {
        db.load(&account(i), 10).unwrap();
    }
    let (tx, rx) = mpsc::channel();
    std::thread::scope(|s| {
        for c in 0..THREADS {
            let db = &db;
            let tx = tx.clone();
            s.spawn(move || {
                let mut rng = ChaCha8Rng::seed_from_u64(c as u64);
                for _ in 0..TRANSFERS {
                    let from = rng.gen_range(0..ACCOUNTS);
                    let to = (from + rng.gen_range(1..ACCOUNTS)) % ACCOUNTS;
                    let mut stamp = None;
                    while let Err(e) = transfer(db, from, to, &mut stamp) {
                        assert!(matches!(e, TxnError::Aborted(_)), "{e}");
                    }
                }
                tx.send(()).unwrap();
            });
        }
        drop(tx);
        for _ in 0..THREADS {
            if rx.recv_timeout(WATCHDOG).is_err() {
                let dumps: Vec<String> = (0..ACCOUNTS).map(|i| db.dump_lock(&account(i)).unwrap()).collect();
                panic!("{protocol} on {partitions} partitions stalled:\n{}", dumps.join("\n"));
            }
        }
    });
    let total: i64 = (0..ACCOUNTS).map(|i| db.get(&account(i)).unwrap().value.as_int().unwrap()).sum();
    assert_eq!(total, 10 * ACCOUNTS as i64, "{protocol}");
}

#[test]
fn twopl_centralized() {
    stress(Protocol::TwoPl, 1);
}

#[test]
fn twopl_distributed() {
    stress(Protocol::TwoPl, 3);
}

#[test]
fn twopl_lsd_centralized() {
    stress(Protocol::TwoPlLsd, 1);
}

#[test]
fn twopl_lsd_distributed() {
    stress(Protocol::TwoPlLsd, 3);
}

#[test]
fn occ_distributed() {
    stress(Protocol::Occ, 3);
    stress(Protocol::OccLsd, 3);
}
