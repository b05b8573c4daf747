//! Randomized schedules checked against serial replay.
//!
//! Each schedule is a handful of small logical transactions over four keys.
//! Every logical transaction has a classic and a future-aware implementation
//! plus a plain function on the state, which is what the serial oracle
//! replays. OCC schedules are interleaved step by step on one thread, so a
//! seed fully determines the outcome. Locking protocols block, so their
//! schedules run one thread per transaction with random yields.

#![allow(dead_code)]

use lazykv::{Cluster, Expr, PartitionMap, Protocol, TxnError, Value};
use lazykv_core::serial::{check_serial_equivalence, Committed, Replay, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const INT_KEYS: [&str; 3] = ["a", "b", "c"];
pub const SEL: &str = "sel";

#[derive(Clone, Debug)]
pub enum Logic {
    Incr { key: &'static str, by: i64 },
    /// if key > 0 then key - 1 else 2
    Guard { key: &'static str },
    /// if guard > 0 then target := 0
    Zero { guard: &'static str, target: &'static str },
    SetSel { to: &'static str },
    /// state[state[sel]] := state[a] + by
    Redirect { by: i64 },
}

fn int(s: &State, k: &str) -> i64 {
    s.get(k).and_then(Value::as_int).unwrap_or(0)
}

impl Replay for Logic {
    fn apply(&self, s: &mut State) {
        match self {
            Logic::Incr { key, by } => {
                let v = int(s, key) + by;
                s.insert((*key).into(), Value::Int(v));
            }
            Logic::Guard { key } => {
                let v = int(s, key);
                s.insert((*key).into(), Value::Int(if v > 0 { v - 1 } else { 2 }));
            }
            Logic::Zero { guard, target } => {
                if int(s, guard) > 0 {
                    s.insert((*target).into(), Value::Int(0));
                }
            }
            Logic::SetSel { to } => {
                s.insert(SEL.into(), Value::from(*to));
            }
            Logic::Redirect { by } => {
                let target = s.get(SEL).and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
                let v = int(s, "a") + by;
                s.insert(target, Value::Int(v));
            }
        }
    }
}

impl Logic {
    fn random(rng: &mut ChaCha8Rng) -> Logic {
        let key = |rng: &mut ChaCha8Rng| INT_KEYS[rng.gen_range(0..INT_KEYS.len())];
        match rng.gen_range(0..10) {
            0..=2 => Logic::Incr { key: key(rng), by: rng.gen_range(1..=3) },
            3..=5 => Logic::Guard { key: key(rng) },
            6 | 7 => {
                let guard = key(rng);
                let mut target = key(rng);
                while target == guard {
                    target = key(rng);
                }
                Logic::Zero { guard, target }
            }
            8 => Logic::SetSel { to: key(rng) },
            _ => Logic::Redirect { by: rng.gen_range(1..=3) },
        }
    }

    /// The transaction body. The caller commits.
    pub fn execute(&self, t: &mut lazykv::Txn<'_>) -> Result<(), TxnError> {
        let lsd = t.protocol().is_lsd();
        let zero = Expr::constant(0);
        match self {
            Logic::Incr { key, by } => {
                if lsd {
                    let v = t.read_future(key)?;
                    t.write(key, v.add(&Expr::constant(*by)))
                } else {
                    let v = t.read(key)?.as_int().unwrap_or(0);
                    t.write(key, Value::Int(v + by))
                }
            }
            Logic::Guard { key } => {
                if lsd {
                    let v = t.read_future(key)?;
                    if t.is_true(&v.gt(&zero))? {
                        t.write(key, v.sub(&Expr::constant(1)))
                    } else {
                        t.write(key, Value::Int(2))
                    }
                } else {
                    let v = t.read(key)?.as_int().unwrap_or(0);
                    t.write(key, Value::Int(if v > 0 { v - 1 } else { 2 }))
                }
            }
            Logic::Zero { guard, target } => {
                let positive = if lsd {
                    let g = t.read_future(guard)?;
                    t.is_true(&g.gt(&zero))?
                } else {
                    t.read(guard)?.as_int().unwrap_or(0) > 0
                };
                if positive {
                    t.write(target, Value::Int(0))?;
                }
                Ok(())
            }
            Logic::SetSel { to } => t.write(SEL, Value::from(*to)),
            Logic::Redirect { by } => {
                if lsd {
                    let sel = t.read_future(SEL)?;
                    let a = t.read_future("a")?;
                    t.write_future_key(sel, a.add(&Expr::constant(*by)))
                } else {
                    let target = t.read(SEL)?;
                    let a = t.read("a")?.as_int().unwrap_or(0);
                    t.write(target.as_str().unwrap_or_default(), Value::Int(a + by))
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub seed: u64,
    pub txns: Vec<Logic>,
    /// Step order for single-threaded runs: a transaction's first
    /// appearance runs its body, the second its commit.
    pub steps: Vec<usize>,
    pub initial: State,
    pub partitions: usize,
}

impl Schedule {
    pub fn generate(seed: u64) -> Schedule {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8);
        let txns: Vec<Logic> = (0..n).map(|_| Logic::random(&mut rng)).collect();
        let mut steps: Vec<usize> = (0..n).flat_map(|i| [i, i]).collect();
        for i in (1..steps.len()).rev() {
            let j = rng.gen_range(0..=i);
            steps.swap(i, j);
        }
        let mut initial = State::new();
        for k in INT_KEYS {
            initial.insert(k.into(), Value::Int(rng.gen_range(0..=2)));
        }
        initial.insert(SEL.into(), Value::from(INT_KEYS[rng.gen_range(0..INT_KEYS.len())]));
        let partitions = if seed.is_multiple_of(2) { 1 } else { 2 };
        Schedule { seed, txns, steps, initial, partitions }
    }

    pub fn partition_map(&self) -> PartitionMap {
        PartitionMap::hash(self.partitions).expect("partition count")
    }

    fn load(&self, cluster: &Cluster) {
        for (k, v) in &self.initial {
            cluster.load(k, v.clone()).expect("load");
        }
    }
}

pub struct Outcome {
    pub log: Vec<Committed<Logic>>,
    pub observed: State,
}

impl Outcome {
    pub fn serializable(&self, initial: &State) -> bool {
        check_serial_equivalence(&self.log, initial, &self.observed).expect("schedule fits the checker")
    }
}

/// Runs an OCC schedule on one thread in the schedule's step order.
pub fn run_interleaved(cluster: &Cluster, s: &Schedule) -> Outcome {
    assert!(cluster.protocol().is_occ(), "interleaved runs never block, so they need OCC");
    s.load(cluster);
    let mut open: Vec<Option<lazykv::Txn<'_>>> = (0..s.txns.len()).map(|_| None).collect();
    let mut started = vec![false; s.txns.len()];
    let mut log = Vec::new();
    for &i in &s.steps {
        if !started[i] {
            started[i] = true;
            let mut t = cluster.begin();
            if s.txns[i].execute(&mut t).is_ok() {
                open[i] = Some(t);
            }
        } else if let Some(mut t) = open[i].take() {
            if t.commit().is_ok() {
                let ctx = t.context();
                log.push(Committed {
                    txn: s.txns[i].clone(),
                    begin: ctx.begin_seq(),
                    commit: ctx.commit_seq().expect("committed"),
                });
            }
        }
    }
    Outcome { log, observed: cluster.state() }
}

/// Runs a schedule with one thread per transaction. Each transaction
/// retries up to three times, keeping its wound-wait priority.
pub fn run_threaded(cluster: &Cluster, s: &Schedule) -> Outcome {
    s.load(cluster);
    let start = std::sync::Barrier::new(s.txns.len());
    let log = std::thread::scope(|scope| {
        let handles: Vec<_> = s
            .txns
            .iter()
            .enumerate()
            .map(|(i, logic)| {
                let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_mul(31).wrapping_add(i as u64));
                let start = &start;
                scope.spawn(move || {
                    start.wait();
                    let mut stamp = None;
                    for _ in 0..3 {
                        for _ in 0..rng.gen_range(0..4) {
                            std::thread::yield_now();
                        }
                        let mut t = match stamp {
                            None => cluster.begin(),
                            Some(st) => cluster.begin_with_stamp(st),
                        };
                        stamp = Some(t.context().stamp());
                        if logic.execute(&mut t).is_err() {
                            continue;
                        }
                        for _ in 0..rng.gen_range(0..3) {
                            std::thread::yield_now();
                        }
                        if t.commit().is_ok() {
                            let ctx = t.context();
                            return Some(Committed {
                                txn: logic.clone(),
                                begin: ctx.begin_seq(),
                                commit: ctx.commit_seq().expect("committed"),
                            });
                        }
                    }
                    None
                })
            })
            .collect();
        handles.into_iter().filter_map(|h| h.join().expect("schedule thread panicked")).collect()
    });
    Outcome { log, observed: cluster.state() }
}

/// Runs `s` under `protocol` and reports whether the result is serializable.
pub fn check(protocol: Protocol, s: &Schedule) -> bool {
    let cluster = Cluster::new(protocol, s.partition_map());
    let out = if protocol.is_occ() { run_interleaved(&cluster, s) } else { run_threaded(&cluster, s) };
    out.serializable(&s.initial)
}

/// The same OCC schedule against a cluster that skips condition validation.
pub fn check_broken(s: &Schedule) -> bool {
    let cluster = Cluster::without_condition_validation(Protocol::OccLsd, s.partition_map());
    run_interleaved(&cluster, s).serializable(&s.initial)
}
