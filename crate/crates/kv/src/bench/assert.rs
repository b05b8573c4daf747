use super::Workload;
use crate::dist::Cluster;
use crate::error::TxnError;
use crate::txn::Txn;
use lazykv_core::serial::State;
use lazykv_core::{Expr, ResolvedValues, Value};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const HOT_COUNTER: &str = "counter/hot";

/// Counters start at `init`. An operation decrements its counter while it
/// is positive and resets it to `init` once it reaches zero, so the guard
/// flips once every `init + 1` operations on a counter.
pub struct AssertWorkload {
    clients: usize,
    p: u32,
    init: i64,
}

fn private_counter(c: usize) -> String {
    format!("counter/{c}")
}

impl AssertWorkload {
    pub fn new(clients: usize, p: u32, init: i64) -> Self {
        Self { clients, p, init }
    }
}

impl Workload for AssertWorkload {
    type Op = String;
    type Tally = ();

    fn setup(&self, cluster: &Cluster) -> Result<(), TxnError> {
        cluster.load(HOT_COUNTER, self.init)?;
        for c in 0..self.clients {
            cluster.load(&private_counter(c), self.init)?;
        }
        Ok(())
    }

    fn next_op(&self, client: usize, rng: &mut ChaCha8Rng) -> String {
        if rng.gen_range(0..100) < self.p {
            HOT_COUNTER.into()
        } else {
            private_counter(client)
        }
    }

    fn execute(&self, t: &mut Txn<'_>, key: &String, prior: &ResolvedValues) -> Result<(), TxnError> {
        if t.protocol().is_lsd() {
            let v = t.read_future(key)?;
            let guard = v.gt(&Expr::constant(0));
            let positive = if t.protocol().speculates() {
                // Handles are allocated deterministically, so a retry's guard
                // reads the same handle the failed commit resolved.
                let guess = match guard.resolve(prior) {
                    Ok(Value::Bool(b)) => b,
                    _ => true,
                };
                t.is_true_speculative(&guard, guess)?
            } else {
                t.is_true(&guard)?
            };
            if positive {
                t.write(key, v.sub(&Expr::constant(1)))
            } else {
                t.write(key, Value::Int(self.init))
            }
        } else {
            let v = t.read(key)?.as_int().unwrap_or(0);
            let next = if v > 0 { v - 1 } else { self.init };
            t.write(key, Value::Int(next))
        }
    }

    fn record(&self, _: &mut (), _: &String) {}

    fn check(&self, _before: &State, after: &State, _: &[()]) -> Vec<String> {
        after
            .iter()
            .filter(|(k, _)| k.starts_with("counter/"))
            .filter_map(|(k, v)| match v.as_int() {
                Some(n) if (0..=self.init).contains(&n) => None,
                _ => Some(format!("{k} = {v} outside 0..={}", self.init)),
            })
            .collect()
    }
}
