use super::Workload;
use crate::dist::Cluster;
use crate::error::TxnError;
use crate::txn::Txn;
use lazykv_core::serial::State;
use lazykv_core::{Expr, ResolvedValues, Value};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const HOT_KEY: &str = "hot";

/// Each operation increments the hot counter with probability `p`%,
/// otherwise the client's private counter.
pub struct Hotkey {
    clients: usize,
    p: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HotkeyOp {
    Hot,
    Private(usize),
}

#[derive(Default)]
pub struct HotkeyTally {
    pub hot: i64,
    pub private: i64,
}

fn private_key(c: usize) -> String {
    format!("private/{c}")
}

impl Hotkey {
    pub fn new(clients: usize, p: u32) -> Self {
        Self { clients, p }
    }
}

impl Workload for Hotkey {
    type Op = HotkeyOp;
    type Tally = HotkeyTally;

    fn setup(&self, cluster: &Cluster) -> Result<(), TxnError> {
        cluster.load(HOT_KEY, 0)?;
        for c in 0..self.clients {
            cluster.load(&private_key(c), 0)?;
        }
        Ok(())
    }

    fn next_op(&self, client: usize, rng: &mut ChaCha8Rng) -> HotkeyOp {
        if rng.gen_range(0..100) < self.p {
            HotkeyOp::Hot
        } else {
            HotkeyOp::Private(client)
        }
    }

    fn execute(&self, t: &mut Txn<'_>, op: &HotkeyOp, _prior: &ResolvedValues) -> Result<(), TxnError> {
        let key = match op {
            HotkeyOp::Hot => HOT_KEY.to_string(),
            HotkeyOp::Private(c) => private_key(*c),
        };
        if t.protocol().is_lsd() {
            let v = t.read_future(&key)?;
            t.write(&key, v.add(&Expr::constant(1)))
        } else {
            let v = t.read(&key)?.as_int().unwrap_or(0);
            t.write(&key, Value::Int(v + 1))
        }
    }

    fn record(&self, tally: &mut HotkeyTally, op: &HotkeyOp) {
        match op {
            HotkeyOp::Hot => tally.hot += 1,
            HotkeyOp::Private(_) => tally.private += 1,
        }
    }

    fn check(&self, before: &State, after: &State, tallies: &[HotkeyTally]) -> Vec<String> {
        let int = |s: &State, k: &str| s.get(k).and_then(Value::as_int).unwrap_or(0);
        let mut out = Vec::new();
        let hot: i64 = tallies.iter().map(|t| t.hot).sum();
        let delta = int(after, HOT_KEY) - int(before, HOT_KEY);
        if delta != hot {
            out.push(format!("hot counter moved by {delta}, committed hot increments {hot}"));
        }
        for (c, t) in tallies.iter().enumerate() {
            let k = private_key(c);
            let d = int(after, &k) - int(before, &k);
            if d != t.private {
                out.push(format!("{k} moved by {d}, committed {}", t.private));
            }
        }
        out
    }
}
