//! TPC-C-lite: New-Order and Payment over warehouses, districts, customers
//! and per-warehouse stock.
//!
//! Keys (`w` and `d` start at 1):
//!
//! ```text
//! w{w}/ytd                   Int   warehouse year-to-date payments
//! w{w}/d{d}/ytd              Int   district year-to-date payments
//! w{w}/d{d}/next_o_id        Int   last order id issued in the district
//! w{w}/d{d}/c{c}/balance     Int   customer balance
//! w{w}/stock/{i}             Int   stock of item i held by warehouse w
//! w{w}/d{d}/order/{id}       Int   order row (its line count), inserted by New-Order
//! ```

use super::Workload;
use crate::dist::Cluster;
use crate::error::TxnError;
use crate::txn::Txn;
use lazykv_core::serial::State;
use lazykv_core::{Expr, ResolvedValues, Value};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub const DISTRICTS: u32 = 10;
pub const CUSTOMERS: u32 = 100;
pub const ITEMS: u32 = 1000;
pub const INITIAL_STOCK: i64 = 1_000_000;
/// Percentage of order lines supplied by another warehouse.
pub const REMOTE_LINE_PCT: u32 = 1;

pub fn warehouse_ytd(w: u32) -> String {
    format!("w{w}/ytd")
}

pub fn district_ytd(w: u32, d: u32) -> String {
    format!("w{w}/d{d}/ytd")
}

pub fn next_order_id(w: u32, d: u32) -> String {
    format!("w{w}/d{d}/next_o_id")
}

pub fn balance(w: u32, d: u32, c: u32) -> String {
    format!("w{w}/d{d}/c{c}/balance")
}

pub fn stock(w: u32, i: u32) -> String {
    format!("w{w}/stock/{i}")
}

pub fn order_prefix(w: u32, d: u32) -> String {
    format!("w{w}/d{d}/order/")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderLine {
    pub supply_w: u32,
    pub item: u32,
    pub qty: i64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TpccOp {
    NewOrder { w: u32, d: u32, lines: Vec<OrderLine> },
    Payment { w: u32, d: u32, c: u32, amount: i64 },
}

#[derive(Default)]
pub struct TpccTally {
    pub orders: BTreeMap<(u32, u32), i64>,
    pub consumed: BTreeMap<(u32, u32), i64>,
    pub paid: i64,
}

pub struct TpccLite {
    warehouses: u32,
}

impl TpccLite {
    pub fn new(warehouses: u32) -> Self {
        Self { warehouses }
    }

    pub fn new_order(&self, t: &mut Txn<'_>, w: u32, d: u32, lines: &[OrderLine]) -> Result<(), TxnError> {
        let ctr = next_order_id(w, d);
        let count = Value::Int(lines.len() as i64);
        if t.protocol().is_lsd() {
            let last = t.read_future(&ctr)?;
            let id = last.add(&Expr::constant(1));
            t.write(&ctr, id.clone())?;
            t.write_future_key(Expr::constant(order_prefix(w, d)).concat(&id), count.into())?;
            for l in lines {
                let key = stock(l.supply_w, l.item);
                let s = t.read_future(&key)?;
                let qty = Expr::constant(l.qty);
                if !t.is_true(&s.ge(&qty))? {
                    return Err(t.user_abort());
                }
                t.write(&key, s.sub(&qty))?;
            }
        } else {
            let id = t.read(&ctr)?.as_int().unwrap_or(0) + 1;
            t.write(&ctr, Value::Int(id))?;
            t.write(&format!("{}{id}", order_prefix(w, d)), count)?;
            for l in lines {
                let key = stock(l.supply_w, l.item);
                let s = t.read(&key)?.as_int().unwrap_or(0);
                if s < l.qty {
                    return Err(t.user_abort());
                }
                t.write(&key, Value::Int(s - l.qty))?;
            }
        }
        Ok(())
    }

    pub fn payment(&self, t: &mut Txn<'_>, w: u32, d: u32, c: u32, amount: i64) -> Result<(), TxnError> {
        for key in [warehouse_ytd(w), district_ytd(w, d), balance(w, d, c)] {
            if t.protocol().is_lsd() {
                let v = t.read_future(&key)?;
                t.write(&key, v.add(&Expr::constant(amount)))?;
            } else {
                let v = t.read(&key)?.as_int().unwrap_or(0);
                t.write(&key, Value::Int(v + amount))?;
            }
        }
        Ok(())
    }
}

impl Workload for TpccLite {
    type Op = TpccOp;
    type Tally = TpccTally;

    fn setup(&self, cluster: &Cluster) -> Result<(), TxnError> {
        for w in 1..=self.warehouses {
            cluster.load(&warehouse_ytd(w), 0)?;
            for d in 1..=DISTRICTS {
                cluster.load(&district_ytd(w, d), 0)?;
                cluster.load(&next_order_id(w, d), 0)?;
                for c in 1..=CUSTOMERS {
                    cluster.load(&balance(w, d, c), 0)?;
                }
            }
            for i in 1..=ITEMS {
                cluster.load(&stock(w, i), INITIAL_STOCK)?;
            }
        }
        Ok(())
    }

    fn next_op(&self, client: usize, rng: &mut ChaCha8Rng) -> TpccOp {
        let w = (client as u32 % self.warehouses) + 1;
        let d = rng.gen_range(1..=DISTRICTS);
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(5..=15);
            let lines = sample(rng, ITEMS as usize, n)
                .into_iter()
                .map(|i| {
                    let remote = self.warehouses > 1 && rng.gen_range(0..100) < REMOTE_LINE_PCT;
                    let supply_w = if remote {
                        let other = rng.gen_range(1..self.warehouses);
                        if other >= w { other + 1 } else { other }
                    } else {
                        w
                    };
                    OrderLine { supply_w, item: i as u32 + 1, qty: rng.gen_range(1..=10) }
                })
                .collect();
            TpccOp::NewOrder { w, d, lines }
        } else {
            TpccOp::Payment { w, d, c: rng.gen_range(1..=CUSTOMERS), amount: rng.gen_range(1..=5000) }
        }
    }

    fn execute(&self, t: &mut Txn<'_>, op: &TpccOp, _prior: &ResolvedValues) -> Result<(), TxnError> {
        match op {
            TpccOp::NewOrder { w, d, lines } => self.new_order(t, *w, *d, lines),
            TpccOp::Payment { w, d, c, amount } => self.payment(t, *w, *d, *c, *amount),
        }
    }

    fn record(&self, tally: &mut TpccTally, op: &TpccOp) {
        match op {
            TpccOp::NewOrder { w, d, lines } => {
                *tally.orders.entry((*w, *d)).or_default() += 1;
                for l in lines {
                    *tally.consumed.entry((l.supply_w, l.item)).or_default() += l.qty;
                }
            }
            TpccOp::Payment { amount, .. } => tally.paid += amount,
        }
    }

    fn check(&self, before: &State, after: &State, tallies: &[TpccTally]) -> Vec<String> {
        let int = |s: &State, k: &str| s.get(k).and_then(Value::as_int);
        let mut out = Vec::new();
        let mut orders: BTreeMap<(u32, u32), i64> = BTreeMap::new();
        let mut consumed: BTreeMap<(u32, u32), i64> = BTreeMap::new();
        let mut paid = 0;
        for t in tallies {
            for (k, v) in &t.orders {
                *orders.entry(*k).or_default() += v;
            }
            for (k, v) in &t.consumed {
                *consumed.entry(*k).or_default() += v;
            }
            paid += t.paid;
        }

        let mut ytd_w = 0;
        let mut ytd_d = 0;
        let mut bal = 0;
        for w in 1..=self.warehouses {
            let delta = |k: &str| int(after, k).unwrap_or(0) - int(before, k).unwrap_or(0);
            ytd_w += delta(&warehouse_ytd(w));
            for d in 1..=DISTRICTS {
                ytd_d += delta(&district_ytd(w, d));
                for c in 1..=CUSTOMERS {
                    bal += delta(&balance(w, d, c));
                }
                let start = int(before, &next_order_id(w, d)).unwrap_or(0);
                let end = int(after, &next_order_id(w, d)).unwrap_or(0);
                let expect = orders.get(&(w, d)).copied().unwrap_or(0);
                if end - start != expect {
                    out.push(format!("w{w}/d{d}: {} order ids issued, {expect} New-Orders committed", end - start));
                }
                let prefix = order_prefix(w, d);
                let rows = after.range(prefix.clone()..).take_while(|(k, _)| k.starts_with(&prefix)).count() as i64;
                let dense = (1..=end).all(|id| after.contains_key(&format!("{prefix}{id}")));
                if !dense || rows != end {
                    out.push(format!("w{w}/d{d}: order ids not dense 1..={end} ({rows} rows)"));
                }
            }
            for i in 1..=ITEMS {
                let k = stock(w, i);
                let now = int(after, &k).unwrap_or(0);
                if now < 0 {
                    out.push(format!("{k} = {now} is negative"));
                }
                let used = consumed.get(&(w, i)).copied().unwrap_or(0);
                if int(before, &k).unwrap_or(0) - used != now {
                    out.push(format!("{k} = {now} does not match committed order lines"));
                }
            }
        }
        for (what, got) in [("warehouse ytd", ytd_w), ("district ytd", ytd_d), ("customer balances", bal)] {
            if got != paid {
                out.push(format!("{what} grew by {got}, committed payments total {paid}"));
            }
        }
        out
    }
}
