//! Key to partition routing.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::expr::{Expr, Node, OpKind};
use crate::Value;

pub type PartitionId = usize;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartitionMap {
    /// FNV-1a of the key modulo the partition count.
    Hash { partitions: usize },
    /// Longest matching prefix wins.
    Directory { partitions: usize, prefixes: Vec<(String, PartitionId)> },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RouteError {
    NoPrefix(String),
    BadConfig(String),
}

impl fmt::Display for RouteError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouteError::NoPrefix(k) => write!(f, "no directory entry matches key {k:?}"),
            RouteError::BadConfig(m) => write!(f, "bad partition map: {m}"),
        }
    }
}

pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl PartitionMap {
    pub fn hash(partitions: usize) -> Result<Self, RouteError> {
        if partitions == 0 {
            return Err(RouteError::BadConfig("zero partitions".into()));
        }
        Ok(PartitionMap::Hash { partitions })
    }

    pub fn directory(partitions: usize, prefixes: Vec<(String, PartitionId)>) -> Result<Self, RouteError> {
        if partitions == 0 {
            return Err(RouteError::BadConfig("zero partitions".into()));
        }
        if let Some((p, id)) = prefixes.iter().find(|(_, id)| *id >= partitions) {
            return Err(RouteError::BadConfig(alloc::format!("prefix {p:?} maps to partition {id} of {partitions}")));
        }
        Ok(PartitionMap::Directory { partitions, prefixes })
    }

    pub fn partitions(&self) -> usize {
        match self {
            PartitionMap::Hash { partitions } | PartitionMap::Directory { partitions, .. } => *partitions,
        }
    }

    pub fn route(&self, key: &str) -> Result<PartitionId, RouteError> {
        match self {
            PartitionMap::Hash { partitions } => Ok((fnv1a(key.as_bytes()) % *partitions as u64) as usize),
            PartitionMap::Directory { prefixes, .. } => prefixes
                .iter()
                .filter(|(p, _)| key.starts_with(p.as_str()))
                .max_by_key(|(p, _)| p.len())
                .map(|(_, id)| *id)
                .ok_or_else(|| RouteError::NoPrefix(key.into())),
        }
    }

    /// The partition of every key `key_expr` can resolve to, if that can be
    /// known without resolving it.
    pub fn static_partition(&self, key_expr: &Expr) -> Option<PartitionId> {
        if self.partitions() == 1 {
            return Some(0);
        }
        let (prefix, complete) = static_prefix(key_expr);
        if complete {
            return self.route(&prefix).ok();
        }
        match self {
            PartitionMap::Hash { .. } => None,
            PartitionMap::Directory { prefixes, .. } => {
                let best = prefixes
                    .iter()
                    .filter(|(p, _)| prefix.starts_with(p.as_str()))
                    .max_by_key(|(p, _)| p.len())?;
                // A longer entry that extends the known prefix could still win
                // once the dynamic suffix is known.
                let ambiguous = prefixes.iter().any(|(p, id)| p.len() > prefix.len() && p.starts_with(prefix.as_str()) && *id != best.1);
                (!ambiguous).then_some(best.1)
            }
        }
    }

    /// True when no fwset entry needs a second prepare round: each key
    /// expression routes statically, and every future it reads lives on
    /// that same partition.
    pub fn can_skip_extra_round(&self, fwset: &[(Expr, Expr)]) -> bool {
        fwset.iter().all(|(key_expr, _)| {
            let Some(target) = self.static_partition(key_expr) else {
                return false;
            };
            key_expr.source_keys().iter().all(|k| self.route(k) == Ok(target))
        })
    }
}

/// Returns the statically known leading part of a key expression and whether
/// it is the whole key.
fn static_prefix(e: &Expr) -> (String, bool) {
    match e.node() {
        Node::Const(Value::Str(s)) => (s.clone(), true),
        Node::Const(Value::Int(i)) => (alloc::format!("{i}"), true),
        Node::Op { kind: OpKind::Concat, children } => {
            let (mut left, complete) = static_prefix(&children[0]);
            if !complete {
                return (left, false);
            }
            let (right, rc) = static_prefix(&children[1]);
            left.push_str(&right);
            (left, rc)
        }
        _ => (String::new(), false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::FutureHandle;
    use alloc::vec;

    fn by_warehouse() -> PartitionMap {
        PartitionMap::directory(2, vec![("w1/".into(), 0), ("w2/".into(), 1)]).unwrap()
    }

    fn order_key(ctr_key: &str) -> Expr {
        Expr::constant("w1/d1/order/").concat(&Expr::read(FutureHandle::new(1, ctr_key)).add(&Expr::constant(1)))
    }

    #[test]
    fn hash_spreads_and_is_deterministic() {
        let pm = PartitionMap::hash(3).unwrap();
        let hits: alloc::collections::BTreeSet<_> = (0..64).map(|i| pm.route(&alloc::format!("k{i}")).unwrap()).collect();
        assert_eq!(hits.len(), 3);
        assert_eq!(pm.route("stock"), pm.route("stock"));
    }

    #[test]
    fn directory_routes_by_prefix() {
        let pm = by_warehouse();
        assert_eq!(pm.route("w1/stock/5"), Ok(0));
        assert_eq!(pm.route("w2/d1/next_o_id"), Ok(1));
        assert!(matches!(pm.route("item/1"), Err(RouteError::NoPrefix(_))));
    }

    #[test]
    fn longest_prefix_wins() {
        let pm = PartitionMap::directory(2, vec![("w".into(), 0), ("w2/".into(), 1)]).unwrap();
        assert_eq!(pm.route("w2/x"), Ok(1));
        assert_eq!(pm.route("w3/x"), Ok(0));
        // "w" alone is ambiguous: the suffix may start with "2/".
        let e = Expr::constant("w").concat(&Expr::read(FutureHandle::new(1, "w2/c")));
        assert_eq!(pm.static_partition(&e), None);
    }

    #[test]
    fn skip_rules() {
        let fw = vec![(order_key("w1/d1/next_o_id"), Expr::constant("row"))];
        assert!(by_warehouse().can_skip_extra_round(&fw));
        assert!(!PartitionMap::hash(3).unwrap().can_skip_extra_round(&fw));
        assert!(PartitionMap::hash(3).unwrap().can_skip_extra_round(&[]));
        // Source future on another partition.
        let fw = vec![(order_key("w2/d1/next_o_id"), Expr::constant("row"))];
        assert!(!by_warehouse().can_skip_extra_round(&fw));
        // Constant keys are always routable.
        let fw = vec![(Expr::constant("w2/x"), Expr::constant(1))];
        assert!(PartitionMap::hash(3).unwrap().can_skip_extra_round(&fw));
        // One partition: everything is local.
        let fw = vec![(order_key("w2/d1/next_o_id"), Expr::constant("row"))];
        assert!(PartitionMap::hash(1).unwrap().can_skip_extra_round(&fw));
    }

    #[test]
    fn bad_configs() {
        assert!(PartitionMap::hash(0).is_err());
        assert!(PartitionMap::directory(1, vec![("a".into(), 1)]).is_err());
    }
}
