//! Futures and the expression language built over them.
//!
//! A transaction never sees the concrete value of a key it reads through the
//! lazy API. It gets a [`FutureHandle`] wrapped in a `Read` leaf and composes
//! it with constants and the fixed operation library into write functions
//! and conditions. The store evaluates those trees at commit time with
//! [`Expr::resolve`].

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::{Key, Value};

/// A transaction-local future for the value stored under `key`.
///
/// Handles compare by `id` first; two reads of the same key yield two
/// distinct handles.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FutureHandle {
    pub id: u32,
    pub key: Key,
}

impl FutureHandle {
    pub fn new(id: u32, key: impl Into<Key>) -> Self {
        Self { id, key: key.into() }
    }
}

/// Operations in the expression library.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpKind {
    Add,
    Sub,
    Concat,
    Ge,
    Gt,
    Le,
    Lt,
    Eq,
    And,
    Or,
    Not,
}

impl OpKind {
    pub const ALL: [OpKind; 11] = [
        OpKind::Add,
        OpKind::Sub,
        OpKind::Concat,
        OpKind::Ge,
        OpKind::Gt,
        OpKind::Le,
        OpKind::Lt,
        OpKind::Eq,
        OpKind::And,
        OpKind::Or,
        OpKind::Not,
    ];

    pub fn arity(self) -> usize {
        match self {
            OpKind::Not => 1,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Concat => "concat",
            OpKind::Ge => "ge",
            OpKind::Gt => "gt",
            OpKind::Le => "le",
            OpKind::Lt => "lt",
            OpKind::Eq => "eq",
            OpKind::And => "and",
            OpKind::Or => "or",
            OpKind::Not => "not",
        }
    }

    pub fn from_name(name: &str) -> Option<OpKind> {
        OpKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Node {
    Const(Value),
    Read(FutureHandle),
    Op { kind: OpKind, children: Vec<Expr> },
}

/// An immutable expression tree. Cloning shares structure.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expr(Arc<Node>);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExprError {
    Arity { kind: OpKind, expected: usize, got: usize },
    UnboundHandle(FutureHandle),
    TypeError { op: OpKind, detail: String },
    Overflow(OpKind),
    Rebound(FutureHandle),
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExprError::Arity { kind, expected, got } => {
                write!(f, "{} takes {expected} operand(s), got {got}", kind.name())
            }
            ExprError::UnboundHandle(h) => write!(f, "future h{} ({}) is not resolved", h.id, h.key),
            ExprError::TypeError { op, detail } => write!(f, "type error in {}: {detail}", op.name()),
            ExprError::Overflow(op) => write!(f, "integer overflow in {}", op.name()),
            ExprError::Rebound(h) => write!(f, "future h{} bound twice", h.id),
        }
    }
}

impl Expr {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(v: impl Into<Value>) -> Expr {
        Expr(Arc::new(Node::Const(v.into())))
    }

    pub fn read(handle: FutureHandle) -> Expr {
        Expr(Arc::new(Node::Read(handle)))
    }

    /// Builds an operation node, checking arity.
    pub fn compose(kind: OpKind, children: Vec<Expr>) -> Result<Expr, ExprError> {
        if children.len() != kind.arity() {
            return Err(ExprError::Arity { kind, expected: kind.arity(), got: children.len() });
        }
        Ok(Expr(Arc::new(Node::Op { kind, children })))
    }

    fn binary(kind: OpKind, a: &Expr, b: &Expr) -> Expr {
        Expr(Arc::new(Node::Op { kind, children: alloc::vec![a.clone(), b.clone()] }))
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Add, self, rhs)
    }
    pub fn sub(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Sub, self, rhs)
    }
    pub fn concat(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Concat, self, rhs)
    }
    pub fn ge(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Ge, self, rhs)
    }
    pub fn gt(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Gt, self, rhs)
    }
    pub fn le(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Le, self, rhs)
    }
    pub fn lt(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Lt, self, rhs)
    }
    pub fn eq_expr(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Eq, self, rhs)
    }
    pub fn and(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::And, self, rhs)
    }
    pub fn or(&self, rhs: &Expr) -> Expr {
        Self::binary(OpKind::Or, self, rhs)
    }
    pub fn not(&self) -> Expr {
        Expr(Arc::new(Node::Op { kind: OpKind::Not, children: alloc::vec![self.clone()] }))
    }

    /// The handles of every `Read` leaf.
    pub fn keys(&self) -> BTreeSet<FutureHandle> {
        let mut out = BTreeSet::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys(&self, out: &mut BTreeSet<FutureHandle>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Read(h) => {
                out.insert(h.clone());
            }
            Node::Op { children, .. } => children.iter().for_each(|c| c.collect_keys(out)),
        }
    }

    /// Distinct storage keys the expression depends on.
    pub fn source_keys(&self) -> BTreeSet<Key> {
        self.keys().into_iter().map(|h| h.key).collect()
    }

    pub fn as_const(&self) -> Option<&Value> {
        match self.node() {
            Node::Const(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self.node() {
            Node::Const(_) => true,
            Node::Read(_) => false,
            Node::Op { children, .. } => children.iter().all(Expr::is_ground),
        }
    }

    /// Evaluates the tree bottom-up against resolved futures.
    pub fn resolve(&self, rv: &ResolvedValues) -> Result<Value, ExprError> {
        match self.node() {
            Node::Const(v) => Ok(v.clone()),
            Node::Read(h) => rv.get(h).cloned().ok_or_else(|| ExprError::UnboundHandle(h.clone())),
            Node::Op { kind, children } => {
                let mut args = Vec::with_capacity(children.len());
                for c in children {
                    args.push(c.resolve(rv)?);
                }
                apply(*kind, &args)
            }
        }
    }
}

impl From<Value> for Expr {
    fn from(v: Value) -> Expr {
        Expr::constant(v)
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

fn type_error(op: OpKind, args: &[Value]) -> ExprError {
    let kinds: Vec<&str> = args.iter().map(Value::kind).collect();
    ExprError::TypeError { op, detail: alloc::format!("unsupported operands {kinds:?}") }
}

/// Applies one library operation to already evaluated operands.
pub fn apply(kind: OpKind, args: &[Value]) -> Result<Value, ExprError> {
    use Value::*;
    if args.len() != kind.arity() {
        return Err(ExprError::Arity { kind, expected: kind.arity(), got: args.len() });
    }
    let out = match (kind, args) {
        (OpKind::Add, [Int(a), Int(b)]) => Int(a.checked_add(*b).ok_or(ExprError::Overflow(kind))?),
        (OpKind::Sub, [Int(a), Int(b)]) => Int(a.checked_sub(*b).ok_or(ExprError::Overflow(kind))?),
        (OpKind::Concat, [a, b]) => {
            let mut s = String::new();
            for part in [a, b] {
                match part {
                    Str(p) => s.push_str(p),
                    Int(i) => {
                        use core::fmt::Write;
                        let _ = write!(s, "{i}");
                    }
                    Bool(_) => return Err(type_error(kind, args)),
                }
            }
            Str(s)
        }
        (OpKind::Eq, [a, b]) if a.kind() == b.kind() => Bool(a == b),
        (OpKind::Ge | OpKind::Gt | OpKind::Le | OpKind::Lt, [a, b]) => {
            let ord = match (a, b) {
                (Int(x), Int(y)) => x.cmp(y),
                (Str(x), Str(y)) => x.cmp(y),
                _ => return Err(type_error(kind, args)),
            };
            Bool(match kind {
                OpKind::Ge => ord.is_ge(),
                OpKind::Gt => ord.is_gt(),
                OpKind::Le => ord.is_le(),
                _ => ord.is_lt(),
            })
        }
        (OpKind::And, [Bool(a), Bool(b)]) => Bool(*a && *b),
        (OpKind::Or, [Bool(a), Bool(b)]) => Bool(*a || *b),
        (OpKind::Not, [Bool(a)]) => Bool(!a),
        _ => return Err(type_error(kind, args)),
    };
    Ok(out)
}

/// Values bound to futures during a commit.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResolvedValues {
    map: BTreeMap<FutureHandle, Value>,
}

impl ResolvedValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Binds `handle`. Rebinding to an equal value is a no-op; a different
    /// value is an error.
    pub fn bind(&mut self, handle: FutureHandle, value: Value) -> Result<(), ExprError> {
        match self.map.get(&handle) {
            Some(existing) if *existing != value => Err(ExprError::Rebound(handle)),
            Some(_) => Ok(()),
            None => {
                self.map.insert(handle, value);
                Ok(())
            }
        }
    }

    pub fn get(&self, handle: &FutureHandle) -> Option<&Value> {
        self.map.get(handle)
    }

    pub fn contains(&self, handle: &FutureHandle) -> bool {
        self.map.contains_key(handle)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FutureHandle, &Value)> {
        self.map.iter()
    }

    /// Merges another set of bindings, rejecting conflicting rebinds.
    pub fn merge(&mut self, other: ResolvedValues) -> Result<(), ExprError> {
        for (h, v) in other.map {
            self.bind(h, v)?;
        }
        Ok(())
    }
}

impl FromIterator<(FutureHandle, Value)> for ResolvedValues {
    fn from_iter<T: IntoIterator<Item = (FutureHandle, Value)>>(iter: T) -> Self {
        Self { map: iter.into_iter().collect() }
    }
}
