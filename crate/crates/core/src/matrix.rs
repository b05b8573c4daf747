//! Condition-lock compatibility.
//!
//! Rows are the requested mode, columns the mode already held by another
//! transaction. `R` and `W` are classic read/write locks. `RCond` is a read
//! lock carrying an asserted condition. A write-value request is classified
//! against each installed condition: `WSat` when the value to be written
//! keeps the condition's result, `WViol` when it flips it.

use crate::expr::{Expr, FutureHandle};
use crate::{ResolvedValues, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModeClass {
    R,
    W,
    RCond,
    WSat,
    WViol,
}

impl ModeClass {
    pub const ALL: [ModeClass; 5] = [ModeClass::R, ModeClass::W, ModeClass::RCond, ModeClass::WSat, ModeClass::WViol];

    fn index(self) -> usize {
        match self {
            ModeClass::R => 0,
            ModeClass::W => 1,
            ModeClass::RCond => 2,
            ModeClass::WSat => 3,
            ModeClass::WViol => 4,
        }
    }
}

#[rustfmt::skip]
const TABLE: [[bool; 5]; 5] = [
    //          R      W      RCond  WSat   WViol
    /* R     */ [true,  false, true,  false, false],
    /* W     */ [false, false, false, false, false],
    /* RCond */ [true,  false, true,  true,  false],
    /* WSat  */ [false, false, true,  false, false],
    /* WViol */ [false, false, false, false, false],
];

/// Whether a request in mode `requested` is granted while another
/// transaction holds `held`.
pub fn compatible(requested: ModeClass, held: ModeClass) -> bool {
    TABLE[requested.index()][held.index()]
}

/// Evaluates a single-key condition as if `value` were stored under it.
///
/// Every `Read` leaf is bound to `value`. Evaluation errors count as a
/// violated condition.
pub fn condition_holds(cond: &Expr, expected: bool, value: &Value) -> bool {
    let rv: ResolvedValues = cond.keys().into_iter().map(|h: FutureHandle| (h, value.clone())).collect();
    matches!(cond.resolve(&rv), Ok(Value::Bool(b)) if b == expected)
}

/// Classifies a write of `value` against one installed condition.
pub fn classify_write(cond: &Expr, expected: bool, value: &Value) -> ModeClass {
    if condition_holds(cond, expected, value) {
        ModeClass::WSat
    } else {
        ModeClass::WViol
    }
}
