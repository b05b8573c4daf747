//! Exhaustive serial-equivalence check for small histories.
//!
//! A history passes when some order of its committed transactions, replayed
//! one at a time from the initial state, reaches the observed final state.
//! Only orders that respect real time are tried: a transaction that
//! committed before another one began must come first.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::{Key, Value};

pub type State = BTreeMap<Key, Value>;

/// Largest history the checker will enumerate.
pub const MAX_TXNS: usize = 8;

/// A transaction's logical effect, replayable against a state.
pub trait Replay {
    fn apply(&self, state: &mut State);
}

impl<F: Fn(&mut State)> Replay for F {
    fn apply(&self, state: &mut State) {
        self(state)
    }
}

#[derive(Clone, Debug)]
pub struct Committed<T> {
    pub txn: T,
    /// Logical time the transaction began.
    pub begin: u64,
    /// Logical time of its commit point.
    pub commit: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SerialCheckError {
    TooLarge(usize),
}

impl fmt::Display for SerialCheckError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SerialCheckError::TooLarge(n) => write!(f, "{n} transactions exceed the exhaustive limit of {MAX_TXNS}"),
        }
    }
}

pub fn check_serial_equivalence<T: Replay>(
    log: &[Committed<T>],
    initial: &State,
    observed: &State,
) -> Result<bool, SerialCheckError> {
    if log.len() > MAX_TXNS {
        return Err(SerialCheckError::TooLarge(log.len()));
    }
    let n = log.len();
    // must_precede[j] has bit i set when i committed before j began.
    let must_precede: Vec<u32> = (0..n)
        .map(|j| (0..n).filter(|&i| i != j && log[i].commit < log[j].begin).fold(0u32, |m, i| m | (1 << i)))
        .collect();
    Ok(search(log, &must_precede, 0, initial, observed))
}

fn search<T: Replay>(log: &[Committed<T>], must_precede: &[u32], placed: u32, state: &State, observed: &State) -> bool {
    let n = log.len();
    if placed.count_ones() as usize == n {
        return state == observed;
    }
    for j in 0..n {
        let bit = 1u32 << j;
        if placed & bit != 0 || must_precede[j] & !placed != 0 {
            continue;
        }
        let mut next = state.clone();
        log[j].txn.apply(&mut next);
        if search(log, must_precede, placed | bit, &next, observed) {
            return true;
        }
    }
    false
}
