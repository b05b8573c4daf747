//! Allocation-only building blocks for the `lazykv` store.
//!
//! Everything here is pure: no threads, no clocks, no IO. The std crate
//! builds storage, locking and the commit protocols on top of it.
//!
//! - [`expr`]: futures and the lazily evaluated expressions built over them.
//! - [`sexpr`]: the canonical textual form of expressions.
//! - [`matrix`]: the condition-lock compatibility matrix.
//! - [`routing`]: key to partition mapping, and the static analysis that
//!   decides whether a distributed commit needs a second prepare round.
//! - [`serial`]: brute-force serial-equivalence checking of small histories.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod expr;
pub mod matrix;
pub mod routing;
pub mod serial;
pub mod sexpr;
mod value;

pub use expr::{Expr, ExprError, FutureHandle, Node, OpKind, ResolvedValues};
pub use value::Value;

/// Keys are plain UTF-8 strings.
pub type Key = alloc::string::String;
