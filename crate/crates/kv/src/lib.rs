//! A transactional key-value store with lazily resolved futures.
//!
//! Transactions can read futures instead of values, write functions of
//! those futures, write to keys computed from futures, and assert
//! conditions with is-true. Commits run under OCC or strict 2PL, each in a
//! classic and a future-aware flavour, over one or more partitions.
//!
//! ```
//! use lazykv::{Cluster, Expr, Protocol};
//!
//! let db = Cluster::centralized(Protocol::OccLsd);
//! db.load("stock", 42).unwrap();
//! let mut t = db.begin();
//! let stock = t.read_future("stock").unwrap();
//! let qty = Expr::constant(10);
//! if t.is_true(&stock.ge(&qty)).unwrap() {
//!     t.write("stock", stock.sub(&qty)).unwrap();
//! }
//! t.commit().unwrap();
//! assert_eq!(db.get("stock").unwrap().value.as_int(), Some(32));
//! ```

pub mod bench;
pub mod dist;
pub mod error;
pub mod locks;
mod occ;
pub mod store;
mod tpl;
pub mod transport;
pub mod txn;

pub use dist::{Cluster, Partition};
pub use error::{AbortReason, TxnError};
pub use lazykv_core::routing::{PartitionId, PartitionMap};
pub use lazykv_core::{Expr, FutureHandle, Key, OpKind, ResolvedValues, Value};
pub use txn::{Protocol, Status, Txn, TxnContext};
