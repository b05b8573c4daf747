use lazykv_core::routing::RouteError;
use lazykv_core::{ExprError, Key};
use std::fmt;

/// Why a transaction did not commit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AbortReason {
    /// A version in the read set changed, or its key was latched by a committer.
    StaleRead,
    /// A condition asserted with is-true resolved differently at commit.
    ConditionInvalidated,
    /// Aborted by an older transaction under wound-wait.
    Wounded,
    NotFound,
    /// Resolution of an expression failed (type error, overflow, non-string key).
    Expr,
    /// The application asked to abort.
    User,
}

impl AbortReason {
    pub const ALL: [AbortReason; 6] = [
        AbortReason::StaleRead,
        AbortReason::ConditionInvalidated,
        AbortReason::Wounded,
        AbortReason::NotFound,
        AbortReason::Expr,
        AbortReason::User,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::StaleRead => "stale_read",
            AbortReason::ConditionInvalidated => "condition_invalidated",
            AbortReason::Wounded => "wounded",
            AbortReason::NotFound => "not_found",
            AbortReason::Expr => "expr",
            AbortReason::User => "user",
        }
    }
}

impl fmt::Display for AbortReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TxnError {
    #[error("transaction is not active")]
    NotActive,
    #[error("transaction aborted: {0}")]
    Aborted(AbortReason),
    #[error("condition reads {0} keys, 2PL conditions must read exactly one")]
    UnsupportedCondition(usize),
    #[error("{0} is not supported by this protocol")]
    Unsupported(&'static str),
    #[error("future h{} ({}) belongs to another transaction", .0.id, .0.key)]
    ForeignHandle(lazykv_core::FutureHandle),
    #[error("expression error: {0}")]
    Expr(ExprError),
    #[error("routing: {0}")]
    Route(RouteError),
    #[error("key {0:?} not found")]
    NotFound(Key),
}

impl From<RouteError> for TxnError {
    fn from(e: RouteError) -> Self {
        TxnError::Route(e)
    }
}
