use std::io;
use std::sync::Arc;

use crate::activity::ActivityId;
use crate::event::{EventType, TraceEvent};

/// Errors raised by the runtime and its concurrency models.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("trace format error: {0}")]
    TraceFormat(String),

    #[error("replay divergence in activity {activity}: expected {expected}, found {found}")]
    ReplayTypeMismatch {
        activity: ActivityId,
        expected: String,
        found: TraceEvent,
    },

    #[error("replay divergence in activity {activity}: trace exhausted while expecting {expected}")]
    ReplayExhausted {
        activity: ActivityId,
        expected: EventType,
    },

    #[error("replay deadlock: no version progress for {0:?}")]
    ReplayDeadlock(std::time::Duration),

    #[error("replay incomplete: activity {activity} left {remaining} unconsumed events")]
    ReplayIncomplete { activity: ActivityId, remaining: usize },

    #[error("execution aborted after a failure in another activity")]
    Aborted,

    #[error("called from code that is not running as a managed activity")]
    NotAnActivity,

    #[error("the calling activity does not hold the lock")]
    NotOwner,

    #[error("promise already resolved")]
    AlreadyResolved,

    #[error("transactions cannot be nested")]
    NestedTransaction,

    /// A transaction read a cell committed after it started. Handled
    /// inside `atomic` by retrying; only escapes if the body swallows it.
    #[error("transaction conflict")]
    Conflict,

    #[error("transaction aborted: {0}")]
    TransactionAborted(String),

    #[error("activity id collision on {0}")]
    IdCollision(ActivityId),

    #[error("activity panicked: {0}")]
    ActivityPanicked(String),

    #[error("actor handler failed: {0}")]
    Handler(String),

    #[error("replay divergence in activity {activity}: {entity} reached version {current} past the recorded {expected}")]
    ReplayVersionPassed {
        activity: ActivityId,
        entity: &'static str,
        expected: u64,
        current: u64,
    },

    #[error(transparent)]
    Io(Arc<io::Error>),
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(Arc::new(err))
    }
}

impl Error {
    /// True for errors that mean the replayed execution left the recorded one.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::ReplayTypeMismatch { .. }
                | Error::ReplayExhausted { .. }
                | Error::ReplayDeadlock(_)
                | Error::ReplayIncomplete { .. }
                | Error::ReplayVersionPassed { .. }
                | Error::IdCollision(_)
        )
    }

    /// True for errors caused by an unreadable or mismatched trace file.
    pub fn is_format(&self) -> bool {
        matches!(self, Error::TraceFormat(_) | Error::Io(_))
    }

    /// Errors that poison the whole execution rather than a single operation.
    pub(crate) fn is_fatal(&self) -> bool {
        self.is_divergence() || matches!(self, Error::TraceFormat(_))
    }

    pub(crate) fn mismatch(activity: ActivityId, expected: &[EventType], found: TraceEvent) -> Self {
        let expected = expected
            .iter()
            .map(|t| t.name())
            .collect::<Vec<_>>()
            .join(" or ");
        Error::ReplayTypeMismatch {
            activity,
            expected,
            found,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
