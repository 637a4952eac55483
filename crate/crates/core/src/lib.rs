//! Record and replay for programs mixing threads and locks, actors with
//! promises, CSP channels and software transactional memory.
//!
//! All four models share one mechanism: every passive entity (lock,
//! mailbox, promise, channel, commit point) carries a version counter, and
//! each nondeterministic interaction appends a 9-octet event holding that
//! version to the acting activity's trace. Replay consumes the events in
//! per-activity order and holds each interaction back until its entity
//! reaches the recorded version.
//!
//! ```
//! use polyrr::{locks::RRLock, spawn_thread, Config, Runtime, TraceSink, TraceSource};
//!
//! let program = || {
//!     let lock = RRLock::new();
//!     let l = lock.clone();
//!     let t = spawn_thread(move || l.with(|| Ok(())))?;
//!     lock.with(|| Ok(()))?;
//!     t.join()
//! };
//! let rec = Runtime::run(Config::record(TraceSink::Memory), program).unwrap();
//! let trace = rec.trace.unwrap();
//! Runtime::run(Config::replay(TraceSource::Bytes(trace)), program).unwrap();
//! ```

pub mod activity;
pub mod actors;
pub mod audit;
pub mod csp;
pub mod error;
pub mod event;
pub mod locks;
pub mod perturb;
mod pool;
pub mod runtime;
pub mod stm;
pub mod trace;
mod versioned;

pub use activity::{current, mix, spawn_process, spawn_thread, Activity, ActivityId, ActivityKind, JoinHandle};
pub use actors::{spawn_actor, Actor, ActorRef, Context, Promise};
pub use audit::{EntityKey, VersionAudit};
pub use csp::Channel;
pub use error::{Error, Result};
pub use event::{EventType, TraceEvent, EVENT_SIZE};
pub use locks::{RRCondition, RRGuard, RRLock};
pub use perturb::PerturbationPlan;
pub use runtime::{
    delay_interaction, increment_version, record_interaction, ActivityInfo, Config, ExecutionMode,
    RunReport, RunStats, Runtime, TraceSource,
};
pub use stm::{atomic, Transaction, TxRef};
pub use trace::{parse_trace, read_trace, ActorStrategy, ParsedTrace, TraceHeader, TraceSink};
pub use versioned::VersionedEntity;
