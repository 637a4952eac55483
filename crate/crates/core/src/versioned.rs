use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering::SeqCst};

use parking_lot::{Condvar, Mutex};

use crate::activity::ActivityCore;
use crate::audit::EntityKey;
use crate::error::{Error, Result};
use crate::event::{EventType, TraceEvent};
use crate::pool;
use crate::runtime::{ExecutionMode, Shared, TICK};

/// Version counter of a passive entity (lock, channel, promise, commit
/// point), plus the wait point replaying activities block on until the
/// counter reaches the version stored in their next event.
#[derive(Debug, Default)]
pub struct VersionedEntity {
    value: AtomicU64,
    gate: Mutex<()>,
    cv: Condvar,
    waiters: AtomicUsize,
}

impl VersionedEntity {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.value.load(SeqCst)
    }

    /// Bumps the counter in record and replay; returns the new version.
    /// In passive mode the counter is left alone and its value returned.
    pub(crate) fn increment(&self, rt: &Shared) -> u64 {
        if rt.mode == ExecutionMode::Passive {
            return self.version();
        }
        let v = self.value.fetch_add(1, SeqCst) + 1;
        if rt.mode == ExecutionMode::Replay {
            rt.note_progress();
            if self.waiters.load(SeqCst) > 0 {
                let _g = self.gate.lock();
                self.cv.notify_all();
            }
        }
        v
    }

    /// Records `kind` with the current version (record mode only) and then
    /// increments. Returns the version the interaction happened at. The
    /// caller must hold whatever serializes interactions on this entity.
    pub(crate) fn record_and_increment(&self, act: &ActivityCore, kind: EventType, key: EntityKey) -> u64 {
        let v = self.version();
        act.record(kind, v);
        let rt = &act.rt;
        let next = self.increment(rt);
        if rt.mode == ExecutionMode::Record && rt.auditing() {
            rt.audit_event(key, v);
            rt.audit_final(key, next);
        }
        v
    }

    /// Consumes the caller's next event, which must be `expected`, and
    /// blocks until this entity reaches the version it carries. Returns
    /// `None` outside replay.
    pub(crate) fn delay(
        &self,
        act: &ActivityCore,
        expected: EventType,
        entity: &'static str,
    ) -> Result<Option<TraceEvent>> {
        if act.mode() != ExecutionMode::Replay {
            return Ok(None);
        }
        let ev = act.poll_expect(&[expected])?;
        self.wait_for(act, ev.data, entity)?;
        Ok(Some(ev))
    }

    pub(crate) fn wait_for(&self, act: &ActivityCore, target: u64, entity: &'static str) -> Result<()> {
        let passed = |current: u64| {
            act.rt.fail(Error::ReplayVersionPassed {
                activity: act.id,
                entity,
                expected: target,
                current,
            })
        };
        let current = self.version();
        if current == target {
            return Ok(());
        }
        if current > target {
            return Err(passed(current));
        }
        let _blocking = pool::blocking_section();
        let mut g = self.gate.lock();
        self.waiters.fetch_add(1, SeqCst);
        let res = loop {
            let current = self.version();
            if current == target {
                break Ok(());
            }
            if current > target {
                break Err(passed(current));
            }
            if let Err(e) = act.rt.check_live() {
                break Err(e);
            }
            self.cv.wait_for(&mut g, TICK);
        };
        self.waiters.fetch_sub(1, SeqCst);
        res
    }
}
