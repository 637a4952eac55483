//! Unbuffered rendezvous channels.
//!
//! One rendezvous is one interaction on the channel's version. The writer
//! records `CHANNEL_WRITE` before depositing and the reader records
//! `CHANNEL_READ` when taking the value, both with the same version; the
//! writer increments once the reader has taken the value. Each end is
//! serialized, so at most one writer and one reader are inside at a time.

use std::fmt;
use std::sync::Arc;

use parking_lot::{Condvar, Mutex, MutexGuard};

use crate::activity::{current_core, ActivityCore};
use crate::audit::{next_serial, EntityKey};
use crate::error::Result;
use crate::event::EventType;
use crate::pool;
use crate::runtime::{ExecutionMode, TICK};
use crate::versioned::VersionedEntity;

struct Cell<T> {
    writer_busy: bool,
    reader_busy: bool,
    slot: Option<T>,
    taken: bool,
}

struct ChannelInner<T> {
    serial: u64,
    cell: Mutex<Cell<T>>,
    cv: Condvar,
    version: VersionedEntity,
}

/// Zero-capacity channel. Clones share the same channel.
pub struct Channel<T> {
    inner: Arc<ChannelInner<T>>,
}

impl<T> Clone for Channel<T> {
    fn clone(&self) -> Self {
        Channel {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T> fmt::Debug for Channel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Channel(#{}, v{})", self.inner.serial, self.inner.version.version())
    }
}

impl<T: Send> Default for Channel<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Send> Channel<T> {
    pub fn new() -> Self {
        Channel {
            inner: Arc::new(ChannelInner {
                serial: next_serial(),
                cell: Mutex::new(Cell {
                    writer_busy: false,
                    reader_busy: false,
                    slot: None,
                    taken: false,
                }),
                cv: Condvar::new(),
                version: VersionedEntity::new(),
            }),
        }
    }

    /// Completed rendezvous so far (record and replay).
    pub fn version(&self) -> u64 {
        self.inner.version.version()
    }

    /// Blocks until a reader takes `msg`.
    pub fn write(&self, msg: T) -> Result<()> {
        let act = current_core()?;
        act.perturb();
        let inner = &*self.inner;
        inner.version.delay(&act, EventType::ChannelWrite, "channel")?;
        let mut cell = inner.cell.lock();
        let _blocking = pool::blocking_section();
        inner.wait_until(&act, &mut cell, |c| !c.writer_busy)?;
        cell.writer_busy = true;
        let v = inner.version.version();
        act.record(EventType::ChannelWrite, v);
        cell.slot = Some(msg);
        cell.taken = false;
        inner.cv.notify_all();
        let res = inner.wait_until(&act, &mut cell, |c| c.taken);
        if res.is_ok() {
            cell.taken = false;
            let next = inner.version.increment(&act.rt);
            inner.audit(&act, EntityKey::ChannelWrite(inner.serial), v, next);
        } else {
            cell.slot = None;
        }
        cell.writer_busy = false;
        inner.cv.notify_all();
        res
    }

    /// Blocks until a writer offers a value and returns it.
    pub fn read(&self) -> Result<T> {
        let act = current_core()?;
        act.perturb();
        let inner = &*self.inner;
        inner.version.delay(&act, EventType::ChannelRead, "channel")?;
        let mut cell = inner.cell.lock();
        let _blocking = pool::blocking_section();
        inner.wait_until(&act, &mut cell, |c| !c.reader_busy)?;
        cell.reader_busy = true;
        let res = inner.wait_until(&act, &mut cell, |c| c.slot.is_some());
        let out = res.map(|()| {
            let v = inner.version.version();
            act.record(EventType::ChannelRead, v);
            inner.audit(&act, EntityKey::ChannelRead(inner.serial), v, v + 1);
            cell.taken = true;
            cell.slot.take().expect("slot is filled")
        });
        cell.reader_busy = false;
        inner.cv.notify_all();
        out
    }
}

impl<T> ChannelInner<T> {
    fn wait_until(
        &self,
        act: &ActivityCore,
        cell: &mut MutexGuard<'_, Cell<T>>,
        ready: impl Fn(&Cell<T>) -> bool,
    ) -> Result<()> {
        while !ready(cell) {
            act.rt.check_live()?;
            self.cv.wait_for(cell, TICK);
        }
        Ok(())
    }

    fn audit(&self, act: &ActivityCore, key: EntityKey, v: u64, next: u64) {
        let rt = &act.rt;
        if rt.mode == ExecutionMode::Record && rt.auditing() {
            rt.audit_event(key, v);
            rt.audit_final(key, next);
        }
    }
}
