//! Reentrant lock with condition variables.
//!
//! Every non-reentrant acquisition and every reacquisition after a
//! condition wait is one interaction on the lock's version: `LOCK`,
//! `AWAIT_SIGNALED` or `AWAIT_TIMEOUT`, each carrying the version observed
//! while holding the lock. Releases and signals are not recorded; they are
//! ordered by the surrounding acquisitions.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex, MutexGuard};

use crate::activity::{current_core, ActivityCore, ActivityId};
use crate::audit::{next_serial, EntityKey};
use crate::error::{Error, Result};
use crate::event::EventType;
use crate::pool;
use crate::runtime::{ExecutionMode, TICK};
use crate::versioned::VersionedEntity;

#[derive(Debug, Default)]
struct LockState {
    owner: Option<ActivityId>,
    depth: usize,
    next_ticket: u64,
    queues: HashMap<u64, VecDeque<u64>>,
    signaled: HashSet<u64>,
}

#[derive(Debug)]
struct LockInner {
    serial: u64,
    state: Mutex<LockState>,
    cv: Condvar,
    version: VersionedEntity,
    next_condition: AtomicU64,
}

/// A reentrant mutual-exclusion lock whose acquisition order is recorded
/// and replayed.
#[derive(Debug, Clone)]
pub struct RRLock {
    inner: Arc<LockInner>,
}

impl Default for RRLock {
    fn default() -> Self {
        Self::new()
    }
}

impl RRLock {
    pub fn new() -> Self {
        RRLock {
            inner: Arc::new(LockInner {
                serial: next_serial(),
                state: Mutex::new(LockState::default()),
                cv: Condvar::new(),
                version: VersionedEntity::new(),
                next_condition: AtomicU64::new(0),
            }),
        }
    }

    pub fn version(&self) -> u64 {
        self.inner.version.version()
    }

    pub fn acquire(&self) -> Result<()> {
        let act = current_core()?;
        act.perturb();
        if self.inner.state.lock().owner == Some(act.id) {
            self.inner.state.lock().depth += 1;
            return Ok(());
        }
        self.inner.version.delay(&act, EventType::Lock, "lock")?;
        let mut st = self.inner.take(&act)?;
        st.depth = 1;
        self.inner.version.record_and_increment(&act, EventType::Lock, self.inner.key());
        Ok(())
    }

    /// Releases one level of ownership.
    pub fn release(&self) -> Result<()> {
        let act = current_core()?;
        let mut st = self.inner.state.lock();
        if st.owner != Some(act.id) {
            return Err(Error::NotOwner);
        }
        st.depth -= 1;
        if st.depth == 0 {
            st.owner = None;
            self.inner.cv.notify_all();
        }
        Ok(())
    }

    /// Acquires and returns a guard that releases on drop.
    pub fn lock(&self) -> Result<RRGuard<'_>> {
        self.acquire()?;
        Ok(RRGuard { lock: self })
    }

    /// Runs `f` while holding the lock.
    pub fn with<T>(&self, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let _g = self.lock()?;
        f()
    }

    pub fn is_held_by_current(&self) -> bool {
        match current_core() {
            Ok(act) => self.inner.state.lock().owner == Some(act.id),
            Err(_) => false,
        }
    }

    pub fn new_condition(&self) -> RRCondition {
        RRCondition {
            lock: Arc::clone(&self.inner),
            id: self.inner.next_condition.fetch_add(1, SeqCst),
        }
    }
}

impl LockInner {
    fn key(&self) -> EntityKey {
        EntityKey::Lock(self.serial)
    }

    /// Blocks until the host lock is free and takes it.
    fn take(&self, act: &ActivityCore) -> Result<MutexGuard<'_, LockState>> {
        let mut st = self.state.lock();
        if st.owner.is_some() {
            let _blocking = pool::blocking_section();
            while st.owner.is_some() {
                act.rt.check_live()?;
                self.cv.wait_for(&mut st, TICK);
            }
        }
        st.owner = Some(act.id);
        Ok(st)
    }

    /// Reacquires after a condition wait and records the outcome.
    fn reacquire(&self, act: &ActivityCore, kind: EventType, depth: usize) -> Result<()> {
        self.version.delay(act, kind, "lock")?;
        let mut st = self.take(act)?;
        st.depth = depth;
        self.version.record_and_increment(act, kind, self.key());
        Ok(())
    }

    /// Enqueues a ticket on `cond` and fully releases the lock.
    fn park(&self, act: &ActivityCore, cond: u64, enqueue: bool) -> Result<(u64, usize)> {
        let mut st = self.state.lock();
        if st.owner != Some(act.id) {
            return Err(Error::NotOwner);
        }
        let ticket = st.next_ticket;
        st.next_ticket += 1;
        if enqueue {
            st.queues.entry(cond).or_default().push_back(ticket);
        }
        let depth = std::mem::replace(&mut st.depth, 0);
        st.owner = None;
        self.cv.notify_all();
        Ok((ticket, depth))
    }

    /// Waits for `ticket` to be signaled or the deadline to pass. On timeout
    /// the ticket is withdrawn; a signal that raced the timeout wins.
    fn wait_signal(
        &self,
        act: &ActivityCore,
        cond: u64,
        ticket: u64,
        deadline: Option<Instant>,
    ) -> Result<bool> {
        let _blocking = pool::blocking_section();
        let mut st = self.state.lock();
        loop {
            if st.signaled.remove(&ticket) {
                return Ok(true);
            }
            if let Err(e) = act.rt.check_live() {
                withdraw(&mut st, cond, ticket);
                return Err(e);
            }
            let now = Instant::now();
            let tick = match deadline {
                Some(d) if now >= d => {
                    withdraw(&mut st, cond, ticket);
                    return Ok(false);
                }
                Some(d) => TICK.min(d - now),
                None => TICK,
            };
            self.cv.wait_for(&mut st, tick);
        }
    }
}

fn withdraw(st: &mut LockState, cond: u64, ticket: u64) {
    if let Some(q) = st.queues.get_mut(&cond) {
        q.retain(|t| *t != ticket);
    }
}

/// Releases one level of an [`RRLock`] when dropped.
#[must_use = "the lock is released when the guard is dropped"]
pub struct RRGuard<'a> {
    lock: &'a RRLock,
}

impl Drop for RRGuard<'_> {
    fn drop(&mut self) {
        let _ = self.lock.release();
    }
}

/// Condition variable bound to one [`RRLock`]. Waiters are woken in FIFO
/// order.
#[derive(Debug, Clone)]
pub struct RRCondition {
    lock: Arc<LockInner>,
    id: u64,
}

impl RRCondition {
    /// Releases the lock, waits for a signal, and reacquires the lock at
    /// the same reentrancy depth.
    pub fn wait(&self) -> Result<()> {
        let act = current_core()?;
        act.perturb();
        let (ticket, depth) = self.lock.park(&act, self.id, true)?;
        self.lock.wait_signal(&act, self.id, ticket, None)?;
        self.lock.reacquire(&act, EventType::AwaitSignaled, depth)
    }

    /// Like [`wait`](Self::wait) but gives up after `timeout`. Returns
    /// whether a signal was received. In replay the outcome comes from the
    /// trace: a recorded timeout is reproduced without a timer.
    pub fn wait_timeout(&self, timeout: Duration) -> Result<bool> {
        let act = current_core()?;
        act.perturb();
        if act.mode() == ExecutionMode::Replay {
            let timed_out = match act.peek() {
                Some(ev) if ev.kind == EventType::AwaitTimeout => true,
                Some(ev) if ev.kind == EventType::AwaitSignaled => false,
                Some(ev) => {
                    let err = Error::mismatch(
                        act.id,
                        &[EventType::AwaitSignaled, EventType::AwaitTimeout],
                        ev,
                    );
                    return Err(act.rt.fail(err));
                }
                None => {
                    return Err(act.rt.fail(Error::ReplayExhausted {
                        activity: act.id,
                        expected: EventType::AwaitSignaled,
                    }))
                }
            };
            let (ticket, depth) = self.lock.park(&act, self.id, !timed_out)?;
            if timed_out {
                self.lock.reacquire(&act, EventType::AwaitTimeout, depth)?;
                return Ok(false);
            }
            self.lock.wait_signal(&act, self.id, ticket, None)?;
            self.lock.reacquire(&act, EventType::AwaitSignaled, depth)?;
            return Ok(true);
        }
        let deadline = Instant::now() + timeout;
        let (ticket, depth) = self.lock.park(&act, self.id, true)?;
        let signaled = self.lock.wait_signal(&act, self.id, ticket, Some(deadline))?;
        let kind = if signaled {
            EventType::AwaitSignaled
        } else {
            EventType::AwaitTimeout
        };
        self.lock.reacquire(&act, kind, depth)?;
        Ok(signaled)
    }

    /// Wakes the longest-waiting waiter, if any. The caller must hold the lock.
    pub fn signal(&self) -> Result<()> {
        self.wake(false)
    }

    /// Wakes every waiter. The caller must hold the lock.
    pub fn signal_all(&self) -> Result<()> {
        self.wake(true)
    }

    fn wake(&self, all: bool) -> Result<()> {
        let act = current_core()?;
        act.perturb();
        let mut st = self.lock.state.lock();
        if st.owner != Some(act.id) {
            return Err(Error::NotOwner);
        }
        let st = &mut *st;
        if let Some(q) = st.queues.get_mut(&self.id) {
            let n = if all { q.len() } else { q.len().min(1) };
            for t in q.drain(..n) {
                st.signaled.insert(t);
            }
        }
        self.lock.cv.notify_all();
        Ok(())
    }
}
