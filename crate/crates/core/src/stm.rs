//! Software transactional memory with a global commit lock.
//!
//! Transactions work on private copies and retry until they commit. Every
//! successful commit, read-only or not, is one interaction on the run's
//! commit point and records `TX_COMMIT` with its version. Replay lets a
//! transaction commit only when the commit point reaches its recorded
//! version; earlier attempts are discarded and the body runs again.
//! Failed attempts record nothing, so retry counts may differ in replay.

use std::any::Any;
use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering::SeqCst};
use std::sync::Arc;

use parking_lot::Mutex;

use crate::activity::{current_core, ActivityCore};
use crate::audit::{next_serial, EntityKey};
use crate::error::{Error, Result};
use crate::event::EventType;
use crate::runtime::ExecutionMode;
use crate::versioned::VersionedEntity;

/// Commit lock, commit version and stamp clock of one execution.
#[derive(Debug, Default)]
pub(crate) struct CommitPoint {
    lock: Mutex<()>,
    version: VersionedEntity,
    /// Advances on every commit in every mode; stamps written cells.
    clock: AtomicU64,
}

struct Slot<T> {
    value: T,
    stamp: u64,
}

struct TxCell<T> {
    serial: u64,
    slot: Mutex<Slot<T>>,
}

trait Stamped: Send + Sync {
    fn stamp(&self) -> u64;
}

impl<T: Send> Stamped for TxCell<T> {
    fn stamp(&self) -> u64 {
        self.slot.lock().stamp
    }
}

/// A transactional cell.
pub struct TxRef<T> {
    cell: Arc<TxCell<T>>,
}

impl<T> Clone for TxRef<T> {
    fn clone(&self) -> Self {
        TxRef {
            cell: Arc::clone(&self.cell),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for TxRef<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slot = self.cell.slot.lock();
        write!(f, "TxRef({:?} @{})", slot.value, slot.stamp)
    }
}

impl<T: Clone + Send + Sync + 'static> TxRef<T> {
    pub fn new(value: T) -> Self {
        TxRef {
            cell: Arc::new(TxCell {
                serial: next_serial(),
                slot: Mutex::new(Slot { value, stamp: 0 }),
            }),
        }
    }

    /// Last committed value, read outside any transaction.
    pub fn get(&self) -> T {
        self.cell.slot.lock().value.clone()
    }
}

trait WriteEntry: Send {
    fn as_any_mut(&mut self) -> &mut dyn Any;
    fn apply(self: Box<Self>, stamp: u64);
}

struct Pending<T> {
    cell: Arc<TxCell<T>>,
    value: T,
}

impl<T: Send + Sync + 'static> WriteEntry for Pending<T> {
    fn as_any_mut(&mut self) -> &mut dyn Any {
        &mut self.value
    }

    fn apply(self: Box<Self>, stamp: u64) {
        let mut slot = self.cell.slot.lock();
        slot.value = self.value;
        slot.stamp = stamp;
    }
}

/// Per-attempt working state: observed stamps and private copies.
pub struct Transaction {
    start: u64,
    reads: HashMap<u64, (u64, Arc<dyn Stamped>)>,
    writes: HashMap<u64, Box<dyn WriteEntry>>,
}

impl Transaction {
    /// Reads the working copy, or the committed value if not yet written.
    /// Fails with a conflict when the cell changed after the attempt began.
    pub fn read<T: Clone + Send + Sync + 'static>(&mut self, r: &TxRef<T>) -> Result<T> {
        let id = r.cell.serial;
        if let Some(w) = self.writes.get_mut(&id) {
            let v = w.as_any_mut().downcast_mut::<T>().expect("one type per cell");
            return Ok(v.clone());
        }
        let slot = r.cell.slot.lock();
        if slot.stamp > self.start {
            return Err(Error::Conflict);
        }
        let (value, stamp) = (slot.value.clone(), slot.stamp);
        drop(slot);
        self.reads
            .entry(id)
            .or_insert_with(|| (stamp, Arc::clone(&r.cell) as Arc<dyn Stamped>));
        Ok(value)
    }

    /// Replaces the working copy.
    pub fn write<T: Clone + Send + Sync + 'static>(&mut self, r: &TxRef<T>, value: T) {
        let id = r.cell.serial;
        match self.writes.get_mut(&id) {
            Some(w) => *w.as_any_mut().downcast_mut::<T>().expect("one type per cell") = value,
            None => {
                self.writes.insert(
                    id,
                    Box::new(Pending {
                        cell: Arc::clone(&r.cell),
                        value,
                    }),
                );
            }
        }
    }

    /// Reads, applies `f` and writes back.
    pub fn modify<T: Clone + Send + Sync + 'static>(&mut self, r: &TxRef<T>, f: impl FnOnce(T) -> T) -> Result<()> {
        let v = self.read(r)?;
        self.write(r, f(v));
        Ok(())
    }

    /// Abandons the transaction; `atomic` returns `TransactionAborted`.
    pub fn abort<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Error::TransactionAborted(reason.into()))
    }

    fn conflicts(&self) -> bool {
        self.reads.values().any(|(seen, cell)| cell.stamp() != *seen)
    }

    fn apply(self, stamp: u64) {
        for (_, w) in self.writes {
            w.apply(stamp);
        }
    }
}

thread_local! {
    static IN_TX: Cell<bool> = const { Cell::new(false) };
}

struct TxFlag;

impl TxFlag {
    fn enter() -> Result<TxFlag> {
        if IN_TX.with(|f| f.replace(true)) {
            return Err(Error::NestedTransaction);
        }
        Ok(TxFlag)
    }
}

impl Drop for TxFlag {
    fn drop(&mut self) {
        IN_TX.with(|f| f.set(false));
    }
}

/// Runs `body` as a transaction, retrying until it commits. Errors from
/// the body other than conflicts end the transaction without effect.
pub fn atomic<T>(mut body: impl FnMut(&mut Transaction) -> Result<T>) -> Result<T> {
    let act = current_core()?;
    let _flag = TxFlag::enter()?;
    let cp = &act.rt.commit_point;
    loop {
        act.perturb();
        let mut tx = Transaction {
            start: cp.clock.load(SeqCst),
            reads: HashMap::new(),
            writes: HashMap::new(),
        };
        let out = match body(&mut tx) {
            Ok(out) => out,
            Err(Error::Conflict) => {
                act.rt.stats.retries.fetch_add(1, SeqCst);
                continue;
            }
            Err(e) => return Err(e),
        };
        if commit(&act, cp, tx)? {
            act.rt.stats.commits.fetch_add(1, SeqCst);
            return Ok(out);
        }
        act.rt.stats.retries.fetch_add(1, SeqCst);
    }
}

fn commit(act: &ActivityCore, cp: &CommitPoint, tx: Transaction) -> Result<bool> {
    let rt = &act.rt;
    let guard = cp.lock.lock();
    if tx.conflicts() {
        return Ok(false);
    }
    if rt.mode == ExecutionMode::Replay {
        let head = match act.peek() {
            Some(ev) if ev.kind == EventType::TxCommit => ev,
            Some(ev) => return Err(rt.fail(Error::mismatch(act.id, &[EventType::TxCommit], ev))),
            None => {
                return Err(rt.fail(Error::ReplayExhausted {
                    activity: act.id,
                    expected: EventType::TxCommit,
                }))
            }
        };
        if head.data != cp.version.version() {
            drop(guard);
            cp.version.wait_for(act, head.data, "commit point")?;
            return Ok(false);
        }
        act.poll_expect(&[EventType::TxCommit])?;
    }
    cp.version
        .record_and_increment(act, EventType::TxCommit, EntityKey::CommitPoint);
    // publish the stamp only after every write landed, so attempts that
    // start meanwhile see the new cells as conflicts
    let stamp = cp.clock.load(SeqCst) + 1;
    tx.apply(stamp);
    cp.clock.store(stamp, SeqCst);
    Ok(true)
}
