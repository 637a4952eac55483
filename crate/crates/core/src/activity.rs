//! Activities: the threads, processes and actors that own trace events.
//!
//! Ids are derived from the spawn tree rather than handed out by a global
//! counter, so the same program spawns the same ids in record and replay:
//! the main activity is `0` and the `n`-th child of `p` is `mix(p, n)`.

use std::cell::RefCell;
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::thread;

use parking_lot::Mutex;

use crate::error::{Error, Result};
use crate::event::{EventType, TraceEvent};
use crate::perturb::{Injection, Perturber};
use crate::pool;
use crate::runtime::{ExecutionMode, Shared};
use crate::trace::{RecordBuffer, ReplayQueue};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActivityId(pub u64);

impl ActivityId {
    pub const MAIN: ActivityId = ActivityId(0);
}

impl fmt::Display for ActivityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

/// MurmurHash3 64-bit finalizer; a bijection on `u64`.
pub(crate) fn fmix64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^= x >> 33;
    x
}

/// Child id for the `counter`-th spawn of `parent`.
///
/// For a fixed parent this is injective in `counter` (a bijection applied
/// to distinct offsets of a per-parent base). Across parents two pairs can
/// only collide by a 64-bit hash accident; the registry rejects such a
/// collision with `Error::IdCollision` instead of silently merging queues.
pub fn mix(parent: ActivityId, counter: u64) -> ActivityId {
    let base = fmix64(parent.0 ^ 0x9e37_79b9_7f4a_7c15);
    ActivityId(fmix64(base.wrapping_add(counter).wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivityKind {
    Thread,
    Actor,
    Process,
}

impl ActivityKind {
    pub fn name(self) -> &'static str {
        match self {
            ActivityKind::Thread => "thread",
            ActivityKind::Actor => "actor",
            ActivityKind::Process => "process",
        }
    }
}

#[derive(Debug)]
pub(crate) enum ActivityIo {
    Passive,
    Record(RecordBuffer),
    Replay(ReplayQueue),
}

#[derive(Debug)]
pub(crate) struct ActivityState {
    pub(crate) io: ActivityIo,
    spawn_counter: u64,
    promise_msg_counter: u64,
    perturber: Option<Perturber>,
    log: Option<Vec<TraceEvent>>,
}

impl ActivityState {
    pub(crate) fn queue(&self) -> Option<&ReplayQueue> {
        match &self.io {
            ActivityIo::Replay(q) => Some(q),
            _ => None,
        }
    }

    pub(crate) fn poll(&mut self) -> Option<TraceEvent> {
        let ev = match &mut self.io {
            ActivityIo::Replay(q) => q.poll(),
            _ => None,
        }?;
        if let Some(log) = &mut self.log {
            log.push(ev);
        }
        Some(ev)
    }
}

/// Runtime-side state of one activity.
pub(crate) struct ActivityCore {
    pub(crate) id: ActivityId,
    pub(crate) kind: ActivityKind,
    pub(crate) parent: Option<ActivityId>,
    pub(crate) rt: Arc<Shared>,
    pub(crate) state: Mutex<ActivityState>,
}

impl ActivityCore {
    pub(crate) fn new(
        rt: Arc<Shared>,
        id: ActivityId,
        kind: ActivityKind,
        parent: Option<ActivityId>,
        queue: Option<ReplayQueue>,
    ) -> Self {
        let io = match rt.mode {
            ExecutionMode::Passive => ActivityIo::Passive,
            ExecutionMode::Record => ActivityIo::Record(RecordBuffer::new(id, rt.flush_threshold)),
            ExecutionMode::Replay => {
                ActivityIo::Replay(queue.unwrap_or_else(|| ReplayQueue::new(id, [])))
            }
        };
        let state = ActivityState {
            io,
            spawn_counter: 0,
            promise_msg_counter: 0,
            perturber: rt.perturbation.as_ref().map(|p| p.for_activity(id)),
            log: rt.collect_log.then(Vec::new),
        };
        ActivityCore {
            id,
            kind,
            parent,
            rt,
            state: Mutex::new(state),
        }
    }

    pub(crate) fn mode(&self) -> ExecutionMode {
        self.rt.mode
    }

    /// Appends an event to this activity's buffer. No-op unless recording.
    pub(crate) fn record(&self, kind: EventType, data: u64) {
        if self.rt.mode != ExecutionMode::Record {
            return;
        }
        let ev = TraceEvent::new(kind, data);
        let mut st = self.state.lock();
        if let Some(log) = &mut st.log {
            log.push(ev);
        }
        let flush = match &mut st.io {
            ActivityIo::Record(buf) => buf.push(ev).then(|| buf.take()),
            _ => None,
        };
        drop(st);
        self.rt.stats.note_recorded();
        if let Some(bytes) = flush {
            self.rt.submit_chunk(self.id, bytes);
        }
    }

    pub(crate) fn peek(&self) -> Option<TraceEvent> {
        self.state.lock().queue().and_then(ReplayQueue::peek)
    }

    /// Consumes the head event, which must have one of the expected types.
    pub(crate) fn poll_expect(&self, expected: &[EventType]) -> Result<TraceEvent> {
        let mut st = self.state.lock();
        let head = st.queue().and_then(ReplayQueue::peek);
        let res = match head {
            None => Err(Error::ReplayExhausted {
                activity: self.id,
                expected: expected[0],
            }),
            Some(ev) if !expected.contains(&ev.kind) => Err(Error::mismatch(self.id, expected, ev)),
            Some(_) => Ok(st.poll().expect("head exists")),
        };
        drop(st);
        match res {
            Ok(ev) => {
                self.rt.note_progress();
                self.rt.stats.note_consumed();
                Ok(ev)
            }
            Err(e) => Err(self.rt.fail(e)),
        }
    }

    /// Consumes `n` events already validated by the caller under the lock.
    pub(crate) fn consume_validated(&self, st: &mut ActivityState, n: usize) {
        for _ in 0..n {
            st.poll();
            self.rt.stats.note_consumed();
        }
        self.rt.note_progress();
    }

    pub(crate) fn perturb(&self) {
        if self.rt.perturbation.is_none() {
            return;
        }
        let inj = match &mut self.state.lock().perturber {
            Some(p) => p.next(),
            None => Injection::None,
        };
        inj.apply();
    }

    pub(crate) fn next_promise_msg_id(&self) -> u64 {
        let mut st = self.state.lock();
        let id = st.promise_msg_counter;
        st.promise_msg_counter += 1;
        id
    }

    fn next_spawn_counter(&self) -> u64 {
        let mut st = self.state.lock();
        let n = st.spawn_counter;
        st.spawn_counter += 1;
        n
    }

    /// Hands any buffered events to the sink.
    pub(crate) fn flush(&self) {
        let bytes = match &mut self.state.lock().io {
            ActivityIo::Record(buf) if !buf.is_empty() => buf.take(),
            _ => return,
        };
        self.rt.submit_chunk(self.id, bytes);
    }

    pub(crate) fn remaining_events(&self) -> usize {
        self.state.lock().queue().map_or(0, ReplayQueue::len)
    }

    pub(crate) fn take_log(&self) -> Vec<TraceEvent> {
        self.state.lock().log.take().unwrap_or_default()
    }
}

thread_local! {
    static CURRENT: RefCell<Option<Arc<ActivityCore>>> = const { RefCell::new(None) };
}

pub(crate) fn current_core() -> Result<Arc<ActivityCore>> {
    CURRENT.with(|c| c.borrow().clone()).ok_or(Error::NotAnActivity)
}

/// Installs an activity as current for this OS thread until dropped.
pub(crate) struct CurrentGuard {
    prev: Option<Arc<ActivityCore>>,
}

impl CurrentGuard {
    pub(crate) fn enter(core: Arc<ActivityCore>) -> CurrentGuard {
        let prev = CURRENT.with(|c| c.borrow_mut().replace(core));
        CurrentGuard { prev }
    }
}

impl Drop for CurrentGuard {
    fn drop(&mut self) {
        let prev = self.prev.take();
        CURRENT.with(|c| *c.borrow_mut() = prev);
    }
}

/// Handle to a running activity.
#[derive(Clone)]
pub struct Activity(pub(crate) Arc<ActivityCore>);

impl Activity {
    pub fn id(&self) -> ActivityId {
        self.0.id
    }

    pub fn kind(&self) -> ActivityKind {
        self.0.kind
    }

    pub fn parent(&self) -> Option<ActivityId> {
        self.0.parent
    }

    pub fn mode(&self) -> ExecutionMode {
        self.0.rt.mode
    }
}

impl fmt::Debug for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Activity")
            .field("id", &self.0.id)
            .field("kind", &self.0.kind)
            .finish()
    }
}

/// The activity executing the caller. Inside an actor handler this is the
/// actor, not the pool worker running it.
pub fn current() -> Result<Activity> {
    current_core().map(Activity)
}

/// Creates and registers a child of `parent`, recording or checking the
/// spawn event.
pub(crate) fn spawn_core(parent: &Arc<ActivityCore>, kind: ActivityKind) -> Result<Arc<ActivityCore>> {
    parent.perturb();
    let rt = &parent.rt;
    let child = mix(parent.id, parent.next_spawn_counter());
    match rt.mode {
        ExecutionMode::Record => parent.record(EventType::ActivitySpawn, child.0),
        ExecutionMode::Replay => {
            let ev = parent.poll_expect(&[EventType::ActivitySpawn])?;
            if ev.data != child.0 {
                return Err(rt.fail(Error::mismatch(parent.id, &[EventType::ActivitySpawn], ev)));
            }
        }
        ExecutionMode::Passive => {}
    }
    rt.register(child, kind, Some(parent.id))
}

pub struct JoinHandle<T> {
    id: ActivityId,
    handle: thread::JoinHandle<Result<T>>,
}

impl<T> JoinHandle<T> {
    pub fn id(&self) -> ActivityId {
        self.id
    }

    /// Waits for the activity and returns its result.
    pub fn join(self) -> Result<T> {
        let _blocking = pool::blocking_section();
        self.handle
            .join()
            .map_err(|p| Error::ActivityPanicked(panic_message(&p)))?
    }
}

pub(crate) fn panic_message(p: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = p.downcast_ref::<&str>() {
        (*s).to_string()
    } else if let Some(s) = p.downcast_ref::<String>() {
        s.clone()
    } else {
        "non-string panic payload".to_string()
    }
}

fn spawn_os_thread<T, F>(kind: ActivityKind, body: F) -> Result<JoinHandle<T>>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    let parent = current_core()?;
    let core = spawn_core(&parent, kind)?;
    let rt = Arc::clone(&core.rt);
    let id = core.id;
    rt.live_inc();
    let handle = thread::Builder::new()
        .name(format!("polyrr-{}-{id}", kind.name()))
        .spawn(move || {
            let result = {
                let _current = CurrentGuard::enter(Arc::clone(&core));
                catch_unwind(AssertUnwindSafe(body))
                    .unwrap_or_else(|p| Err(Error::ActivityPanicked(panic_message(&p))))
            };
            if let Err(e) = &result {
                core.rt.activity_failed(core.id, e);
            }
            core.flush();
            core.rt.live_dec();
            result
        });
    match handle {
        Ok(handle) => Ok(JoinHandle { id, handle }),
        Err(e) => {
            rt.live_dec();
            Err(e.into())
        }
    }
}

/// Spawns a thread activity.
pub fn spawn_thread<T, F>(body: F) -> Result<JoinHandle<T>>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    spawn_os_thread(ActivityKind::Thread, body)
}

/// Spawns a CSP process activity. Processes map 1:1 to OS threads.
pub fn spawn_process<T, F>(body: F) -> Result<JoinHandle<T>>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T> + Send + 'static,
{
    spawn_os_thread(ActivityKind::Process, body)
}
