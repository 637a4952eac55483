//! Execution configuration, the per-run shared state, and the framework
//! primitives every concurrency model is built from.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering::SeqCst};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use parking_lot::{Condvar, Mutex};

use crate::activity::{
    current_core, panic_message, ActivityCore, ActivityId, ActivityKind, CurrentGuard,
};
use crate::audit::{EntityKey, VersionAudit};
use crate::error::{Error, Result};
use crate::event::{EventType, TraceEvent};
use crate::perturb::PerturbationPlan;
use crate::pool::{Pool, Runnable};
use crate::stm::CommitPoint;
use crate::trace::{
    parse_trace, ActorStrategy, ReplayQueue, TraceHeader, TraceSink, TraceWriter,
    DEFAULT_FLUSH_THRESHOLD,
};
use crate::versioned::VersionedEntity;

/// Poll interval for blocked waits re-checking abort and watchdog state.
pub(crate) const TICK: Duration = Duration::from_millis(10);

const ABORT_GRACE: Duration = Duration::from_secs(2);

/// Fixed for one execution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Passive,
    Record,
    Replay,
}

impl ExecutionMode {
    pub fn name(self) -> &'static str {
        match self {
            ExecutionMode::Passive => "passive",
            ExecutionMode::Record => "record",
            ExecutionMode::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceSource {
    File(PathBuf),
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone)]
pub struct Config {
    pub mode: ExecutionMode,
    pub strategy: ActorStrategy,
    pub sink: TraceSink,
    pub source: Option<TraceSource>,
    pub pool_size: usize,
    pub watchdog: Duration,
    pub flush_threshold: usize,
    pub perturbation: Option<PerturbationPlan>,
    pub collect_log: bool,
    pub audit: bool,
}

impl Config {
    fn base(mode: ExecutionMode) -> Config {
        Config {
            mode,
            strategy: ActorStrategy::SenderSide,
            sink: TraceSink::Discard,
            source: None,
            pool_size: std::thread::available_parallelism().map_or(4, |n| n.get()),
            watchdog: Duration::from_secs(30),
            flush_threshold: DEFAULT_FLUSH_THRESHOLD,
            perturbation: None,
            collect_log: false,
            audit: false,
        }
    }

    pub fn passive() -> Config {
        Config::base(ExecutionMode::Passive)
    }

    pub fn record(sink: TraceSink) -> Config {
        Config {
            sink,
            ..Config::base(ExecutionMode::Record)
        }
    }

    pub fn replay(source: TraceSource) -> Config {
        Config {
            source: Some(source),
            ..Config::base(ExecutionMode::Replay)
        }
    }

    pub fn with_strategy(mut self, strategy: ActorStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_pool_size(mut self, n: usize) -> Self {
        self.pool_size = n.max(1);
        self
    }

    pub fn with_watchdog(mut self, d: Duration) -> Self {
        self.watchdog = d;
        self
    }

    pub fn with_flush_threshold(mut self, octets: usize) -> Self {
        self.flush_threshold = octets.max(1);
        self
    }

    pub fn with_perturbation(mut self, plan: PerturbationPlan) -> Self {
        self.perturbation = Some(plan);
        self
    }

    /// Keep every recorded or consumed event per activity in the report.
    pub fn with_event_log(mut self, on: bool) -> Self {
        self.collect_log = on;
        self
    }

    /// Track recorded versions per entity (see [`VersionAudit`]).
    pub fn with_audit(mut self, on: bool) -> Self {
        self.audit = on;
        self
    }
}

#[derive(Debug, Default)]
pub(crate) struct Stats {
    recorded: AtomicU64,
    consumed: AtomicU64,
    pub(crate) commits: AtomicU64,
    pub(crate) retries: AtomicU64,
}

impl Stats {
    pub(crate) fn note_recorded(&self) {
        self.recorded.fetch_add(1, SeqCst);
    }

    pub(crate) fn note_consumed(&self) {
        self.consumed.fetch_add(1, SeqCst);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunStats {
    pub events_recorded: u64,
    pub events_consumed: u64,
    pub commits: u64,
    /// Failed commit attempts (conflicts plus replay version-gate misses).
    pub commit_retries: u64,
    pub activities: usize,
    /// Extra pool workers started because a worker blocked.
    pub spare_workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityInfo {
    pub id: ActivityId,
    pub kind: ActivityKind,
    pub parent: Option<ActivityId>,
}

#[derive(Debug)]
pub struct RunReport<R> {
    pub output: R,
    pub mode: ExecutionMode,
    pub strategy: ActorStrategy,
    /// Trace bytes when recording to `TraceSink::Memory`.
    pub trace: Option<Vec<u8>>,
    /// Recorded (record) or consumed (replay) events per activity, when
    /// `Config::with_event_log` is set.
    pub event_log: BTreeMap<ActivityId, Vec<TraceEvent>>,
    pub audit: Option<VersionAudit>,
    pub stats: RunStats,
    pub activities: Vec<ActivityInfo>,
    /// Non-fatal failures (actor handler errors, failed detached threads).
    pub handler_errors: Vec<(ActivityId, String)>,
}

/// State shared by every activity and entity of one execution.
pub(crate) struct Shared {
    pub(crate) mode: ExecutionMode,
    pub(crate) strategy: ActorStrategy,
    pub(crate) flush_threshold: usize,
    pub(crate) watchdog: Duration,
    pub(crate) collect_log: bool,
    pub(crate) perturbation: Option<PerturbationPlan>,
    pub(crate) stats: Stats,
    pub(crate) commit_point: CommitPoint,
    audit: Option<Mutex<VersionAudit>>,
    pool_size: usize,
    pool: OnceLock<Pool>,
    writer: Mutex<TraceWriter>,
    registry: Mutex<BTreeMap<ActivityId, Arc<ActivityCore>>>,
    pending_queues: Mutex<BTreeMap<ActivityId, ReplayQueue>>,
    live: AtomicUsize,
    live_gate: Mutex<()>,
    live_cv: Condvar,
    aborted: AtomicBool,
    failure: Mutex<Option<Error>>,
    start: Instant,
    last_progress: AtomicU64,
    handler_errors: Mutex<Vec<(ActivityId, String)>>,
    /// Actor cells, kept alive for the run; mailboxes only hold weak refs.
    actors: Mutex<Vec<Arc<dyn Runnable>>>,
}

impl Shared {
    pub(crate) fn submit_chunk(&self, id: ActivityId, bytes: Vec<u8>) {
        self.writer.lock().submit(id, bytes);
    }

    pub(crate) fn pool(&self) -> &Pool {
        self.pool.get_or_init(|| Pool::new(self.pool_size))
    }

    pub(crate) fn note_progress(&self) {
        self.last_progress
            .store(self.start.elapsed().as_nanos() as u64, SeqCst);
    }

    /// Records the first fatal failure and aborts the execution.
    pub(crate) fn fail(&self, err: Error) -> Error {
        {
            let mut f = self.failure.lock();
            if f.is_none() {
                *f = Some(err.clone());
            }
        }
        self.aborted.store(true, SeqCst);
        err
    }

    pub(crate) fn is_aborted(&self) -> bool {
        self.aborted.load(SeqCst)
    }

    /// Error out of a blocked wait when the run was aborted or, in replay,
    /// when nothing has progressed for the watchdog period.
    pub(crate) fn check_live(&self) -> Result<()> {
        if self.is_aborted() {
            return Err(Error::Aborted);
        }
        if self.mode == ExecutionMode::Replay {
            let now = self.start.elapsed().as_nanos() as u64;
            let idle = Duration::from_nanos(now.saturating_sub(self.last_progress.load(SeqCst)));
            if idle > self.watchdog {
                return Err(self.fail(Error::ReplayDeadlock(self.watchdog)));
            }
        }
        Ok(())
    }

    pub(crate) fn activity_failed(&self, id: ActivityId, err: &Error) {
        if err.is_fatal() {
            self.fail(err.clone());
        } else if !matches!(err, Error::Aborted) {
            self.handler_errors.lock().push((id, err.to_string()));
        }
    }

    pub(crate) fn register(
        self: &Arc<Self>,
        id: ActivityId,
        kind: ActivityKind,
        parent: Option<ActivityId>,
    ) -> Result<Arc<ActivityCore>> {
        let queue = self.pending_queues.lock().remove(&id);
        let core = Arc::new(ActivityCore::new(Arc::clone(self), id, kind, parent, queue));
        let mut reg = self.registry.lock();
        if reg.contains_key(&id) {
            drop(reg);
            return Err(self.fail(Error::IdCollision(id)));
        }
        reg.insert(id, Arc::clone(&core));
        Ok(core)
    }

    pub(crate) fn audit_event(&self, key: EntityKey, version: u64) {
        if let Some(a) = &self.audit {
            a.lock().note_event(key, version);
        }
    }

    pub(crate) fn audit_final(&self, key: EntityKey, version: u64) {
        if let Some(a) = &self.audit {
            a.lock().note_final(key, version);
        }
    }

    pub(crate) fn auditing(&self) -> bool {
        self.audit.is_some()
    }

    pub(crate) fn live_inc(&self) {
        self.live.fetch_add(1, SeqCst);
    }

    pub(crate) fn live_dec(&self) {
        if self.live.fetch_sub(1, SeqCst) == 1 {
            let _g = self.live_gate.lock();
            self.live_cv.notify_all();
        }
    }

    pub(crate) fn adopt(&self, cell: Arc<dyn Runnable>) {
        self.actors.lock().push(cell);
    }

    /// Waits until no thread is running and no message is in flight.
    fn wait_quiescent(&self) {
        let mut g = self.live_gate.lock();
        let mut aborted_at: Option<Instant> = None;
        while self.live.load(SeqCst) != 0 {
            if self.is_aborted() {
                let t = *aborted_at.get_or_insert_with(Instant::now);
                if t.elapsed() > ABORT_GRACE {
                    break;
                }
            } else {
                let _ = self.check_live();
            }
            self.live_cv.wait_for(&mut g, TICK);
        }
    }
}

/// Entry point for one execution.
pub struct Runtime;

impl Runtime {
    /// Runs `main` as the root activity and waits until every spawned
    /// thread has finished and every actor is idle. In record mode the
    /// trace is then finalized; in replay mode every recorded event must
    /// have been consumed.
    pub fn run<R, F>(config: Config, main: F) -> Result<RunReport<R>>
    where
        F: FnOnce() -> Result<R>,
    {
        let mut queues = BTreeMap::new();
        if config.mode == ExecutionMode::Replay {
            let bytes = match &config.source {
                Some(TraceSource::File(p)) => std::fs::read(p)?,
                Some(TraceSource::Bytes(b)) => b.clone(),
                None => return Err(Error::TraceFormat("replay needs a trace source".into())),
            };
            let parsed = parse_trace(&bytes)?;
            if parsed.header.strategy != config.strategy {
                return Err(Error::TraceFormat(format!(
                    "trace was recorded with the {}-side actor strategy, replay requested {}-side",
                    parsed.header.strategy.name(),
                    config.strategy.name()
                )));
            }
            queues = parsed.into_queues();
        }
        let writer = if config.mode == ExecutionMode::Record {
            TraceWriter::start(&config.sink, TraceHeader::new(config.strategy))?
        } else {
            TraceWriter::start(&TraceSink::Discard, TraceHeader::new(config.strategy))?
        };

        let rt = Arc::new(Shared {
            mode: config.mode,
            strategy: config.strategy,
            flush_threshold: config.flush_threshold,
            watchdog: config.watchdog,
            collect_log: config.collect_log,
            perturbation: config.perturbation.clone(),
            stats: Stats::default(),
            commit_point: CommitPoint::default(),
            audit: config.audit.then(|| Mutex::new(VersionAudit::default())),
            pool_size: config.pool_size,
            pool: OnceLock::new(),
            writer: Mutex::new(writer),
            registry: Mutex::new(BTreeMap::new()),
            pending_queues: Mutex::new(queues),
            live: AtomicUsize::new(1),
            live_gate: Mutex::new(()),
            live_cv: Condvar::new(),
            aborted: AtomicBool::new(false),
            failure: Mutex::new(None),
            start: Instant::now(),
            last_progress: AtomicU64::new(0),
            handler_errors: Mutex::new(Vec::new()),
            actors: Mutex::new(Vec::new()),
        });

        let main_core = rt.register(ActivityId::MAIN, ActivityKind::Thread, None)?;
        let output = {
            let _current = CurrentGuard::enter(Arc::clone(&main_core));
            catch_unwind(AssertUnwindSafe(main))
                .unwrap_or_else(|p| Err(Error::ActivityPanicked(panic_message(&p))))
        };
        if let Err(e) = &output {
            rt.activity_failed(ActivityId::MAIN, e);
        }
        main_core.flush();
        drop(main_core);
        rt.live_dec();
        rt.wait_quiescent();
        let result = finish(&rt, output);
        rt.registry.lock().clear();
        rt.actors.lock().clear();
        result
    }
}

fn finish<R>(rt: &Arc<Shared>, output: Result<R>) -> Result<RunReport<R>> {
    let aborted = rt.is_aborted();
    if let Some(pool) = rt.pool.get() {
        pool.shutdown(!aborted);
    }
    if let Some(err) = rt.failure.lock().take() {
        return Err(err);
    }
    let output = output?;

    let cores: Vec<Arc<ActivityCore>> = rt.registry.lock().values().cloned().collect();
    let mut trace = None;
    match rt.mode {
        ExecutionMode::Record => {
            for c in &cores {
                c.flush();
            }
            trace = rt.writer.lock().finish()?;
        }
        ExecutionMode::Replay => {
            for c in &cores {
                let remaining = c.remaining_events();
                if remaining > 0 {
                    return Err(Error::ReplayIncomplete {
                        activity: c.id,
                        remaining,
                    });
                }
            }
            if let Some((id, q)) = rt.pending_queues.lock().iter().find(|(_, q)| !q.is_empty()) {
                return Err(Error::ReplayIncomplete {
                    activity: *id,
                    remaining: q.len(),
                });
            }
        }
        ExecutionMode::Passive => {}
    }

    let mut event_log = BTreeMap::new();
    if rt.collect_log {
        for c in &cores {
            let log = c.take_log();
            if !log.is_empty() {
                event_log.insert(c.id, log);
            }
        }
    }
    let activities = cores
        .iter()
        .map(|c| ActivityInfo {
            id: c.id,
            kind: c.kind,
            parent: c.parent,
        })
        .collect();
    let stats = RunStats {
        events_recorded: rt.stats.recorded.load(SeqCst),
        events_consumed: rt.stats.consumed.load(SeqCst),
        commits: rt.stats.commits.load(SeqCst),
        commit_retries: rt.stats.retries.load(SeqCst),
        activities: cores.len(),
        spare_workers: rt.pool.get().map_or(0, Pool::spares_started),
    };
    Ok(RunReport {
        output,
        mode: rt.mode,
        strategy: rt.strategy,
        trace,
        event_log,
        audit: rt.audit.as_ref().map(|a| a.lock().clone()),
        stats,
        activities,
        handler_errors: rt.handler_errors.lock().clone(),
    })
}

/// Appends `(kind, data)` to the current activity's record buffer. Does
/// nothing outside record mode.
pub fn record_interaction(kind: EventType, data: u64) -> Result<()> {
    current_core()?.record(kind, data);
    Ok(())
}

/// Bumps an entity's version in record and replay mode and returns the new
/// value; passive mode leaves it unchanged.
pub fn increment_version(entity: &VersionedEntity) -> Result<u64> {
    Ok(entity.increment(&current_core()?.rt))
}

/// In replay, consumes the current activity's next event (which must be of
/// type `expected`) and blocks until `entity` reaches the recorded
/// version. Returns `None` without blocking in the other modes.
pub fn delay_interaction(entity: &VersionedEntity, expected: EventType) -> Result<Option<TraceEvent>> {
    let core = current_core()?;
    entity.delay(&core, expected, "entity")
}
