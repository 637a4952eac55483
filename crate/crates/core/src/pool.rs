//! Worker pool multiplexing actor event loops.
//!
//! The pool keeps `size` workers. A worker that is about to block (replay
//! delay, channel rendezvous, join) enters a blocking section; if no other
//! worker is idle at that moment a spare worker is started so runnable
//! actors keep making progress. Spares retire after sitting idle.

use std::cell::RefCell;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering::SeqCst};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};
use parking_lot::Mutex;

const SPARE_IDLE: Duration = Duration::from_millis(200);

pub(crate) trait Runnable: Send + Sync {
    fn run(self: Arc<Self>);
}

enum Msg {
    Run(Arc<dyn Runnable>),
    Stop,
}

struct PoolInner {
    tx: Sender<Msg>,
    rx: Receiver<Msg>,
    size: usize,
    workers: AtomicUsize,
    idle: AtomicUsize,
    stopping: AtomicBool,
    spares: AtomicUsize,
    handles: Mutex<Vec<thread::JoinHandle<()>>>,
}

thread_local! {
    static WORKER: RefCell<Option<Arc<PoolInner>>> = const { RefCell::new(None) };
}

pub(crate) struct Pool {
    inner: Arc<PoolInner>,
}

impl Pool {
    pub(crate) fn new(size: usize) -> Pool {
        let (tx, rx) = unbounded();
        let inner = Arc::new(PoolInner {
            tx,
            rx,
            size: size.max(1),
            workers: AtomicUsize::new(0),
            idle: AtomicUsize::new(0),
            stopping: AtomicBool::new(false),
            spares: AtomicUsize::new(0),
            handles: Mutex::new(Vec::new()),
        });
        for _ in 0..inner.size {
            start_worker(&inner);
        }
        Pool { inner }
    }

    pub(crate) fn submit(&self, job: Arc<dyn Runnable>) {
        let _ = self.inner.tx.send(Msg::Run(job));
    }

    /// Spare workers started because a worker blocked.
    pub(crate) fn spares_started(&self) -> usize {
        self.inner.spares.load(SeqCst)
    }

    /// Stops all workers. With `join` set, waits for them to exit.
    pub(crate) fn shutdown(&self, join: bool) {
        self.inner.stopping.store(true, SeqCst);
        for _ in 0..self.inner.workers.load(SeqCst) + 1 {
            let _ = self.inner.tx.send(Msg::Stop);
        }
        let handles = std::mem::take(&mut *self.inner.handles.lock());
        if join {
            for h in handles {
                let _ = h.join();
            }
        }
        // drop queued jobs so actor cells release the runtime
        while self.inner.rx.try_recv().is_ok() {}
    }
}

fn start_worker(inner: &Arc<PoolInner>) {
    inner.workers.fetch_add(1, SeqCst);
    let pool = Arc::clone(inner);
    let spawned = thread::Builder::new()
        .name("polyrr-worker".into())
        .spawn(move || worker_loop(pool));
    match spawned {
        Ok(h) => inner.handles.lock().push(h),
        Err(_) => {
            inner.workers.fetch_sub(1, SeqCst);
        }
    }
}

fn worker_loop(pool: Arc<PoolInner>) {
    WORKER.with(|w| *w.borrow_mut() = Some(Arc::clone(&pool)));
    loop {
        pool.idle.fetch_add(1, SeqCst);
        let msg = pool.rx.recv_timeout(SPARE_IDLE);
        pool.idle.fetch_sub(1, SeqCst);
        match msg {
            Ok(Msg::Run(job)) => job.run(),
            Ok(Msg::Stop) | Err(RecvTimeoutError::Disconnected) => break,
            Err(RecvTimeoutError::Timeout) => {
                if pool.stopping.load(SeqCst) {
                    break;
                }
                let n = pool.workers.load(SeqCst);
                if n > pool.size
                    && pool
                        .workers
                        .compare_exchange(n, n - 1, SeqCst, SeqCst)
                        .is_ok()
                {
                    WORKER.with(|w| w.borrow_mut().take());
                    return;
                }
            }
        }
    }
    pool.workers.fetch_sub(1, SeqCst);
    WORKER.with(|w| w.borrow_mut().take());
}

/// Marks the current thread as blocked for the guard's lifetime. Only has
/// an effect on pool workers.
pub(crate) struct BlockingSection {
    _priv: (),
}

pub(crate) fn blocking_section() -> BlockingSection {
    WORKER.with(|w| {
        if let Some(pool) = w.borrow().as_ref() {
            if pool.idle.load(SeqCst) == 0 && !pool.stopping.load(SeqCst) {
                pool.spares.fetch_add(1, SeqCst);
                start_worker(pool);
            }
        }
    });
    BlockingSection { _priv: () }
}
