mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use polyrr::{
    spawn_thread, ActivityId, ActorStrategy, Config, Error, EventType, RRLock, Runtime, TraceEvent,
    TraceSink,
};

use common::{check_replays, record, replay};

fn kinds(log: &[TraceEvent]) -> Vec<(EventType, u64)> {
    log.iter().map(|e| (e.kind, e.data)).collect()
}

#[test]
fn reentrant_acquire_records_once() {
    let rec = record(ActorStrategy::SenderSide, 0, || {
        let lock = RRLock::new();
        lock.acquire()?;
        lock.acquire()?;
        lock.release()?;
        lock.release()?;
        lock.with(|| Ok(()))?;
        Ok(lock.version())
    });
    assert_eq!(rec.output, 2);
    let log = &rec.event_log[&ActivityId::MAIN];
    assert_eq!(kinds(log), vec![(EventType::Lock, 0), (EventType::Lock, 1)]);
}

#[test]
fn release_without_ownership_fails() {
    let out = Runtime::run(Config::passive(), || {
        let lock = RRLock::new();
        Ok(matches!(lock.release(), Err(Error::NotOwner)))
    })
    .unwrap();
    assert!(out.output);
}

fn contended(n: usize) -> polyrr::Result<Vec<usize>> {
    let lock = RRLock::new();
    let order = Arc::new(Mutex::new(Vec::new()));
    let mut handles = Vec::new();
    for t in 0..3 {
        let (lock, order) = (lock.clone(), order.clone());
        handles.push(spawn_thread(move || {
            for _ in 0..n {
                lock.with(|| {
                    order.lock().push(t);
                    Ok(())
                })?;
            }
            Ok(())
        })?);
    }
    for h in handles {
        h.join()?;
    }
    let v = order.lock().clone();
    Ok(v)
}

#[test]
fn contended_acquisition_order_replays() {
    let rec = check_replays(ActorStrategy::SenderSide, 10, || contended(40));
    assert_eq!(rec.output.len(), 120);
}

fn producer_consumer() -> polyrr::Result<Vec<(usize, u32)>> {
    let lock = RRLock::new();
    let not_empty = lock.new_condition();
    let not_full = lock.new_condition();
    let buf = Arc::new(Mutex::new(Vec::<u32>::new()));
    let taken = Arc::new(Mutex::new(Vec::new()));
    let mut handles = Vec::new();
    for p in 0..2u32 {
        let (lock, not_empty, not_full, buf) = (lock.clone(), not_empty.clone(), not_full.clone(), buf.clone());
        handles.push(spawn_thread(move || {
            for i in 0..20 {
                let _g = lock.lock()?;
                while buf.lock().len() >= 2 {
                    not_full.wait()?;
                }
                buf.lock().push(p * 100 + i);
                not_empty.signal()?;
            }
            Ok(())
        })?);
    }
    for c in 0..2usize {
        let (lock, not_empty, not_full, buf, taken) =
            (lock.clone(), not_empty.clone(), not_full.clone(), buf.clone(), taken.clone());
        handles.push(spawn_thread(move || {
            for _ in 0..20 {
                let _g = lock.lock()?;
                while buf.lock().is_empty() {
                    not_empty.wait()?;
                }
                let v = buf.lock().remove(0);
                taken.lock().push((c, v));
                not_full.signal()?;
            }
            Ok(())
        })?);
    }
    for h in handles {
        h.join()?;
    }
    let v = taken.lock().clone();
    Ok(v)
}

#[test]
fn condition_waits_replay() {
    let rec = check_replays(ActorStrategy::SenderSide, 10, producer_consumer);
    assert_eq!(rec.output.len(), 40);
    let parsed = polyrr::parse_trace(rec.trace.as_ref().unwrap()).unwrap();
    let audit = rec.audit.unwrap();
    let lock_versions: usize = audit
        .recorded
        .iter()
        .filter(|(k, _)| matches!(k, polyrr::EntityKey::Lock(_)))
        .map(|(_, v)| v.len())
        .sum();
    let lock_events = parsed.count(EventType::Lock)
        + parsed.count(EventType::AwaitSignaled)
        + parsed.count(EventType::AwaitTimeout);
    assert_eq!(lock_versions, lock_events);
}

/// First wait times out, second is signaled. Returns each outcome.
fn timeout_then_signal(timeout: Duration) -> polyrr::Result<Vec<bool>> {
    let lock = RRLock::new();
    let cond = lock.new_condition();
    let flag = Arc::new(Mutex::new(false));
    let (l2, c2, f2) = (lock.clone(), cond.clone(), flag.clone());
    let _g = lock.lock()?;
    let first = cond.wait_timeout(timeout)?;
    let signaller = spawn_thread(move || {
        // wait until the main activity announces it is about to wait again
        loop {
            let _g = l2.lock()?;
            if *f2.lock() {
                c2.signal()?;
                return Ok(());
            }
            drop(_g);
            std::thread::sleep(Duration::from_millis(1));
        }
    })?;
    *flag.lock() = true;
    let second = cond.wait_timeout(Duration::from_secs(20))?;
    drop(_g);
    signaller.join()?;
    Ok(vec![first, second])
}

#[test]
fn timeout_outcomes_replay_without_waiting() {
    let timeout = Duration::from_millis(300);
    let rec = record(ActorStrategy::SenderSide, 1, || timeout_then_signal(timeout));
    assert_eq!(rec.output, vec![false, true]);
    let main = kinds(&rec.event_log[&ActivityId::MAIN]);
    assert!(main.iter().any(|(k, _)| *k == EventType::AwaitTimeout));
    assert!(main.iter().any(|(k, _)| *k == EventType::AwaitSignaled));
    let trace = rec.trace.unwrap();
    for seed in 0..3 {
        let start = Instant::now();
        let rep = replay(&trace, ActorStrategy::SenderSide, seed, || timeout_then_signal(timeout)).unwrap();
        assert_eq!(rep.output, vec![false, true]);
        assert!(start.elapsed() < timeout, "replay took {:?}", start.elapsed());
    }
}

#[test]
fn passive_mode_records_nothing() {
    let rep = Runtime::run(Config::passive(), || contended(10)).unwrap();
    assert_eq!(rep.output.len(), 30);
    assert_eq!(rep.stats.events_recorded, 0);
}

#[test]
fn discard_sink_keeps_no_trace() {
    let rep = Runtime::run(Config::record(TraceSink::Discard), || contended(10)).unwrap();
    assert!(rep.trace.is_none());
    // 30 acquisitions plus 3 spawns
    assert_eq!(rep.stats.events_recorded, 33);
}
