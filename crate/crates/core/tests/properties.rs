mod common;

use std::sync::Arc;

use parking_lot::Mutex;
use polyrr::{
    atomic, spawn_actor, spawn_process, spawn_thread, Actor, ActorStrategy, Channel, Context, RRLock, Result, TxRef,
};
use proptest::prelude::*;

use common::{record, replay};

/// `threads` threads each take the lock `ops` times and append to a log.
fn lock_log(threads: usize, ops: usize) -> impl Fn() -> Result<Vec<usize>> {
    move || {
        let lock = RRLock::new();
        let log = Arc::new(Mutex::new(Vec::new()));
        let hs = (0..threads)
            .map(|t| {
                let (lock, log) = (lock.clone(), log.clone());
                spawn_thread(move || {
                    for _ in 0..ops {
                        lock.with(|| {
                            log.lock().push(t);
                            Ok(())
                        })?;
                    }
                    Ok(())
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for h in hs {
            h.join()?;
        }
        let v = log.lock().clone();
        Ok(v)
    }
}

/// `writers` processes each send `msgs` values to one reader.
fn channel_fan_in(writers: usize, msgs: usize) -> impl Fn() -> Result<Vec<(usize, usize)>> {
    move || {
        let ch = Channel::new();
        for w in 0..writers {
            let ch = ch.clone();
            spawn_process(move || (0..msgs).try_for_each(|i| ch.write((w, i))))?;
        }
        (0..writers * msgs).map(|_| ch.read()).collect()
    }
}

/// `threads` threads each commit `ops` increments to one of `cells` cells.
fn stm_counters(threads: usize, ops: usize, cells: usize) -> impl Fn() -> Result<Vec<Vec<u64>>> {
    move || {
        let refs: Vec<TxRef<u64>> = (0..cells).map(|_| TxRef::new(0)).collect();
        let hs = (0..threads)
            .map(|t| {
                let refs = refs.clone();
                spawn_thread(move || {
                    (0..ops)
                        .map(|i| {
                            let cell = &refs[(t + i) % refs.len()];
                            atomic(|tx| {
                                let v = tx.read(cell)? + 1;
                                tx.write(cell, v);
                                Ok(v)
                            })
                        })
                        .collect::<Result<Vec<u64>>>()
                })
            })
            .collect::<Result<Vec<_>>>()?;
        hs.into_iter().map(|h| h.join()).collect()
    }
}

struct Sink(Arc<Mutex<Vec<(usize, usize)>>>);

impl Actor for Sink {
    type Msg = (usize, usize);

    fn receive(&mut self, _ctx: &Context<Self::Msg>, msg: Self::Msg) -> Result<()> {
        self.0.lock().push(msg);
        Ok(())
    }
}

/// `senders` threads each send `msgs` messages to one actor.
fn mailbox_fan_in(senders: usize, msgs: usize) -> impl Fn() -> Result<Vec<(usize, usize)>> {
    move || {
        let seen = Arc::new(Mutex::new(Vec::new()));
        let sink = spawn_actor(Sink(seen.clone()))?;
        let hs = (0..senders)
            .map(|s| {
                let sink = sink.clone();
                spawn_thread(move || (0..msgs).try_for_each(|i| sink.send((s, i))))
            })
            .collect::<Result<Vec<_>>>()?;
        for h in hs {
            h.join()?;
        }
        while seen.lock().len() < senders * msgs {
            std::thread::yield_now();
        }
        let v = seen.lock().clone();
        Ok(v)
    }
}

fn strategy_of(receiver: bool) -> ActorStrategy {
    if receiver {
        ActorStrategy::ReceiverSide
    } else {
        ActorStrategy::SenderSide
    }
}

/// Records once, checks the audit, and replays with another seed.
fn roundtrip<R: PartialEq + std::fmt::Debug>(
    strategy: ActorStrategy,
    seed: u64,
    program: impl Fn() -> Result<R>,
) -> std::result::Result<(), TestCaseError> {
    let rec = record(strategy, seed, &program);
    let audit = rec.audit.as_ref().unwrap();
    prop_assert!(audit.violations().is_empty(), "{:?}", audit.violations());
    let rep = replay(rec.trace.as_deref().unwrap(), strategy, seed ^ 0xffff, &program).expect("replay");
    prop_assert_eq!(rep.output, rec.output);
    prop_assert_eq!(rep.event_log, rec.event_log);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn lock_histories_replay(threads in 1usize..5, ops in 1usize..25, seed: u64) {
        roundtrip(ActorStrategy::SenderSide, seed, lock_log(threads, ops))?;
    }

    #[test]
    fn channel_pairings_replay(writers in 1usize..4, msgs in 1usize..10, seed: u64) {
        roundtrip(ActorStrategy::SenderSide, seed, channel_fan_in(writers, msgs))?;
    }

    #[test]
    fn commit_orders_replay(threads in 1usize..4, ops in 1usize..30, cells in 1usize..3, seed: u64) {
        roundtrip(ActorStrategy::SenderSide, seed, stm_counters(threads, ops, cells))?;
    }

    #[test]
    fn mailbox_orders_replay(senders in 1usize..4, msgs in 1usize..20, receiver: bool, seed: u64) {
        roundtrip(strategy_of(receiver), seed, mailbox_fan_in(senders, msgs))?;
    }
}
