#![allow(dead_code)]

use std::time::Duration;

use polyrr::{
    ActorStrategy, Config, PerturbationPlan, Result, RunReport, Runtime, TraceSink, TraceSource,
};

pub fn perturbed(seed: u64) -> PerturbationPlan {
    PerturbationPlan::new(seed)
        .with_probability(0.3)
        .with_max_delay(Duration::from_micros(300))
}

pub fn record<R>(strategy: ActorStrategy, seed: u64, program: impl FnOnce() -> Result<R>) -> RunReport<R> {
    let cfg = Config::record(TraceSink::Memory)
        .with_strategy(strategy)
        .with_perturbation(perturbed(seed))
        .with_event_log(true)
        .with_audit(true)
        .with_watchdog(Duration::from_secs(10));
    Runtime::run(cfg, program).expect("record run")
}

pub fn replay<R>(
    trace: &[u8],
    strategy: ActorStrategy,
    seed: u64,
    program: impl FnOnce() -> Result<R>,
) -> Result<RunReport<R>> {
    let cfg = Config::replay(TraceSource::Bytes(trace.to_vec()))
        .with_strategy(strategy)
        .with_perturbation(perturbed(seed))
        .with_event_log(true)
        .with_watchdog(Duration::from_secs(10));
    Runtime::run(cfg, program)
}

/// Records once, replays `n` times with distinct seeds, and checks every
/// replay produced the recorded output and per-activity event log.
pub fn check_replays<R, F>(strategy: ActorStrategy, n: u64, program: F) -> RunReport<R>
where
    R: PartialEq + std::fmt::Debug,
    F: Fn() -> Result<R>,
{
    let rec = record(strategy, 7, &program);
    assert!(rec.audit.as_ref().unwrap().violations().is_empty(), "{:?}", rec.audit);
    let trace = rec.trace.clone().unwrap();
    for seed in 0..n {
        let rep = replay(&trace, strategy, 1000 + seed, &program).expect("replay run");
        assert_eq!(rep.output, rec.output, "output differs with seed {seed}");
        assert_eq!(rep.event_log, rec.event_log, "event order differs with seed {seed}");
    }
    rec
}
