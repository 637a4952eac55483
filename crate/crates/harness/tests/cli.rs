use std::path::Path;
use std::process::{Command, Output};

use polyrr::{trace::encode_trace, ActivityId, ActorStrategy, EventType, TraceEvent, TraceHeader};

fn polyrr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polyrr")).args(args).output().expect("spawn polyrr")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{key}` line in:\n{out}"))
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn record_then_replay_prints_the_same_digest() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("phil.trace");
    let t = path_str(&trace);
    let rec = polyrr(&["run", "philosophers-locks", "--mode", "record", "--trace", t, "--seed", "1", "--params", "rounds=30"]);
    assert!(rec.status.success(), "{rec:?}");
    for seed in ["2", "3"] {
        let rep = polyrr(&["run", "philosophers-locks", "--mode", "replay", "--trace", t, "--seed", seed, "--params", "rounds=30"]);
        assert!(rep.status.success(), "{rep:?}");
        assert_eq!(field(&stdout(&rep), "digest"), field(&stdout(&rec), "digest"));
        assert_eq!(field(&stdout(&rep), "events_consumed"), field(&stdout(&rec), "events_recorded"));
    }
}

#[test]
fn wrong_strategy_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("pp.trace");
    let t = path_str(&trace);
    let args = ["run", "pingpong-actors", "--params", "rounds=20", "--trace", t];
    assert!(polyrr(&[&args[..], &["--mode", "record", "--strategy", "receiver"]].concat()).status.success());
    let rep = polyrr(&[&args[..], &["--mode", "replay", "--strategy", "sender"]].concat());
    assert_eq!(rep.status.code(), Some(2), "{rep:?}");
}

#[test]
fn corrupt_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.trace");
    std::fs::write(&bad, b"not a trace at all").unwrap();
    for cmd in ["dump", "stats"] {
        assert_eq!(polyrr(&[cmd, path_str(&bad)]).status.code(), Some(2));
    }
    let missing = dir.path().join("missing.trace");
    assert_eq!(polyrr(&["stats", path_str(&missing)]).status.code(), Some(2));
}

#[test]
fn replaying_a_different_program_is_a_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("stm.trace");
    let t = path_str(&trace);
    let rec = polyrr(&["run", "philosophers-stm", "--mode", "record", "--trace", t, "--params", "rounds=10"]);
    assert!(rec.status.success());
    for rounds in ["rounds=5", "rounds=20"] {
        let rep = polyrr(&["run", "philosophers-stm", "--mode", "replay", "--trace", t, "--params", rounds, "--watchdog", "5"]);
        assert_eq!(rep.status.code(), Some(3), "{rounds}: {rep:?}");
    }
}

#[test]
fn single_event_trace_dump_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.trace");
    let bytes = encode_trace(
        TraceHeader::new(ActorStrategy::SenderSide),
        &[(ActivityId(0), vec![TraceEvent::new(EventType::Lock, 7)])],
    );
    std::fs::write(&path, &bytes).unwrap();

    let dump = stdout(&polyrr(&["dump", path_str(&path)]));
    let events: Vec<&str> = dump.lines().filter(|l| l.starts_with("  ")).collect();
    assert_eq!(events, ["  0 LOCK 7"]);

    let stats = stdout(&polyrr(&["stats", path_str(&path)]));
    assert_eq!(field(&stats, "octets"), "29");
    assert_eq!(field(&stats, "events"), "1");
    assert_eq!(field(&stats, "type LOCK"), "1");
}

#[test]
fn stats_count_commits_and_reconcile_with_file_size() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("stm.trace");
    let t = path_str(&trace);
    let rec = polyrr(&["run", "philosophers-stm", "--mode", "record", "--trace", t, "--seed", "4", "--params", "rounds=40"]);
    assert!(rec.status.success());
    let stats = stdout(&polyrr(&["stats", t]));
    assert_eq!(field(&stats, "type TX_COMMIT"), field(&stdout(&rec), "commits"));
    assert_eq!(field(&stats, "type TX_COMMIT"), "200");
    let size = std::fs::metadata(&trace).unwrap().len();
    assert_eq!(field(&stats, "octets"), size.to_string());
    let events: u64 = field(&stats, "events").parse().unwrap();
    let chunks: u64 = field(&stats, "chunks").parse().unwrap();
    assert_eq!(size, 8 + 12 * chunks + 9 * events);
}

#[test]
fn discard_and_memory_sinks_write_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("none.trace");
    for sink in ["discard", "memory"] {
        let o = polyrr(&["run", "counting-actors", "--mode", "record", "--sink", sink, "--trace", path_str(&trace), "--params", "messages=100"]);
        assert!(o.status.success());
        assert!(!trace.exists());
        assert_ne!(field(&stdout(&o), "events_recorded"), "0");
    }
}

#[test]
fn bad_parameters_are_rejected() {
    let unknown = polyrr(&["run", "counting-actors", "--params", "rounds=3"]);
    assert_eq!(unknown.status.code(), Some(1));
    let malformed = polyrr(&["run", "counting-actors", "--params", "messages=lots"]);
    assert_eq!(malformed.status.code(), Some(1));
    let bench = polyrr(&["run", "no-such-benchmark"]);
    assert_eq!(bench.status.code(), Some(1));
    let replay = polyrr(&["run", "counting-actors", "--mode", "replay"]);
    assert_eq!(replay.status.code(), Some(1));
}

#[test]
fn list_names_every_benchmark() {
    let out = stdout(&polyrr(&["list"]));
    assert_eq!(out.lines().count(), 7);
    assert!(out.contains("sales-pipeline"));
}
