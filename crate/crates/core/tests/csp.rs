mod common;

use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use polyrr::{spawn_process, ActivityId, ActorStrategy, Channel, EventType, ExecutionMode};

use common::{check_replays, record, replay};

#[test]
fn one_rendezvous_shares_a_version() {
    let rec = record(ActorStrategy::SenderSide, 0, || {
        let ch = Channel::new();
        let c = ch.clone();
        let w = spawn_process(move || c.write(5u32))?;
        let v = ch.read()?;
        let wid = w.id();
        w.join()?;
        Ok((v, wid, ch.version()))
    });
    let (v, writer, version) = rec.output;
    assert_eq!((v, version), (5, 1));
    let w: Vec<_> = rec.event_log[&writer].iter().map(|e| (e.kind, e.data)).collect();
    let r: Vec<_> = rec.event_log[&ActivityId::MAIN].iter().map(|e| (e.kind, e.data)).collect();
    assert_eq!(w, vec![(EventType::ChannelWrite, 0)]);
    assert_eq!(r[1..], [(EventType::ChannelRead, 0)]);
}

fn two_writers() -> polyrr::Result<Vec<(u32, u32)>> {
    let ch = Channel::new();
    let mut hs = Vec::new();
    for w in 0..2u32 {
        let ch = ch.clone();
        hs.push(spawn_process(move || {
            for i in 0..20 {
                ch.write((w, i))?;
            }
            Ok(())
        })?);
    }
    let mut got = Vec::new();
    for _ in 0..40 {
        got.push(ch.read()?);
    }
    for h in hs {
        h.join()?;
    }
    Ok(got)
}

#[test]
fn writer_order_replays() {
    check_replays(ActorStrategy::SenderSide, 10, two_writers);
}

fn two_readers() -> polyrr::Result<Vec<(u32, u32)>> {
    let ch = Channel::new();
    let got = Arc::new(Mutex::new(Vec::new()));
    let mut hs = Vec::new();
    for r in 0..2u32 {
        let (ch, got) = (ch.clone(), got.clone());
        hs.push(spawn_process(move || {
            for _ in 0..20 {
                let v: u32 = ch.read()?;
                got.lock().push((r, v));
            }
            Ok(())
        })?);
    }
    for i in 0..40 {
        ch.write(i)?;
    }
    for h in hs {
        h.join()?;
    }
    let mut v = got.lock().clone();
    // pairing, not log order, is what replay fixes
    v.sort_by_key(|p| p.1);
    Ok(v)
}

#[test]
fn reader_pairing_replays() {
    check_replays(ActorStrategy::SenderSide, 10, two_readers);
}

/// The reader comes late when recording and early when replaying.
fn inverted_arrival() -> polyrr::Result<u32> {
    let replaying = polyrr::current()?.mode() == ExecutionMode::Replay;
    let ch = Channel::new();
    let c = ch.clone();
    let w = spawn_process(move || {
        if replaying {
            std::thread::sleep(Duration::from_millis(50));
        }
        c.write(1u32)?;
        c.write(2u32)
    })?;
    if !replaying {
        std::thread::sleep(Duration::from_millis(50));
    }
    let a = ch.read()?;
    let b = ch.read()?;
    w.join()?;
    Ok(a * 10 + b)
}

#[test]
fn arrival_order_inversion_does_not_deadlock() {
    let rec = record(ActorStrategy::SenderSide, 0, inverted_arrival);
    let rep = replay(rec.trace.as_ref().unwrap(), ActorStrategy::SenderSide, 0, inverted_arrival).unwrap();
    assert_eq!(rep.output, 12);
    assert_eq!(rep.event_log, rec.event_log);
}

#[test]
fn read_and_write_counts_match_final_version() {
    let rec = check_replays(ActorStrategy::SenderSide, 1, two_writers);
    let parsed = polyrr::parse_trace(rec.trace.as_ref().unwrap()).unwrap();
    assert_eq!(parsed.count(EventType::ChannelRead), 40);
    assert_eq!(parsed.count(EventType::ChannelWrite), 40);
    let audit = rec.audit.unwrap();
    for (key, fin) in &audit.finals {
        assert_eq!(*fin, 40, "{key}");
    }
}
