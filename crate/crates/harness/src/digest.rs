//! Stable hash over a run's observable results and event order.

use std::collections::BTreeMap;

use polyrr::{ActivityId, TraceEvent};
use sha2::{Digest, Sha256};

use crate::bench::Outcome;

/// SHA-256 over every observed stream and every activity's ordered event
/// log, with length prefixes so distinct inputs cannot collide by
/// concatenation. Returned as lowercase hex.
pub fn digest(outcome: &Outcome, log: &BTreeMap<ActivityId, Vec<TraceEvent>>) -> String {
    let mut h = Sha256::new();
    let mut put = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    for (name, lines) in &outcome.0 {
        put(name.as_bytes());
        put(&(lines.len() as u64).to_le_bytes());
        for l in lines {
            put(l.as_bytes());
        }
    }
    for (id, events) in log {
        put(&id.0.to_le_bytes());
        let mut buf = Vec::with_capacity(events.len() * polyrr::EVENT_SIZE);
        for e in events {
            e.encode_into(&mut buf);
        }
        put(&buf);
    }
    hex::encode(h.finalize())
}
