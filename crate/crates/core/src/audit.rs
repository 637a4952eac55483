//! Optional bookkeeping of which versions were recorded for which entity.
//!
//! Trace events do not name their entity, so checking that every entity's
//! recorded versions form a gap-free prefix needs a side table kept while
//! recording. Enabled through `Config::with_audit`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::activity::ActivityId;

/// Process-unique number naming an entity in audit output.
pub(crate) fn next_serial() -> u64 {
    static NEXT: AtomicU64 = AtomicU64::new(0);
    NEXT.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKey {
    Lock(u64),
    Mailbox(ActivityId),
    Promise(u64),
    ChannelRead(u64),
    ChannelWrite(u64),
    CommitPoint,
}

impl fmt::Display for EntityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityKey::Lock(s) => write!(f, "lock#{s}"),
            EntityKey::Mailbox(id) => write!(f, "mailbox@{id}"),
            EntityKey::Promise(s) => write!(f, "promise#{s}"),
            EntityKey::ChannelRead(s) => write!(f, "channel#{s}/read"),
            EntityKey::ChannelWrite(s) => write!(f, "channel#{s}/write"),
            EntityKey::CommitPoint => f.write_str("commit-point"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VersionAudit {
    /// Versions carried by recorded events, in recording order.
    pub recorded: BTreeMap<EntityKey, Vec<u64>>,
    /// Last version each entity reached.
    pub finals: BTreeMap<EntityKey, u64>,
}

impl VersionAudit {
    pub(crate) fn note_event(&mut self, key: EntityKey, version: u64) {
        self.recorded.entry(key).or_default().push(version);
    }

    pub(crate) fn note_final(&mut self, key: EntityKey, version: u64) {
        let slot = self.finals.entry(key).or_insert(0);
        *slot = (*slot).max(version);
    }

    /// Entities whose recorded versions are not exactly `0..final`.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (key, versions) in &self.recorded {
            let mut sorted = versions.clone();
            sorted.sort_unstable();
            let expected: Vec<u64> = (0..sorted.len() as u64).collect();
            if sorted != expected {
                out.push(format!("{key}: versions {sorted:?} are not a gap-free prefix"));
                continue;
            }
            if let Some(&fin) = self.finals.get(key) {
                if fin != sorted.len() as u64 {
                    out.push(format!(
                        "{key}: final version {fin} but {} recorded events",
                        sorted.len()
                    ));
                }
            }
        }
        for (key, fin) in &self.finals {
            if *fin > 0 && !self.recorded.contains_key(key) {
                out.push(format!("{key}: reached version {fin} with no recorded events"));
            }
        }
        out
    }

    pub fn entities(&self) -> usize {
        self.recorded.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_gaps_duplicates_and_final_mismatch() {
        let mut a = VersionAudit::default();
        for v in [1, 0, 2] {
            a.note_event(EntityKey::Lock(1), v);
        }
        a.note_final(EntityKey::Lock(1), 3);
        assert!(a.violations().is_empty());

        a.note_event(EntityKey::Lock(2), 0);
        a.note_event(EntityKey::Lock(2), 2);
        a.note_event(EntityKey::Promise(1), 0);
        a.note_event(EntityKey::Promise(1), 0);
        a.note_event(EntityKey::CommitPoint, 0);
        a.note_final(EntityKey::CommitPoint, 2);
        a.note_final(EntityKey::ChannelRead(4), 1);
        assert_eq!(a.violations().len(), 4);
    }
}
