//! The uniform event format shared by every concurrency model.
//!
//! An event is a one-octet type tag followed by a 64-bit little-endian data
//! word. The meaning of the data word is local to the event type: most
//! events carry an entity version, receive events carry a sender id, spawn
//! events carry the child id. The framing never depends on the type.

use std::fmt;

use crate::error::{Error, Result};

/// Serialized size of one event.
pub const EVENT_SIZE: usize = 9;

/// Registered event type tags. Values are part of the trace format and are
/// never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum EventType {
    Lock = 1,
    AwaitSignaled = 2,
    AwaitTimeout = 3,
    MsgSend = 4,
    PromiseResolve = 5,
    PromiseMsgStore = 6,
    ChannelRead = 7,
    ChannelWrite = 8,
    TxCommit = 9,
    MsgRcvd = 10,
    PrommsgRcvd = 11,
    ActivitySpawn = 12,
}

impl EventType {
    pub const ALL: [EventType; 12] = [
        EventType::Lock,
        EventType::AwaitSignaled,
        EventType::AwaitTimeout,
        EventType::MsgSend,
        EventType::PromiseResolve,
        EventType::PromiseMsgStore,
        EventType::ChannelRead,
        EventType::ChannelWrite,
        EventType::TxCommit,
        EventType::MsgRcvd,
        EventType::PrommsgRcvd,
        EventType::ActivitySpawn,
    ];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<EventType> {
        match tag {
            1..=12 => Some(EventType::ALL[usize::from(tag) - 1]),
            _ => None,
        }
    }

    /// Stable upper-case name used by dump and stats output.
    pub fn name(self) -> &'static str {
        match self {
            EventType::Lock => "LOCK",
            EventType::AwaitSignaled => "AWAIT_SIGNALED",
            EventType::AwaitTimeout => "AWAIT_TIMEOUT",
            EventType::MsgSend => "MSG_SEND",
            EventType::PromiseResolve => "PROMISE_RESOLVE",
            EventType::PromiseMsgStore => "PROMISE_MSG_STORE",
            EventType::ChannelRead => "CHANNEL_READ",
            EventType::ChannelWrite => "CHANNEL_WRITE",
            EventType::TxCommit => "TX_COMMIT",
            EventType::MsgRcvd => "MSG_RCVD",
            EventType::PrommsgRcvd => "PROMMSG_RCVD",
            EventType::ActivitySpawn => "ACTIVITY_SPAWN",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One recorded nondeterministic event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TraceEvent {
    pub kind: EventType,
    pub data: u64,
}

impl TraceEvent {
    pub fn new(kind: EventType, data: u64) -> Self {
        TraceEvent { kind, data }
    }

    pub fn encode(&self) -> [u8; EVENT_SIZE] {
        let mut out = [0u8; EVENT_SIZE];
        out[0] = self.kind.tag();
        out[1..].copy_from_slice(&self.data.to_le_bytes());
        out
    }

    /// Appends the encoded event to `buf`.
    pub fn encode_into(&self, buf: &mut Vec<u8>) {
        buf.push(self.kind.tag());
        buf.extend_from_slice(&self.data.to_le_bytes());
    }

    pub fn decode(bytes: &[u8]) -> Result<TraceEvent> {
        if bytes.len() != EVENT_SIZE {
            return Err(Error::TraceFormat(format!(
                "event must be {EVENT_SIZE} octets, got {}",
                bytes.len()
            )));
        }
        let kind = EventType::from_tag(bytes[0])
            .ok_or_else(|| Error::TraceFormat(format!("invalid event tag {}", bytes[0])))?;
        let mut word = [0u8; 8];
        word.copy_from_slice(&bytes[1..]);
        Ok(TraceEvent {
            kind,
            data: u64::from_le_bytes(word),
        })
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.kind, self.data)
    }
}

/// Decodes a payload made of back-to-back events.
pub fn decode_events(payload: &[u8]) -> Result<Vec<TraceEvent>> {
    if !payload.len().is_multiple_of(EVENT_SIZE) {
        return Err(Error::TraceFormat(format!(
            "payload length {} is not a multiple of {EVENT_SIZE}",
            payload.len()
        )));
    }
    payload.chunks_exact(EVENT_SIZE).map(TraceEvent::decode).collect()
}
