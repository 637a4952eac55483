//! Trace file layout, per-activity record buffers and replay queues.
//!
//! File layout, all integers little-endian:
//!
//! ```text
//! header  : "CMRR" | format_version: u16 | strategy_flags: u16
//! chunk*  : activity_id: u64 | payload_len: u32 | payload (payload_len octets)
//! ```
//!
//! A payload is a whole number of 9-octet events; a flush never splits an
//! event. Chunks of one activity appear in flush order, so parsing
//! concatenates them per activity.

use std::collections::{BTreeMap, VecDeque};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use crossbeam_channel::{unbounded, Sender};

use crate::activity::ActivityId;
use crate::error::{Error, Result};
use crate::event::{decode_events, EventType, TraceEvent, EVENT_SIZE};

pub const MAGIC: [u8; 4] = *b"CMRR";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_SIZE: usize = 8;
pub const CHUNK_HEADER_SIZE: usize = 12;
pub const DEFAULT_FLUSH_THRESHOLD: usize = 4096;

const STRATEGY_BIT: u16 = 1;

/// Which actor recording strategy produced (or consumes) a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActorStrategy {
    /// The sending activity records the mailbox version of each send.
    #[default]
    SenderSide,
    /// The receiving actor records the sender of each processed message.
    ReceiverSide,
}

impl ActorStrategy {
    pub fn name(self) -> &'static str {
        match self {
            ActorStrategy::SenderSide => "sender",
            ActorStrategy::ReceiverSide => "receiver",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceHeader {
    pub format_version: u16,
    pub strategy: ActorStrategy,
}

impl TraceHeader {
    pub fn new(strategy: ActorStrategy) -> Self {
        TraceHeader {
            format_version: FORMAT_VERSION,
            strategy,
        }
    }

    pub fn encode(&self) -> [u8; HEADER_SIZE] {
        let flags = match self.strategy {
            ActorStrategy::SenderSide => 0u16,
            ActorStrategy::ReceiverSide => STRATEGY_BIT,
        };
        let mut out = [0u8; HEADER_SIZE];
        out[..4].copy_from_slice(&MAGIC);
        out[4..6].copy_from_slice(&self.format_version.to_le_bytes());
        out[6..8].copy_from_slice(&flags.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<TraceHeader> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::TraceFormat("truncated header".into()));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::TraceFormat("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::TraceFormat(format!(
                "unsupported format version {version}"
            )));
        }
        let flags = u16::from_le_bytes([bytes[6], bytes[7]]);
        if flags & !STRATEGY_BIT != 0 {
            return Err(Error::TraceFormat(format!("unknown strategy flags {flags:#x}")));
        }
        let strategy = if flags & STRATEGY_BIT == 0 {
            ActorStrategy::SenderSide
        } else {
            ActorStrategy::ReceiverSide
        };
        Ok(TraceHeader {
            format_version: version,
            strategy,
        })
    }
}

/// Location and size of one chunk in a parsed file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChunkInfo {
    pub activity: ActivityId,
    pub events: usize,
}

/// A fully parsed trace file.
#[derive(Debug, Clone)]
pub struct ParsedTrace {
    pub header: TraceHeader,
    pub chunks: Vec<ChunkInfo>,
    pub activities: BTreeMap<ActivityId, Vec<TraceEvent>>,
}

impl ParsedTrace {
    pub fn total_events(&self) -> usize {
        self.activities.values().map(Vec::len).sum()
    }

    /// File size implied by the framing.
    pub fn total_octets(&self) -> usize {
        HEADER_SIZE + self.chunks.len() * CHUNK_HEADER_SIZE + self.total_events() * EVENT_SIZE
    }

    pub fn count(&self, kind: EventType) -> usize {
        self.activities
            .values()
            .flatten()
            .filter(|e| e.kind == kind)
            .count()
    }

    pub fn into_queues(self) -> BTreeMap<ActivityId, ReplayQueue> {
        self.activities
            .into_iter()
            .map(|(id, events)| (id, ReplayQueue::new(id, events)))
            .collect()
    }
}

/// Parses a trace. Only the fixed framing is interpreted.
pub fn parse_trace(bytes: &[u8]) -> Result<ParsedTrace> {
    let header = TraceHeader::decode(bytes)?;
    let mut chunks = Vec::new();
    let mut activities: BTreeMap<ActivityId, Vec<TraceEvent>> = BTreeMap::new();
    let mut rest = &bytes[HEADER_SIZE..];
    while !rest.is_empty() {
        if rest.len() < CHUNK_HEADER_SIZE {
            return Err(Error::TraceFormat("truncated chunk header".into()));
        }
        let id = ActivityId(u64::from_le_bytes(rest[..8].try_into().unwrap()));
        let len = u32::from_le_bytes(rest[8..12].try_into().unwrap()) as usize;
        rest = &rest[CHUNK_HEADER_SIZE..];
        if !len.is_multiple_of(EVENT_SIZE) {
            return Err(Error::TraceFormat(format!(
                "chunk payload length {len} is not a multiple of {EVENT_SIZE}"
            )));
        }
        if rest.len() < len {
            return Err(Error::TraceFormat("truncated chunk payload".into()));
        }
        let events = decode_events(&rest[..len])?;
        rest = &rest[len..];
        chunks.push(ChunkInfo {
            activity: id,
            events: events.len(),
        });
        activities.entry(id).or_default().extend(events);
    }
    Ok(ParsedTrace {
        header,
        chunks,
        activities,
    })
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<ParsedTrace> {
    let bytes = std::fs::read(path)?;
    parse_trace(&bytes)
}

pub fn write_chunk<W: Write>(out: &mut W, activity: ActivityId, payload: &[u8]) -> io::Result<()> {
    debug_assert_eq!(payload.len() % EVENT_SIZE, 0);
    out.write_all(&activity.0.to_le_bytes())?;
    out.write_all(&(payload.len() as u32).to_le_bytes())?;
    out.write_all(payload)
}

/// Serializes a whole trace in one go, one chunk per entry.
pub fn encode_trace(header: TraceHeader, chunks: &[(ActivityId, Vec<TraceEvent>)]) -> Vec<u8> {
    let mut out = header.encode().to_vec();
    for (id, events) in chunks {
        let mut payload = Vec::with_capacity(events.len() * EVENT_SIZE);
        for ev in events {
            ev.encode_into(&mut payload);
        }
        write_chunk(&mut out, *id, &payload).expect("writing to a Vec cannot fail");
    }
    out
}

/// Single-writer octet buffer owned by one activity.
#[derive(Debug)]
pub struct RecordBuffer {
    owner: ActivityId,
    bytes: Vec<u8>,
    flush_threshold: usize,
}

impl RecordBuffer {
    pub fn new(owner: ActivityId, flush_threshold: usize) -> Self {
        RecordBuffer {
            owner,
            bytes: Vec::new(),
            flush_threshold,
        }
    }

    pub fn owner(&self) -> ActivityId {
        self.owner
    }

    /// Appends an event; returns true once the buffer should be flushed.
    pub fn push(&mut self, event: TraceEvent) -> bool {
        event.encode_into(&mut self.bytes);
        self.bytes.len() >= self.flush_threshold
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn take(&mut self) -> Vec<u8> {
        std::mem::take(&mut self.bytes)
    }
}

/// Recorded events of one activity, consumed in order during replay.
#[derive(Debug, Clone, Default)]
pub struct ReplayQueue {
    owner: ActivityId,
    events: VecDeque<TraceEvent>,
}

impl ReplayQueue {
    pub fn new(owner: ActivityId, events: impl IntoIterator<Item = TraceEvent>) -> Self {
        ReplayQueue {
            owner,
            events: events.into_iter().collect(),
        }
    }

    pub fn owner(&self) -> ActivityId {
        self.owner
    }

    pub fn peek(&self) -> Option<TraceEvent> {
        self.events.front().copied()
    }

    /// The event after the head, used by receiver-side actor replay.
    pub fn peek_next(&self) -> Option<TraceEvent> {
        self.events.get(1).copied()
    }

    pub fn poll(&mut self) -> Option<TraceEvent> {
        self.events.pop_front()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Where flushed record buffers go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceSink {
    /// Append chunks to a file via a background writer thread.
    File(PathBuf),
    /// Keep the trace in memory; returned in the run report.
    Memory,
    /// Drop flushed buffers. Measures instrumentation cost without I/O.
    Discard,
}

enum WriterMsg {
    Chunk(ActivityId, Vec<u8>),
}

/// Receives flushed buffers from any activity and serializes them.
pub(crate) struct TraceWriter {
    tx: Option<Sender<WriterMsg>>,
    handle: Option<thread::JoinHandle<io::Result<Option<Vec<u8>>>>>,
}

impl TraceWriter {
    pub(crate) fn start(sink: &TraceSink, header: TraceHeader) -> Result<TraceWriter> {
        let out: Box<dyn Write + Send> = match sink {
            TraceSink::Discard => {
                return Ok(TraceWriter {
                    tx: None,
                    handle: None,
                })
            }
            TraceSink::File(path) => Box::new(BufWriter::new(File::create(path)?)),
            TraceSink::Memory => Box::new(io::sink()),
        };
        let in_memory = matches!(sink, TraceSink::Memory);
        let (tx, rx) = unbounded::<WriterMsg>();
        let handle = thread::Builder::new()
            .name("polyrr-trace-writer".into())
            .spawn(move || -> io::Result<Option<Vec<u8>>> {
                let mut out = out;
                let mut mem = Vec::new();
                if in_memory {
                    mem.extend_from_slice(&header.encode());
                } else {
                    out.write_all(&header.encode())?;
                }
                for msg in rx {
                    let WriterMsg::Chunk(id, payload) = msg;
                    if in_memory {
                        write_chunk(&mut mem, id, &payload)?;
                    } else {
                        write_chunk(&mut out, id, &payload)?;
                    }
                }
                out.flush()?;
                Ok(in_memory.then_some(mem))
            })?;
        Ok(TraceWriter {
            tx: Some(tx),
            handle: Some(handle),
        })
    }

    pub(crate) fn submit(&self, activity: ActivityId, payload: Vec<u8>) {
        if payload.is_empty() {
            return;
        }
        if let Some(tx) = &self.tx {
            // the receiver only goes away in finish()
            let _ = tx.send(WriterMsg::Chunk(activity, payload));
        }
    }

    /// Closes the channel and waits for the writer. Returns the in-memory
    /// trace for `TraceSink::Memory`.
    pub(crate) fn finish(&mut self) -> Result<Option<Vec<u8>>> {
        self.tx.take();
        match self.handle.take() {
            Some(h) => h
                .join()
                .map_err(|_| Error::ActivityPanicked("trace writer".into()))?
                .map_err(Error::from),
            None => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::EventType::*;
    use proptest::prelude::*;

    fn ev(kind: EventType, data: u64) -> TraceEvent {
        TraceEvent::new(kind, data)
    }

    #[test]
    fn empty_trace_is_header_only() {
        let bytes = encode_trace(TraceHeader::new(ActorStrategy::SenderSide), &[]);
        assert_eq!(bytes, b"CMRR\x01\x00\x00\x00");
        let parsed = parse_trace(&bytes).unwrap();
        assert!(parsed.activities.is_empty());
        assert_eq!(parsed.total_octets(), bytes.len());
    }

    #[test]
    fn one_activity_two_locks_size() {
        let bytes = encode_trace(
            TraceHeader::new(ActorStrategy::SenderSide),
            &[(ActivityId(0), vec![ev(Lock, 0), ev(Lock, 1)])],
        );
        // 8 + 12 + 18
        assert_eq!(bytes.len(), 38);
        assert_eq!(bytes.len(), HEADER_SIZE + CHUNK_HEADER_SIZE + 2 * EVENT_SIZE);
    }

    #[test]
    fn interleaved_chunks_concatenate_per_activity() {
        let a = ActivityId(3);
        let b = ActivityId(9);
        let bytes = encode_trace(
            TraceHeader::new(ActorStrategy::ReceiverSide),
            &[
                (a, vec![ev(Lock, 0)]),
                (b, vec![ev(MsgRcvd, 3), ev(Lock, 1)]),
                (a, vec![ev(Lock, 2)]),
                (b, vec![ev(TxCommit, 0)]),
            ],
        );
        let parsed = parse_trace(&bytes).unwrap();
        assert_eq!(parsed.header.strategy, ActorStrategy::ReceiverSide);
        assert_eq!(parsed.chunks.len(), 4);
        assert_eq!(parsed.activities[&a], vec![ev(Lock, 0), ev(Lock, 2)]);
        assert_eq!(
            parsed.activities[&b],
            vec![ev(MsgRcvd, 3), ev(Lock, 1), ev(TxCommit, 0)]
        );
        assert_eq!(parsed.total_octets(), bytes.len());
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_trace(b"CMR"), Err(Error::TraceFormat(_))));
        assert!(matches!(
            parse_trace(b"XMRR\x01\x00\x00\x00"),
            Err(Error::TraceFormat(_))
        ));
        assert!(matches!(
            parse_trace(b"CMRR\x02\x00\x00\x00"),
            Err(Error::TraceFormat(_))
        ));
        assert!(matches!(
            parse_trace(b"CMRR\x01\x00\x04\x00"),
            Err(Error::TraceFormat(_))
        ));
    }

    #[test]
    fn truncated_chunks_are_rejected() {
        let mut bytes = encode_trace(
            TraceHeader::new(ActorStrategy::SenderSide),
            &[(ActivityId(1), vec![ev(Lock, 0)])],
        );
        bytes.pop();
        assert!(parse_trace(&bytes).is_err());
        let bytes = encode_trace(TraceHeader::new(ActorStrategy::SenderSide), &[]);
        let mut with_partial = bytes.clone();
        with_partial.extend_from_slice(&[1, 0, 0]);
        assert!(parse_trace(&with_partial).is_err());
        // payload length not a multiple of 9
        let mut odd = bytes;
        odd.extend_from_slice(&1u64.to_le_bytes());
        odd.extend_from_slice(&4u32.to_le_bytes());
        odd.extend_from_slice(&[1, 0, 0, 0]);
        assert!(parse_trace(&odd).is_err());
    }

    #[test]
    fn record_buffer_flush_threshold() {
        let mut buf = RecordBuffer::new(ActivityId(0), 18);
        assert!(!buf.push(ev(Lock, 1)));
        assert_eq!(buf.len(), 9);
        assert!(buf.push(ev(Lock, 2)));
        let bytes = buf.take();
        assert!(buf.is_empty());
        assert_eq!(decode_events(&bytes).unwrap(), vec![ev(Lock, 1), ev(Lock, 2)]);
    }

    #[test]
    fn replay_queue_peek_and_poll() {
        let mut q = ReplayQueue::new(ActivityId(0), [ev(PrommsgRcvd, 3), ev(MsgRcvd, 7)]);
        assert_eq!(q.peek(), Some(ev(PrommsgRcvd, 3)));
        assert_eq!(q.peek_next(), Some(ev(MsgRcvd, 7)));
        assert_eq!(q.len(), 2);
        assert_eq!(q.poll(), Some(ev(PrommsgRcvd, 3)));
        assert_eq!(q.peek_next(), None);
        assert_eq!(q.poll(), Some(ev(MsgRcvd, 7)));
        assert!(q.poll().is_none());
    }

    #[test]
    fn memory_writer_produces_parseable_trace() {
        let mut w = TraceWriter::start(&TraceSink::Memory, TraceHeader::new(ActorStrategy::SenderSide))
            .unwrap();
        let mut payload = Vec::new();
        ev(Lock, 0).encode_into(&mut payload);
        w.submit(ActivityId(5), payload);
        w.submit(ActivityId(5), Vec::new());
        let bytes = w.finish().unwrap().unwrap();
        let parsed = parse_trace(&bytes).unwrap();
        assert_eq!(parsed.chunks.len(), 1);
        assert_eq!(parsed.activities[&ActivityId(5)], vec![ev(Lock, 0)]);
    }

    proptest! {
        #[test]
        fn parse_inverts_encode(
            chunks in proptest::collection::vec(
                (0u64..4, proptest::collection::vec(crate::event::tests::any_event(), 0..20)),
                0..10,
            )
        ) {
            let chunks: Vec<_> = chunks
                .into_iter()
                .filter(|(_, evs)| !evs.is_empty())
                .map(|(id, evs)| (ActivityId(id), evs))
                .collect();
            let bytes = encode_trace(TraceHeader::new(ActorStrategy::SenderSide), &chunks);
            let parsed = parse_trace(&bytes).unwrap();
            let mut expected: BTreeMap<ActivityId, Vec<TraceEvent>> = BTreeMap::new();
            for (id, evs) in &chunks {
                expected.entry(*id).or_default().extend(evs.iter().copied());
            }
            prop_assert_eq!(parsed.total_octets(), bytes.len());
            prop_assert_eq!(parsed.activities, expected);
        }
    }
}
