//! Communicating event-loop actors on a shared worker pool.
//!
//! Two recording strategies, fixed per run:
//!
//! * sender-side: every send records `MSG_SEND` with the target mailbox's
//!   version in the sender's trace; replay delivers messages strictly in
//!   version order using a min-ordered mailbox.
//! * receiver-side: the actor records `MSG_RCVD(sender)` (preceded by
//!   `PROMMSG_RCVD(id)` for promise messages) when it processes a message;
//!   replay scans the FIFO mailbox for the message the trace names.
//!
//! An actor that cannot make progress during replay gives its worker back
//! and is polled again when its next message arrives.

mod promise;

pub use promise::Promise;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, Weak};

use parking_lot::Mutex;

use crate::activity::{
    current_core, panic_message, spawn_core, ActivityCore, ActivityId, ActivityKind, CurrentGuard,
};
use crate::audit::EntityKey;
use crate::error::{Error, Result};
use crate::event::EventType;
use crate::pool::Runnable;
use crate::runtime::ExecutionMode;
use crate::trace::ActorStrategy;

/// Messages handled per scheduling turn before the actor yields its worker.
const BATCH: usize = 64;

/// Behavior of an actor. Handlers run one message at a time.
pub trait Actor: Send + 'static {
    type Msg: Send + 'static;

    fn receive(&mut self, ctx: &Context<Self::Msg>, msg: Self::Msg) -> Result<()>;

    /// Called with the error of a failed handler. Processing continues
    /// with the next message.
    fn on_error(&mut self, _err: &Error) {}
}

/// Handler-side view of the running actor.
pub struct Context<M> {
    me: ActorRef<M>,
}

impl<M: Send + 'static> Context<M> {
    pub fn id(&self) -> ActivityId {
        self.me.id()
    }

    pub fn myself(&self) -> ActorRef<M> {
        self.me.clone()
    }
}

pub(crate) struct Envelope<M> {
    pub(crate) sender: ActivityId,
    pub(crate) payload: M,
    pub(crate) promise_msg_id: Option<u64>,
}

#[derive(Default)]
struct MailState<M> {
    fifo: VecDeque<Envelope<M>>,
    /// Sender-side replay: messages keyed by their recorded version.
    ordered: BTreeMap<u64, Envelope<M>>,
    /// Sends delivered so far (sender-side record).
    version: u64,
    /// Next version to process (sender-side replay).
    processed: u64,
    scheduled: bool,
}

pub(crate) struct Mailbox<M> {
    core: Arc<ActivityCore>,
    state: Mutex<MailState<M>>,
    runner: Mutex<Option<Weak<dyn Runnable>>>,
}

impl<M: Send + 'static> Mailbox<M> {
    fn strategy(&self) -> ActorStrategy {
        self.core.rt.strategy
    }

    /// Sends `env` on behalf of `sender`, the activity whose trace holds the
    /// send event. `preassigned` carries a version consumed earlier in
    /// sender-side replay.
    pub(crate) fn deliver(&self, sender: &ActivityCore, env: Envelope<M>, preassigned: Option<u64>) -> Result<()> {
        let rt = &self.core.rt;
        if rt.is_aborted() {
            return Err(Error::Aborted);
        }
        let sender_side = self.strategy() == ActorStrategy::SenderSide;
        let replay_version = match (rt.mode, sender_side, preassigned) {
            (ExecutionMode::Replay, true, Some(v)) => Some(v),
            (ExecutionMode::Replay, true, None) => Some(sender.poll_expect(&[EventType::MsgSend])?.data),
            _ => None,
        };
        let mut st = self.state.lock();
        match replay_version {
            Some(v) => {
                if v < st.processed || st.ordered.contains_key(&v) {
                    drop(st);
                    return Err(rt.fail(Error::ReplayVersionPassed {
                        activity: sender.id,
                        entity: "mailbox",
                        expected: v,
                        current: v + 1,
                    }));
                }
                st.ordered.insert(v, env);
            }
            None => {
                if sender_side && rt.mode == ExecutionMode::Record {
                    let v = st.version;
                    sender.record(EventType::MsgSend, v);
                    st.version += 1;
                    if rt.auditing() {
                        rt.audit_event(EntityKey::Mailbox(self.core.id), v);
                        rt.audit_final(EntityKey::Mailbox(self.core.id), st.version);
                    }
                }
                st.fifo.push_back(env);
            }
        }
        rt.live_inc();
        self.schedule(&mut st);
        Ok(())
    }

    fn schedule(&self, st: &mut MailState<M>) {
        if st.scheduled {
            return;
        }
        let runner = self.runner.lock().as_ref().and_then(Weak::upgrade);
        if let Some(r) = runner {
            st.scheduled = true;
            self.core.rt.pool().submit(r);
        }
    }

    /// Takes the next processable message, or clears `scheduled` and
    /// returns `None`. Records or consumes receive events as needed.
    fn next(&self) -> Result<Option<Envelope<M>>> {
        let rt = &self.core.rt;
        let mut st = self.state.lock();
        let sender_side = self.strategy() == ActorStrategy::SenderSide;
        let found = match (rt.mode, sender_side) {
            (ExecutionMode::Replay, true) => {
                let expected = st.processed;
                match st.ordered.first_key_value() {
                    Some((&v, _)) if v == expected => {
                        st.processed += 1;
                        st.ordered.pop_first().map(|(_, e)| e)
                    }
                    _ => None,
                }
            }
            (ExecutionMode::Replay, false) => self.replay_receive(&mut st)?,
            (mode, _) => {
                let env = st.fifo.pop_front();
                if let (Some(env), ExecutionMode::Record, false) = (&env, mode, sender_side) {
                    if let Some(id) = env.promise_msg_id {
                        self.core.record(EventType::PrommsgRcvd, id);
                    }
                    self.core.record(EventType::MsgRcvd, env.sender.0);
                }
                env
            }
        };
        if found.is_none() {
            st.scheduled = false;
        }
        Ok(found)
    }

    /// Receiver-side replay: finds the message the actor's next receive
    /// event(s) name.
    fn replay_receive(&self, st: &mut MailState<M>) -> Result<Option<Envelope<M>>> {
        let core = &self.core;
        let mut act = core.state.lock();
        let (head, next) = match act.queue() {
            Some(q) => (q.peek(), q.peek_next()),
            None => (None, None),
        };
        let Some(head) = head else {
            if st.fifo.is_empty() {
                return Ok(None);
            }
            drop(act);
            return Err(core.rt.fail(Error::ReplayExhausted {
                activity: core.id,
                expected: EventType::MsgRcvd,
            }));
        };
        let (pos, consumed) = match head.kind {
            EventType::MsgRcvd => (
                st.fifo
                    .iter()
                    .position(|e| e.promise_msg_id.is_none() && e.sender.0 == head.data),
                1,
            ),
            EventType::PrommsgRcvd => {
                let sender = match next {
                    Some(n) if n.kind == EventType::MsgRcvd => n.data,
                    Some(n) => {
                        drop(act);
                        return Err(core.rt.fail(Error::mismatch(core.id, &[EventType::MsgRcvd], n)));
                    }
                    None => {
                        drop(act);
                        return Err(core.rt.fail(Error::ReplayExhausted {
                            activity: core.id,
                            expected: EventType::MsgRcvd,
                        }));
                    }
                };
                (
                    st.fifo
                        .iter()
                        .position(|e| e.promise_msg_id == Some(head.data) && e.sender.0 == sender),
                    2,
                )
            }
            _ => {
                drop(act);
                let err = Error::mismatch(core.id, &[EventType::MsgRcvd, EventType::PrommsgRcvd], head);
                return Err(core.rt.fail(err));
            }
        };
        let Some(pos) = pos else { return Ok(None) };
        core.consume_validated(&mut act, consumed);
        Ok(st.fifo.remove(pos))
    }

    /// Drops queued messages after an abort.
    fn drain(&self) {
        let mut st = self.state.lock();
        let n = st.fifo.len() + st.ordered.len();
        st.fifo.clear();
        st.ordered.clear();
        st.scheduled = false;
        drop(st);
        for _ in 0..n {
            self.core.rt.live_dec();
        }
    }
}

struct ActorCell<A: Actor> {
    mailbox: Arc<Mailbox<A::Msg>>,
    behavior: Mutex<A>,
}

impl<A: Actor> Runnable for ActorCell<A> {
    fn run(self: Arc<Self>) {
        let mb = &self.mailbox;
        let core = &mb.core;
        let rt = &core.rt;
        let _current = CurrentGuard::enter(Arc::clone(core));
        let ctx = Context {
            me: ActorRef {
                mailbox: Arc::clone(mb),
            },
        };
        let mut behavior = self.behavior.lock();
        for _ in 0..BATCH {
            if rt.is_aborted() {
                mb.drain();
                return;
            }
            let env = match mb.next() {
                Ok(Some(env)) => env,
                Ok(None) => return,
                Err(_) => {
                    mb.drain();
                    return;
                }
            };
            core.perturb();
            let res = catch_unwind(AssertUnwindSafe(|| behavior.receive(&ctx, env.payload)))
                .unwrap_or_else(|p| Err(Error::ActivityPanicked(panic_message(&p))));
            if let Err(e) = res {
                rt.activity_failed(core.id, &e);
                behavior.on_error(&e);
            }
            rt.live_dec();
        }
        // batch exhausted: stay scheduled and go to the back of the queue
        drop(behavior);
        if let Some(r) = mb.runner.lock().as_ref().and_then(Weak::upgrade) {
            rt.pool().submit(r);
        }
    }
}

/// Address of an actor. Cheap to clone and usable from any activity.
pub struct ActorRef<M> {
    mailbox: Arc<Mailbox<M>>,
}

impl<M> Clone for ActorRef<M> {
    fn clone(&self) -> Self {
        ActorRef {
            mailbox: Arc::clone(&self.mailbox),
        }
    }
}

impl<M> fmt::Debug for ActorRef<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ActorRef({})", self.mailbox.core.id)
    }
}

impl<M: Send + 'static> ActorRef<M> {
    pub fn id(&self) -> ActivityId {
        self.mailbox.core.id
    }

    /// Number of sends delivered so far (sender-side recording only).
    pub fn version(&self) -> u64 {
        self.mailbox.state.lock().version
    }

    /// Asynchronous send from the current activity.
    pub fn send(&self, msg: M) -> Result<()> {
        let sender = current_core()?;
        sender.perturb();
        let env = Envelope {
            sender: sender.id,
            payload: msg,
            promise_msg_id: None,
        };
        self.mailbox.deliver(&sender, env, None)
    }

    pub(crate) fn mailbox(&self) -> &Arc<Mailbox<M>> {
        &self.mailbox
    }
}

/// Spawns an actor as a child of the current activity.
pub fn spawn_actor<A: Actor>(behavior: A) -> Result<ActorRef<A::Msg>> {
    let parent = current_core()?;
    let core = spawn_core(&parent, ActivityKind::Actor)?;
    let rt = Arc::clone(&core.rt);
    let mailbox = Arc::new(Mailbox {
        core,
        state: Mutex::new(MailState {
            fifo: VecDeque::new(),
            ordered: BTreeMap::new(),
            version: 0,
            processed: 0,
            scheduled: false,
        }),
        runner: Mutex::new(None),
    });
    let cell: Arc<dyn Runnable> = Arc::new(ActorCell {
        mailbox: Arc::clone(&mailbox),
        behavior: Mutex::new(behavior),
    });
    *mailbox.runner.lock() = Some(Arc::downgrade(&cell));
    rt.adopt(cell);
    Ok(ActorRef { mailbox })
}
