//! Promises buffering messages until resolution.
//!
//! Under the sender-side strategy, storing a message on an unresolved
//! promise and resolving it are interactions on the promise's version
//! (`PROMISE_MSG_STORE`, `PROMISE_RESOLVE`). The resolver forwards stored
//! messages with ordinary sends. Under the receiver-side strategy nothing is
//! recorded here; promise messages carry a per-sender id the receiving
//! actor records instead.

use std::fmt;
use std::sync::Arc;

use parking_lot::{Condvar, Mutex};

use super::{ActorRef, Envelope};
use crate::activity::{current_core, ActivityCore, ActivityId};
use crate::audit::{next_serial, EntityKey};
use crate::error::{Error, Result};
use crate::event::EventType;
use crate::pool;
use crate::runtime::{ExecutionMode, TICK};
use crate::trace::ActorStrategy;
use crate::versioned::VersionedEntity;

type Delivery<T> = Box<dyn FnOnce(&ActivityCore, &T, Option<u64>) -> Result<()> + Send>;

struct Pending<T> {
    deliver: Delivery<T>,
    /// Sender-side replay: mailbox version of a send that was recorded as a
    /// direct send but found the promise still unresolved.
    preassigned: Option<u64>,
}

enum PromiseState<T> {
    Unresolved(Vec<Pending<T>>),
    Resolved(T),
}

struct PromiseInner<T> {
    serial: u64,
    state: Mutex<PromiseState<T>>,
    resolved: Condvar,
    version: VersionedEntity,
}

/// Placeholder for a value produced later by some activity.
pub struct Promise<T> {
    inner: Arc<PromiseInner<T>>,
}

impl<T> Clone for Promise<T> {
    fn clone(&self) -> Self {
        Promise {
            inner: Arc::clone(&self.inner),
        }
    }
}

impl<T> fmt::Debug for Promise<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let resolved = matches!(*self.inner.state.lock(), PromiseState::Resolved(_));
        write!(f, "Promise(#{}, resolved: {resolved})", self.inner.serial)
    }
}

impl<T: Clone + Send + 'static> Default for Promise<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Clone + Send + 'static> Promise<T> {
    pub fn new() -> Self {
        Promise {
            inner: Arc::new(PromiseInner {
                serial: next_serial(),
                state: Mutex::new(PromiseState::Unresolved(Vec::new())),
                resolved: Condvar::new(),
                version: VersionedEntity::new(),
            }),
        }
    }

    pub fn version(&self) -> u64 {
        self.inner.version.version()
    }

    pub fn is_resolved(&self) -> bool {
        matches!(*self.inner.state.lock(), PromiseState::Resolved(_))
    }

    pub fn get(&self) -> Option<T> {
        match &*self.inner.state.lock() {
            PromiseState::Resolved(v) => Some(v.clone()),
            PromiseState::Unresolved(_) => None,
        }
    }

    fn key(&self) -> EntityKey {
        EntityKey::Promise(self.inner.serial)
    }

    /// Resolves the promise and forwards every stored message.
    pub fn resolve(&self, value: T) -> Result<()> {
        let act = current_core()?;
        act.perturb();
        let sender_side = act.rt.strategy == ActorStrategy::SenderSide;
        if sender_side && act.mode() == ExecutionMode::Replay {
            match act.peek() {
                Some(ev) if ev.kind == EventType::PromiseResolve => {
                    self.inner.version.delay(&act, EventType::PromiseResolve, "promise")?;
                }
                // the recorded resolve lost a race: wait for the winner
                _ => {
                    self.wait_resolved(&act)?;
                    return Err(Error::AlreadyResolved);
                }
            }
        }
        let mut st = self.inner.state.lock();
        let pending = match &mut *st {
            PromiseState::Resolved(_) => return Err(Error::AlreadyResolved),
            PromiseState::Unresolved(p) => std::mem::take(p),
        };
        if sender_side {
            self.inner
                .version
                .record_and_increment(&act, EventType::PromiseResolve, self.key());
        }
        *st = PromiseState::Resolved(value.clone());
        self.inner.resolved.notify_all();
        let mut first_err = None;
        for p in pending {
            if let Err(e) = (p.deliver)(&act, &value, p.preassigned) {
                first_err.get_or_insert(e);
            }
        }
        first_err.map_or(Ok(()), Err)
    }

    /// Sends `make(value)` to `target` once the promise is resolved;
    /// immediately if it already is.
    pub fn send_when_resolved<M, F>(&self, target: &ActorRef<M>, make: F) -> Result<()>
    where
        M: Send + 'static,
        F: FnOnce(&T) -> M + Send + 'static,
    {
        let act = current_core()?;
        act.perturb();
        let msg_id = act.next_promise_msg_id();
        let sender: ActivityId = act.id;
        let mailbox = Arc::clone(target.mailbox());
        let deliver: Delivery<T> = Box::new(move |resolver, value, preassigned| {
            let env = Envelope {
                sender,
                payload: make(value),
                promise_msg_id: Some(msg_id),
            };
            mailbox.deliver(resolver, env, preassigned)
        });
        let sender_side = act.rt.strategy == ActorStrategy::SenderSide;
        if sender_side && act.mode() == ExecutionMode::Replay {
            match act.peek() {
                Some(ev) if ev.kind == EventType::PromiseMsgStore => {
                    self.inner.version.delay(&act, EventType::PromiseMsgStore, "promise")?;
                    return self.store(&act, deliver, None);
                }
                Some(ev) if ev.kind == EventType::MsgSend => {
                    let mut st = self.inner.state.lock();
                    return match &mut *st {
                        PromiseState::Resolved(v) => {
                            let v = v.clone();
                            drop(st);
                            deliver(&act, &v, None)
                        }
                        PromiseState::Unresolved(pending) => {
                            let ev = act.poll_expect(&[EventType::MsgSend])?;
                            pending.push(Pending {
                                deliver,
                                preassigned: Some(ev.data),
                            });
                            Ok(())
                        }
                    };
                }
                Some(ev) => {
                    let err = Error::mismatch(act.id, &[EventType::PromiseMsgStore, EventType::MsgSend], ev);
                    return Err(act.rt.fail(err));
                }
                None => {
                    return Err(act.rt.fail(Error::ReplayExhausted {
                        activity: act.id,
                        expected: EventType::PromiseMsgStore,
                    }))
                }
            }
        }
        self.store(&act, deliver, None)
    }

    /// Stores a delivery or, if resolved, performs it right away.
    fn store(&self, act: &ActivityCore, deliver: Delivery<T>, preassigned: Option<u64>) -> Result<()> {
        let mut st = self.inner.state.lock();
        match &mut *st {
            PromiseState::Resolved(v) => {
                let v = v.clone();
                drop(st);
                deliver(act, &v, preassigned)
            }
            PromiseState::Unresolved(pending) => {
                if act.rt.strategy == ActorStrategy::SenderSide {
                    self.inner
                        .version
                        .record_and_increment(act, EventType::PromiseMsgStore, self.key());
                }
                pending.push(Pending { deliver, preassigned });
                Ok(())
            }
        }
    }

    /// Blocks until resolved and returns the value. Not an interaction:
    /// the value is the same in every mode.
    pub fn wait(&self) -> Result<T> {
        let act = current_core()?;
        self.wait_resolved(&act)?;
        Ok(self.get().expect("resolved"))
    }

    fn wait_resolved(&self, act: &ActivityCore) -> Result<()> {
        let mut st = self.inner.state.lock();
        if matches!(*st, PromiseState::Resolved(_)) {
            return Ok(());
        }
        let _blocking = pool::blocking_section();
        while !matches!(*st, PromiseState::Resolved(_)) {
            act.rt.check_live()?;
            self.inner.resolved.wait_for(&mut st, TICK);
        }
        Ok(())
    }
}
