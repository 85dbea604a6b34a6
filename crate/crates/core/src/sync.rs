//! Synchronization mechanisms that report the ownership transfers they
//! imply.
//!
//! Each mechanism is represented by its own process in the ownership graph.
//! Its statements are executed by whichever thread performs the operation,
//! but are attributed to the mechanism's process. Statements are emitted
//! while the mechanism's internal lock is held, so the order of statements
//! in the session matches the order in which the primitive hands out
//! access.
//!
//! Operations that produce a value (`receive`, `remove`) record any
//! violation in the session only; operations that return `()` also return
//! the violation. Either way the primitive itself behaves exactly as it
//! would without checking.
//!
//! Most operations come in two forms: one using the actor's default context
//! ([`Session::context_of`]) as the receiving "caller", and an `_in` form
//! taking the context explicitly.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex, MutexGuard};
use thiserror::Error;

use crate::checker::{Session, Violation};
use crate::graph::{EntityId, ProcessId, ResourceId};
use crate::semantics::Statement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyncKind {
    Channel,
    Queue,
    Lock,
    BinarySemaphore,
    RwLock,
}

/// The ownership-graph side of a mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyncEndpoint {
    /// The process standing for the mechanism.
    pub mechanism: ProcessId,
    pub kind: SyncKind,
    pub protected: Option<ResourceId>,
    /// Readers-writer locks only: the resource through which readers share.
    pub proxy: Option<ResourceId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyncError {
    #[error(transparent)]
    Violation(#[from] Violation),
    #[error("{0} does not hold the lock")]
    NotHolder(ProcessId),
    #[error("the lock is not locked")]
    NotLocked,
    #[error("{0} does not hold a read lock")]
    NotReader(ProcessId),
    #[error("queue is empty")]
    Empty,
}

fn spawn_mechanism(sess: &Session, actor: ProcessId) -> Result<ProcessId, SyncError> {
    Ok(sess.spawn(actor)?)
}

/// A bounded FIFO channel. `send` blocks while full, `receive` while empty.
pub struct Channel {
    endpoint: SyncEndpoint,
    capacity: usize,
    buf: Mutex<VecDeque<ResourceId>>,
    not_empty: Condvar,
    not_full: Condvar,
}

impl Channel {
    pub fn new(sess: &Session, actor: ProcessId, capacity: usize) -> Result<Self, SyncError> {
        assert!(capacity > 0, "channel capacity must be positive");
        let mechanism = spawn_mechanism(sess, actor)?;
        Ok(Self {
            endpoint: SyncEndpoint { mechanism, kind: SyncKind::Channel, protected: None, proxy: None },
            capacity,
            buf: Mutex::new(VecDeque::new()),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
        })
    }

    pub fn endpoint(&self) -> SyncEndpoint {
        self.endpoint
    }

    /// Hands `msg` to the channel; the sender gives up ownership.
    pub fn send(&self, sess: &Session, actor: ProcessId, msg: ResourceId) -> Result<(), SyncError> {
        let mut buf = self.buf.lock();
        while buf.len() >= self.capacity {
            self.not_full.wait(&mut buf);
        }
        let checked = sess.pass_from_owner(actor, msg, self.endpoint.mechanism.into());
        buf.push_back(msg);
        self.not_empty.notify_one();
        Ok(checked?)
    }

    pub fn receive(&self, sess: &Session, actor: ProcessId) -> ResourceId {
        self.receive_in(sess, actor, sess.context_of(actor))
    }

    /// Takes the oldest message; the channel passes it to `ctx`.
    pub fn receive_in(&self, sess: &Session, _actor: ProcessId, ctx: EntityId) -> ResourceId {
        let mut buf = self.buf.lock();
        let msg = loop {
            if let Some(m) = buf.pop_front() {
                break m;
            }
            self.not_empty.wait(&mut buf);
        };
        let c = self.endpoint.mechanism;
        let _ = sess.check(c, Statement::Pass { resource: msg, from: c.into(), to: ctx });
        self.not_full.notify_one();
        msg
    }
}

/// An unbounded queue. Messages inside it belong to the queue process and
/// are inaccessible to every thread, including one that peeks at them.
pub struct Queue {
    endpoint: SyncEndpoint,
    buf: Mutex<VecDeque<ResourceId>>,
    not_empty: Condvar,
}

impl Queue {
    pub fn new(sess: &Session, actor: ProcessId) -> Result<Self, SyncError> {
        let mechanism = spawn_mechanism(sess, actor)?;
        Ok(Self {
            endpoint: SyncEndpoint { mechanism, kind: SyncKind::Queue, protected: None, proxy: None },
            buf: Mutex::new(VecDeque::new()),
            not_empty: Condvar::new(),
        })
    }

    pub fn endpoint(&self) -> SyncEndpoint {
        self.endpoint
    }

    pub fn add(&self, sess: &Session, actor: ProcessId, msg: ResourceId) -> Result<(), SyncError> {
        let mut buf = self.buf.lock();
        let checked = sess.pass_from_owner(actor, msg, self.endpoint.mechanism.into());
        buf.push_back(msg);
        self.not_empty.notify_one();
        Ok(checked?)
    }

    /// The head of the queue, without any ownership change.
    pub fn peek(&self) -> Option<ResourceId> {
        self.buf.lock().front().copied()
    }

    pub fn len(&self) -> usize {
        self.buf.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn hand_out(&self, sess: &Session, msg: ResourceId, ctx: EntityId) {
        let q = self.endpoint.mechanism;
        let _ = sess.check(q, Statement::Pass { resource: msg, from: q.into(), to: ctx });
    }

    /// Blocks until a message is available.
    pub fn remove(&self, sess: &Session, actor: ProcessId) -> ResourceId {
        let ctx = sess.context_of(actor);
        let mut buf = self.buf.lock();
        loop {
            if let Some(m) = buf.pop_front() {
                self.hand_out(sess, m, ctx);
                return m;
            }
            self.not_empty.wait(&mut buf);
        }
    }

    pub fn try_remove(&self, sess: &Session, actor: ProcessId) -> Result<ResourceId, SyncError> {
        self.try_remove_in(sess, actor, sess.context_of(actor))
    }

    pub fn try_remove_in(&self, sess: &Session, _actor: ProcessId, ctx: EntityId) -> Result<ResourceId, SyncError> {
        let mut buf = self.buf.lock();
        let m = buf.pop_front().ok_or(SyncError::Empty)?;
        self.hand_out(sess, m, ctx);
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LockKind {
    /// Only the holder may unlock; supports condition variables.
    Monitor,
    /// Any thread may unlock, as long as it owns the protected object.
    BinarySemaphore,
}

#[derive(Debug, Default)]
struct LockState {
    locked: bool,
    holder: Option<ProcessId>,
}

/// A lock permanently associated with one protected object. Several locks
/// may protect the same object.
pub struct Lock {
    endpoint: SyncEndpoint,
    kind: LockKind,
    state: Mutex<LockState>,
    released: Condvar,
}

impl Lock {
    /// Creates an unlocked lock; the creator passes `protected` to it.
    pub fn new(sess: &Session, actor: ProcessId, protected: ResourceId, kind: LockKind) -> Result<Self, SyncError> {
        let mechanism = spawn_mechanism(sess, actor)?;
        let sync_kind = match kind {
            LockKind::Monitor => SyncKind::Lock,
            LockKind::BinarySemaphore => SyncKind::BinarySemaphore,
        };
        let lock = Self {
            endpoint: SyncEndpoint { mechanism, kind: sync_kind, protected: Some(protected), proxy: None },
            kind,
            state: Mutex::new(LockState::default()),
            released: Condvar::new(),
        };
        sess.pass_from_owner(actor, protected, mechanism.into())?;
        Ok(lock)
    }

    pub fn endpoint(&self) -> SyncEndpoint {
        self.endpoint
    }

    pub fn protected(&self) -> ResourceId {
        self.endpoint.protected.expect("locks always protect a resource")
    }

    pub fn is_locked(&self) -> bool {
        self.state.lock().locked
    }

    fn acquire(&self, st: &mut MutexGuard<'_, LockState>, sess: &Session, actor: ProcessId, ctx: EntityId) {
        while st.locked {
            self.released.wait(st);
        }
        st.locked = true;
        st.holder = Some(actor);
        let l = self.endpoint.mechanism;
        let _ = sess.check(l, Statement::Pass { resource: self.protected(), from: l.into(), to: ctx });
    }

    pub fn lock(&self, sess: &Session, actor: ProcessId) {
        self.lock_in(sess, actor, sess.context_of(actor))
    }

    /// Blocks until free, then the lock passes the object to `ctx`.
    pub fn lock_in(&self, sess: &Session, actor: ProcessId, ctx: EntityId) {
        let mut st = self.state.lock();
        self.acquire(&mut st, sess, actor, ctx);
    }

    fn release(&self, st: &mut MutexGuard<'_, LockState>, sess: &Session, actor: ProcessId) -> Result<(), SyncError> {
        if !st.locked {
            return Err(SyncError::NotLocked);
        }
        if self.kind == LockKind::Monitor && st.holder != Some(actor) {
            return Err(SyncError::NotHolder(actor));
        }
        let checked = sess.pass_from_owner(actor, self.protected(), self.endpoint.mechanism.into());
        st.locked = false;
        st.holder = None;
        self.released.notify_one();
        Ok(checked?)
    }

    /// Gives the object back to the lock and releases it. A monitor refuses
    /// unlocking by anyone but its holder before any statement is issued.
    pub fn unlock(&self, sess: &Session, actor: ProcessId) -> Result<(), SyncError> {
        let mut st = self.state.lock();
        self.release(&mut st, sess, actor)
    }

    /// A condition variable bound to this monitor.
    pub fn new_condition(self: &Arc<Self>) -> Condition {
        assert_eq!(self.kind, LockKind::Monitor, "only monitors have condition variables");
        Condition { lock: Arc::clone(self), cv: Condvar::new(), waiting: AtomicUsize::new(0), tokens: AtomicUsize::new(0) }
    }
}

/// Condition variable with signal-and-continue semantics: the signaller
/// keeps the lock, and a woken waiter re-acquires it later.
pub struct Condition {
    lock: Arc<Lock>,
    cv: Condvar,
    // Both counters only change while the lock's state mutex is held.
    waiting: AtomicUsize,
    tokens: AtomicUsize,
}

impl Condition {
    pub fn wait(&self, sess: &Session, actor: ProcessId) -> Result<(), SyncError> {
        self.wait_in(sess, actor, sess.context_of(actor))
    }

    /// Releases the monitor (passing the object back), waits for a signal,
    /// then re-acquires it (the object is passed to `ctx` again).
    pub fn wait_in(&self, sess: &Session, actor: ProcessId, ctx: EntityId) -> Result<(), SyncError> {
        let lock = &self.lock;
        let mut st = lock.state.lock();
        let released = lock.release(&mut st, sess, actor);
        if matches!(released, Err(SyncError::NotHolder(_) | SyncError::NotLocked)) {
            return released;
        }
        self.waiting.fetch_add(1, Ordering::Relaxed);
        while self.tokens.load(Ordering::Relaxed) == 0 {
            self.cv.wait(&mut st);
        }
        self.tokens.fetch_sub(1, Ordering::Relaxed);
        self.waiting.fetch_sub(1, Ordering::Relaxed);
        lock.acquire(&mut st, sess, actor, ctx);
        released
    }

    /// Wakes one waiter, if any. No ownership changes.
    pub fn signal(&self) {
        let _st = self.lock.state.lock();
        if self.waiting.load(Ordering::Relaxed) > self.tokens.load(Ordering::Relaxed) {
            self.tokens.fetch_add(1, Ordering::Relaxed);
            self.cv.notify_one();
        }
    }

    pub fn signal_all(&self) {
        let _st = self.lock.state.lock();
        let w = self.waiting.load(Ordering::Relaxed);
        self.tokens.store(w, Ordering::Relaxed);
        self.cv.notify_all();
    }
}

#[derive(Debug, Default)]
struct RwState {
    writer: Option<ProcessId>,
    readers: Vec<(ProcessId, EntityId)>,
}

/// Readers-writer lock. Readers gain read access by being added as owners
/// of a proxy resource that owns the protected object.
pub struct RwLock {
    endpoint: SyncEndpoint,
    state: Mutex<RwState>,
    changed: Condvar,
}

impl RwLock {
    pub fn new(sess: &Session, actor: ProcessId, protected: ResourceId) -> Result<Self, SyncError> {
        let l = spawn_mechanism(sess, actor)?;
        let proxy = sess.fresh_resource_id();
        sess.check(l, Statement::Allocate { owner: l.into(), binds: proxy })?;
        sess.mark_proxy(proxy);
        sess.pass_from_owner(actor, protected, proxy.into())?;
        Ok(Self {
            endpoint: SyncEndpoint { mechanism: l, kind: SyncKind::RwLock, protected: Some(protected), proxy: Some(proxy) },
            state: Mutex::new(RwState::default()),
            changed: Condvar::new(),
        })
    }

    pub fn endpoint(&self) -> SyncEndpoint {
        self.endpoint
    }

    pub fn protected(&self) -> ResourceId {
        self.endpoint.protected.expect("rw locks always protect a resource")
    }

    pub fn proxy(&self) -> ResourceId {
        self.endpoint.proxy.expect("rw locks always have a proxy")
    }

    pub fn lock_write(&self, sess: &Session, actor: ProcessId) {
        self.lock_write_in(sess, actor, sess.context_of(actor))
    }

    pub fn lock_write_in(&self, sess: &Session, actor: ProcessId, ctx: EntityId) {
        let mut st = self.state.lock();
        while st.writer.is_some() || !st.readers.is_empty() {
            self.changed.wait(&mut st);
        }
        st.writer = Some(actor);
        let l = self.endpoint.mechanism;
        let _ = sess.check(l, Statement::Pass { resource: self.protected(), from: self.proxy().into(), to: ctx });
    }

    pub fn unlock_write(&self, sess: &Session, actor: ProcessId) -> Result<(), SyncError> {
        let mut st = self.state.lock();
        if st.writer != Some(actor) {
            return Err(SyncError::NotHolder(actor));
        }
        let checked = sess.pass_from_owner(actor, self.protected(), self.proxy().into());
        st.writer = None;
        self.changed.notify_all();
        Ok(checked?)
    }

    pub fn lock_read(&self, sess: &Session, actor: ProcessId) {
        self.lock_read_in(sess, actor, sess.context_of(actor))
    }

    /// Waits for writers to leave, then the lock shares the proxy with `ctx`.
    pub fn lock_read_in(&self, sess: &Session, actor: ProcessId, ctx: EntityId) {
        let mut st = self.state.lock();
        while st.writer.is_some() {
            self.changed.wait(&mut st);
        }
        st.readers.push((actor, ctx));
        let l = self.endpoint.mechanism;
        let _ = sess.check(l, Statement::Share { resource: self.proxy(), with: ctx });
    }

    /// The reader's context releases its ownership of the proxy.
    pub fn unlock_read(&self, sess: &Session, actor: ProcessId) -> Result<(), SyncError> {
        let mut st = self.state.lock();
        let i = st
            .readers
            .iter()
            .position(|&(p, _)| p == actor)
            .ok_or(SyncError::NotReader(actor))?;
        let (_, ctx) = st.readers.remove(i);
        let checked = sess.check(actor, Statement::Release { resource: self.proxy(), by: ctx });
        self.changed.notify_all();
        Ok(checked?)
    }
}

/// A plain binary semaphore with no ownership tracking, for baselines.
#[derive(Debug, Default)]
pub struct RawSemaphore {
    locked: Mutex<bool>,
    released: Condvar,
}

impl RawSemaphore {
    pub fn new(locked: bool) -> Self {
        Self { locked: Mutex::new(locked), released: Condvar::new() }
    }

    pub fn lock(&self) {
        let mut l = self.locked.lock();
        while *l {
            self.released.wait(&mut l);
        }
        *l = true;
    }

    pub fn unlock(&self) {
        *self.locked.lock() = false;
        self.released.notify_one();
    }
}
