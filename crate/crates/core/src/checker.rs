//! Dynamic ownership checking for running programs.
//!
//! A [`Session`] holds the ownership graph of one program run. Threads of
//! the program report what they do through the hooks (`on_field_read`,
//! `on_allocate`, ...). Each hook turns into one or more statements whose
//! premises are checked as assertions: a false premise is recorded as a
//! [`Violation`] and the program carries on.
//!
//! All statements of a session are applied inside one critical section, so
//! sequence numbers give a total order over the checks. A successful read or
//! write of an object hanging off a chain of single owners is answered from
//! a lock-free copy of those links instead, and takes no sequence number.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{fence, AtomicPtr, AtomicU64, Ordering};

use parking_lot::Mutex;
use rustc_hash::{FxHashMap, FxHashSet};
use thiserror::Error;

use crate::graph::{EntityId, OwnershipGraph, ProcessId, ResourceId};
use crate::semantics::{force, step_with, Rules, Statement, ViolationKind};
use crate::trace::TraceEvent;

/// Environment variable selecting the default mode.
pub const MODE_ENV: &str = "SOM_MODE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// Build the graph and check every access.
    Full,
    /// Build the graph but skip read/write checks.
    Partial,
    /// Ignore every statement.
    None,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Full, Mode::Partial, Mode::None];

    /// Reads [`MODE_ENV`], falling back to `Full` when unset or unparsable.
    pub fn from_env() -> Mode {
        std::env::var(MODE_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(Mode::Full)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::Partial => "partial",
            Mode::None => "none",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mode `{0}` (expected full, partial or none)")]
pub struct ParseModeError(pub String);

impl FromStr for Mode {
    type Err = ParseModeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Mode::Full),
            "partial" => Ok(Mode::Partial),
            "none" => Ok(Mode::None),
            _ => Err(ParseModeError(s.to_string())),
        }
    }
}

/// A statement whose premise did not hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub actor: ProcessId,
    pub statement: Statement,
    /// Actor name as rendered in reports.
    pub actor_name: String,
    /// The statement in calculus syntax, with session names.
    pub rendered: String,
    /// Graph export taken just before the statement.
    pub graph_snapshot: String,
    pub sequence_number: u64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "#{} {} actor={} stmt={}",
            self.sequence_number, self.kind, self.actor_name, self.rendered
        )?;
        for line in self.graph_snapshot.lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Violation {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckError {
    #[error("ownership violation: {0}")]
    Violation(#[from] Violation),
    /// The implicit-source pass needs exactly one direct owner.
    #[error("resource {0} has more than one direct owner")]
    MultiOwner(ResourceId),
}

#[derive(Debug, Clone, Copy)]
pub struct SessionConfig {
    pub mode: Mode,
    /// Panic on the first violation instead of recording it and continuing.
    pub strict: bool,
    pub rules: Rules,
    /// Record every evaluated statement as a trace event.
    pub trace: bool,
}

impl SessionConfig {
    pub fn new(mode: Mode) -> Self {
        Self { mode, strict: false, rules: Rules::default(), trace: false }
    }

    pub fn strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn rules(mut self, rules: Rules) -> Self {
        self.rules = rules;
        self
    }

    pub fn trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }
}

/// Each session draws ids from its own 2^32-wide block.
static NEXT_BASE: AtomicU64 = AtomicU64::new(0);
const BLOCK: u64 = 1 << 32;
/// Ids a thread reserves from a session at a time.
const CHUNK: u64 = 64;

thread_local! {
    /// Reserved but unused ids `(next, end)` of the session this thread
    /// minted from last.
    static RESERVED: Cell<(u64, u64)> = const { Cell::new((0, 0)) };
}

struct State {
    graph: OwnershipGraph,
    staging: FxHashMap<ProcessId, ResourceId>,
    contexts: FxHashMap<ProcessId, EntityId>,
    names: FxHashMap<EntityId, String>,
    proxies: FxHashSet<ResourceId>,
    terminated: FxHashSet<ProcessId>,
    scope_of: FxHashMap<ResourceId, usize>,
    scopes: Vec<(String, bool)>,
    any_scope_disabled: bool,
    violations: Vec<Violation>,
    next_seq: u64,
    trace: Option<Vec<TraceEvent>>,
}

/// Largest number of entities per session whose links are mirrored.
const MAX_LINKS: usize = 1 << 24;
const MAX_HOPS: usize = 64;

/// Single-owner links of the session's own entities, readable without the
/// session lock. Slot `i` describes the entity with local id `i`: zero when
/// it has no single direct owner inside the session, otherwise the owner's
/// local id shifted left by one, with the low bit set for processes.
///
/// Writers hold the session lock and bracket their updates with
/// [`begin`](Self::begin) and [`end`](Self::end). Readers never wait; when
/// a write overlapped they report "unknown" and the caller takes the lock.
struct OwnerLinks {
    version: AtomicU64,
    /// The newest table. Older ones stay allocated in `tables` until the
    /// session is dropped, since a reader may still be looking at them.
    current: AtomicPtr<Box<[AtomicU64]>>,
    #[allow(clippy::vec_box)]
    tables: Mutex<Vec<Box<Box<[AtomicU64]>>>>,
}

impl OwnerLinks {
    fn new() -> Self {
        let mut first: Box<Box<[AtomicU64]>> = Box::new((0..1024).map(|_| AtomicU64::new(0)).collect());
        let current = AtomicPtr::new(&mut *first);
        Self { version: AtomicU64::new(0), current, tables: Mutex::new(vec![first]) }
    }

    #[inline(always)]
    fn table(&self) -> &[AtomicU64] {
        // SAFETY: `current` always points into a box owned by `tables`, and
        // boxes are only dropped together with `self`.
        unsafe { &*self.current.load(Ordering::Acquire) }
    }

    fn begin(&self) {
        let v = self.version.load(Ordering::Relaxed);
        self.version.store(v + 1, Ordering::Relaxed);
        fence(Ordering::Release);
    }

    fn end(&self) {
        let v = self.version.load(Ordering::Relaxed);
        self.version.store(v + 1, Ordering::Release);
    }

    fn set(&self, local: u64, link: u64) {
        let i = local as usize;
        if i >= MAX_LINKS {
            return;
        }
        let table = self.table();
        if i < table.len() {
            table[i].store(link, Ordering::Relaxed);
            return;
        }
        if link == 0 {
            return;
        }
        let len = (i + 1).next_power_of_two().max(table.len() * 2);
        let mut grown: Box<Box<[AtomicU64]>> = Box::new(
            (0..len)
                .map(|j| AtomicU64::new(table.get(j).map_or(0, |a| a.load(Ordering::Relaxed))))
                .collect(),
        );
        grown[i].store(link, Ordering::Relaxed);
        self.current.store(&mut *grown, Ordering::Release);
        self.tables.lock().push(grown);
    }

    /// True when `local` reaches the process `actor` through single owners
    /// only, as of one consistent version.
    #[inline(always)]
    fn sole_root(&self, local: u64, actor: u64) -> bool {
        let v = self.version.load(Ordering::Acquire);
        if v & 1 == 1 {
            return false;
        }
        let table = self.table();
        let mut cur = local as usize;
        for _ in 0..MAX_HOPS {
            let Some(slot) = table.get(cur) else {
                return false;
            };
            let link = slot.load(Ordering::Relaxed);
            if link == 0 {
                return false;
            }
            if link & 1 == 1 {
                fence(Ordering::Acquire);
                return link >> 1 == actor && self.version.load(Ordering::Relaxed) == v;
            }
            cur = (link >> 1) as usize;
        }
        false
    }
}

/// The checking runtime for one program run.
pub struct Session {
    config: SessionConfig,
    base: u64,
    next_local: AtomicU64,
    root: ProcessId,
    links: OwnerLinks,
    state: Mutex<State>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("mode", &self.config.mode)
            .field("root", &self.root)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn new(mode: Mode) -> Self {
        Self::with_config(SessionConfig::new(mode))
    }

    /// Creates a session holding the root process `main` and its staging
    /// resource `main_staging`.
    pub fn with_config(config: SessionConfig) -> Self {
        let base = NEXT_BASE.fetch_add(BLOCK, Ordering::Relaxed);
        let root = ProcessId(base);
        let mut state = State {
            graph: OwnershipGraph::new(),
            staging: FxHashMap::default(),
            contexts: FxHashMap::default(),
            names: FxHashMap::default(),
            proxies: FxHashSet::default(),
            terminated: FxHashSet::default(),
            scope_of: FxHashMap::default(),
            scopes: Vec::new(),
            any_scope_disabled: false,
            violations: Vec::new(),
            next_seq: 0,
            trace: config.trace.then(Vec::new),
        };
        state.graph.insert_entity(root);
        state.names.insert(root.into(), "main".to_string());
        let session = Self {
            config,
            base,
            next_local: AtomicU64::new(1),
            root,
            links: OwnerLinks::new(),
            state: Mutex::new(state),
        };
        let mut st = session.state.lock();
        session.links.begin();
        session.attach_staging(&mut st, root);
        session.links.end();
        drop(st);
        session
    }

    #[inline]
    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn config(&self) -> SessionConfig {
        self.config
    }

    /// The process that exists from the start.
    pub fn root(&self) -> ProcessId {
        self.root
    }

    #[inline]
    fn mint(&self) -> u64 {
        RESERVED.with(|r| {
            let (next, end) = r.get();
            if next < end && next.wrapping_sub(self.base) < BLOCK {
                r.set((next + 1, end));
                return next;
            }
            self.reserve(r)
        })
    }

    #[cold]
    fn reserve(&self, r: &Cell<(u64, u64)>) -> u64 {
        let local = self.next_local.fetch_add(CHUNK, Ordering::Relaxed);
        assert!(local + CHUNK <= BLOCK, "session id space exhausted");
        let next = self.base + local;
        r.set((next + 1, next + CHUNK));
        next
    }

    /// A process id never used before in this session. It is not part of
    /// the graph until a spawn for it succeeds.
    #[inline]
    pub fn fresh_process_id(&self) -> ProcessId {
        ProcessId(self.mint())
    }

    #[inline]
    pub fn fresh_resource_id(&self) -> ResourceId {
        ResourceId(self.mint())
    }

    fn attach_staging(&self, st: &mut State, p: ProcessId) {
        let staging = self.fresh_resource_id();
        st.graph.insert_entity(staging);
        st.graph.add_edge(p, staging).expect("process was just added");
        self.refresh_link(st, staging);
        let name = format!("{}_staging", self.name_in(st, p.into()));
        st.names.insert(staging.into(), name);
        st.staging.insert(p, staging);
    }

    #[inline(always)]
    fn local(&self, e: EntityId) -> Option<u64> {
        e.id().checked_sub(self.base).filter(|&l| l < BLOCK)
    }

    /// Copies the direct-owner situation of `r` into the lock-free links.
    /// Callers hold the state lock inside a `links.begin()`/`end()` pair.
    fn refresh_link(&self, st: &State, r: ResourceId) {
        let Some(local) = self.local(r.into()) else {
            return;
        };
        let link = match st.graph.owners(r) {
            Some(&[owner]) => self.local(owner).map_or(0, |o| (o << 1) | u64::from(owner.is_process())),
            _ => 0,
        };
        self.links.set(local, link);
    }

    /// Lock-free test that `actor` is the sole root of `r`, for the common
    /// case of a chain of single owners. False means "ask the graph".
    #[inline(always)]
    fn fast_sole_root(&self, actor: ProcessId, r: ResourceId) -> bool {
        if self.config.trace {
            return false;
        }
        match (self.local(r.into()), self.local(actor.into())) {
            (Some(r), Some(a)) => self.links.sole_root(r, a),
            _ => false,
        }
    }

    fn default_name(&self, e: EntityId) -> String {
        match e.id().checked_sub(self.base).filter(|&l| l < BLOCK) {
            Some(local) if e.is_process() => format!("p{local}"),
            Some(local) => format!("r{local}"),
            None => format!("x{}", e.id()),
        }
    }

    fn name_in(&self, st: &State, e: EntityId) -> String {
        st.names.get(&e).cloned().unwrap_or_else(|| self.default_name(e))
    }

    /// The name used for `e` in reports and traces.
    pub fn name_of(&self, e: impl Into<EntityId>) -> String {
        let st = self.state.lock();
        self.name_in(&st, e.into())
    }

    pub fn set_name(&self, e: impl Into<EntityId>, name: impl Into<String>) {
        self.state.lock().names.insert(e.into(), name.into());
    }

    /// The per-process resource that owns freshly allocated objects.
    pub fn staging_of(&self, p: ProcessId) -> Option<ResourceId> {
        self.state.lock().staging.get(&p).copied()
    }

    /// The entity standing for "the caller" of a synchronization operation
    /// issued by `p`: its thread object if it was started from one, else
    /// the process itself.
    pub fn context_of(&self, p: ProcessId) -> EntityId {
        self.state.lock().contexts.get(&p).copied().unwrap_or(p.into())
    }

    pub fn is_live(&self, p: ProcessId) -> bool {
        let st = self.state.lock();
        st.graph.contains(p) && !st.terminated.contains(&p)
    }

    /// Marks `p` as finished. Its edges stay in the graph.
    pub fn terminate(&self, p: ProcessId) {
        self.state.lock().terminated.insert(p);
    }

    /// Marks `r` as a shared proxy, the only kind of resource that may have
    /// several direct owners under the single-owner discipline.
    pub fn mark_proxy(&self, r: ResourceId) {
        self.state.lock().proxies.insert(r);
    }

    pub fn is_proxy(&self, r: ResourceId) -> bool {
        self.state.lock().proxies.contains(&r)
    }

    /// A copy of the current graph.
    pub fn graph(&self) -> OwnershipGraph {
        self.state.lock().graph.clone()
    }

    /// The current graph in text form, with session names.
    pub fn export(&self) -> String {
        let st = self.state.lock();
        st.graph.export_with(|e| self.name_in(&st, e))
    }

    pub fn violations(&self) -> Vec<Violation> {
        self.state.lock().violations.clone()
    }

    pub fn violation_count(&self) -> usize {
        self.state.lock().violations.len()
    }

    /// All violations in report format.
    pub fn report(&self) -> String {
        self.state.lock().violations.iter().map(|v| v.to_string()).collect()
    }

    /// The recorded trace, if tracing is on.
    pub fn trace_events(&self) -> Option<Vec<TraceEvent>> {
        self.state.lock().trace.clone()
    }

    /// Resources whose roots are all terminated processes.
    pub fn leak_report(&self) -> Vec<ResourceId> {
        let st = self.state.lock();
        if st.terminated.is_empty() {
            return Vec::new();
        }
        let mut leaked: Vec<ResourceId> = st
            .graph
            .entities()
            .into_iter()
            .filter_map(EntityId::as_resource)
            .filter(|&r| {
                st.graph
                    .root_of(r)
                    .is_ok_and(|roots| !roots.is_empty() && roots.iter().all(|p| st.terminated.contains(p)))
            })
            .collect();
        leaked.sort_unstable();
        leaked
    }

    /// Disables or re-enables read/write checks on resources allocated in
    /// `scope` (see [`on_allocate_in`](Self::on_allocate_in)).
    pub fn set_scope_enabled(&self, scope: &str, enabled: bool) {
        let mut st = self.state.lock();
        match st.scopes.iter_mut().find(|(n, _)| n == scope) {
            Some(entry) => entry.1 = enabled,
            None => st.scopes.push((scope.to_string(), enabled)),
        }
        st.any_scope_disabled = st.scopes.iter().any(|(_, on)| !on);
    }

    fn finish<T>(&self, r: Result<T, Box<Violation>>) -> Result<T, Violation> {
        if self.config.strict {
            if let Err(v) = &r {
                panic!("ownership violation\n{v}");
            }
        }
        r.map_err(|v| *v)
    }

    /// Evaluates one statement. In mode `Full` the premise is asserted; a
    /// failing mutation is still applied when the result is a valid
    /// ownership graph. Mode `Partial` skips reads and writes; mode `None`
    /// skips everything.
    pub fn check(&self, actor: ProcessId, s: Statement) -> Result<(), Violation> {
        if self.skips(&s) {
            return Ok(());
        }
        if let Statement::Read(r) | Statement::Write(r) = s {
            if self.fast_sole_root(actor, r) {
                return Ok(());
            }
        }
        self.check_locked(actor, s)
    }

    #[cold]
    #[inline(never)]
    fn check_access(&self, actor: ProcessId, s: Statement) -> Result<(), Violation> {
        if self.skips(&s) {
            return Ok(());
        }
        self.check_locked(actor, s)
    }

    fn check_locked(&self, actor: ProcessId, s: Statement) -> Result<(), Violation> {
        let r = {
            let mut st = self.state.lock();
            self.process(&mut st, actor, s, None)
        };
        self.finish(r)
    }

    /// Like [`check`](Self::check) but with an externally assigned sequence
    /// number, which must exceed every number used so far.
    pub fn check_at(&self, seq: u64, actor: ProcessId, s: Statement) -> Result<(), Violation> {
        if self.skips(&s) {
            return Ok(());
        }
        let r = {
            let mut st = self.state.lock();
            self.process(&mut st, actor, s, Some(seq))
        };
        self.finish(r)
    }

    /// Records `s` as violating with `kind` without evaluating it.
    pub fn reject_at(&self, seq: u64, actor: ProcessId, s: Statement, kind: ViolationKind) -> Violation {
        let v = {
            let mut st = self.state.lock();
            let seq = self.take_seq(&mut st, Some(seq));
            self.log(&mut st, seq, actor, &s);
            self.record(&mut st, seq, actor, s, kind)
        };
        self.finish::<()>(Err(v.clone())).ok();
        *v
    }

    #[inline]
    fn skips(&self, s: &Statement) -> bool {
        match self.config.mode {
            Mode::Full => false,
            Mode::Partial => !s.is_mutation(),
            Mode::None => true,
        }
    }

    fn take_seq(&self, st: &mut State, seq: Option<u64>) -> u64 {
        let seq = match seq {
            Some(s) => {
                debug_assert!(s >= st.next_seq, "sequence numbers must increase");
                s
            }
            None => st.next_seq,
        };
        st.next_seq = seq + 1;
        seq
    }

    fn log(&self, st: &mut State, seq: u64, actor: ProcessId, s: &Statement) {
        if st.trace.is_none() {
            return;
        }
        let event = TraceEvent::from_statement(seq, actor, s, |e| self.name_in(st, e));
        if let Some(trace) = st.trace.as_mut() {
            trace.push(event);
        }
    }

    fn record(&self, st: &mut State, seq: u64, actor: ProcessId, s: Statement, kind: ViolationKind) -> Box<Violation> {
        let name = |e| self.name_in(st, e);
        let v = Violation {
            kind,
            actor,
            actor_name: name(actor.into()),
            rendered: s.render(&name),
            statement: s,
            graph_snapshot: st.graph.export_with(name),
            sequence_number: seq,
        };
        st.violations.push(v.clone());
        Box::new(v)
    }

    fn scope_disabled(st: &State, s: &Statement) -> bool {
        let (Statement::Read(r) | Statement::Write(r)) = s else {
            return false;
        };
        st.scope_of.get(r).is_some_and(|&i| !st.scopes[i].1)
    }

    fn process(&self, st: &mut State, actor: ProcessId, s: Statement, seq: Option<u64>) -> Result<(), Box<Violation>> {
        let seq = self.take_seq(st, seq);
        self.log(st, seq, actor, &s);
        if st.any_scope_disabled && Self::scope_disabled(st, &s) {
            return Ok(());
        }
        if !s.is_mutation() {
            return match step_with(&mut st.graph, actor, &s, self.config.rules) {
                Ok(()) => Ok(()),
                Err(kind) => Err(self.record(st, seq, actor, s, kind)),
            };
        }
        self.links.begin();
        let r = match step_with(&mut st.graph, actor, &s, self.config.rules) {
            Ok(()) => {
                self.after_mutation(st, &s);
                Ok(())
            }
            Err(kind) => {
                let v = self.record(st, seq, actor, s, kind);
                if force(&mut st.graph, &v.statement) {
                    self.after_mutation(st, &v.statement);
                }
                Err(v)
            }
        };
        self.links.end();
        r
    }

    fn after_mutation(&self, st: &mut State, s: &Statement) {
        match *s {
            Statement::Pass { resource, .. }
            | Statement::Share { resource, .. }
            | Statement::Release { resource, .. }
            | Statement::Allocate { binds: resource, .. } => self.refresh_link(st, resource),
            Statement::Spawn { binds, .. } => self.attach_staging(st, binds),
            Statement::Read(_) | Statement::Write(_) => {}
        }
    }

    /// Hook for reading a field of `obj`.
    #[inline]
    pub fn on_field_read(&self, actor: ProcessId, obj: ResourceId) -> Result<(), Violation> {
        if self.config.mode != Mode::Full || self.fast_sole_root(actor, obj) {
            return Ok(());
        }
        self.check_access(actor, Statement::Read(obj))
    }

    /// Hook for writing a field of `obj`.
    #[inline]
    pub fn on_field_write(&self, actor: ProcessId, obj: ResourceId) -> Result<(), Violation> {
        if self.config.mode != Mode::Full || self.fast_sole_root(actor, obj) {
            return Ok(());
        }
        self.check_access(actor, Statement::Write(obj))
    }

    /// Hook for creating an object: a fresh resource owned by the actor's
    /// staging resource. Call it before running the object's constructor.
    #[inline]
    pub fn on_allocate(&self, actor: ProcessId) -> ResourceId {
        let id = self.fresh_resource_id();
        if self.config.mode == Mode::None {
            return id;
        }
        self.allocate_checked(actor, id)
    }

    fn allocate_checked(&self, actor: ProcessId, id: ResourceId) -> ResourceId {
        let r = {
            let mut st = self.state.lock();
            let owner = st.staging.get(&actor).map_or(EntityId::from(actor), |&s| s.into());
            self.process(&mut st, actor, Statement::Allocate { owner, binds: id }, None)
        };
        self.finish(r).ok();
        id
    }

    /// [`on_allocate`](Self::on_allocate), tagging the object with a scope
    /// whose read/write checks can be switched off.
    pub fn on_allocate_in(&self, actor: ProcessId, scope: &str) -> ResourceId {
        let id = self.on_allocate(actor);
        if self.config.mode != Mode::None {
            let mut st = self.state.lock();
            let idx = match st.scopes.iter().position(|(n, _)| n == scope) {
                Some(i) => i,
                None => {
                    st.scopes.push((scope.to_string(), true));
                    st.scopes.len() - 1
                }
            };
            st.scope_of.insert(id, idx);
        }
        id
    }

    /// Hook for `target.field = value`. Writes `target`; if `value` still
    /// sits in the actor's staging resource, the target becomes its owner.
    #[inline]
    pub fn on_field_assign(&self, actor: ProcessId, target: ResourceId, value: ResourceId) -> Result<(), Violation> {
        if self.config.mode == Mode::None {
            return Ok(());
        }
        self.assign_checked(actor, target, value)
    }

    fn assign_checked(&self, actor: ProcessId, target: ResourceId, value: ResourceId) -> Result<(), Violation> {
        let r = {
            let mut st = self.state.lock();
            let write = if self.config.mode == Mode::Full && !self.fast_sole_root(actor, target) {
                self.process(&mut st, actor, Statement::Write(target), None)
            } else {
                Ok(())
            };
            let staged = st.staging.get(&actor).copied().filter(|&s| st.graph.has_edge(s, value));
            let pass = match staged {
                Some(staging) => self.process(
                    &mut st,
                    actor,
                    Statement::Pass { resource: value, from: staging.into(), to: target.into() },
                    None,
                ),
                None => Ok(()),
            };
            write.and(pass)
        };
        self.finish(r)
    }

    /// Spawns a process on behalf of `actor` (no thread object involved).
    pub fn spawn(&self, actor: ProcessId) -> Result<ProcessId, Violation> {
        let child = self.fresh_process_id();
        self.check(actor, Statement::spawn(child)).map(|()| child)
    }

    /// Hook for starting a thread from the object `thread_obj`: spawns a
    /// process and hands it the thread object, which becomes the new
    /// process's context.
    pub fn on_thread_start(&self, actor: ProcessId, thread_obj: ResourceId) -> Result<ProcessId, Violation> {
        let child = self.fresh_process_id();
        if self.config.mode == Mode::None {
            return Ok(child);
        }
        let r = {
            let mut st = self.state.lock();
            let spawned = self.process(&mut st, actor, Statement::spawn(child), None);
            let from = Self::direct_owner(&st, thread_obj).unwrap_or(actor.into());
            let passed = self.process(
                &mut st,
                actor,
                Statement::Pass { resource: thread_obj, from, to: child.into() },
                None,
            );
            st.contexts.insert(child, thread_obj.into());
            spawned.and(passed).map(|()| child)
        };
        self.finish(r)
    }

    fn direct_owner(st: &State, r: ResourceId) -> Option<EntityId> {
        match st.graph.owners(r) {
            Some([only]) => Some(*only),
            Some([first, ..]) => Some(*first),
            _ => None,
        }
    }

    /// The direct owner of `r` when it has exactly one.
    pub fn sole_direct_owner(&self, r: ResourceId) -> Option<EntityId> {
        match self.state.lock().graph.owners(r) {
            Some([only]) => Some(*only),
            _ => None,
        }
    }

    /// `r.pass(to)`: moves `r` from its single direct owner to `to`.
    pub fn pass(&self, actor: ProcessId, r: ResourceId, to: impl Into<EntityId>) -> Result<(), CheckError> {
        let to = to.into();
        if self.config.mode == Mode::None {
            return Ok(());
        }
        let r = {
            let mut st = self.state.lock();
            let from = match st.graph.owners(r) {
                Some([only]) => *only,
                Some([_, _, ..]) => return Err(CheckError::MultiOwner(r)),
                // Unknown or unowned: let the premise report it.
                _ => actor.into(),
            };
            self.process(&mut st, actor, Statement::Pass { resource: r, from, to }, None)
        };
        Ok(self.finish(r)?)
    }

    /// Issues a pass from whatever directly owns `r` (the first owner if
    /// there are several) to `to`, attributed to `actor`. Used by the
    /// synchronization adapters.
    pub fn pass_from_owner(&self, actor: ProcessId, r: ResourceId, to: EntityId) -> Result<(), Violation> {
        if self.config.mode == Mode::None {
            return Ok(());
        }
        let res = {
            let mut st = self.state.lock();
            let from = Self::direct_owner(&st, r).unwrap_or(actor.into());
            self.process(&mut st, actor, Statement::Pass { resource: r, from, to }, None)
        };
        self.finish(res)
    }
}
