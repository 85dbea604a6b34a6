//! Event logs of ownership statements and their replay.
//!
//! A `.somtrace` file holds one JSON object per line with the keys `seq`,
//! `actor`, `op`, `target` and `args`, in that order. Entities are named
//! symbolically (`[a-z][a-z0-9_]*`); a replay maps names to fresh entities
//! of a new session. Every session starts with the process `main` and its
//! staging resource `main_staging`; each spawned process `p` gets a staging
//! resource named `p_staging`.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{Mode, Session, SessionConfig, Violation};
use crate::graph::{EntityId, ProcessId, ResourceId};
use crate::semantics::{Statement, ViolationKind};

pub const EXTENSION: &str = "somtrace";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Op {
    Read,
    Write,
    Pass,
    Share,
    Release,
    Spawn,
    Allocate,
}

/// Operation-specific operands. Only the fields relevant to the op are set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceArgs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binds: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub body_ref: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEvent {
    pub seq: u64,
    pub actor: String,
    pub op: Op,
    pub target: String,
    pub args: TraceArgs,
}

fn name_arg(s: impl Into<String>) -> Option<String> {
    Some(s.into())
}

impl TraceEvent {
    pub fn read(seq: u64, actor: &str, target: &str) -> Self {
        Self::bare(seq, actor, Op::Read, target)
    }

    pub fn write(seq: u64, actor: &str, target: &str) -> Self {
        Self::bare(seq, actor, Op::Write, target)
    }

    pub fn pass(seq: u64, actor: &str, target: &str, from: &str, to: &str) -> Self {
        let mut e = Self::bare(seq, actor, Op::Pass, target);
        e.args.from = name_arg(from);
        e.args.to = name_arg(to);
        e
    }

    pub fn share(seq: u64, actor: &str, target: &str, with: &str) -> Self {
        let mut e = Self::bare(seq, actor, Op::Share, target);
        e.args.with = name_arg(with);
        e
    }

    pub fn release(seq: u64, actor: &str, target: &str, by: &str) -> Self {
        let mut e = Self::bare(seq, actor, Op::Release, target);
        e.args.by = name_arg(by);
        e
    }

    pub fn spawn(seq: u64, actor: &str, binds: &str) -> Self {
        let mut e = Self::bare(seq, actor, Op::Spawn, binds);
        e.args.binds = name_arg(binds);
        e
    }

    pub fn allocate(seq: u64, actor: &str, binds: &str, owner: &str) -> Self {
        let mut e = Self::bare(seq, actor, Op::Allocate, binds);
        e.args.owner = name_arg(owner);
        e.args.binds = name_arg(binds);
        e
    }

    fn bare(seq: u64, actor: &str, op: Op, target: &str) -> Self {
        Self { seq, actor: actor.to_string(), op, target: target.to_string(), args: TraceArgs::default() }
    }

    /// The event describing `s` issued by `actor`.
    pub fn from_statement(
        seq: u64,
        actor: ProcessId,
        s: &Statement,
        mut name: impl FnMut(EntityId) -> String,
    ) -> Self {
        let a = name(actor.into());
        match *s {
            Statement::Read(r) => Self::read(seq, &a, &name(r.into())),
            Statement::Write(r) => Self::write(seq, &a, &name(r.into())),
            Statement::Pass { resource, from, to } => {
                Self::pass(seq, &a, &name(resource.into()), &name(from), &name(to))
            }
            Statement::Share { resource, with } => Self::share(seq, &a, &name(resource.into()), &name(with)),
            Statement::Release { resource, by } => Self::release(seq, &a, &name(resource.into()), &name(by)),
            Statement::Spawn { binds, .. } => Self::spawn(seq, &a, &name(binds.into())),
            Statement::Allocate { owner, binds } => {
                let owner = name(owner);
                Self::allocate(seq, &a, &name(binds.into()), &owner)
            }
        }
    }

    fn required(&self, field: &'static str, v: &Option<String>) -> Result<(), String> {
        match v {
            Some(name) => check_name(name),
            None => Err(format!("op `{}` requires args.{field}", op_name(self.op))),
        }
    }

    /// Checks names and the per-op argument set.
    fn validate(&self) -> Result<(), String> {
        check_name(&self.actor)?;
        check_name(&self.target)?;
        let a = &self.args;
        let allowed: &[&str] = match self.op {
            Op::Read | Op::Write => &[],
            Op::Pass => {
                self.required("from", &a.from)?;
                self.required("to", &a.to)?;
                &["from", "to"]
            }
            Op::Share => {
                self.required("with", &a.with)?;
                &["with"]
            }
            Op::Release => {
                self.required("by", &a.by)?;
                &["by"]
            }
            Op::Spawn => {
                self.required("binds", &a.binds)?;
                &["binds", "body_ref"]
            }
            Op::Allocate => {
                self.required("owner", &a.owner)?;
                self.required("binds", &a.binds)?;
                &["owner", "binds"]
            }
        };
        let present = [
            ("from", &a.from),
            ("to", &a.to),
            ("with", &a.with),
            ("by", &a.by),
            ("owner", &a.owner),
            ("binds", &a.binds),
            ("body_ref", &a.body_ref),
        ];
        for (field, v) in present {
            if v.is_some() && !allowed.contains(&field) {
                return Err(format!("op `{}` does not take args.{field}", op_name(self.op)));
            }
        }
        if let Some(b) = &a.binds {
            if b != &self.target {
                return Err(format!("args.binds `{b}` must equal target `{}`", self.target));
            }
        }
        Ok(())
    }
}

fn op_name(op: Op) -> &'static str {
    match op {
        Op::Read => "read",
        Op::Write => "write",
        Op::Pass => "pass",
        Op::Share => "share",
        Op::Release => "release",
        Op::Spawn => "spawn",
        Op::Allocate => "allocate",
    }
}

fn check_name(name: &str) -> Result<(), String> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    if ok {
        Ok(())
    } else {
        Err(format!("invalid entity name `{name}`"))
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}, byte {offset}: {message}")]
    Parse { line: usize, offset: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Appends one event as a JSON line.
pub fn write_event(out: &mut impl Write, event: &TraceEvent) -> io::Result<()> {
    serde_json::to_writer(&mut *out, event)?;
    out.write_all(b"\n")
}

pub fn write_events(out: &mut impl Write, events: &[TraceEvent]) -> io::Result<()> {
    for e in events {
        write_event(out, e)?;
    }
    Ok(())
}

/// Serializes events to a string in trace format.
pub fn to_string(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_events(&mut buf, events).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Parses a whole trace. Blank lines are skipped. Sequence numbers must
/// strictly increase.
pub fn read_events(input: impl BufRead) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events: Vec<TraceEvent> = Vec::new();
    let mut offset = 0usize;
    for (i, line) in input.split(b'\n').enumerate() {
        let raw = line?;
        let line_no = i + 1;
        let start = offset;
        offset += raw.len() + 1;
        let err = |col: usize, message: String| TraceError::Parse { line: line_no, offset: start + col, message };
        let text = std::str::from_utf8(&raw).map_err(|e| err(e.valid_up_to(), "invalid UTF-8".into()))?;
        let text = text.strip_suffix('\r').unwrap_or(text);
        if text.trim().is_empty() {
            continue;
        }
        let event: TraceEvent =
            serde_json::from_str(text).map_err(|e| err(e.column().saturating_sub(1), e.to_string()))?;
        event.validate().map_err(|m| err(0, m))?;
        if let Some(prev) = events.last() {
            if event.seq <= prev.seq {
                return Err(err(0, format!("seq {} does not follow {}", event.seq, prev.seq)));
            }
        }
        events.push(event);
    }
    Ok(events)
}

pub fn parse(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    read_events(text.as_bytes())
}

/// The outcome of feeding a trace through a fresh session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayReport {
    pub events: usize,
    pub violations: Vec<Violation>,
    pub final_graph: String,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ReplayReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "events: {}", self.events)?;
        writeln!(f, "violations: {}", self.violations.len())?;
        for v in &self.violations {
            write!(f, "{v}")?;
        }
        writeln!(f, "final graph:")?;
        for line in self.final_graph.lines() {
            writeln!(f, "  {line}")?;
        }
        Ok(())
    }
}

/// Name resolution for one replay.
struct Names<'s> {
    session: &'s Session,
    bound: HashMap<String, EntityId>,
}

impl<'s> Names<'s> {
    fn new(session: &'s Session) -> Self {
        let root = session.root();
        let mut bound = HashMap::new();
        bound.insert("main".to_string(), root.into());
        let staging = session.staging_of(root).expect("root has a staging resource");
        bound.insert("main_staging".to_string(), staging.into());
        Self { session, bound }
    }

    /// An unbound entity carrying `name`, so that the premise reports it.
    fn unbound_process(&self, name: &str) -> ProcessId {
        let p = self.session.fresh_process_id();
        self.session.set_name(p, name);
        p
    }

    fn unbound_resource(&self, name: &str) -> ResourceId {
        let r = self.session.fresh_resource_id();
        self.session.set_name(r, name);
        r
    }

    fn process(&self, name: &str) -> ProcessId {
        match self.bound.get(name).and_then(|e| e.as_process()) {
            Some(p) => p,
            None => self.unbound_process(name),
        }
    }

    fn resource(&self, name: &str) -> ResourceId {
        match self.bound.get(name).and_then(|e| e.as_resource()) {
            Some(r) => r,
            None => self.unbound_resource(name),
        }
    }

    fn entity(&self, name: &str) -> EntityId {
        match self.bound.get(name) {
            Some(&e) => e,
            None => self.unbound_resource(name).into(),
        }
    }
}

fn arg(v: &Option<String>) -> &str {
    v.as_deref().expect("validated on read")
}

/// Replays `events` in sequence order against a fresh session.
pub fn replay(events: &[TraceEvent], mode: Mode) -> ReplayReport {
    let session = Session::with_config(SessionConfig::new(mode));
    let mut names = Names::new(&session);
    let mut ordered: Vec<&TraceEvent> = events.iter().collect();
    ordered.sort_by_key(|e| e.seq);
    for e in ordered {
        let actor = names.process(&e.actor);
        let a = &e.args;
        let statement = match e.op {
            Op::Read => Statement::Read(names.resource(&e.target)),
            Op::Write => Statement::Write(names.resource(&e.target)),
            Op::Pass => Statement::Pass {
                resource: names.resource(&e.target),
                from: names.entity(arg(&a.from)),
                to: names.entity(arg(&a.to)),
            },
            Op::Share => Statement::Share { resource: names.resource(&e.target), with: names.entity(arg(&a.with)) },
            Op::Release => Statement::Release { resource: names.resource(&e.target), by: names.entity(arg(&a.by)) },
            Op::Spawn => {
                let name = arg(&a.binds);
                match names.bound.get(name) {
                    Some(&existing) => {
                        let binds = existing.as_process().unwrap_or_else(|| names.unbound_process(name));
                        let s = Statement::spawn(binds);
                        if existing.is_process() {
                            let _ = session.check_at(e.seq, actor, s);
                        } else {
                            session.reject_at(e.seq, actor, s, ViolationKind::NotFresh);
                        }
                        continue;
                    }
                    None => {
                        let p = names.unbound_process(name);
                        let _ = session.check_at(e.seq, actor, Statement::spawn(p));
                        names.bound.insert(name.to_string(), p.into());
                        if let Some(st) = session.staging_of(p) {
                            names.bound.insert(format!("{name}_staging"), st.into());
                        }
                        continue;
                    }
                }
            }
            Op::Allocate => {
                let name = arg(&a.binds);
                let owner = names.entity(arg(&a.owner));
                match names.bound.get(name) {
                    Some(&existing) => {
                        let binds = existing.as_resource().unwrap_or_else(|| names.unbound_resource(name));
                        let s = Statement::Allocate { owner, binds };
                        if existing.is_resource() {
                            let _ = session.check_at(e.seq, actor, s);
                        } else {
                            session.reject_at(e.seq, actor, s, ViolationKind::NotFresh);
                        }
                        continue;
                    }
                    None => {
                        let r = names.unbound_resource(name);
                        let _ = session.check_at(e.seq, actor, Statement::Allocate { owner, binds: r });
                        names.bound.insert(name.to_string(), r.into());
                        continue;
                    }
                }
            }
        };
        let _ = session.check_at(e.seq, actor, statement);
    }
    ReplayReport { events: events.len(), violations: session.violations(), final_graph: session.export() }
}
