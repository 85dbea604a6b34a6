//! Exhaustive interleaving exploration of small programs.
//!
//! Programs are written in a small textual language:
//!
//! ```text
//! # bootstrap
//! o := main.allocate
//! edge helper -> o
//!
//! process main {
//!     o.write
//!     o.pass(main, helper)
//!     w := spawn { r := w.allocate  r.write }
//!     repeat 2 { o2 := main.allocate }
//! }
//! process helper { o.read }
//! ```
//!
//! Every `process` block is a process of the initial configuration. Top-level
//! `r := a.allocate`, `resource r` and `edge a -> r` build the initial graph.
//! `repeat k { ... }` is unrolled while parsing, so every unrolled binding
//! site gets its own entity id. Ids are fixed per site rather than drawn at
//! run time, which makes state hashing independent of the schedule.
//!
//! A name refers to the nearest binding before it in the unrolled program
//! text; a name used before any of its bindings refers to the first one.
//! Process names from `process` blocks are visible everywhere.
//!
//! [`explore`] runs a depth-first search over all interleavings using the
//! blocking reading of the rules: a statement whose premise is false has no
//! successor. Each visited state is checked for data races, and each
//! successor graph for validity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use rustc_hash::FxHashSet;
use serde_json::{json, Value};
use thiserror::Error;

use crate::graph::{Edge, EntityId, GraphError, OwnershipGraph, ProcessId, ResourceId};
use crate::semantics::{reducible, Configuration, Continuation, Statement};

pub const EXTENSION: &str = "som";
pub const DEFAULT_REPEAT_BOUND: u32 = 3;
pub const DEFAULT_MAX_STATES: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location {
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{at}: {message}")]
    Syntax { at: Location, message: String },
    #[error("{at}: undeclared name `{name}`")]
    UndeclaredName { at: Location, name: String },
}

impl ParseError {
    pub fn location(&self) -> Location {
        match self {
            ParseError::Syntax { at, .. } | ParseError::UndeclaredName { at, .. } => *at,
        }
    }

    fn syntax(at: Location, message: impl Into<String>) -> Self {
        ParseError::Syntax { at, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Largest `k` accepted in `repeat k { ... }`.
    pub repeat_bound: u32,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self { repeat_bound: DEFAULT_REPEAT_BOUND }
    }
}

/// A bootstrap declaration contributing to the initial graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decl {
    Allocate { owner: EntityId, binds: ResourceId },
    Resource(ResourceId),
    Edge(Edge),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessDecl {
    pub name: String,
    pub id: ProcessId,
    pub body: Vec<Statement>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SomProgram {
    pub initial_decls: Vec<Decl>,
    pub processes: Vec<ProcessDecl>,
    names: Arc<BTreeMap<EntityId, String>>,
}

impl SomProgram {
    pub fn name_of(&self, e: EntityId) -> String {
        display_name(&self.names, e)
    }

    /// Looks up the entity bound first under `name`.
    pub fn lookup(&self, name: &str) -> Option<EntityId> {
        self.names.iter().find(|(_, n)| n.as_str() == name).map(|(&e, _)| e)
    }

    /// Every process the program can ever contain, spawned ones included.
    pub fn process_count(&self) -> usize {
        self.names.keys().filter(|e| e.as_process().is_some()).count()
    }

    /// The distinct statement kinds used anywhere in the program, with
    /// bootstrap allocations counted as `allocate`.
    pub fn statement_kinds(&self) -> BTreeSet<&'static str> {
        fn walk(body: &[Statement], out: &mut BTreeSet<&'static str>) {
            for s in body {
                out.insert(s.op_name());
                if let Statement::Spawn { body, .. } = s {
                    walk(body, out);
                }
            }
        }
        let mut out = BTreeSet::new();
        if self.initial_decls.iter().any(|d| matches!(d, Decl::Allocate { .. })) {
            out.insert("allocate");
        }
        for p in &self.processes {
            walk(&p.body, &mut out);
        }
        out
    }

    pub fn initial_graph(&self) -> Result<OwnershipGraph, GraphError> {
        let mut g = OwnershipGraph::new();
        for p in &self.processes {
            g.insert_entity(p.id);
        }
        for d in &self.initial_decls {
            match *d {
                Decl::Allocate { owner, binds } => {
                    if !g.contains(owner) {
                        return Err(GraphError::UnknownEntity(owner));
                    }
                    g.insert_entity(binds);
                    g.add_edge(owner, binds)?;
                }
                Decl::Resource(r) => {
                    g.insert_entity(r);
                }
                Decl::Edge(e) => g.add_edge(e.owner, e.owned)?,
            }
        }
        g.validate()?;
        Ok(g)
    }

    pub fn initial_configuration(&self) -> Result<Configuration, GraphError> {
        let graph = self.initial_graph()?;
        let processes = self
            .processes
            .iter()
            .map(|p| (p.id, Continuation::new(p.body.clone())))
            .collect();
        Ok(Configuration::new(graph, processes))
    }

    pub fn render_configuration(&self, c: &Configuration) -> String {
        render_configuration(&self.names, c)
    }
}

pub fn parse(text: &str) -> Result<SomProgram, ParseError> {
    parse_with(text, ParseOptions::default())
}

pub fn parse_with(text: &str, options: ParseOptions) -> Result<SomProgram, ParseError> {
    let tokens = tokenize(text)?;
    let items = Parser { tokens, pos: 0, options }.file()?;
    Lowerer::default().program(&items)
}

// ---------------------------------------------------------------------------
// Tokens

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Number(u64),
    LBrace,
    RBrace,
    LParen,
    RParen,
    Comma,
    Dot,
    Assign,
    Arrow,
    Semi,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Number(n) => write!(f, "`{n}`"),
            Tok::LBrace => f.write_str("`{`"),
            Tok::RBrace => f.write_str("`}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Dot => f.write_str("`.`"),
            Tok::Assign => f.write_str("`:=`"),
            Tok::Arrow => f.write_str("`->`"),
            Tok::Semi => f.write_str("`;`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

fn tokenize(text: &str) -> Result<Vec<(Tok, Location)>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let chars: Vec<char> = line.chars().collect();
        let mut j = 0;
        while j < chars.len() {
            let at = Location { line: i + 1, column: j + 1 };
            let c = chars[j];
            if c == '#' {
                break;
            }
            if c.is_whitespace() {
                j += 1;
                continue;
            }
            if c.is_ascii_alphabetic() || c == '_' {
                let start = j;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                out.push((Tok::Ident(chars[start..j].iter().collect()), at));
                continue;
            }
            if c.is_ascii_digit() {
                let start = j;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                let digits: String = chars[start..j].iter().collect();
                let n = digits.parse().map_err(|_| ParseError::syntax(at, "number too large"))?;
                out.push((Tok::Number(n), at));
                continue;
            }
            let next = chars.get(j + 1).copied();
            let (tok, len) = match (c, next) {
                (':', Some('=')) => (Tok::Assign, 2),
                ('-', Some('>')) => (Tok::Arrow, 2),
                ('{', _) => (Tok::LBrace, 1),
                ('}', _) => (Tok::RBrace, 1),
                ('(', _) => (Tok::LParen, 1),
                (')', _) => (Tok::RParen, 1),
                (',', _) => (Tok::Comma, 1),
                ('.', _) => (Tok::Dot, 1),
                (';', _) => (Tok::Semi, 1),
                _ => return Err(ParseError::syntax(at, format!("unexpected character `{c}`"))),
            };
            out.push((tok, at));
            j += len;
        }
    }
    let end = Location { line: text.lines().count().max(1), column: text.lines().last().map_or(0, |l| l.chars().count()) + 1 };
    out.push((Tok::Eof, end));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Syntax tree

#[derive(Debug, Clone)]
struct Name {
    text: String,
    at: Location,
}

#[derive(Debug, Clone)]
enum Stmt {
    Read(Name),
    Write(Name),
    Pass(Name, Name, Name),
    Share(Name, Name),
    Release(Name, Name),
    Spawn(Name, Vec<Stmt>),
    Allocate(Name, Name),
    Repeat(u32, Vec<Stmt>),
}

#[derive(Debug, Clone)]
enum Item {
    Process(Name, Vec<Stmt>),
    Allocate(Name, Name),
    Resource(Name),
    Edge(Name, Name),
}

const KEYWORDS: [&str; 5] = ["process", "resource", "edge", "repeat", "spawn"];

struct Parser {
    tokens: Vec<(Tok, Location)>,
    pos: usize,
    options: ParseOptions,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].0
    }

    fn peek2(&self) -> &Tok {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)].0
    }

    fn at(&self) -> Location {
        self.tokens[self.pos].1
    }

    fn bump(&mut self) -> (Tok, Location) {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn unexpected<T>(&self, wanted: &str) -> Result<T, ParseError> {
        Err(ParseError::syntax(self.at(), format!("expected {wanted}, found {}", self.peek())))
    }

    fn expect(&mut self, tok: Tok) -> Result<Location, ParseError> {
        if *self.peek() == tok {
            Ok(self.bump().1)
        } else {
            self.unexpected(&tok.to_string())
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn name(&mut self) -> Result<Name, ParseError> {
        match self.peek().clone() {
            Tok::Ident(text) if !KEYWORDS.contains(&text.as_str()) => {
                let at = self.bump().1;
                Ok(Name { text, at })
            }
            _ => self.unexpected("a name"),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.is_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.unexpected(&format!("`{kw}`"))
        }
    }

    fn file(mut self) -> Result<Vec<Item>, ParseError> {
        let mut items = Vec::new();
        loop {
            match self.peek() {
                Tok::Eof => return Ok(items),
                Tok::Semi => {
                    self.bump();
                }
                Tok::Ident(s) if s == "process" => {
                    self.bump();
                    let name = self.name()?;
                    let body = self.block()?;
                    items.push(Item::Process(name, body));
                }
                Tok::Ident(s) if s == "resource" => {
                    self.bump();
                    items.push(Item::Resource(self.name()?));
                }
                Tok::Ident(s) if s == "edge" => {
                    self.bump();
                    let owner = self.name()?;
                    self.expect(Tok::Arrow)?;
                    items.push(Item::Edge(owner, self.name()?));
                }
                Tok::Ident(_) if *self.peek2() == Tok::Assign => {
                    let binds = self.name()?;
                    self.bump();
                    if self.is_keyword("spawn") {
                        self.bump();
                        let body = self.block()?;
                        items.push(Item::Process(binds, body));
                    } else {
                        let owner = self.allocate_rhs()?;
                        items.push(Item::Allocate(binds, owner));
                    }
                }
                _ => return self.unexpected("`process`, `resource`, `edge` or a declaration"),
            }
        }
    }

    fn block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut body = Vec::new();
        loop {
            match self.peek() {
                Tok::RBrace => {
                    self.bump();
                    return Ok(body);
                }
                Tok::Semi => {
                    self.bump();
                }
                Tok::Eof => return self.unexpected("`}`"),
                _ => body.push(self.stmt()?),
            }
        }
    }

    fn allocate_rhs(&mut self) -> Result<Name, ParseError> {
        let owner = self.name()?;
        self.expect(Tok::Dot)?;
        self.keyword("allocate")?;
        Ok(owner)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        if self.is_keyword("repeat") {
            let at = self.bump().1;
            let k = match self.bump() {
                (Tok::Number(n), _) => n,
                (t, loc) => return Err(ParseError::syntax(loc, format!("expected a repeat count, found {t}"))),
            };
            if k > u64::from(self.options.repeat_bound) {
                return Err(ParseError::syntax(
                    at,
                    format!("repeat count {k} exceeds the bound {}", self.options.repeat_bound),
                ));
            }
            let body = self.block()?;
            return Ok(Stmt::Repeat(k as u32, body));
        }
        let target = self.name()?;
        if *self.peek() == Tok::Assign {
            self.bump();
            if self.is_keyword("spawn") {
                self.bump();
                return Ok(Stmt::Spawn(target, self.block()?));
            }
            return Ok(Stmt::Allocate(target, self.allocate_rhs()?));
        }
        self.expect(Tok::Dot)?;
        let op_at = self.at();
        let op = match self.bump() {
            (Tok::Ident(op), _) => op,
            (t, loc) => return Err(ParseError::syntax(loc, format!("expected an operation, found {t}"))),
        };
        let arity = match op.as_str() {
            "read" | "write" => 0,
            "share" | "release" => 1,
            "pass" => 2,
            "allocate" => return Err(ParseError::syntax(op_at, "allocate must be bound: `r := a.allocate`")),
            _ => return Err(ParseError::syntax(op_at, format!("unknown operation `{op}`"))),
        };
        let mut args = Vec::new();
        if arity > 0 || *self.peek() == Tok::LParen {
            self.expect(Tok::LParen)?;
            if *self.peek() != Tok::RParen {
                args.push(self.name()?);
                while *self.peek() == Tok::Comma {
                    self.bump();
                    args.push(self.name()?);
                }
            }
            self.expect(Tok::RParen)?;
        }
        if args.len() != arity {
            return Err(ParseError::syntax(
                op_at,
                format!("`{op}` takes {arity} argument(s), found {}", args.len()),
            ));
        }
        let mut args = args.into_iter();
        let mut arg = || args.next().expect("arity checked");
        Ok(match op.as_str() {
            "read" => Stmt::Read(target),
            "write" => Stmt::Write(target),
            "share" => Stmt::Share(target, arg()),
            "release" => Stmt::Release(target, arg()),
            _ => {
                let from = arg();
                Stmt::Pass(target, from, arg())
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Unrolling and name resolution

#[derive(Debug, Clone)]
struct Ref {
    name: Name,
    order: usize,
}

#[derive(Debug)]
enum Low {
    Read(Ref),
    Write(Ref),
    Pass(Ref, Ref, Ref),
    Share(Ref, Ref),
    Release(Ref, Ref),
    Spawn(ProcessId, Vec<Low>),
    Allocate(Ref, ResourceId),
}

#[derive(Debug)]
enum LowDecl {
    Process(ProcessId, Vec<Low>),
    Allocate(Ref, ResourceId),
    Resource(ResourceId),
    Edge(Ref, Ref),
}

#[derive(Default)]
struct Lowerer {
    bindings: HashMap<String, Vec<(usize, EntityId)>>,
    names: BTreeMap<EntityId, String>,
    order: usize,
    next_process: u64,
    next_resource: u64,
}

impl Lowerer {
    fn tick(&mut self) -> usize {
        self.order += 1;
        self.order
    }

    fn refer(&mut self, name: &Name) -> Ref {
        Ref { name: name.clone(), order: self.tick() }
    }

    fn bind(&mut self, name: &Name, e: EntityId, hoisted: bool) {
        let order = if hoisted { 0 } else { self.tick() };
        let sites = self.bindings.entry(name.text.clone()).or_default();
        let label = if sites.is_empty() { name.text.clone() } else { format!("{}#{}", name.text, sites.len() + 1) };
        sites.push((order, e));
        self.names.insert(e, label);
    }

    fn new_process(&mut self, name: &Name, hoisted: bool) -> ProcessId {
        self.next_process += 1;
        let p = ProcessId(self.next_process);
        self.bind(name, p.into(), hoisted);
        p
    }

    fn new_resource(&mut self, name: &Name) -> ResourceId {
        self.next_resource += 1;
        let r = ResourceId(self.next_resource);
        self.bind(name, r.into(), false);
        r
    }

    fn program(mut self, items: &[Item]) -> Result<SomProgram, ParseError> {
        let mut seen = BTreeSet::new();
        let mut heads = Vec::new();
        for item in items {
            if let Item::Process(name, _) = item {
                if !seen.insert(name.text.clone()) {
                    return Err(ParseError::syntax(name.at, format!("process `{}` declared twice", name.text)));
                }
                heads.push(self.new_process(name, true));
            }
        }
        let mut heads = heads.into_iter();
        let mut decls = Vec::new();
        for item in items {
            decls.push(match item {
                Item::Process(_, body) => {
                    let p = heads.next().expect("one id per process block");
                    LowDecl::Process(p, self.body(body))
                }
                Item::Allocate(binds, owner) => {
                    let owner = self.refer(owner);
                    LowDecl::Allocate(owner, self.new_resource(binds))
                }
                Item::Resource(name) => LowDecl::Resource(self.new_resource(name)),
                Item::Edge(a, b) => LowDecl::Edge(self.refer(a), self.refer(b)),
            });
        }

        let mut program = SomProgram::default();
        for d in decls {
            match d {
                LowDecl::Process(id, body) => {
                    let name = self.names[&EntityId::from(id)].clone();
                    let body = self.resolve_body(&body)?;
                    program.processes.push(ProcessDecl { name, id, body });
                }
                LowDecl::Allocate(owner, binds) => {
                    let owner = self.resolve(&owner)?;
                    program.initial_decls.push(Decl::Allocate { owner, binds });
                }
                LowDecl::Resource(r) => program.initial_decls.push(Decl::Resource(r)),
                LowDecl::Edge(a, b) => {
                    let owner = self.resolve(&a)?;
                    let owned = self.resolve(&b)?;
                    program.initial_decls.push(Decl::Edge(Edge { owner, owned }));
                }
            }
        }
        program.names = Arc::new(self.names);
        Ok(program)
    }

    fn body(&mut self, stmts: &[Stmt]) -> Vec<Low> {
        let mut out = Vec::new();
        for s in stmts {
            self.stmt(s, &mut out);
        }
        out
    }

    fn stmt(&mut self, s: &Stmt, out: &mut Vec<Low>) {
        let low = match s {
            Stmt::Read(x) => Low::Read(self.refer(x)),
            Stmt::Write(x) => Low::Write(self.refer(x)),
            Stmt::Pass(x, a, b) => Low::Pass(self.refer(x), self.refer(a), self.refer(b)),
            Stmt::Share(x, a) => Low::Share(self.refer(x), self.refer(a)),
            Stmt::Release(x, a) => Low::Release(self.refer(x), self.refer(a)),
            Stmt::Spawn(name, body) => {
                let p = self.new_process(name, false);
                Low::Spawn(p, self.body(body))
            }
            Stmt::Allocate(binds, owner) => {
                let owner = self.refer(owner);
                Low::Allocate(owner, self.new_resource(binds))
            }
            Stmt::Repeat(k, body) => {
                for _ in 0..*k {
                    for s in body {
                        self.stmt(s, out);
                    }
                }
                return;
            }
        };
        out.push(low);
    }

    fn resolve(&self, r: &Ref) -> Result<EntityId, ParseError> {
        let sites = self.bindings.get(&r.name.text).ok_or_else(|| ParseError::UndeclaredName {
            at: r.name.at,
            name: r.name.text.clone(),
        })?;
        let e = sites
            .iter()
            .rev()
            .find(|&&(order, _)| order < r.order)
            .or_else(|| sites.first())
            .map(|&(_, e)| e)
            .expect("bindings are never empty");
        Ok(e)
    }

    fn resolve_resource(&self, r: &Ref) -> Result<ResourceId, ParseError> {
        self.resolve(r)?.as_resource().ok_or_else(|| {
            ParseError::syntax(r.name.at, format!("`{}` is a process, expected a resource", r.name.text))
        })
    }

    fn resolve_body(&self, body: &[Low]) -> Result<Vec<Statement>, ParseError> {
        body.iter()
            .map(|l| {
                Ok(match l {
                    Low::Read(x) => Statement::Read(self.resolve_resource(x)?),
                    Low::Write(x) => Statement::Write(self.resolve_resource(x)?),
                    Low::Pass(x, a, b) => Statement::Pass {
                        resource: self.resolve_resource(x)?,
                        from: self.resolve(a)?,
                        to: self.resolve(b)?,
                    },
                    Low::Share(x, a) => Statement::Share { resource: self.resolve_resource(x)?, with: self.resolve(a)? },
                    Low::Release(x, a) => Statement::Release { resource: self.resolve_resource(x)?, by: self.resolve(a)? },
                    Low::Spawn(p, body) => Statement::Spawn { binds: *p, body: self.resolve_body(body)?.into() },
                    Low::Allocate(owner, r) => Statement::Allocate { owner: self.resolve(owner)?, binds: *r },
                })
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Exploration

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_states: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Self { max_states: DEFAULT_MAX_STATES }
    }
}

/// A state in which one process may write a resource while another may
/// read or write it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaceWitness {
    pub state: Configuration,
    pub writer: ProcessId,
    pub other: ProcessId,
    pub resource: ResourceId,
    /// Whether the second access is a write (otherwise a read).
    pub other_writes: bool,
}

/// A transition whose resulting graph is not an ownership graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LemmaFailure {
    pub state: Configuration,
    pub actor: ProcessId,
    pub statement: Statement,
    pub error: GraphError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplorationReport {
    pub states_visited: usize,
    pub transitions: usize,
    pub race_witnesses: Vec<RaceWitness>,
    pub lemma_failures: Vec<LemmaFailure>,
    pub deadlocked_states: Vec<Configuration>,
    /// False when the search stopped at the state limit.
    pub complete: bool,
    names: Arc<BTreeMap<EntityId, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExploreError {
    #[error("initial graph is not an ownership graph: {0}")]
    InvalidInitialGraph(#[from] GraphError),
    #[error("state limit exceeded after {} states", .0.states_visited)]
    LimitExceeded(Box<ExplorationReport>),
}

/// Pairs of head statements forming a data race in `c`.
pub fn races(c: &Configuration) -> Vec<RaceWitness> {
    let heads: Vec<_> = c.heads().collect();
    let mut out = Vec::new();
    for &(writer, s1) in &heads {
        let Statement::Write(rho) = *s1 else { continue };
        if !reducible(&c.graph, writer, s1) {
            continue;
        }
        for &(other, s2) in &heads {
            let other_writes = match *s2 {
                Statement::Write(r) if r == rho => true,
                Statement::Read(r) if r == rho => false,
                _ => continue,
            };
            if other != writer && reducible(&c.graph, other, s2) {
                out.push(RaceWitness { state: c.clone(), writer, other, resource: rho, other_writes });
            }
        }
    }
    out
}

pub fn explore(program: &SomProgram, limits: Limits) -> Result<ExplorationReport, ExploreError> {
    let initial = program.initial_configuration()?;
    let mut report = ExplorationReport {
        states_visited: 0,
        transitions: 0,
        race_witnesses: Vec::new(),
        lemma_failures: Vec::new(),
        deadlocked_states: Vec::new(),
        complete: true,
        names: program.names.clone(),
    };
    let mut visited: FxHashSet<Configuration> = FxHashSet::default();
    let mut stack = vec![initial.clone()];
    visited.insert(initial);

    while let Some(c) = stack.pop() {
        report.states_visited += 1;
        report.race_witnesses.extend(races(&c));
        let successors = c.enabled_steps();
        if successors.is_empty() && !c.is_terminal() {
            report.deadlocked_states.push(c.clone());
        }
        // Reverse so the lowest process id is explored first.
        for succ in successors.into_iter().rev() {
            report.transitions += 1;
            if let Err(error) = succ.next.graph.validate() {
                report.lemma_failures.push(LemmaFailure {
                    state: c.clone(),
                    actor: succ.actor,
                    statement: succ.statement,
                    error,
                });
                continue;
            }
            if visited.contains(&succ.next) {
                continue;
            }
            if visited.len() >= limits.max_states {
                report.complete = false;
                return Err(ExploreError::LimitExceeded(Box::new(report)));
            }
            visited.insert(succ.next.clone());
            stack.push(succ.next);
        }
    }
    Ok(report)
}

/// Reachable configurations in which some process still has statements
/// but no process can take a step.
pub fn check_deadlock(report: &ExplorationReport) -> &[Configuration] {
    &report.deadlocked_states
}

fn display_name(names: &BTreeMap<EntityId, String>, e: EntityId) -> String {
    names.get(&e).cloned().unwrap_or_else(|| e.to_string())
}

fn render_statement(names: &BTreeMap<EntityId, String>, s: &Statement) -> String {
    s.render(&|e| display_name(names, e))
}

fn render_configuration(names: &BTreeMap<EntityId, String>, c: &Configuration) -> String {
    let mut out = String::new();
    for (&p, k) in &c.processes {
        let rest: Vec<String> = k.remaining().iter().map(|s| render_statement(names, s)).collect();
        let rest = if rest.is_empty() { "done".to_string() } else { rest.join("; ") };
        out.push_str(&format!("{}: {}\n", display_name(names, p.into()), rest));
    }
    out.push_str(&c.graph.export_with(|e| display_name(names, e)));
    out
}

impl ExplorationReport {
    pub fn is_race_free(&self) -> bool {
        self.race_witnesses.is_empty()
    }

    /// No races and no invalid graphs.
    pub fn is_clean(&self) -> bool {
        self.race_witnesses.is_empty() && self.lemma_failures.is_empty()
    }

    fn name(&self, e: impl Into<EntityId>) -> String {
        display_name(&self.names, e.into())
    }

    fn blocked(&self, c: &Configuration) -> Vec<(String, String)> {
        c.heads().map(|(p, s)| (self.name(p), render_statement(&self.names, s))).collect()
    }

    fn edges(&self, c: &Configuration) -> Vec<String> {
        c.graph.export_with(|e| self.name(e)).lines().map(str::to_owned).collect()
    }

    pub fn to_json(&self) -> Value {
        let witnesses: Vec<Value> = self
            .race_witnesses
            .iter()
            .map(|w| {
                json!({
                    "writer": self.name(w.writer),
                    "other": self.name(w.other),
                    "resource": self.name(w.resource),
                    "other_access": if w.other_writes { "write" } else { "read" },
                    "graph": self.edges(&w.state),
                })
            })
            .collect();
        let failures: Vec<Value> = self
            .lemma_failures
            .iter()
            .map(|f| {
                json!({
                    "actor": self.name(f.actor),
                    "statement": render_statement(&self.names, &f.statement),
                    "error": f.error.to_string(),
                    "graph": self.edges(&f.state),
                })
            })
            .collect();
        let deadlocks: Vec<Value> = self
            .deadlocked_states
            .iter()
            .map(|c| {
                let blocked: serde_json::Map<String, Value> =
                    self.blocked(c).into_iter().map(|(p, s)| (p, Value::String(s))).collect();
                json!({ "blocked": blocked, "graph": self.edges(c) })
            })
            .collect();
        json!({
            "states": self.states_visited,
            "witnesses": witnesses,
            "lemma_failures": failures,
            "deadlocks": deadlocks,
        })
    }
}

fn indent(text: &str, by: &str) -> String {
    text.lines().map(|l| format!("{by}{l}\n")).collect()
}

impl fmt::Display for ExplorationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "states: {}", self.states_visited)?;
        writeln!(f, "transitions: {}", self.transitions)?;
        if !self.complete {
            writeln!(f, "incomplete: state limit reached")?;
        }
        writeln!(f, "race witnesses: {}", self.race_witnesses.len())?;
        for w in &self.race_witnesses {
            let access = if w.other_writes { "write" } else { "read" };
            writeln!(
                f,
                "  {} writes {} while {} may {access} it",
                self.name(w.writer),
                self.name(w.resource),
                self.name(w.other)
            )?;
            f.write_str(&indent(&render_configuration(&self.names, &w.state), "    "))?;
        }
        writeln!(f, "lemma failures: {}", self.lemma_failures.len())?;
        for l in &self.lemma_failures {
            writeln!(f, "  {}: {} -> {}", self.name(l.actor), render_statement(&self.names, &l.statement), l.error)?;
            f.write_str(&indent(&render_configuration(&self.names, &l.state), "    "))?;
        }
        writeln!(f, "deadlocks: {}", self.deadlocked_states.len())?;
        for c in &self.deadlocked_states {
            writeln!(f, "  blocked:")?;
            f.write_str(&indent(&render_configuration(&self.names, c), "    "))?;
        }
        Ok(())
    }
}
