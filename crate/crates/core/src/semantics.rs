//! Statements and the small-step transition relation over ownership graphs.
//!
//! [`premise`] decides whether a statement may fire for a given actor; the
//! same function serves the explorer (a false premise blocks) and the
//! checker (a false premise is an assertion failure).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::graph::{Edge, EntityId, GraphError, OwnershipGraph, ProcessId, ResourceId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Statement {
    Read(ResourceId),
    Write(ResourceId),
    /// Move the edge `from -> resource` to `to -> resource`.
    Pass { resource: ResourceId, from: EntityId, to: EntityId },
    /// Add the edge `with -> resource`.
    Share { resource: ResourceId, with: EntityId },
    /// Drop the edge `by -> resource`.
    Release { resource: ResourceId, by: EntityId },
    Spawn { binds: ProcessId, body: Arc<[Statement]> },
    Allocate { owner: EntityId, binds: ResourceId },
}

impl Statement {
    pub fn spawn(binds: ProcessId) -> Self {
        Statement::Spawn { binds, body: Arc::from(Vec::new()) }
    }

    pub fn op_name(&self) -> &'static str {
        match self {
            Statement::Read(_) => "read",
            Statement::Write(_) => "write",
            Statement::Pass { .. } => "pass",
            Statement::Share { .. } => "share",
            Statement::Release { .. } => "release",
            Statement::Spawn { .. } => "spawn",
            Statement::Allocate { .. } => "allocate",
        }
    }

    /// True for statements that change the graph.
    pub fn is_mutation(&self) -> bool {
        !matches!(self, Statement::Read(_) | Statement::Write(_))
    }

    /// Renders in the calculus syntax using caller-chosen entity names.
    pub fn render(&self, name: &dyn Fn(EntityId) -> String) -> String {
        match self {
            Statement::Read(r) => format!("{}.read", name((*r).into())),
            Statement::Write(r) => format!("{}.write", name((*r).into())),
            Statement::Pass { resource, from, to } => {
                format!("{}.pass({}, {})", name((*resource).into()), name(*from), name(*to))
            }
            Statement::Share { resource, with } => {
                format!("{}.share({})", name((*resource).into()), name(*with))
            }
            Statement::Release { resource, by } => {
                format!("{}.release({})", name((*resource).into()), name(*by))
            }
            Statement::Spawn { binds, body } => {
                let inner: Vec<String> = body.iter().map(|s| s.render(name)).collect();
                if inner.is_empty() {
                    format!("{} := spawn {{}}", name((*binds).into()))
                } else {
                    format!("{} := spawn {{ {} }}", name((*binds).into()), inner.join("; "))
                }
            }
            Statement::Allocate { owner, binds } => {
                format!("{} := {}.allocate", name((*binds).into()), name(*owner))
            }
        }
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&|e| e.to_string()))
    }
}

/// Which conjunct of a rule premise failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ViolationKind {
    /// The actor is not a root of the operand (`π ∈ root(ρ)` failed).
    NotRoot,
    /// The actor is not the only root of the operand (`{π} = root(e)` failed).
    NotSoleRoot,
    /// The edge the statement removes or moves is absent.
    NoSuchEdge,
    /// The new edge would close a cycle.
    CycleWouldForm,
    /// Release would leave the resource without an owner.
    LastOwnerRelease,
    /// Spawn or allocate names an entity already in the graph.
    NotFresh,
    /// An operand or the actor is not in the graph.
    UnknownEntity,
}

impl ViolationKind {
    pub const ALL: [ViolationKind; 7] = [
        ViolationKind::NotRoot,
        ViolationKind::NotSoleRoot,
        ViolationKind::NoSuchEdge,
        ViolationKind::CycleWouldForm,
        ViolationKind::LastOwnerRelease,
        ViolationKind::NotFresh,
        ViolationKind::UnknownEntity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::NotRoot => "NotRoot",
            ViolationKind::NotSoleRoot => "NotSoleRoot",
            ViolationKind::NoSuchEdge => "NoSuchEdge",
            ViolationKind::CycleWouldForm => "CycleWouldForm",
            ViolationKind::LastOwnerRelease => "LastOwnerRelease",
            ViolationKind::NotFresh => "NotFresh",
            ViolationKind::UnknownEntity => "UnknownEntity",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<GraphError> for ViolationKind {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::NoSuchEdge(_) => ViolationKind::NoSuchEdge,
            GraphError::CycleDetected(_) | GraphError::Cyclic(_) => ViolationKind::CycleWouldForm,
            _ => ViolationKind::UnknownEntity,
        }
    }
}

/// `Ok(())` when the rule for the statement fires.
pub type PremiseResult = Result<(), ViolationKind>;

/// Knobs on the rule set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rules {
    /// Release requires the actor to be the *sole* root of the releasing
    /// owner. When false, being any root suffices.
    pub release_requires_sole_root: bool,
}

impl Default for Rules {
    fn default() -> Self {
        Self { release_requires_sole_root: true }
    }
}

fn known(g: &OwnershipGraph, e: impl Into<EntityId>) -> PremiseResult {
    if g.contains(e) {
        Ok(())
    } else {
        Err(ViolationKind::UnknownEntity)
    }
}

/// Evaluates the premise of the rule matching `s` with the default rules.
///
/// When several conjuncts fail, the reported kind follows the precedence
/// `UnknownEntity > NoSuchEdge > NotRoot/NotSoleRoot > LastOwnerRelease >
/// CycleWouldForm`.
pub fn premise(g: &OwnershipGraph, actor: ProcessId, s: &Statement) -> PremiseResult {
    premise_with(g, actor, s, Rules::default())
}

pub fn premise_with(g: &OwnershipGraph, actor: ProcessId, s: &Statement, rules: Rules) -> PremiseResult {
    known(g, actor)?;
    match *s {
        Statement::Read(r) => {
            if g.access(actor, r)?.can_read() {
                Ok(())
            } else {
                Err(ViolationKind::NotRoot)
            }
        }
        Statement::Write(r) => {
            if g.access(actor, r)?.can_write() {
                Ok(())
            } else {
                Err(ViolationKind::NotSoleRoot)
            }
        }
        Statement::Pass { resource, from, to } => {
            if !g.has_edge(from, resource) {
                known(g, resource)?;
                known(g, from)?;
                known(g, to)?;
                return Err(ViolationKind::NoSuchEdge);
            }
            known(g, from)?;
            known(g, to)?;
            if !g.access(actor, resource)?.can_write() {
                return Err(ViolationKind::NotSoleRoot);
            }
            // Removing `from -> resource` cannot break a path out of
            // `resource`, so the candidate is cyclic iff `to` lies below it.
            if g.reaches(resource.into(), to) {
                return Err(ViolationKind::CycleWouldForm);
            }
            Ok(())
        }
        Statement::Share { resource, with } => {
            known(g, resource)?;
            known(g, with)?;
            if !g.access(actor, resource)?.can_read() {
                return Err(ViolationKind::NotRoot);
            }
            if g.reaches(resource.into(), with) {
                return Err(ViolationKind::CycleWouldForm);
            }
            Ok(())
        }
        Statement::Release { resource, by } => {
            known(g, resource)?;
            known(g, by)?;
            if !g.has_edge(by, resource) {
                return Err(ViolationKind::NoSuchEdge);
            }
            let access = g.access(actor, by)?;
            if rules.release_requires_sole_root {
                if !access.can_write() {
                    return Err(ViolationKind::NotSoleRoot);
                }
            } else if !access.can_read() {
                return Err(ViolationKind::NotRoot);
            }
            if g.owners(resource).map_or(0, |o| o.len()) < 2 {
                return Err(ViolationKind::LastOwnerRelease);
            }
            Ok(())
        }
        Statement::Spawn { binds, .. } => {
            if g.fresh(binds) {
                Ok(())
            } else {
                Err(ViolationKind::NotFresh)
            }
        }
        Statement::Allocate { owner, binds } => {
            known(g, owner)?;
            if g.fresh(binds) {
                Ok(())
            } else {
                Err(ViolationKind::NotFresh)
            }
        }
    }
}

/// True when `actor` can take the step `s` in `g`.
pub fn reducible(g: &OwnershipGraph, actor: ProcessId, s: &Statement) -> bool {
    premise(g, actor, s).is_ok()
}

/// Applies the graph effect of `s`, assuming its premise holds.
fn effect(g: &mut OwnershipGraph, s: &Statement) {
    match *s {
        Statement::Read(_) | Statement::Write(_) => {}
        Statement::Pass { resource, from, to } => {
            g.move_edge(resource, from, to).expect("premise checked the edge");
        }
        Statement::Share { resource, with } => {
            g.insert_edge_unchecked(Edge::new(with, resource));
        }
        Statement::Release { resource, by } => {
            g.remove_edge(by, resource).expect("premise checked the edge");
        }
        Statement::Spawn { binds, .. } => {
            g.insert_entity(binds);
        }
        Statement::Allocate { owner, binds } => {
            g.insert_edge_unchecked(Edge::new(owner, binds));
        }
    }
}

/// Checks the premise and, if it holds, performs the transition in place.
pub fn step(g: &mut OwnershipGraph, actor: ProcessId, s: &Statement) -> PremiseResult {
    step_with(g, actor, s, Rules::default())
}

pub fn step_with(g: &mut OwnershipGraph, actor: ProcessId, s: &Statement, rules: Rules) -> PremiseResult {
    premise_with(g, actor, s, rules)?;
    effect(g, s);
    Ok(())
}

/// The successor graph of an enabled statement.
pub fn apply(g: &OwnershipGraph, actor: ProcessId, s: &Statement) -> Result<OwnershipGraph, ViolationKind> {
    let mut next = g.clone();
    step(&mut next, actor, s)?;
    Ok(next)
}

/// Performs the graph effect of `s` regardless of who issues it, but only if
/// the edge it touches exists and the result is still an ownership graph.
/// Returns whether the graph changed.
///
/// `g` must be a valid ownership graph; the validity test is local to the
/// touched edge and relies on that.
pub fn force(g: &mut OwnershipGraph, s: &Statement) -> bool {
    let ok = match *s {
        Statement::Read(_) | Statement::Write(_) => false,
        Statement::Pass { resource, from, to } => {
            g.has_edge(from, resource) && g.contains(to) && !g.reaches(resource.into(), to)
        }
        Statement::Share { resource, with } => {
            g.contains(resource) && g.contains(with) && !g.reaches(resource.into(), with)
        }
        Statement::Release { resource, by } => {
            g.has_edge(by, resource) && g.owners(resource).map_or(0, |o| o.len()) >= 2
        }
        Statement::Spawn { binds, .. } => g.fresh(binds),
        Statement::Allocate { owner, binds } => g.contains(owner) && g.fresh(binds),
    };
    if ok {
        effect(g, s);
    }
    ok
}

/// The remaining program of one process: a shared body and a position in it.
#[derive(Debug, Clone)]
pub struct Continuation {
    body: Arc<[Statement]>,
    pc: usize,
}

impl Continuation {
    pub fn new(body: impl Into<Arc<[Statement]>>) -> Self {
        Self { body: body.into(), pc: 0 }
    }

    pub fn remaining(&self) -> &[Statement] {
        &self.body[self.pc..]
    }

    pub fn head(&self) -> Option<&Statement> {
        self.body.get(self.pc)
    }

    pub fn is_done(&self) -> bool {
        self.pc >= self.body.len()
    }

    fn advanced(&self) -> Self {
        Self { body: self.body.clone(), pc: self.pc + 1 }
    }
}

impl PartialEq for Continuation {
    fn eq(&self, other: &Self) -> bool {
        self.remaining() == other.remaining()
    }
}

impl Eq for Continuation {}

impl std::hash::Hash for Continuation {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.remaining().hash(state);
    }
}

/// Processes with their remaining programs, paired with a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub processes: BTreeMap<ProcessId, Continuation>,
    pub graph: OwnershipGraph,
}

/// One enabled transition out of a configuration.
#[derive(Debug, Clone)]
pub struct Successor {
    pub actor: ProcessId,
    pub statement: Statement,
    pub next: Configuration,
}

impl Configuration {
    /// Every process must already be an entity of `graph`.
    pub fn new(graph: OwnershipGraph, processes: BTreeMap<ProcessId, Continuation>) -> Self {
        debug_assert!(processes.keys().all(|&p| graph.contains(p)));
        Self { processes, graph }
    }

    /// True when every process has run to completion.
    pub fn is_terminal(&self) -> bool {
        self.processes.values().all(Continuation::is_done)
    }

    /// Head statements of all unfinished processes, in process order.
    pub fn heads(&self) -> impl Iterator<Item = (ProcessId, &Statement)> {
        self.processes.iter().filter_map(|(&p, k)| k.head().map(|s| (p, s)))
    }

    /// All interleaving successors, ordered by process id. A process whose
    /// head statement is not enabled contributes nothing.
    pub fn enabled_steps(&self) -> Vec<Successor> {
        let mut out = Vec::new();
        for (actor, s) in self.heads() {
            let Ok(graph) = apply(&self.graph, actor, s) else {
                continue;
            };
            let mut processes = self.processes.clone();
            processes.insert(actor, self.processes[&actor].advanced());
            if let Statement::Spawn { binds, body } = s {
                processes.insert(*binds, Continuation::new(body.clone()));
            }
            out.push(Successor {
                actor,
                statement: s.clone(),
                next: Configuration { processes, graph },
            });
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::*;

    const PI1: ProcessId = ProcessId(1);
    const PI2: ProcessId = ProcessId(2);

    fn rid(i: u64) -> ResourceId {
        ResourceId(i)
    }

    #[test]
    fn write_on_shared_resource_is_not_sole_root() {
        assert_eq!(premise(&simple(), PI1, &Statement::Write(rid(4))), Err(ViolationKind::NotSoleRoot));
        assert_eq!(premise(&simple(), PI1, &Statement::Read(rid(4))), Ok(()));
        assert_eq!(premise(&simple(), PI2, &Statement::Read(rid(3))), Err(ViolationKind::NotRoot));
    }

    #[test]
    fn pass_example() {
        let s = Statement::Pass { resource: rid(2), from: P1, to: P2 };
        assert_eq!(premise(&pass_before(), PI1, &s), Ok(()));
        assert_eq!(apply(&pass_before(), PI1, &s).unwrap(), pass_after());
    }

    #[test]
    fn share_example() {
        let s = Statement::Share { resource: rid(1), with: r(2) };
        assert_eq!(premise(&share_before(), PI1, &s), Ok(()));
        let mut expected = share_before();
        expected.add_edge(r(2), r(1)).unwrap();
        assert_eq!(apply(&share_before(), PI1, &s).unwrap(), expected);
    }

    #[test]
    fn share_that_closes_a_loop() {
        let p = ProcessId(0);
        let g = build(&[p.into(), r(1), r(2)], &[(p.into(), r(1)), (p.into(), r(2)), (r(1), r(2))]);
        let s = Statement::Share { resource: rid(1), with: r(2) };
        assert_eq!(premise(&g, p, &s), Err(ViolationKind::CycleWouldForm));
        let self_loop = Statement::Share { resource: rid(1), with: r(1) };
        assert_eq!(premise(&g, p, &self_loop), Err(ViolationKind::CycleWouldForm));
    }

    #[test]
    fn pass_that_closes_a_loop() {
        let p = ProcessId(0);
        let g = build(&[p.into(), r(1), r(2)], &[(p.into(), r(1)), (r(1), r(2))]);
        let s = Statement::Pass { resource: rid(1), from: p.into(), to: r(2) };
        assert_eq!(premise(&g, p, &s), Err(ViolationKind::CycleWouldForm));
    }

    #[test]
    fn release_of_last_owner() {
        let p = ProcessId(0);
        let g = build(&[p.into(), r(1)], &[(p.into(), r(1))]);
        let s = Statement::Release { resource: rid(1), by: p.into() };
        assert_eq!(premise(&g, p, &s), Err(ViolationKind::LastOwnerRelease));
    }

    #[test]
    fn release_rule_variants() {
        // ρ4 is owned by ρ1 and ρ2; π1 only shares ρ4 but solely roots ρ1.
        let s = Statement::Release { resource: rid(4), by: r(1) };
        assert_eq!(premise(&simple(), PI1, &s), Ok(()));
        let after = apply(&simple(), PI1, &s).unwrap();
        assert_eq!(after.root_of(r(4)).unwrap().into_iter().collect::<Vec<_>>(), vec![PI2]);

        // Releasing through an owner the actor only shares.
        let mut g = simple();
        g.insert_entity(r(5));
        g.add_edge(r(4), r(5)).unwrap();
        g.add_edge(r(3), r(5)).unwrap();
        let s = Statement::Release { resource: rid(5), by: r(4) };
        assert_eq!(premise(&g, PI1, &s), Err(ViolationKind::NotSoleRoot));
        let relaxed = Rules { release_requires_sole_root: false };
        assert_eq!(premise_with(&g, PI1, &s, relaxed), Ok(()));
        assert_eq!(premise_with(&g, ProcessId(9), &s, relaxed), Err(ViolationKind::UnknownEntity));
    }

    #[test]
    fn unknown_and_no_such_edge() {
        let g = simple();
        let s = Statement::Pass { resource: rid(9), from: P1, to: P2 };
        assert_eq!(premise(&g, PI1, &s), Err(ViolationKind::UnknownEntity));
        let s = Statement::Pass { resource: rid(3), from: P1, to: P2 };
        assert_eq!(premise(&g, PI1, &s), Err(ViolationKind::NoSuchEdge));
        // NoSuchEdge outranks the root check.
        assert_eq!(premise(&g, PI2, &s), Err(ViolationKind::NoSuchEdge));
        assert_eq!(premise(&g, ProcessId(7), &Statement::Read(rid(1))), Err(ViolationKind::UnknownEntity));
    }

    #[test]
    fn freshness_premises() {
        let g = simple();
        assert_eq!(premise(&g, PI1, &Statement::spawn(PI2)), Err(ViolationKind::NotFresh));
        assert_eq!(premise(&g, PI1, &Statement::spawn(ProcessId(3))), Ok(()));
        let alloc = Statement::Allocate { owner: P1, binds: rid(1) };
        assert_eq!(premise(&g, PI1, &alloc), Err(ViolationKind::NotFresh));
        let alloc = Statement::Allocate { owner: r(9), binds: rid(10) };
        assert_eq!(premise(&g, PI1, &alloc), Err(ViolationKind::UnknownEntity));
    }

    #[test]
    fn read_does_not_mutate() {
        assert_eq!(apply(&simple(), PI1, &Statement::Read(rid(3))).unwrap(), simple());
    }

    #[test]
    fn force_only_when_valid() {
        let mut g = simple();
        // π2 may not pass ρ1, but the move itself keeps the graph valid.
        assert!(force(&mut g, &Statement::Pass { resource: rid(1), from: P1, to: P2 }));
        assert!(g.has_edge(P2, r(1)));
        assert!(!force(&mut g, &Statement::Release { resource: rid(3), by: r(1) }));
        assert!(!force(&mut g, &Statement::Share { resource: rid(1), with: r(3) }));
        assert!(g.validate().is_ok());
    }

    #[test]
    fn enabled_steps_interleave() {
        let p = ProcessId(0);
        let mut g = build(&[p.into(), P1, P2, r(1)], &[(P1, r(1)), (P2, r(1))]);
        g.insert_entity(r(2));
        g.add_edge(p, r(2)).unwrap();
        let mut procs = BTreeMap::new();
        procs.insert(PI1, Continuation::new(vec![Statement::Read(rid(1))]));
        procs.insert(PI2, Continuation::new(vec![Statement::Read(rid(1))]));
        let c = Configuration::new(g.clone(), procs);
        let steps = c.enabled_steps();
        assert_eq!(steps.len(), 2);
        assert_eq!(steps[0].actor, PI1);
        assert_eq!(steps[1].actor, PI2);

        let mut procs = BTreeMap::new();
        procs.insert(PI1, Continuation::new(vec![Statement::Write(rid(1))]));
        let blocked = Configuration::new(g.clone(), procs);
        assert!(blocked.enabled_steps().is_empty());
        assert!(!blocked.is_terminal());

        let mut procs = BTreeMap::new();
        procs.insert(p, Continuation::new(Vec::new()));
        let done = Configuration::new(g, procs);
        assert!(done.enabled_steps().is_empty());
        assert!(done.is_terminal());
    }

    #[test]
    fn spawn_adds_child_program() {
        let p = ProcessId(0);
        let g = build(&[p.into()], &[]);
        let child = ProcessId(5);
        let body: Arc<[Statement]> = Arc::from(vec![Statement::Allocate { owner: child.into(), binds: rid(6) }]);
        let mut procs = BTreeMap::new();
        procs.insert(p, Continuation::new(vec![Statement::Spawn { binds: child, body }]));
        let c = Configuration::new(g, procs);
        let next = &c.enabled_steps()[0].next;
        assert!(next.processes[&p].is_done());
        assert_eq!(next.processes[&child].remaining().len(), 1);
        let after = &next.enabled_steps()[0].next;
        assert!(after.graph.has_edge(child, rid(6)));
        assert!(after.graph.validate().is_ok());
    }

    #[test]
    fn rendering() {
        let s = Statement::Pass { resource: rid(2), from: P1, to: P2 };
        assert_eq!(s.to_string(), "r2.pass(p1, p2)");
        assert_eq!(Statement::Allocate { owner: P1, binds: rid(3) }.to_string(), "r3 := p1.allocate");
        assert_eq!(Statement::spawn(ProcessId(4)).to_string(), "p4 := spawn {}");
    }
}
