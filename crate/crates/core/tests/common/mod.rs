//! Oracles shared by the integration tests and the acceptance runner. They
//! work on bitmask adjacency matrices and never call into the graph module's
//! traversal code.

#![allow(dead_code)]

pub mod programs;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use som::semantics::{force, premise, step};
use som::{Edge, EntityId, GraphError, OwnershipGraph, ProcessId, ResourceId, Statement, ViolationKind};

/// A small digraph: `adj[i]` has bit `j` set for the edge `i -> j`.
#[derive(Clone, Debug)]
pub struct Small {
    pub ids: Vec<EntityId>,
    pub adj: Vec<u32>,
}

impl Small {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn graph(&self) -> OwnershipGraph {
        let mut edges = Vec::new();
        for i in 0..self.n() {
            for j in 0..self.n() {
                if self.adj[i] >> j & 1 == 1 {
                    edges.push(Edge { owner: self.ids[i], owned: self.ids[j] });
                }
            }
        }
        OwnershipGraph::from_parts_unchecked(self.ids.iter().copied(), edges)
    }

    /// `reach[i]` has bit `j` set when a nonempty path leads from `i` to `j`
    /// (Warshall's transitive closure).
    pub fn reach(&self) -> Vec<u32> {
        let mut reach = self.adj.clone();
        for k in 0..self.n() {
            for i in 0..self.n() {
                if reach[i] >> k & 1 == 1 {
                    reach[i] |= reach[k];
                }
            }
        }
        reach
    }

    pub fn has_cycle(&self) -> bool {
        on_cycle(&self.reach()).is_some()
    }

    /// What `validate` must report: per entity in (kind, id) order, an owned
    /// process or an unowned resource; then a cycle.
    pub fn expected(&self, reach: &[u32]) -> Expected {
        let mut order: Vec<usize> = (0..self.n()).collect();
        order.sort_by_key(|&i| self.ids[i]);
        for &j in &order {
            let owner = order.iter().copied().find(|&i| self.adj[i] >> j & 1 == 1);
            match owner {
                Some(i) if self.ids[j].is_process() => {
                    return Expected::Err(GraphError::ProcessHasOwner(Edge { owner: self.ids[i], owned: self.ids[j] }));
                }
                None if self.ids[j].is_resource() => return Expected::Err(GraphError::UnownedResource(self.ids[j])),
                _ => {}
            }
        }
        if on_cycle(reach).is_some() {
            Expected::Cyclic
        } else {
            Expected::Valid
        }
    }

    /// Processes from which `j` is reachable, including `j` itself when it
    /// is a process.
    pub fn roots(&self, reach: &[u32], j: usize) -> Vec<ProcessId> {
        let mut out: Vec<ProcessId> = (0..self.n())
            .filter(|&i| self.ids[i].is_process() && (i == j || reach[i] >> j & 1 == 1))
            .map(|i| ProcessId(self.ids[i].id()))
            .collect();
        out.sort();
        out
    }
}

fn on_cycle(reach: &[u32]) -> Option<usize> {
    (0..reach.len()).find(|&i| reach[i] >> i & 1 == 1)
}

#[derive(Debug, PartialEq)]
pub enum Expected {
    Valid,
    Cyclic,
    Err(GraphError),
}

/// Entity ids for a kind assignment: bit `i` of `kinds` marks a process.
pub fn ids_for(n: usize, kinds: u32) -> Vec<EntityId> {
    (0..n as u64)
        .map(|i| if kinds >> i & 1 == 1 { EntityId::process(i) } else { EntityId::resource(i) })
        .collect()
}

/// Compares `validate`, `is_acyclic` and, on valid graphs, `root_of` with
/// the oracle on one graph.
pub fn agree(s: &Small, g: &OwnershipGraph) -> Result<(), String> {
    let reach = s.reach();
    let got = g.validate();
    let want = s.expected(&reach);
    let ok = match (&want, &got) {
        (Expected::Valid, Ok(())) => true,
        (Expected::Err(e), Err(f)) => e == f,
        (Expected::Cyclic, Err(GraphError::Cyclic(node))) => {
            // The reported node must lie on a cycle.
            let i = s.ids.iter().position(|x| x == node).expect("node of the graph");
            reach[i] >> i & 1 == 1
        }
        _ => false,
    };
    if !ok {
        return Err(format!("validate disagrees on {s:?}: want {want:?}, got {got:?}"));
    }
    if g.is_acyclic() != on_cycle(&reach).is_none() {
        return Err(format!("is_acyclic disagrees on {s:?}"));
    }
    if want == Expected::Valid {
        for j in 0..s.n() {
            let roots: Vec<ProcessId> = g
                .root_of(s.ids[j])
                .map_err(|e| format!("root_of failed on valid graph {s:?}: {e}"))?
                .into_iter()
                .collect();
            if roots != s.roots(&reach, j) || roots.is_empty() {
                return Err(format!("root_of({}) = {roots:?} on {s:?}", s.ids[j]));
            }
        }
    }
    Ok(())
}

/// Every digraph over at most `n` entities, with self-loops, under every
/// kind assignment. Returns the number of graphs checked.
pub fn enumerate_with_loops(n: usize) -> Result<u64, String> {
    let mut count = 0;
    for size in 0..=n {
        let slots: Vec<(usize, usize)> = (0..size).flat_map(|i| (0..size).map(move |j| (i, j))).collect();
        for kinds in 0..1u32 << size {
            count += gray_walk(ids_for(size, kinds), &slots)?;
        }
    }
    Ok(count)
}

/// Every loop-free digraph over exactly `n` entities, one kind assignment
/// per process count (processes first; other assignments are relabelings).
pub fn enumerate_loop_free(n: usize) -> Result<u64, String> {
    let slots: Vec<(usize, usize)> =
        (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let mut count = 0;
    for processes in 0..=n {
        count += gray_walk(ids_for(n, (1u32 << processes) - 1), &slots)?;
    }
    Ok(count)
}

/// Checks every subset of the edge `slots` over `ids`. Consecutive subsets
/// differ in one edge (a Gray code), so one graph is mutated in place.
fn gray_walk(ids: Vec<EntityId>, slots: &[(usize, usize)]) -> Result<u64, String> {
    let mut s = Small { ids: ids.clone(), adj: vec![0; ids.len()] };
    let mut g = s.graph();
    agree(&s, &g)?;
    for step in 1u64..1 << slots.len() {
        let (i, j) = slots[step.trailing_zeros() as usize];
        s.adj[i] ^= 1 << j;
        if s.adj[i] >> j & 1 == 1 {
            g.insert_edge_unchecked(Edge { owner: ids[i], owned: ids[j] });
        } else {
            g.remove_edge(ids[i], ids[j]).map_err(|e| e.to_string())?;
        }
        agree(&s, &g)?;
    }
    Ok(1 << slots.len())
}

/// A valid graph built from raw choices: `processes` processes, then one
/// resource per entry of `owners`, owned by the earlier entities selected in
/// the mask (the first earlier entity when the mask selects none).
pub fn valid_graph(processes: usize, owners: &[u32]) -> OwnershipGraph {
    let processes = processes.max(1);
    let mut ids: Vec<EntityId> = (0..processes as u64).map(EntityId::process).collect();
    let mut edges = Vec::new();
    for (k, &mask) in owners.iter().enumerate() {
        let r = EntityId::resource(k as u64);
        let earlier = ids.len();
        let mut any = false;
        for (i, &o) in ids.iter().enumerate().take(earlier) {
            if mask >> i & 1 == 1 {
                edges.push(Edge { owner: o, owned: r });
                any = true;
            }
        }
        if !any {
            edges.push(Edge { owner: ids[k % earlier], owned: r });
        }
        ids.push(r);
    }
    OwnershipGraph::from_parts_unchecked(ids, edges)
}

/// Every statement over the entities of `g`, plus one fresh process and one
/// fresh resource.
pub fn statements(g: &OwnershipGraph) -> Vec<Statement> {
    let entities = g.entities();
    let resources: Vec<ResourceId> = entities.iter().filter_map(|e| e.as_resource()).collect();
    let fresh_p = ProcessId(1000);
    let fresh_r = ResourceId(1000);
    let mut out = Vec::new();
    for &r in &resources {
        out.push(Statement::Read(r));
        out.push(Statement::Write(r));
        for &a in &entities {
            out.push(Statement::Share { resource: r, with: a });
            out.push(Statement::Release { resource: r, by: a });
            for &b in &entities {
                out.push(Statement::Pass { resource: r, from: a, to: b });
            }
        }
    }
    for &a in &entities {
        out.push(Statement::Allocate { owner: a, binds: fresh_r });
    }
    out.push(Statement::spawn(fresh_p));
    out
}

pub fn processes_of(g: &OwnershipGraph) -> Vec<ProcessId> {
    g.entities().into_iter().filter_map(|e| e.as_process()).collect()
}

/// Applies `s` as `actor` when enabled; returns a message when the
/// successor is not an ownership graph.
pub fn lemma_holds(g: &OwnershipGraph, actor: ProcessId, s: &Statement) -> Result<bool, String> {
    let mut next = g.clone();
    match step(&mut next, actor, s) {
        Ok(()) => next
            .validate()
            .map(|()| true)
            .map_err(|e| format!("{s} by {actor} on\n{g}\nbroke the graph: {e}")),
        Err(_) => Ok(false),
    }
}

/// Random trials of (valid graph of at most `max_nodes` entities, actor,
/// statement). Returns the number of enabled trials.
pub fn random_lemma_trials(trials: usize, max_nodes: usize, seed: u64) -> Result<usize, String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut enabled = 0;
    for _ in 0..trials {
        let processes = rng.random_range(1..=3.min(max_nodes));
        let resources = rng.random_range(0..=max_nodes - processes);
        let owners: Vec<u32> = (0..resources).map(|_| rng.random()).collect();
        let g = valid_graph(processes, &owners);
        g.validate().map_err(|e| format!("generator produced an invalid graph: {e}"))?;
        let all = statements(&g);
        let s = &all[rng.random_range(0..all.len())];
        let ps = processes_of(&g);
        let actor = ps[rng.random_range(0..ps.len())];
        if lemma_holds(&g, actor, s)? {
            enabled += 1;
        }
    }
    Ok(enabled)
}

/// The successor of a mutation built naively: take the edge change at face
/// value and run the whole-graph validity check.
pub fn candidate(g: &OwnershipGraph, s: &Statement) -> Option<OwnershipGraph> {
    let mut c = g.clone();
    match *s {
        Statement::Pass { resource, from, to } => {
            if !g.has_edge(from, resource) || !g.contains(to) {
                return None;
            }
            c.remove_edge(from, resource).ok()?;
            c.add_edge(to, resource).ok()?;
        }
        Statement::Share { resource, with } => {
            if !g.contains(resource) {
                return None;
            }
            c.add_edge(with, resource).ok()?;
        }
        Statement::Release { resource, by } => {
            c.remove_edge(by, resource).ok()?;
        }
        _ => return None,
    }
    c.validate().ok().map(|()| c)
}

/// Checks the local cycle test of `premise` and `force` against
/// [`candidate`] for every mutation on `g`.
pub fn local_checks_agree(g: &OwnershipGraph) -> Result<(), String> {
    for s in statements(g) {
        if !matches!(s, Statement::Pass { .. } | Statement::Share { .. } | Statement::Release { .. }) {
            continue;
        }
        let cand = candidate(g, &s);
        let mut forced = g.clone();
        let changed = force(&mut forced, &s);
        if changed != cand.is_some() {
            return Err(format!("force({s}) = {changed} on\n{g}"));
        }
        if let Some(c) = &cand {
            if c != &forced {
                return Err(format!("force({s}) built a different graph on\n{g}"));
            }
        }
        for actor in processes_of(g) {
            let p = premise(g, actor, &s);
            if p == Err(ViolationKind::CycleWouldForm) && cand.is_some() {
                return Err(format!("{s} by {actor} reported a cycle the candidate does not have"));
            }
            if p.is_ok() && cand.is_none() {
                return Err(format!("{s} by {actor} enabled but the candidate is invalid"));
            }
        }
    }
    Ok(())
}

pub const PIPELINE_TRACE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/testdata/pipeline.somtrace");

/// The rows of the pipeline execution table as (actor, op, item, from, to),
/// with the second item written `rho_i1`.
pub const PIPELINE_ROWS: [(&str, &str, &str, &str, &str); 16] = [
    ("c_km1", "pass", "rho_i", "c_km1", "pi_k"),
    ("pi_k", "read", "rho_i", "", ""),
    ("pi_k", "write", "rho_i", "", ""),
    ("pi_k", "pass", "rho_i", "pi_k", "c_k"),
    ("c_k", "pass", "rho_i", "c_k", "pi_k1"),
    ("c_km1", "pass", "rho_i1", "c_km1", "pi_k"),
    ("pi_k", "read", "rho_i1", "", ""),
    ("pi_k1", "read", "rho_i", "", ""),
    ("pi_k", "write", "rho_i1", "", ""),
    ("pi_k1", "write", "rho_i", "", ""),
    ("pi_k1", "pass", "rho_i", "pi_k1", "c_k1"),
    ("pi_k", "pass", "rho_i1", "pi_k", "c_k"),
    ("c_k", "pass", "rho_i1", "c_k", "pi_k1"),
    ("pi_k1", "read", "rho_i1", "", ""),
    ("pi_k1", "write", "rho_i1", "", ""),
    ("pi_k1", "pass", "rho_i1", "pi_k1", "c_k1"),
];

pub fn pipeline_events() -> Vec<som::trace::TraceEvent> {
    let text = std::fs::read_to_string(PIPELINE_TRACE).expect("golden trace present");
    som::trace::parse(&text).expect("golden trace parses")
}

/// The events transcribing the table: those between the set-up prologue
/// and the hand-over to the next stage.
pub fn pipeline_table_events(events: &[som::trace::TraceEvent]) -> &[som::trace::TraceEvent] {
    let start = events.iter().position(|e| e.actor == "c_km1").expect("first receive");
    &events[start..start + PIPELINE_ROWS.len()]
}

/// For every table row, the number of violations when that event alone is
/// deleted from the golden trace.
pub fn pipeline_mutants(mode: som::Mode) -> Vec<(u64, som::trace::Op, usize)> {
    let events = pipeline_events();
    pipeline_table_events(&events)
        .iter()
        .map(|row| {
            let mutant: Vec<_> = events.iter().filter(|e| e.seq != row.seq).cloned().collect();
            (row.seq, row.op, som::trace::replay(&mutant, mode).violations.len())
        })
        .collect()
}
