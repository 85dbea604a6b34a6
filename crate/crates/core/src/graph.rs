//! Ownership graphs: processes and resources connected by "owner of" edges.
//!
//! A well-formed graph satisfies three properties:
//!
//! * **(P)** no process has an incoming edge,
//! * **(R)** every resource has at least one incoming edge,
//! * **(A)** the edge relation is acyclic.
//!
//! The mutation primitives here ([`OwnershipGraph::add_edge`],
//! [`OwnershipGraph::remove_edge`]) deliberately do not enforce (R) or (A);
//! the transition rules in [`crate::semantics`] decide when a mutation is
//! legal. [`OwnershipGraph::validate`] checks all three properties.

use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};

use rustc_hash::{FxHashMap, FxHashSet};
use smallvec::SmallVec;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityKind {
    Process,
    Resource,
}

/// Identity of a node in an ownership graph.
///
/// Ordering is by kind first (processes before resources), then by id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    kind: EntityKind,
    id: u64,
}

impl EntityId {
    #[inline]
    pub const fn process(id: u64) -> Self {
        Self { kind: EntityKind::Process, id }
    }

    #[inline]
    pub const fn resource(id: u64) -> Self {
        Self { kind: EntityKind::Resource, id }
    }

    #[inline]
    pub const fn kind(self) -> EntityKind {
        self.kind
    }

    #[inline]
    pub const fn id(self) -> u64 {
        self.id
    }

    #[inline]
    pub const fn is_process(self) -> bool {
        matches!(self.kind, EntityKind::Process)
    }

    #[inline]
    pub const fn is_resource(self) -> bool {
        matches!(self.kind, EntityKind::Resource)
    }

    #[inline]
    pub fn as_process(self) -> Option<ProcessId> {
        self.is_process().then_some(ProcessId(self.id))
    }

    #[inline]
    pub fn as_resource(self) -> Option<ResourceId> {
        self.is_resource().then_some(ResourceId(self.id))
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EntityKind::Process => write!(f, "p{}", self.id),
            EntityKind::Resource => write!(f, "r{}", self.id),
        }
    }
}

/// An entity statically known to be a process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u64);

/// An entity statically known to be a resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResourceId(pub u64);

impl From<ProcessId> for EntityId {
    #[inline]
    fn from(p: ProcessId) -> Self {
        EntityId::process(p.0)
    }
}

impl From<ResourceId> for EntityId {
    #[inline]
    fn from(r: ResourceId) -> Self {
        EntityId::resource(r.0)
    }
}

impl fmt::Display for ProcessId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        EntityId::from(*self).fmt(f)
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        EntityId::from(*self).fmt(f)
    }
}

/// `owner -> owned`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub owner: EntityId,
    pub owned: EntityId,
}

impl Edge {
    pub fn new(owner: impl Into<EntityId>, owned: impl Into<EntityId>) -> Self {
        Self { owner: owner.into(), owned: owned.into() }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.owner, self.owned)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("unknown entity {0}")]
    UnknownEntity(EntityId),
    #[error("edge {owner} -> {owned} targets a process")]
    ProcessAsTarget { owner: EntityId, owned: EntityId },
    #[error("no edge {0}")]
    NoSuchEdge(Edge),
    #[error("cycle detected at {0} while computing roots")]
    CycleDetected(EntityId),
    #[error("property (P) violated: process has incoming edge {0}")]
    ProcessHasOwner(Edge),
    #[error("property (R) violated: resource {0} has no owner")]
    UnownedResource(EntityId),
    #[error("property (A) violated: ownership edges form a cycle through {0}")]
    Cyclic(EntityId),
    #[error("edge {0} has an endpoint outside the entity set")]
    DanglingEdge(Edge),
}

/// How a process relates to the roots of an entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    /// The process is not a root.
    None,
    /// The process is one of several roots: read access.
    Shared,
    /// The process is the only root: read and write access.
    Exclusive,
}

impl Access {
    pub fn can_read(self) -> bool {
        !matches!(self, Access::None)
    }

    pub fn can_write(self) -> bool {
        matches!(self, Access::Exclusive)
    }
}

/// Direct owners of one entity, kept sorted. Almost every resource has a
/// single owner, which stays inline.
type Owners = SmallVec<[EntityId; 1]>;

/// A set of entities plus a set of ownership edges.
///
/// Edges are stored as per-entity owner lists (the reverse direction), since
/// every query the calculus needs walks from a resource up to its roots.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OwnershipGraph {
    nodes: NodeMap,
    edge_count: usize,
}

/// Owner lists keyed by entity. Ids a little above the first one inserted
/// are indexed directly, which covers the consecutive ids a session mints;
/// everything else goes to a hash map.
#[derive(Debug, Clone, Default)]
struct NodeMap {
    base: u64,
    dense: Vec<Option<(EntityKind, Owners)>>,
    sparse: FxHashMap<EntityId, Owners>,
    len: usize,
}

impl NodeMap {
    #[inline]
    fn slot(&self, e: EntityId) -> Option<usize> {
        let i = e.id().checked_sub(self.base)?;
        (i < self.dense.len() as u64).then_some(i as usize)
    }

    #[inline]
    fn get(&self, e: &EntityId) -> Option<&Owners> {
        if let Some(Some((kind, owners))) = self.slot(*e).map(|i| &self.dense[i]) {
            if *kind == e.kind() {
                return Some(owners);
            }
        }
        if self.sparse.is_empty() {
            return None;
        }
        self.sparse.get(e)
    }

    #[inline]
    fn get_mut(&mut self, e: &EntityId) -> Option<&mut Owners> {
        if let Some(i) = self.slot(*e) {
            if matches!(&self.dense[i], Some((kind, _)) if *kind == e.kind()) {
                return self.dense[i].as_mut().map(|(_, o)| o);
            }
        }
        self.sparse.get_mut(e)
    }

    #[inline]
    fn contains_key(&self, e: &EntityId) -> bool {
        self.get(e).is_some()
    }

    fn len(&self) -> usize {
        self.len
    }

    /// Inserts `e` with no owners unless present. Returns its owner list.
    fn entry(&mut self, e: EntityId) -> &mut Owners {
        if self.contains_key(&e) {
            return self.get_mut(&e).expect("present");
        }
        self.len += 1;
        if self.len == 1 && self.dense.is_empty() {
            self.base = e.id();
        }
        if let Some(i) = e.id().checked_sub(self.base) {
            let i = i as usize;
            if i < self.dense.len() * 2 + 16 {
                if i >= self.dense.len() {
                    self.dense.resize(i + 1, None);
                }
                if self.dense[i].is_none() {
                    return &mut self.dense[i].insert((e.kind(), Owners::new())).1;
                }
            }
        }
        self.sparse.entry(e).or_default()
    }

    /// All keys, sorted by (kind, id).
    fn sorted_keys(&self) -> SmallVec<[EntityId; 8]> {
        let mut v = SmallVec::with_capacity(self.len);
        for kind in [EntityKind::Process, EntityKind::Resource] {
            for (i, slot) in self.dense.iter().enumerate() {
                if matches!(slot, Some((k, _)) if *k == kind) {
                    v.push(EntityId { kind, id: self.base + i as u64 });
                }
            }
        }
        if !self.sparse.is_empty() {
            v.extend(self.sparse.keys().copied());
            v.sort_unstable();
        }
        v
    }

    fn iter(&self) -> impl Iterator<Item = (EntityId, &Owners)> + '_ {
        let dense = self.dense.iter().enumerate().filter_map(|(i, slot)| {
            let (kind, owners) = slot.as_ref()?;
            Some((EntityId { kind: *kind, id: self.base + i as u64 }, owners))
        });
        dense.chain(self.sparse.iter().map(|(&e, o)| (e, o)))
    }
}

impl PartialEq for NodeMap {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().all(|(e, o)| other.get(&e) == Some(o))
    }
}

impl Eq for NodeMap {}

impl Hash for OwnershipGraph {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.entities().hash(state);
        self.edges().hash(state);
    }
}

impl OwnershipGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph from raw parts without checking any property. Edges
    /// whose endpoints are not listed are still recorded so that corrupt
    /// graphs can be constructed for diagnosis.
    pub fn from_parts_unchecked(
        entities: impl IntoIterator<Item = EntityId>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Self {
        let mut g = Self::new();
        for e in entities {
            g.insert_entity(e);
        }
        for edge in edges {
            g.insert_edge_unchecked(edge);
        }
        g
    }

    /// Adds `e` to the entity set. Returns false if it was already present.
    pub fn insert_entity(&mut self, e: impl Into<EntityId>) -> bool {
        let e = e.into();
        if self.nodes.contains_key(&e) {
            return false;
        }
        self.nodes.entry(e);
        true
    }

    pub fn contains(&self, e: impl Into<EntityId>) -> bool {
        self.nodes.contains_key(&e.into())
    }

    /// True iff `e` is not present in the graph.
    pub fn fresh(&self, e: impl Into<EntityId>) -> bool {
        !self.contains(e)
    }

    pub fn entity_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// All entities, sorted by (kind, id).
    pub fn entities(&self) -> Vec<EntityId> {
        self.nodes.sorted_keys().into_vec()
    }

    /// All edges, sorted by (owner, owned).
    pub fn edges(&self) -> Vec<Edge> {
        let mut v: Vec<Edge> = Vec::with_capacity(self.edge_count);
        v.extend(self.nodes.iter().flat_map(|(owned, owners)| owners.iter().map(move |&owner| Edge { owner, owned })));
        v.sort_unstable();
        v
    }

    /// Direct owners of `e`, or `None` if `e` is unknown.
    pub fn owners(&self, e: impl Into<EntityId>) -> Option<&[EntityId]> {
        self.nodes.get(&e.into()).map(|o| o.as_slice())
    }

    pub fn has_edge(&self, owner: impl Into<EntityId>, owned: impl Into<EntityId>) -> bool {
        let owner = owner.into();
        self.nodes
            .get(&owned.into())
            .is_some_and(|o| o.binary_search(&owner).is_ok())
    }

    /// Inserts `owner -> owned`. Idempotent. Does not check acyclicity.
    pub fn add_edge(
        &mut self,
        owner: impl Into<EntityId>,
        owned: impl Into<EntityId>,
    ) -> Result<(), GraphError> {
        let (owner, owned) = (owner.into(), owned.into());
        if !self.nodes.contains_key(&owner) {
            return Err(GraphError::UnknownEntity(owner));
        }
        if !self.nodes.contains_key(&owned) {
            return Err(GraphError::UnknownEntity(owned));
        }
        if owned.is_process() {
            return Err(GraphError::ProcessAsTarget { owner, owned });
        }
        self.insert_edge_unchecked(Edge { owner, owned });
        Ok(())
    }

    /// Removes `owner -> owned`. Does not check property (R).
    pub fn remove_edge(
        &mut self,
        owner: impl Into<EntityId>,
        owned: impl Into<EntityId>,
    ) -> Result<(), GraphError> {
        let edge = Edge::new(owner, owned);
        let owners = self
            .nodes
            .get_mut(&edge.owned)
            .ok_or(GraphError::NoSuchEdge(edge))?;
        match owners.binary_search(&edge.owner) {
            Ok(i) => {
                owners.remove(i);
                self.edge_count -= 1;
                Ok(())
            }
            Err(_) => Err(GraphError::NoSuchEdge(edge)),
        }
    }

    /// Replaces the edge `from -> owned` by `to -> owned` in one step. Does
    /// not check `to` or acyclicity.
    pub fn move_edge(&mut self, owned: impl Into<EntityId>, from: EntityId, to: EntityId) -> Result<(), GraphError> {
        let owned = owned.into();
        let edge = Edge { owner: from, owned };
        let owners = self.nodes.get_mut(&owned).ok_or(GraphError::NoSuchEdge(edge))?;
        let i = owners.binary_search(&from).map_err(|_| GraphError::NoSuchEdge(edge))?;
        owners.remove(i);
        match owners.binary_search(&to) {
            Ok(_) => self.edge_count -= 1,
            Err(j) => owners.insert(j, to),
        }
        Ok(())
    }

    /// Records an edge with no checks at all. A missing owned endpoint joins
    /// the entity set; a missing owner does not, leaving a dangling edge.
    pub fn insert_edge_unchecked(&mut self, edge: Edge) {
        let owners = self.nodes.entry(edge.owned);
        if let Err(i) = owners.binary_search(&edge.owner) {
            owners.insert(i, edge.owner);
            self.edge_count += 1;
        }
    }

    /// The processes from which `e` is reachable. A process is its own sole
    /// root.
    pub fn root_of(&self, e: impl Into<EntityId>) -> Result<BTreeSet<ProcessId>, GraphError> {
        let e = e.into();
        if !self.nodes.contains_key(&e) {
            return Err(GraphError::UnknownEntity(e));
        }
        let mut roots = BTreeSet::new();
        self.walk_roots(e, |p| {
            roots.insert(p);
        })?;
        Ok(roots)
    }

    /// Upward DFS from `e`, calling `visit` once per root found.
    fn walk_roots(&self, e: EntityId, mut visit: impl FnMut(ProcessId)) -> Result<(), GraphError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            OnPath,
            Done,
        }
        let mut marks: FxHashMap<EntityId, Mark> = FxHashMap::default();
        let mut stack: Vec<(EntityId, usize)> = vec![(e, 0)];
        marks.insert(e, Mark::OnPath);
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if let Some(p) = node.as_process() {
                visit(p);
                marks.insert(node, Mark::Done);
                stack.pop();
                continue;
            }
            let owners = self.nodes.get(&node).map(|o| o.as_slice()).unwrap_or(&[]);
            if *next < owners.len() {
                let owner = owners[*next];
                *next += 1;
                match marks.get(&owner) {
                    Some(Mark::OnPath) => return Err(GraphError::CycleDetected(owner)),
                    Some(Mark::Done) => {}
                    None => {
                        marks.insert(owner, Mark::OnPath);
                        stack.push((owner, 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Done);
                stack.pop();
            }
        }
        Ok(())
    }

    /// Classifies `p`'s access to `e` without materializing the root set when
    /// `e` hangs off a chain of single owners.
    pub fn access(&self, p: ProcessId, e: impl Into<EntityId>) -> Result<Access, GraphError> {
        let e = e.into();
        let mut cur = e;
        // A chain longer than the entity count must repeat a node.
        for _ in 0..=self.nodes.len() {
            if let Some(root) = cur.as_process() {
                if !self.nodes.contains_key(&cur) {
                    return Err(GraphError::UnknownEntity(cur));
                }
                return Ok(if root == p { Access::Exclusive } else { Access::None });
            }
            let owners = self.nodes.get(&cur).ok_or(GraphError::UnknownEntity(cur))?;
            match owners.as_slice() {
                [] => return Ok(Access::None),
                [single] => cur = *single,
                _ => break,
            }
        }
        let mut mine = false;
        let mut others = false;
        self.walk_roots(e, |r| {
            if r == p {
                mine = true;
            } else {
                others = true;
            }
        })?;
        Ok(match (mine, others) {
            (false, _) => Access::None,
            (true, true) => Access::Shared,
            (true, false) => Access::Exclusive,
        })
    }

    /// True iff `target` can be reached from `from` by following edges
    /// (including `from == target`).
    pub fn reaches(&self, from: EntityId, target: EntityId) -> bool {
        if from == target {
            return true;
        }
        // Walk upward from the target looking for `from`, first along single
        // owners without allocating.
        let mut cur = target;
        for _ in 0..=self.nodes.len() {
            match self.nodes.get(&cur).map(|o| o.as_slice()) {
                None | Some([]) => return false,
                Some(&[single]) if single == from => return true,
                Some(&[single]) => cur = single,
                Some(_) => break,
            }
        }
        let mut seen: FxHashSet<EntityId> = FxHashSet::default();
        let mut stack = vec![target];
        while let Some(n) = stack.pop() {
            for &o in self.nodes.get(&n).map(|o| o.as_slice()).unwrap_or(&[]) {
                if o == from {
                    return true;
                }
                if seen.insert(o) {
                    stack.push(o);
                }
            }
        }
        false
    }

    /// True iff no directed cycle exists among the edges.
    pub fn is_acyclic(&self) -> bool {
        self.find_cycle().is_none()
    }

    /// Some node on a cycle, if there is one.
    fn find_cycle(&self) -> Option<EntityId> {
        #[derive(Clone, Copy, PartialEq)]
        enum Color {
            White,
            Grey,
            Black,
        }
        let nodes = self.nodes.sorted_keys();
        let mut color: SmallVec<[Color; 8]> = SmallVec::from_elem(Color::White, nodes.len());
        let mut stack: SmallVec<[(usize, usize); 8]> = SmallVec::new();
        for start in 0..nodes.len() {
            if color[start] != Color::White {
                continue;
            }
            color[start] = Color::Grey;
            stack.push((start, 0));
            while let Some(&mut (i, ref mut next)) = stack.last_mut() {
                let owners = self.nodes.get(&nodes[i]).map_or(&[][..], |o| o.as_slice());
                if *next < owners.len() {
                    let o = owners[*next];
                    *next += 1;
                    // A dangling owner has no owners of its own.
                    let Ok(j) = nodes.binary_search(&o) else {
                        continue;
                    };
                    match color[j] {
                        Color::Grey => return Some(o),
                        Color::Black => {}
                        Color::White => {
                            color[j] = Color::Grey;
                            stack.push((j, 0));
                        }
                    }
                } else {
                    color[i] = Color::Black;
                    stack.pop();
                }
            }
        }
        None
    }

    /// Checks (P), (R), (A) and endpoint membership. Reports the first
    /// problem in (kind, id) order so diagnoses are deterministic.
    pub fn validate(&self) -> Result<(), GraphError> {
        let owned = self.nodes.sorted_keys();
        for &e in &owned {
            let owners = self.nodes.get(&e).expect("listed above");
            for &o in owners {
                if !self.nodes.contains_key(&o) {
                    return Err(GraphError::DanglingEdge(Edge { owner: o, owned: e }));
                }
            }
            if e.is_process() {
                if let Some(&o) = owners.first() {
                    return Err(GraphError::ProcessHasOwner(Edge { owner: o, owned: e }));
                }
            } else if owners.is_empty() {
                return Err(GraphError::UnownedResource(e));
            }
        }
        match self.find_cycle() {
            Some(n) => Err(GraphError::Cyclic(n)),
            None => Ok(()),
        }
    }

    /// Deterministic text form: one `<owner> -> <owned>` line per edge.
    pub fn export(&self) -> String {
        self.export_with(|e| e.to_string())
    }

    /// Like [`export`](Self::export) with caller-chosen entity names.
    pub fn export_with(&self, mut name: impl FnMut(EntityId) -> String) -> String {
        let mut out = String::new();
        for edge in self.edges() {
            out.push_str(&name(edge.owner));
            out.push_str(" -> ");
            out.push_str(&name(edge.owned));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for OwnershipGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.export())
    }
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn procs(ids: &[u64]) -> BTreeSet<ProcessId> {
        ids.iter().map(|&i| ProcessId(i)).collect()
    }

    #[test]
    fn roots_in_simple_graph() {
        let g = simple();
        assert_eq!(g.root_of(r(3)).unwrap(), procs(&[1]));
        assert_eq!(g.root_of(r(4)).unwrap(), procs(&[1, 2]));
        assert_eq!(g.root_of(P2).unwrap(), procs(&[2]));
    }

    #[test]
    fn storage_layout_is_invisible() {
        let p = EntityId::process(7);
        let ids = [p, r(7), r(3), r(8), EntityId::process(3), r(1 << 40), r(9)];
        let edges = [(p, r(7)), (r(7), r(3)), (p, r(8)), (r(8), r(1 << 40)), (r(1 << 40), r(9))];
        let g = build(&ids, &edges);
        let mut rev = ids;
        rev.reverse();
        let h = build(&rev, &edges);
        assert_eq!(g, h);
        assert_eq!(g.entities(), h.entities());
        assert_eq!(g.entity_count(), 7);
        assert!(g.contains(EntityId::process(3)) && g.contains(r(3)));
        assert!(!g.contains(EntityId::process(8)) && !g.contains(r(2)));
        assert_eq!(g.owners(r(9)), Some(&[r(1 << 40)][..]));
        assert_eq!(g.root_of(r(9)).unwrap(), procs(&[7]));
        assert!(g.validate().is_ok());
        assert_ne!(g, build(&ids, &edges[..4]));
    }

    #[test]
    fn roots_follow_long_chains() {
        let p = EntityId::process(0);
        let g = build(&[p, r(1), r(2), r(3)], &[(p, r(1)), (r(1), r(2)), (r(2), r(3))]);
        assert_eq!(g.root_of(r(3)).unwrap(), procs(&[0]));
        assert_eq!(g.access(ProcessId(0), r(3)).unwrap(), Access::Exclusive);
    }

    #[test]
    fn root_of_unknown() {
        assert_eq!(
            simple().root_of(r(99)),
            Err(GraphError::UnknownEntity(r(99)))
        );
    }

    #[test]
    fn root_of_terminates_on_cycles() {
        let g = OwnershipGraph::from_parts_unchecked(
            [P1, r(1), r(2)],
            [Edge::new(P1, r(1)), Edge::new(r(1), r(2)), Edge::new(r(2), r(1))],
        );
        assert!(matches!(g.root_of(r(2)), Err(GraphError::CycleDetected(_))));
        assert!(matches!(g.access(ProcessId(1), r(2)), Err(GraphError::CycleDetected(_))));
        assert!(!g.is_acyclic());
    }

    #[test]
    fn access_levels() {
        let g = simple();
        assert_eq!(g.access(ProcessId(1), r(4)).unwrap(), Access::Shared);
        assert_eq!(g.access(ProcessId(2), r(3)).unwrap(), Access::None);
        assert_eq!(g.access(ProcessId(1), r(3)).unwrap(), Access::Exclusive);
        assert_eq!(g.access(ProcessId(2), P2).unwrap(), Access::Exclusive);
        assert_eq!(g.access(ProcessId(1), P2).unwrap(), Access::None);
    }

    #[test]
    fn acyclicity() {
        assert!(OwnershipGraph::new().is_acyclic());
        assert!(simple().is_acyclic());
        let p = EntityId::process(0);
        let g = OwnershipGraph::from_parts_unchecked(
            [p, r(1), r(2)],
            [Edge::new(p, r(1)), Edge::new(r(1), r(2)), Edge::new(r(2), r(1))],
        );
        assert!(!g.is_acyclic());
    }

    #[test]
    fn add_edge_is_idempotent() {
        let mut once = simple();
        once.add_edge(P2, r(3)).unwrap();
        let mut twice = once.clone();
        twice.add_edge(P2, r(3)).unwrap();
        assert_eq!(once, twice);
        assert_eq!(twice.edge_count(), 6);
    }

    #[test]
    fn add_edge_rejects_process_target() {
        let mut g = simple();
        assert_eq!(
            g.add_edge(P1, P2),
            Err(GraphError::ProcessAsTarget { owner: P1, owned: P2 })
        );
        assert_eq!(g.add_edge(P1, r(9)), Err(GraphError::UnknownEntity(r(9))));
    }

    #[test]
    fn pass_by_edge_primitives() {
        let mut g = pass_before();
        g.remove_edge(P1, r(2)).unwrap();
        assert!(g.owners(r(2)).unwrap().is_empty());
        assert!(g.validate().is_err());
        g.add_edge(P2, r(2)).unwrap();
        assert_eq!(g, pass_after());
        assert!(g.validate().is_ok());
    }

    #[test]
    fn remove_then_readd() {
        let mut g = simple();
        g.remove_edge(r(2), r(4)).unwrap();
        g.add_edge(r(2), r(4)).unwrap();
        assert_eq!(g, simple());
        assert_eq!(
            g.remove_edge(P2, r(3)),
            Err(GraphError::NoSuchEdge(Edge::new(P2, r(3))))
        );
    }

    #[test]
    fn freshness() {
        let mut g = simple();
        assert!(g.fresh(r(42)));
        assert!(!g.fresh(r(1)));
        g.insert_entity(r(42));
        assert!(!g.fresh(r(42)));
    }

    #[test]
    fn validate_reports_each_property() {
        assert!(simple().validate().is_ok());
        let p = OwnershipGraph::from_parts_unchecked([P1, P2], [Edge::new(P1, P2)]);
        assert!(matches!(p.validate(), Err(GraphError::ProcessHasOwner(_))));
        let r_ = OwnershipGraph::from_parts_unchecked([P1, r(1)], []);
        assert_eq!(r_.validate(), Err(GraphError::UnownedResource(r(1))));
        let a = OwnershipGraph::from_parts_unchecked(
            [P1, r(1), r(2)],
            [Edge::new(P1, r(1)), Edge::new(r(1), r(2)), Edge::new(r(2), r(1))],
        );
        assert!(matches!(a.validate(), Err(GraphError::Cyclic(_))));
        let d = OwnershipGraph::from_parts_unchecked([r(1)], [Edge::new(P1, r(1))]);
        assert!(matches!(d.validate(), Err(GraphError::DanglingEdge(_))));
    }

    #[test]
    fn export_is_sorted() {
        assert_eq!(
            simple().export(),
            "p1 -> r1\np2 -> r2\nr1 -> r3\nr1 -> r4\nr2 -> r4\n"
        );
    }
}
