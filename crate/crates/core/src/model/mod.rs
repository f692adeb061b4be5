//! Explicit multigraph model of lazy deep copy.
//!
//! Three styles share one representation:
//!
//! * `F`: plain object graph, edges carry no labels.
//! * `G`: each edge carries a list of labels, the deep copies its target is
//!   still to be propagated through.
//! * `H`: each edge carries a single label; labels form a tree through their
//!   parent links.
//!
//! The model keeps the memo unflattened: an entry `(v, k) -> u` is recorded
//! once, with the logical time it was inserted. A label `l` sees the entry if
//! `k == l`, or if `k` is a proper ancestor of `l` and the entry predates the
//! creation of the child of `k` on the path to `l`. This is exactly the
//! content a flattened per-label memo would hold.
//!
//! A distinguished root vertex plays the program frame: its slots are the
//! program's variables.

mod g;
mod h;
mod text;

pub use g::{eligible_edges, expand_step, labels_from_h, restore_f, restore_f_with};
pub use h::ModelInit;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::ModelError;

pub type VId = u32;
pub type EId = u32;
pub type LId = u32;

/// The root label, also the label of the frame vertex.
pub const ROOT_LABEL: LId = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Style {
    F,
    G,
    H,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Val {
    Int(i64),
    Edge(EId),
    Null,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub id: VId,
    pub slots: Vec<(String, Val)>,
    pub label: LId,
    pub frozen: bool,
}

impl Vertex {
    pub fn slot(&self, name: &str) -> Option<Val> {
        self.slots.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    fn slot_mut(&mut self, name: &str) -> Option<&mut Val> {
        self.slots.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub id: EId,
    pub src: VId,
    pub dst: VId,
    /// G-style label list, oldest deep copy first.
    pub list: Vec<LId>,
    /// H-style label.
    pub single: LId,
    /// Target and list before the first expansion step touched this edge.
    /// Copies of a read-only source are made from this state, so the result
    /// does not depend on the order edges are expanded in.
    pub origin: Option<(VId, Vec<LId>)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelInfo {
    pub parent: Option<LId>,
    pub created: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoEntry {
    pub value: VId,
    pub time: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelGraph {
    pub style: Style,
    pub vertices: BTreeMap<VId, Vertex>,
    pub edges: BTreeMap<EId, Edge>,
    pub root: VId,
    pub labels: BTreeMap<LId, LabelInfo>,
    pub memo: BTreeMap<(VId, LId), MemoEntry>,
    /// (viewer, frame, referenced label) -> snapshot label.
    pub xmap: BTreeMap<(LId, LId, LId), LId>,
    pub clock: u64,
    pub next_vertex: VId,
    pub next_edge: EId,
    pub next_label: LId,
}

impl ModelGraph {
    /// An empty program: a root label and a frame vertex with no variables.
    pub fn new(style: Style) -> Self {
        let mut g = ModelGraph {
            style,
            vertices: BTreeMap::new(),
            edges: BTreeMap::new(),
            root: 0,
            labels: BTreeMap::new(),
            memo: BTreeMap::new(),
            xmap: BTreeMap::new(),
            clock: 0,
            next_vertex: 0,
            next_edge: 0,
            next_label: ROOT_LABEL,
        };
        let root_label = g.new_label(None);
        debug_assert_eq!(root_label, ROOT_LABEL);
        g.root = g.add_vertex(Vec::new(), ROOT_LABEL);
        g
    }

    pub(crate) fn tick(&mut self) -> u64 {
        self.clock += 1;
        self.clock
    }

    pub fn new_label(&mut self, parent: Option<LId>) -> LId {
        let id = self.next_label;
        self.next_label += 1;
        let created = self.tick();
        self.labels.insert(id, LabelInfo { parent, created });
        id
    }

    pub fn add_vertex(&mut self, slots: Vec<(String, Val)>, label: LId) -> VId {
        let id = self.next_vertex;
        self.next_vertex += 1;
        self.vertices.insert(id, Vertex { id, slots, label, frozen: false });
        id
    }

    pub fn add_edge(&mut self, src: VId, dst: VId, label: LId) -> EId {
        let id = self.next_edge;
        self.next_edge += 1;
        let list = if self.style == Style::G { vec![label] } else { Vec::new() };
        self.edges.insert(id, Edge { id, src, dst, list, single: label, origin: None });
        id
    }

    pub fn vertex(&self, v: VId) -> Result<&Vertex, ModelError> {
        self.vertices.get(&v).ok_or_else(|| ModelError::Lookup(format!("vertex {v}")))
    }

    pub(crate) fn vertex_mut(&mut self, v: VId) -> Result<&mut Vertex, ModelError> {
        self.vertices.get_mut(&v).ok_or_else(|| ModelError::Lookup(format!("vertex {v}")))
    }

    pub fn edge(&self, e: EId) -> Result<&Edge, ModelError> {
        self.edges.get(&e).ok_or_else(|| ModelError::Lookup(format!("edge {e}")))
    }

    pub(crate) fn edge_mut(&mut self, e: EId) -> Result<&mut Edge, ModelError> {
        self.edges.get_mut(&e).ok_or_else(|| ModelError::Lookup(format!("edge {e}")))
    }

    /// Out-edges of `v` in slot declaration order.
    pub fn out_edges(&self, v: VId) -> Vec<EId> {
        self.vertices.get(&v).map_or_else(Vec::new, |vx| {
            vx.slots
                .iter()
                .filter_map(|(_, s)| match s {
                    Val::Edge(e) => Some(*e),
                    _ => None,
                })
                .collect()
        })
    }

    /// Labels from `l` up to the root label.
    pub fn ancestors(&self, l: LId) -> Vec<LId> {
        let mut out = vec![l];
        let mut k = l;
        while let Some(p) = self.labels.get(&k).and_then(|i| i.parent) {
            out.push(p);
            k = p;
        }
        out
    }

    pub fn parent(&self, l: LId) -> Option<LId> {
        self.labels.get(&l).and_then(|i| i.parent)
    }

    pub fn created(&self, l: LId) -> u64 {
        self.labels.get(&l).map_or(u64::MAX, |i| i.created)
    }

    /// The labels strictly below `from` down to and including `to`, oldest
    /// first, if `from` is an ancestor of `to` (or equal to it, giving an
    /// empty path).
    pub fn chain(&self, from: LId, to: LId) -> Option<Vec<LId>> {
        let mut path = Vec::new();
        let mut k = to;
        while k != from {
            path.push(k);
            k = self.parent(k)?;
        }
        path.reverse();
        Some(path)
    }

    /// Entry `(v, k)` if it is visible at cutoff time `cutoff`.
    pub fn memo_at(&self, v: VId, k: LId, cutoff: u64) -> Option<VId> {
        self.memo.get(&(v, k)).filter(|m| m.time < cutoff).map(|m| m.value)
    }

    /// Flattened memo lookup for label `l`.
    pub fn memo_lookup(&self, v: VId, l: LId) -> Option<VId> {
        let mut cutoff = u64::MAX;
        let mut k = l;
        loop {
            if let Some(u) = self.memo_at(v, k, cutoff) {
                return Some(u);
            }
            cutoff = self.created(k);
            k = self.parent(k)?;
        }
    }

    /// All entries of the flattened memo of `l`.
    pub fn flattened_memo(&self, l: LId) -> BTreeMap<VId, VId> {
        let mut out = BTreeMap::new();
        let mut cutoff = u64::MAX;
        let mut k = Some(l);
        while let Some(label) = k {
            for (&(v, kk), m) in &self.memo {
                if kk == label && m.time < cutoff {
                    out.entry(v).or_insert(m.value);
                }
            }
            cutoff = self.created(label);
            k = self.parent(label);
        }
        out
    }

    /// Marks every vertex reachable from `v` read-only.
    pub fn freeze_from(&mut self, v: VId) {
        let mut stack = vec![v];
        while let Some(x) = stack.pop() {
            let Some(vx) = self.vertices.get_mut(&x) else { continue };
            if vx.frozen {
                continue;
            }
            vx.frozen = true;
            for e in self.out_edges(x).into_iter().rev() {
                stack.push(self.edges[&e].dst);
            }
        }
    }

    /// Vertices reachable from the root. Memo entries count as edges from
    /// key to value, since a lookup can turn one into the other.
    pub fn reachable(&self) -> BTreeSet<VId> {
        let mut by_key: BTreeMap<VId, Vec<VId>> = BTreeMap::new();
        for (&(v, _), m) in &self.memo {
            by_key.entry(v).or_default().push(m.value);
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            if !seen.insert(v) {
                continue;
            }
            for e in self.out_edges(v) {
                stack.push(self.edges[&e].dst);
            }
            if let Some(us) = by_key.get(&v) {
                stack.extend(us.iter().copied());
            }
        }
        seen
    }

    /// Removes unreachable vertices, their out-edges and memo entries keyed
    /// by them.
    pub fn collect(&mut self) -> usize {
        let live = self.reachable();
        let dead: Vec<VId> = self.vertices.keys().copied().filter(|v| !live.contains(v)).collect();
        for v in &dead {
            self.vertices.remove(v);
        }
        self.edges.retain(|_, e| live.contains(&e.src));
        self.memo.retain(|&(v, _), m| live.contains(&v) && live.contains(&m.value));
        dead.len()
    }

    /// Checks structural invariants common to all styles.
    pub fn check(&self) -> Result<(), ModelError> {
        for v in self.vertices.values() {
            for (_, s) in &v.slots {
                if let Val::Edge(e) = s {
                    let edge = self.edge(*e)?;
                    if edge.src != v.id {
                        return Err(ModelError::Contract(format!("edge {e} listed in {} but sourced at {}", v.id, edge.src)));
                    }
                    self.vertex(edge.dst)?;
                }
            }
        }
        for &(v, k) in self.memo.keys() {
            if !self.vertex(v)?.frozen {
                return Err(ModelError::Contract(format!("memo key {v} under label {k} is not read-only")));
            }
        }
        for (&l, info) in &self.labels {
            if let Some(p) = info.parent {
                if !self.labels.contains_key(&p) || self.ancestors(l).len() > self.labels.len() {
                    return Err(ModelError::Contract(format!("label {l} has a broken parent link")));
                }
            }
        }
        Ok(())
    }

    /// Canonical text of the structure reachable from the root: vertices
    /// numbered in breadth-first order with slots in declaration order.
    /// Labels and flags are included only if `with_labels` is set. Two graphs
    /// are isomorphic exactly when their canonical forms are equal.
    pub fn canonical_form(&self, with_labels: bool) -> String {
        let mut index: BTreeMap<VId, usize> = BTreeMap::new();
        let mut order = Vec::new();
        let mut queue = VecDeque::from([self.root]);
        index.insert(self.root, 0);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for e in self.out_edges(v) {
                let d = self.edges[&e].dst;
                if !index.contains_key(&d) {
                    index.insert(d, index.len());
                    queue.push_back(d);
                }
            }
        }
        let mut out = String::new();
        for v in order {
            let vx = &self.vertices[&v];
            out.push_str(&format!("{}:", index[&v]));
            if with_labels {
                out.push_str(&format!(" l{} f{}", vx.label, vx.frozen as u8));
            }
            for (name, s) in &vx.slots {
                match s {
                    Val::Int(x) => out.push_str(&format!(" {name}={x}")),
                    Val::Null => out.push_str(&format!(" {name}=-")),
                    Val::Edge(e) => {
                        let edge = &self.edges[e];
                        out.push_str(&format!(" {name}->{}", index[&edge.dst]));
                        if with_labels {
                            match self.style {
                                Style::G => out.push_str(&format!("{:?}", edge.list)),
                                Style::H => out.push_str(&format!("[{}]", edge.single)),
                                Style::F => {}
                            }
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn isomorphic(&self, other: &ModelGraph) -> bool {
        self.canonical_form(false) == other.canonical_form(false)
    }

    /// The graph as style `F`: labels, memo, and flags dropped.
    pub fn strip_to_f(&self) -> ModelGraph {
        let mut f = self.clone();
        f.style = Style::F;
        f.memo.clear();
        f.xmap.clear();
        for e in f.edges.values_mut() {
            e.list.clear();
            e.origin = None;
            e.single = ROOT_LABEL;
        }
        for v in f.vertices.values_mut() {
            v.label = ROOT_LABEL;
            v.frozen = false;
        }
        f
    }

    /// Reads a scalar by following named slots from the root, in style `F`
    /// (no labels involved).
    pub fn read_plain(&self, path: &[&str], slot: &str) -> Result<i64, ModelError> {
        let mut v = self.root;
        for name in path {
            match self.vertex(v)?.slot(name) {
                Some(Val::Edge(e)) => v = self.edge(e)?.dst,
                _ => return Err(ModelError::Lookup(format!("no reference `{name}` at vertex {v}"))),
            }
        }
        match self.vertex(v)?.slot(slot) {
            Some(Val::Int(x)) => Ok(x),
            _ => Err(ModelError::Lookup(format!("no scalar `{slot}` at vertex {v}"))),
        }
    }
}

#[cfg(test)]
mod tests;
