//! Lazy-copy operations on an `H`-style model graph.
//!
//! Program variables are slots of the frame vertex; each operation names the
//! variables it reads and writes. Semantics follow the runtime, but on the
//! explicit graph with an unflattened memo, so the two can be compared step
//! by step.

use std::collections::{BTreeMap, BTreeSet};

use super::{EId, LId, ModelGraph, Style, VId, Val};
use crate::error::ModelError;

/// Initial value of a slot for [`ModelGraph::new_object`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ModelInit {
    Int(i64),
    Null,
    Var(String),
}

impl ModelGraph {
    pub fn new_h() -> Self {
        ModelGraph::new(Style::H)
    }

    fn contract(msg: impl Into<String>) -> ModelError {
        ModelError::Contract(msg.into())
    }

    /// The edge held by variable `var`, if it is non-null.
    pub fn var_edge(&self, var: &str) -> Result<Option<EId>, ModelError> {
        match self.vertex(self.root)?.slot(var) {
            Some(Val::Edge(e)) => Ok(Some(e)),
            Some(Val::Null) => Ok(None),
            _ => Err(ModelError::Lookup(format!("variable `{var}`"))),
        }
    }

    fn var_edge_required(&self, var: &str) -> Result<EId, ModelError> {
        self.var_edge(var)?.ok_or_else(|| ModelError::Lookup(format!("variable `{var}` is null")))
    }

    /// Stores a slot value, replacing (and deleting) any edge it held.
    fn put_slot(&mut self, v: VId, name: &str, value: Val) -> Result<(), ModelError> {
        let vx = self.vertex_mut(v)?;
        let old = match vx.slot_mut(name) {
            Some(s) => std::mem::replace(s, value),
            None => {
                vx.slots.push((name.to_string(), value));
                Val::Null
            }
        };
        if let Val::Edge(e) = old {
            self.edges.remove(&e);
        }
        Ok(())
    }

    fn set_var(&mut self, var: &str, target: Option<(VId, LId)>) -> Result<(), ModelError> {
        let root = self.root;
        let value = match target {
            Some((dst, label)) => Val::Edge(self.add_edge(root, dst, label)),
            None => Val::Null,
        };
        self.put_slot(root, var, value)
    }

    pub fn drop_var(&mut self, var: &str) -> Result<(), ModelError> {
        self.set_var(var, None)
    }

    /// Allocates a vertex labeled `label` and binds it to `var`.
    pub fn new_object(&mut self, var: &str, label: LId, init: &[(&str, ModelInit)]) -> Result<VId, ModelError> {
        let v = self.add_vertex(Vec::new(), label);
        for (name, i) in init {
            let value = match i {
                ModelInit::Int(x) => Val::Int(*x),
                ModelInit::Null => Val::Null,
                ModelInit::Var(src) => match self.var_edge(src)? {
                    Some(e) => {
                        let (dst, l) = (self.edges[&e].dst, self.edges[&e].single);
                        Val::Edge(self.add_edge(v, dst, l))
                    }
                    None => Val::Null,
                },
            };
            self.vertex_mut(v)?.slots.push((name.to_string(), value));
        }
        self.set_var(var, Some((v, label)))?;
        Ok(v)
    }

    pub fn clone_var(&mut self, src: &str, dst: &str) -> Result<(), ModelError> {
        let target = self.var_edge(src)?.map(|e| (self.edges[&e].dst, self.edges[&e].single));
        self.set_var(dst, target)
    }

    pub fn label_of_var(&self, var: &str) -> Result<LId, ModelError> {
        Ok(self.edge(self.var_edge_required(var)?)?.single)
    }

    /// Follows the memo of the edge's label, retargeting the edge.
    pub fn pull(&mut self, e: EId) -> Result<VId, ModelError> {
        let (mut v, l) = (self.edge(e)?.dst, self.edge(e)?.single);
        while let Some(u) = self.memo_lookup(v, l) {
            v = u;
        }
        self.edge_mut(e)?.dst = v;
        Ok(v)
    }

    /// Makes the edge's target writable under the edge's label.
    pub fn get(&mut self, e: EId) -> Result<VId, ModelError> {
        let v = self.pull(e)?;
        if !self.vertex(v)?.frozen {
            return Ok(v);
        }
        let l = self.edge(e)?.single;
        let u = self.copy_vertex(v, l)?;
        let time = self.tick();
        self.memo.insert((v, l), super::MemoEntry { value: u, time });
        self.edge_mut(e)?.dst = u;
        Ok(u)
    }

    /// Label under which an edge stored in a vertex of label `frame` is seen
    /// by `viewer`.
    pub fn view_label(&self, edge_label: LId, frame: LId, viewer: LId) -> Result<LId, ModelError> {
        if frame == viewer {
            Ok(edge_label)
        } else if edge_label == frame {
            Ok(viewer)
        } else {
            self.xmap
                .get(&(viewer, frame, edge_label))
                .copied()
                .ok_or_else(|| Self::contract(format!("no snapshot of label {edge_label} from {frame} under {viewer}")))
        }
    }

    /// Unfrozen copy of frozen `v` created under `l`.
    pub fn copy_vertex(&mut self, v: VId, l: LId) -> Result<VId, ModelError> {
        let src = self.vertex(v)?.clone();
        if !src.frozen {
            return Err(Self::contract(format!("copy of writable vertex {v}")));
        }
        let u = self.add_vertex(Vec::new(), l);
        for (name, s) in src.slots {
            let value = match s {
                Val::Edge(d) => {
                    let (dst, label) = (self.edges[&d].dst, self.edges[&d].single);
                    let label = self.view_label(label, src.label, l)?;
                    Val::Edge(self.add_edge(u, dst, label))
                }
                other => other,
            };
            self.vertex_mut(u)?.slots.push((name, value));
        }
        Ok(u)
    }

    /// Labels referenced by cross edges stored in vertices of label `w`.
    fn cross_labels(&self, w: LId) -> BTreeSet<LId> {
        let mut out = BTreeSet::new();
        for v in self.vertices.values().filter(|v| v.label == w && v.id != self.root) {
            for e in self.out_edges(v.id) {
                let l = self.edges[&e].single;
                if l != w {
                    out.insert(l);
                }
            }
        }
        out
    }

    /// New label seeing `world` as it is now, with snapshots of every world
    /// its objects cross-reference.
    fn snapshot(&mut self, world: LId) -> LId {
        let mut made = BTreeMap::new();
        let mut work = Vec::new();
        let root = self.snapshot_one(world, &mut made, &mut work);
        while let Some((w, s)) = work.pop() {
            let mut entries: Vec<((LId, LId), LId)> = self
                .xmap
                .iter()
                .filter(|((viewer, _, _), _)| *viewer == w)
                .map(|(&(_, f, k), &t)| ((f, k), t))
                .collect();
            entries.extend(self.cross_labels(w).into_iter().map(|k| ((w, k), k)));
            entries.sort();
            for ((f, k), seen) in entries {
                let snap = self.snapshot_one(seen, &mut made, &mut work);
                self.xmap.insert((s, f, k), snap);
            }
        }
        root
    }

    fn snapshot_one(&mut self, world: LId, made: &mut BTreeMap<LId, LId>, work: &mut Vec<(LId, LId)>) -> LId {
        if let Some(&s) = made.get(&world) {
            return s;
        }
        for u in self.flattened_memo(world).into_values() {
            self.freeze_from(u);
        }
        let s = self.new_label(Some(world));
        made.insert(world, s);
        work.push((world, s));
        s
    }

    /// Binds `dst` to a lazy deep copy of `src`.
    pub fn deep_copy(&mut self, src: &str, dst: &str) -> Result<LId, ModelError> {
        let e = self.var_edge_required(src)?;
        let v = self.pull(e)?;
        self.freeze_from(v);
        let world = self.edge(e)?.single;
        let l = self.snapshot(world);
        self.set_var(dst, Some((v, l)))?;
        Ok(l)
    }

    pub fn freeze_var(&mut self, var: &str) -> Result<(), ModelError> {
        let e = self.var_edge_required(var)?;
        let v = self.pull(e)?;
        self.freeze_from(v);
        Ok(())
    }

    /// Completes all pending copies reachable from `var`.
    pub fn finish_var(&mut self, var: &str, budget: usize) -> Result<(), ModelError> {
        let mut stack = vec![self.var_edge_required(var)?];
        let mut visited = BTreeSet::new();
        let mut steps = 0;
        while let Some(e) = stack.pop() {
            steps += 1;
            if steps > budget {
                return Err(ModelError::Budget(budget));
            }
            let v = self.get(e)?;
            if visited.insert(v) {
                stack.extend(self.out_edges(v).into_iter().rev());
            }
        }
        Ok(())
    }

    fn scalar(&self, v: VId, slot: &str) -> Result<i64, ModelError> {
        match self.vertex(v)?.slot(slot) {
            Some(Val::Int(x)) => Ok(x),
            _ => Err(ModelError::Lookup(format!("no scalar `{slot}` at vertex {v}"))),
        }
    }

    pub fn read_int(&mut self, var: &str, slot: &str) -> Result<i64, ModelError> {
        let e = self.var_edge_required(var)?;
        let v = self.pull(e)?;
        self.scalar(v, slot)
    }

    pub fn write_int(&mut self, var: &str, slot: &str, value: i64) -> Result<(), ModelError> {
        let e = self.var_edge_required(var)?;
        let v = self.get(e)?;
        self.scalar(v, slot)?;
        self.put_slot(v, slot, Val::Int(value))
    }

    /// Binds `dst` to the reference member `slot` of `src`'s target, which
    /// is obtained for writing first.
    pub fn read_ref(&mut self, src: &str, slot: &str, dst: &str) -> Result<(), ModelError> {
        let e = self.var_edge_required(src)?;
        let w = self.get(e)?;
        match self.vertex(w)?.slot(slot) {
            Some(Val::Edge(d)) => {
                let t = self.pull(d)?;
                let l = self.edges[&d].single;
                self.set_var(dst, Some((t, l)))
            }
            Some(Val::Null) => self.set_var(dst, None),
            _ => Err(ModelError::Lookup(format!("no reference `{slot}` at vertex {w}"))),
        }
    }

    /// Stores `value`'s reference (or null) into member `slot` of `var`.
    pub fn assign(&mut self, var: &str, slot: &str, value: Option<&str>) -> Result<(), ModelError> {
        let target = match value {
            Some(name) => {
                let e = self.var_edge(name)?;
                e.map(|e| (self.edges[&e].dst, self.edges[&e].single))
            }
            None => None,
        };
        let e = self.var_edge_required(var)?;
        let w = self.get(e)?;
        match self.vertex(w)?.slot(slot) {
            Some(Val::Edge(_)) | Some(Val::Null) => {}
            _ => return Err(ModelError::Lookup(format!("no reference `{slot}` at vertex {w}"))),
        }
        let value = match target {
            Some((dst, l)) => Val::Edge(self.add_edge(w, dst, l)),
            None => Val::Null,
        };
        self.put_slot(w, slot, value)
    }

    /// Reads along `path` (variable first, then reference members) and
    /// returns scalar `slot` of the vertex reached, or `None` at a null
    /// reference. Nothing is modified.
    pub fn observable_read(&self, path: &[&str], slot: &str) -> Result<Option<i64>, ModelError> {
        let (var, rest) = path.split_first().ok_or_else(|| ModelError::Lookup("empty path".into()))?;
        let Some(e) = self.var_edge(var)? else { return Ok(None) };
        let (mut v, mut l) = (self.edges[&e].dst, self.edges[&e].single);
        for name in rest {
            while let Some(u) = self.memo_lookup(v, l) {
                v = u;
            }
            let frame = self.vertex(v)?.label;
            match self.vertex(v)?.slot(name) {
                Some(Val::Edge(d)) => {
                    let edge = self.edge(d)?;
                    l = self.view_label(edge.single, frame, l)?;
                    v = edge.dst;
                }
                Some(Val::Null) => return Ok(None),
                _ => return Err(ModelError::Lookup(format!("no reference `{name}` at vertex {v}"))),
            }
        }
        while let Some(u) = self.memo_lookup(v, l) {
            v = u;
        }
        self.scalar(v, slot).map(Some)
    }
}
