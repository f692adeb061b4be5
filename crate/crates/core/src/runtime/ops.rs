use std::collections::HashMap;

use fnv::{FnvHashMap, FnvHashSet};

use super::heap::{Heap, Slots};
use super::{Edge, Handle, Init, Label, Slot};
use crate::error::RuntimeError;
use crate::ids::{LabelKey, ObjId};

/// Where an edge lives: a program handle, or a slot of an unfrozen object.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Loc {
    Handle(Handle),
    Slot(ObjId, usize),
}

impl Heap {
    // ---------------------------------------------------------------------
    // context

    pub fn current_context(&self) -> Label {
        Label(*self.context.last().expect("context stack is never empty"))
    }

    pub fn context_depth(&self) -> usize {
        self.context.len()
    }

    pub fn context_enter(&mut self, label: Label) {
        self.retain_label(label.0);
        self.context.push(label.0);
    }

    pub fn context_exit(&mut self) -> Result<(), RuntimeError> {
        if self.context.len() == 1 {
            return Err(RuntimeError::RootContextPop);
        }
        let top = self.context.pop().expect("non-empty");
        self.release_label(top);
        Ok(())
    }

    // ---------------------------------------------------------------------
    // edges

    fn edge_at(&self, loc: Loc) -> Edge {
        match loc {
            Loc::Handle(h) => self.handles[h.0 as usize].expect("live handle"),
            Loc::Slot(o, i) => match self.obj(o).slots[i] {
                Slot::Ref(Some(e)) => e,
                _ => unreachable!("slot location without an edge"),
            },
        }
    }

    /// Points the edge at `loc` to `target`, which must arrive with one shared
    /// count already taken for this edge. Releases the old target.
    fn set_target(&mut self, loc: Loc, target: ObjId) {
        let old = self.edge_at(loc);
        let new = Edge { target, label: old.label };
        match loc {
            Loc::Handle(h) => self.handles[h.0 as usize] = Some(new),
            Loc::Slot(o, i) => self.obj_mut(o).slots[i] = Slot::Ref(Some(new)),
        }
        self.release_shared(old.target);
    }

    /// Follows the memo of the edge's label until it misses.
    pub(crate) fn resolve(&self, edge: Edge) -> ObjId {
        if !self.lazy() {
            return edge.target;
        }
        let memo = &self.label(edge.label).memo;
        let mut v = edge.target;
        while let Some(u) = memo.get(v) {
            v = u;
        }
        v
    }

    fn pull_at(&mut self, loc: Loc) -> ObjId {
        let edge = self.edge_at(loc);
        let v = self.resolve(edge);
        if v != edge.target {
            self.stats.retargets += 1;
            self.retain_shared(v);
            self.set_target(loc, v);
        }
        v
    }

    /// Makes the target of the edge at `loc` writable under the edge's label
    /// and returns it.
    fn get_at(&mut self, loc: Loc) -> Result<ObjId, RuntimeError> {
        let v = self.pull_at(loc);
        if !self.obj(v).frozen {
            return Ok(v);
        }
        let label = self.edge_at(loc).label;
        let o = self.obj(v);
        if self.config.thaw && o.counts.shared() == 1 && o.counts.memo() == 1 && o.memo_range == 0 && o.single_ref {
            self.thaw(v, label)?;
            return Ok(v);
        }
        let u = self.shallow_copy(v, label)?;
        let skip = self.sro() && self.obj(v).single_ref;
        if skip {
            self.stats.memo_skips += 1;
        } else {
            self.memo_insert(label, v, u);
        }
        self.set_target(loc, u);
        Ok(u)
    }

    fn memo_insert(&mut self, label: LabelKey, key: ObjId, value: ObjId) {
        debug_assert!(self.obj(key).frozen, "memo key must be frozen");
        self.retain_memo(key);
        self.retain_shared(value);
        self.obj_mut(value).memo_range += 1;
        let mut memo = std::mem::take(&mut self.label_mut(label).memo);
        let (old, swept) = memo.insert(key, value, |k| self.is_weak_dead(k));
        self.label_mut(label).memo = memo;
        debug_assert!(old.is_none(), "memo key inserted twice");
        self.stats.memo_inserts += 1;
        self.ledger.on_memo_insert();
        self.release_memo_entries(swept);
    }

    /// The edge `edge`, stored in an object created under `frame`, as seen
    /// through label `viewer`.
    pub(crate) fn view_edge(&self, edge: Edge, frame: LabelKey, viewer: LabelKey) -> Result<Edge, RuntimeError> {
        if frame == viewer {
            return Ok(edge);
        }
        if edge.label == frame || !self.config.cross_ref_guard {
            return Ok(Edge { target: edge.target, label: viewer });
        }
        match self.label(viewer).xmap.get(&(frame, edge.label)) {
            Some(&snapshot) => Ok(Edge { target: edge.target, label: snapshot }),
            None => Err(RuntimeError::Invariant(format!(
                "no snapshot of cross reference label {:?} from frame {frame:?} under {viewer:?}",
                edge.label
            ))),
        }
    }

    /// Duplicates frozen `v` into an unfrozen object created under `label`.
    /// The new object's single shared count belongs to the caller.
    pub fn shallow_copy_id(&mut self, v: ObjId, label: Label) -> Result<ObjId, RuntimeError> {
        self.shallow_copy(v, label.0)
    }

    fn shallow_copy(&mut self, v: ObjId, label: LabelKey) -> Result<ObjId, RuntimeError> {
        let frame = self.obj(v).label;
        let mut slots = self.obj(v).slots.clone();
        for s in slots.iter_mut() {
            if let Slot::Ref(Some(e)) = s {
                *e = self.view_edge(*e, frame, label)?;
            }
        }
        let edges: Vec<Edge> = slots
            .iter()
            .filter_map(|s| match s {
                Slot::Ref(Some(e)) => Some(*e),
                _ => None,
            })
            .collect();
        let u = self.alloc(slots, label);
        for e in edges {
            self.retain_edge(e, Some(label));
        }
        self.stats.copies += 1;
        Ok(u)
    }

    /// Reuses frozen `v` in place as its own copy under `label`.
    fn thaw(&mut self, v: ObjId, label: LabelKey) -> Result<(), RuntimeError> {
        let frame = self.obj(v).label;
        let n = self.obj(v).slots.len();
        for i in 0..n {
            if let Slot::Ref(Some(e)) = self.obj(v).slots[i] {
                let viewed = self.view_edge(e, frame, label)?;
                // Counts held under the old frame are swapped for the new one.
                self.retain_edge(viewed, Some(label));
                self.obj_mut(v).slots[i] = Slot::Ref(Some(viewed));
                self.release_edge(e, Some(frame));
            }
        }
        let o = self.obj_mut(v);
        o.label = label;
        o.frozen = false;
        o.single_ref = false;
        self.stats.thaws += 1;
        Ok(())
    }

    /// Marks everything reachable from `root` through stored references as
    /// frozen, stopping at objects that already are.
    fn freeze_from(&mut self, root: ObjId) {
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            let o = self.obj_mut(id);
            if o.frozen {
                continue;
            }
            o.frozen = true;
            o.single_ref = o.counts.shared() == 1 && o.memo_range == 0;
            self.stats.freezes += 1;
            // Stale edges are pulled before they are frozen in place, so
            // superseded versions are not kept alive by the frozen graph.
            // Retarget destinations are memo values, never single_ref.
            for i in (0..self.obj(id).slots.len()).rev() {
                if let Slot::Ref(Some(_)) = self.obj(id).slots[i] {
                    stack.push(self.pull_at(Loc::Slot(id, i)));
                }
            }
        }
    }

    /// A copy of `world` as it is now: a fresh label with a copy of its memo,
    /// and cross maps pointing at snapshots of every world the copied objects
    /// cross-reference. Returns labels with zero strong counts for the root
    /// snapshot; nested snapshots are held by cross maps.
    fn snapshot(&mut self, world: LabelKey) -> LabelKey {
        let mut made: HashMap<LabelKey, LabelKey> = HashMap::new();
        let mut work = Vec::new();
        let root = self.snapshot_one(world, &mut made, &mut work);
        while let Some((w, s)) = work.pop() {
            // Sweeps inside `snapshot_one` can cascade and free labels that
            // were only held by swept objects; nothing refers through those.
            if !self.config.cross_ref_guard || self.try_label(w).is_none() {
                continue;
            }
            let mut entries: Vec<((LabelKey, LabelKey), LabelKey)> =
                self.label(w).xmap.iter().map(|(k, v)| (*k, *v)).collect();
            entries.extend(self.label(w).cross_out.keys().map(|&k| ((w, k), k)));
            entries.sort();
            for (key, seen) in entries {
                if self.try_label(seen).is_none() {
                    continue;
                }
                let snap = self.snapshot_one(seen, &mut made, &mut work);
                self.retain_label(snap);
                let old = self.label_mut(s).xmap.insert(key, snap);
                debug_assert!(old.is_none());
            }
        }
        root
    }

    fn snapshot_one(
        &mut self,
        world: LabelKey,
        made: &mut HashMap<LabelKey, LabelKey>,
        work: &mut Vec<(LabelKey, LabelKey)>,
    ) -> LabelKey {
        if let Some(&s) = made.get(&world) {
            return s;
        }
        let mut memo = std::mem::take(&mut self.label_mut(world).memo);
        let (mut copy, swept) = memo.sweep_and_clone(|k| self.is_weak_dead(k));
        // Values are resolved to the ends of their chains, so superseded
        // versions are held only by the source world.
        copy.compress();
        self.label_mut(world).memo = memo;
        self.release_memo_entries(swept);
        let entries: Vec<_> = copy.iter().collect();
        let s = self.new_label(copy);
        for (k, v) in entries {
            self.retain_memo(k);
            self.retain_shared(v);
            self.obj_mut(v).memo_range += 1;
            self.ledger.on_memo_insert();
            // Copies made under `world` are now shared with `s`.
            self.freeze_from(v);
        }
        if world != s {
            self.stats.snapshot_labels += 1;
        }
        made.insert(world, s);
        work.push((world, s));
        s
    }

    // ---------------------------------------------------------------------
    // program operations

    fn edge_from_init(&mut self, h: Handle) -> Result<Edge, RuntimeError> {
        self.single_ref_guard(Loc::Handle(h))?;
        self.handle_edge(h)
    }

    /// Before duplicating the edge at `loc`: a frozen target flagged
    /// single-reference would gain a second edge with the same label, so the
    /// edge is made to point at a writable copy first.
    fn single_ref_guard(&mut self, loc: Loc) -> Result<(), RuntimeError> {
        if !self.sro() {
            return Ok(());
        }
        let v = self.pull_at(loc);
        let o = self.obj(v);
        if o.frozen && o.single_ref {
            self.get_at(loc)?;
        }
        Ok(())
    }

    /// Allocates an object under the current context.
    pub fn new_object(&mut self, init: &[Init]) -> Result<Handle, RuntimeError> {
        let label = self.current_context().0;
        let mut slots = Slots::with_capacity(init.len());
        for i in init {
            slots.push(match *i {
                Init::Int(v) => Slot::Int(v),
                Init::Null => Slot::Ref(None),
                Init::Ref(h) => Slot::Ref(Some(self.edge_from_init(h)?)),
            });
        }
        let edges: Vec<Edge> = slots
            .iter()
            .filter_map(|s| match s {
                Slot::Ref(Some(e)) => Some(*e),
                _ => None,
            })
            .collect();
        let id = self.alloc(slots, label);
        for e in edges {
            self.retain_edge(e, Some(label));
        }
        self.retain_label(label);
        Ok(self.adopt_handle(Edge { target: id, label }))
    }

    pub fn clone_handle(&mut self, h: Handle) -> Result<Handle, RuntimeError> {
        let edge = self.edge_from_init(h)?;
        self.retain_edge(edge, None);
        Ok(self.adopt_handle(edge))
    }

    /// Lazy (or, in eager mode, immediate) deep copy of the object graph
    /// reachable from `h`.
    pub fn deep_copy(&mut self, h: Handle) -> Result<Handle, RuntimeError> {
        self.handle_edge(h)?;
        self.stats.deep_copies += 1;
        if !self.lazy() {
            return self.eager_deep_copy(h);
        }
        let v = self.pull_at(Loc::Handle(h));
        self.check_live(v)?;
        self.freeze_from(v);
        let world = self.handle_edge(h)?.label;
        let label = self.snapshot(world);
        let edge = Edge { target: v, label };
        self.retain_edge(edge, None);
        Ok(self.adopt_handle(edge))
    }

    /// Copies every object reachable from `h` once, preserving sharing.
    pub fn eager_deep_copy(&mut self, h: Handle) -> Result<Handle, RuntimeError> {
        let root_edge = self.handle_edge(h)?;
        let root = self.resolve(root_edge);
        // Discovery order; each object is copied on first visit.
        let mut order = Vec::new();
        let mut map: FnvHashMap<ObjId, ObjId> = FnvHashMap::default();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            if map.contains_key(&id) {
                continue;
            }
            let label = self.obj(id).label;
            let copy = self.alloc(Slots::new(), label);
            map.insert(id, copy);
            order.push(id);
            for s in self.obj(id).slots.iter().rev() {
                if let Slot::Ref(Some(e)) = s {
                    stack.push(self.resolve(*e));
                }
            }
        }
        for &id in &order {
            let frame = self.obj(id).label;
            let mut slots = self.obj(id).slots.clone();
            for s in slots.iter_mut() {
                if let Slot::Ref(Some(e)) = s {
                    e.target = map[&self.resolve(*e)];
                    self.retain_edge(*e, Some(frame));
                }
            }
            self.obj_mut(map[&id]).slots = slots;
        }
        self.stats.copies += order.len() as u64;
        for &id in &order[1..] {
            // Allocation counts are replaced by the in-edges just retained.
            self.release_shared(map[&id]);
        }
        let label = self.obj(root).label;
        self.retain_label(label);
        Ok(self.adopt_handle(Edge { target: map[&root], label }))
    }

    fn slot_index(&self, id: ObjId, slot: usize) -> Result<Slot, RuntimeError> {
        let o = self.obj(id);
        o.slots.get(slot).copied().ok_or(RuntimeError::SlotOutOfRange { slot, len: o.slots.len() })
    }

    /// Read access: pull, no copy.
    pub fn read_int(&mut self, h: Handle, slot: usize) -> Result<i64, RuntimeError> {
        self.handle_edge(h)?;
        let v = self.pull_at(Loc::Handle(h));
        self.check_live(v)?;
        match self.slot_index(v, slot)? {
            Slot::Int(x) => Ok(x),
            other => Err(RuntimeError::SlotKind { slot, expected: "scalar", found: other.kind() }),
        }
    }

    /// Write access: get, copying if needed.
    pub fn write_int(&mut self, h: Handle, slot: usize, value: i64) -> Result<(), RuntimeError> {
        self.handle_edge(h)?;
        let v = self.get_at(Loc::Handle(h))?;
        match self.slot_index(v, slot)? {
            Slot::Int(_) => {
                self.with_context_of(v, |heap| heap.obj_mut(v).slots[slot] = Slot::Int(value));
                Ok(())
            }
            other => Err(RuntimeError::SlotKind { slot, expected: "scalar", found: other.kind() }),
        }
    }

    fn with_context_of<R>(&mut self, v: ObjId, f: impl FnOnce(&mut Heap) -> R) -> R {
        let label = self.obj(v).label;
        self.context.push(label);
        let r = f(self);
        self.context.pop();
        r
    }

    /// Loads a reference member into a new handle. The owner is obtained for
    /// writing first, as traversal may precede an update of the member.
    pub fn read_ref(&mut self, h: Handle, slot: usize) -> Result<Option<Handle>, RuntimeError> {
        self.handle_edge(h)?;
        let owner = self.get_at(Loc::Handle(h))?;
        match self.slot_index(owner, slot)? {
            Slot::Ref(None) => Ok(None),
            Slot::Ref(Some(_)) => {
                let loc = Loc::Slot(owner, slot);
                self.pull_at(loc);
                self.single_ref_guard(loc)?;
                let edge = self.edge_at(loc);
                self.retain_edge(edge, None);
                Ok(Some(self.adopt_handle(edge)))
            }
            other => Err(RuntimeError::SlotKind { slot, expected: "reference", found: other.kind() }),
        }
    }

    /// Stores `value` (or null) into a reference member.
    pub fn assign(&mut self, h: Handle, slot: usize, value: Option<Handle>) -> Result<(), RuntimeError> {
        self.handle_edge(h)?;
        if let Some(vh) = value {
            self.handle_edge(vh)?;
        }
        let owner = self.get_at(Loc::Handle(h))?;
        let old = match self.slot_index(owner, slot)? {
            Slot::Ref(e) => e,
            other => return Err(RuntimeError::SlotKind { slot, expected: "reference", found: other.kind() }),
        };
        let new = match value {
            Some(vh) => Some(self.edge_from_init(vh)?),
            None => None,
        };
        // The guard may have copied the owner's own target when `value`
        // aliases it; re-read the owner.
        let owner = self.get_at(Loc::Handle(h))?;
        let frame = self.obj(owner).label;
        if let Some(e) = new {
            self.retain_edge(e, Some(frame));
        }
        let current = match self.obj(owner).slots[slot] {
            Slot::Ref(e) => e,
            _ => old,
        };
        self.with_context_of(owner, |heap| heap.obj_mut(owner).slots[slot] = Slot::Ref(new));
        if let Some(e) = current {
            self.release_edge(e, Some(frame));
        }
        Ok(())
    }

    /// Follows `path` (reference slot indices) from `h` and reads the scalar
    /// at `slot` of the object reached, without copying or retargeting
    /// anything. Returns `None` if the path hits a null reference.
    pub fn read_path(&self, h: Handle, path: &[usize], slot: usize) -> Result<Option<i64>, RuntimeError> {
        let mut edge = self.handle_edge(h)?;
        for &p in path {
            let v = self.resolve(edge);
            let frame = self.obj(v).label;
            match self.slot_index(v, p)? {
                Slot::Ref(None) => return Ok(None),
                Slot::Ref(Some(d)) => edge = self.view_edge(d, frame, edge.label)?,
                other => return Err(RuntimeError::SlotKind { slot: p, expected: "reference", found: other.kind() }),
            }
        }
        let v = self.resolve(edge);
        match self.slot_index(v, slot)? {
            Slot::Int(x) => Ok(Some(x)),
            other => Err(RuntimeError::SlotKind { slot, expected: "scalar", found: other.kind() }),
        }
    }

    /// Reads the scalar `value_slot` of every object along the chain formed
    /// by `next_slot`, read-only.
    pub fn walk_ints(&self, h: Handle, next_slot: usize, value_slot: usize) -> Result<Vec<i64>, RuntimeError> {
        let mut out = Vec::new();
        let mut edge = Some(self.handle_edge(h)?);
        while let Some(e) = edge {
            let v = self.resolve(e);
            let frame = self.obj(v).label;
            match self.slot_index(v, value_slot)? {
                Slot::Int(x) => out.push(x),
                other => return Err(RuntimeError::SlotKind { slot: value_slot, expected: "scalar", found: other.kind() }),
            }
            edge = match self.slot_index(v, next_slot)? {
                Slot::Ref(None) => None,
                Slot::Ref(Some(d)) => Some(self.view_edge(d, frame, e.label)?),
                other => return Err(RuntimeError::SlotKind { slot: next_slot, expected: "reference", found: other.kind() }),
            };
        }
        Ok(out)
    }

    /// Reads the scalar `value_slot` of every object reachable from `h`
    /// through `ref_slots`, in preorder, read-only.
    pub fn preorder_ints(&self, h: Handle, ref_slots: &[usize], value_slot: usize) -> Result<Vec<i64>, RuntimeError> {
        let mut out = Vec::new();
        let mut stack = vec![self.handle_edge(h)?];
        while let Some(e) = stack.pop() {
            let v = self.resolve(e);
            let frame = self.obj(v).label;
            match self.slot_index(v, value_slot)? {
                Slot::Int(x) => out.push(x),
                other => return Err(RuntimeError::SlotKind { slot: value_slot, expected: "scalar", found: other.kind() }),
            }
            for &slot in ref_slots.iter().rev() {
                match self.slot_index(v, slot)? {
                    Slot::Ref(None) => {}
                    Slot::Ref(Some(d)) => stack.push(self.view_edge(d, frame, e.label)?),
                    other => return Err(RuntimeError::SlotKind { slot, expected: "reference", found: other.kind() }),
                }
            }
        }
        Ok(out)
    }

    /// Freezes everything reachable from `h`.
    pub fn freeze(&mut self, h: Handle) -> Result<(), RuntimeError> {
        self.handle_edge(h)?;
        if !self.lazy() {
            return Ok(());
        }
        let v = self.pull_at(Loc::Handle(h));
        self.freeze_from(v);
        Ok(())
    }

    /// Completes every pending lazy copy reachable from `h`: afterwards each
    /// stored reference in the reachable graph targets an unfrozen object
    /// created under the reference's own label.
    pub fn finish(&mut self, h: Handle) -> Result<(), RuntimeError> {
        self.handle_edge(h)?;
        self.stats.finishes += 1;
        if !self.lazy() {
            return Ok(());
        }
        let budget = self.config.finish_budget;
        let mut visited = FnvHashSet::default();
        let mut stack = vec![Loc::Handle(h)];
        let mut steps = 0usize;
        while let Some(loc) = stack.pop() {
            steps += 1;
            if steps > budget {
                return Err(RuntimeError::FinishBudget(budget));
            }
            let v = self.get_at(loc)?;
            if !visited.insert(v) {
                continue;
            }
            for (i, s) in self.obj(v).slots.iter().enumerate().rev() {
                if let Slot::Ref(Some(_)) = s {
                    stack.push(Loc::Slot(v, i));
                }
            }
        }
        Ok(())
    }

    /// True if every stored reference reachable from `h` targets an object
    /// created under that reference's label.
    pub fn is_finished(&self, h: Handle) -> Result<bool, RuntimeError> {
        let mut seen = FnvHashSet::default();
        let mut stack = vec![self.handle_edge(h)?];
        while let Some(e) = stack.pop() {
            let o = self.obj(e.target);
            if o.label != e.label || o.frozen {
                return Ok(false);
            }
            if !seen.insert(e.target) {
                continue;
            }
            for s in &o.slots {
                if let Slot::Ref(Some(d)) = s {
                    stack.push(*d);
                }
            }
        }
        Ok(true)
    }
}
