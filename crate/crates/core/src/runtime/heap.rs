use std::collections::HashMap;

use super::{Config, Edge, Handle, Label, Mode, Slot, Stats};
use crate::error::RuntimeError;
use crate::ids::{LabelKey, ObjId};
use crate::memo::MemoTable;
use crate::reclaim::{CountKind, CounterBlock, Ledger, Transition};

pub(crate) type Slots = Vec<Slot>;

pub(crate) struct Object {
    pub(crate) slots: Slots,
    /// Creation label.
    pub(crate) label: LabelKey,
    pub(crate) frozen: bool,
    pub(crate) single_ref: bool,
    pub(crate) counts: CounterBlock,
    /// Number of memo entries (over all labels) whose value is this object.
    pub(crate) memo_range: u32,
}

struct ObjSlot {
    generation: u32,
    object: Option<Object>,
}

pub(crate) struct LabelData {
    pub(crate) uid: u64,
    pub(crate) memo: MemoTable,
    /// (frame label, cross-reference label) -> snapshot label, for frozen
    /// objects of an ancestor frame viewed through this label.
    pub(crate) xmap: HashMap<(LabelKey, LabelKey), LabelKey>,
    /// Live cross references stored in objects created under this label,
    /// counted per referenced label.
    pub(crate) cross_out: HashMap<LabelKey, u32>,
    pub(crate) strong: u32,
}

struct LabelSlot {
    generation: u32,
    data: Option<LabelData>,
}

enum Pending {
    Shared(ObjId),
    Memo(ObjId),
    Label(LabelKey),
}

pub struct Heap {
    pub(crate) config: Config,
    objects: Vec<ObjSlot>,
    free_objects: Vec<u32>,
    labels: Vec<LabelSlot>,
    free_labels: Vec<u32>,
    next_label_uid: u64,
    pub(crate) root_label: LabelKey,
    pub(crate) context: Vec<LabelKey>,
    pub(crate) handles: Vec<Option<Edge>>,
    free_handles: Vec<u32>,
    pub(crate) stats: Stats,
    pub(crate) ledger: Ledger,
}

/// Read-only snapshot of one object, for inspection and scenario checks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectInfo {
    pub id: ObjId,
    pub label_uid: u64,
    pub frozen: bool,
    pub single_ref: bool,
    pub shared: u32,
    pub slots: Vec<SlotInfo>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SlotInfo {
    Int(i64),
    Null,
    Ref { target: ObjId, label_uid: u64 },
}

impl Heap {
    pub fn new(config: Config) -> Self {
        let mut heap = Heap {
            config,
            objects: Vec::new(),
            free_objects: Vec::new(),
            labels: Vec::new(),
            free_labels: Vec::new(),
            next_label_uid: 1,
            root_label: LabelKey { index: 0, generation: 0 },
            context: Vec::new(),
            handles: Vec::new(),
            free_handles: Vec::new(),
            stats: Stats::default(),
            ledger: Ledger::default(),
        };
        let root = heap.new_label(MemoTable::new());
        // The root label is never released.
        heap.label_mut(root).strong = 1;
        heap.root_label = root;
        heap.context.push(root);
        heap
    }

    pub fn with_mode(mode: Mode) -> Self {
        Heap::new(Config::new(mode))
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn stats(&self) -> &Stats {
        &self.stats
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub(crate) fn sro(&self) -> bool {
        self.config.mode == Mode::LazySro
    }

    pub(crate) fn lazy(&self) -> bool {
        self.config.mode.is_lazy()
    }

    // ---------------------------------------------------------------------
    // objects

    pub(crate) fn alloc(&mut self, slots: Slots, label: LabelKey) -> ObjId {
        let object = Object {
            slots,
            label,
            frozen: false,
            single_ref: false,
            counts: CounterBlock::new(),
            memo_range: 0,
        };
        self.ledger.on_alloc();
        match self.free_objects.pop() {
            Some(index) => {
                let slot = &mut self.objects[index as usize];
                slot.object = Some(object);
                ObjId::new(index, slot.generation)
            }
            None => {
                let index = self.objects.len() as u32;
                self.objects.push(ObjSlot { generation: 0, object: Some(object) });
                ObjId::new(index, 0)
            }
        }
    }

    pub(crate) fn try_obj(&self, id: ObjId) -> Option<&Object> {
        let slot = self.objects.get(id.index as usize)?;
        if slot.generation != id.generation {
            return None;
        }
        slot.object.as_ref()
    }

    #[track_caller]
    pub(crate) fn obj(&self, id: ObjId) -> &Object {
        match self.try_obj(id) {
            Some(o) => o,
            None => panic!("canary: access to freed object {id:?}"),
        }
    }

    #[track_caller]
    pub(crate) fn obj_mut(&mut self, id: ObjId) -> &mut Object {
        let slot = &mut self.objects[id.index as usize];
        assert_eq!(slot.generation, id.generation, "canary: access to freed object {id:?}");
        slot.object.as_mut().expect("canary: access to freed object")
    }

    /// Checks that `id` names a live (not destroyed) object, recording a
    /// canary violation otherwise.
    pub(crate) fn check_live(&mut self, id: ObjId) -> Result<(), RuntimeError> {
        let ok = matches!(self.try_obj(id), Some(o) if o.counts.state() == crate::reclaim::LifeState::Live);
        if ok {
            Ok(())
        } else {
            self.ledger.canary_violations += 1;
            Err(RuntimeError::Canary(id.index))
        }
    }

    pub(crate) fn is_weak_dead(&self, id: ObjId) -> bool {
        self.try_obj(id).is_none_or(|o| o.counts.is_weak_dead())
    }

    // ---------------------------------------------------------------------
    // labels

    pub(crate) fn new_label(&mut self, memo: MemoTable) -> LabelKey {
        let data = LabelData {
            uid: self.next_label_uid,
            memo,
            xmap: HashMap::new(),
            cross_out: HashMap::new(),
            strong: 0,
        };
        self.next_label_uid += 1;
        self.ledger.labels_created += 1;
        match self.free_labels.pop() {
            Some(index) => {
                let slot = &mut self.labels[index as usize];
                slot.data = Some(data);
                LabelKey { index, generation: slot.generation }
            }
            None => {
                let index = self.labels.len() as u32;
                self.labels.push(LabelSlot { generation: 0, data: Some(data) });
                LabelKey { index, generation: 0 }
            }
        }
    }

    pub(crate) fn try_label(&self, key: LabelKey) -> Option<&LabelData> {
        let slot = self.labels.get(key.index as usize)?;
        if slot.generation != key.generation {
            return None;
        }
        slot.data.as_ref()
    }

    fn try_label_mut(&mut self, key: LabelKey) -> Option<&mut LabelData> {
        let slot = self.labels.get_mut(key.index as usize)?;
        if slot.generation != key.generation {
            return None;
        }
        slot.data.as_mut()
    }

    #[track_caller]
    pub(crate) fn label(&self, key: LabelKey) -> &LabelData {
        self.try_label(key).unwrap_or_else(|| panic!("label {key:?} is not live"))
    }

    #[track_caller]
    pub(crate) fn label_mut(&mut self, key: LabelKey) -> &mut LabelData {
        self.try_label_mut(key).unwrap_or_else(|| panic!("label {key:?} is not live"))
    }

    pub(crate) fn retain_label(&mut self, key: LabelKey) {
        self.label_mut(key).strong += 1;
    }

    pub(crate) fn release_label(&mut self, key: LabelKey) {
        self.cascade(Pending::Label(key));
    }

    pub fn label_uid(&self, label: Label) -> u64 {
        self.label(label.0).uid
    }

    pub fn root(&self) -> Label {
        Label(self.root_label)
    }

    /// Number of live labels, the root label included.
    pub fn live_labels(&self) -> usize {
        self.labels.iter().filter(|s| s.data.is_some()).count()
    }

    // ---------------------------------------------------------------------
    // counting

    pub(crate) fn retain_shared(&mut self, id: ObjId) {
        self.obj_mut(id).counts.retain(CountKind::Shared).expect("retain on dead object");
    }

    pub(crate) fn release_shared(&mut self, id: ObjId) {
        let t = self.obj_mut(id).counts.release(CountKind::Shared).expect("shared underflow");
        if t == Transition::Destroy {
            let mut work = Vec::new();
            self.destroy(id, &mut work);
            self.run_cascade(work);
        }
    }

    pub(crate) fn retain_memo(&mut self, id: ObjId) {
        self.obj_mut(id).counts.retain(CountKind::Memo).expect("memo retain on freed object");
    }

    /// Takes the counts an edge stored in an object labeled `owner` (or held
    /// by the program, for `None`) is responsible for.
    pub(crate) fn retain_edge(&mut self, edge: Edge, owner: Option<LabelKey>) {
        self.retain_shared(edge.target);
        match owner {
            None => self.retain_label(edge.label),
            Some(frame) if frame != edge.label => {
                self.retain_label(edge.label);
                if let Some(data) = self.try_label_mut(frame) {
                    *data.cross_out.entry(edge.label).or_insert(0) += 1;
                }
            }
            Some(_) => {}
        }
    }

    pub(crate) fn release_edge(&mut self, edge: Edge, owner: Option<LabelKey>) {
        self.release_edge_label(edge, owner);
        self.release_shared(edge.target);
    }

    /// Releases only the label side of an edge's counts.
    pub(crate) fn release_edge_label(&mut self, edge: Edge, owner: Option<LabelKey>) {
        match owner {
            None => self.release_label(edge.label),
            Some(frame) if frame != edge.label => {
                if let Some(data) = self.try_label_mut(frame) {
                    let n = data.cross_out.get_mut(&edge.label).expect("cross registry out of sync");
                    *n -= 1;
                    if *n == 0 {
                        data.cross_out.remove(&edge.label);
                    }
                }
                self.release_label(edge.label);
            }
            Some(_) => {}
        }
    }

    /// Releases memo entries removed from a table: memo count on the key,
    /// shared count on the value.
    pub(crate) fn release_memo_entries(&mut self, entries: Vec<(ObjId, ObjId)>) {
        self.ledger.on_memo_remove(entries.len() as u64);
        for (k, v) in entries {
            self.obj_mut(v).memo_range -= 1;
            self.cascade(Pending::Memo(k));
            self.release_shared(v);
        }
    }

    /// Runs a release and every release it triggers, iteratively.
    fn cascade(&mut self, first: Pending) {
        self.run_cascade(vec![first]);
    }

    fn run_cascade(&mut self, mut work: Vec<Pending>) {
        while let Some(p) = work.pop() {
            match p {
                Pending::Shared(id) => {
                    let t = self.obj_mut(id).counts.release(CountKind::Shared).expect("shared underflow");
                    if t == Transition::Destroy {
                        self.destroy(id, &mut work);
                    }
                }
                Pending::Memo(id) => {
                    let t = self.obj_mut(id).counts.release(CountKind::Memo).expect("memo underflow");
                    if t == Transition::Free {
                        self.free(id);
                    }
                }
                Pending::Label(key) => {
                    let data = self.label_mut(key);
                    data.strong -= 1;
                    if data.strong == 0 {
                        self.destroy_label(key, &mut work);
                    }
                }
            }
        }
    }

    fn destroy(&mut self, id: ObjId, work: &mut Vec<Pending>) {
        let obj = self.obj_mut(id);
        let slots = std::mem::take(&mut obj.slots);
        let frame = obj.label;
        // Pushed in reverse so slots are released in declaration order.
        for slot in slots.into_iter().rev() {
            if let Slot::Ref(Some(edge)) = slot {
                work.push(Pending::Shared(edge.target));
                if frame != edge.label {
                    if let Some(data) = self.try_label_mut(frame) {
                        let n = data.cross_out.get_mut(&edge.label).expect("cross registry out of sync");
                        *n -= 1;
                        if *n == 0 {
                            data.cross_out.remove(&edge.label);
                        }
                    }
                    work.push(Pending::Label(edge.label));
                }
            }
        }
        let counts = &mut self.obj_mut(id).counts;
        if counts.after_destroy().expect("weak underflow") == Transition::WeakDead
            && counts.after_weak_dead().expect("memo underflow") == Transition::Free
        {
            self.free(id);
        }
    }

    fn free(&mut self, id: ObjId) {
        let slot = &mut self.objects[id.index as usize];
        debug_assert_eq!(slot.generation, id.generation);
        slot.object = None;
        slot.generation = slot.generation.wrapping_add(1);
        self.free_objects.push(id.index);
        self.ledger.on_free();
    }

    fn destroy_label(&mut self, key: LabelKey, work: &mut Vec<Pending>) {
        let slot = &mut self.labels[key.index as usize];
        let mut data = slot.data.take().expect("label destroyed twice");
        slot.generation = slot.generation.wrapping_add(1);
        self.free_labels.push(key.index);
        self.ledger.labels_freed += 1;
        let entries = data.memo.drain();
        self.ledger.on_memo_remove(entries.len() as u64);
        for (k, v) in entries {
            self.obj_mut(v).memo_range -= 1;
            work.push(Pending::Shared(v));
            work.push(Pending::Memo(k));
        }
        for (_, snapshot) in data.xmap.drain() {
            work.push(Pending::Label(snapshot));
        }
    }

    // ---------------------------------------------------------------------
    // handles

    /// Registers a handle for `edge`. The caller must already hold the counts
    /// a program reference is responsible for.
    pub(crate) fn adopt_handle(&mut self, edge: Edge) -> Handle {
        match self.free_handles.pop() {
            Some(i) => {
                self.handles[i as usize] = Some(edge);
                Handle(i)
            }
            None => {
                self.handles.push(Some(edge));
                Handle(self.handles.len() as u32 - 1)
            }
        }
    }

    pub(crate) fn handle_edge(&self, h: Handle) -> Result<Edge, RuntimeError> {
        self.handles
            .get(h.0 as usize)
            .copied()
            .flatten()
            .ok_or(RuntimeError::UnknownHandle(h.0))
    }

    pub fn drop_handle(&mut self, h: Handle) -> Result<(), RuntimeError> {
        let edge = self.handle_edge(h)?;
        self.handles[h.0 as usize] = None;
        self.free_handles.push(h.0);
        self.release_edge(edge, None);
        Ok(())
    }

    pub fn live_handles(&self) -> Vec<Handle> {
        self.handles
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_some())
            .map(|(i, _)| Handle(i as u32))
            .collect()
    }

    /// Drops every outstanding handle, pops every context, empties the root
    /// memo and sweeps stale entries, leaving the heap as a finished program
    /// would.
    pub fn release_all(&mut self) {
        for h in self.live_handles() {
            self.drop_handle(h).expect("live handle");
        }
        while self.context.len() > 1 {
            let top = self.context.pop().expect("non-empty");
            self.release_label(top);
        }
        // The root label ends with the program: its memo goes entirely.
        let root = self.context[0];
        let entries = self.label_mut(root).memo.drain();
        self.release_memo_entries(entries);
        while self.sweep_all() > 0 {}
    }

    // ---------------------------------------------------------------------
    // inspection

    pub fn label_of(&self, h: Handle) -> Result<Label, RuntimeError> {
        Ok(Label(self.handle_edge(h)?.label))
    }

    pub fn target_of(&self, h: Handle) -> Result<ObjId, RuntimeError> {
        Ok(self.handle_edge(h)?.target)
    }

    pub fn object_info(&self, id: ObjId) -> Option<ObjectInfo> {
        let o = self.try_obj(id)?;
        let uid = |k: LabelKey| self.try_label(k).map_or(0, |d| d.uid);
        Some(ObjectInfo {
            id,
            label_uid: uid(o.label),
            frozen: o.frozen,
            single_ref: o.single_ref,
            shared: o.counts.shared(),
            slots: o
                .slots
                .iter()
                .map(|s| match *s {
                    Slot::Int(v) => SlotInfo::Int(v),
                    Slot::Ref(None) => SlotInfo::Null,
                    Slot::Ref(Some(e)) => SlotInfo::Ref { target: e.target, label_uid: uid(e.label) },
                })
                .collect(),
        })
    }

    pub fn handle_info(&self, h: Handle) -> Result<ObjectInfo, RuntimeError> {
        let e = self.handle_edge(h)?;
        self.object_info(e.target).ok_or(RuntimeError::Canary(e.target.index))
    }

    /// Memo entries of a label as (key, value) pairs.
    pub fn memo_entries(&self, label: Label) -> Vec<(ObjId, ObjId)> {
        let mut v: Vec<_> = self.label(label.0).memo.iter().collect();
        v.sort();
        v
    }

    /// Ids of all objects whose payload is still alive.
    pub fn live_object_ids(&self) -> Vec<ObjId> {
        self.objects
            .iter()
            .enumerate()
            .filter_map(|(i, s)| match &s.object {
                Some(o) if o.counts.state() == crate::reclaim::LifeState::Live => {
                    Some(ObjId::new(i as u32, s.generation))
                }
                _ => None,
            })
            .collect()
    }

    pub fn total_memo_entries(&self) -> usize {
        self.labels.iter().filter_map(|s| s.data.as_ref()).map(|d| d.memo.len()).sum()
    }

    /// Distinct objects reachable from live handles through stored references,
    /// as the program sees them (edges resolved through memos).
    pub fn reachable_objects(&self) -> usize {
        let mut objects = fnv::FnvHashSet::default();
        let mut seen = fnv::FnvHashSet::default();
        let mut stack: Vec<Edge> = self.handles.iter().flatten().copied().collect();
        while let Some(e) = stack.pop() {
            if !seen.insert(e) {
                continue;
            }
            let v = self.resolve(e);
            objects.insert(v);
            let frame = self.obj(v).label;
            for s in &self.obj(v).slots {
                if let Slot::Ref(Some(d)) = s {
                    stack.push(self.view_edge(*d, frame, e.label).expect("cross map entry"));
                }
            }
        }
        objects.len()
    }

    /// Removes memo entries whose keys are no longer referenced, across all
    /// labels. Returns the number of entries removed.
    pub fn sweep_all(&mut self) -> usize {
        let mut removed = 0;
        for i in 0..self.labels.len() {
            let Some(data) = self.labels[i].data.as_mut() else { continue };
            let mut memo = std::mem::take(&mut data.memo);
            let swept = memo.sweep(|k| self.is_weak_dead(k));
            self.labels[i].data.as_mut().expect("label").memo = memo;
            removed += swept.len();
            self.release_memo_entries(swept);
        }
        removed
    }

    /// Sweeps one label's memo.
    pub fn sweep_label(&mut self, label: Label) -> usize {
        let mut memo = std::mem::take(&mut self.label_mut(label.0).memo);
        let swept = memo.sweep(|k| self.is_weak_dead(k));
        self.label_mut(label.0).memo = memo;
        let n = swept.len();
        self.release_memo_entries(swept);
        n
    }

    /// Checks structural invariants: every memo key is frozen, every unfrozen
    /// object reached from a handle carries that handle's label, and memo
    /// range counts agree with the tables.
    pub fn check_invariants(&self) -> Result<(), RuntimeError> {
        let mut range: HashMap<ObjId, u32> = HashMap::new();
        for data in self.labels.iter().filter_map(|s| s.data.as_ref()) {
            for (k, v) in data.memo.iter() {
                let key = self.try_obj(k).ok_or_else(|| RuntimeError::Invariant(format!("memo key {k:?} freed")))?;
                if !key.frozen {
                    return Err(RuntimeError::Invariant(format!("memo key {k:?} is not frozen")));
                }
                *range.entry(v).or_default() += 1;
            }
        }
        for (i, s) in self.objects.iter().enumerate() {
            if let Some(o) = &s.object {
                let id = ObjId::new(i as u32, s.generation);
                if o.memo_range != range.get(&id).copied().unwrap_or(0) {
                    return Err(RuntimeError::Invariant(format!("memo range count of {id:?} is stale")));
                }
            }
        }
        if self.lazy() {
            for e in self.handles.iter().flatten() {
                let o = self.obj(e.target);
                if !o.frozen && o.label != e.label && !self.label(e.label).memo.contains_key(e.target) {
                    return Err(RuntimeError::Invariant(format!(
                        "unfrozen {:?} reached through a foreign label",
                        e.target
                    )));
                }
            }
        }
        Ok(())
    }
}
