//! Small program traces over list/tree nodes, replayable on the runtime (any
//! mode), on the graph model, and on a plain eager interpreter.
//!
//! Every node has the layout `[value: int, next: ref, alt: ref]`. Programs
//! hold up to [`VARS`] variables. Each replay yields the sequence of values
//! observed by read operations; a correct lazy implementation yields exactly
//! the eager sequence.

use std::collections::{HashMap, HashSet};
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ModelError, RuntimeError};
use crate::model::{ModelGraph, ModelInit, Style, Val, ROOT_LABEL};
use crate::runtime::{Config, Handle, Heap, Init, Mode};

pub const VARS: usize = 6;
pub const VALUE: usize = 0;
pub const NEXT: usize = 1;
pub const ALT: usize = 2;
const SLOT_NAMES: [&str; 3] = ["value", "next", "alt"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Op {
    /// `dst <- Node(value, next, alt)`, created in the context of `ctx`'s
    /// label if given, else the root context.
    New { dst: usize, value: i64, next: Option<usize>, alt: Option<usize>, ctx: Option<usize> },
    DeepCopy { dst: usize, src: usize },
    Clone { dst: usize, src: usize },
    /// Observe `var.value`.
    Read { var: usize },
    /// Observe the value at the end of a path of reference slots, read-only.
    ReadPath { var: usize, path: Vec<usize> },
    Write { var: usize, value: i64 },
    /// `dst <- src.slot`.
    Load { dst: usize, src: usize, slot: usize },
    /// `dst.slot <- value` (or null).
    Store { dst: usize, slot: usize, value: Option<usize> },
    Drop { var: usize },
    Finish { var: usize },
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: &Option<usize>| v.map_or("null".to_string(), |v| format!("v{v}"));
        match self {
            Op::New { dst, value, next, alt, ctx } => {
                write!(f, "v{dst} = new({value}, {}, {})", opt(next), opt(alt))?;
                if let Some(c) = ctx {
                    write!(f, " in v{c}")?;
                }
                Ok(())
            }
            Op::DeepCopy { dst, src } => write!(f, "v{dst} = deep_copy(v{src})"),
            Op::Clone { dst, src } => write!(f, "v{dst} = v{src}"),
            Op::Read { var } => write!(f, "read v{var}.value"),
            Op::ReadPath { var, path } => {
                write!(f, "read v{var}")?;
                for s in path {
                    write!(f, ".{}", SLOT_NAMES[*s])?;
                }
                write!(f, ".value")
            }
            Op::Write { var, value } => write!(f, "v{var}.value = {value}"),
            Op::Load { dst, src, slot } => write!(f, "v{dst} = v{src}.{}", SLOT_NAMES[*slot]),
            Op::Store { dst, slot, value } => write!(f, "v{dst}.{} = {}", SLOT_NAMES[*slot], opt(value)),
            Op::Drop { var } => write!(f, "drop v{var}"),
            Op::Finish { var } => write!(f, "finish v{var}"),
        }
    }
}

pub type Observations = Vec<Option<i64>>;

pub fn format_trace(ops: &[Op]) -> String {
    ops.iter().map(|o| format!("{o}\n")).collect()
}

// -------------------------------------------------------------------------
// eager reference interpreter

#[derive(Clone, Debug)]
struct PlainNode {
    value: i64,
    refs: [Option<usize>; 2],
}

/// Direct interpretation with plain nodes and eager deep copies.
#[derive(Clone, Debug, Default)]
pub struct Plain {
    nodes: Vec<PlainNode>,
    vars: [Option<usize>; VARS],
}

impl Plain {
    pub fn new() -> Self {
        Self::default()
    }

    fn node(&self, var: usize) -> Option<usize> {
        self.vars[var]
    }

    fn follow(&self, start: usize, path: &[usize]) -> Option<usize> {
        let mut n = start;
        for &s in path {
            n = self.nodes[n].refs[s - 1]?;
        }
        Some(n)
    }

    fn reaches(&self, from: usize, to: usize) -> bool {
        let mut seen = HashSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            if n == to {
                return true;
            }
            if seen.insert(n) {
                stack.extend(self.nodes[n].refs.iter().flatten());
            }
        }
        false
    }

    fn deep_copy(&mut self, root: usize) -> usize {
        let mut map = HashMap::new();
        let mut order = Vec::new();
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            if map.contains_key(&n) {
                continue;
            }
            map.insert(n, self.nodes.len() + order.len());
            order.push(n);
            stack.extend(self.nodes[n].refs.iter().flatten());
        }
        for n in order {
            let old = self.nodes[n].clone();
            let refs = old.refs.map(|r| r.map(|r| map[&r]));
            self.nodes.push(PlainNode { value: old.value, refs });
        }
        map[&root]
    }

    /// Applies `op`, returning an observation for reads. Ops on null
    /// variables are no-ops (generated traces never contain them).
    pub fn apply(&mut self, op: &Op) -> Option<Option<i64>> {
        match op {
            Op::New { dst, value, next, alt, .. } => {
                let refs = [next.and_then(|v| self.vars[v]), alt.and_then(|v| self.vars[v])];
                self.nodes.push(PlainNode { value: *value, refs });
                self.vars[*dst] = Some(self.nodes.len() - 1);
            }
            Op::DeepCopy { dst, src } => self.vars[*dst] = self.node(*src).map(|n| self.deep_copy(n)),
            Op::Clone { dst, src } => self.vars[*dst] = self.vars[*src],
            Op::Read { var } => return Some(self.node(*var).map(|n| self.nodes[n].value)),
            Op::ReadPath { var, path } => {
                return Some(self.node(*var).and_then(|n| self.follow(n, path)).map(|n| self.nodes[n].value));
            }
            Op::Write { var, value } => {
                if let Some(n) = self.node(*var) {
                    self.nodes[n].value = *value;
                }
            }
            Op::Load { dst, src, slot } => self.vars[*dst] = self.node(*src).and_then(|n| self.nodes[n].refs[slot - 1]),
            Op::Store { dst, slot, value } => {
                if let Some(n) = self.node(*dst) {
                    self.nodes[n].refs[slot - 1] = value.and_then(|v| self.vars[v]);
                }
            }
            Op::Drop { var } => self.vars[*var] = None,
            Op::Finish { .. } => {}
        }
        None
    }

    /// Whether `dst.slot <- value` would close a cycle.
    pub fn store_makes_cycle(&self, dst: usize, value: Option<usize>) -> bool {
        match (self.node(dst), value.and_then(|v| self.node(v))) {
            (Some(owner), Some(target)) => self.reaches(target, owner),
            _ => false,
        }
    }

    pub fn is_null(&self, var: usize) -> bool {
        self.vars[var].is_none()
    }

    pub fn has_ref(&self, var: usize, slot: usize) -> bool {
        self.node(var).is_some_and(|n| self.nodes[n].refs[slot - 1].is_some())
    }
}

impl Plain {
    /// The state as an `F` graph: a frame vertex with one slot per variable
    /// and one vertex per node reachable from it.
    pub fn to_graph(&self) -> ModelGraph {
        let mut g = ModelGraph::new(Style::F);
        let mut ids = HashMap::new();
        let mut order = Vec::new();
        let mut stack: Vec<usize> = self.vars.iter().flatten().copied().collect();
        while let Some(n) = stack.pop() {
            if ids.contains_key(&n) {
                continue;
            }
            ids.insert(n, g.add_vertex(Vec::new(), ROOT_LABEL));
            order.push(n);
            stack.extend(self.nodes[n].refs.iter().flatten());
        }
        let slot = |g: &mut ModelGraph, src, name: &str, target: Option<usize>| {
            let value = match target {
                Some(t) => Val::Edge(g.add_edge(src, ids[&t], ROOT_LABEL)),
                None => Val::Null,
            };
            g.vertices.get_mut(&src).expect("vertex").slots.push((name.to_string(), value));
        };
        let root = g.root;
        for (v, target) in self.vars.iter().enumerate() {
            slot(&mut g, root, &var_name(v), *target);
        }
        for n in order {
            let src = ids[&n];
            g.vertices.get_mut(&src).expect("vertex").slots.push(("value".into(), Val::Int(self.nodes[n].value)));
            for (i, r) in self.nodes[n].refs.iter().enumerate() {
                slot(&mut g, src, SLOT_NAMES[i + 1], *r);
            }
        }
        g
    }
}

pub fn plain_state(ops: &[Op]) -> Plain {
    let mut p = Plain::new();
    for op in ops {
        p.apply(op);
    }
    p
}

pub fn run_plain(ops: &[Op]) -> Observations {
    let mut p = Plain::new();
    ops.iter().filter_map(|op| p.apply(op)).collect()
}

// -------------------------------------------------------------------------
// runtime

/// Outcome of replaying a trace on the runtime.
#[derive(Clone, Debug)]
pub struct RuntimeRun {
    pub observations: Observations,
    pub copies: u64,
    pub memo_inserts: u64,
    pub balanced: bool,
    pub canary_violations: u64,
}

pub struct RuntimeReplay {
    pub heap: Heap,
    vars: [Option<Handle>; VARS],
}

impl RuntimeReplay {
    pub fn new(config: Config) -> Self {
        RuntimeReplay { heap: Heap::new(config), vars: [None; VARS] }
    }

    pub fn var(&self, v: usize) -> Option<Handle> {
        self.vars[v]
    }

    fn set(&mut self, var: usize, h: Option<Handle>) -> Result<(), RuntimeError> {
        if let Some(old) = std::mem::replace(&mut self.vars[var], h) {
            self.heap.drop_handle(old)?;
        }
        Ok(())
    }

    pub fn apply(&mut self, op: &Op) -> Result<Option<Option<i64>>, RuntimeError> {
        let heap = &mut self.heap;
        match op {
            Op::New { dst, value, next, alt, ctx } => {
                let init = |v: &Option<usize>| v.and_then(|v| self.vars[v]).map_or(Init::Null, Init::Ref);
                let slots = [Init::Int(*value), init(next), init(alt)];
                let ctx = match ctx.and_then(|c| self.vars[c]) {
                    Some(h) => Some(heap.label_of(h)?),
                    None => None,
                };
                if let Some(l) = ctx {
                    heap.context_enter(l);
                }
                let h = heap.new_object(&slots);
                if ctx.is_some() {
                    heap.context_exit()?;
                }
                self.set(*dst, Some(h?))?;
            }
            Op::DeepCopy { dst, src } => {
                let h = match self.vars[*src] {
                    Some(s) => Some(heap.deep_copy(s)?),
                    None => None,
                };
                self.set(*dst, h)?;
            }
            Op::Clone { dst, src } => {
                let h = match self.vars[*src] {
                    Some(s) => Some(heap.clone_handle(s)?),
                    None => None,
                };
                self.set(*dst, h)?;
            }
            Op::Read { var } => {
                return Ok(Some(match self.vars[*var] {
                    Some(h) => Some(heap.read_int(h, VALUE)?),
                    None => None,
                }));
            }
            Op::ReadPath { var, path } => {
                return Ok(Some(match self.vars[*var] {
                    Some(h) => heap.read_path(h, path, VALUE)?,
                    None => None,
                }));
            }
            Op::Write { var, value } => {
                if let Some(h) = self.vars[*var] {
                    heap.write_int(h, VALUE, *value)?;
                }
            }
            Op::Load { dst, src, slot } => {
                let h = match self.vars[*src] {
                    Some(s) => heap.read_ref(s, *slot)?,
                    None => None,
                };
                self.set(*dst, h)?;
            }
            Op::Store { dst, slot, value } => {
                if let Some(h) = self.vars[*dst] {
                    let v = value.and_then(|v| self.vars[v]);
                    heap.assign(h, *slot, v)?;
                }
            }
            Op::Drop { var } => self.set(*var, None)?,
            Op::Finish { var } => {
                if let Some(h) = self.vars[*var] {
                    heap.finish(h)?;
                }
            }
        }
        Ok(None)
    }

    /// Drops every variable and reports the final ledger state.
    pub fn finish_run(mut self, observations: Observations) -> Result<RuntimeRun, RuntimeError> {
        self.heap.check_invariants()?;
        for v in 0..VARS {
            self.set(v, None)?;
        }
        self.heap.release_all();
        let ledger = self.heap.ledger();
        Ok(RuntimeRun {
            observations,
            copies: self.heap.stats().copies,
            memo_inserts: self.heap.stats().memo_inserts,
            balanced: ledger.is_balanced() && self.heap.live_labels() == 1,
            canary_violations: ledger.canary_violations,
        })
    }
}

pub fn run_runtime(ops: &[Op], config: Config) -> Result<RuntimeRun, RuntimeError> {
    let mut r = RuntimeReplay::new(config);
    let mut obs = Vec::new();
    for op in ops {
        if let Some(o) = r.apply(op)? {
            obs.push(o);
        }
    }
    r.finish_run(obs)
}

// -------------------------------------------------------------------------
// graph model

fn var_name(v: usize) -> String {
    format!("v{v}")
}

pub fn run_model(ops: &[Op]) -> Result<Observations, ModelError> {
    replay_model(ops).map(|(_, obs)| obs)
}

/// Replays `ops` on an `H` model graph, returning the final graph too.
pub fn replay_model(ops: &[Op]) -> Result<(ModelGraph, Observations), ModelError> {
    let mut g = ModelGraph::new_h();
    for v in 0..VARS {
        g.drop_var(&var_name(v))?;
    }
    let mut obs = Vec::new();
    let null = |g: &ModelGraph, v: usize| g.var_edge(&var_name(v)).map(|e| e.is_none());
    for op in ops {
        match op {
            Op::New { dst, value, next, alt, ctx } => {
                let label = match ctx {
                    Some(c) if !null(&g, *c)? => g.label_of_var(&var_name(*c))?,
                    _ => ROOT_LABEL,
                };
                let r = |v: &Option<usize>| v.map_or(ModelInit::Null, |v| ModelInit::Var(var_name(v)));
                let init = [("value", ModelInit::Int(*value)), ("next", r(next)), ("alt", r(alt))];
                g.new_object(&var_name(*dst), label, &init)?;
            }
            Op::DeepCopy { dst, src } => {
                if null(&g, *src)? {
                    g.drop_var(&var_name(*dst))?;
                } else {
                    g.deep_copy(&var_name(*src), &var_name(*dst))?;
                }
            }
            Op::Clone { dst, src } => g.clone_var(&var_name(*src), &var_name(*dst))?,
            Op::Read { var } => {
                let v = if null(&g, *var)? { None } else { Some(g.read_int(&var_name(*var), "value")?) };
                obs.push(v);
            }
            Op::ReadPath { var, path } => {
                let name = var_name(*var);
                let mut p = vec![name.as_str()];
                p.extend(path.iter().map(|s| SLOT_NAMES[*s]));
                obs.push(g.observable_read(&p, "value")?);
            }
            Op::Write { var, value } => {
                if !null(&g, *var)? {
                    g.write_int(&var_name(*var), "value", *value)?;
                }
            }
            Op::Load { dst, src, slot } => {
                if null(&g, *src)? {
                    g.drop_var(&var_name(*dst))?;
                } else {
                    g.read_ref(&var_name(*src), SLOT_NAMES[*slot], &var_name(*dst))?;
                }
            }
            Op::Store { dst, slot, value } => {
                if !null(&g, *dst)? {
                    let value = value.map(var_name);
                    g.assign(&var_name(*dst), SLOT_NAMES[*slot], value.as_deref())?;
                }
            }
            Op::Drop { var } => g.drop_var(&var_name(*var))?,
            Op::Finish { var } => {
                if !null(&g, *var)? {
                    g.finish_var(&var_name(*var), 1 << 16)?;
                }
            }
        }
        g.check()?;
    }
    Ok((g, obs))
}

// -------------------------------------------------------------------------
// generation

/// Shape of generated traces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pattern {
    /// Every stored reference carries the label of the object holding it.
    Tree,
    /// Stores and creations may mix labels, producing cross references.
    Mixed,
}

/// Random trace with at most `max_ops` operations and `max_objects` node
/// creations. Stores that would close a cycle are never generated, so
/// count-based reclamation can free everything at the end.
pub fn generate(rng: &mut ChaCha8Rng, pattern: Pattern, max_ops: usize, max_objects: usize) -> Vec<Op> {
    let mut ops = Vec::new();
    let mut plain = Plain::new();
    // Labels are tracked on a lazy heap run alongside, to decide which
    // stores keep the tree pattern.
    let mut shadow = RuntimeReplay::new(Config::new(Mode::Lazy));
    let mut objects = 0;
    let len = rng.gen_range(1..=max_ops);
    let label = |s: &RuntimeReplay, v: usize| s.var(v).map(|h| s.heap.label_of(h).expect("live handle"));
    while ops.len() < len {
        let live: Vec<usize> = (0..VARS).filter(|&v| !plain.is_null(v)).collect();
        let pick = |rng: &mut ChaCha8Rng, vs: &[usize]| vs[rng.gen_range(0..vs.len())];
        let any_var = |rng: &mut ChaCha8Rng| rng.gen_range(0..VARS);
        let op = match rng.gen_range(0..100) {
            0..=19 if objects < max_objects => {
                let dst = any_var(rng);
                let ctx = if pattern == Pattern::Mixed && !live.is_empty() && rng.gen_bool(0.3) {
                    Some(pick(rng, &live))
                } else {
                    None
                };
                let ctx_label = match ctx {
                    Some(c) => label(&shadow, c),
                    None => Some(shadow.heap.root()),
                };
                let mut refs = [None, None];
                for r in refs.iter_mut() {
                    if !live.is_empty() && rng.gen_bool(0.5) {
                        let v = pick(rng, &live);
                        if pattern == Pattern::Mixed || label(&shadow, v) == ctx_label {
                            *r = Some(v);
                        }
                    }
                }
                objects += 1;
                Op::New { dst, value: rng.gen_range(0..100), next: refs[0], alt: refs[1], ctx }
            }
            _ if live.is_empty() => continue,
            0..=34 => Op::DeepCopy { dst: any_var(rng), src: pick(rng, &live) },
            35..=39 => Op::Clone { dst: any_var(rng), src: pick(rng, &live) },
            40..=49 => Op::Read { var: pick(rng, &live) },
            50..=57 => {
                let n = rng.gen_range(1..=3);
                Op::ReadPath { var: pick(rng, &live), path: (0..n).map(|_| rng.gen_range(NEXT..=ALT)).collect() }
            }
            58..=69 => Op::Write { var: pick(rng, &live), value: rng.gen_range(100..1000) },
            70..=81 => {
                let src = pick(rng, &live);
                let slot = rng.gen_range(NEXT..=ALT);
                if !plain.has_ref(src, slot) && rng.gen_bool(0.7) {
                    continue;
                }
                Op::Load { dst: any_var(rng), src, slot }
            }
            82..=93 => {
                let dst = pick(rng, &live);
                let value = if rng.gen_bool(0.85) { Some(pick(rng, &live)) } else { None };
                if plain.store_makes_cycle(dst, value) {
                    continue;
                }
                if pattern == Pattern::Tree {
                    if let Some(v) = value {
                        if label(&shadow, v) != label(&shadow, dst) {
                            continue;
                        }
                    }
                }
                Op::Store { dst, slot: rng.gen_range(NEXT..=ALT), value }
            }
            94..=97 => Op::Drop { var: pick(rng, &live) },
            _ => Op::Finish { var: pick(rng, &live) },
        };
        plain.apply(&op);
        shadow.apply(&op).expect("shadow replay");
        ops.push(op);
    }
    ops
}

/// Whether every stored reference in the final lazy state of `ops` carries
/// the label of its holder.
pub fn is_tree_pattern(ops: &[Op]) -> bool {
    let mut shadow = RuntimeReplay::new(Config::new(Mode::Lazy));
    for op in ops {
        let label = |v: usize| shadow.var(v).and_then(|h| shadow.heap.label_of(h).ok());
        let crosses = match *op {
            Op::Store { dst, value: Some(v), .. } => label(dst).is_some() && label(v).is_some() && label(dst) != label(v),
            Op::New { next, alt, ctx, .. } => {
                let holder = ctx.map_or(Some(shadow.heap.root()), label);
                [next, alt].into_iter().flatten().any(|v| label(v).is_some() && label(v) != holder)
            }
            _ => false,
        };
        if crosses {
            return false;
        }
        if shadow.apply(op).is_err() {
            return false;
        }
    }
    true
}
