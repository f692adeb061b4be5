//! Conversions between the model styles: `H` to `G` by expanding single
//! labels into label paths, and `G` to `F` by expanding label lists one step
//! at a time.

use std::collections::BTreeSet;

use super::{EId, LId, ModelGraph, MemoEntry, Style, VId, Val};
use crate::error::ModelError;

/// Converts an `H` graph into the equivalent `G` graph.
///
/// Each edge gets the path of labels from its target's creation label down
/// to its own label. The creation label itself is kept as the first element,
/// so that copies made under that label (memo entries keyed by the target at
/// its own label) are still followed.
pub fn labels_from_h(h: &ModelGraph) -> Result<ModelGraph, ModelError> {
    if h.style != Style::H {
        return Err(ModelError::Contract("labels_from_h expects an H graph".into()));
    }
    let mut g = h.clone();
    g.style = Style::G;
    for e in g.edges.values_mut() {
        let frame = h.vertex(e.dst)?.label;
        let path = h.chain(frame, e.single).ok_or_else(|| {
            ModelError::Contract(format!(
                "edge {} has label {} which does not descend from its target's label {frame}",
                e.id, e.single
            ))
        })?;
        e.list = std::iter::once(frame).chain(path).collect();
    }
    Ok(g)
}

/// Lookup cutoff for position `i` of a label path: entries are visible only
/// if made before the next label on the path was created.
fn cutoff(g: &ModelGraph, list: &[LId], i: usize) -> u64 {
    list.get(i + 1).map_or(u64::MAX, |&next| g.created(next))
}

/// Edges with a nonempty list that can be reached from the root through
/// edges with empty lists, in increasing id order.
pub fn eligible_edges(g: &ModelGraph) -> Vec<EId> {
    let mut seen = BTreeSet::new();
    let mut out = BTreeSet::new();
    let mut stack = vec![g.root];
    while let Some(v) = stack.pop() {
        if !seen.insert(v) {
            continue;
        }
        for e in g.out_edges(v) {
            let edge = &g.edges[&e];
            if edge.list.is_empty() {
                stack.push(edge.dst);
            } else {
                out.insert(e);
            }
        }
    }
    out.into_iter().collect()
}

/// One expansion step on edge `e`, whose list must be nonempty.
///
/// With `v` the target and `k` the head of the list: a visible memo entry
/// `(v, k)` retargets the edge and keeps the head, since the copy may itself
/// have been copied again under `k`. Otherwise the head is dropped; when it
/// was the last label and `v` was not created under it, `v` is first copied
/// under it. The copy's out-edges get the labels of the path they are now
/// seen through appended, and the copy is memoized so that other edges
/// reaching `v` through the same label share it.
pub fn expand_step(g: &mut ModelGraph, e: EId) -> Result<(), ModelError> {
    let edge = g.edge(e)?.clone();
    let Some(&head) = edge.list.first() else {
        return Err(ModelError::Contract(format!("edge {e} has an empty label list")));
    };
    let v = edge.dst;
    if edge.origin.is_none() {
        g.edge_mut(e)?.origin = Some((edge.dst, edge.list.clone()));
    }
    if let Some(u) = g.memo_at(v, head, cutoff(g, &edge.list, 0)) {
        g.edge_mut(e)?.dst = u;
        return Ok(());
    }
    if edge.list.len() == 1 && g.vertex(v)?.label != head {
        let u = copy_under(g, v, head)?;
        let time = g.tick();
        g.memo.insert((v, head), MemoEntry { value: u, time });
        g.edge_mut(e)?.dst = u;
    }
    g.edge_mut(e)?.list.remove(0);
    Ok(())
}

fn copy_under(g: &mut ModelGraph, v: VId, l: LId) -> Result<VId, ModelError> {
    let src = g.vertex(v)?.clone();
    if !src.frozen {
        return Err(ModelError::Contract(format!("vertex {v} must be read-only to be copied")));
    }
    let frame = src.label;
    let u = g.add_vertex(Vec::new(), l);
    for (name, s) in src.slots {
        let value = match s {
            Val::Edge(d) => {
                let old = g.edge(d)?.clone();
                let (dst, list) = old.origin.clone().unwrap_or((old.dst, old.list.clone()));
                let base = if list.is_empty() { vec![g.vertex(dst)?.label] } else { list };
                let last = *base.last().expect("nonempty");
                let ext = if last == frame {
                    g.chain(frame, l)
                } else {
                    let snap = g.view_label(last, frame, l)?;
                    g.chain(last, snap)
                }
                .ok_or_else(|| ModelError::Contract(format!("no label path for edge {d} under {l}")))?;
                let id = g.add_edge(u, dst, l);
                let new = g.edge_mut(id)?;
                new.list = base.into_iter().chain(ext).collect();
                Val::Edge(id)
            }
            other => other,
        };
        g.vertex_mut(u)?.slots.push((name, value));
    }
    Ok(u)
}

/// Expands edges, lowest id first, until no list is left reachable from the
/// root; returns the result stripped to an `F` graph. Vertices unreachable
/// from the root are dropped.
pub fn restore_f(g: &ModelGraph, vertex_budget: usize) -> Result<ModelGraph, ModelError> {
    restore_f_with(g, vertex_budget, |eligible| eligible[0])
}

/// As [`restore_f`], with the choice among eligible edges made by `choose`.
pub fn restore_f_with(
    g: &ModelGraph,
    vertex_budget: usize,
    mut choose: impl FnMut(&[EId]) -> EId,
) -> Result<ModelGraph, ModelError> {
    if g.style != Style::G {
        return Err(ModelError::Contract("restore_f expects a G graph".into()));
    }
    let mut g = g.clone();
    loop {
        let eligible = eligible_edges(&g);
        if eligible.is_empty() {
            break;
        }
        if g.vertices.len() > vertex_budget {
            return Err(ModelError::Budget(vertex_budget));
        }
        let e = choose(&eligible);
        expand_step(&mut g, e)?;
    }
    let mut f = g.strip_to_f();
    let live = f.reachable();
    f.vertices.retain(|v, _| live.contains(v));
    f.edges.retain(|_, e| live.contains(&e.src));
    Ok(f)
}
