use super::*;

fn node(v: i64, next: Option<&str>) -> Vec<(&'static str, ModelInit)> {
    let next = match next {
        Some(n) => ModelInit::Var(n.to_string()),
        None => ModelInit::Null,
    };
    vec![("value", ModelInit::Int(v)), ("next", next)]
}

/// x1 -> y1 -> z1 in the root context.
fn list3() -> ModelGraph {
    let mut h = ModelGraph::new_h();
    h.new_object("z1", ROOT_LABEL, &node(3, None)).unwrap();
    h.new_object("y1", ROOT_LABEL, &node(2, Some("z1"))).unwrap();
    h.new_object("x1", ROOT_LABEL, &node(1, Some("y1"))).unwrap();
    h
}

fn read(g: &ModelGraph, path: &[&str]) -> Option<i64> {
    g.observable_read(path, "value").unwrap()
}

#[test]
fn deep_copy_adds_label_and_edge_only() {
    let mut h = list3();
    let (nv, ne) = (h.vertices.len(), h.edges.len());
    let l = h.deep_copy("x1", "x2").unwrap();
    assert_eq!(l, 2);
    assert_eq!(h.vertices.len(), nv);
    assert_eq!(h.edges.len(), ne + 1);
    assert!(h.vertices.values().filter(|v| v.id != h.root).all(|v| v.frozen));
    h.check().unwrap();
}

#[test]
fn pull_on_memo_miss_changes_nothing() {
    let mut h = list3();
    let before = h.clone();
    let e = h.var_edge("x1").unwrap().unwrap();
    h.pull(e).unwrap();
    assert_eq!(h, before);
}

#[test]
fn table1_script_on_the_model() {
    let mut h = list3();
    h.deep_copy("x1", "x2").unwrap();
    assert_eq!(h.read_int("x2", "value").unwrap(), 1);
    h.write_int("x2", "value", 1).unwrap();
    h.read_ref("x2", "next", "y2").unwrap();
    h.read_ref("y2", "next", "z2").unwrap();
    h.write_int("z2", "value", 3).unwrap();
    let user = h.vertices.len() - 1;
    assert_eq!(user, 6);
    let labels: BTreeSet<LId> = h.vertices.values().map(|v| v.label).collect();
    assert_eq!(labels, BTreeSet::from([1, 2]));
    h.check().unwrap();
}

#[test]
fn table2_reads_one() {
    let mut h = ModelGraph::new_h();
    h.new_object("x1", ROOT_LABEL, &node(1, None)).unwrap();
    h.deep_copy("x1", "x2").unwrap();
    h.write_int("x2", "value", 2).unwrap();
    h.assign("x2", "next", Some("x1")).unwrap();
    h.deep_copy("x2", "x3").unwrap();
    h.write_int("x3", "value", 3).unwrap();
    h.read_ref("x3", "next", "y3").unwrap();
    assert_eq!(h.read_int("y3", "value").unwrap(), 1);
    assert_eq!(read(&h, &["x3", "next"]), Some(1));
}

#[test]
fn labels_from_h_builds_label_paths() {
    let mut h = ModelGraph::new_h();
    h.new_object("a", ROOT_LABEL, &node(1, None)).unwrap();
    h.deep_copy("a", "b").unwrap();
    h.deep_copy("b", "c").unwrap();
    let g = labels_from_h(&h).unwrap();
    let e = g.var_edge("c").unwrap().unwrap();
    assert_eq!(g.edges[&e].list, vec![1, 2, 3]);
    let e = g.var_edge("a").unwrap().unwrap();
    assert_eq!(g.edges[&e].list, vec![1]);
    // Truncating to the last element recovers the single labels.
    for (id, edge) in &g.edges {
        assert_eq!(edge.list.last(), Some(&h.edges[id].single));
    }
}

#[test]
fn labels_from_h_rejects_foreign_label() {
    let mut h = ModelGraph::new_h();
    h.new_object("a", ROOT_LABEL, &node(1, None)).unwrap();
    h.deep_copy("a", "b").unwrap();
    let e = h.var_edge("a").unwrap().unwrap();
    let stray = h.new_label(Some(ROOT_LABEL));
    let v = h.edges[&e].dst;
    h.vertices.get_mut(&v).unwrap().label = stray;
    assert!(matches!(labels_from_h(&h), Err(ModelError::Contract(_))));
}

#[test]
fn expand_step_requires_nonempty_list() {
    let mut h = ModelGraph::new_h();
    h.new_object("a", ROOT_LABEL, &node(1, None)).unwrap();
    let mut g = labels_from_h(&h).unwrap();
    let e = g.var_edge("a").unwrap().unwrap();
    expand_step(&mut g, e).unwrap();
    assert!(g.edges[&e].list.is_empty());
    assert!(matches!(expand_step(&mut g, e), Err(ModelError::Contract(_))));
}

#[test]
fn expand_step_memo_hit_adds_no_vertex() {
    let mut h = list3();
    h.deep_copy("x1", "x2").unwrap();
    h.write_int("x2", "value", 10).unwrap();
    // A second variable still pointing at the original under label 2.
    let x1 = h.var_edge("x1").unwrap().unwrap();
    let orig = h.edges[&x1].dst;
    let root = h.root;
    let e = h.add_edge(root, orig, 2);
    h.vertices.get_mut(&root).unwrap().slots.push(("w".into(), Val::Edge(e)));
    let mut g = labels_from_h(&h).unwrap();
    let n = g.vertices.len();
    expand_step(&mut g, e).unwrap();
    expand_step(&mut g, e).unwrap();
    assert_eq!(g.vertices.len(), n);
    let x2 = g.var_edge("x2").unwrap().unwrap();
    assert_eq!(g.edges[&e].dst, g.edges[&x2].dst);
}

#[test]
fn restore_matches_observable_reads() {
    let mut h = list3();
    h.deep_copy("x1", "x2").unwrap();
    h.write_int("x2", "value", 10).unwrap();
    h.read_ref("x2", "next", "y2").unwrap();
    h.write_int("y2", "value", 20).unwrap();
    h.write_int("x1", "value", 100).unwrap();
    let g = labels_from_h(&h).unwrap();
    let f = restore_f(&g, 1000).unwrap();
    for var in ["x1", "x2", "y1", "y2", "z1"] {
        for depth in 0..3 {
            let mut path = vec![var];
            path.extend(std::iter::repeat_n("next", depth));
            let plain = f.read_plain(&path, "value").ok();
            assert_eq!(read(&h, &path), plain, "{path:?}");
        }
    }
    assert_eq!(read(&h, &["x2", "next", "next"]), Some(3));
    assert_eq!(read(&h, &["x1"]), Some(100));
}

#[test]
fn restore_without_labels_is_identity() {
    let h = list3();
    let g = labels_from_h(&h).unwrap();
    let f = restore_f(&g, 1000).unwrap();
    assert!(f.isomorphic(&h.strip_to_f()));
}

#[test]
fn restore_budget_is_enforced() {
    let mut h = list3();
    h.deep_copy("x1", "x2").unwrap();
    let g = labels_from_h(&h).unwrap();
    assert!(matches!(restore_f(&g, 2), Err(ModelError::Budget(2))));
}

#[test]
fn text_round_trip() {
    let mut h = list3();
    h.deep_copy("x1", "x2").unwrap();
    h.write_int("x2", "value", -4).unwrap();
    h.assign("x2", "next", Some("z1")).unwrap();
    for g in [h.clone(), labels_from_h(&h).unwrap(), h.strip_to_f()] {
        let text = g.to_string();
        let parsed: ModelGraph = text.parse().unwrap();
        assert_eq!(parsed.to_string(), text);
    }
    let mut g = labels_from_h(&h).unwrap();
    let e = g.var_edge("x2").unwrap().unwrap();
    expand_step(&mut g, e).unwrap();
    let text = g.to_string();
    assert_eq!(text.parse::<ModelGraph>().unwrap(), g);
}

#[test]
fn text_reports_bad_lines() {
    let err = "graph H\nv 0 label=1 frozen=2 slots=\n".parse::<ModelGraph>().unwrap_err();
    assert!(matches!(err, ModelError::Parse { line: 2, .. }), "{err:?}");
    assert!("v 0 label=1 frozen=0 slots=\n".parse::<ModelGraph>().is_err());
}

#[test]
fn freeze_marks_exactly_reachable() {
    let mut h = list3();
    h.new_object("other", ROOT_LABEL, &node(9, None)).unwrap();
    h.freeze_var("y1").unwrap();
    let frozen: Vec<i64> = h
        .vertices
        .values()
        .filter(|v| v.frozen)
        .filter_map(|v| match v.slot("value") {
            Some(Val::Int(x)) => Some(x),
            _ => None,
        })
        .collect();
    assert_eq!(frozen, vec![3, 2]);
}

#[test]
fn freeze_terminates_on_cycles() {
    let mut h = ModelGraph::new_h();
    h.new_object("a", ROOT_LABEL, &node(1, None)).unwrap();
    h.new_object("b", ROOT_LABEL, &node(2, Some("a"))).unwrap();
    h.assign("a", "next", Some("b")).unwrap();
    h.freeze_var("a").unwrap();
    assert_eq!(h.vertices.values().filter(|v| v.frozen).count(), 2);
}

#[test]
fn finish_leaves_every_edge_on_its_own_label() {
    let mut h = list3();
    h.deep_copy("x1", "x2").unwrap();
    h.finish_var("x2", 100).unwrap();
    let mut stack = vec![h.var_edge("x2").unwrap().unwrap()];
    while let Some(e) = stack.pop() {
        let edge = &h.edges[&e];
        assert_eq!(h.vertices[&edge.dst].label, edge.single);
        stack.extend(h.out_edges(edge.dst));
    }
}

#[test]
fn collect_drops_unreachable() {
    let mut h = list3();
    h.drop_var("x1").unwrap();
    assert_eq!(h.collect(), 1);
    h.drop_var("y1").unwrap();
    assert_eq!(h.collect(), 1);
    h.drop_var("z1").unwrap();
    assert_eq!(h.collect(), 1);
    assert_eq!(h.vertices.len(), 1);
    let mut h = list3();
    h.new_object("x1", ROOT_LABEL, &node(0, None)).unwrap();
    assert_eq!(h.collect(), 1);
    h.drop_var("y1").unwrap();
    h.drop_var("z1").unwrap();
    assert_eq!(h.collect(), 2);
}
