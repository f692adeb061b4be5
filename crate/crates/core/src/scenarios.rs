//! Scripted replays of two small list programs against the runtime, with a
//! check of the heap shape after every step.
//!
//! `table1` is the standard pattern: deep copies related as a tree, with
//! each node copied exactly once when first written. `table2` adds a
//! cross reference and is only correct with the cross-reference guard on.

use std::fmt;
use std::time::{Duration, Instant};

use crate::error::RuntimeError;
use crate::runtime::{Config, Handle, Heap, Init, Mode, SlotInfo};

const VALUE: usize = 0;
const NEXT: usize = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub row: usize,
    pub what: String,
    pub expected: String,
    pub observed: String,
}

impl Check {
    pub fn ok(&self) -> bool {
        self.expected == self.observed
    }
}

#[derive(Clone, Debug)]
pub struct Row {
    pub code: Vec<&'static str>,
    pub checks: Vec<Check>,
}

#[derive(Clone, Debug)]
pub struct Transcript {
    pub name: &'static str,
    pub rows: Vec<Row>,
    /// Lines the script prints.
    pub printed: Vec<String>,
    pub elapsed: Duration,
}

impl Transcript {
    pub fn checks(&self) -> impl Iterator<Item = &Check> {
        self.rows.iter().flat_map(|r| r.checks.iter())
    }

    pub fn passed(&self) -> bool {
        self.checks().all(Check::ok)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks().filter(|c| !c.ok()).collect()
    }
}

impl fmt::Display for Transcript {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {}", self.name)?;
        for (i, row) in self.rows.iter().enumerate() {
            writeln!(f, "row {}:", i + 1)?;
            for line in &row.code {
                writeln!(f, "    {line}")?;
            }
            for c in &row.checks {
                let mark = if c.ok() { "ok  " } else { "FAIL" };
                writeln!(f, "  {mark} {}: expected {}, observed {}", c.what, c.expected, c.observed)?;
            }
        }
        for line in &self.printed {
            writeln!(f, "printed: {line}")?;
        }
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{verdict} ({} checks, {:.3} ms)", self.checks().count(), self.elapsed.as_secs_f64() * 1e3)
    }
}

struct Recorder {
    heap: Heap,
    rows: Vec<Row>,
    objects: u64,
    copies: u64,
}

impl Recorder {
    fn new(config: Config) -> Self {
        Recorder { heap: Heap::new(config), rows: Vec::new(), objects: 0, copies: 0 }
    }

    fn row(&mut self, code: &[&'static str]) {
        self.rows.push(Row { code: code.to_vec(), checks: Vec::new() });
    }

    fn check(&mut self, what: impl Into<String>, expected: impl fmt::Debug, observed: impl fmt::Debug) {
        let row = self.rows.len();
        let check = Check {
            row,
            what: what.into(),
            expected: format!("{expected:?}"),
            observed: format!("{observed:?}"),
        };
        self.rows.last_mut().expect("row opened").checks.push(check);
    }

    /// Checks vertices and copies added since the previous call.
    fn delta(&mut self, new_vertices: u64, copies: u64) {
        let objects = self.heap.ledger().live_objects;
        let c = self.heap.stats().copies;
        let (dv, dc) = (objects - self.objects, c - self.copies);
        self.objects = objects;
        self.copies = c;
        self.check("new vertices", new_vertices, dv);
        self.check("copies", copies, dc);
    }

    fn memo_len(&mut self, name: &str, h: Handle, expected: usize) -> Result<(), RuntimeError> {
        let label = self.heap.label_of(h)?;
        let n = self.heap.memo_entries(label).len();
        self.check(format!("memo entries of {name}'s label"), expected, n);
        Ok(())
    }

    fn frozen(&mut self, names: &[(&str, Handle)], expected: bool) -> Result<(), RuntimeError> {
        for &(name, h) in names {
            let frozen = self.heap.handle_info(h)?.frozen;
            self.check(format!("{name} frozen"), expected, frozen);
        }
        Ok(())
    }

    /// Label of the edge stored in `h`'s `next` slot.
    fn next_label(&self, h: Handle) -> Result<Option<u64>, RuntimeError> {
        Ok(match self.heap.handle_info(h)?.slots[NEXT] {
            SlotInfo::Ref { label_uid, .. } => Some(label_uid),
            _ => None,
        })
    }

    fn finish(self, name: &'static str, printed: Vec<String>, start: Instant) -> Transcript {
        Transcript { name, rows: self.rows, printed, elapsed: start.elapsed() }
    }
}

fn node(heap: &mut Heap, value: i64, next: Option<Handle>) -> Result<Handle, RuntimeError> {
    heap.new_object(&[Init::Int(value), next.map_or(Init::Null, Init::Ref)])
}

/// Standard use: a three-node list copied once and then written end to end.
pub fn table1() -> Result<Transcript, RuntimeError> {
    let start = Instant::now();
    let mut r = Recorder::new(Config::new(Mode::Lazy));
    let root = r.heap.label_uid(r.heap.root());

    r.row(&["x1:Node;", "y1:Node;", "z1:Node;", "x1.next <- y1;", "y1.next <- z1;"]);
    let z1 = node(&mut r.heap, 3, None)?;
    let y1 = node(&mut r.heap, 2, Some(z1))?;
    let x1 = node(&mut r.heap, 1, Some(y1))?;
    r.delta(3, 0);
    let l = r.heap.label_of(x1).map(|l| r.heap.label_uid(l))?;
    r.check("label of x1", root, l);
    r.check("live labels", 1, r.heap.live_labels());

    r.row(&["x2:Node <- deep_copy(x1);"]);
    let x2 = r.heap.deep_copy(x1)?;
    r.delta(0, 0);
    r.check("live labels", 2, r.heap.live_labels());
    let l2 = r.heap.label_uid(r.heap.label_of(x2)?);
    r.check("x2 has a new label", true, l2 != root);
    r.frozen(&[("x1", x1), ("y1", y1), ("z1", z1)], true)?;
    r.memo_len("x2", x2, 0)?;

    r.row(&["value <- x2.value;"]);
    let value = r.heap.read_int(x2, VALUE)?;
    r.delta(0, 0);
    r.check("value", 1, value);
    r.memo_len("x2", x2, 0)?;

    r.row(&["x2.value <- value;"]);
    r.heap.write_int(x2, VALUE, value)?;
    r.delta(1, 1);
    r.frozen(&[("x2", x2)], false)?;
    r.memo_len("x2", x2, 1)?;
    let next = r.next_label(x2)?;
    r.check("label of x2.next", Some(l2), next);

    r.row(&["y2:Node <- x2.next;", "z2:Node <- y2.next;"]);
    let y2 = r.heap.read_ref(x2, NEXT)?.ok_or(RuntimeError::NullReference(NEXT))?;
    let z2 = r.heap.read_ref(y2, NEXT)?.ok_or(RuntimeError::NullReference(NEXT))?;
    r.delta(1, 1);
    r.frozen(&[("y2", y2)], false)?;
    r.memo_len("x2", x2, 2)?;

    r.row(&["value <- z2.value;"]);
    let value = r.heap.read_int(z2, VALUE)?;
    r.delta(0, 0);
    r.check("value", 3, value);

    r.row(&["z2.value <- value;"]);
    r.heap.write_int(z2, VALUE, value)?;
    r.delta(1, 1);
    r.memo_len("x2", x2, 3)?;
    r.check("total vertices", 6, r.heap.ledger().live_objects);
    r.check("total copies", 3, r.heap.stats().copies);
    r.check("live labels", 2, r.heap.live_labels());
    let a = r.heap.walk_ints(x1, NEXT, VALUE)?;
    let b = r.heap.walk_ints(x2, NEXT, VALUE)?;
    r.check("x1 list", vec![1, 2, 3], a);
    r.check("x2 list", vec![1, 2, 3], b);
    r.heap.check_invariants()?;

    Ok(r.finish("table1", Vec::new(), start))
}

/// A cross reference followed by a second copy. `guard` turns the
/// cross-reference handling on or off; without it the final read is wrong.
pub fn table2(guard: bool) -> Result<Transcript, RuntimeError> {
    let start = Instant::now();
    let mut r = Recorder::new(Config { cross_ref_guard: guard, ..Config::new(Mode::Lazy) });
    let root = r.heap.label_uid(r.heap.root());

    r.row(&["x1:Node;", "x1.value <- 1;"]);
    let x1 = node(&mut r.heap, 1, None)?;
    r.delta(1, 0);

    r.row(&["x2:Node <- deep_copy(x1);"]);
    let x2 = r.heap.deep_copy(x1)?;
    r.delta(0, 0);
    r.frozen(&[("x1", x1)], true)?;
    let l2 = r.heap.label_uid(r.heap.label_of(x2)?);

    r.row(&["x2.value <- 2;"]);
    r.heap.write_int(x2, VALUE, 2)?;
    r.delta(1, 1);
    r.memo_len("x2", x2, 1)?;

    r.row(&["x2.next <- x1;"]);
    r.heap.assign(x2, NEXT, Some(x1))?;
    r.delta(0, 0);
    let owner = r.heap.handle_info(x2)?.label_uid;
    r.check("label of x2's vertex", l2, owner);
    // The edge keeps x1's label, which differs from its source's label.
    let next = r.next_label(x2)?;
    r.check("label of x2.next", Some(root), next);

    r.row(&["x3:Node <- deep_copy(x2);"]);
    let x3 = r.heap.deep_copy(x2)?;
    r.delta(0, 0);
    r.frozen(&[("x2", x2)], true)?;
    let l3 = r.heap.label_uid(r.heap.label_of(x3)?);
    r.check("x3 has a new label", true, l3 != l2 && l3 != root);

    r.row(&["x3.value <- 3;", "y3:Node <- x3.next;", "print(y3.value);"]);
    r.heap.write_int(x3, VALUE, 3)?;
    let y3 = r.heap.read_ref(x3, NEXT)?.ok_or(RuntimeError::NullReference(NEXT))?;
    let printed = r.heap.read_int(y3, VALUE)?;
    r.check("y3.value", 1, printed);
    let x = r.heap.read_int(x1, VALUE)?;
    r.check("x1.value", 1, x);
    let x = r.heap.read_int(x2, VALUE)?;
    r.check("x2.value", 2, x);
    r.heap.check_invariants()?;

    Ok(r.finish(if guard { "table2" } else { "table2-unguarded" }, vec![printed.to_string()], start))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_passes_every_row() {
        let t = table1().unwrap();
        assert!(t.passed(), "{t}");
        assert_eq!(t.rows.len(), 7);
        let added: Vec<String> =
            t.checks().filter(|c| c.what == "new vertices").map(|c| c.observed.clone()).collect();
        assert_eq!(added, ["3", "0", "0", "1", "1", "0", "1"]);
    }

    #[test]
    fn table2_prints_one() {
        let t = table2(true).unwrap();
        assert!(t.passed(), "{t}");
        assert_eq!(t.printed, ["1"]);
    }

    #[test]
    fn table2_without_guard_is_flagged() {
        let t = table2(false).unwrap();
        assert!(!t.passed());
        let bad = t.failures();
        assert_eq!(bad.len(), 1, "{t}");
        assert_eq!(bad[0].what, "y3.value");
        assert_ne!(t.printed, ["1"]);
    }

    #[test]
    fn transcript_renders_verdict() {
        let t = table1().unwrap().to_string();
        assert!(t.starts_with("scenario table1"));
        assert!(t.contains("PASS"));
        let t = table2(false).unwrap().to_string();
        assert!(t.contains("FAIL y3.value"));
    }
}
