//! Line-oriented text form of a model graph.
//!
//! ```text
//! graph H
//! clock 9 next 4 6 3
//! root 0
//! l 1 parent=- created=1
//! v 0 label=1 frozen=0 slots=x:->e0,y:-
//! v 1 label=1 frozen=1 slots=value:1,next:->e1
//! e 0 0 1 h=2
//! m 1 1 3 t=7
//! x 2 1 3 4
//! ```
//!
//! `G` edges add `g=` followed by dot-separated labels (empty for an empty
//! list) and, once expanded, `o=<target>:<labels>`; `F` edges carry no
//! label field. Field order is fixed, so printing a parsed graph reproduces
//! the input exactly.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use super::{Edge, LabelInfo, MemoEntry, ModelGraph, Style, Val, Vertex};
use crate::error::ModelError;

fn labels(list: &[u32]) -> String {
    list.iter().map(u32::to_string).collect::<Vec<_>>().join(".")
}

impl fmt::Display for ModelGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let style = match self.style {
            Style::F => "F",
            Style::G => "G",
            Style::H => "H",
        };
        writeln!(f, "graph {style}")?;
        writeln!(f, "clock {} next {} {} {}", self.clock, self.next_vertex, self.next_edge, self.next_label)?;
        writeln!(f, "root {}", self.root)?;
        for (id, l) in &self.labels {
            let parent = l.parent.map_or("-".to_string(), |p| p.to_string());
            writeln!(f, "l {id} parent={parent} created={}", l.created)?;
        }
        for v in self.vertices.values() {
            let mut slots = String::new();
            for (i, (name, s)) in v.slots.iter().enumerate() {
                if i > 0 {
                    slots.push(',');
                }
                match s {
                    Val::Int(x) => write!(slots, "{name}:{x}")?,
                    Val::Edge(e) => write!(slots, "{name}:->e{e}")?,
                    Val::Null => write!(slots, "{name}:-")?,
                }
            }
            writeln!(f, "v {} label={} frozen={} slots={slots}", v.id, v.label, v.frozen as u8)?;
        }
        for e in self.edges.values() {
            write!(f, "e {} {} {}", e.id, e.src, e.dst)?;
            match self.style {
                Style::F => {}
                Style::H => write!(f, " h={}", e.single)?,
                Style::G => {
                    write!(f, " h={} g={}", e.single, labels(&e.list))?;
                    if let Some((dst, list)) = &e.origin {
                        write!(f, " o={dst}:{}", labels(list))?;
                    }
                }
            }
            writeln!(f)?;
        }
        for (&(v, k), m) in &self.memo {
            writeln!(f, "m {v} {k} {} t={}", m.value, m.time)?;
        }
        for (&(viewer, frame, k), s) in &self.xmap {
            writeln!(f, "x {viewer} {frame} {k} {s}")?;
        }
        Ok(())
    }
}

struct Line<'a> {
    no: usize,
    words: std::str::SplitWhitespace<'a>,
}

impl<'a> Line<'a> {
    fn err(&self, msg: impl Into<String>) -> ModelError {
        ModelError::Parse { line: self.no, msg: msg.into() }
    }

    fn word(&mut self) -> Result<&'a str, ModelError> {
        let no = self.no;
        self.words.next().ok_or(ModelError::Parse { line: no, msg: "missing field".into() })
    }

    fn num<T: FromStr>(&mut self) -> Result<T, ModelError> {
        let w = self.word()?;
        w.parse().map_err(|_| self.err(format!("bad number `{w}`")))
    }

    fn keyed(&mut self, key: &str) -> Result<&'a str, ModelError> {
        let w = self.word()?;
        w.strip_prefix(key)
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| self.err(format!("expected `{key}=`")))
    }

    fn keyed_num<T: FromStr>(&mut self, key: &str) -> Result<T, ModelError> {
        let w = self.keyed(key)?;
        w.parse().map_err(|_| self.err(format!("bad number `{w}`")))
    }

    fn done(&mut self) -> Result<(), ModelError> {
        match self.words.next() {
            None => Ok(()),
            Some(w) => Err(self.err(format!("unexpected `{w}`"))),
        }
    }
}

fn parse_labels(line: &Line, s: &str) -> Result<Vec<u32>, ModelError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split('.').map(|x| x.parse().map_err(|_| line.err(format!("bad label `{x}`")))).collect()
}

impl FromStr for ModelGraph {
    type Err = ModelError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut g = ModelGraph::new(Style::F);
        g.labels.clear();
        g.vertices.clear();
        let mut seen_header = false;
        for (i, raw) in text.lines().enumerate() {
            let mut line = Line { no: i + 1, words: raw.split_whitespace() };
            let Some(kind) = line.words.next() else { continue };
            match kind {
                "graph" => {
                    g.style = match line.word()? {
                        "F" => Style::F,
                        "G" => Style::G,
                        "H" => Style::H,
                        other => return Err(line.err(format!("unknown style `{other}`"))),
                    };
                    seen_header = true;
                }
                "clock" => {
                    g.clock = line.num()?;
                    if line.word()? != "next" {
                        return Err(line.err("expected `next`"));
                    }
                    g.next_vertex = line.num()?;
                    g.next_edge = line.num()?;
                    g.next_label = line.num()?;
                }
                "root" => g.root = line.num()?,
                "l" => {
                    let id = line.num()?;
                    let parent = match line.keyed("parent")? {
                        "-" => None,
                        p => Some(p.parse().map_err(|_| line.err("bad parent"))?),
                    };
                    let created = line.keyed_num("created")?;
                    g.labels.insert(id, LabelInfo { parent, created });
                }
                "v" => {
                    let id = line.num()?;
                    let label = line.keyed_num("label")?;
                    let frozen = match line.keyed("frozen")? {
                        "0" => false,
                        "1" => true,
                        _ => return Err(line.err("frozen must be 0 or 1")),
                    };
                    let spec = line.keyed("slots")?;
                    let mut slots = Vec::new();
                    for part in spec.split(',').filter(|p| !p.is_empty()) {
                        let (name, val) = part.split_once(':').ok_or_else(|| line.err(format!("bad slot `{part}`")))?;
                        let val = if val == "-" {
                            Val::Null
                        } else if let Some(e) = val.strip_prefix("->e") {
                            Val::Edge(e.parse().map_err(|_| line.err(format!("bad edge `{val}`")))?)
                        } else {
                            Val::Int(val.parse().map_err(|_| line.err(format!("bad value `{val}`")))?)
                        };
                        slots.push((name.to_string(), val));
                    }
                    g.vertices.insert(id, Vertex { id, slots, label, frozen });
                }
                "e" => {
                    let id = line.num()?;
                    let src = line.num()?;
                    let dst = line.num()?;
                    let mut edge = Edge { id, src, dst, list: Vec::new(), single: super::ROOT_LABEL, origin: None };
                    match g.style {
                        Style::F => {}
                        Style::H => edge.single = line.keyed_num("h")?,
                        Style::G => {
                            edge.single = line.keyed_num("h")?;
                            let list = line.keyed("g")?;
                            edge.list = parse_labels(&line, list)?;
                            if let Some(w) = line.words.next() {
                                let o = w.strip_prefix("o=").ok_or_else(|| line.err("expected `o=`"))?;
                                let (dst, list) = o.split_once(':').ok_or_else(|| line.err("bad origin"))?;
                                let dst = dst.parse().map_err(|_| line.err("bad origin target"))?;
                                edge.origin = Some((dst, parse_labels(&line, list)?));
                            }
                        }
                    }
                    g.edges.insert(id, edge);
                }
                "m" => {
                    let v = line.num()?;
                    let k = line.num()?;
                    let value = line.num()?;
                    let time = line.keyed_num("t")?;
                    g.memo.insert((v, k), MemoEntry { value, time });
                }
                "x" => {
                    let key = (line.num()?, line.num()?, line.num()?);
                    let s = line.num()?;
                    g.xmap.insert(key, s);
                }
                other => return Err(line.err(format!("unknown record `{other}`"))),
            }
            line.done()?;
        }
        if !seen_header {
            return Err(ModelError::Parse { line: 0, msg: "missing `graph` header".into() });
        }
        g.check()?;
        Ok(g)
    }
}
