//! Line-oriented dataset text format.
//!
//! ```text
//! nodes 3 features 2 classes 2 task single
//! node 0 0.5 1.0 1
//! node 1 0.0 0.2 0
//! node 2 1.0 1.0 1
//! edge 0 1
//! mask train 0
//! mask val 1
//! mask test 2
//! ```
//!
//! For `task multi` each node line ends with `classes` 0/1 values instead of
//! a class index. Edges are read as undirected; self-loops are implicit.
//! Blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{Graph, LabeledDataset, Labels, SplitMask, TaskKind};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn bad(line: usize, detail: impl Into<String>) -> Error {
    Error::Ingestion { line, detail: detail.into() }
}

fn field<V: FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<V> {
    let tok = tok.ok_or_else(|| bad(line, format!("missing field `{name}`")))?;
    tok.parse().map_err(|_| bad(line, format!("field `{name}`: cannot parse `{tok}`")))
}

struct Header {
    nodes: usize,
    features: usize,
    classes: usize,
    task: TaskKind,
}

fn parse_header(text: &str, line: usize) -> Result<Header> {
    let toks: Vec<&str> = text.split_whitespace().collect();
    let keyword = |i: usize, kw: &str| -> Result<Option<&str>> {
        match toks.get(i) {
            Some(&t) if t == kw => Ok(toks.get(i + 1).copied()),
            other => Err(bad(line, format!("header: expected `{kw}`, found {other:?}"))),
        }
    };
    let nodes = field(keyword(0, "nodes")?, line, "nodes")?;
    let features = field(keyword(2, "features")?, line, "features")?;
    let classes: usize = field(keyword(4, "classes")?, line, "classes")?;
    let task = match keyword(6, "task")? {
        Some("single") => TaskKind::SingleLabel,
        Some("multi") => TaskKind::MultiLabel,
        other => return Err(bad(line, format!("field `task`: expected single|multi, found {other:?}"))),
    };
    if classes == 0 {
        return Err(bad(line, "field `classes` must be positive"));
    }
    Ok(Header { nodes, features, classes, task })
}

/// Parses a dataset from text; self-loops are added and degrees recomputed.
pub fn parse_citation<T: Scalar>(text: &str) -> Result<LabeledDataset<T>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, htext) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    let h = parse_header(htext, hline)?;

    let mut features: Vec<Option<Vec<T>>> = vec![None; h.nodes];
    let mut classes = vec![0usize; h.nodes];
    let mut bits = vec![T::zero(); h.nodes * h.classes];
    let mut pairs = Vec::new();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());

    for (ln, text) in lines {
        let mut it = text.split_whitespace();
        match it.next() {
            Some("node") => {
                let id: usize = field(it.next(), ln, "node id")?;
                if id >= h.nodes {
                    return Err(bad(ln, format!("node id {id} >= declared {}", h.nodes)));
                }
                let mut f = Vec::with_capacity(h.features);
                for k in 0..h.features {
                    let v: f64 = field(it.next(), ln, &format!("feature {k}"))?;
                    f.push(T::lit(v));
                }
                match h.task {
                    TaskKind::SingleLabel => {
                        let c: usize = field(it.next(), ln, "label")?;
                        if c >= h.classes {
                            return Err(bad(ln, format!("label {c} >= class count {}", h.classes)));
                        }
                        classes[id] = c;
                    }
                    TaskKind::MultiLabel => {
                        for k in 0..h.classes {
                            let b: u8 = field(it.next(), ln, &format!("label {k}"))?;
                            if b > 1 {
                                return Err(bad(ln, format!("label {k} must be 0 or 1, found {b}")));
                            }
                            bits[id * h.classes + k] = T::lit(b as f64);
                        }
                    }
                }
                if it.next().is_some() {
                    return Err(bad(ln, "trailing tokens on node line"));
                }
                if features[id].replace(f).is_some() {
                    return Err(bad(ln, format!("node {id} declared twice")));
                }
            }
            Some("edge") => {
                let s: usize = field(it.next(), ln, "edge src")?;
                let d: usize = field(it.next(), ln, "edge dst")?;
                if s >= h.nodes || d >= h.nodes {
                    return Err(bad(ln, format!("edge ({s}, {d}) references unknown node")));
                }
                pairs.push((s, d));
            }
            Some("mask") => {
                let target = match it.next() {
                    Some("train") => &mut train,
                    Some("val") => &mut val,
                    Some("test") => &mut test,
                    other => return Err(bad(ln, format!("mask kind: expected train|val|test, found {other:?}"))),
                };
                for tok in it {
                    let id: usize = field(Some(tok), ln, "mask node id")?;
                    if id >= h.nodes {
                        return Err(bad(ln, format!("mask node {id} >= declared {}", h.nodes)));
                    }
                    target.push(id);
                }
            }
            Some(other) => return Err(bad(ln, format!("unknown record `{other}`"))),
            None => {}
        }
    }

    let mut data = Vec::with_capacity(h.nodes * h.features);
    for (id, f) in features.into_iter().enumerate() {
        data.extend(f.ok_or_else(|| bad(0, format!("node {id} never declared")))?);
    }
    let feats = Tensor::new(vec![h.nodes, h.features], data)?;
    let graph = Graph::undirected(h.nodes, pairs, feats)?;
    let labels = match h.task {
        TaskKind::SingleLabel => Labels::Classes(classes),
        TaskKind::MultiLabel => Labels::Binary(Tensor::new(vec![h.nodes, h.classes], bits)?),
    };
    LabeledDataset::new(vec![graph], vec![labels], vec![SplitMask::new(train, val, test)], h.task, h.classes)
}

pub fn load_citation<T: Scalar>(path: &Path) -> Result<LabeledDataset<T>> {
    parse_citation(&std::fs::read_to_string(path)?)
}

/// Serializes a single-graph dataset. Each undirected edge is written once.
pub fn write_citation<T: Scalar>(ds: &LabeledDataset<T>) -> Result<String> {
    if ds.graphs().len() != 1 {
        return Err(Error::Parameter("text format holds exactly one graph".into()));
    }
    let g = &ds.graphs()[0];
    let mut out = String::new();
    let task = match ds.task() {
        TaskKind::SingleLabel => "single",
        TaskKind::MultiLabel => "multi",
    };
    let _ = writeln!(out, "nodes {} features {} classes {} task {task}", g.node_count(), g.feature_dim(), ds.class_count());
    for v in 0..g.node_count() {
        let _ = write!(out, "node {v}");
        for x in g.features().row(v) {
            let _ = write!(out, " {}", x.as_f64());
        }
        match &ds.labels()[0] {
            Labels::Classes(c) => {
                let _ = write!(out, " {}", c[v]);
            }
            Labels::Binary(b) => {
                for x in b.row(v) {
                    let _ = write!(out, " {}", x.as_f64() as u8);
                }
            }
        }
        out.push('\n');
    }
    for &(s, d) in g.edges() {
        if s < d || (s > d && !g.edges().contains(&(d, s))) {
            let _ = writeln!(out, "edge {s} {d}");
        }
    }
    let m = &ds.masks()[0];
    for (name, ids) in [("train", &m.train), ("val", &m.val), ("test", &m.test)] {
        let _ = write!(out, "mask {name}");
        for id in ids {
            let _ = write!(out, " {id}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_citation<T: Scalar>(ds: &LabeledDataset<T>, path: &Path) -> Result<()> {
    std::fs::write(path, write_citation(ds)?)?;
    Ok(())
}
