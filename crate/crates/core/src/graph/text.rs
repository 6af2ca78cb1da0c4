//! Line-oriented text format for linearized graphs.
//!
//! ```text
//! radiff-lcg 1
//! # vertex <id> <input|intermediate|output> <dim> <values...|->
//! # edge <src> <dst> <rows> <cols> <row-major partial...|->
//! vertex 0 input 1 0.5
//! vertex 1 output 1 1.6487212707001282
//! edge 0 1 1 1 1.6487212707001282
//! ```
//!
//! The first non-comment line is the `radiff-lcg 1` header. `#` starts a
//! comment line. Vertex lines come first in id order, then edge lines.
//! Reals are written with Rust's shortest round-trip formatting. `-` marks a
//! value or partial that has not been populated.
//!
//! Reading yields the *linearization*: every non-input vertex becomes a
//! linear vertex over its recorded partials, so the loaded graph
//! differentiates identically but re-running `forward` evaluates the
//! linear surrogate.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2};

use super::{GraphBuilder, LinearizedGraph, VertexKind};
use crate::error::{Error, Result};

const HEADER: &str = "radiff-lcg 1";

fn push_reals<'a>(line: &mut String, xs: impl Iterator<Item = &'a f64>) {
    for x in xs {
        write!(line, " {x:?}").unwrap();
    }
}

pub fn write_graph<W: Write>(graph: &LinearizedGraph, mut out: W) -> Result<()> {
    writeln!(out, "{HEADER}")?;
    writeln!(out, "# vertex <id> <kind> <dim> <values...|->")?;
    writeln!(out, "# edge <src> <dst> <rows> <cols> <row-major partial...|->")?;
    for v in graph.vertices() {
        let kind = match v.kind {
            VertexKind::Input => "input",
            VertexKind::Intermediate => "intermediate",
            VertexKind::Output => "output",
        };
        let mut line = format!("vertex {} {kind} {}", v.id, v.dim);
        match &v.value {
            Some(x) => push_reals(&mut line, x.iter()),
            None => line.push_str(" -"),
        }
        writeln!(out, "{line}")?;
    }
    for e in graph.edges() {
        let (rows, cols) = (graph.vertex(e.dst).dim, graph.vertex(e.src).dim);
        let mut line = format!("edge {} {} {rows} {cols}", e.src, e.dst);
        match &e.partial {
            Some(a) => push_reals(&mut line, a.iter()),
            None => line.push_str(" -"),
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_usize(tok: Option<&str>, line: usize, what: &str) -> Result<usize> {
    tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| parse_err(line, format!("bad {what}")))
}

fn parse_reals<'a>(toks: impl Iterator<Item = &'a str>, n: usize, line: usize) -> Result<Option<Vec<f64>>> {
    let toks: Vec<&str> = toks.collect();
    if toks == ["-"] {
        return Ok(None);
    }
    if toks.len() != n {
        return Err(parse_err(line, format!("expected {n} reals, found {}", toks.len())));
    }
    toks.iter()
        .map(|t| t.parse::<f64>().map_err(|_| parse_err(line, format!("bad real `{t}`"))))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

pub fn read_graph<R: BufRead>(input: R) -> Result<LinearizedGraph> {
    let mut b = GraphBuilder::new();
    let mut output = None;
    let mut seen_header = false;
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            if line != HEADER {
                return Err(parse_err(lineno, format!("expected header `{HEADER}`")));
            }
            seen_header = true;
            continue;
        }
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("vertex") => {
                let id = parse_usize(toks.next(), lineno, "vertex id")?;
                let kind = toks.next().ok_or_else(|| parse_err(lineno, "missing kind"))?;
                let dim = parse_usize(toks.next(), lineno, "dim")?;
                let values = parse_reals(toks, dim, lineno)?;
                let v = match kind {
                    "input" => b.input(dim),
                    "intermediate" | "output" => b.vertex(dim),
                    other => return Err(parse_err(lineno, format!("unknown vertex kind `{other}`"))),
                };
                if v != id {
                    return Err(parse_err(lineno, format!("vertex ids must be dense and ordered (got {id}, expected {v})")));
                }
                if kind == "output" {
                    output = Some(v);
                }
                if let Some(vals) = values {
                    b.set_value(v, Array1::from(vals))?;
                }
            }
            Some("edge") => {
                let src = parse_usize(toks.next(), lineno, "src")?;
                let dst = parse_usize(toks.next(), lineno, "dst")?;
                let rows = parse_usize(toks.next(), lineno, "rows")?;
                let cols = parse_usize(toks.next(), lineno, "cols")?;
                let vals = parse_reals(toks, rows * cols, lineno)?
                    .ok_or_else(|| parse_err(lineno, "edges must carry a populated partial"))?;
                let a = Array2::from_shape_vec((rows, cols), vals).expect("length checked");
                b.edge(src, dst, a).map_err(|e| parse_err(lineno, e.to_string()))?;
            }
            Some(other) => return Err(parse_err(lineno, format!("unknown record `{other}`"))),
            None => unreachable!(),
        }
    }
    if !seen_header {
        return Err(parse_err(0, "empty graph file"));
    }
    let output = output.ok_or_else(|| parse_err(0, "no output vertex"))?;
    b.build(output)
}
