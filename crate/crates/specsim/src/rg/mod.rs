//! Relational graphs: structurally unique, time-tagged constraint graphs,
//! each a distinct way of satisfying a conjunction-only precondition under a
//! per-type node budget. An RG's nodes are the ego plus typed entities; its
//! edges carry a relation name, a temporal tag (`I` initial, `X` next frame,
//! `F` eventually, `U_l`/`U_r` the two operands of an until), and a polarity.

pub mod canonical;
pub mod decompose;
pub mod generate;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use canonical::{canonical_form, dedupe_isomorphic};
pub use decompose::{decompose_ap, ApDecomposition, ApTuple, SrcRef};
pub use generate::{
    check_consistency, generate_candidates, generate_rgs, NodeBudget, RgGeneration,
};

#[derive(Debug, Error)]
pub enum RgError {
    #[error("unsupported proposition body shape: {0}")]
    UnsupportedShape(String),
    #[error("unsupported formula shape: {0}")]
    UnsupportedFormula(String),
    #[error("unknown atomic proposition `{0}`")]
    UnknownAp(String),
    #[error("malformed relational-graph file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TemporalTag {
    I,
    X,
    F,
    Ul,
    Ur,
}

impl fmt::Display for TemporalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TemporalTag::I => "I",
            TemporalTag::X => "X",
            TemporalTag::F => "F",
            TemporalTag::Ul => "U_l",
            TemporalTag::Ur => "U_r",
        };
        write!(f, "{s}")
    }
}

impl TemporalTag {
    pub fn parse(s: &str) -> Option<TemporalTag> {
        match s {
            "I" => Some(TemporalTag::I),
            "X" => Some(TemporalTag::X),
            "F" => Some(TemporalTag::F),
            "U_l" => Some(TemporalTag::Ul),
            "U_r" => Some(TemporalTag::Ur),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RgNode {
    pub id: String,
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RgEdge {
    pub src: String,
    pub rel: String,
    pub tag: TemporalTag,
    pub dst: String,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationalGraph {
    pub nodes: Vec<RgNode>,
    pub edges: Vec<RgEdge>,
    /// Indices into `edges` pairing each `U_l` edge with its `U_r` partner.
    pub until_pairs: Vec<(usize, usize)>,
    /// Indices of the conjunction-only formulas this graph satisfies; filled
    /// by generation, merged on dedup, not part of the file format.
    #[serde(default)]
    pub sources: Vec<usize>,
}

impl RelationalGraph {
    pub fn ego_only() -> RelationalGraph {
        RelationalGraph {
            nodes: vec![RgNode { id: "ego".into(), entity_type: "ego".into() }],
            edges: Vec::new(),
            until_pairs: Vec::new(),
            sources: Vec::new(),
        }
    }

    pub fn node(&self, id: &str) -> Option<&RgNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn nodes_of_type<'a>(&'a self, ty: &'a str) -> impl Iterator<Item = &'a RgNode> {
        self.nodes.iter().filter(move |n| n.entity_type == ty)
    }

    pub fn degree(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.src == id || e.dst == id).count()
    }

    /// Line-oriented text form: `node <id> <type>`, then
    /// `edge <src> <rel>@<tag> <dst> [neg]`, then `until <e1> <e2>` with
    /// 0-based edge indices.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for n in &self.nodes {
            out.push_str(&format!("node {} {}\n", n.id, n.entity_type));
        }
        for e in &self.edges {
            out.push_str(&format!("edge {} {}@{} {}", e.src, e.rel, e.tag, e.dst));
            if e.negative {
                out.push_str(" neg");
            }
            out.push('\n');
        }
        for &(l, r) in &self.until_pairs {
            out.push_str(&format!("until {l} {r}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<RelationalGraph, RgError> {
        let mut g = RelationalGraph {
            nodes: Vec::new(),
            edges: Vec::new(),
            until_pairs: Vec::new(),
            sources: Vec::new(),
        };
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| RgError::Parse(format!("line {}: {msg}", lineno + 1));
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "node" if fields.len() == 3 => g.nodes.push(RgNode {
                    id: fields[1].to_string(),
                    entity_type: fields[2].to_string(),
                }),
                "edge" if fields.len() == 4 || fields.len() == 5 => {
                    let (rel, tag) = fields[2]
                        .split_once('@')
                        .ok_or_else(|| bad("edge label must be <rel>@<tag>"))?;
                    let tag = TemporalTag::parse(tag)
                        .ok_or_else(|| bad("unknown temporal tag"))?;
                    let negative = match fields.get(4) {
                        None => false,
                        Some(&"neg") => true,
                        Some(_) => return Err(bad("trailing token must be `neg`")),
                    };
                    g.edges.push(RgEdge {
                        src: fields[1].to_string(),
                        rel: rel.to_string(),
                        tag,
                        dst: fields[3].to_string(),
                        negative,
                    });
                }
                "until" if fields.len() == 3 => {
                    let l = fields[1].parse().map_err(|_| bad("bad edge index"))?;
                    let r = fields[2].parse().map_err(|_| bad("bad edge index"))?;
                    g.until_pairs.push((l, r));
                }
                _ => return Err(bad("expected `node`, `edge`, or `until`")),
            }
        }
        for e in &g.edges {
            if g.node(&e.src).is_none() || g.node(&e.dst).is_none() {
                return Err(RgError::Parse(format!(
                    "edge {} -> {} references an undeclared node",
                    e.src, e.dst
                )));
            }
        }
        for &(l, r) in &g.until_pairs {
            if l >= g.edges.len() || r >= g.edges.len() {
                return Err(RgError::Parse("until pair index out of range".into()));
            }
        }
        Ok(g)
    }
}
