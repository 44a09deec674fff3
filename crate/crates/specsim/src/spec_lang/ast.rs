//! AST for specifications: relational set expressions over scene graphs and
//! finite-trace temporal formulas over named atomic propositions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Set-valued expression over scene-graph vertices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SetExpr {
    /// The singleton set holding the ego vehicle.
    Ego,
    /// All vertices of a named entity type (e.g. `Car`, `Lane`).
    Type(String),
    /// Relational image `S.rel`: vertices reachable from members of `S` via `rel`.
    Image(Box<SetExpr>, String),
    Union(Box<SetExpr>, Box<SetExpr>),
    Intersect(Box<SetExpr>, Box<SetExpr>),
    Difference(Box<SetExpr>, Box<SetExpr>),
    SymDiff(Box<SetExpr>, Box<SetExpr>),
}

impl SetExpr {
    /// All relation names used by relational images, in DFS order.
    pub fn relations(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let SetExpr::Image(_, rel) = e {
                out.push(rel.as_str());
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a SetExpr)) {
        f(self);
        match self {
            SetExpr::Ego | SetExpr::Type(_) => {}
            SetExpr::Image(s, _) => s.walk(f),
            SetExpr::Union(a, b)
            | SetExpr::Intersect(a, b)
            | SetExpr::Difference(a, b)
            | SetExpr::SymDiff(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }
}

impl fmt::Display for SetExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SetExpr::Ego => write!(f, "ego"),
            SetExpr::Type(t) => write!(f, "{t}"),
            SetExpr::Image(s, r) => write!(f, "{s}.{r}"),
            SetExpr::Union(a, b) => write!(f, "({a} | {b})"),
            SetExpr::Intersect(a, b) => write!(f, "({a} & {b})"),
            SetExpr::Difference(a, b) => write!(f, "({a} \\ {b})"),
            SetExpr::SymDiff(a, b) => write!(f, "({a} ^ {b})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    Gt,
    Ge,
    Eq,
    Lt,
    Le,
}

impl Comparator {
    pub fn holds(&self, size: usize, bound: u32) -> bool {
        let b = bound as usize;
        match self {
            Comparator::Gt => size > b,
            Comparator::Ge => size >= b,
            Comparator::Eq => size == b,
            Comparator::Lt => size < b,
            Comparator::Le => size <= b,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
            Comparator::Eq => "=",
            Comparator::Lt => "<",
            Comparator::Le => "<=",
        };
        write!(f, "{s}")
    }
}

/// Body of an atomic proposition: a cardinality comparison over a set
/// expression, making the proposition boolean-valued.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CardCmp {
    pub set: SetExpr,
    pub cmp: Comparator,
    pub bound: u32,
}

impl fmt::Display for CardCmp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|{}| {} {}", self.set, self.cmp, self.bound)
    }
}

/// Finite-trace temporal formula over named atomic propositions.
///
/// `WeakNext` has no surface syntax; it is introduced by normalization as the
/// dual of the strong `Next` so that negation normal form preserves finite-trace
/// semantics at the final frame.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Formula {
    Ap(String),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Next(Box<Formula>),
    WeakNext(Box<Formula>),
    Eventually(Box<Formula>),
    Globally(Box<Formula>),
    Until(Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn ap(name: &str) -> Formula {
        Formula::Ap(name.to_string())
    }

    pub fn not(f: Formula) -> Formula {
        Formula::Not(Box::new(f))
    }

    pub fn and(a: Formula, b: Formula) -> Formula {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Formula {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn implies(a: Formula, b: Formula) -> Formula {
        Formula::Implies(Box::new(a), Box::new(b))
    }

    pub fn next(f: Formula) -> Formula {
        Formula::Next(Box::new(f))
    }

    pub fn eventually(f: Formula) -> Formula {
        Formula::Eventually(Box::new(f))
    }

    pub fn globally(f: Formula) -> Formula {
        Formula::Globally(Box::new(f))
    }

    pub fn until(a: Formula, b: Formula) -> Formula {
        Formula::Until(Box::new(a), Box::new(b))
    }

    /// Conjunction of a non-empty list, right-associated.
    pub fn conj(mut items: Vec<Formula>) -> Formula {
        let last = items.pop().expect("conjunction of nothing");
        items.into_iter().rev().fold(last, |acc, f| Formula::and(f, acc))
    }

    /// AP names referenced anywhere in the formula.
    pub fn ap_names(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |f| {
            if let Formula::Ap(n) = f {
                if !out.contains(&n.as_str()) {
                    out.push(n.as_str());
                }
            }
        });
        out
    }

    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a Formula)) {
        f(self);
        match self {
            Formula::Ap(_) => {}
            Formula::Not(g)
            | Formula::Next(g)
            | Formula::WeakNext(g)
            | Formula::Eventually(g)
            | Formula::Globally(g) => g.walk(f),
            Formula::And(a, b)
            | Formula::Or(a, b)
            | Formula::Implies(a, b)
            | Formula::Until(a, b) => {
                a.walk(f);
                b.walk(f);
            }
        }
    }

    pub fn contains_globally(&self) -> bool {
        let mut found = false;
        self.walk(&mut |f| {
            if matches!(f, Formula::Globally(_)) {
                found = true;
            }
        });
        found
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Ap(n) => write!(f, "{n}"),
            Formula::Not(g) => write!(f, "!{g}"),
            Formula::And(a, b) => write!(f, "({a} && {b})"),
            Formula::Or(a, b) => write!(f, "({a} || {b})"),
            Formula::Implies(a, b) => write!(f, "({a} -> {b})"),
            Formula::Next(g) => write!(f, "X {g}"),
            Formula::WeakNext(g) => write!(f, "WX {g}"),
            Formula::Eventually(g) => write!(f, "F {g}"),
            Formula::Globally(g) => write!(f, "G {g}"),
            Formula::Until(a, b) => write!(f, "({a} U {b})"),
        }
    }
}

/// A parsed specification: AP table, precondition, optional postcondition, and
/// the full formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spec {
    pub name: String,
    pub ap_table: BTreeMap<String, CardCmp>,
    pub precondition: Formula,
    pub postcondition: Option<Formula>,
    pub full: Formula,
}
