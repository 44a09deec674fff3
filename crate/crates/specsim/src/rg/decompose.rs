//! Decomposition of an atomic proposition body into (src, rel, τ) tuples:
//! one tuple per relational-image application, plus the element type τ of the
//! set the body computes. The candidate generator enumerates which τ-typed
//! nodes each tuple relates to.

use serde::{Deserialize, Serialize};

use super::{RgError, TemporalTag};
use crate::spec_lang::{CardCmp, Comparator, SetExpr};
use crate::world::RelationRegistry;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SrcRef {
    Ego,
    /// A type name; attribute relations resolve this per target node as a
    /// self-loop, other relations to the first node of the type.
    Type(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApTuple {
    pub src: SrcRef,
    pub rel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApDecomposition {
    pub ap: String,
    /// One tuple per relational image; empty for a pure existence test like
    /// `|Car| > 0`.
    pub tuples: Vec<ApTuple>,
    /// Element type of the set the body computes.
    pub tau: String,
    pub tag: TemporalTag,
    pub negative: bool,
    pub cmp: Comparator,
    pub bound: u32,
}

impl ApDecomposition {
    /// Smallest image-set size that can satisfy the cardinality bound.
    pub fn min_required(&self) -> usize {
        match self.cmp {
            Comparator::Gt => self.bound as usize + 1,
            Comparator::Ge | Comparator::Eq => self.bound as usize,
            Comparator::Lt | Comparator::Le => 0,
        }
    }
}

fn src_ref(base: &SetExpr) -> Result<SrcRef, RgError> {
    match base {
        SetExpr::Ego => Ok(SrcRef::Ego),
        SetExpr::Type(t) => Ok(SrcRef::Type(t.clone())),
        other => Err(RgError::UnsupportedShape(format!(
            "relational image applied to a compound set `{other}`"
        ))),
    }
}

/// Decompose an AP body. `tag` comes from the AP's position under temporal
/// operators in the formula (`I` when none applies); `negative` marks a
/// negated occurrence.
pub fn decompose_ap(
    name: &str,
    body: &CardCmp,
    tag: TemporalTag,
    negative: bool,
    registry: &RelationRegistry,
) -> Result<ApDecomposition, RgError> {
    let mut tuples = Vec::new();
    let mut loose_types: Vec<&str> = Vec::new();
    let mut err = None;
    body.set.walk(&mut |e| {
        if err.is_some() {
            return;
        }
        match e {
            SetExpr::Image(base, rel) => match src_ref(base) {
                Ok(src) => tuples.push(ApTuple { src, rel: rel.clone() }),
                Err(e) => err = Some(e),
            },
            SetExpr::Type(t) => {
                // Type leaves that are image bases name the source, not the
                // element type; they are filtered out below.
                loose_types.push(t);
            }
            _ => {}
        }
    });
    if let Some(e) = err {
        return Err(e);
    }

    // Drop one occurrence of each type used as an image base, leaving the
    // leaves that constrain the element type (e.g. the `Car` in
    // `ego.aheadOf & Car`).
    for t in &tuples {
        if let SrcRef::Type(ty) = &t.src {
            if let Some(pos) = loose_types.iter().position(|x| x == ty) {
                loose_types.remove(pos);
            }
        }
    }

    let tau = if let Some(t) = loose_types.first() {
        (*t).to_string()
    } else if let Some(t) = tuples.first() {
        registry
            .get(&t.rel)
            .ok_or_else(|| RgError::UnsupportedShape(format!("unknown relation `{}`", t.rel)))?
            .target_type
            .to_string()
    } else {
        return Err(RgError::UnsupportedShape(format!(
            "body of `{name}` names no entity type and no relational image"
        )));
    };

    Ok(ApDecomposition {
        ap: name.to_string(),
        tuples,
        tau,
        tag,
        negative,
        cmp: body.cmp,
        bound: body.bound,
    })
}
