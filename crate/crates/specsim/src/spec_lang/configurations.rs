//! Enumeration of disjunctive choice points in a precondition.
//!
//! A normalized precondition offers choices wherever a disjunction appears:
//! an `||` chain in the formula (including the chains produced by pushing
//! negation through a conjunction) or a `|` union chain inside an atomic
//! proposition body of the form `|E1 | ... | En| > 0`. Each such site is a
//! *fragment* with `2^n - 1` mutually exclusive alternatives (the nonempty
//! subsets of disjuncts: chosen disjuncts hold, the rest are negated). A
//! *configuration* picks one alternative per fragment; the configurations
//! form the cross product and are the units of configuration coverage.
//!
//! A *oneflip* captures the MC/DC-style pattern where an earlier time slice
//! forbids a conjunction of propositions that a later slice (under `X` or
//! `F`) requires: exactly one proposition of the group is false early and
//! flips to true later.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ast::{CardCmp, Comparator, Formula, SetExpr, Spec};
use super::normalize::normalize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FragmentKind {
    /// An `||` chain in the formula.
    Disjunction,
    /// An `||` chain whose disjuncts are all negative literals, i.e. the
    /// normal form of a negated conjunction.
    NegatedConjunction,
    /// A union chain in the body of the named atomic proposition.
    Union { ap: String },
}

/// One disjunctive choice point. `arity` is the number of disjuncts or union
/// parts; the fragment offers `2^arity - 1` alternatives, identified by the
/// nonempty subset masks `1..2^arity` with bit `i` selecting disjunct `i`
/// (leftmost = bit 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub id: usize,
    pub kind: FragmentKind,
    pub arity: usize,
}

impl Fragment {
    pub fn alternatives(&self) -> u32 {
        (1u32 << self.arity) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub id: String,
    /// Subset mask per fragment, aligned with `ConfigurationSpace::fragments`.
    pub choices: Vec<u32>,
    /// Normalized formula of this configuration; configurations are pairwise
    /// mutually exclusive.
    pub formula: Formula,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApLiteral {
    pub ap: String,
    pub positive: bool,
}

/// One MC/DC-style flip: `flipped` is false in the earlier slice and true in
/// the later one (or the reverse), with the rest of its group unchanged.
/// `strict` means the slices are adjacent frames (`X` shape); otherwise any
/// later frame qualifies (`F` shape).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OneFlip {
    pub flipped: String,
    pub earlier: Vec<ApLiteral>,
    pub later: Vec<ApLiteral>,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigurationSpace {
    pub fragments: Vec<Fragment>,
    pub configurations: Vec<Configuration>,
    /// Bodies of the derived propositions `name#i` introduced for union
    /// fragments: part `i` (1-based) of the union chain, nonempty.
    pub derived_aps: BTreeMap<String, CardCmp>,
    pub oneflips: Vec<OneFlip>,
}

impl ConfigurationSpace {
    /// Enumerate configurations and oneflips for a spec's precondition.
    pub fn build(spec: &Spec) -> ConfigurationSpace {
        let pre = normalize(&spec.precondition);
        let mut cs = enumerate_configurations(&pre, &spec.ap_table);
        cs.oneflips = enumerate_oneflips(&pre);
        cs
    }

    pub fn configuration(&self, id: &str) -> Option<&Configuration> {
        self.configurations.iter().find(|c| c.id == id)
    }
}

fn flatten_or(f: &Formula) -> Vec<&Formula> {
    match f {
        Formula::Or(a, b) => {
            let mut out = flatten_or(a);
            out.extend(flatten_or(b));
            out
        }
        other => vec![other],
    }
}

fn flatten_and(f: &Formula) -> Vec<&Formula> {
    match f {
        Formula::And(a, b) => {
            let mut out = flatten_and(a);
            out.extend(flatten_and(b));
            out
        }
        other => vec![other],
    }
}

fn flatten_union(e: &SetExpr) -> Vec<&SetExpr> {
    match e {
        SetExpr::Union(a, b) => {
            let mut out = flatten_union(a);
            out.extend(flatten_union(b));
            out
        }
        other => vec![other],
    }
}

fn is_negative_literal(f: &Formula) -> bool {
    matches!(f, Formula::Not(inner) if matches!(**inner, Formula::Ap(_)))
}

/// Union parts of an AP body that can be chosen independently: the body must
/// be a nonemptiness test `|E1 | ... | En| > 0` with at least two parts.
fn union_parts(body: &CardCmp) -> Option<Vec<&SetExpr>> {
    if body.cmp != Comparator::Gt || body.bound != 0 {
        return None;
    }
    let parts = flatten_union(&body.set);
    if parts.len() >= 2 {
        Some(parts)
    } else {
        None
    }
}

fn derived_ap_name(ap: &str, part: usize) -> String {
    format!("{ap}#{part}")
}

struct Collector<'a> {
    ap_table: &'a BTreeMap<String, CardCmp>,
    fragments: Vec<Fragment>,
    /// Disjunct lists of formula fragments, in encounter order.
    or_sites: Vec<Vec<Formula>>,
    /// Union arity per AP, in encounter order of first positive occurrence.
    union_aps: Vec<(String, usize)>,
}

impl<'a> Collector<'a> {
    /// Walk in depth-first, left-to-right order. `allow_or` is cleared inside
    /// the disjuncts of a recorded fragment and under `F`/`G`/`U`, where
    /// splitting a chain would break mutual exclusivity of the alternatives.
    fn collect(&mut self, f: &Formula, allow_or: bool) {
        match f {
            Formula::Ap(name) => {
                if self.union_aps.iter().any(|(n, _)| n == name) {
                    return;
                }
                if let Some(parts) = self.ap_table.get(name).and_then(union_parts) {
                    let arity = parts.len();
                    self.union_aps.push((name.clone(), arity));
                    self.fragments.push(Fragment {
                        id: self.fragments.len(),
                        kind: FragmentKind::Union { ap: name.clone() },
                        arity,
                    });
                }
            }
            Formula::Not(_) => {}
            Formula::Or(_, _) if allow_or => {
                let disjuncts: Vec<Formula> = flatten_or(f).into_iter().cloned().collect();
                let kind = if disjuncts.iter().all(is_negative_literal) {
                    FragmentKind::NegatedConjunction
                } else {
                    FragmentKind::Disjunction
                };
                self.fragments.push(Fragment {
                    id: self.fragments.len(),
                    kind,
                    arity: disjuncts.len(),
                });
                for d in &disjuncts {
                    self.collect(d, false);
                }
                self.or_sites.push(disjuncts);
            }
            Formula::Or(a, b) => {
                self.collect(a, false);
                self.collect(b, false);
            }
            Formula::And(a, b) => {
                self.collect(a, allow_or);
                self.collect(b, allow_or);
            }
            Formula::Next(g) | Formula::WeakNext(g) => self.collect(g, allow_or),
            Formula::Eventually(g) | Formula::Globally(g) => self.collect(g, false),
            Formula::Until(a, b) | Formula::Implies(a, b) => {
                self.collect(a, false);
                self.collect(b, false);
            }
        }
    }
}

struct Rebuilder<'a> {
    or_masks: &'a [u32],
    union_masks: &'a BTreeMap<String, (u32, usize)>,
    next_or: usize,
}

impl<'a> Rebuilder<'a> {
    fn subst_ap(&self, name: &str, positive: bool) -> Formula {
        match self.union_masks.get(name) {
            None => {
                if positive {
                    Formula::ap(name)
                } else {
                    Formula::not(Formula::ap(name))
                }
            }
            Some(&(mask, arity)) => {
                // Positive: the chosen parts are nonempty, the rest empty.
                // Negative: the whole union is empty, so every part is.
                let lits: Vec<Formula> = (0..arity)
                    .map(|i| {
                        let d = Formula::ap(&derived_ap_name(name, i + 1));
                        if positive && mask & (1 << i) != 0 {
                            d
                        } else {
                            Formula::not(d)
                        }
                    })
                    .collect();
                Formula::conj(lits)
            }
        }
    }

    fn rebuild(&mut self, f: &Formula, allow_or: bool) -> Formula {
        match f {
            Formula::Ap(name) => self.subst_ap(name, true),
            Formula::Not(inner) => match &**inner {
                Formula::Ap(name) => self.subst_ap(name, false),
                other => Formula::not(self.rebuild(other, false)),
            },
            Formula::Or(_, _) if allow_or => {
                let mask = self.or_masks[self.next_or];
                self.next_or += 1;
                let disjuncts = flatten_or(f);
                let parts: Vec<Formula> = disjuncts
                    .iter()
                    .enumerate()
                    .map(|(i, d)| {
                        if mask & (1 << i) != 0 {
                            self.rebuild(d, false)
                        } else {
                            let negated = normalize(&Formula::not((*d).clone()));
                            self.rebuild(&negated, false)
                        }
                    })
                    .collect();
                Formula::conj(parts)
            }
            Formula::Or(a, b) => Formula::or(self.rebuild(a, false), self.rebuild(b, false)),
            Formula::And(a, b) => {
                Formula::and(self.rebuild(a, allow_or), self.rebuild(b, allow_or))
            }
            Formula::Next(g) => Formula::next(self.rebuild(g, allow_or)),
            Formula::WeakNext(g) => Formula::WeakNext(Box::new(self.rebuild(g, allow_or))),
            Formula::Eventually(g) => Formula::eventually(self.rebuild(g, false)),
            Formula::Globally(g) => Formula::globally(self.rebuild(g, false)),
            Formula::Until(a, b) => {
                Formula::until(self.rebuild(a, false), self.rebuild(b, false))
            }
            Formula::Implies(_, _) => unreachable!("input is normalized"),
        }
    }
}

/// Enumerate all configurations of a normalized, G-free precondition.
/// Fragments are ordered by first occurrence in a depth-first, left-to-right
/// walk; configurations enumerate the cross product of alternatives with the
/// last fragment varying fastest.
pub fn enumerate_configurations(
    pre: &Formula,
    ap_table: &BTreeMap<String, CardCmp>,
) -> ConfigurationSpace {
    let mut collector = Collector {
        ap_table,
        fragments: Vec::new(),
        or_sites: Vec::new(),
        union_aps: Vec::new(),
    };
    collector.collect(pre, true);
    let fragments = collector.fragments;

    let mut derived_aps = BTreeMap::new();
    for (name, arity) in &collector.union_aps {
        let parts = union_parts(&ap_table[name]).expect("union AP recorded without parts");
        debug_assert_eq!(parts.len(), *arity);
        for (i, part) in parts.iter().enumerate() {
            derived_aps.insert(
                derived_ap_name(name, i + 1),
                CardCmp { set: (*part).clone(), cmp: Comparator::Gt, bound: 0 },
            );
        }
    }

    // Odometer over per-fragment masks, first fragment slowest.
    let mut configurations = Vec::new();
    let mut choices: Vec<u32> = vec![1; fragments.len()];
    loop {
        // Split the flat choice vector back into formula-site masks (in
        // encounter order of Or fragments) and per-AP union masks.
        let mut or_masks = Vec::new();
        let mut union_masks = BTreeMap::new();
        for (frag, &mask) in fragments.iter().zip(&choices) {
            match &frag.kind {
                FragmentKind::Union { ap } => {
                    union_masks.insert(ap.clone(), (mask, frag.arity));
                }
                _ => or_masks.push(mask),
            }
        }
        let mut rb = Rebuilder { or_masks: &or_masks, union_masks: &union_masks, next_or: 0 };
        let formula = normalize(&rb.rebuild(pre, true));
        let id = format!("c{:03}", configurations.len());
        configurations.push(Configuration { id, choices: choices.clone(), formula });

        // Advance the odometer; stop once it wraps around.
        let mut wrapped = true;
        for i in (0..fragments.len()).rev() {
            if choices[i] < fragments[i].alternatives() {
                choices[i] += 1;
                wrapped = false;
                break;
            }
            choices[i] = 1;
        }
        if wrapped {
            break;
        }
    }

    ConfigurationSpace { fragments, configurations, derived_aps, oneflips: Vec::new() }
}

fn as_literal(f: &Formula) -> Option<ApLiteral> {
    match f {
        Formula::Ap(name) => Some(ApLiteral { ap: name.clone(), positive: true }),
        Formula::Not(inner) => match &**inner {
            Formula::Ap(name) => Some(ApLiteral { ap: name.clone(), positive: false }),
            _ => None,
        },
        _ => None,
    }
}

/// Negative-literal group of a conjunct, if it is an `||` chain of at least
/// two negated propositions (the normal form of `!(A && B && ...)`).
fn negated_group(f: &Formula) -> Option<Vec<String>> {
    let disjuncts = flatten_or(f);
    if disjuncts.len() < 2 {
        return None;
    }
    disjuncts
        .into_iter()
        .map(|d| match as_literal(d) {
            Some(l) if !l.positive => Some(l.ap),
            _ => None,
        })
        .collect()
}

/// Detect the flip pattern in a normalized precondition and enumerate its
/// oneflips: for `!(A1 && ... && An) && rest && X(A1 && ... && An && rest)`,
/// one flip per group member, with the earlier slice forcing exactly that
/// member false and the rest of the group true. `F` in place of `X` drops
/// the adjacent-frame requirement. The mirrored pattern (group true early,
/// negated conjunction later) is detected symmetrically. Returns an empty
/// list when the pattern is absent.
pub fn enumerate_oneflips(pre: &Formula) -> Vec<OneFlip> {
    let conjuncts = flatten_and(pre);

    let mut plain: Vec<ApLiteral> = Vec::new();
    let mut groups: Vec<Vec<String>> = Vec::new();
    let mut temporal: Vec<(Vec<ApLiteral>, Vec<Vec<String>>, bool)> = Vec::new();

    for c in conjuncts {
        if let Some(l) = as_literal(c) {
            plain.push(l);
        } else if let Some(g) = negated_group(c) {
            groups.push(g);
        } else if let Formula::Next(body) | Formula::Eventually(body) = c {
            let strict = matches!(c, Formula::Next(_));
            let mut lits = Vec::new();
            let mut body_groups = Vec::new();
            let mut ok = true;
            for part in flatten_and(body) {
                if let Some(l) = as_literal(part) {
                    lits.push(l);
                } else if let Some(g) = negated_group(part) {
                    body_groups.push(g);
                } else {
                    ok = false;
                    break;
                }
            }
            if ok {
                temporal.push((lits, body_groups, strict));
            }
        }
    }

    let mut flips = Vec::new();

    // Group forbidden early, required later.
    for group in &groups {
        for (body_lits, _, strict) in &temporal {
            let all_positive_later = group
                .iter()
                .all(|ap| body_lits.iter().any(|l| l.positive && &l.ap == ap));
            if !all_positive_later {
                continue;
            }
            for flipped in group {
                let mut earlier: Vec<ApLiteral> = group
                    .iter()
                    .map(|ap| ApLiteral { ap: ap.clone(), positive: ap != flipped })
                    .collect();
                earlier.extend(plain.iter().cloned());
                flips.push(OneFlip {
                    flipped: flipped.clone(),
                    earlier,
                    later: body_lits.clone(),
                    strict: *strict,
                });
            }
        }
    }

    // Mirrored: group required early, forbidden later.
    for (body_lits, body_groups, strict) in &temporal {
        for group in body_groups {
            let all_positive_earlier = group
                .iter()
                .all(|ap| plain.iter().any(|l| l.positive && &l.ap == ap));
            if !all_positive_earlier {
                continue;
            }
            for flipped in group {
                let mut later: Vec<ApLiteral> = group
                    .iter()
                    .map(|ap| ApLiteral { ap: ap.clone(), positive: ap != flipped })
                    .collect();
                later.extend(body_lits.iter().cloned());
                flips.push(OneFlip {
                    flipped: flipped.clone(),
                    earlier: plain.clone(),
                    later,
                    strict: *strict,
                });
            }
        }
    }

    flips
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_lang::parser::parse_spec;
    use crate::world::RelationRegistry;

    fn phi3_like() -> Formula {
        // !(A && B && C) && !D && X(A && B && C && !D)
        let abc = Formula::conj(vec![Formula::ap("A"), Formula::ap("B"), Formula::ap("C")]);
        normalize(&Formula::conj(vec![
            Formula::not(abc.clone()),
            Formula::not(Formula::ap("D")),
            Formula::next(Formula::and(abc, Formula::not(Formula::ap("D")))),
        ]))
    }

    #[test]
    fn negated_three_conjunction_yields_seven_configurations() {
        let pre = phi3_like();
        let cs = enumerate_configurations(&pre, &BTreeMap::new());
        assert_eq!(cs.fragments.len(), 1);
        assert_eq!(cs.fragments[0].kind, FragmentKind::NegatedConjunction);
        assert_eq!(cs.fragments[0].arity, 3);
        assert_eq!(cs.configurations.len(), 7);
        // Every configuration keeps the unsplit parts of the formula.
        for c in &cs.configurations {
            assert!(c.formula.ap_names().contains(&"D"));
            let mut has_next = false;
            c.formula.walk(&mut |f| {
                if matches!(f, Formula::Next(_)) {
                    has_next = true;
                }
            });
            assert!(has_next);
        }
        // Pairwise distinct formulas.
        for (i, a) in cs.configurations.iter().enumerate() {
            for b in &cs.configurations[i + 1..] {
                assert_ne!(a.formula, b.formula);
            }
        }
    }

    #[test]
    fn phi3_like_yields_three_strict_oneflips() {
        let flips = enumerate_oneflips(&phi3_like());
        assert_eq!(flips.len(), 3);
        let flipped: Vec<&str> = flips.iter().map(|f| f.flipped.as_str()).collect();
        assert_eq!(flipped, vec!["A", "B", "C"]);
        for f in &flips {
            assert!(f.strict);
            // Earlier slice: flipped AP false, other group members true, D false.
            assert!(f.earlier.iter().any(|l| l.ap == f.flipped && !l.positive));
            assert!(f.earlier.iter().any(|l| l.ap == "D" && !l.positive));
            assert_eq!(f.earlier.len(), 4);
            assert_eq!(f.later.len(), 4);
        }
    }

    #[test]
    fn two_ap_flip_group_with_eventually_is_nonstrict() {
        let ab = Formula::and(Formula::ap("A"), Formula::ap("B"));
        let pre = normalize(&Formula::and(
            Formula::not(ab.clone()),
            Formula::eventually(ab),
        ));
        let flips = enumerate_oneflips(&pre);
        assert_eq!(flips.len(), 2);
        assert!(flips.iter().all(|f| !f.strict));
    }

    #[test]
    fn formula_without_flip_pattern_has_no_oneflips() {
        let pre = normalize(&Formula::and(Formula::ap("A"), Formula::next(Formula::ap("B"))));
        assert!(enumerate_oneflips(&pre).is_empty());
    }

    #[test]
    fn mirrored_flip_pattern_is_detected() {
        // A && B && X !(A && B): group constrained early, negated later.
        let ab = Formula::and(Formula::ap("A"), Formula::ap("B"));
        let pre = normalize(&Formula::and(ab.clone(), Formula::next(Formula::not(ab))));
        let flips = enumerate_oneflips(&pre);
        assert_eq!(flips.len(), 2);
        for f in &flips {
            assert!(f.later.iter().any(|l| l.ap == f.flipped && !l.positive));
        }
    }

    #[test]
    fn disjunction_free_formula_gives_one_configuration() {
        let pre = normalize(&Formula::and(Formula::ap("A"), Formula::next(Formula::ap("B"))));
        let cs = enumerate_configurations(&pre, &BTreeMap::new());
        assert!(cs.fragments.is_empty());
        assert_eq!(cs.configurations.len(), 1);
        assert_eq!(cs.configurations[0].formula, pre);
    }

    #[test]
    fn union_ap_body_becomes_a_fragment_with_derived_aps() {
        let registry = RelationRegistry::new();
        let src = "\
ap p := |ego.toLeftOf | ego.behind| > 0;
ap q := |ego.near| > 0;
pre: p && X q;
";
        let spec = parse_spec(src, &registry).unwrap();
        let cs = ConfigurationSpace::build(&spec);
        assert_eq!(cs.fragments.len(), 1);
        assert_eq!(cs.fragments[0].kind, FragmentKind::Union { ap: "p".into() });
        assert_eq!(cs.configurations.len(), 3);
        assert_eq!(cs.derived_aps.len(), 2);
        assert!(cs.derived_aps.contains_key("p#1"));
        assert!(cs.derived_aps.contains_key("p#2"));
        // Mask 1 = only the first part nonempty.
        let c0 = &cs.configurations[0];
        assert_eq!(c0.choices, vec![1]);
        let names = c0.formula.ap_names();
        assert!(names.contains(&"p#1") && names.contains(&"p#2"));
        assert!(!names.contains(&"p"));
    }

    #[test]
    fn negative_only_union_ap_is_not_a_fragment() {
        let registry = RelationRegistry::new();
        let src = "\
ap p := |ego.toLeftOf | ego.behind| > 0;
pre: !p && X !p;
";
        let spec = parse_spec(src, &registry).unwrap();
        let cs = ConfigurationSpace::build(&spec);
        assert!(cs.fragments.is_empty());
        assert_eq!(cs.configurations.len(), 1);
    }

    #[test]
    fn configuration_count_is_product_of_alternatives() {
        // (a || b) && !(c && d) -> 3 * 3 = 9
        let pre = normalize(&Formula::and(
            Formula::or(Formula::ap("a"), Formula::ap("b")),
            Formula::not(Formula::and(Formula::ap("c"), Formula::ap("d"))),
        ));
        let cs = enumerate_configurations(&pre, &BTreeMap::new());
        assert_eq!(cs.fragments.len(), 2);
        let product: u32 = cs.fragments.iter().map(Fragment::alternatives).product();
        assert_eq!(cs.configurations.len(), product as usize);
        // Choice vectors are unique and in odometer order.
        let ids: Vec<&str> = cs.configurations.iter().map(|c| c.id.as_str()).collect();
        assert_eq!(ids[0], "c000");
        assert_eq!(cs.configurations[0].choices, vec![1, 1]);
        assert_eq!(cs.configurations[1].choices, vec![1, 2]);
        assert_eq!(cs.configurations[3].choices, vec![2, 1]);
    }
}
