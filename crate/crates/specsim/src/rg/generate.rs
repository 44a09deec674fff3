//! Candidate enumeration and the full generation pipeline: starting from an
//! ego-only graph, each atomic proposition of a conjunction-only formula
//! refines the graph by every possible assignment of typed nodes to its
//! relation tuples, inconsistent graphs are pruned, and structural duplicates
//! are removed at the end.

use std::collections::{BTreeMap, BTreeSet};

use super::decompose::{decompose_ap, ApDecomposition, SrcRef};
use super::{canonical, RelationalGraph, RgEdge, RgNode, TemporalTag};
use crate::spec_lang::{normalize, split_disjunctions, Formula, Spec};
use crate::world::{RelationKind, RelationRegistry};

/// Maximum node count per entity type. Types not listed default to 1.
pub type NodeBudget = BTreeMap<String, u32>;

#[derive(Debug, Clone)]
pub struct RgGeneration {
    pub rgs: Vec<RelationalGraph>,
    /// The conjunction-only formulas the precondition was split into.
    pub formulas: Vec<Formula>,
    pub diagnostics: Vec<String>,
}

fn budget_of(budget: &NodeBudget, ty: &str) -> usize {
    budget.get(ty).copied().unwrap_or(1) as usize
}

fn next_node_id(g: &RelationalGraph, ty: &str) -> String {
    let prefix = ty.to_lowercase();
    let mut k = 1;
    loop {
        let id = format!("{prefix}{k}");
        if g.node(&id).is_none() {
            return id;
        }
        k += 1;
    }
}

/// Resolve a tuple's source against a concrete target node: attributes become
/// self-loops on the target; type-named sources of other relations resolve to
/// the first node of that type; `ego` to the ego node.
fn resolve_src(
    g: &RelationalGraph,
    src: &SrcRef,
    rel: &str,
    target: &str,
    registry: &RelationRegistry,
) -> Option<String> {
    match src {
        SrcRef::Ego => Some("ego".to_string()),
        SrcRef::Type(ty) => {
            let kind = registry.get(rel).map(|d| d.kind);
            if kind == Some(RelationKind::Attribute) {
                Some(target.to_string())
            } else {
                g.nodes_of_type(ty).next().map(|n| n.id.clone())
            }
        }
    }
}

/// All refinements of `g` that make a positive AP hold: add nodes of type τ
/// up to budget, enumerate every assignment of τ-node subsets to the AP's
/// tuples, keep assignments whose related-node count can satisfy the
/// cardinality bound, and drop newly added nodes that end up unconnected.
pub fn generate_candidates(
    g: &RelationalGraph,
    ap: &ApDecomposition,
    budget: &NodeBudget,
    registry: &RelationRegistry,
) -> Vec<RelationalGraph> {
    debug_assert!(!ap.negative, "negative APs are applied, not enumerated");
    let cap = budget_of(budget, &ap.tau);
    let existing: Vec<String> = g.nodes_of_type(&ap.tau).map(|n| n.id.clone()).collect();

    // Base graph with the new nodes appended.
    let mut base = g.clone();
    let mut added: Vec<String> = Vec::new();
    for _ in existing.len()..cap {
        let id = next_node_id(&base, &ap.tau);
        base.nodes.push(RgNode { id: id.clone(), entity_type: ap.tau.clone() });
        added.push(id);
    }

    if ap.tuples.is_empty() {
        // Pure existence test: keep exactly as many nodes as the bound needs.
        let need = ap.min_required();
        if existing.len() + added.len() < need {
            return Vec::new();
        }
        let keep = need.saturating_sub(existing.len());
        let mut out = g.clone();
        for id in added.iter().take(keep) {
            out.nodes.push(RgNode { id: id.clone(), entity_type: ap.tau.clone() });
        }
        return vec![out];
    }

    let domain: Vec<String> = base.nodes_of_type(&ap.tau).map(|n| n.id.clone()).collect();
    let m = ap.tuples.len();
    let subsets = 1u64 << domain.len();
    let mut out = Vec::new();

    // Odometer over (S_1, ..., S_m) in P(domain)^m, last tuple fastest.
    let mut masks = vec![0u64; m];
    loop {
        let union: u64 = masks.iter().fold(0, |acc, &s| acc | s);
        if (union.count_ones() as usize) >= ap.min_required() {
            let mut cand = base.clone();
            let mut ok = true;
            for (j, tuple) in ap.tuples.iter().enumerate() {
                for (i, v) in domain.iter().enumerate() {
                    if masks[j] & (1 << i) == 0 {
                        continue;
                    }
                    match resolve_src(&cand, &tuple.src, &tuple.rel, v, registry) {
                        Some(src) => {
                            let e = RgEdge {
                                src,
                                rel: tuple.rel.clone(),
                                tag: ap.tag,
                                dst: v.clone(),
                                negative: false,
                            };
                            if !cand.edges.contains(&e) {
                                cand.edges.push(e);
                            }
                        }
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if !ok {
                    break;
                }
            }
            if ok {
                let keep: Vec<bool> = cand
                    .nodes
                    .iter()
                    .map(|n| !(added.contains(&n.id) && cand_degree(&cand, &n.id) == 0))
                    .collect();
                let mut it = keep.iter();
                cand.nodes.retain(|_| *it.next().unwrap());
                out.push(cand);
            }
        }

        // Advance.
        let mut wrapped = true;
        for j in (0..m).rev() {
            masks[j] += 1;
            if masks[j] < subsets {
                wrapped = false;
                break;
            }
            masks[j] = 0;
        }
        if wrapped {
            break;
        }
    }
    out
}

fn cand_degree(g: &RelationalGraph, id: &str) -> usize {
    g.edges.iter().filter(|e| e.src == id || e.dst == id).count()
}

/// Apply a negative AP: forbid the relation toward every node of type τ
/// already in the graph by adding negative-polarity edges. No nodes are
/// added; with no τ nodes present the proposition is vacuously false and the
/// graph is unchanged.
fn apply_negative(
    g: &RelationalGraph,
    ap: &ApDecomposition,
    registry: &RelationRegistry,
) -> RelationalGraph {
    let mut out = g.clone();
    let targets: Vec<String> = g.nodes_of_type(&ap.tau).map(|n| n.id.clone()).collect();
    for tuple in &ap.tuples {
        for v in &targets {
            if let Some(src) = resolve_src(g, &tuple.src, &tuple.rel, v, registry) {
                let e = RgEdge {
                    src,
                    rel: tuple.rel.clone(),
                    tag: ap.tag,
                    dst: v.clone(),
                    negative: true,
                };
                if !out.edges.contains(&e) {
                    out.edges.push(e);
                }
            }
        }
    }
    out
}

/// A graph is consistent when no two positive edges at the same temporal tag
/// contradict geometrically (same or mirrored node pair, per the mutual
/// exclusion table) and no edge coexists with its opposite-polarity twin.
pub fn check_consistency(g: &RelationalGraph, registry: &RelationRegistry) -> bool {
    for (i, a) in g.edges.iter().enumerate() {
        for b in &g.edges[i + 1..] {
            if a.tag != b.tag {
                continue;
            }
            if a.src == b.src && a.dst == b.dst {
                if a.rel == b.rel && a.negative != b.negative {
                    return false;
                }
                if !a.negative && !b.negative && registry.mutually_exclusive(&a.rel, &b.rel, false)
                {
                    return false;
                }
            }
            if a.src == b.dst
                && a.dst == b.src
                && !a.negative
                && !b.negative
                && registry.mutually_exclusive(&a.rel, &b.rel, true)
            {
                return false;
            }
        }
    }
    true
}

/// A literal occurrence with its temporal tag: the first temporal operator on
/// the path from the root determines the tag, except that `U` always assigns
/// its operands `U_l`/`U_r`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct TimedLiteral {
    ap: String,
    tag: TemporalTag,
    negative: bool,
}

fn collect_literals(
    f: &Formula,
    ctx: Option<TemporalTag>,
    out: &mut Vec<TimedLiteral>,
) -> Result<(), String> {
    match f {
        Formula::Ap(name) => {
            out.push(TimedLiteral {
                ap: name.clone(),
                tag: ctx.unwrap_or(TemporalTag::I),
                negative: false,
            });
            Ok(())
        }
        Formula::Not(inner) => match &**inner {
            Formula::Ap(name) => {
                out.push(TimedLiteral {
                    ap: name.clone(),
                    tag: ctx.unwrap_or(TemporalTag::I),
                    negative: true,
                });
                Ok(())
            }
            _ => Err("negation of a non-atomic formula".into()),
        },
        Formula::And(a, b) => {
            collect_literals(a, ctx, out)?;
            collect_literals(b, ctx, out)
        }
        Formula::Next(g) | Formula::WeakNext(g) => {
            collect_literals(g, Some(ctx.unwrap_or(TemporalTag::X)), out)
        }
        Formula::Eventually(g) => collect_literals(g, Some(ctx.unwrap_or(TemporalTag::F)), out),
        Formula::Until(a, b) => {
            collect_literals(a, Some(TemporalTag::Ul), out)?;
            collect_literals(b, Some(TemporalTag::Ur), out)
        }
        Formula::Globally(_) => Err("G operator in a precondition".into()),
        Formula::Or(_, _) => Err("disjunction below a temporal operator".into()),
        Formula::Implies(_, _) => Err("implication in normalized formula".into()),
    }
}

/// Pair `U_l` edges with `U_r` edges in order of appearance.
fn pair_until_edges(g: &mut RelationalGraph) {
    let lefts: Vec<usize> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.tag == TemporalTag::Ul)
        .map(|(i, _)| i)
        .collect();
    let rights: Vec<usize> = g
        .edges
        .iter()
        .enumerate()
        .filter(|(_, e)| e.tag == TemporalTag::Ur)
        .map(|(i, _)| i)
        .collect();
    g.until_pairs = lefts.into_iter().zip(rights).collect();
}

/// Generate all structurally unique relational graphs for a spec under a
/// node budget. The precondition is normalized and split into
/// conjunction-only formulas; each is satisfied independently by folding
/// candidate generation over its APs (positive occurrences first, so that
/// negative constraints see every node they must forbid); results are merged
/// and deduplicated up to isomorphism.
pub fn generate_rgs(
    spec: &Spec,
    budget: &NodeBudget,
    registry: &RelationRegistry,
) -> RgGeneration {
    let pre = normalize(&spec.precondition);
    let formulas = split_disjunctions(&pre);
    let mut diagnostics = Vec::new();
    let mut all: Vec<RelationalGraph> = Vec::new();

    for (fi, formula) in formulas.iter().enumerate() {
        let mut literals = Vec::new();
        if let Err(msg) = collect_literals(formula, None, &mut literals) {
            diagnostics.push(format!("formula {fi}: {msg}; skipped"));
            continue;
        }
        literals.dedup();
        // Positive APs establish nodes; negatives then forbid relations on
        // every node of their type.
        let (positives, negatives): (Vec<_>, Vec<_>) =
            literals.into_iter().partition(|l| !l.negative);

        let mut decomps = Vec::new();
        let mut failed = false;
        for lit in positives.iter().chain(&negatives) {
            let body = match spec.ap_table.get(&lit.ap) {
                Some(b) => b,
                None => {
                    diagnostics.push(format!("formula {fi}: unknown proposition `{}`", lit.ap));
                    failed = true;
                    break;
                }
            };
            match decompose_ap(&lit.ap, body, lit.tag, lit.negative, registry) {
                Ok(d) => decomps.push(d),
                Err(e) => {
                    diagnostics.push(format!("formula {fi}: {e}; skipped"));
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            continue;
        }

        let mut graphs = vec![RelationalGraph::ego_only()];
        for d in &decomps {
            let mut next = Vec::new();
            for g in &graphs {
                if d.negative {
                    next.push(apply_negative(g, d, registry));
                } else {
                    next.extend(generate_candidates(g, d, budget, registry));
                }
            }
            next.retain(|g| check_consistency(g, registry));
            graphs = next;
            if graphs.is_empty() {
                break;
            }
        }

        if graphs.is_empty() {
            diagnostics.push(format!(
                "formula {fi}: not satisfiable within the given node budget"
            ));
            continue;
        }
        for mut g in graphs {
            pair_until_edges(&mut g);
            g.sources = vec![fi];
            all.push(g);
        }
    }

    let rgs = canonical::dedupe_isomorphic(all);
    RgGeneration { rgs, formulas, diagnostics }
}

/// Merge helper for dedup: union of source-formula indices.
pub(super) fn merge_sources(into: &mut RelationalGraph, from: &RelationalGraph) {
    let mut set: BTreeSet<usize> = into.sources.iter().copied().collect();
    set.extend(from.sources.iter().copied());
    into.sources = set.into_iter().collect();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_lang::parse_spec;

    fn registry() -> RelationRegistry {
        RelationRegistry::new()
    }

    fn budget(pairs: &[(&str, u32)]) -> NodeBudget {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    fn near_ap(tag: TemporalTag) -> ApDecomposition {
        let reg = registry();
        let spec = parse_spec("ap p := |ego.near & Car| > 0;\npre: p;\n", &reg).unwrap();
        decompose_ap("p", &spec.ap_table["p"], tag, false, &reg).unwrap()
    }

    #[test]
    fn single_tuple_budget_one_gives_one_candidate() {
        let g = RelationalGraph::ego_only();
        let cands =
            generate_candidates(&g, &near_ap(TemporalTag::I), &budget(&[("Car", 1)]), &registry());
        assert_eq!(cands.len(), 1);
        let c = &cands[0];
        assert_eq!(c.nodes.len(), 2);
        assert_eq!(c.edges.len(), 1);
        assert_eq!(c.edges[0].rel, "near");
        assert_eq!(c.edges[0].tag, TemporalTag::I);
    }

    #[test]
    fn single_tuple_budget_two_gives_three_candidates() {
        let g = RelationalGraph::ego_only();
        let cands =
            generate_candidates(&g, &near_ap(TemporalTag::I), &budget(&[("Car", 2)]), &registry());
        // Subsets {c1}, {c2}, {c1,c2}; the empty set cannot satisfy |·| > 0.
        assert_eq!(cands.len(), 3);
        let sizes: Vec<usize> = cands.iter().map(|c| c.edges.len()).collect();
        assert_eq!(sizes.iter().filter(|&&s| s == 1).count(), 2);
        assert_eq!(sizes.iter().filter(|&&s| s == 2).count(), 1);
        // Unconnected added nodes are dropped.
        for c in &cands {
            assert_eq!(c.nodes.len(), 1 + c.edges.len().min(2));
            for n in &c.nodes {
                assert!(n.id == "ego" || c.degree(&n.id) > 0);
            }
        }
    }

    #[test]
    fn two_tuples_over_domain_one_give_three_candidates() {
        let reg = registry();
        let spec =
            parse_spec("ap p := |ego.toLeftOf | ego.behind| > 0;\npre: p;\n", &reg).unwrap();
        let d = decompose_ap("p", &spec.ap_table["p"], TemporalTag::I, false, &reg).unwrap();
        let cands = generate_candidates(
            &RelationalGraph::ego_only(),
            &d,
            &budget(&[("Car", 1)]),
            &reg,
        );
        // (S1, S2) in {({c}, {}), ({}, {c}), ({c}, {c})}.
        assert_eq!(cands.len(), 3);
    }

    #[test]
    fn contradictory_edges_fail_consistency() {
        let reg = registry();
        let text = "\
node ego ego
node car1 Car
edge ego aheadOf@I car1
edge ego behind@I car1
";
        let g = RelationalGraph::from_text(text).unwrap();
        assert!(!check_consistency(&g, &reg));
    }

    #[test]
    fn different_tags_do_not_conflict() {
        let reg = registry();
        let text = "\
node ego ego
node car1 Car
edge ego aheadOf@I car1
edge ego behind@F car1
";
        let g = RelationalGraph::from_text(text).unwrap();
        assert!(check_consistency(&g, &reg));
    }

    #[test]
    fn mirrored_same_relation_conflicts() {
        let reg = registry();
        let text = "\
node ego ego
node car1 Car
edge ego aheadOf@I car1
edge car1 aheadOf@I ego
";
        let g = RelationalGraph::from_text(text).unwrap();
        assert!(!check_consistency(&g, &reg));
    }

    #[test]
    fn negative_edge_forbids_its_positive_twin() {
        let reg = registry();
        let text = "\
node ego ego
node car1 Car
edge ego tooClose@I car1
edge ego tooClose@I car1 neg
";
        let g = RelationalGraph::from_text(text).unwrap();
        assert!(!check_consistency(&g, &reg));
    }

    #[test]
    fn ego_only_graph_is_consistent() {
        assert!(check_consistency(&RelationalGraph::ego_only(), &registry()));
    }

    fn phi3_spec() -> Spec {
        let src = "\
ap tooClose := |ego.tooClose & Car| > 0;
ap sameLane := |ego.sameLane & Car| > 0;
ap behindVeh := |Car.aheadOf & Car| > 0;
ap leadStopped := |Car.stopped| > 0;
pre: !(tooClose && sameLane && behindVeh) && !leadStopped
     && X(tooClose && sameLane && behindVeh && !leadStopped);
";
        // behindVeh uses an ego-sourced image in the real spec; the variant
        // here exercises type-sourced resolution too.
        let src = src.replace("|Car.aheadOf & Car|", "|ego.aheadOf & Car|");
        parse_spec(&src, &RelationRegistry::new()).unwrap()
    }

    #[test]
    fn phi3_style_spec_yields_seven_rgs() {
        let spec = phi3_spec();
        let out = generate_rgs(&spec, &budget(&[("Car", 1)]), &registry());
        assert_eq!(out.formulas.len(), 7);
        assert_eq!(out.rgs.len(), 7, "diagnostics: {:?}", out.diagnostics);
        for g in &out.rgs {
            assert!(check_consistency(g, &registry()));
            assert_eq!(g.nodes.iter().filter(|n| n.entity_type == "ego").count(), 1);
        }
        // Each graph came from exactly one conjunction formula.
        let mut seen: Vec<usize> = out.rgs.iter().flat_map(|g| g.sources.clone()).collect();
        seen.sort();
        assert_eq!(seen, (0..7).collect::<Vec<_>>());
    }

    #[test]
    fn single_ap_spec_budget_one_yields_one_rg() {
        let reg = registry();
        let spec = parse_spec("ap p := |ego.near & Car| > 0;\npre: p;\n", &reg).unwrap();
        let out = generate_rgs(&spec, &budget(&[("Car", 1)]), &reg);
        assert_eq!(out.rgs.len(), 1);
        assert_eq!(out.rgs[0].nodes.len(), 2);
        assert_eq!(out.rgs[0].edges.len(), 1);
        assert!(out.diagnostics.is_empty());
    }

    #[test]
    fn budget_increase_never_loses_rgs() {
        let reg = registry();
        let spec = parse_spec(
            "ap p := |ego.near & Car| > 0;\nap q := |ego.sameLane & Car| > 0;\npre: p && q;\n",
            &reg,
        )
        .unwrap();
        let mut last = 0;
        for b in 1..=3 {
            let out = generate_rgs(&spec, &budget(&[("Car", b)]), &reg);
            assert!(out.rgs.len() >= last, "budget {b} lost graphs");
            last = out.rgs.len();
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = phi3_spec();
        let a = generate_rgs(&spec, &budget(&[("Car", 2)]), &registry());
        let b = generate_rgs(&spec, &budget(&[("Car", 2)]), &registry());
        assert_eq!(a.rgs, b.rgs);
    }
}
