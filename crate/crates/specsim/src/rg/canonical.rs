//! Canonical forms and isomorphism-aware deduplication. Graphs here are tiny
//! (a handful of nodes), so canonicalization is exact: try every relabeling
//! that permutes nodes within their type groups (the ego is pinned) and keep
//! the lexicographically least serialization.

use std::collections::BTreeMap;

use super::generate::merge_sources;
use super::{RelationalGraph, RgNode};

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Apply a per-type-group permutation, producing a fully relabeled graph with
/// nodes in (ego, type, index) order and edges sorted.
fn relabel(
    g: &RelationalGraph,
    groups: &BTreeMap<&str, Vec<&str>>,
    perms: &BTreeMap<&str, &Vec<usize>>,
) -> RelationalGraph {
    let mut mapping: BTreeMap<&str, String> = BTreeMap::new();
    mapping.insert("ego", "ego".to_string());
    let mut nodes = vec![RgNode { id: "ego".into(), entity_type: "ego".into() }];
    for (ty, ids) in groups {
        let perm = perms[ty];
        let prefix = ty.to_lowercase();
        // perm[k] = which original node takes canonical index k.
        for (k, &orig) in perm.iter().enumerate() {
            let new_id = format!("{prefix}{}", k + 1);
            mapping.insert(ids[orig], new_id.clone());
            nodes.push(RgNode { id: new_id, entity_type: (*ty).to_string() });
        }
    }

    let mut indexed: Vec<(usize, super::RgEdge)> = g
        .edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let mut e = e.clone();
            e.src = mapping[e.src.as_str()].clone();
            e.dst = mapping[e.dst.as_str()].clone();
            (i, e)
        })
        .collect();
    indexed.sort_by(|a, b| a.1.cmp(&b.1));
    let mut index_map = vec![0usize; indexed.len()];
    for (new, (old, _)) in indexed.iter().enumerate() {
        index_map[*old] = new;
    }
    let edges = indexed.into_iter().map(|(_, e)| e).collect();
    let mut until_pairs: Vec<(usize, usize)> = g
        .until_pairs
        .iter()
        .map(|&(l, r)| (index_map[l], index_map[r]))
        .collect();
    until_pairs.sort();

    RelationalGraph { nodes, edges, until_pairs, sources: g.sources.clone() }
}

/// The canonical relabeling of a graph: minimal serialization over all
/// within-type node permutations.
pub fn canonical_graph(g: &RelationalGraph) -> RelationalGraph {
    let mut groups: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for n in &g.nodes {
        if n.entity_type != "ego" {
            groups.entry(n.entity_type.as_str()).or_default().push(n.id.as_str());
        }
    }
    let group_perms: BTreeMap<&str, Vec<Vec<usize>>> =
        groups.iter().map(|(&ty, ids)| (ty, permutations(ids.len()))).collect();

    let types: Vec<&str> = groups.keys().copied().collect();
    let mut best: Option<(String, RelationalGraph)> = None;
    let mut choice: BTreeMap<&str, &Vec<usize>> = BTreeMap::new();

    fn explore<'a>(
        g: &RelationalGraph,
        groups: &BTreeMap<&'a str, Vec<&'a str>>,
        group_perms: &'a BTreeMap<&'a str, Vec<Vec<usize>>>,
        types: &[&'a str],
        choice: &mut BTreeMap<&'a str, &'a Vec<usize>>,
        best: &mut Option<(String, RelationalGraph)>,
    ) {
        match types.split_first() {
            None => {
                let candidate = relabel(g, groups, choice);
                let key = candidate.to_text();
                if best.as_ref().is_none_or(|(k, _)| key < *k) {
                    *best = Some((key, candidate));
                }
            }
            Some((&ty, rest)) => {
                for perm in &group_perms[ty] {
                    choice.insert(ty, perm);
                    explore(g, groups, group_perms, rest, choice, best);
                }
            }
        }
    }
    explore(g, &groups, &group_perms, &types, &mut choice, &mut best);
    best.expect("at least the identity labeling exists").1
}

/// Canonical serialization, the isomorphism-class key.
pub fn canonical_form(g: &RelationalGraph) -> String {
    canonical_graph(g).to_text()
}

/// Keep one canonical representative per isomorphism class, in first-occurrence
/// order, merging the source-formula sets of merged duplicates.
pub fn dedupe_isomorphic(graphs: Vec<RelationalGraph>) -> Vec<RelationalGraph> {
    let mut out: Vec<RelationalGraph> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for g in &graphs {
        let canon = canonical_graph(g);
        let key = canon.to_text();
        match index.get(&key) {
            Some(&i) => merge_sources(&mut out[i], &canon),
            None => {
                index.insert(key, out.len());
                out.push(canon);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rg::{RgEdge, TemporalTag};

    fn graph(text: &str) -> RelationalGraph {
        RelationalGraph::from_text(text).unwrap()
    }

    #[test]
    fn relabeling_symmetry_collapses_to_one() {
        let a = graph("node ego ego\nnode car1 Car\nedge ego near@I car1\n");
        let b = graph("node ego ego\nnode car7 Car\nedge ego near@I car7\n");
        let deduped = dedupe_isomorphic(vec![a, b]);
        assert_eq!(deduped.len(), 1);
        assert_eq!(deduped[0].nodes[1].id, "car1");
    }

    #[test]
    fn different_relation_names_stay_distinct() {
        let a = graph("node ego ego\nnode car1 Car\nedge ego near@I car1\n");
        let b = graph("node ego ego\nnode car1 Car\nedge ego tooClose@I car1\n");
        assert_eq!(dedupe_isomorphic(vec![a, b]).len(), 2);
    }

    #[test]
    fn different_tags_and_polarities_stay_distinct() {
        let a = graph("node ego ego\nnode car1 Car\nedge ego near@I car1\n");
        let b = graph("node ego ego\nnode car1 Car\nedge ego near@F car1\n");
        let c = graph("node ego ego\nnode car1 Car\nedge ego near@I car1 neg\n");
        assert_eq!(dedupe_isomorphic(vec![a, b, c]).len(), 3);
    }

    #[test]
    fn two_car_symmetric_pair_is_isomorphic_under_swap() {
        let a = graph(
            "node ego ego\nnode car1 Car\nnode car2 Car\n\
             edge ego near@I car1\nedge ego tooClose@I car2\n",
        );
        let b = graph(
            "node ego ego\nnode car1 Car\nnode car2 Car\n\
             edge ego near@I car2\nedge ego tooClose@I car1\n",
        );
        let deduped = dedupe_isomorphic(vec![a, b]);
        assert_eq!(deduped.len(), 1);
    }

    #[test]
    fn ego_is_pinned() {
        // Swapping the roles of ego and a car is not an isomorphism.
        let a = graph("node ego ego\nnode car1 Car\nedge ego aheadOf@I car1\n");
        let b = graph("node ego ego\nnode car1 Car\nedge car1 aheadOf@I ego\n");
        assert_eq!(dedupe_isomorphic(vec![a, b]).len(), 2);
    }

    #[test]
    fn until_pairs_survive_canonicalization() {
        let mut g = graph(
            "node ego ego\nnode car1 Car\n\
             edge ego near@U_r car1\nedge ego sameLane@U_l car1\n",
        );
        g.until_pairs = vec![(1, 0)];
        let canon = canonical_graph(&g);
        assert_eq!(canon.until_pairs.len(), 1);
        let (l, r) = canon.until_pairs[0];
        assert_eq!(canon.edges[l].tag, TemporalTag::Ul);
        assert_eq!(canon.edges[r].tag, TemporalTag::Ur);
    }

    #[test]
    fn canonical_form_is_invariant_under_input_labeling() {
        let mut edges = Vec::new();
        for (s, d) in [("ego", "carA"), ("ego", "carB"), ("carA", "carB")] {
            edges.push(RgEdge {
                src: s.into(),
                rel: "near".into(),
                tag: TemporalTag::I,
                dst: d.into(),
                negative: false,
            });
        }
        let a = RelationalGraph {
            nodes: vec![
                RgNode { id: "ego".into(), entity_type: "ego".into() },
                RgNode { id: "carA".into(), entity_type: "Car".into() },
                RgNode { id: "carB".into(), entity_type: "Car".into() },
            ],
            edges: edges.clone(),
            until_pairs: vec![],
            sources: vec![],
        };
        // Same structure with the car labels exchanged.
        let swap = |s: &str| match s {
            "carA" => "carB".to_string(),
            "carB" => "carA".to_string(),
            other => other.to_string(),
        };
        let b = RelationalGraph {
            nodes: a.nodes.clone(),
            edges: edges
                .iter()
                .map(|e| RgEdge { src: swap(&e.src), dst: swap(&e.dst), ..e.clone() })
                .collect(),
            until_pairs: vec![],
            sources: vec![],
        };
        assert_eq!(canonical_form(&a), canonical_form(&b));
    }
}
