//! Trace evaluation and coverage accounting: set-logic propositions over
//! per-frame scene graphs, temporal formulas over finite traces, and the
//! three coverage metrics with their simulation-count curve.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::Trace;
use crate::spec_lang::{CardCmp, Comparator, ConfigurationSpace, Formula, OneFlip, SetExpr, Spec};
use crate::world::{RelationRegistry, SceneGraph};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("unknown relation `{0}`")]
    UnknownRelation(String),
    #[error("unknown atomic proposition `{0}`")]
    UnknownAp(String),
}

/// Evaluate a set expression against one scene graph.
pub fn eval_set(
    expr: &SetExpr,
    sg: &SceneGraph,
    registry: &RelationRegistry,
) -> Result<BTreeSet<String>, EvalError> {
    Ok(match expr {
        SetExpr::Ego => sg
            .vertices
            .iter()
            .filter(|v| v.entity_type == "ego")
            .map(|v| v.id.clone())
            .collect(),
        SetExpr::Type(t) => sg.vertices_of_type(t).map(str::to_string).collect(),
        SetExpr::Image(base, rel) => {
            if !registry.contains(rel) {
                return Err(EvalError::UnknownRelation(rel.clone()));
            }
            let base = eval_set(base, sg, registry)?;
            let mut out = BTreeSet::new();
            for src in &base {
                out.extend(sg.image(src, rel).map(str::to_string));
            }
            out
        }
        SetExpr::Union(a, b) => {
            let a = eval_set(a, sg, registry)?;
            let b = eval_set(b, sg, registry)?;
            a.union(&b).cloned().collect()
        }
        SetExpr::Intersect(a, b) => {
            let a = eval_set(a, sg, registry)?;
            let b = eval_set(b, sg, registry)?;
            a.intersection(&b).cloned().collect()
        }
        SetExpr::Difference(a, b) => {
            let a = eval_set(a, sg, registry)?;
            let b = eval_set(b, sg, registry)?;
            a.difference(&b).cloned().collect()
        }
        SetExpr::SymDiff(a, b) => {
            let a = eval_set(a, sg, registry)?;
            let b = eval_set(b, sg, registry)?;
            a.symmetric_difference(&b).cloned().collect()
        }
    })
}

/// Evaluate a cardinality comparison against one scene graph.
pub fn eval_ap(
    body: &CardCmp,
    sg: &SceneGraph,
    registry: &RelationRegistry,
) -> Result<bool, EvalError> {
    let n = eval_set(&body.set, sg, registry)?.len() as u32;
    Ok(match body.cmp {
        Comparator::Gt => n > body.bound,
        Comparator::Ge => n >= body.bound,
        Comparator::Lt => n < body.bound,
        Comparator::Le => n <= body.bound,
        Comparator::Eq => n == body.bound,
    })
}

/// Finite-trace temporal evaluation over an abstract proposition valuation:
/// `ap_at(i, name)` gives the truth of `name` at frame `i`. Next is strong
/// (false at the last frame); its weak dual holds there.
pub fn eval_ltlf_with(
    f: &Formula,
    len: usize,
    i: usize,
    ap_at: &dyn Fn(usize, &str) -> bool,
) -> bool {
    match f {
        Formula::Ap(name) => ap_at(i, name),
        Formula::Not(g) => !eval_ltlf_with(g, len, i, ap_at),
        Formula::And(a, b) => {
            eval_ltlf_with(a, len, i, ap_at) && eval_ltlf_with(b, len, i, ap_at)
        }
        Formula::Or(a, b) => {
            eval_ltlf_with(a, len, i, ap_at) || eval_ltlf_with(b, len, i, ap_at)
        }
        Formula::Implies(a, b) => {
            !eval_ltlf_with(a, len, i, ap_at) || eval_ltlf_with(b, len, i, ap_at)
        }
        Formula::Next(g) => i + 1 < len && eval_ltlf_with(g, len, i + 1, ap_at),
        Formula::WeakNext(g) => i + 1 >= len || eval_ltlf_with(g, len, i + 1, ap_at),
        Formula::Eventually(g) => (i..len).any(|j| eval_ltlf_with(g, len, j, ap_at)),
        Formula::Globally(g) => (i..len).all(|j| eval_ltlf_with(g, len, j, ap_at)),
        Formula::Until(a, b) => (i..len).any(|j| {
            eval_ltlf_with(b, len, j, ap_at)
                && (i..j).all(|m| eval_ltlf_with(a, len, m, ap_at))
        }),
    }
}

/// Per-frame truth values of every proposition a spec can mention.
pub struct ApValuation {
    names: Vec<String>,
    /// frames x propositions.
    values: Vec<Vec<bool>>,
}

impl ApValuation {
    pub fn new(
        frames: &[SceneGraph],
        tables: &[&BTreeMap<String, CardCmp>],
        registry: &RelationRegistry,
    ) -> Result<ApValuation, EvalError> {
        let mut names = Vec::new();
        let mut bodies = Vec::new();
        for t in tables {
            for (n, b) in *t {
                names.push(n.clone());
                bodies.push(b);
            }
        }
        let mut values = Vec::with_capacity(frames.len());
        for sg in frames {
            let mut row = Vec::with_capacity(bodies.len());
            for b in &bodies {
                row.push(eval_ap(b, sg, registry)?);
            }
            values.push(row);
        }
        Ok(ApValuation { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn truth(&self, frame: usize, ap: &str) -> bool {
        match self.names.iter().position(|n| n == ap) {
            Some(k) => self.values[frame][k],
            None => false,
        }
    }
}

/// Evaluate a formula over a recorded trace starting at `start`.
pub fn eval_ltlf(f: &Formula, val: &ApValuation, start: usize) -> bool {
    assert!(start < val.len(), "start index inside the trace");
    eval_ltlf_with(f, val.len(), start, &|i, name| val.truth(i, name))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceVerdict {
    pub script_id: String,
    pub precondition_satisfied: bool,
    pub satisfying_configurations: Vec<String>,
    /// Minimal frame gap between the initial slice and the earliest frame
    /// satisfying an eventually-slice, when the trace satisfies such a
    /// configuration.
    pub min_h: Option<usize>,
    /// Verdict of the full requirement (pre implies post) when a
    /// postcondition exists.
    pub full_verdict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub spec_name: String,
    pub agent: String,
    pub total_configurations: usize,
    pub feasible_configurations: Vec<String>,
    pub covered_configurations: Vec<String>,
    /// Covered configurations outside the feasible set: evidence the
    /// feasibility oracle under-approximated. Reported, warned about, and
    /// excluded from the cov1 ratio.
    pub covered_infeasible: Vec<String>,
    pub cov1_covered: usize,
    pub cov1_feasible: usize,
    /// None when the spec exhibits no flip pattern.
    pub cov2: Option<(usize, usize)>,
    pub covered_oneflips: Vec<usize>,
    pub cov3: bool,
    pub traces: Vec<TraceVerdict>,
}

impl CoverageReport {
    pub fn cov1(&self) -> f64 {
        if self.cov1_feasible == 0 {
            0.0
        } else {
            self.cov1_covered as f64 / self.cov1_feasible as f64
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let cov2 = match self.cov2 {
            Some((c, t)) => format!("{c}/{t}"),
            None => "n/a".to_string(),
        };
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:<16} {:>10} {:>10} {:>6}\n",
            "spec", "agent", "cov1", "cov2", "cov3"
        ));
        out.push_str(&format!(
            "{:<16} {:<16} {:>10} {:>10} {:>6}\n",
            self.spec_name,
            self.agent,
            format!("{}/{}", self.cov1_covered, self.cov1_feasible),
            cov2,
            if self.cov3 { "yes" } else { "no" },
        ));
        if !self.covered_infeasible.is_empty() {
            out.push_str(&format!(
                "warning: {} configuration(s) covered despite being marked infeasible: {}\n",
                self.covered_infeasible.len(),
                self.covered_infeasible.join(", ")
            ));
        }
        out
    }
}

fn flatten_and(f: &Formula, out: &mut Vec<Formula>) {
    match f {
        Formula::And(a, b) => {
            flatten_and(a, out);
            flatten_and(b, out);
        }
        other => out.push(other.clone()),
    }
}

/// Earliest frame at which `f` holds, if any.
fn earliest(f: &Formula, val: &ApValuation) -> Option<usize> {
    (0..val.len()).find(|&i| eval_ltlf_with(f, val.len(), i, &|j, n| val.truth(j, n)))
}

/// Minimal gap between the initial slice and an eventually-slice of a
/// satisfied configuration formula, when it has one.
fn min_h_of(formula: &Formula, val: &ApValuation) -> Option<usize> {
    let mut parts = Vec::new();
    flatten_and(formula, &mut parts);
    let mut best: Option<usize> = None;
    for p in &parts {
        if let Formula::Eventually(body) = p {
            if let Some(j) = earliest(body, val) {
                best = Some(best.map_or(j, |b| b.min(j)));
            }
        }
    }
    best
}

/// Whether a trace exhibits the flip: the earlier slice holds at some frame i
/// and the later slice (the flipped proposition inverted, the rest of the
/// group unchanged) holds at frame j > i, with j = i+1 for strict
/// (next-shaped) flips. Returns the earliest such (i, j).
pub fn oneflip_witness(flip: &OneFlip, val: &ApValuation) -> Option<(usize, usize)> {
    let holds = |lits: &[crate::spec_lang::ApLiteral], i: usize| {
        lits.iter().all(|l| val.truth(i, &l.ap) == l.positive)
    };
    for i in 0..val.len() {
        if !holds(&flip.earlier, i) {
            continue;
        }
        if flip.strict {
            if i + 1 < val.len() && holds(&flip.later, i + 1) {
                return Some((i, i + 1));
            }
        } else {
            for j in i + 1..val.len() {
                if holds(&flip.later, j) {
                    return Some((i, j));
                }
            }
        }
    }
    None
}

/// Compute the coverage report for one spec over a set of traces.
/// A configuration counts as covered when at least one trace satisfies its
/// formula from frame 0.
pub fn compute_coverage(
    spec: &Spec,
    cs: &ConfigurationSpace,
    feasible: &BTreeSet<String>,
    traces: &[Trace],
    registry: &RelationRegistry,
    agent: &str,
) -> Result<CoverageReport, EvalError> {
    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut covered_flips: BTreeSet<usize> = BTreeSet::new();
    let mut verdicts = Vec::new();

    for trace in traces {
        let frames: Vec<SceneGraph> =
            trace.frames.iter().map(|f| f.scene_graph.clone()).collect();
        if frames.is_empty() {
            continue;
        }
        let val = ApValuation::new(&frames, &[&spec.ap_table, &cs.derived_aps], registry)?;

        let mut satisfying = Vec::new();
        let mut min_h: Option<usize> = None;
        for c in &cs.configurations {
            if eval_ltlf(&c.formula, &val, 0) {
                satisfying.push(c.id.clone());
                covered.insert(c.id.clone());
                if let Some(h) = min_h_of(&c.formula, &val) {
                    min_h = Some(min_h.map_or(h, |b| b.min(h)));
                }
            }
        }
        for (k, flip) in cs.oneflips.iter().enumerate() {
            if oneflip_witness(flip, &val).is_some() {
                covered_flips.insert(k);
            }
        }
        let full_verdict = spec
            .postcondition
            .as_ref()
            .map(|_| eval_ltlf(&spec.full, &val, 0));
        verdicts.push(TraceVerdict {
            script_id: trace.meta.script_id.clone(),
            precondition_satisfied: !satisfying.is_empty(),
            satisfying_configurations: satisfying,
            min_h,
            full_verdict,
        });
    }

    let covered_feasible: Vec<String> =
        covered.intersection(feasible).cloned().collect();
    let covered_infeasible: Vec<String> =
        covered.difference(feasible).cloned().collect();
    let cov2 = if cs.oneflips.is_empty() {
        None
    } else {
        Some((covered_flips.len(), cs.oneflips.len()))
    };
    Ok(CoverageReport {
        spec_name: spec.name.clone(),
        agent: agent.to_string(),
        total_configurations: cs.configurations.len(),
        feasible_configurations: feasible.iter().cloned().collect(),
        covered_configurations: covered.iter().cloned().collect(),
        covered_infeasible,
        cov1_covered: covered_feasible.len(),
        cov1_feasible: feasible.len(),
        cov2,
        covered_oneflips: covered_flips.iter().copied().collect(),
        cov3: !covered_feasible.is_empty(),
        traces: verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub n: usize,
    pub mean: f64,
    pub stddev: f64,
}

/// Per-trace covered-configuration sets, the precomputation behind the curve.
pub fn per_trace_coverage(
    spec: &Spec,
    cs: &ConfigurationSpace,
    traces: &[Trace],
    registry: &RelationRegistry,
) -> Result<Vec<BTreeSet<String>>, EvalError> {
    let mut out = Vec::with_capacity(traces.len());
    for trace in traces {
        let frames: Vec<SceneGraph> =
            trace.frames.iter().map(|f| f.scene_graph.clone()).collect();
        let mut set = BTreeSet::new();
        if !frames.is_empty() {
            let val = ApValuation::new(&frames, &[&spec.ap_table, &cs.derived_aps], registry)?;
            for c in &cs.configurations {
                if eval_ltlf(&c.formula, &val, 0) {
                    set.insert(c.id.clone());
                }
            }
        }
        out.push(set);
    }
    Ok(out)
}

/// Mean and standard deviation of cov1 after the first n traces, over seeded
/// random permutations of the trace order.
pub fn coverage_curve(
    per_trace: &[BTreeSet<String>],
    feasible: &BTreeSet<String>,
    permutations: usize,
    seed: u64,
) -> Vec<CurvePoint> {
    assert!(permutations >= 1);
    let n_traces = per_trace.len();
    if n_traces == 0 {
        return Vec::new();
    }
    let denom = feasible.len().max(1) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // samples[n-1] collects cov1 after n traces, one entry per permutation.
    let mut samples: Vec<Vec<f64>> = vec![Vec::with_capacity(permutations); n_traces];
    let mut order: Vec<usize> = (0..n_traces).collect();
    for _ in 0..permutations {
        order.shuffle(&mut rng);
        let mut acc: BTreeSet<String> = BTreeSet::new();
        for (k, &i) in order.iter().enumerate() {
            acc.extend(per_trace[i].intersection(feasible).cloned());
            samples[k].push(acc.len() as f64 / denom);
        }
    }
    samples
        .iter()
        .enumerate()
        .map(|(k, xs)| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
            CurvePoint { n: k + 1, mean: m, stddev: var.sqrt() }
        })
        .collect()
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let mut out = String::from("n,mean,stddev\n");
    for p in curve {
        out.push_str(&format!("{},{},{}\n", p.n, p.mean, p.stddev));
    }
    out
}
