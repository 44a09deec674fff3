//! Acceptance suite: one test per shipped guarantee, each printing a single
//! PASS line with its measured evidence. Oracles are independent of the
//! implementations under test: exhaustive trace enumeration for splitting and
//! temporal evaluation, exhaustive simple-path enumeration for routing,
//! per-step argmax replay for diversity selection, and byte comparison of
//! whole report trees for determinism.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use specsim::eval::eval_ltlf_with;
use specsim::paths::{average_distance, k_shortest_paths, select_diverse, Trajectory};
use specsim::rg::generate::generate_rgs;
use specsim::scene::{map_rg_to_constraints, sample_initial_scene, verify_scene};
use specsim::sim::{npc_speed, SpeedLawParams, Trace};
use specsim::spec_lang::{
    normalize, parse_spec, split_disjunctions, ConfigurationSpace, Formula, Spec,
};
use specsim::world::{
    EdgeKind, GridParams, RelationRegistry, RoadWorld, Waypoint, WaypointGraph, WpEdge,
};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Following-too-closely shape: a forbidden three-way conjunction now, the
/// same conjunction required at the next frame, and a side condition that
/// stays false throughout.
const FOLLOW_SPEC: &str = "\
ap tooClose := |ego.tooClose| > 0;
ap sameLane := |ego.sameLane & Car| > 0;
ap ahead := |ego.aheadOf| > 0;
ap carStopped := |Car.stopped| > 0;
pre: !(tooClose && sameLane && ahead) && !carStopped
     && X (tooClose && sameLane && ahead && !carStopped);
";

fn follow_spec() -> Spec {
    parse_spec(FOLLOW_SPEC, &RelationRegistry::new()).expect("spec parses")
}

fn pass(n: u32, name: &str, detail: String, t0: Instant) {
    println!("acceptance {n:02} {name}: PASS ({detail}, {:?})", t0.elapsed());
}

#[test]
fn c01_configuration_and_flip_counts() {
    let t0 = Instant::now();
    let cs = ConfigurationSpace::build(&follow_spec());
    assert_eq!(cs.configurations.len(), 7, "configuration count");
    assert_eq!(cs.oneflips.len(), 3, "oneflip count");
    assert!(cs.oneflips.iter().all(|f| f.strict), "next-shaped flips are strict");
    // Configurations are pairwise distinct formulas.
    for (i, a) in cs.configurations.iter().enumerate() {
        for b in &cs.configurations[i + 1..] {
            assert_ne!(a.formula, b.formula);
        }
    }
    assert!(t0.elapsed().as_secs() < 1, "time bound");
    pass(1, "configuration-and-flip-counts", "7 configurations, 3 oneflips".into(), t0);
}

const AP_NAMES: [&str; 4] = ["a", "b", "c", "d"];

fn literal(rng: &mut ChaCha8Rng) -> Formula {
    let ap = Formula::ap(AP_NAMES[rng.gen_range(0..AP_NAMES.len())]);
    if rng.gen_bool(0.3) {
        Formula::not(ap)
    } else {
        ap
    }
}

/// Random negation-normal-form formula with a shared disjunction budget.
fn gen_nnf(rng: &mut ChaCha8Rng, depth: usize, or_left: &mut u32) -> Formula {
    if depth == 0 {
        return literal(rng);
    }
    match rng.gen_range(0..8) {
        0 | 1 => literal(rng),
        2 => Formula::and(gen_nnf(rng, depth - 1, or_left), gen_nnf(rng, depth - 1, or_left)),
        3 if *or_left > 0 => {
            *or_left -= 1;
            Formula::or(gen_nnf(rng, depth - 1, or_left), gen_nnf(rng, depth - 1, or_left))
        }
        3 | 4 => Formula::next(gen_nnf(rng, depth - 1, or_left)),
        5 => Formula::eventually(gen_nnf(rng, depth - 1, or_left)),
        6 => Formula::globally(gen_nnf(rng, depth - 1, or_left)),
        _ => Formula::until(gen_nnf(rng, depth - 1, or_left), gen_nnf(rng, depth - 1, or_left)),
    }
}

fn used_aps(f: &Formula) -> Vec<String> {
    f.ap_names().into_iter().map(str::to_string).collect::<BTreeSet<_>>().into_iter().collect()
}

/// Evaluate a formula on a bit-matrix trace: bit `i * aps.len() + k` is the
/// truth of proposition k at frame i.
fn eval_bits(f: &Formula, aps: &[String], bits: u64, len: usize) -> bool {
    let n = aps.len();
    eval_ltlf_with(f, len, 0, &|i, name| {
        aps.iter().position(|a| a == name).is_some_and(|k| bits >> (i * n + k) & 1 == 1)
    })
}

#[test]
fn c02_split_cases_are_exclusive_and_jointly_equivalent() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0002);
    let mut total_cases = 0usize;
    for _ in 0..200 {
        let mut or_left = 2;
        let f = normalize(&gen_nnf(&mut rng, 3, &mut or_left));
        let cases = split_disjunctions(&f);
        total_cases += cases.len();
        let aps = used_aps(&f);
        for len in 1..=4usize {
            for bits in 0u64..(1u64 << (len * aps.len())) {
                let whole = eval_bits(&f, &aps, bits, len);
                let holding =
                    cases.iter().filter(|c| eval_bits(c, &aps, bits, len)).count();
                assert!(holding <= 1, "cases overlap on {f} (len {len}, bits {bits:b})");
                assert_eq!(
                    whole,
                    holding == 1,
                    "disjunction of cases differs from {f} (len {len}, bits {bits:b})"
                );
            }
        }
    }
    assert!(t0.elapsed().as_secs() < 30, "time bound");
    pass(2, "split-exclusive-and-equivalent", format!("200 formulas, {total_cases} cases"), t0);
}

/// Independent temporal reference: position labeling computed backward over
/// the trace, one boolean vector per subformula, rather than recursion over
/// start indices.
fn label(f: &Formula, trace: &[BTreeMap<String, bool>]) -> Vec<bool> {
    let n = trace.len();
    match f {
        Formula::Ap(name) => {
            trace.iter().map(|v| v.get(name).copied().unwrap_or(false)).collect()
        }
        Formula::Not(g) => label(g, trace).iter().map(|x| !x).collect(),
        Formula::And(a, b) => {
            let (a, b) = (label(a, trace), label(b, trace));
            a.iter().zip(&b).map(|(x, y)| *x && *y).collect()
        }
        Formula::Or(a, b) => {
            let (a, b) = (label(a, trace), label(b, trace));
            a.iter().zip(&b).map(|(x, y)| *x || *y).collect()
        }
        Formula::Implies(a, b) => {
            let (a, b) = (label(a, trace), label(b, trace));
            a.iter().zip(&b).map(|(x, y)| !*x || *y).collect()
        }
        Formula::Next(g) => {
            let c = label(g, trace);
            (0..n).map(|i| i + 1 < n && c[i + 1]).collect()
        }
        Formula::WeakNext(g) => {
            let c = label(g, trace);
            (0..n).map(|i| i + 1 >= n || c[i + 1]).collect()
        }
        Formula::Eventually(g) => {
            let c = label(g, trace);
            let mut out = vec![false; n];
            let mut later = false;
            for i in (0..n).rev() {
                later = later || c[i];
                out[i] = later;
            }
            out
        }
        Formula::Globally(g) => {
            let c = label(g, trace);
            let mut out = vec![false; n];
            let mut all = true;
            for i in (0..n).rev() {
                all = all && c[i];
                out[i] = all;
            }
            out
        }
        Formula::Until(a, b) => {
            let (a, b) = (label(a, trace), label(b, trace));
            let mut out = vec![false; n];
            for i in (0..n).rev() {
                out[i] = b[i] || (a[i] && i + 1 < n && out[i + 1]);
            }
            out
        }
    }
}

#[test]
fn c03_temporal_evaluator_matches_labeling_reference() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let aps = ["a", "b", "c"];
    let mut pairs = 0usize;
    while pairs < 1000 {
        let mut or_left = u32::MAX;
        let f = gen_nnf(&mut rng, 4, &mut or_left);
        let len = rng.gen_range(1..=6usize);
        let trace: Vec<BTreeMap<String, bool>> = (0..len)
            .map(|_| aps.iter().map(|a| (a.to_string(), rng.gen_bool(0.5))).collect())
            .collect();
        let reference = label(&f, &trace);
        for (start, expected) in reference.iter().enumerate() {
            let got = eval_ltlf_with(&f, len, start, &|i, name| {
                trace[i].get(name).copied().unwrap_or(false)
            });
            assert_eq!(got, *expected, "mismatch on {f} at start {start}");
        }
        pairs += 1;
    }
    assert!(t0.elapsed().as_secs() < 30, "time bound");
    pass(3, "temporal-evaluator-oracle", format!("{pairs} formula/trace pairs"), t0);
}

fn random_graph(rng: &mut ChaCha8Rng) -> WaypointGraph {
    let n = rng.gen_range(2..=8u32);
    let nodes: Vec<Waypoint> = (0..n)
        .map(|id| Waypoint {
            id,
            position: [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)],
            lane: 0,
            heading: 0.0,
        })
        .collect();
    let mut edges = Vec::new();
    for s in 0..n {
        for d in 0..n {
            if s != d && rng.gen_bool(0.35) {
                edges.push(WpEdge {
                    src: s,
                    dst: d,
                    kind: EdgeKind::Follow,
                    length: dist(nodes[s as usize].position, nodes[d as usize].position)
                        .max(0.1),
                });
            }
        }
    }
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n as usize];
    for (i, e) in edges.iter().enumerate() {
        adjacency[e.src as usize].push(i);
    }
    for adj in &mut adjacency {
        adj.sort_by_key(|&i| edges[i].dst);
    }
    WaypointGraph { nodes, edges, adjacency }
}

/// Every simple path from start to goal, by depth-first search.
fn all_simple_paths(wg: &WaypointGraph, start: u32, goal: u32) -> Vec<(f64, Vec<u32>)> {
    let mut out = Vec::new();
    let mut stack = vec![(vec![start], 0.0f64)];
    while let Some((path, cost)) = stack.pop() {
        let last = *path.last().unwrap();
        if last == goal {
            out.push((cost, path));
            continue;
        }
        for e in wg.outgoing(last) {
            if !path.contains(&e.dst) {
                let mut p = path.clone();
                p.push(e.dst);
                stack.push((p, cost + e.length));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[test]
fn c04_k_shortest_matches_exhaustive_enumeration() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    let mut checked = 0usize;
    for _ in 0..100 {
        let wg = random_graph(&mut rng);
        let n = wg.nodes.len() as u32;
        let start = rng.gen_range(0..n);
        let goal = rng.gen_range(0..n);
        if start == goal {
            continue;
        }
        let reference = all_simple_paths(&wg, start, goal);
        for k in 1..=5usize {
            match k_shortest_paths(&wg, "e", start, goal, k) {
                Ok(paths) => {
                    assert!(!reference.is_empty(), "planner found a path the oracle missed");
                    assert_eq!(paths.len(), k.min(reference.len()));
                    for (got, want) in paths.iter().zip(&reference) {
                        // Tie order may differ; lengths must match exactly.
                        assert!(
                            (got.length - want.0).abs() < 1e-9,
                            "length mismatch at k={k}: {} vs {}",
                            got.length,
                            want.0
                        );
                        assert!(
                            reference.iter().any(|(_, p)| p == &got.waypoints),
                            "planner returned a path outside the exhaustive set"
                        );
                    }
                    checked += 1;
                }
                Err(_) => assert!(reference.is_empty(), "planner missed an existing path"),
            }
        }
    }
    assert!(t0.elapsed().as_secs() < 30, "time bound");
    pass(4, "k-shortest-vs-exhaustive", format!("{checked} graph/k cases"), t0);
}

fn random_trajectory(rng: &mut ChaCha8Rng, id: usize) -> Trajectory {
    let points = rng.gen_range(2..=6usize);
    let polyline: Vec<[f64; 2]> = (0..points)
        .map(|_| [rng.gen_range(-30.0..30.0), rng.gen_range(-30.0..30.0)])
        .collect();
    let length = polyline.windows(2).map(|w| dist(w[0], w[1])).sum();
    Trajectory {
        entity: "ego".into(),
        waypoints: (0..points as u32).map(|p| p + 100 * id as u32).collect(),
        length,
        polyline,
    }
}

#[test]
fn c05_greedy_diversity_is_per_step_argmax() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0005);
    for _ in 0..60 {
        let candidates: Vec<Trajectory> = (0..rng.gen_range(1..=8usize))
            .map(|i| random_trajectory(&mut rng, i))
            .collect();
        for count in 1..=3usize {
            let selected = select_diverse(&candidates, count);
            assert_eq!(selected.len(), count.min(candidates.len()));
            // Seed pick: the shortest candidate.
            let min_len =
                candidates.iter().map(|c| c.length).fold(f64::INFINITY, f64::min);
            assert!((selected[0].length - min_len).abs() < 1e-9, "seed is not shortest");
            // Every further pick attains the maximal average distance to the
            // already-selected set among the remaining candidates.
            for step in 1..selected.len() {
                let chosen_d = average_distance(&selected[step], &selected[..step]);
                let best = candidates
                    .iter()
                    .filter(|c| !selected[..step].iter().any(|s| s.waypoints == c.waypoints))
                    .map(|c| average_distance(c, &selected[..step]))
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    chosen_d >= best - 1e-9,
                    "step {step} picked {chosen_d}, argmax is {best}"
                );
            }
        }
    }
    assert!(t0.elapsed().as_secs() < 10, "time bound");
    pass(5, "greedy-diversity-argmax", "60 candidate sets x counts 1..3".into(), t0);
}

#[test]
fn c06_speed_law_shape() {
    let t0 = Instant::now();
    for printed_equation in [false, true] {
        let p = SpeedLawParams { printed_equation, ..SpeedLawParams::default() };
        assert_eq!(npc_speed(0.0, &p), p.v0, "v(0) = v0");
        // Clipped everywhere in a wide range.
        let mut d = -10_000.0;
        while d <= 10_000.0 {
            let v = npc_speed(d, &p);
            assert!((p.v_min..=p.v_max).contains(&v), "unclipped output {v} at d={d}");
            d += 7.3;
        }
        // Finite-difference slope in the unclipped region matches the gains.
        let h = 1e-3;
        for (d, gain) in [(3.0, p.alpha), (-3.0, p.beta)] {
            let slope = (npc_speed(d + h, &p) - npc_speed(d - h, &p)) / (2.0 * h);
            assert!(
                (slope.abs() - gain).abs() < 1e-9,
                "slope {slope} at d={d}, expected magnitude {gain}"
            );
        }
    }
    assert!(t0.elapsed().as_millis() < 1000, "time bound");
    pass(6, "speed-law-shape", "both sign conventions".into(), t0);
}

#[test]
fn c07_graph_pipeline_feasibility_oracle() {
    let t0 = Instant::now();
    let registry = RelationRegistry::new();
    let spec = follow_spec();
    let world = RoadWorld::grid(&GridParams::default()).unwrap();
    let generation = generate_rgs(&spec, &BTreeMap::new(), &registry);
    assert_eq!(generation.rgs.len(), 7, "graph count before realizability filtering");

    // Feasibility: a graph is feasible when its scene sampler succeeds.
    let feasible: Vec<bool> = generation
        .rgs
        .iter()
        .map(|rg| {
            let program = map_rg_to_constraints(rg, &registry).unwrap();
            sample_initial_scene(&program, &world, &registry, 1, 500, 6.0).is_ok()
        })
        .collect();
    let n_feasible = feasible.iter().filter(|f| **f).count();
    assert!((1..=7).contains(&n_feasible), "feasible count {n_feasible}");

    // Determinism per seed, and soundness: every successful sample verifies
    // its initial-state constraints against the ground-truth scene graph.
    let mut samples = 0usize;
    for (rg, ok) in generation.rgs.iter().zip(&feasible) {
        if !*ok {
            continue;
        }
        let program = map_rg_to_constraints(rg, &registry).unwrap();
        for seed in 0..100u64 {
            let a = sample_initial_scene(&program, &world, &registry, seed, 500, 6.0);
            let b = sample_initial_scene(&program, &world, &registry, seed, 500, 6.0);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    assert_eq!(a, b, "sampler nondeterministic at seed {seed}");
                    let binding: BTreeMap<String, u32> = a
                        .binding
                        .iter()
                        .map(|(k, v)| {
                            let id = v.split(':').nth(1).unwrap().parse().unwrap();
                            (k.clone(), id)
                        })
                        .collect();
                    assert!(
                        verify_scene(&world, &program, &binding, &a.entities),
                        "constraint violation at seed {seed}"
                    );
                    samples += 1;
                }
                (Err(_), Err(_)) => {}
                _ => panic!("sampler nondeterministic at seed {seed}"),
            }
        }
    }
    assert!(t0.elapsed().as_secs() < 120, "time bound");
    pass(
        7,
        "feasibility-oracle",
        format!("7 graphs, {n_feasible} feasible, {samples} verified samples"),
        t0,
    );
}

fn write_run_config(dir: &Path, spec_path: &Path, seed: u64, duration: f64) -> std::path::PathBuf {
    let config = serde_json::json!({
        "specs": [spec_path],
        "master_seed": seed,
        "duration": duration,
        "jobs": 4,
        "out_dir": dir.join("out"),
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

fn run_cli(args: &[&str]) -> i32 {
    let status = Command::new(env!("CARGO_BIN_EXE_specsim"))
        .args(args)
        .status()
        .expect("binary runs");
    status.code().unwrap_or(-1)
}

fn read_coverage(out: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(out.join("reports").join("coverage.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn cov1_ratio(report: &serde_json::Value) -> f64 {
    let covered = report["cov1_covered"].as_u64().unwrap() as f64;
    let feasible = report["cov1_feasible"].as_u64().unwrap() as f64;
    if feasible == 0.0 {
        0.0
    } else {
        covered / feasible
    }
}

#[test]
fn c08_end_to_end_smoke_reaches_binary_coverage() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let spec_path = tmp.path().join("follow.spec");
    std::fs::write(&spec_path, FOLLOW_SPEC).unwrap();
    let config = write_run_config(tmp.path(), &spec_path, 1, 30.0);

    let code = run_cli(&["run-all", "--config", config.to_str().unwrap()]);
    assert_eq!(code, 0, "pipeline exit code");

    let out = tmp.path().join("out").join("follow");
    let report = read_coverage(&out);
    assert_eq!(report["cov3"], serde_json::Value::Bool(true), "binary coverage");

    // Re-derive per-trace covered sets and check the coverage fraction is
    // non-decreasing along every one of 200 sampled permutations.
    let registry = RelationRegistry::new();
    let mut spec = parse_spec(FOLLOW_SPEC, &registry).unwrap();
    spec.name = "follow".into();
    let cs = ConfigurationSpace::build(&spec);
    let mut traces = Vec::new();
    let mut trace_files: Vec<_> = std::fs::read_dir(out.join("traces"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    trace_files.sort();
    for path in &trace_files {
        traces.push(Trace::from_ndjson(&std::fs::read_to_string(path).unwrap()).unwrap());
    }
    let per_trace = specsim::eval::per_trace_coverage(&spec, &cs, &traces, &registry).unwrap();
    let feasible: BTreeSet<String> = report["feasible_configurations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap().to_string())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut order: Vec<usize> = (0..per_trace.len()).collect();
    for _ in 0..200 {
        order.shuffle(&mut rng);
        let mut acc: BTreeSet<String> = BTreeSet::new();
        let mut last = 0usize;
        for &i in &order {
            acc.extend(per_trace[i].intersection(&feasible).cloned());
            assert!(acc.len() >= last, "coverage decreased along a permutation");
            last = acc.len();
        }
    }
    assert!(t0.elapsed().as_secs() < 300, "time bound");
    pass(
        8,
        "end-to-end-smoke",
        format!("cov3 over {} traces, 200 monotone permutations", traces.len()),
        t0,
    );
}

#[test]
fn c09_random_baseline_never_beats_directed_generation() {
    let t0 = Instant::now();
    let mut results = Vec::new();
    for seed in [11u64, 22, 33, 44, 55] {
        let tmp = tempfile::tempdir().unwrap();
        let spec_path = tmp.path().join("follow.spec");
        std::fs::write(&spec_path, FOLLOW_SPEC).unwrap();
        let config = write_run_config(tmp.path(), &spec_path, seed, 10.0);
        assert_eq!(run_cli(&["run-all", "--config", config.to_str().unwrap()]), 0);
        assert_eq!(
            run_cli(&[
                "baseline-random",
                "--config",
                config.to_str().unwrap(),
                "--multiplier",
                "1",
            ]),
            0
        );
        let out = tmp.path().join("out").join("follow");
        let directed = cov1_ratio(&read_coverage(&out));
        let baseline = cov1_ratio(&read_coverage(&out.join("baseline-x1")));
        assert!(
            baseline <= directed + 1e-12,
            "baseline {baseline} beat directed {directed} at seed {seed}"
        );
        results.push((seed, directed, baseline));
    }
    assert!(t0.elapsed().as_secs() < 600, "time bound");
    pass(9, "baseline-contrast", format!("{results:?}"), t0);
}

fn report_bytes(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(out.join("reports"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn c10_repeated_runs_produce_identical_reports() {
    let t0 = Instant::now();
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let tmp = tempfile::tempdir().unwrap();
        let spec_path = tmp.path().join("follow.spec");
        std::fs::write(&spec_path, FOLLOW_SPEC).unwrap();
        let config = write_run_config(tmp.path(), &spec_path, 7, 10.0);
        assert_eq!(run_cli(&["run-all", "--config", config.to_str().unwrap()]), 0);
        assert_eq!(
            run_cli(&[
                "baseline-random",
                "--config",
                config.to_str().unwrap(),
                "--multiplier",
                "1",
            ]),
            0
        );
        let out = tmp.path().join("out").join("follow");
        let mut reports = report_bytes(&out);
        reports.extend(report_bytes(&out.join("baseline-x1")));
        snapshots.push(reports);
        // The temp dir is dropped here; only the bytes are compared.
    }
    assert_eq!(snapshots[0], snapshots[1], "reports differ between identical runs");
    let n = snapshots[0].len();
    pass(10, "report-determinism", format!("{n} report files byte-identical"), t0);
}
