//! End-to-end pipeline orchestration: `generate` turns specs into relational
//! graphs, scenes, and scenario scripts, `simulate` runs them, `evaluate`
//! computes coverage, `run-all` chains the three, and `baseline-random`
//! produces a random-placement control treatment of the same size. Every
//! artifact derives from the master seed through named per-stage seeds, so
//! reruns are byte-identical.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{
    compute_coverage, coverage_curve, curve_csv, eval_ltlf_with, per_trace_coverage,
};
use crate::paths::{
    bind_endpoints, k_shortest_paths, select_diverse, Trajectory, DEFAULT_K, DEFAULT_R0,
    DEFAULT_R_MAX, DEFAULT_R_STEP,
};
use crate::rg::generate::{generate_rgs, NodeBudget};
use crate::rg::RelationalGraph;
use crate::scene::{
    map_rg_to_constraints, sample_initial_scene, sample_random_scene, EntityDecl, Scene,
    DEFAULT_MAX_TRIES,
};
use crate::sim::{builtin_agent, run_simulation, ScenarioScript, ScriptMeta, SpeedLawParams, Trace};
use crate::spec_lang::{parse_spec, ConfigurationSpace, Formula, Spec};
use crate::world::roads::GridParams;
use crate::world::{build_waypoint_graph, RelationRegistry, RoadWorld};

/// Waypoint spacing used for every route graph.
const WAYPOINT_SPACING: f64 = 5.0;

#[derive(Debug)]
enum CliError {
    /// Bad configuration or unusable inputs; exit code 2.
    Config(String),
    /// The pipeline ran but some runs failed; exit code 1.
    Partial(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Partial(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Partial(m) => m,
        }
    }
}

fn config_err<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Spec source files; the file stem names the spec's output directory.
    pub specs: Vec<PathBuf>,
    /// World file (serialized RoadWorld JSON); when absent, `grid` is built.
    pub world_file: Option<PathBuf>,
    pub grid: GridParams,
    /// Maximum node count per entity type; unlisted types default to 1.
    pub node_budget: BTreeMap<String, u32>,
    pub scenes_per_rg: u32,
    pub paths_per_scene: u32,
    pub agent: String,
    pub speed_law: SpeedLawParams,
    pub duration: f64,
    pub frame_rate: f64,
    pub master_seed: u64,
    /// Permutation count for the coverage curve.
    pub permutations: usize,
    /// Rejection-sampling attempts per scene.
    pub sample_tries: u32,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            specs: Vec::new(),
            world_file: None,
            grid: GridParams::default(),
            node_budget: BTreeMap::new(),
            scenes_per_rg: 2,
            paths_per_scene: 2,
            agent: "follower".to_string(),
            speed_law: SpeedLawParams::default(),
            duration: 30.0,
            frame_rate: 20.0,
            master_seed: 0,
            permutations: 200,
            sample_tries: DEFAULT_MAX_TRIES,
            jobs: 1,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<(), CliError> {
        if self.specs.is_empty() {
            return Err(CliError::Config("no spec files configured".into()));
        }
        for s in &self.specs {
            if !s.is_file() {
                return Err(CliError::Config(format!("spec file not found: {}", s.display())));
            }
        }
        if let Some(w) = &self.world_file {
            if !w.is_file() {
                return Err(CliError::Config(format!("world file not found: {}", w.display())));
            }
        }
        if self.scenes_per_rg == 0
            || self.paths_per_scene == 0
            || self.permutations == 0
            || self.sample_tries == 0
            || self.jobs == 0
        {
            return Err(CliError::Config("all counts must be at least 1".into()));
        }
        if self.duration <= 0.0 || self.frame_rate <= 0.0 {
            return Err(CliError::Config("duration and frame rate must be positive".into()));
        }
        Ok(())
    }

    fn world(&self) -> Result<RoadWorld, CliError> {
        match &self.world_file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(config_err)?;
                serde_json::from_str(&text).map_err(config_err)
            }
            None => RoadWorld::grid(&self.grid).map_err(config_err),
        }
    }

    fn budget(&self) -> NodeBudget {
        self.node_budget.clone()
    }
}

/// Derive a stage seed from the master seed. Hashing the stage name and index
/// keeps every stage's randomness independent: adding a stage never perturbs
/// the seeds of existing ones.
pub fn derive_seed(master: u64, stage: &str, index: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(stage.as_bytes());
    h.update(index.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

#[derive(Parser)]
#[command(name = "specsim", about = "Specification-driven scenario generation and coverage")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the configured master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured parallel job count.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the configured agent.
    #[arg(long)]
    agent: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate relational graphs, scenes, and scenario scripts.
    Generate(CommonArgs),
    /// Simulate every generated script into a trace.
    Simulate(CommonArgs),
    /// Compute coverage reports and curves from recorded traces.
    Evaluate(CommonArgs),
    /// Generate, simulate, and evaluate in one invocation.
    RunAll(CommonArgs),
    /// Random-placement control treatment of the same size as the directed
    /// pipeline.
    BaselineRandom {
        #[command(flatten)]
        common: CommonArgs,
        /// NPC count multiplier, 1 or 10.
        #[arg(long, default_value_t = 1)]
        multiplier: u32,
    },
}

fn load_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg: RunConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        cfg.jobs = jobs;
    }
    if let Some(agent) = &args.agent {
        cfg.agent = agent.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run() -> i32 {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Generate(args) => load_config(args).and_then(|c| cmd_generate(&c)),
        Cmd::Simulate(args) => load_config(args).and_then(|c| cmd_simulate(&c)),
        Cmd::Evaluate(args) => load_config(args).and_then(|c| cmd_evaluate(&c)),
        Cmd::RunAll(args) => load_config(args).and_then(|c| {
            cmd_generate(&c)?;
            cmd_simulate(&c)?;
            cmd_evaluate(&c)
        }),
        Cmd::BaselineRandom { common, multiplier } => {
            load_config(common).and_then(|c| cmd_baseline_random(&c, *multiplier))
        }
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}

/// A spec as loaded for the pipeline: parsed source, its configuration
/// space, and its name (the source file stem).
struct LoadedSpec {
    name: String,
    spec: Spec,
    cs: ConfigurationSpace,
}

fn load_specs(cfg: &RunConfig, registry: &RelationRegistry) -> Result<Vec<LoadedSpec>, CliError> {
    let mut out = Vec::new();
    for path in &cfg.specs {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::Config(format!("unusable spec path: {}", path.display())))?
            .to_string();
        let text = std::fs::read_to_string(path).map_err(config_err)?;
        let mut spec = parse_spec(&text, registry)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        spec.name = name.clone();
        let cs = ConfigurationSpace::build(&spec);
        out.push(LoadedSpec { name, spec, cs });
    }
    Ok(out)
}

/// Union propositions and their derived parts, reconstructed from the
/// derived-proposition names (`p#1`, `p#2`, ...).
fn union_map(cs: &ConfigurationSpace) -> BTreeMap<String, Vec<String>> {
    let mut unions: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for name in cs.derived_aps.keys() {
        if let Some(base) = name.split('#').next() {
            unions.entry(base.to_string()).or_default().push(name.clone());
        }
    }
    unions
}

fn temporal_depth(f: &Formula) -> usize {
    match f {
        Formula::Ap(_) => 0,
        Formula::Not(g) | Formula::Next(g) | Formula::WeakNext(g) => {
            let d = temporal_depth(g);
            if matches!(f, Formula::Not(_)) {
                d
            } else {
                d + 1
            }
        }
        Formula::Eventually(g) | Formula::Globally(g) => temporal_depth(g) + 1,
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            temporal_depth(a).max(temporal_depth(b))
        }
        Formula::Until(a, b) => temporal_depth(a).max(temporal_depth(b)) + 1,
    }
}

/// Whether two formulas agree on every proposition trace up to `max_len`
/// frames over the base vocabulary. Union propositions are resolved as the
/// disjunction of their parts, so formulas over the original and the derived
/// vocabulary can be compared.
fn formulas_agree(
    a: &Formula,
    b: &Formula,
    base: &[String],
    unions: &BTreeMap<String, Vec<String>>,
    max_len: usize,
) -> bool {
    let n = base.len();
    for len in 1..=max_len {
        let bits = n * len;
        if bits > 22 {
            // The vocabulary is too wide to enumerate; fall back to
            // structural equality.
            return a == b;
        }
        for m in 0u64..(1u64 << bits) {
            let truth_base = |i: usize, name: &str| -> bool {
                base.iter()
                    .position(|x| x == name)
                    .is_some_and(|k| m >> (i * n + k) & 1 == 1)
            };
            let truth = |i: usize, name: &str| -> bool {
                match unions.get(name) {
                    Some(parts) => parts.iter().any(|p| truth_base(i, p)),
                    None => truth_base(i, name),
                }
            };
            if eval_ltlf_with(a, len, 0, &truth) != eval_ltlf_with(b, len, 0, &truth) {
                return false;
            }
        }
    }
    true
}

/// Map each split-case formula index to the configurations it coincides
/// with, by agreement on bounded proposition traces.
fn configurations_of_formulas(
    spec: &Spec,
    cs: &ConfigurationSpace,
    formulas: &[Formula],
) -> Vec<Vec<String>> {
    let unions = union_map(cs);
    let mut base: BTreeSet<String> = cs.derived_aps.keys().cloned().collect();
    base.extend(spec.ap_table.keys().filter(|k| !unions.contains_key(*k)).cloned());
    let base: Vec<String> = base.into_iter().collect();
    let depth = formulas
        .iter()
        .chain(cs.configurations.iter().map(|c| &c.formula))
        .map(temporal_depth)
        .max()
        .unwrap_or(0);
    let max_len = (depth + 2).min(4).max(2);

    formulas
        .iter()
        .map(|f| {
            cs.configurations
                .iter()
                .filter(|c| formulas_agree(f, &c.formula, &base, &unions, max_len))
                .map(|c| c.id.clone())
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RgRecord {
    pub rg_id: String,
    pub feasible: bool,
    pub configuration_ids: Vec<String>,
    pub scenes: Vec<String>,
    pub scripts: Vec<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationReport {
    pub spec: String,
    pub rgs: Vec<RgRecord>,
    pub diagnostics: Vec<String>,
}

impl GenerationReport {
    /// Configurations attached to at least one feasible graph.
    pub fn feasible_configurations(&self) -> BTreeSet<String> {
        self.rgs
            .iter()
            .filter(|r| r.feasible)
            .flat_map(|r| r.configuration_ids.iter().cloned())
            .collect()
    }
}

fn spec_dir(cfg: &RunConfig, spec: &str) -> PathBuf {
    cfg.out_dir.join(spec)
}

fn ensure_layout(dir: &Path) -> Result<(), CliError> {
    for sub in ["rgs", "scenes", "scripts", "traces", "reports"] {
        std::fs::create_dir_all(dir.join(sub)).map_err(config_err)?;
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Partial(format!("{}: {e}", path.display())))
}

/// Generation pipeline for one spec, in memory: graphs, per-graph scenes and
/// scripts, and the feasibility record.
struct SpecGeneration {
    report: GenerationReport,
    rgs: Vec<RelationalGraph>,
    scenes: Vec<(String, Scene)>,
    scripts: Vec<ScenarioScript>,
}

fn generate_for_spec(
    loaded: &LoadedSpec,
    cfg: &RunConfig,
    world: &RoadWorld,
    registry: &RelationRegistry,
) -> SpecGeneration {
    let name = &loaded.name;
    let generation = generate_rgs(&loaded.spec, &cfg.budget(), registry);
    let config_ids = configurations_of_formulas(&loaded.spec, &loaded.cs, &generation.formulas);
    let wg = build_waypoint_graph(world, WAYPOINT_SPACING);

    let mut records = Vec::new();
    let mut scenes = Vec::new();
    let mut scripts = Vec::new();

    for (i, rg) in generation.rgs.iter().enumerate() {
        let rg_id = format!("rg{i:03}");
        let mut ids: BTreeSet<String> = BTreeSet::new();
        for &fi in &rg.sources {
            ids.extend(config_ids[fi].iter().cloned());
        }
        let mut record = RgRecord {
            rg_id: rg_id.clone(),
            feasible: false,
            configuration_ids: ids.into_iter().collect(),
            scenes: Vec::new(),
            scripts: Vec::new(),
            diagnostics: Vec::new(),
        };

        let program = match map_rg_to_constraints(rg, registry) {
            Ok(p) => p,
            Err(e) => {
                record.diagnostics.push(format!("constraint mapping failed: {e}"));
                records.push(record);
                continue;
            }
        };

        // Feasibility oracle: the graph is feasible when every requested
        // scene samples successfully.
        let mut rg_scenes = Vec::new();
        let mut feasible = true;
        for s in 0..cfg.scenes_per_rg {
            let seed = derive_seed(cfg.master_seed, &format!("{name}/scene/{rg_id}"), s as u64);
            match sample_initial_scene(
                &program,
                world,
                registry,
                seed,
                cfg.sample_tries,
                cfg.speed_law.v0,
            ) {
                Ok(scene) => rg_scenes.push((s, seed, scene)),
                Err(e) => {
                    record.diagnostics.push(format!("scene {s}: {e}"));
                    feasible = false;
                }
            }
        }
        record.feasible = feasible;
        if !feasible {
            records.push(record);
            continue;
        }

        for (s, scene_seed, scene) in rg_scenes {
            let scene_id = format!("{rg_id}-s{s}");
            record.scenes.push(scene_id.clone());
            scenes.push((scene_id.clone(), scene.clone()));

            let ep_seed =
                derive_seed(cfg.master_seed, &format!("{name}/endpoints/{rg_id}"), s as u64);
            let endpoints = match bind_endpoints(
                rg,
                &scene,
                world,
                &wg,
                registry,
                DEFAULT_R0,
                DEFAULT_R_STEP,
                DEFAULT_R_MAX,
                cfg.speed_law.v0,
                ep_seed,
            ) {
                Ok(b) => b,
                Err(e) => {
                    record.diagnostics.push(format!("scene {s}: endpoint binding: {e}"));
                    continue;
                }
            };

            // Ego gets several diverse route variants; each moving NPC takes
            // its shortest route; parked entities stay unrouted.
            let mut ego_routes = Vec::new();
            let mut npc_routes = Vec::new();
            let mut routing_failed = false;
            for b in &endpoints {
                let entity = scene.entity(&b.entity).expect("binding refers to a scene entity");
                let is_ego = entity.is_ego();
                if !is_ego && entity.speed == 0.0 {
                    continue;
                }
                let k = if is_ego { DEFAULT_K } else { 1 };
                match k_shortest_paths(&wg, &b.entity, b.start, b.goal, k) {
                    Ok(paths) if is_ego => {
                        ego_routes = select_diverse(&paths, cfg.paths_per_scene as usize);
                    }
                    Ok(mut paths) => npc_routes.push(paths.remove(0)),
                    Err(e) => {
                        record.diagnostics.push(format!("scene {s}: routing {}: {e}", b.entity));
                        routing_failed = true;
                        break;
                    }
                }
            }
            if routing_failed || ego_routes.is_empty() {
                continue;
            }

            for j in 0..cfg.paths_per_scene as usize {
                let script_id = format!("{name}-{rg_id}-s{s}-p{j}");
                let script_seed = derive_seed(
                    cfg.master_seed,
                    &format!("{name}/script/{rg_id}-s{s}"),
                    j as u64,
                );
                let mut trajectories = vec![ego_routes[j % ego_routes.len()].clone()];
                trajectories.extend(npc_routes.iter().cloned());
                let script = ScenarioScript {
                    id: script_id.clone(),
                    world: world.clone(),
                    scene: scene.clone(),
                    trajectories,
                    speed_law: cfg.speed_law.clone(),
                    duration: cfg.duration,
                    frame_rate: cfg.frame_rate,
                    seed: script_seed,
                    meta: ScriptMeta {
                        rg_id: rg_id.clone(),
                        configuration_ids: record.configuration_ids.clone(),
                        seed_chain: vec![
                            format!("master={}", cfg.master_seed),
                            format!("{name}/scene/{rg_id}[{s}]={scene_seed}"),
                            format!("{name}/endpoints/{rg_id}[{s}]={ep_seed}"),
                            format!("{name}/script/{rg_id}-s{s}[{j}]={script_seed}"),
                        ],
                    },
                };
                record.scripts.push(script_id);
                scripts.push(script);
            }
        }
        records.push(record);
    }

    SpecGeneration {
        report: GenerationReport {
            spec: name.clone(),
            rgs: records,
            diagnostics: generation.diagnostics,
        },
        rgs: generation.rgs,
        scenes,
        scripts,
    }
}

fn cmd_generate(cfg: &RunConfig) -> Result<(), CliError> {
    let registry = RelationRegistry::new();
    let world = cfg.world()?;
    let specs = load_specs(cfg, &registry)?;

    for loaded in &specs {
        let dir = spec_dir(cfg, &loaded.name);
        ensure_layout(&dir)?;
        let gen = generate_for_spec(loaded, cfg, &world, &registry);
        for (i, rg) in gen.rgs.iter().enumerate() {
            write_file(&dir.join("rgs").join(format!("rg{i:03}.txt")), &rg.to_text())?;
        }
        for (scene_id, scene) in &gen.scenes {
            let json = serde_json::to_string_pretty(scene).expect("scene serializes");
            write_file(&dir.join("scenes").join(format!("{scene_id}.json")), &json)?;
        }
        for script in &gen.scripts {
            write_file(
                &dir.join("scripts").join(format!("{}.json", script.id)),
                &script.to_json(),
            )?;
        }
        let report = serde_json::to_string_pretty(&gen.report).expect("report serializes");
        write_file(&dir.join("reports").join("feasibility.json"), &report)?;
        for d in &gen.report.diagnostics {
            eprintln!("{}: {d}", loaded.name);
        }
    }
    Ok(())
}

fn sorted_files(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| {
            rd.filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == ext))
                .collect()
        })
        .unwrap_or_default();
    files.sort();
    files
}

/// Run every script through the configured agent, writing one trace per
/// script named by its stem. Independent scripts run concurrently up to the
/// job bound.
fn simulate_scripts(
    script_files: &[PathBuf],
    traces_dir: &Path,
    agent: &str,
    jobs: usize,
) -> Result<(), CliError> {
    if script_files.is_empty() {
        return Ok(());
    }
    // Validate the agent name before spawning anything.
    builtin_agent(agent, &[]).map_err(config_err)?;

    let failures: Mutex<Vec<String>> = Mutex::new(Vec::new());
    let jobs = jobs.min(script_files.len());
    std::thread::scope(|scope| {
        for worker in 0..jobs {
            let failures = &failures;
            scope.spawn(move || {
                for path in script_files.iter().skip(worker).step_by(jobs) {
                    let result = std::fs::read_to_string(path)
                        .map_err(|e| format!("{}: {e}", path.display()))
                        .and_then(|text| {
                            ScenarioScript::from_json(&text)
                                .map_err(|e| format!("{}: {e}", path.display()))
                        })
                        .and_then(|script| {
                            let mut a = builtin_agent(agent, &[])
                                .expect("agent name was validated");
                            run_simulation(&script, a.as_mut())
                                .map_err(|e| format!("{}: {e}", script.id))
                        });
                    match result {
                        Ok(trace) => {
                            let stem = path
                                .file_stem()
                                .and_then(|s| s.to_str())
                                .unwrap_or("trace")
                                .to_string();
                            let out = traces_dir.join(format!("{stem}.ndjson"));
                            if let Err(e) = std::fs::write(&out, trace.to_ndjson()) {
                                failures
                                    .lock()
                                    .unwrap()
                                    .push(format!("{}: {e}", out.display()));
                            } else if trace.incomplete {
                                failures
                                    .lock()
                                    .unwrap()
                                    .push(format!("{}: run aborted by agent error", stem));
                            }
                        }
                        Err(e) => failures.lock().unwrap().push(e),
                    }
                }
            });
        }
    });
    let mut failures = failures.into_inner().unwrap();
    if failures.is_empty() {
        Ok(())
    } else {
        failures.sort();
        Err(CliError::Partial(failures.join("; ")))
    }
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    let registry = RelationRegistry::new();
    let specs = load_specs(cfg, &registry)?;
    let mut first_failure: Option<CliError> = None;
    for loaded in &specs {
        let dir = spec_dir(cfg, &loaded.name);
        ensure_layout(&dir)?;
        let scripts = sorted_files(&dir.join("scripts"), "json");
        if let Err(e) = simulate_scripts(&scripts, &dir.join("traces"), &cfg.agent, cfg.jobs) {
            if matches!(e, CliError::Config(_)) {
                return Err(e);
            }
            first_failure.get_or_insert(e);
        }
    }
    match first_failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn read_traces(dir: &Path) -> Result<Vec<Trace>, CliError> {
    let mut traces = Vec::new();
    for path in sorted_files(dir, "ndjson") {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Partial(format!("{}: {e}", path.display())))?;
        traces.push(
            Trace::from_ndjson(&text)
                .map_err(|e| CliError::Partial(format!("{}: {e}", path.display())))?,
        );
    }
    Ok(traces)
}

fn evaluate_into(
    loaded: &LoadedSpec,
    cfg: &RunConfig,
    registry: &RelationRegistry,
    feasible: &BTreeSet<String>,
    traces: &[Trace],
    reports_dir: &Path,
    curve_stage: &str,
) -> Result<(), CliError> {
    let report = compute_coverage(&loaded.spec, &loaded.cs, feasible, traces, registry, &cfg.agent)
        .map_err(|e| CliError::Partial(format!("{}: {e}", loaded.name)))?;
    let per_trace = per_trace_coverage(&loaded.spec, &loaded.cs, traces, registry)
        .map_err(|e| CliError::Partial(format!("{}: {e}", loaded.name)))?;
    let curve_seed = derive_seed(cfg.master_seed, curve_stage, 0);
    let curve = coverage_curve(&per_trace, feasible, cfg.permutations, curve_seed);
    write_file(&reports_dir.join("coverage.json"), &report.to_json())?;
    write_file(&reports_dir.join("coverage.txt"), &report.render_table())?;
    write_file(&reports_dir.join("curve.csv"), &curve_csv(&curve))?;
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig) -> Result<(), CliError> {
    let registry = RelationRegistry::new();
    let specs = load_specs(cfg, &registry)?;
    for loaded in &specs {
        let dir = spec_dir(cfg, &loaded.name);
        ensure_layout(&dir)?;
        let feasibility_path = dir.join("reports").join("feasibility.json");
        let feasibility: GenerationReport = std::fs::read_to_string(&feasibility_path)
            .map_err(|e| CliError::Config(format!("{}: {e}", feasibility_path.display())))
            .and_then(|t| serde_json::from_str(&t).map_err(config_err))?;
        let traces = read_traces(&dir.join("traces"))?;
        evaluate_into(
            loaded,
            cfg,
            &registry,
            &feasibility.feasible_configurations(),
            &traces,
            &dir.join("reports"),
            &format!("{}/curve", loaded.name),
        )?;
    }
    Ok(())
}

/// Baseline treatment: same entity counts (times the multiplier), random
/// legal-lane placements, random forward goals, same agent and machinery,
/// and the same number of runs as the directed pipeline produces.
fn cmd_baseline_random(cfg: &RunConfig, multiplier: u32) -> Result<(), CliError> {
    if multiplier != 1 && multiplier != 10 {
        return Err(CliError::Config(format!(
            "multiplier must be 1 or 10, got {multiplier}"
        )));
    }
    let registry = RelationRegistry::new();
    let world = cfg.world()?;
    let specs = load_specs(cfg, &registry)?;
    let wg = build_waypoint_graph(&world, WAYPOINT_SPACING);
    let free_goals = RelationalGraph::ego_only();

    for loaded in &specs {
        let name = &loaded.name;
        // Regenerate the directed pipeline's graphs and feasibility verdicts
        // (same stage seeds, so identical results) to size the treatment.
        let gen = generate_for_spec(loaded, cfg, &world, &registry);
        let dir = spec_dir(cfg, name).join(format!("baseline-x{multiplier}"));
        ensure_layout(&dir)?;

        let mut scripts = Vec::new();
        let runs_per_rg = (cfg.scenes_per_rg * cfg.paths_per_scene) as u64;
        for (record, rg) in gen.report.rgs.iter().zip(&gen.rgs) {
            if !record.feasible {
                continue;
            }
            let program = map_rg_to_constraints(rg, &registry)
                .map_err(|e| CliError::Partial(format!("{}: {e}", record.rg_id)))?;
            // Ego once, every NPC declaration repeated `multiplier` times.
            let mut entities: Vec<EntityDecl> = Vec::new();
            for decl in &program.entities {
                if decl.id == "ego" {
                    entities.push(decl.clone());
                } else {
                    for m in 0..multiplier {
                        let mut d = decl.clone();
                        if m > 0 {
                            d.id = format!("{}_{m}", decl.id);
                        }
                        entities.push(d);
                    }
                }
            }

            for r in 0..runs_per_rg {
                let rg_id = &record.rg_id;
                let scene_seed = derive_seed(
                    cfg.master_seed,
                    &format!("{name}/baseline{multiplier}/scene/{rg_id}"),
                    r,
                );
                let scene = sample_random_scene(
                    &entities,
                    &world,
                    scene_seed,
                    cfg.sample_tries,
                    cfg.speed_law.v0,
                )
                .map_err(|e| CliError::Partial(format!("{rg_id} run {r}: {e}")))?;

                let ep_seed = derive_seed(
                    cfg.master_seed,
                    &format!("{name}/baseline{multiplier}/endpoints/{rg_id}"),
                    r,
                );
                let endpoints = bind_endpoints(
                    &free_goals,
                    &scene,
                    &world,
                    &wg,
                    &registry,
                    DEFAULT_R0,
                    DEFAULT_R_STEP,
                    DEFAULT_R_MAX,
                    cfg.speed_law.v0,
                    ep_seed,
                )
                .map_err(|e| CliError::Partial(format!("{rg_id} run {r}: {e}")))?;

                let mut trajectories: Vec<Trajectory> = Vec::new();
                for b in &endpoints {
                    let entity = scene.entity(&b.entity).expect("binding matches scene");
                    if !entity.is_ego() && entity.speed == 0.0 {
                        continue;
                    }
                    let mut paths = k_shortest_paths(&wg, &b.entity, b.start, b.goal, 1)
                        .map_err(|e| CliError::Partial(format!("{rg_id} run {r}: {e}")))?;
                    trajectories.push(paths.remove(0));
                }

                let script_id = format!("{name}-base{multiplier}-{rg_id}-r{r}");
                scripts.push(ScenarioScript {
                    id: script_id,
                    world: world.clone(),
                    scene,
                    trajectories,
                    speed_law: cfg.speed_law.clone(),
                    duration: cfg.duration,
                    frame_rate: cfg.frame_rate,
                    seed: scene_seed,
                    meta: ScriptMeta {
                        rg_id: rg_id.clone(),
                        configuration_ids: record.configuration_ids.clone(),
                        seed_chain: vec![
                            format!("master={}", cfg.master_seed),
                            format!("{name}/baseline{multiplier}/scene/{rg_id}[{r}]={scene_seed}"),
                            format!("{name}/baseline{multiplier}/endpoints/{rg_id}[{r}]={ep_seed}"),
                        ],
                    },
                });
            }
        }

        for (scene_idx, script) in scripts.iter().enumerate() {
            let json = serde_json::to_string_pretty(&script.scene).expect("scene serializes");
            write_file(&dir.join("scenes").join(format!("scene{scene_idx:03}.json")), &json)?;
            write_file(
                &dir.join("scripts").join(format!("{}.json", script.id)),
                &script.to_json(),
            )?;
        }

        let script_files = sorted_files(&dir.join("scripts"), "json");
        simulate_scripts(&script_files, &dir.join("traces"), &cfg.agent, cfg.jobs)?;
        let traces = read_traces(&dir.join("traces"))?;
        evaluate_into(
            loaded,
            cfg,
            &registry,
            &gen.report.feasible_configurations(),
            &traces,
            &dir.join("reports"),
            &format!("{name}/baseline{multiplier}/curve"),
        )?;
    }
    Ok(())
}
