//! Initial-scene synthesis: translate an RG's initial-state constraints into
//! a constraint program and sample concrete entity placements on the road
//! network by seeded rejection sampling. A successful sample is a
//! constructive proof that the RG is physically realizable on the map; the
//! sampler failing within its retry budget is how infeasible RGs are
//! detected.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rg::{RelationalGraph, TemporalTag};
use crate::world::relations::{pair_predicate, INTERSECTION_MARGIN, NEAR_MAX, TOO_CLOSE_MAX};
use crate::world::roads::point_in_polygon;
use crate::world::scene_graph::{intersection_vertex, lane_vertex};
use crate::world::{
    compute_scene_graph, dist, is_dynamic_type, is_static_type, Attributes, EntityState, Pose,
    RelationKind, RelationRegistry, RoadWorld,
};

/// Minimum center-to-center separation between placed entities, so sampled
/// scenes never start in collision.
const MIN_SEPARATION: f64 = 5.0;
/// Arc-length step between candidate poses along each lane.
const CANDIDATE_SPACING: f64 = 1.0;
/// Margin kept from lane ends when enumerating candidate poses.
const LANE_END_MARGIN: f64 = 2.0;
/// Distance past a metric predicate boundary used when placing an entity
/// whose relation must flip at the next time slice: close enough that normal
/// closing speeds cross the boundary within one frame.
const FLIP_MARGIN: f64 = 0.1;

pub const DEFAULT_MAX_TRIES: u32 = 500;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("no scene-constraint mapping for relation `{0}`")]
    UnmappedRelation(String),
    #[error("no satisfying scene found within {tries} tries")]
    Unsatisfiable { tries: u32 },
    #[error("relational graph has no ego node")]
    MissingEgo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityDecl {
    pub id: String,
    pub entity_type: String,
    pub attrs: Attributes,
    /// Entity starts at rest (from a `stopped` self-loop at tag I).
    pub initially_stopped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConstraint {
    pub rel: String,
    pub src: String,
    pub dst: String,
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticDecl {
    pub id: String,
    /// `Lane` or `Intersection`.
    pub kind: String,
    /// Binding hint: only lanes with stop signage qualify.
    pub requires_stop: bool,
}

/// The initial-state constraint program extracted from an RG: entity
/// declarations, hard relation constraints (I-tagged edges only; later-tagged
/// edges constrain trajectories, not the initial scene), and the static
/// features that must be bound to concrete map elements.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneConstraintProgram {
    pub entities: Vec<EntityDecl>,
    pub constraints: Vec<SceneConstraint>,
    pub statics: Vec<StaticDecl>,
    /// Pair relations forbidden initially but required at a later time
    /// slice. The sampler places such pairs just outside the relation's
    /// metric boundary so the flip can happen within a frame.
    #[serde(default)]
    pub flips: Vec<SceneConstraint>,
}

/// A concrete sampled scene: one initial state per entity plus the binding
/// of RG static nodes to map features and the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub entities: Vec<EntityState>,
    /// RG static node id -> scene-graph vertex id (`lane:<n>` etc.).
    pub binding: BTreeMap<String, String>,
    pub seed: u64,
}

impl Scene {
    pub fn ego(&self) -> &EntityState {
        self.entities.iter().find(|e| e.is_ego()).expect("scene has an ego")
    }

    pub fn entity(&self, id: &str) -> Option<&EntityState> {
        self.entities.iter().find(|e| e.id == id)
    }
}

/// Translate an RG into a scene constraint program. Every I-tagged edge
/// becomes a hard constraint; attribute edges additionally configure the
/// entity declaration so the sampled state exhibits them by construction.
pub fn map_rg_to_constraints(
    rg: &RelationalGraph,
    registry: &RelationRegistry,
) -> Result<SceneConstraintProgram, SceneError> {
    if rg.node("ego").is_none() {
        return Err(SceneError::MissingEgo);
    }
    let mut entities: Vec<EntityDecl> = rg
        .nodes
        .iter()
        .filter(|n| n.entity_type == "ego" || is_dynamic_type(&n.entity_type))
        .map(|n| EntityDecl {
            id: n.id.clone(),
            entity_type: n.entity_type.clone(),
            attrs: Attributes::default(),
            initially_stopped: false,
        })
        .collect();
    // Ego first, then RG node order.
    entities.sort_by_key(|e| if e.id == "ego" { 0 } else { 1 });

    let mut statics: Vec<StaticDecl> = rg
        .nodes
        .iter()
        .filter(|n| is_static_type(&n.entity_type))
        .map(|n| StaticDecl { id: n.id.clone(), kind: n.entity_type.clone(), requires_stop: false })
        .collect();

    let mut constraints = Vec::new();
    for e in &rg.edges {
        if e.tag != TemporalTag::I {
            continue;
        }
        let def = registry
            .get(&e.rel)
            .ok_or_else(|| SceneError::UnmappedRelation(e.rel.clone()))?;
        if def.kind == RelationKind::Attribute && !e.negative {
            if let Some(decl) = entities.iter_mut().find(|d| d.id == e.src) {
                match e.rel.as_str() {
                    "stopped" => decl.initially_stopped = true,
                    "hasEmergencyLights" => decl.attrs.emergency_lights = true,
                    "sirens" => decl.attrs.sirens = true,
                    _ => {}
                }
            }
        }
        if e.rel == "hasStop" {
            if let Some(s) = statics.iter_mut().find(|s| s.id == e.dst) {
                s.requires_stop = true;
            }
        }
        constraints.push(SceneConstraint {
            rel: e.rel.clone(),
            src: e.src.clone(),
            dst: e.dst.clone(),
            negative: e.negative,
        });
    }

    let mut flips = Vec::new();
    for e in &rg.edges {
        if e.tag == TemporalTag::I || e.negative {
            continue;
        }
        let is_pair = registry.get(&e.rel).is_some_and(|d| d.kind == RelationKind::Pair);
        let forbidden_initially = rg.edges.iter().any(|i| {
            i.tag == TemporalTag::I && i.negative && i.rel == e.rel && i.src == e.src && i.dst == e.dst
        });
        if is_pair && forbidden_initially {
            flips.push(SceneConstraint {
                rel: e.rel.clone(),
                src: e.src.clone(),
                dst: e.dst.clone(),
                negative: false,
            });
        }
    }

    Ok(SceneConstraintProgram { entities, constraints, statics, flips })
}

/// A candidate pose on a lane centerline.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    pose: Pose,
    lane: u32,
}

fn candidate_poses(world: &RoadWorld) -> Vec<Candidate> {
    let mut out = Vec::new();
    for lane in &world.lanes {
        let len = lane.length();
        let mut arc = LANE_END_MARGIN;
        while arc <= len - LANE_END_MARGIN {
            let (p, heading) = lane.point_at(arc);
            out.push(Candidate { pose: Pose::new(p[0], p[1], heading), lane: lane.id });
            arc += CANDIDATE_SPACING;
        }
    }
    out
}

fn make_state(decl: &EntityDecl, pose: Pose, nominal_speed: f64) -> EntityState {
    let speed = if decl.initially_stopped { 0.0 } else { nominal_speed };
    EntityState {
        id: decl.id.clone(),
        entity_type: if decl.entity_type == "ego" { "ego".into() } else { decl.entity_type.clone() },
        pose,
        speed,
        attrs: decl.attrs.clone(),
    }
}

/// Outer boundary of a relation's distance band, if it has one.
fn gap_boundary(rel: &str) -> Option<f64> {
    match rel {
        "tooClose" => Some(TOO_CLOSE_MAX),
        "near" => Some(NEAR_MAX),
        _ => None,
    }
}

/// Slide a candidate along its lane heading so its distance to `reference`
/// becomes exactly `target`, staying within one lattice step of the original.
fn adjust_to_gap(c: &Candidate, reference: [f64; 2], target: f64) -> Option<Candidate> {
    let f = [c.pose.heading.cos(), c.pose.heading.sin()];
    let w = crate::world::sub(c.pose.position(), reference);
    let b = crate::world::dot(w, f);
    let disc = b * b - (crate::world::dot(w, w) - target * target);
    if disc < 0.0 {
        return None;
    }
    let r = disc.sqrt();
    let t = if (-b - r).abs() <= (-b + r).abs() { -b - r } else { -b + r };
    if t.abs() > CANDIDATE_SPACING {
        return None;
    }
    Some(Candidate {
        pose: Pose::new(c.pose.x + t * f[0], c.pose.y + t * f[1], c.pose.heading),
        lane: c.lane,
    })
}

/// Check the static constraints that mention `id` against a candidate state,
/// under the chosen binding. `opposingClear` is left to final verification.
fn static_ok(
    world: &RoadWorld,
    program: &SceneConstraintProgram,
    binding: &BTreeMap<String, u32>,
    state: &EntityState,
) -> bool {
    for c in &program.constraints {
        if c.src != state.id {
            continue;
        }
        let Some(&bound) = binding.get(&c.dst) else { continue };
        let holds = match c.rel.as_str() {
            "hasStop" | "onlyIn" => world.lane_of(state.pose.position()) == Some(bound),
            "atIntersection" => world
                .intersections
                .iter()
                .find(|j| j.id == bound)
                .is_some_and(|j| j.contains(state.pose.position(), INTERSECTION_MARGIN)),
            "fullyInIntersection" => world.intersections.iter().find(|j| j.id == bound).is_some_and(
                |j| {
                    crate::world::relations::footprint_corners(state)
                        .iter()
                        .all(|&p| point_in_polygon(p, &j.polygon))
                },
            ),
            "opposingClear" => true,
            _ => continue,
        };
        if holds == c.negative {
            return false;
        }
    }
    true
}

/// Check all pair constraints between a candidate state and the already
/// placed entities (in both edge directions).
fn pairs_ok(
    world: &RoadWorld,
    registry: &RelationRegistry,
    program: &SceneConstraintProgram,
    placed: &[EntityState],
    state: &EntityState,
) -> bool {
    for c in &program.constraints {
        let def = registry.get(&c.rel).expect("constraints use registry relations");
        if def.kind != RelationKind::Pair {
            continue;
        }
        let (src, dst) = if c.src == state.id {
            let Some(other) = placed.iter().find(|p| p.id == c.dst) else { continue };
            (state, other)
        } else if c.dst == state.id {
            let Some(other) = placed.iter().find(|p| p.id == c.src) else { continue };
            (other, state)
        } else {
            continue;
        };
        if pair_predicate(world, &c.rel, src, dst) == c.negative {
            return false;
        }
    }
    true
}

/// Map a constraint's destination to the scene-graph vertex id it must
/// (not) be related to.
fn dst_vertex(
    c: &SceneConstraint,
    program: &SceneConstraintProgram,
    binding: &BTreeMap<String, u32>,
) -> Option<String> {
    if program.entities.iter().any(|e| e.id == c.dst) {
        return Some(c.dst.clone());
    }
    let s = program.statics.iter().find(|s| s.id == c.dst)?;
    let bound = *binding.get(&c.dst)?;
    Some(if s.kind == "Lane" { lane_vertex(bound) } else { intersection_vertex(bound) })
}

/// Verify every constraint against the ground-truth scene graph of the
/// candidate states.
pub fn verify_scene(
    world: &RoadWorld,
    program: &SceneConstraintProgram,
    binding: &BTreeMap<String, u32>,
    states: &[EntityState],
) -> bool {
    let sg = compute_scene_graph(world, states);
    program.constraints.iter().all(|c| {
        let Some(dst) = dst_vertex(c, program, binding) else { return false };
        sg.has_edge(&c.rel, &c.src, &dst) != c.negative
    })
}

/// Sample an initial scene satisfying the program by rejection: bind static
/// features, place the ego, then each NPC from the candidate poses that pass
/// its constraints against everything already placed, and accept the first
/// assignment whose ground-truth scene graph verifies every constraint.
pub fn sample_initial_scene(
    program: &SceneConstraintProgram,
    world: &RoadWorld,
    registry: &RelationRegistry,
    seed: u64,
    max_tries: u32,
    nominal_speed: f64,
) -> Result<Scene, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = candidate_poses(world);

    for _try in 0..max_tries {
        // Bind statics for this attempt.
        let mut binding: BTreeMap<String, u32> = BTreeMap::new();
        let mut bindable = true;
        for s in &program.statics {
            let ids: Vec<u32> = if s.kind == "Lane" {
                world
                    .lanes
                    .iter()
                    .filter(|l| !s.requires_stop || world.has_stop(l.id))
                    .map(|l| l.id)
                    .collect()
            } else {
                world.intersections.iter().map(|j| j.id).collect()
            };
            match ids.choose(&mut rng) {
                Some(&id) => {
                    binding.insert(s.id.clone(), id);
                }
                None => {
                    bindable = false;
                    break;
                }
            }
        }
        if !bindable {
            // Re-rolling cannot help if no feature qualifies at all.
            return Err(SceneError::Unsatisfiable { tries: max_tries });
        }

        let mut placed: Vec<EntityState> = Vec::new();
        let mut ok = true;
        for decl in &program.entities {
            let passes = |c: &Candidate| {
                let state = make_state(decl, c.pose, nominal_speed);
                placed
                    .iter()
                    .all(|p| dist(p.pose.position(), c.pose.position()) >= MIN_SEPARATION)
                    && static_ok(world, program, &binding, &state)
                    && pairs_ok(world, registry, program, &placed, &state)
            };
            let feasible: Vec<&Candidate> = candidates.iter().filter(|c| passes(c)).collect();

            // When a distance-band relation must flip on at the next time
            // slice, bias this entity onto the band boundary so the flip is
            // reachable within a frame; fall back to the plain lattice when
            // no boundary pose passes the constraints.
            let mut boundary: Vec<Candidate> = Vec::new();
            for fc in &program.flips {
                let Some(bound) = gap_boundary(&fc.rel) else { continue };
                let other_id = if fc.src == decl.id {
                    &fc.dst
                } else if fc.dst == decl.id {
                    &fc.src
                } else {
                    continue;
                };
                let Some(other) = placed.iter().find(|p| &p.id == other_id) else { continue };
                let reference = other.pose.position();
                boundary.extend(
                    feasible
                        .iter()
                        .filter_map(|c| adjust_to_gap(c, reference, bound + FLIP_MARGIN))
                        .filter(|c| passes(c)),
                );
            }

            let chosen = match boundary.choose(&mut rng) {
                Some(c) => Some(*c),
                None => feasible.choose(&mut rng).map(|c| **c),
            };
            match chosen {
                Some(c) => placed.push(make_state(decl, c.pose, nominal_speed)),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        if verify_scene(world, program, &binding, &placed) {
            let binding = binding
                .into_iter()
                .map(|(node, id)| {
                    let kind = program.statics.iter().find(|s| s.id == node).unwrap().kind.clone();
                    let v = if kind == "Lane" { lane_vertex(id) } else { intersection_vertex(id) };
                    (node, v)
                })
                .collect();
            return Ok(Scene { entities: placed, binding, seed });
        }
    }
    Err(SceneError::Unsatisfiable { tries: max_tries })
}

/// Sample a baseline scene: the same entities, placed uniformly on legal
/// lanes with only the collision-separation constraint.
pub fn sample_random_scene(
    entities: &[EntityDecl],
    world: &RoadWorld,
    seed: u64,
    max_tries: u32,
    nominal_speed: f64,
) -> Result<Scene, SceneError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates = candidate_poses(world);
    for _try in 0..max_tries {
        let mut placed: Vec<EntityState> = Vec::new();
        let mut ok = true;
        for decl in entities {
            let mut found = false;
            for _ in 0..50 {
                let c = candidates[rng.gen_range(0..candidates.len())];
                if placed
                    .iter()
                    .all(|p| dist(p.pose.position(), c.pose.position()) >= MIN_SEPARATION)
                {
                    placed.push(make_state(decl, c.pose, nominal_speed));
                    found = true;
                    break;
                }
            }
            if !found {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(Scene { entities: placed, binding: BTreeMap::new(), seed });
        }
    }
    Err(SceneError::Unsatisfiable { tries: max_tries })
}
