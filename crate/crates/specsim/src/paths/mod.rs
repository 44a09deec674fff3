//! Trajectory planning on the waypoint graph: bind per-entity endpoints from
//! the relational graph, enumerate K shortest loopless paths (Yen's
//! algorithm), and pick a structurally diverse subset by greedy max-average
//! path distance.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rg::{RelationalGraph, TemporalTag};
use crate::scene::Scene;
use crate::world::relations::{pair_predicate, INTERSECTION_MARGIN};
use crate::world::{
    dist, EntityState, Pose, RelationKind, RelationRegistry, RoadWorld, WaypointGraph,
};

/// Number of equally spaced samples used when comparing two paths.
const RESAMPLE_POINTS: usize = 50;

pub const DEFAULT_R0: f64 = 20.0;
pub const DEFAULT_R_STEP: f64 = 20.0;
pub const DEFAULT_R_MAX: f64 = 120.0;
pub const DEFAULT_K: usize = 8;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("no feasible goal waypoint within radius {r_max} m for `{entity}`")]
    NoFeasibleEndpoint { entity: String, r_max: f64 },
    #[error("no path between waypoints {start} and {goal}")]
    NoPath { start: u32, goal: u32 },
    #[error("entity `{0}` has no waypoint near its pose")]
    NoStartWaypoint(String),
}

/// A simple path on the waypoint graph with its resolved geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub entity: String,
    pub waypoints: Vec<u32>,
    pub length: f64,
    pub polyline: Vec<[f64; 2]>,
}

impl Trajectory {
    pub fn from_waypoints(entity: &str, waypoints: Vec<u32>, wg: &WaypointGraph) -> Trajectory {
        let mut length = 0.0;
        for w in waypoints.windows(2) {
            let edge = wg.edge_between(w[0], w[1]).expect("consecutive waypoints are connected");
            length += edge.length;
        }
        let polyline = waypoints.iter().map(|&w| wg.node(w).position).collect();
        Trajectory { entity: entity.to_string(), waypoints, length, polyline }
    }

    /// Simple (no repeated waypoint) and edge-connected.
    pub fn is_graph_valid(&self, wg: &WaypointGraph) -> bool {
        let unique: BTreeSet<&u32> = self.waypoints.iter().collect();
        unique.len() == self.waypoints.len()
            && self.waypoints.windows(2).all(|w| wg.edge_between(w[0], w[1]).is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointBinding {
    pub entity: String,
    pub start: u32,
    pub goal: u32,
    /// Search radius at which the goal was found.
    pub radius: f64,
}

/// Dijkstra with banned nodes/edges, deterministic: the heap breaks cost ties
/// by node id and adjacency is iterated in destination order.
fn dijkstra(
    wg: &WaypointGraph,
    start: u32,
    goal: u32,
    banned_nodes: &BTreeSet<u32>,
    banned_edges: &BTreeSet<(u32, u32)>,
) -> Option<(Vec<u32>, f64)> {
    #[derive(PartialEq)]
    struct State {
        cost: f64,
        node: u32,
    }
    impl Eq for State {}
    impl Ord for State {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            // Reversed for a min-heap.
            other.cost.total_cmp(&self.cost).then(other.node.cmp(&self.node))
        }
    }
    impl PartialOrd for State {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }

    let n = wg.nodes.len();
    let mut best = vec![f64::INFINITY; n];
    let mut prev: Vec<Option<u32>> = vec![None; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    best[start as usize] = 0.0;
    heap.push(State { cost: 0.0, node: start });

    while let Some(State { cost, node }) = heap.pop() {
        if done[node as usize] {
            continue;
        }
        done[node as usize] = true;
        if node == goal {
            break;
        }
        for e in wg.outgoing(node) {
            if banned_nodes.contains(&e.dst) || banned_edges.contains(&(e.src, e.dst)) {
                continue;
            }
            let next = cost + e.length;
            if next < best[e.dst as usize] {
                best[e.dst as usize] = next;
                prev[e.dst as usize] = Some(node);
                heap.push(State { cost: next, node: e.dst });
            }
        }
    }

    if !best[goal as usize].is_finite() {
        return None;
    }
    let mut path = vec![goal];
    while let Some(p) = prev[*path.last().unwrap() as usize] {
        path.push(p);
    }
    path.reverse();
    Some((path, best[goal as usize]))
}

/// Up to `k` loopless paths from `start` to `goal` in nondecreasing length,
/// ties broken by lexicographic waypoint-id sequence.
pub fn k_shortest_paths(
    wg: &WaypointGraph,
    entity: &str,
    start: u32,
    goal: u32,
    k: usize,
) -> Result<Vec<Trajectory>, PathError> {
    assert!(k >= 1, "k must be at least 1");
    let no_nodes = BTreeSet::new();
    let no_edges = BTreeSet::new();
    let first = dijkstra(wg, start, goal, &no_nodes, &no_edges)
        .ok_or(PathError::NoPath { start, goal })?;

    let mut accepted: Vec<(Vec<u32>, f64)> = vec![first];
    // Candidate pool ordered by (length, waypoint sequence).
    let mut pool: BTreeSet<(u64, Vec<u32>)> = BTreeSet::new();
    let cost_key = |c: f64| c.to_bits();

    while accepted.len() < k {
        let (last_path, _) = accepted.last().unwrap().clone();
        for i in 0..last_path.len() - 1 {
            let spur = last_path[i];
            let root = &last_path[..=i];
            let mut banned_edges = BTreeSet::new();
            for (p, _) in &accepted {
                if p.len() > i && p[..=i] == *root {
                    banned_edges.insert((p[i], p[i + 1]));
                }
            }
            let banned_nodes: BTreeSet<u32> = root[..i].iter().copied().collect();
            if let Some((tail, tail_cost)) = dijkstra(wg, spur, goal, &banned_nodes, &banned_edges)
            {
                let mut path = root[..i].to_vec();
                path.extend(tail);
                let cost: f64 = path
                    .windows(2)
                    .map(|w| wg.edge_between(w[0], w[1]).unwrap().length)
                    .sum();
                debug_assert!((cost - tail_cost).abs() < 1e6);
                if !accepted.iter().any(|(p, _)| *p == path) {
                    pool.insert((cost_key(cost), path));
                }
            }
        }
        match pool.iter().next().cloned() {
            Some(entry) => {
                pool.remove(&entry);
                let (bits, path) = entry;
                accepted.push((path, f64::from_bits(bits)));
            }
            None => break,
        }
    }

    Ok(accepted
        .into_iter()
        .map(|(p, _)| Trajectory::from_waypoints(entity, p, wg))
        .collect())
}

/// Resample a polyline to `n` points equally spaced by arc length.
pub fn resample(polyline: &[[f64; 2]], n: usize) -> Vec<[f64; 2]> {
    assert!(!polyline.is_empty() && n >= 2);
    if polyline.len() == 1 {
        return vec![polyline[0]; n];
    }
    let mut cum = vec![0.0];
    for w in polyline.windows(2) {
        cum.push(cum.last().unwrap() + dist(w[0], w[1]));
    }
    let total = *cum.last().unwrap();
    if total == 0.0 {
        return vec![polyline[0]; n];
    }
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        let target = total * i as f64 / (n - 1) as f64;
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < target {
            seg += 1;
        }
        let seg_len = cum[seg + 1] - cum[seg];
        let t = if seg_len == 0.0 { 0.0 } else { (target - cum[seg]) / seg_len };
        let a = polyline[seg];
        let b = polyline[seg + 1];
        out.push([a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]);
    }
    out
}

/// Average pointwise Euclidean distance between the two paths after
/// arc-length resampling to a common point count.
pub fn path_distance(p: &Trajectory, q: &Trajectory) -> f64 {
    let a = resample(&p.polyline, RESAMPLE_POINTS);
    let b = resample(&q.polyline, RESAMPLE_POINTS);
    a.iter().zip(&b).map(|(x, y)| dist(*x, *y)).sum::<f64>() / RESAMPLE_POINTS as f64
}

/// Greedy diverse subset: seeded with the shortest candidate, then repeatedly
/// the candidate maximizing average distance to the already-selected set.
/// Ties go to the shorter path, then the lexicographically smaller waypoint
/// sequence. Returns all candidates when `count` exceeds their number.
pub fn select_diverse(candidates: &[Trajectory], count: usize) -> Vec<Trajectory> {
    assert!(count >= 1 && !candidates.is_empty());
    let mut remaining: Vec<&Trajectory> = candidates.iter().collect();
    let seed_idx = remaining
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            a.length.total_cmp(&b.length).then_with(|| a.waypoints.cmp(&b.waypoints))
        })
        .map(|(i, _)| i)
        .unwrap();
    let mut selected = vec![remaining.remove(seed_idx).clone()];

    while selected.len() < count && !remaining.is_empty() {
        let best_idx = remaining
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| {
                let da = average_distance(a, &selected);
                let db = average_distance(b, &selected);
                da.total_cmp(&db)
                    .then_with(|| b.length.total_cmp(&a.length))
                    .then_with(|| b.waypoints.cmp(&a.waypoints))
            })
            .map(|(i, _)| i)
            .unwrap();
        selected.push(remaining.remove(best_idx).clone());
    }
    selected
}

pub fn average_distance(p: &Trajectory, selected: &[Trajectory]) -> f64 {
    selected.iter().map(|q| path_distance(p, q)).sum::<f64>() / selected.len() as f64
}

/// A hypothetical state of an entity at its goal waypoint, used to evaluate
/// relational constraints between planned endpoints.
fn goal_state(entity: &EntityState, wg: &WaypointGraph, wp: u32, speed: f64) -> EntityState {
    let w = wg.node(wp);
    EntityState {
        id: entity.id.clone(),
        entity_type: entity.entity_type.clone(),
        pose: Pose::new(w.position[0], w.position[1], w.heading),
        speed,
        attrs: entity.attrs,
    }
}

/// Whether a candidate goal satisfies the later-tagged RG constraints that
/// relate `entity` to entities whose goals are already bound.
fn goal_ok(
    rg: &RelationalGraph,
    scene: &Scene,
    world: &RoadWorld,
    wg: &WaypointGraph,
    registry: &RelationRegistry,
    bound: &BTreeMap<String, u32>,
    entity: &EntityState,
    wp: u32,
    nominal_speed: f64,
) -> bool {
    let cand = goal_state(entity, wg, wp, nominal_speed);
    for e in &rg.edges {
        if e.tag == TemporalTag::I {
            continue;
        }
        let def = match registry.get(&e.rel) {
            Some(d) => d,
            None => continue,
        };
        match def.kind {
            RelationKind::Pair => {
                let (src, dst) = if e.src == entity.id {
                    let Some(&g) = bound.get(&e.dst) else { continue };
                    let Some(other) = scene.entity(&e.dst) else { continue };
                    (cand.clone(), goal_state(other, wg, g, nominal_speed))
                } else if e.dst == entity.id {
                    let Some(&g) = bound.get(&e.src) else { continue };
                    let Some(other) = scene.entity(&e.src) else { continue };
                    (goal_state(other, wg, g, nominal_speed), cand.clone())
                } else {
                    continue;
                };
                if pair_predicate(world, &e.rel, &src, &dst) == e.negative {
                    return false;
                }
            }
            RelationKind::Static if e.src == entity.id => {
                let Some(vertex) = scene.binding.get(&e.dst) else { continue };
                let holds = match e.rel.as_str() {
                    "atIntersection" | "fullyInIntersection" => {
                        vertex.strip_prefix("intersection:").is_some_and(|id| {
                            let id: u32 = id.parse().unwrap();
                            world
                                .intersection(id)
                                .contains(cand.pose.position(), INTERSECTION_MARGIN)
                        })
                    }
                    "hasStop" | "onlyIn" | "opposingClear" => {
                        vertex.strip_prefix("lane:").is_some_and(|id| {
                            let id: u32 = id.parse().unwrap();
                            world.lane_of(cand.pose.position()) == Some(id)
                        })
                    }
                    _ => continue,
                };
                if holds == e.negative {
                    return false;
                }
            }
            _ => {}
        }
    }
    true
}

/// Bind one entity's endpoints given the goals already fixed for earlier
/// entities.
#[allow(clippy::too_many_arguments)]
pub fn bind_one(
    rg: &RelationalGraph,
    scene: &Scene,
    world: &RoadWorld,
    wg: &WaypointGraph,
    registry: &RelationRegistry,
    bound: &BTreeMap<String, u32>,
    entity: &EntityState,
    r0: f64,
    r_step: f64,
    r_max: f64,
    nominal_speed: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EndpointBinding, PathError> {
    assert!(r0 > 0.0);
    let start = wg
        .nearest(&entity.pose)
        .ok_or_else(|| PathError::NoStartWaypoint(entity.id.clone()))?;
    // Forward-biased reference point: goals behind the entity are useless.
    let fwd = entity.pose.forward();
    let reference = [
        entity.pose.x + fwd[0] * 0.5 * r0,
        entity.pose.y + fwd[1] * 0.5 * r0,
    ];

    // Only goals reachable from the start qualify; discs on a one-way network
    // routinely cover opposing-direction waypoints.
    let mut reachable = vec![false; wg.nodes.len()];
    let mut stack = vec![start];
    reachable[start as usize] = true;
    while let Some(n) = stack.pop() {
        for e in wg.outgoing(n) {
            if !reachable[e.dst as usize] {
                reachable[e.dst as usize] = true;
                stack.push(e.dst);
            }
        }
    }

    let mut r = r0;
    loop {
        let feasible: Vec<u32> = wg
            .nodes
            .iter()
            .filter(|w| {
                w.id != start
                    && reachable[w.id as usize]
                    && !bound.values().any(|&g| g == w.id)
                    && dist(w.position, reference) <= r
                    && goal_ok(rg, scene, world, wg, registry, bound, entity, w.id, nominal_speed)
            })
            .map(|w| w.id)
            .collect();
        if let Some(&goal) = feasible.choose(rng) {
            return Ok(EndpointBinding { entity: entity.id.clone(), start, goal, radius: r });
        }
        if r >= r_max {
            return Err(PathError::NoFeasibleEndpoint { entity: entity.id.clone(), r_max });
        }
        r = (r + r_step).min(r_max);
    }
}

/// Bind endpoints for every scene entity, the ego first, each NPC relative to
/// the goals already chosen.
#[allow(clippy::too_many_arguments)]
pub fn bind_endpoints(
    rg: &RelationalGraph,
    scene: &Scene,
    world: &RoadWorld,
    wg: &WaypointGraph,
    registry: &RelationRegistry,
    r0: f64,
    r_step: f64,
    r_max: f64,
    nominal_speed: f64,
    seed: u64,
) -> Result<Vec<EndpointBinding>, PathError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bound: BTreeMap<String, u32> = BTreeMap::new();
    let mut out = Vec::new();
    // Scene entity order is already ego-first.
    for entity in &scene.entities {
        let b = bind_one(
            rg, scene, world, wg, registry, &bound, entity, r0, r_step, r_max, nominal_speed,
            &mut rng,
        )?;
        bound.insert(entity.id.clone(), b.goal);
        out.push(b);
    }
    Ok(out)
}
