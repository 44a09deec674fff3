//! Dense waypoint graph over the road network. Waypoints are lane-sampled
//! positions; edges are legal transitions (lane following and lane changes),
//! which is what lets planned paths express fine-grained maneuvers such as
//! mid-lane changes or overtaking.

use serde::{Deserialize, Serialize};

use super::roads::RoadWorld;
use super::{dist, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub id: u32,
    pub position: [f64; 2],
    pub lane: u32,
    pub heading: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    Follow,
    LaneChangeLeft,
    LaneChangeRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WpEdge {
    pub src: u32,
    pub dst: u32,
    pub kind: EdgeKind,
    pub length: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaypointGraph {
    pub nodes: Vec<Waypoint>,
    pub edges: Vec<WpEdge>,
    /// Outgoing edge indices per node, ordered by destination id.
    pub adjacency: Vec<Vec<usize>>,
}

impl WaypointGraph {
    pub fn node(&self, id: u32) -> &Waypoint {
        &self.nodes[id as usize]
    }

    pub fn outgoing(&self, id: u32) -> impl Iterator<Item = &WpEdge> {
        self.adjacency[id as usize].iter().map(|&i| &self.edges[i])
    }

    pub fn edge_between(&self, src: u32, dst: u32) -> Option<&WpEdge> {
        self.outgoing(src).find(|e| e.dst == dst)
    }

    /// Nearest waypoint to a pose, preferring waypoints that roughly share its
    /// heading so entities on two-way roads snap to their own direction.
    pub fn nearest(&self, pose: &Pose) -> Option<u32> {
        let fwd = pose.forward();
        self.nodes
            .iter()
            .filter(|w| fwd[0] * w.heading.cos() + fwd[1] * w.heading.sin() > 0.0)
            .min_by(|a, b| {
                let da = dist(a.position, pose.position());
                let db = dist(b.position, pose.position());
                da.total_cmp(&db).then(a.id.cmp(&b.id))
            })
            .map(|w| w.id)
    }
}

/// Sample waypoints every `spacing` meters along each lane and connect them
/// with follow and lane-change edges.
pub fn build_waypoint_graph(world: &RoadWorld, spacing: f64) -> WaypointGraph {
    assert!(spacing > 0.0, "waypoint spacing must be positive");
    let mut nodes: Vec<Waypoint> = Vec::new();
    let mut edges: Vec<WpEdge> = Vec::new();
    // Per lane: waypoint ids in arc order.
    let mut lane_wps: Vec<Vec<u32>> = vec![Vec::new(); world.lanes.len()];

    for lane in &world.lanes {
        let len = lane.length();
        let mut arcs: Vec<f64> = Vec::new();
        let mut a = 0.0;
        while a < len - 1e-9 {
            arcs.push(a);
            a += spacing;
        }
        arcs.push(len);
        for arc in arcs {
            let (position, heading) = lane.point_at(arc);
            let id = nodes.len() as u32;
            nodes.push(Waypoint { id, position, lane: lane.id, heading });
            lane_wps[lane.id as usize].push(id);
        }
    }

    // Follow edges along each lane.
    for wps in &lane_wps {
        for w in wps.windows(2) {
            let length = dist(nodes[w[0] as usize].position, nodes[w[1] as usize].position);
            edges.push(WpEdge { src: w[0], dst: w[1], kind: EdgeKind::Follow, length });
        }
    }
    // Follow edges across lane successors (crossing the intersection).
    for lane in &world.lanes {
        let last = match lane_wps[lane.id as usize].last() {
            Some(&w) => w,
            None => continue,
        };
        for &succ in &lane.successors {
            if let Some(&first) = lane_wps[succ as usize].first() {
                let length = dist(nodes[last as usize].position, nodes[first as usize].position);
                edges.push(WpEdge { src: last, dst: first, kind: EdgeKind::Follow, length });
            }
        }
    }
    // Lane-change edges: from each interior waypoint to the next-ahead waypoint
    // of the laterally adjacent lane. Opposing-lane changes only where legal.
    for lane in &world.lanes {
        let wps = &lane_wps[lane.id as usize];
        let targets: Vec<(Option<u32>, EdgeKind)> = vec![
            (lane.adjacent_left, EdgeKind::LaneChangeLeft),
            (lane.adjacent_right, EdgeKind::LaneChangeRight),
            (
                if lane.overtake_legal { lane.opposing } else { None },
                EdgeKind::LaneChangeLeft,
            ),
        ];
        for (target, kind) in targets {
            let target = match target {
                Some(t) => t,
                None => continue,
            };
            let target_lane = world.lane(target);
            for (i, &src) in wps.iter().enumerate() {
                if i + 1 >= wps.len() {
                    break;
                }
                // Land on the target-lane waypoint closest to our position
                // advanced one spacing step along our own heading.
                let own = &nodes[src as usize];
                let goal = [
                    own.position[0] + own.heading.cos() * spacing,
                    own.position[1] + own.heading.sin() * spacing,
                ];
                let (goal_arc, _) = target_lane.project(goal);
                if goal_arc <= 0.0 || goal_arc >= target_lane.length() {
                    continue;
                }
                let dst = lane_wps[target as usize]
                    .iter()
                    .copied()
                    .min_by(|&x, &y| {
                        dist(nodes[x as usize].position, goal)
                            .total_cmp(&dist(nodes[y as usize].position, goal))
                            .then(x.cmp(&y))
                    })
                    .unwrap();
                if dst == src {
                    continue;
                }
                let length = dist(nodes[src as usize].position, nodes[dst as usize].position);
                if length == 0.0 {
                    continue;
                }
                edges.push(WpEdge { src, dst, kind, length });
            }
        }
    }

    edges.sort_by(|a, b| (a.src, a.dst).cmp(&(b.src, b.dst)));
    edges.dedup_by(|a, b| a.src == b.src && a.dst == b.dst);
    let mut adjacency = vec![Vec::new(); nodes.len()];
    for (i, e) in edges.iter().enumerate() {
        adjacency[e.src as usize].push(i);
    }
    WaypointGraph { nodes, edges, adjacency }
}
