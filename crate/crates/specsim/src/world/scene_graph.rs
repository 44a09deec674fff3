//! Ground-truth scene graphs: entities and static features as vertices,
//! spatial relations as labeled directed edges, recomputed deterministically
//! from poses each frame.

use serde::{Deserialize, Serialize};

use super::relations::{
    footprint_corners, pair_predicate, RelationKind, RelationRegistry, INTERSECTION_MARGIN,
    OPPOSING_CLEAR_RANGE,
};
use super::roads::{point_in_polygon, RoadWorld};
use super::{dot, sub, EntityState};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgVertex {
    pub id: String,
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SgEdge {
    pub rel: String,
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub vertices: Vec<SgVertex>,
    pub edges: Vec<SgEdge>,
}

impl SceneGraph {
    pub fn has_edge(&self, rel: &str, src: &str, dst: &str) -> bool {
        self.edges
            .iter()
            .any(|e| e.rel == rel && e.src == src && e.dst == dst)
    }

    /// Successors of `src` under `rel`.
    pub fn image<'a>(&'a self, src: &'a str, rel: &'a str) -> impl Iterator<Item = &'a str> {
        self.edges
            .iter()
            .filter(move |e| e.rel == rel && e.src == src)
            .map(|e| e.dst.as_str())
    }

    pub fn vertices_of_type<'a>(&'a self, entity_type: &'a str) -> impl Iterator<Item = &'a str> {
        self.vertices
            .iter()
            .filter(move |v| v.entity_type == entity_type)
            .map(|v| v.id.as_str())
    }
}

pub fn lane_vertex(id: u32) -> String {
    format!("lane:{id}")
}

pub fn intersection_vertex(id: u32) -> String {
    format!("intersection:{id}")
}

/// Compute the scene graph for a set of entity states. `states` must contain
/// exactly one ego.
pub fn compute_scene_graph(world: &RoadWorld, states: &[EntityState]) -> SceneGraph {
    let registry = RelationRegistry::new();
    debug_assert_eq!(states.iter().filter(|s| s.is_ego()).count(), 1);

    let mut vertices: Vec<SgVertex> = states
        .iter()
        .map(|s| SgVertex { id: s.id.clone(), entity_type: s.entity_type.clone() })
        .collect();
    for lane in &world.lanes {
        vertices.push(SgVertex { id: lane_vertex(lane.id), entity_type: "Lane".into() });
    }
    for j in &world.intersections {
        vertices.push(SgVertex { id: intersection_vertex(j.id), entity_type: "Intersection".into() });
    }

    let mut edges: Vec<SgEdge> = Vec::new();
    let pair_rels: Vec<&str> = registry
        .names()
        .filter(|n| registry.get(n).unwrap().kind == RelationKind::Pair)
        .collect();

    for a in states {
        for b in states {
            if a.id == b.id {
                continue;
            }
            for rel in &pair_rels {
                if pair_predicate(world, rel, a, b) {
                    edges.push(SgEdge { rel: rel.to_string(), src: a.id.clone(), dst: b.id.clone() });
                }
            }
        }
    }

    for e in states {
        let pos = e.pose.position();
        let lane = world.lane_of(pos);
        let corners = footprint_corners(e);

        if let Some(lane_id) = lane {
            if world.has_stop(lane_id) {
                edges.push(SgEdge { rel: "hasStop".into(), src: e.id.clone(), dst: lane_vertex(lane_id) });
            }
            // Opposing lane clear of traffic ahead of us within range.
            if let Some(opp) = world.lane(lane_id).opposing {
                let fwd = e.pose.forward();
                let blocked = states.iter().any(|o| {
                    if o.id == e.id {
                        return false;
                    }
                    let long = dot(sub(o.pose.position(), pos), fwd);
                    (0.0..=OPPOSING_CLEAR_RANGE).contains(&long)
                        && world.in_corridor(opp, o.pose.position())
                });
                if !blocked {
                    edges.push(SgEdge {
                        rel: "opposingClear".into(),
                        src: e.id.clone(),
                        dst: lane_vertex(lane_id),
                    });
                }
            }
        }
        // onlyIn: footprint within exactly one lane corridor.
        let containing: Vec<u32> = world
            .lanes
            .iter()
            .filter(|l| corners.iter().any(|&c| world.in_corridor(l.id, c)))
            .map(|l| l.id)
            .collect();
        if containing.len() == 1 && corners.iter().all(|&c| world.in_corridor(containing[0], c)) {
            edges.push(SgEdge { rel: "onlyIn".into(), src: e.id.clone(), dst: lane_vertex(containing[0]) });
        }
        for j in &world.intersections {
            if j.contains(pos, INTERSECTION_MARGIN) {
                edges.push(SgEdge {
                    rel: "atIntersection".into(),
                    src: e.id.clone(),
                    dst: intersection_vertex(j.id),
                });
            }
            if corners.iter().all(|&c| point_in_polygon(c, &j.polygon)) {
                edges.push(SgEdge {
                    rel: "fullyInIntersection".into(),
                    src: e.id.clone(),
                    dst: intersection_vertex(j.id),
                });
            }
        }
        // Attribute relations as self-loops.
        if e.stopped() {
            edges.push(SgEdge { rel: "stopped".into(), src: e.id.clone(), dst: e.id.clone() });
        }
        if e.attrs.emergency_lights {
            edges.push(SgEdge { rel: "hasEmergencyLights".into(), src: e.id.clone(), dst: e.id.clone() });
        }
        if e.attrs.sirens {
            edges.push(SgEdge { rel: "sirens".into(), src: e.id.clone(), dst: e.id.clone() });
        }
        if e.entity_type == "EmergencyVehicle" {
            edges.push(SgEdge { rel: "isEmergencyVehicle".into(), src: e.id.clone(), dst: e.id.clone() });
        }
    }

    edges.sort();
    SceneGraph { vertices, edges }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::roads::GridParams;
    use crate::world::{Attributes, Pose};

    fn world() -> RoadWorld {
        RoadWorld::grid(&GridParams::default()).unwrap()
    }

    fn on_lane(world: &RoadWorld, id: &str, ty: &str, lane: u32, arc: f64, speed: f64) -> EntityState {
        let (pos, heading) = world.lane(lane).point_at(arc);
        EntityState {
            id: id.into(),
            entity_type: ty.into(),
            pose: Pose::new(pos[0], pos[1], heading),
            speed,
            attrs: Attributes::default(),
        }
    }

    #[test]
    fn following_pair_gets_band_lane_and_axis_edges() {
        let w = world();
        let ego = on_lane(&w, "ego", "ego", 0, 10.0, 5.0);
        let car = on_lane(&w, "car1", "Car", 0, 22.0, 5.0);
        let sg = compute_scene_graph(&w, &[ego, car]);
        assert!(sg.has_edge("near", "ego", "car1"));
        assert!(sg.has_edge("sameLane", "ego", "car1"));
        assert!(sg.has_edge("aheadOf", "ego", "car1"));
        assert!(sg.has_edge("behind", "car1", "ego"));
        assert!(!sg.has_edge("tooClose", "ego", "car1"));
    }

    #[test]
    fn lone_ego_has_only_static_and_attribute_edges() {
        let w = world();
        let ego = on_lane(&w, "ego", "ego", 0, 10.0, 0.0);
        let sg = compute_scene_graph(&w, &[ego]);
        assert!(sg.edges.iter().all(|e| e.src == "ego"));
        assert!(sg.has_edge("stopped", "ego", "ego"));
        assert!(sg.edges.iter().any(|e| e.rel == "hasStop"));
    }

    #[test]
    fn ego_inside_intersection_polygon_is_at_intersection() {
        let w = world();
        let j = &w.intersections[0];
        let cx = j.polygon.iter().map(|p| p[0]).sum::<f64>() / 4.0;
        let cy = j.polygon.iter().map(|p| p[1]).sum::<f64>() / 4.0;
        let ego = EntityState {
            id: "ego".into(),
            entity_type: "ego".into(),
            pose: Pose::new(cx, cy, 0.0),
            speed: 2.0,
            attrs: Attributes::default(),
        };
        let sg = compute_scene_graph(&w, &[ego]);
        assert!(sg.has_edge("atIntersection", "ego", &intersection_vertex(0)));
        assert!(sg.has_edge("fullyInIntersection", "ego", &intersection_vertex(0)));
    }

    #[test]
    fn band_partition_is_exclusive() {
        // Over a sweep of gaps, at most one of tooClose/near holds per pair.
        let w = world();
        for tenth in 1..200 {
            let gap = tenth as f64 / 10.0 * 2.0;
            let ego = on_lane(&w, "ego", "ego", 0, 5.0, 5.0);
            let car = on_lane(&w, "car1", "Car", 0, 5.0 + gap, 5.0);
            if crate::world::dist(ego.pose.position(), car.pose.position()) < 0.6 {
                continue;
            }
            let sg = compute_scene_graph(&w, &[ego, car]);
            let too_close = sg.has_edge("tooClose", "ego", "car1");
            let near = sg.has_edge("near", "ego", "car1");
            assert!(!(too_close && near), "gap {gap}");
        }
    }
}
