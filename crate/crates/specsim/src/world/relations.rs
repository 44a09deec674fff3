//! Relation registry and the geometric predicates behind each relation.
//!
//! All thresholds are centralized here. Lateral and longitudinal relations are
//! computed in a canonical per-pair frame (the ego's frame when the ego is part
//! of the pair, otherwise the frame of the entity that sorts first by id), which
//! makes antisymmetry and mirror consistency exact by construction.

use super::roads::RoadWorld;
use super::{dist, dot, sub, EntityState};

/// Longitudinal band thresholds in meters.
pub const TOO_CLOSE_MAX: f64 = 10.0;
pub const NEAR_MAX: f64 = 16.0;
/// Minimum displacement before ahead/behind is emitted.
pub const LONGITUDINAL_DEADBAND: f64 = 0.5;
/// Opposing lane must be free of entities this far ahead.
pub const OPPOSING_CLEAR_RANGE: f64 = 30.0;
/// Intersection polygons are inflated by this margin for `atIntersection`.
pub const INTERSECTION_MARGIN: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    /// Directed relation between two dynamic entities.
    Pair,
    /// Relation from a dynamic entity to a lane or intersection vertex.
    Static,
    /// Unary attribute, represented as a self-loop edge.
    Attribute,
}

#[derive(Debug, Clone)]
pub struct RelationDef {
    pub name: &'static str,
    pub kind: RelationKind,
    /// Vertex type of the relation's image set.
    pub target_type: &'static str,
}

/// The fixed relation vocabulary shared by the spec language, relational-graph
/// generation, scene sampling, and scene-graph extraction.
#[derive(Debug, Clone)]
pub struct RelationRegistry {
    defs: Vec<RelationDef>,
}

impl Default for RelationRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl RelationRegistry {
    pub fn new() -> Self {
        let defs = vec![
            RelationDef { name: "aheadOf", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "behind", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "toLeftOf", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "toRightOf", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "tooClose", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "near", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "sameLane", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "oppositeLane", kind: RelationKind::Pair, target_type: "Car" },
            RelationDef { name: "atIntersection", kind: RelationKind::Static, target_type: "Intersection" },
            RelationDef { name: "fullyInIntersection", kind: RelationKind::Static, target_type: "Intersection" },
            RelationDef { name: "onlyIn", kind: RelationKind::Static, target_type: "Lane" },
            RelationDef { name: "hasStop", kind: RelationKind::Static, target_type: "Lane" },
            RelationDef { name: "opposingClear", kind: RelationKind::Static, target_type: "Lane" },
            RelationDef { name: "stopped", kind: RelationKind::Attribute, target_type: "Car" },
            RelationDef { name: "hasEmergencyLights", kind: RelationKind::Attribute, target_type: "EmergencyVehicle" },
            RelationDef { name: "sirens", kind: RelationKind::Attribute, target_type: "EmergencyVehicle" },
            RelationDef { name: "isEmergencyVehicle", kind: RelationKind::Attribute, target_type: "EmergencyVehicle" },
        ];
        RelationRegistry { defs }
    }

    pub fn contains(&self, name: &str) -> bool {
        self.defs.iter().any(|d| d.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&RelationDef> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.defs.iter().map(|d| d.name)
    }

    /// True when two positive relations between the same (possibly mirrored)
    /// entity pair at the same temporal tag contradict geometrically.
    ///
    /// `mirrored` is true when the second edge runs dst -> src.
    pub fn mutually_exclusive(&self, rel_a: &str, rel_b: &str, mirrored: bool) -> bool {
        let unordered = |x: &str, y: &str| {
            (rel_a == x && rel_b == y) || (rel_a == y && rel_b == x)
        };
        if !mirrored {
            // Same ordered pair: opposite senses of the same axis, or
            // different distance bands, or contradictory lane membership.
            unordered("aheadOf", "behind")
                || unordered("toLeftOf", "toRightOf")
                || unordered("tooClose", "near")
                || unordered("sameLane", "oppositeLane")
        } else {
            // Mirrored pair: x ahead of y and y ahead of x cannot both hold;
            // symmetric relations conflict with their band/lane opposites in
            // either direction.
            (rel_a == rel_b
                && matches!(rel_a, "aheadOf" | "behind" | "toLeftOf" | "toRightOf"))
                || unordered("tooClose", "near")
                || unordered("sameLane", "oppositeLane")
        }
    }
}

/// Canonical reference pose for a pair of entities: the ego's pose when the
/// ego participates, otherwise the pose of the entity that sorts first by id.
fn pair_frame<'a>(a: &'a EntityState, b: &'a EntityState) -> &'a EntityState {
    if a.is_ego() {
        a
    } else if b.is_ego() {
        b
    } else if a.id <= b.id {
        a
    } else {
        b
    }
}

/// Signed longitudinal offset of `b` relative to `a` in the pair frame.
fn pair_longitudinal(a: &EntityState, b: &EntityState) -> f64 {
    let f = pair_frame(a, b);
    dot(sub(b.pose.position(), a.pose.position()), f.pose.forward())
}

/// Signed lateral offset of `b` relative to `a` in the pair frame
/// (positive toward the frame's left).
fn pair_lateral(a: &EntityState, b: &EntityState) -> f64 {
    let f = pair_frame(a, b);
    dot(sub(b.pose.position(), a.pose.position()), f.pose.left())
}

/// Whether `b`'s center falls inside `a`'s lane corridor (or they share a lane).
pub fn same_corridor(world: &RoadWorld, a: &EntityState, b: &EntityState) -> bool {
    let la = world.lane_of(a.pose.position());
    let lb = world.lane_of(b.pose.position());
    if let (Some(la), Some(lb)) = (la, lb) {
        if la == lb {
            return true;
        }
    }
    if let Some(la) = la {
        if world.in_corridor(la, b.pose.position()) {
            return true;
        }
    }
    if let Some(lb) = lb {
        if world.in_corridor(lb, a.pose.position()) {
            return true;
        }
    }
    false
}

/// Evaluate a pair relation `rel(a, b)`, i.e. whether `b` belongs to `a.rel`.
pub fn pair_predicate(world: &RoadWorld, rel: &str, a: &EntityState, b: &EntityState) -> bool {
    let gap = dist(a.pose.position(), b.pose.position());
    match rel {
        "aheadOf" => pair_longitudinal(a, b) > LONGITUDINAL_DEADBAND,
        "behind" => pair_longitudinal(a, b) < -LONGITUDINAL_DEADBAND,
        "toLeftOf" => pair_lateral(a, b) > world.lane_width / 2.0,
        "toRightOf" => pair_lateral(a, b) < -world.lane_width / 2.0,
        "tooClose" => gap <= TOO_CLOSE_MAX && same_corridor(world, a, b),
        "near" => gap > TOO_CLOSE_MAX && gap <= NEAR_MAX,
        "sameLane" => same_corridor(world, a, b),
        "oppositeLane" => {
            let la = world.lane_of(a.pose.position());
            let lb = world.lane_of(b.pose.position());
            match (la, lb) {
                (Some(la), Some(lb)) => {
                    world.lane(la).opposing == Some(lb) || world.lane(lb).opposing == Some(la)
                }
                _ => false,
            }
        }
        _ => false,
    }
}

/// Corners of an entity's rectangular footprint.
pub fn footprint_corners(e: &EntityState) -> [[f64; 2]; 4] {
    let (len, wid) = super::footprint(&e.entity_type);
    let f = e.pose.forward();
    let l = e.pose.left();
    let c = e.pose.position();
    let half = |s: f64, d: [f64; 2]| [d[0] * s / 2.0, d[1] * s / 2.0];
    let fl = half(len, f);
    let ll = half(wid, l);
    [
        [c[0] + fl[0] + ll[0], c[1] + fl[1] + ll[1]],
        [c[0] + fl[0] - ll[0], c[1] + fl[1] - ll[1]],
        [c[0] - fl[0] - ll[0], c[1] - fl[1] - ll[1]],
        [c[0] - fl[0] + ll[0], c[1] - fl[1] + ll[1]],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Attributes, Pose};

    fn state(id: &str, ty: &str, x: f64, y: f64, heading: f64) -> EntityState {
        EntityState {
            id: id.into(),
            entity_type: ty.into(),
            pose: Pose::new(x, y, heading),
            speed: 5.0,
            attrs: Attributes::default(),
        }
    }

    fn world() -> RoadWorld {
        RoadWorld::grid(&crate::world::roads::GridParams::default()).unwrap()
    }

    #[test]
    fn longitudinal_relations_use_the_ego_frame() {
        let w = world();
        let ego = state("ego", "ego", 0.0, 0.0, 0.0);
        let car = state("car1", "Car", 10.0, 0.0, 0.0);
        assert!(pair_predicate(&w, "aheadOf", &ego, &car));
        assert!(pair_predicate(&w, "behind", &car, &ego));
        assert!(!pair_predicate(&w, "behind", &ego, &car));
    }

    #[test]
    fn lateral_mirror_is_exact_even_for_opposed_headings() {
        let w = world();
        let ego = state("ego", "ego", 0.0, 0.0, 0.0);
        let car = state("car1", "Car", 0.0, 5.0, std::f64::consts::PI);
        assert!(pair_predicate(&w, "toLeftOf", &ego, &car));
        assert!(pair_predicate(&w, "toRightOf", &car, &ego));
    }

    #[test]
    fn mutual_exclusion_table_covers_the_axis_pairs() {
        let reg = RelationRegistry::new();
        assert!(reg.mutually_exclusive("aheadOf", "behind", false));
        assert!(reg.mutually_exclusive("aheadOf", "aheadOf", true));
        assert!(!reg.mutually_exclusive("aheadOf", "behind", true));
        assert!(reg.mutually_exclusive("tooClose", "near", false));
        assert!(!reg.mutually_exclusive("sameLane", "behind", false));
    }
}
