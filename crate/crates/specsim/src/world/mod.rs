//! Road environment model: lanes, intersections and signage, the dense waypoint
//! graph used for trajectory planning, and ground-truth scene-graph extraction
//! from entity poses.

pub mod relations;
pub mod roads;
pub mod scene_graph;
pub mod waypoints;

pub use relations::{RelationKind, RelationRegistry};
pub use roads::{Control, GridParams, Intersection, Lane, RoadWorld, WorldError};
pub use scene_graph::{compute_scene_graph, SceneGraph, SgEdge, SgVertex};
pub use waypoints::{build_waypoint_graph, EdgeKind, Waypoint, WaypointGraph, WpEdge};

use serde::{Deserialize, Serialize};

/// Speed below which an entity counts as stopped.
pub const STOP_SPEED: f64 = 0.1;

/// Entity footprint in meters, length x width.
pub fn footprint(entity_type: &str) -> (f64, f64) {
    match entity_type {
        "Bike" => (1.8, 0.6),
        "EmergencyVehicle" => (5.5, 2.2),
        _ => (4.5, 2.0),
    }
}

/// Entity types the simulator can spawn and drive.
pub fn is_dynamic_type(entity_type: &str) -> bool {
    matches!(entity_type, "ego" | "Car" | "Bike" | "EmergencyVehicle")
}

/// Static scene features that relational-graph nodes can bind to.
pub fn is_static_type(entity_type: &str) -> bool {
    matches!(entity_type, "Lane" | "Intersection")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose { x, y, heading }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Unit vector along the heading.
    pub fn forward(&self) -> [f64; 2] {
        [self.heading.cos(), self.heading.sin()]
    }

    /// Unit vector 90 degrees to the left of the heading.
    pub fn left(&self) -> [f64; 2] {
        [-self.heading.sin(), self.heading.cos()]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attributes {
    #[serde(default)]
    pub emergency_lights: bool,
    #[serde(default)]
    pub sirens: bool,
}

/// Per-frame state of one simulation entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityState {
    pub id: String,
    pub entity_type: String,
    pub pose: Pose,
    pub speed: f64,
    #[serde(default)]
    pub attrs: Attributes,
}

impl EntityState {
    pub fn stopped(&self) -> bool {
        self.speed < STOP_SPEED
    }

    pub fn is_ego(&self) -> bool {
        self.entity_type == "ego"
    }
}

pub(crate) fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

pub(crate) fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = sub(a, b);
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}
