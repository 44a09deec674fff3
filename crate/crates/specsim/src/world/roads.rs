//! Road network model and the built-in Manhattan-grid generator.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{dist, dot, sub};

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("empty world rejected: {0}")]
    EmptyWorld(String),
    #[error("dangling lane reference {0}")]
    DanglingLane(u32),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed world file: {0}")]
    Malformed(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Control {
    None,
    StopSign,
    Signal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane {
    pub id: u32,
    /// Centerline polyline in meters.
    pub centerline: Vec<[f64; 2]>,
    pub width: f64,
    pub successors: Vec<u32>,
    pub predecessors: Vec<u32>,
    pub adjacent_left: Option<u32>,
    pub adjacent_right: Option<u32>,
    pub opposing: Option<u32>,
    /// Lane changes into the opposing lane are legal here.
    #[serde(default)]
    pub overtake_legal: bool,
}

impl Lane {
    pub fn length(&self) -> f64 {
        self.centerline.windows(2).map(|w| dist(w[0], w[1])).sum()
    }

    /// Position and tangent heading at the given arc length (clamped).
    pub fn point_at(&self, arc: f64) -> ([f64; 2], f64) {
        let mut remaining = arc.max(0.0);
        for w in self.centerline.windows(2) {
            let seg = dist(w[0], w[1]);
            if remaining <= seg || seg == 0.0 {
                let t = if seg == 0.0 { 0.0 } else { remaining / seg };
                let p = [
                    w[0][0] + (w[1][0] - w[0][0]) * t,
                    w[0][1] + (w[1][1] - w[0][1]) * t,
                ];
                let heading = (w[1][1] - w[0][1]).atan2(w[1][0] - w[0][0]);
                return (p, heading);
            }
            remaining -= seg;
        }
        let n = self.centerline.len();
        let last = self.centerline[n - 1];
        let prev = self.centerline[n - 2];
        let heading = (last[1] - prev[1]).atan2(last[0] - prev[0]);
        (last, heading)
    }

    /// (arc length of the closest centerline point, signed lateral offset).
    pub fn project(&self, p: [f64; 2]) -> (f64, f64) {
        let mut best = (0.0, 0.0);
        let mut best_err = f64::INFINITY;
        let mut base = 0.0;
        for w in self.centerline.windows(2) {
            let d = sub(w[1], w[0]);
            let seg = dist(w[0], w[1]);
            if seg == 0.0 {
                continue;
            }
            let dir = [d[0] / seg, d[1] / seg];
            let rel = sub(p, w[0]);
            let t = dot(rel, dir).clamp(0.0, seg);
            let lateral = -rel[0] * dir[1] + rel[1] * dir[0];
            let closest = [w[0][0] + dir[0] * t, w[0][1] + dir[1] * t];
            let err = dist(p, closest);
            if err < best_err {
                best_err = err;
                // Signed distance to the clamped closest point, so points past
                // a lane end read as far off the corridor rather than level
                // with its last point.
                best = (base + t, if lateral >= 0.0 { err } else { -err });
            }
            base += seg;
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: u32,
    /// Simple polygon, counterclockwise.
    pub polygon: Vec<[f64; 2]>,
    pub incoming: Vec<u32>,
    pub control: Control,
}

impl Intersection {
    pub fn contains(&self, p: [f64; 2], margin: f64) -> bool {
        // Even-odd test against the polygon inflated by pushing each edge
        // outward is overkill for our convex squares; use centroid inflation.
        let cx = self.polygon.iter().map(|q| q[0]).sum::<f64>() / self.polygon.len() as f64;
        let cy = self.polygon.iter().map(|q| q[1]).sum::<f64>() / self.polygon.len() as f64;
        let inflated: Vec<[f64; 2]> = self
            .polygon
            .iter()
            .map(|q| {
                let v = sub(*q, [cx, cy]);
                let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
                if n == 0.0 {
                    *q
                } else {
                    [q[0] + v[0] / n * margin, q[1] + v[1] / n * margin]
                }
            })
            .collect();
        point_in_polygon(p, &inflated)
    }
}

pub fn point_in_polygon(p: [f64; 2], poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (pi, pj) = (poly[i], poly[j]);
        if (pi[1] > p[1]) != (pj[1] > p[1])
            && p[0] < (pj[0] - pi[0]) * (p[1] - pi[1]) / (pj[1] - pi[1]) + pi[0]
        {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// A directed roadway between two adjacent intersections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub from: u32,
    pub to: u32,
    pub lanes: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadWorld {
    pub lanes: Vec<Lane>,
    pub intersections: Vec<Intersection>,
    /// lane id -> stop-sign flag at the lane's downstream end.
    pub signage: BTreeMap<u32, bool>,
    pub segments: Vec<Segment>,
    pub lane_width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridParams {
    pub blocks_x: u32,
    pub blocks_y: u32,
    /// Block side length in meters (intersection center spacing).
    pub lane_length: f64,
    /// Lanes per direction on every road.
    pub lanes_per_road: u32,
    pub control: Control,
    pub lane_width: f64,
    pub overtake_legal: bool,
}

impl Default for GridParams {
    fn default() -> Self {
        GridParams {
            blocks_x: 2,
            blocks_y: 2,
            lane_length: 100.0,
            lanes_per_road: 2,
            control: Control::StopSign,
            lane_width: 3.5,
            overtake_legal: false,
        }
    }
}

impl RoadWorld {
    pub fn lane(&self, id: u32) -> &Lane {
        &self.lanes[id as usize]
    }

    pub fn intersection(&self, id: u32) -> &Intersection {
        &self.intersections[id as usize]
    }

    pub fn has_stop(&self, lane: u32) -> bool {
        self.signage.get(&lane).copied().unwrap_or(false)
    }

    /// Lane whose corridor contains the point, preferring the smallest lateral
    /// offset. Returns None when the point is off-road.
    pub fn lane_of(&self, p: [f64; 2]) -> Option<u32> {
        let mut best: Option<(u32, f64)> = None;
        for lane in &self.lanes {
            let (arc, lateral) = lane.project(p);
            if lateral.abs() <= lane.width / 2.0 + 1e-9 && arc >= -1e-9 && arc <= lane.length() + 1e-9
            {
                if best.map_or(true, |(_, l)| lateral.abs() < l) {
                    best = Some((lane.id, lateral.abs()));
                }
            }
        }
        best.map(|(id, _)| id)
    }

    pub fn in_corridor(&self, lane: u32, p: [f64; 2]) -> bool {
        let lane = self.lane(lane);
        let (arc, lateral) = lane.project(p);
        lateral.abs() <= lane.width / 2.0 + 1e-9 && (0.0..=lane.length()).contains(&arc)
    }

    pub fn intersection_at(&self, p: [f64; 2], margin: f64) -> Option<u32> {
        self.intersections
            .iter()
            .find(|j| j.contains(p, margin))
            .map(|j| j.id)
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.lanes.is_empty() {
            return Err(WorldError::EmptyWorld("no lanes".into()));
        }
        let n = self.lanes.len() as u32;
        for lane in &self.lanes {
            for &r in lane
                .successors
                .iter()
                .chain(&lane.predecessors)
                .chain(lane.adjacent_left.iter())
                .chain(lane.adjacent_right.iter())
                .chain(lane.opposing.iter())
            {
                if r >= n {
                    return Err(WorldError::DanglingLane(r));
                }
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)?;
        let world: RoadWorld = serde_json::from_str(&text)?;
        world.validate()?;
        Ok(world)
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Build a Manhattan grid of two-way roads with four-way intersections.
    pub fn grid(params: &GridParams) -> Result<Self, WorldError> {
        if params.blocks_x == 0 || params.blocks_y == 0 {
            return Err(WorldError::EmptyWorld(
                "grid must have at least one block per axis".into(),
            ));
        }
        if params.lane_length <= 0.0 || params.lanes_per_road == 0 || params.lane_width <= 0.0 {
            return Err(WorldError::EmptyWorld("grid parameters must be positive".into()));
        }
        let nx = params.blocks_x + 1;
        let ny = params.blocks_y + 1;
        let spacing = params.lane_length;
        let w = params.lane_width;
        let n = params.lanes_per_road;
        // Intersection square half-side spans the full roadway width.
        let half = n as f64 * w;

        let inter_id = |ix: u32, iy: u32| iy * nx + ix;
        let mut intersections: Vec<Intersection> = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let cx = ix as f64 * spacing;
                let cy = iy as f64 * spacing;
                intersections.push(Intersection {
                    id: inter_id(ix, iy),
                    polygon: vec![
                        [cx - half, cy - half],
                        [cx + half, cy - half],
                        [cx + half, cy + half],
                        [cx - half, cy + half],
                    ],
                    incoming: Vec::new(),
                    control: params.control,
                });
            }
        }

        let mut lanes: Vec<Lane> = Vec::new();
        let mut segments: Vec<Segment> = Vec::new();
        // (from, to, lane index within segment) -> lane id, for wiring links.
        let mut seg_lane: BTreeMap<(u32, u32, u32), u32> = BTreeMap::new();

        let add_segment = |lanes: &mut Vec<Lane>,
                               segments: &mut Vec<Segment>,
                               seg_lane: &mut BTreeMap<(u32, u32, u32), u32>,
                               from: (u32, u32),
                               to: (u32, u32)| {
            let (fx, fy) = from;
            let (tx, ty) = to;
            let from_id = inter_id(fx, fy);
            let to_id = inter_id(tx, ty);
            let start = [fx as f64 * spacing, fy as f64 * spacing];
            let end = [tx as f64 * spacing, ty as f64 * spacing];
            let d = sub(end, start);
            let len = dist(start, end);
            let dir = [d[0] / len, d[1] / len];
            // Right-hand traffic: lanes sit to the right of the travel axis.
            let right = [dir[1], -dir[0]];
            let mut ids = Vec::new();
            for k in 0..n {
                let offset = w / 2.0 + k as f64 * w;
                let o = [right[0] * offset, right[1] * offset];
                let a = [start[0] + dir[0] * half + o[0], start[1] + dir[1] * half + o[1]];
                let b = [end[0] - dir[0] * half + o[0], end[1] - dir[1] * half + o[1]];
                let id = lanes.len() as u32;
                lanes.push(Lane {
                    id,
                    centerline: vec![a, b],
                    width: w,
                    successors: Vec::new(),
                    predecessors: Vec::new(),
                    adjacent_left: None,
                    adjacent_right: None,
                    opposing: None,
                    overtake_legal: params.overtake_legal,
                });
                seg_lane.insert((from_id, to_id, k), id);
                ids.push(id);
            }
            segments.push(Segment { from: from_id, to: to_id, lanes: ids });
        };

        for iy in 0..ny {
            for ix in 0..nx {
                if ix + 1 < nx {
                    add_segment(&mut lanes, &mut segments, &mut seg_lane, (ix, iy), (ix + 1, iy));
                    add_segment(&mut lanes, &mut segments, &mut seg_lane, (ix + 1, iy), (ix, iy));
                }
                if iy + 1 < ny {
                    add_segment(&mut lanes, &mut segments, &mut seg_lane, (ix, iy), (ix, iy + 1));
                    add_segment(&mut lanes, &mut segments, &mut seg_lane, (ix, iy + 1), (ix, iy));
                }
            }
        }

        // Wire adjacency, opposing lanes, successors, and incoming lists.
        for seg in &segments {
            for (k, &id) in seg.lanes.iter().enumerate() {
                let k = k as u32;
                // Innermost lane (k = 0) hugs the axis; its left neighbor is
                // the opposing innermost lane, not a same-direction lane.
                if k > 0 {
                    lanes[id as usize].adjacent_left = seg_lane.get(&(seg.from, seg.to, k - 1)).copied();
                }
                if k + 1 < n {
                    lanes[id as usize].adjacent_right = seg_lane.get(&(seg.from, seg.to, k + 1)).copied();
                }
                lanes[id as usize].opposing = seg_lane.get(&(seg.to, seg.from, k)).copied();
            }
        }
        // Turning movements: an arriving lane continues into the same-index
        // lane of every road leaving its end intersection except the U-turn.
        for seg in &segments {
            for next in &segments {
                if next.from != seg.to || next.to == seg.from {
                    continue;
                }
                for (k, &id) in seg.lanes.iter().enumerate() {
                    if let Some(&succ) = seg_lane.get(&(next.from, next.to, k as u32)) {
                        lanes[id as usize].successors.push(succ);
                        lanes[succ as usize].predecessors.push(id);
                    }
                }
            }
            for &id in &seg.lanes {
                intersections[seg.to as usize].incoming.push(id);
            }
        }

        let mut signage = BTreeMap::new();
        for lane in &lanes {
            let flag = params.control == Control::StopSign;
            signage.insert(lane.id, flag);
        }

        let world = RoadWorld {
            lanes,
            intersections,
            signage,
            segments,
            lane_width: w,
        };
        world.validate()?;
        Ok(world)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_block_grid_has_four_intersections_and_eight_segments() {
        let params = GridParams { blocks_x: 1, blocks_y: 1, ..GridParams::default() };
        let world = RoadWorld::grid(&params).unwrap();
        assert_eq!(world.intersections.len(), 4);
        assert_eq!(world.segments.len(), 8);
    }

    #[test]
    fn stop_sign_scheme_flags_every_lane() {
        let params = GridParams { control: Control::StopSign, ..GridParams::default() };
        let world = RoadWorld::grid(&params).unwrap();
        assert!(world.lanes.iter().all(|l| world.has_stop(l.id)));
    }

    #[test]
    fn zero_blocks_is_rejected() {
        let params = GridParams { blocks_x: 0, ..GridParams::default() };
        assert!(RoadWorld::grid(&params).is_err());
    }

    #[test]
    fn adjacency_is_symmetric() {
        let world = RoadWorld::grid(&GridParams::default()).unwrap();
        for lane in &world.lanes {
            if let Some(l) = lane.adjacent_left {
                assert_eq!(world.lane(l).adjacent_right, Some(lane.id));
            }
            if let Some(r) = lane.adjacent_right {
                assert_eq!(world.lane(r).adjacent_left, Some(lane.id));
            }
            if let Some(o) = lane.opposing {
                assert_eq!(world.lane(o).opposing, Some(lane.id));
            }
        }
    }

    #[test]
    fn world_round_trips_through_json() {
        let world = RoadWorld::grid(&GridParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.json");
        world.save(&path).unwrap();
        let loaded = RoadWorld::load(&path).unwrap();
        assert_eq!(loaded.lanes.len(), world.lanes.len());
        assert_eq!(loaded.segments.len(), world.segments.len());
    }

    #[test]
    fn lane_projection_and_point_at_agree() {
        let world = RoadWorld::grid(&GridParams::default()).unwrap();
        let lane = world.lane(0);
        let (p, _) = lane.point_at(10.0);
        let (arc, lateral) = lane.project(p);
        assert!((arc - 10.0).abs() < 1e-9);
        assert!(lateral.abs() < 1e-9);
    }
}
