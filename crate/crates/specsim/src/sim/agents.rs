//! Built-in ego agents. The simulator never injects controls into the ego:
//! the agent sees its route, its own state, and ground-truth nearby states,
//! and returns a target speed plus a steering point.

use thiserror::Error;

use crate::world::{dot, sub, EntityState, RoadWorld};

use super::pursuit_target;

/// Cruise speed of the built-in agents.
pub const CRUISE_SPEED: f64 = 6.0;
/// Pure-pursuit lookahead distance.
pub const LOOKAHEAD: f64 = 6.0;
/// Longitudinal gap the follower tries to keep to a leader.
const FOLLOW_GAP: f64 = 13.0;
/// Leaders beyond this longitudinal distance are ignored.
const LEADER_RANGE: f64 = 20.0;

#[derive(Debug, Error)]
#[error("agent failure: {0}")]
pub struct AgentError(pub String);

pub struct AgentObservation<'a> {
    pub own: &'a EntityState,
    pub others: &'a [EntityState],
    pub world: &'a RoadWorld,
    /// Assigned route polyline; fixed at scenario start.
    pub route: &'a [[f64; 2]],
    pub t: f64,
    pub frame: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controls {
    pub target_speed: f64,
    /// Point to steer toward; None holds the current heading.
    pub steer_to: Option<[f64; 2]>,
}

pub trait Agent {
    fn name(&self) -> &str;
    fn control(&mut self, obs: &AgentObservation) -> Result<Controls, AgentError>;
}

/// Nearest entity longitudinally ahead of the observer within its own
/// corridor width.
fn leader<'a>(obs: &'a AgentObservation) -> Option<&'a EntityState> {
    let fwd = obs.own.pose.forward();
    let left = obs.own.pose.left();
    let pos = obs.own.pose.position();
    obs.others
        .iter()
        .filter(|o| {
            let rel = sub(o.pose.position(), pos);
            let lon = dot(rel, fwd);
            let lat = dot(rel, left);
            lon > 0.0 && lon <= LEADER_RANGE && lat.abs() <= obs.world.lane_width / 2.0
        })
        .min_by(|a, b| {
            let da = dot(sub(a.pose.position(), pos), fwd);
            let db = dot(sub(b.pose.position(), pos), fwd);
            da.total_cmp(&db)
        })
}

/// Speed that converges on `FOLLOW_GAP` behind the leader: match the leader
/// at the desired gap, slower when closer, faster (up to cruise) when the gap
/// is larger.
fn follow_speed(obs: &AgentObservation) -> f64 {
    match leader(obs) {
        Some(l) => {
            let gap = dot(sub(l.pose.position(), obs.own.pose.position()), obs.own.pose.forward());
            (l.speed + 0.5 * (gap - FOLLOW_GAP)).clamp(0.0, CRUISE_SPEED)
        }
        None => CRUISE_SPEED,
    }
}

/// Pure-pursuit route follower with vehicle-following behavior (no
/// overtaking): it slows toward any leader ahead instead of going around.
pub struct Follower;

impl Agent for Follower {
    fn name(&self) -> &str {
        "follower"
    }

    fn control(&mut self, obs: &AgentObservation) -> Result<Controls, AgentError> {
        match pursuit_target(obs.route, obs.own.pose.position(), LOOKAHEAD) {
            Some(p) => Ok(Controls { target_speed: follow_speed(obs), steer_to: Some(p) }),
            None => Ok(Controls { target_speed: 0.0, steer_to: None }),
        }
    }
}

/// Follower that additionally halts at stop-controlled lane ends, once per
/// lane, before proceeding.
pub struct CompliantStopper {
    served_lane: Option<u32>,
}

impl Agent for CompliantStopper {
    fn name(&self) -> &str {
        "compliant-stopper"
    }

    fn control(&mut self, obs: &AgentObservation) -> Result<Controls, AgentError> {
        let steer_to = pursuit_target(obs.route, obs.own.pose.position(), LOOKAHEAD);
        if steer_to.is_none() {
            return Ok(Controls { target_speed: 0.0, steer_to: None });
        }
        let mut target = follow_speed(obs);
        if let Some(lane_id) = obs.world.lane_of(obs.own.pose.position()) {
            if obs.world.has_stop(lane_id) && self.served_lane != Some(lane_id) {
                let lane = obs.world.lane(lane_id);
                let (arc, _) = lane.project(obs.own.pose.position());
                let to_line = lane.length() - arc;
                if to_line <= 15.0 {
                    // Ramp down to a halt about a meter short of the line.
                    target = target.min((0.8 * (to_line - 1.0)).max(0.0));
                    if to_line <= 3.0 && obs.own.speed < crate::world::STOP_SPEED {
                        self.served_lane = Some(lane_id);
                    }
                }
            }
        }
        Ok(Controls { target_speed: target, steer_to })
    }
}

/// Replays a fixed control tape; frames past the end repeat the last entry,
/// and an empty tape commands a permanent standstill.
pub struct Scripted {
    tape: Vec<(f64, Option<[f64; 2]>)>,
}

impl Agent for Scripted {
    fn name(&self) -> &str {
        "scripted"
    }

    fn control(&mut self, obs: &AgentObservation) -> Result<Controls, AgentError> {
        let entry = match self.tape.as_slice() {
            [] => (0.0, None),
            tape => tape[(obs.frame - 1).min(tape.len() - 1)],
        };
        Ok(Controls { target_speed: entry.0, steer_to: entry.1 })
    }
}

/// Instantiate a built-in agent by name. The tape only matters for
/// `scripted`.
pub fn builtin_agent(
    name: &str,
    tape: &[(f64, Option<[f64; 2]>)],
) -> Result<Box<dyn Agent>, AgentError> {
    match name {
        "follower" => Ok(Box::new(Follower)),
        "compliant-stopper" => Ok(Box::new(CompliantStopper { served_lane: None })),
        "scripted" => Ok(Box::new(Scripted { tape: tape.to_vec() })),
        other => Err(AgentError(format!("unknown agent `{other}`"))),
    }
}
