//! Rule-based intersection scenario generator.
//!
//! Vehicles spawn on the arms of a signalized intersection, follow lane
//! polylines at 3 fps with a two-parameter slowdown rule (target speed,
//! comfortable deceleration), queue behind leaders, stop at the stop line
//! under a red light unless right-turning where permitted, and turn through
//! the core along a sampled curve. Output is a [`Scene`] in the standard
//! record schema plus the JSON map sidecar.

mod audit;
mod geometry;

pub use audit::{scan_head_of_queue, scan_red_violations, Violation};
pub use geometry::{LayoutGeometry, PathGeometry};

use crate::data::{
    AgentRecord, LightState, MapInfo, Maneuver, Scene, TrajectoryWindow, FRAMES_PER_SECOND,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("bad scenario config: {0}")]
    BadConfig(String),
    #[error("need at least {need} windows for a 4:1:1 split, got {got}")]
    TooFewWindows { got: usize, need: usize },
}

/// Ordered signal phases plus a start offset into the cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalCycle {
    pub phases: Vec<(LightState, f64)>,
    pub offset: f64,
}

impl SignalCycle {
    pub fn new(phases: Vec<(LightState, f64)>, offset: f64) -> Result<Self, SimError> {
        if phases.is_empty() || phases.iter().any(|(_, d)| d.is_nan() || *d <= 0.0) {
            return Err(SimError::BadConfig(
                "signal phases must be non-empty with positive durations".into(),
            ));
        }
        Ok(SignalCycle { phases, offset })
    }

    pub fn total(&self) -> f64 {
        self.phases.iter().map(|(_, d)| d).sum()
    }
}

/// Periodic phase lookup: the state at time `t` and the seconds remaining
/// until the next phase boundary.
pub fn light_state_at(t: f64, cycle: &SignalCycle) -> (LightState, f64) {
    assert!(t >= 0.0, "time must be non-negative");
    let total = cycle.total();
    let mut elapsed = (t + cycle.offset) % total;
    if elapsed < 0.0 {
        elapsed += total;
    }
    for &(state, dur) in &cycle.phases {
        if elapsed < dur {
            return (state, dur - elapsed);
        }
        elapsed -= dur;
    }
    // Floating-point edge: landed exactly on the total; wrap to phase 0.
    let (state, dur) = cycle.phases[0];
    (state, dur)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Layout {
    Crossroad,
    TJunction,
    Roundabout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub layout: Layout,
    pub lanes_per_arm: usize,
    /// Spawn attempts per second per arm.
    pub spawn_rate: f64,
    /// Free-flow speed, pixels per second.
    pub speed_limit: f64,
    /// Influence-area depth behind the stop line, pixels.
    pub influence_depth: f64,
    pub right_turn_on_red: bool,
    pub seed: u64,
    pub green_secs: f64,
    pub yellow_secs: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            layout: Layout::Crossroad,
            lanes_per_arm: 2,
            spawn_rate: 0.15,
            speed_limit: 60.0,
            influence_depth: 120.0,
            right_turn_on_red: true,
            seed: 0,
            green_secs: 20.0,
            yellow_secs: 3.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.lanes_per_arm == 0 {
            return Err(SimError::BadConfig("at least one lane per arm".into()));
        }
        if self.spawn_rate.is_nan() || self.spawn_rate < 0.0 {
            return Err(SimError::BadConfig("spawn rate must be >= 0".into()));
        }
        let positive = |v: f64| !v.is_nan() && v > 0.0;
        if !positive(self.speed_limit) || !positive(self.influence_depth) {
            return Err(SimError::BadConfig(
                "speed limit and influence depth must be positive".into(),
            ));
        }
        if !positive(self.green_secs) || !positive(self.yellow_secs) {
            return Err(SimError::BadConfig("phase durations must be positive".into()));
        }
        Ok(())
    }
}

/// Comfortable deceleration, px/s^2.
const DECEL_COMFORT: f64 = 45.0;
/// Acceleration limit, px/s^2.
const ACCEL_MAX: f64 = 40.0;
/// Bumper-to-bumper length budget for queuing, px.
const CAR_LEN: f64 = 14.0;
/// Minimum standstill gap to the leader, px.
const STOP_GAP: f64 = 8.0;
/// Time headway for the gap rule, seconds.
const HEADWAY: f64 = 1.2;
/// Vehicles halt this far before the stop line, px.
const STOP_MARGIN: f64 = 2.0;

struct Vehicle {
    id: i64,
    path: usize,
    s: f64,
    v: f64,
    maneuver: Maneuver,
    arm: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum LaneZone {
    Inbound,
    Core,
    Outbound,
}

fn zone_of(path: &PathGeometry, s: f64) -> LaneZone {
    if s <= path.stop_s {
        LaneZone::Inbound
    } else if s < path.out_start_s {
        LaneZone::Core
    } else {
        LaneZone::Outbound
    }
}

/// Progress along the current lane, comparable between vehicles that share
/// the lane even when their full paths differ.
fn lane_progress(path: &PathGeometry, s: f64) -> f64 {
    match zone_of(path, s) {
        LaneZone::Inbound => s,
        LaneZone::Core => s - path.stop_s,
        LaneZone::Outbound => s - path.out_start_s,
    }
}

fn current_lane(path: &PathGeometry, s: f64) -> i64 {
    match zone_of(path, s) {
        LaneZone::Inbound | LaneZone::Core => path.in_lane_id,
        LaneZone::Outbound => path.out_lane_id,
    }
}

/// Generates a scene: `frames` frames at 3 fps, map sidecar attached.
/// Deterministic for a given config.
pub fn generate_scene(config: &ScenarioConfig, frames: usize) -> Result<Scene, SimError> {
    config.validate()?;
    let geom = geometry::build_layout(config)?;
    let dt = 1.0 / FRAMES_PER_SECOND;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut vehicles: Vec<Vehicle> = Vec::new();
    let mut next_id: i64 = 1;
    let mut out_frames: Vec<(i64, Vec<AgentRecord>)> = Vec::new();

    for frame in 0..frames {
        let t = frame as f64 * dt;

        // Move existing vehicles into this frame.
        if frame > 0 {
            step_vehicles(&mut vehicles, &geom, config, t, dt);
            vehicles.retain(|v| v.s < geom.paths[v.path].total_len);
        }

        // Spawn attempts, one per arm in fixed order.
        for arm_idx in 0..geom.arms.len() {
            let u: f64 = rng.gen();
            if u >= config.spawn_rate * dt {
                continue;
            }
            let arm = &geom.arms[arm_idx];
            let maneuver = draw_maneuver(&mut rng, &arm.maneuvers);
            let lane = lane_for_maneuver(&mut rng, maneuver, config.lanes_per_arm);
            let path_idx = geom.path_index(arm_idx, lane, maneuver);
            let lane_id = geom.paths[path_idx].in_lane_id;
            let clear = vehicles.iter().all(|v| {
                let p = &geom.paths[v.path];
                !(current_lane(p, v.s) == lane_id
                    && lane_progress(p, v.s) < CAR_LEN + STOP_GAP + 30.0)
            });
            if clear {
                vehicles.push(Vehicle {
                    id: next_id,
                    path: path_idx,
                    s: 0.0,
                    v: config.speed_limit,
                    maneuver,
                    arm: arm_idx,
                });
                next_id += 1;
            }
        }

        out_frames.push((
            frame as i64,
            emit_records(&vehicles, &geom, config, t, frame),
        ));
    }

    let mut scene = Scene::new(
        out_frames
            .into_iter()
            .filter(|(_, r)| !r.is_empty())
            .collect(),
    );
    scene.map = Some(geom.map_info());
    Ok(scene)
}

fn draw_maneuver(rng: &mut ChaCha8Rng, menu: &[Maneuver]) -> Maneuver {
    // Straight is twice as likely as each turn, where available.
    let weights: Vec<u32> = menu
        .iter()
        .map(|m| if *m == Maneuver::Straight { 2 } else { 1 })
        .collect();
    let total: u32 = weights.iter().sum();
    let mut draw = rng.gen_range(0..total);
    for (m, w) in menu.iter().zip(&weights) {
        if draw < *w {
            return *m;
        }
        draw -= w;
    }
    *menu.last().expect("maneuver menu is non-empty")
}

fn lane_for_maneuver(rng: &mut ChaCha8Rng, maneuver: Maneuver, lanes: usize) -> usize {
    match maneuver {
        Maneuver::Left => 0,
        Maneuver::Right => lanes - 1,
        Maneuver::Straight => rng.gen_range(0..lanes),
    }
}

fn step_vehicles(
    vehicles: &mut [Vehicle],
    geom: &LayoutGeometry,
    config: &ScenarioConfig,
    t_arrival: f64,
    dt: f64,
) {
    // Decisions read the previous frame's state for every vehicle, so update
    // order cannot leak through a frame.
    let snapshot: Vec<(i64, f64)> = vehicles
        .iter()
        .map(|v| {
            let p = &geom.paths[v.path];
            (current_lane(p, v.s), lane_progress(p, v.s))
        })
        .collect();

    for i in 0..vehicles.len() {
        let path = &geom.paths[vehicles[i].path];
        let (my_lane, my_pos) = snapshot[i];
        let mut v_target = config.speed_limit;

        // Gap rule against the nearest leader on the same lane.
        let mut best_gap = f64::INFINITY;
        for (j, &(lane, pos)) in snapshot.iter().enumerate() {
            if j != i && lane == my_lane && pos > my_pos {
                best_gap = best_gap.min(pos - my_pos - CAR_LEN);
            }
        }
        if best_gap < f64::INFINITY {
            let v_gap = ((best_gap - STOP_GAP).max(0.0)) / HEADWAY;
            v_target = v_target.min(v_gap);
        }

        // Signal rule inside the influence area.
        let mut hard_stop_at: Option<f64> = None;
        if zone_of(path, vehicles[i].s) == LaneZone::Inbound {
            let dist_to_stop = path.stop_s - vehicles[i].s;
            if dist_to_stop > 0.0 && dist_to_stop <= config.influence_depth {
                let cycle = &geom.arms[vehicles[i].arm].cycle;
                let (state_now, _) = light_state_at((t_arrival - dt).max(0.0), cycle);
                let (state_at_arrival, _) = light_state_at(t_arrival, cycle);
                let exempt = vehicles[i].maneuver == Maneuver::Right && config.right_turn_on_red;
                let red_block = !exempt && state_at_arrival == LightState::Red;
                let yellow_brake = !exempt
                    && state_now == LightState::Yellow
                    && vehicles[i].v * vehicles[i].v / (2.0 * DECEL_COMFORT)
                        <= (dist_to_stop - STOP_MARGIN).max(0.0);
                if red_block || yellow_brake {
                    let braking_dist = (dist_to_stop - STOP_MARGIN).max(0.0);
                    let v_brake = (2.0 * DECEL_COMFORT * braking_dist).sqrt();
                    v_target = v_target.min(v_brake);
                    if red_block {
                        hard_stop_at = Some(path.stop_s - STOP_MARGIN);
                    }
                }
            }
        }

        // Accelerate or brake toward the target within limits; braking to a
        // hard stop may exceed the comfort bound.
        let v_prev = vehicles[i].v;
        let mut v_new = v_target
            .min(v_prev + ACCEL_MAX * dt)
            .max(v_prev - DECEL_COMFORT * dt)
            .max(0.0);
        let mut s_new = vehicles[i].s + v_new * dt;
        if let Some(limit) = hard_stop_at {
            if s_new >= limit {
                s_new = limit;
                v_new = 0.0;
            }
        }
        vehicles[i].s = s_new;
        vehicles[i].v = v_new;
    }
}

fn emit_records(
    vehicles: &[Vehicle],
    geom: &LayoutGeometry,
    config: &ScenarioConfig,
    t: f64,
    frame: usize,
) -> Vec<AgentRecord> {
    // Head of queue: nearest influence-area vehicle per light.
    let mut heads: Vec<(i64, f64, i64)> = Vec::new(); // (light_id, dist, agent_id)
    for v in vehicles {
        let path = &geom.paths[v.path];
        if zone_of(path, v.s) == LaneZone::Inbound {
            let dist = path.stop_s - v.s;
            if dist > 0.0 && dist <= config.influence_depth {
                let light_id = geom.arms[v.arm].light_id;
                match heads.iter_mut().find(|(l, _, _)| *l == light_id) {
                    Some(entry) => {
                        if dist < entry.1 || (dist == entry.1 && v.id < entry.2) {
                            entry.1 = dist;
                            entry.2 = v.id;
                        }
                    }
                    None => heads.push((light_id, dist, v.id)),
                }
            }
        }
    }

    vehicles
        .iter()
        .map(|v| {
            let path = &geom.paths[v.path];
            let (x, y) = path.pos_at(v.s);
            let light_id = geom.arms[v.arm].light_id;
            let (ls, lt) = light_state_at(t, &geom.arms[v.arm].cycle);
            let dist = path.stop_s - v.s;
            let pa = zone_of(path, v.s) == LaneZone::Inbound
                && dist > 0.0
                && dist <= config.influence_depth;
            let head = pa && heads.iter().any(|&(l, _, id)| l == light_id && id == v.id);
            AgentRecord {
                frame_id: frame as i64,
                agent_id: v.id,
                x,
                y,
                lane_id: current_lane(path, v.s),
                in_influence_area: pa,
                head_of_queue: head,
                maneuver: v.maneuver,
                light_id,
                light_state: ls,
                light_remaining: lt,
            }
        })
        .collect()
}

/// Windows of each split.
#[derive(Debug, Clone)]
pub struct SplitWindows {
    pub train: Vec<TrajectoryWindow>,
    pub val: Vec<TrajectoryWindow>,
    pub test: Vec<TrajectoryWindow>,
}

/// Disjoint seeded 4:1:1 split of the scene's windows by start frame.
pub fn labeled_splits(
    scene: &Scene,
    obs_len: usize,
    pred_len: usize,
    stride: usize,
    seed: u64,
) -> Result<SplitWindows, SimError> {
    let windows = crate::data::window_scene(scene, obs_len, pred_len, stride);
    let n = windows.len();
    if n < 6 {
        return Err(SimError::TooFewWindows { got: n, need: 6 });
    }
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_val = n / 6;
    let n_test = n / 6;
    let mut windows: Vec<Option<TrajectoryWindow>> = windows.into_iter().map(Some).collect();
    let mut take = |idxs: &[usize]| -> Vec<TrajectoryWindow> {
        let mut out: Vec<TrajectoryWindow> = idxs
            .iter()
            .map(|&i| windows[i].take().expect("indices are disjoint"))
            .collect();
        out.sort_by_key(|w| w.start_frame);
        out
    };
    let val = take(&order[..n_val]);
    let test = take(&order[n_val..n_val + n_test]);
    let train = take(&order[n_val + n_test..]);
    Ok(SplitWindows { train, val, test })
}

/// Scene restricted to the frame spans of the given windows (split CSVs
/// re-window to exactly those windows when spans align with the stride).
pub fn scene_subset(scene: &Scene, windows: &[TrajectoryWindow], span: usize) -> Scene {
    let mut keep: Vec<(i64, i64)> = windows
        .iter()
        .map(|w| (w.start_frame, w.start_frame + span as i64))
        .collect();
    keep.sort_unstable();
    let frames = scene
        .frames()
        .iter()
        .filter(|(fid, _)| keep.iter().any(|&(a, b)| *fid >= a && *fid < b))
        .cloned()
        .collect();
    let mut subset = Scene::new(frames);
    subset.map = scene.map.clone();
    subset
}

/// Fraction of vehicles that ever sit in an influence area under a red
/// light: the share of light-constrained traffic in a scene.
pub fn light_constrained_fraction(scene: &Scene) -> f64 {
    use std::collections::BTreeSet;
    let mut all: BTreeSet<i64> = BTreeSet::new();
    let mut constrained: BTreeSet<i64> = BTreeSet::new();
    for r in scene.records() {
        all.insert(r.agent_id);
        if r.in_influence_area && r.light_state == LightState::Red {
            constrained.insert(r.agent_id);
        }
    }
    if all.is_empty() {
        return 0.0;
    }
    constrained.len() as f64 / all.len() as f64
}

/// Map sidecar for a config, without generating any frames.
pub fn map_for(config: &ScenarioConfig) -> Result<MapInfo, SimError> {
    Ok(geometry::build_layout(config)?.map_info())
}
