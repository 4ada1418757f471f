//! Layout geometry: arms, lanes, stop lines, turn curves, and the map
//! sidecar. Screen coordinates, y growing downward; traffic drives on the
//! right.

use super::{Layout, ScenarioConfig, SignalCycle, SimError};
use crate::data::{LightState, MapInfluenceArea, MapInfo, MapLane, MapLight, MapPhase, Maneuver};

pub const LANE_WIDTH: f64 = 36.0;
pub const ARM_LEN: f64 = 620.0;
pub const CORE_MARGIN: f64 = 24.0;
pub const CENTER: (f64, f64) = (800.0, 800.0);

type Vec2 = (f64, f64);

fn add(a: Vec2, b: Vec2) -> Vec2 {
    (a.0 + b.0, a.1 + b.1)
}

fn scale(a: Vec2, s: f64) -> Vec2 {
    (a.0 * s, a.1 * s)
}

fn right_of(d: Vec2) -> Vec2 {
    (-d.1, d.0)
}

/// Compass arms. The inbound heading points toward the center.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    North,
    East,
    South,
    West,
}

impl Arm {
    fn inbound_dir(self) -> Vec2 {
        match self {
            Arm::North => (0.0, 1.0),
            Arm::South => (0.0, -1.0),
            Arm::East => (-1.0, 0.0),
            Arm::West => (1.0, 0.0),
        }
    }

    fn code(self) -> i64 {
        match self {
            Arm::North => 1,
            Arm::South => 2,
            Arm::East => 3,
            Arm::West => 4,
        }
    }

    /// Direction-group sign for a given flow heading: southbound and
    /// eastbound flows are positive, northbound and westbound negative.
    fn flow_sign(d: Vec2) -> i64 {
        if d == (0.0, 1.0) || d == (1.0, 0.0) {
            1
        } else {
            -1
        }
    }

    fn exit_for(self, maneuver: Maneuver) -> Arm {
        // Right of southbound is west, of eastbound is south, and so on.
        let order_right = |a: Arm| match a {
            Arm::North => Arm::West,
            Arm::West => Arm::South,
            Arm::South => Arm::East,
            Arm::East => Arm::North,
        };
        match maneuver {
            Maneuver::Straight => match self {
                Arm::North => Arm::South,
                Arm::South => Arm::North,
                Arm::East => Arm::West,
                Arm::West => Arm::East,
            },
            Maneuver::Right => order_right(self),
            Maneuver::Left => order_right(order_right(order_right(self))),
        }
    }

    fn compass(d: Vec2) -> &'static str {
        match d {
            (0.0, 1.0) => "S",
            (0.0, -1.0) => "N",
            (1.0, 0.0) => "E",
            _ => "W",
        }
    }
}

/// A vehicle path: polyline with cumulative arclength, the stop-line
/// arclength, and where the outbound lane begins.
#[derive(Debug, Clone)]
pub struct PathGeometry {
    points: Vec<Vec2>,
    cum: Vec<f64>,
    pub total_len: f64,
    pub stop_s: f64,
    pub out_start_s: f64,
    pub in_lane_id: i64,
    pub out_lane_id: i64,
}

impl PathGeometry {
    fn from_points(points: Vec<Vec2>, stop_s: f64, out_start_s: f64, in_lane_id: i64, out_lane_id: i64) -> Self {
        let mut cum = Vec::with_capacity(points.len());
        let mut total = 0.0;
        cum.push(0.0);
        for pair in points.windows(2) {
            total += (pair[1].0 - pair[0].0).hypot(pair[1].1 - pair[0].1);
            cum.push(total);
        }
        PathGeometry {
            points,
            cum,
            total_len: total,
            stop_s,
            out_start_s,
            in_lane_id,
            out_lane_id,
        }
    }

    pub fn pos_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.total_len);
        // Paths have a handful of segments; a linear scan is fine.
        for (i, pair) in self.points.windows(2).enumerate() {
            if s <= self.cum[i + 1] || i + 2 == self.points.len() {
                let seg = self.cum[i + 1] - self.cum[i];
                let f = if seg > 0.0 { (s - self.cum[i]) / seg } else { 0.0 };
                return (
                    pair[0].0 + (pair[1].0 - pair[0].0) * f,
                    pair[0].1 + (pair[1].1 - pair[0].1) * f,
                );
            }
        }
        *self.points.last().expect("paths have points")
    }
}

#[derive(Debug, Clone)]
pub struct ArmGeometry {
    pub arm: Arm,
    pub light_id: i64,
    pub cycle: SignalCycle,
    pub maneuvers: Vec<Maneuver>,
    /// Stop-line midpoint over the inbound lanes (the light position).
    pub light_pos: Vec2,
}

#[derive(Debug, Clone)]
pub struct LayoutGeometry {
    pub arms: Vec<ArmGeometry>,
    pub paths: Vec<PathGeometry>,
    /// `(arm index, lane index, maneuver) -> path index`.
    path_lookup: Vec<(usize, usize, Maneuver)>,
    pub half_core: f64,
    lanes_per_arm: usize,
    influence_depth: f64,
}

impl LayoutGeometry {
    pub fn path_index(&self, arm: usize, lane: usize, maneuver: Maneuver) -> usize {
        self.path_lookup
            .iter()
            .position(|&(a, l, m)| a == arm && l == lane && m == maneuver)
            .expect("path exists for every (arm, lane, permitted maneuver)")
    }

    /// Sidecar: light positions with offset-baked cycles, inbound/outbound
    /// lane polylines, and influence-area polygons whose first two vertices
    /// are the stop-line segment.
    pub fn map_info(&self) -> MapInfo {
        let mut lights = Vec::new();
        let mut lanes = Vec::new();
        let mut influence_areas = Vec::new();

        for (arm_idx, arm) in self.arms.iter().enumerate() {
            lights.push(MapLight {
                id: arm.light_id,
                x: arm.light_pos.0,
                y: arm.light_pos.1,
                cycle: baked_phases(&arm.cycle),
            });

            let d = arm.arm.inbound_dir();
            let r = right_of(d);
            let half = self.half_core;
            for lane in 0..self.lanes_per_arm {
                let off = LANE_WIDTH / 2.0 + lane as f64 * LANE_WIDTH;
                // Inbound lane polyline: entry to stop line.
                let entry = add(add(CENTER, scale(d, -(half + ARM_LEN))), scale(r, off));
                let stop = add(add(CENTER, scale(d, -half)), scale(r, off));
                lanes.push(MapLane {
                    id: lane_id(arm.arm, lane, false),
                    dir: Arm::compass(d).to_string(),
                    polyline: vec![[entry.0, entry.1], [stop.0, stop.1]],
                });
                // Outbound lane polyline: core edge to arm end.
                let d_out = scale(d, -1.0);
                let r_out = right_of(d_out);
                let out_start = add(add(CENTER, scale(d_out, half)), scale(r_out, off));
                let out_end = add(out_start, scale(d_out, ARM_LEN));
                lanes.push(MapLane {
                    id: lane_id(arm.arm, lane, true),
                    dir: Arm::compass(d_out).to_string(),
                    polyline: vec![[out_start.0, out_start.1], [out_end.0, out_end.1]],
                });
            }

            // Influence area over all inbound lanes: the first two vertices
            // are the stop-line segment (left, right), then the back edge.
            let road_half = self.lanes_per_arm as f64 * LANE_WIDTH;
            let stop_left = add(CENTER, scale(d, -self.half_core));
            let stop_right = add(stop_left, scale(r, road_half));
            let back_left = add(stop_left, scale(d, -self.influence_depth));
            let back_right = add(stop_right, scale(d, -self.influence_depth));
            influence_areas.push(MapInfluenceArea {
                light_id: arm.light_id,
                polygon: vec![
                    [stop_left.0, stop_left.1],
                    [stop_right.0, stop_right.1],
                    [back_right.0, back_right.1],
                    [back_left.0, back_left.1],
                ],
            });
            let _ = arm_idx;
        }

        MapInfo {
            lights,
            lanes,
            influence_areas,
        }
    }
}

/// Cycle as phase list starting at t = 0 (offset baked by rotation,
/// splitting the phase the offset lands in).
fn baked_phases(cycle: &SignalCycle) -> Vec<MapPhase> {
    let total = cycle.total();
    let mut into = cycle.offset % total;
    if into < 0.0 {
        into += total;
    }
    let mut phases: Vec<MapPhase> = Vec::new();
    let mut idx = 0;
    while into >= cycle.phases[idx].1 {
        into -= cycle.phases[idx].1;
        idx = (idx + 1) % cycle.phases.len();
    }
    // First (possibly partial) phase, then the rest, then the consumed head.
    let n = cycle.phases.len();
    let first_remaining = cycle.phases[idx].1 - into;
    phases.push(MapPhase {
        state: cycle.phases[idx].0,
        dur: first_remaining,
    });
    for step in 1..n {
        let (state, dur) = cycle.phases[(idx + step) % n];
        phases.push(MapPhase { state, dur });
    }
    if into > 0.0 {
        phases.push(MapPhase {
            state: cycle.phases[idx].0,
            dur: into,
        });
    }
    phases
}

fn lane_id(arm: Arm, lane: usize, outbound: bool) -> i64 {
    let d = arm.inbound_dir();
    let flow = if outbound { scale(d, -1.0) } else { d };
    let magnitude = arm.code() * 100 + lane as i64 + if outbound { 50 } else { 0 };
    Arm::flow_sign(flow) * magnitude
}

fn two_phase_cycle(green: f64, yellow: f64, offset: f64) -> SignalCycle {
    SignalCycle {
        phases: vec![
            (LightState::Green, green),
            (LightState::Yellow, yellow),
            (LightState::Red, green + yellow),
        ],
        offset,
    }
}

pub fn build_layout(config: &ScenarioConfig) -> Result<LayoutGeometry, SimError> {
    config.validate()?;
    let arms: Vec<Arm> = match config.layout {
        Layout::Crossroad | Layout::Roundabout => {
            vec![Arm::North, Arm::East, Arm::South, Arm::West]
        }
        Layout::TJunction => vec![Arm::North, Arm::East, Arm::West],
    };
    let half_core = config.lanes_per_arm as f64 * LANE_WIDTH + CORE_MARGIN;

    let arm_geoms: Vec<ArmGeometry> = arms
        .iter()
        .enumerate()
        .map(|(i, &arm)| {
            // North/south arms share phase 0; east/west run in antiphase.
            let ns = matches!(arm, Arm::North | Arm::South);
            let offset = if ns {
                0.0
            } else {
                config.green_secs + config.yellow_secs
            };
            let cycle = two_phase_cycle(config.green_secs, config.yellow_secs, offset);
            let maneuvers = permitted_maneuvers(config.layout, arm);
            let d = arm.inbound_dir();
            let r = right_of(d);
            let road_half = config.lanes_per_arm as f64 * LANE_WIDTH / 2.0;
            let light_pos = add(
                add(CENTER, scale(d, -half_core)),
                scale(r, road_half),
            );
            ArmGeometry {
                arm,
                light_id: i as i64 + 1,
                cycle,
                maneuvers,
                light_pos,
            }
        })
        .collect();

    let mut paths = Vec::new();
    let mut path_lookup = Vec::new();
    for (arm_idx, ag) in arm_geoms.iter().enumerate() {
        for lane in 0..config.lanes_per_arm {
            for &m in &ag.maneuvers {
                let path = match config.layout {
                    Layout::Roundabout => ring_path(ag.arm, lane, m, half_core),
                    _ => box_path(ag.arm, lane, m, half_core),
                };
                paths.push(path);
                path_lookup.push((arm_idx, lane, m));
            }
        }
    }

    Ok(LayoutGeometry {
        arms: arm_geoms,
        paths,
        path_lookup,
        half_core,
        lanes_per_arm: config.lanes_per_arm,
        influence_depth: config.influence_depth,
    })
}

fn permitted_maneuvers(layout: Layout, arm: Arm) -> Vec<Maneuver> {
    match layout {
        Layout::Crossroad | Layout::Roundabout => {
            vec![Maneuver::Straight, Maneuver::Left, Maneuver::Right]
        }
        Layout::TJunction => match arm {
            // The stem of the T: turns only.
            Arm::North => vec![Maneuver::Left, Maneuver::Right],
            // Through road: the turn toward the stem plus straight.
            Arm::East => vec![Maneuver::Straight, Maneuver::Right],
            Arm::West => vec![Maneuver::Straight, Maneuver::Left],
            Arm::South => Vec::new(),
        },
    }
}

/// Straight-or-curved path through a rectangular core.
fn box_path(arm: Arm, lane: usize, maneuver: Maneuver, half_core: f64) -> PathGeometry {
    let d = arm.inbound_dir();
    let r = right_of(d);
    let off = LANE_WIDTH / 2.0 + lane as f64 * LANE_WIDTH;
    let entry = add(add(CENTER, scale(d, -(half_core + ARM_LEN))), scale(r, off));
    let stop = add(add(CENTER, scale(d, -half_core)), scale(r, off));

    let exit_arm = arm.exit_for(maneuver);
    let d_exit_in = exit_arm.inbound_dir();
    let d_out = scale(d_exit_in, -1.0);
    let r_out = right_of(d_out);
    let out_start = add(add(CENTER, scale(d_out, half_core)), scale(r_out, off));
    let out_end = add(out_start, scale(d_out, ARM_LEN));

    let mut points = vec![entry, stop];
    match maneuver {
        Maneuver::Straight => {}
        _ => {
            // Quadratic curve from the stop line to the exit, bent through
            // the intersection of the entry and exit direction lines.
            let control = line_intersection(stop, d, out_start, scale(d_out, -1.0))
                .unwrap_or(add(scale(add(stop, out_start), 0.5), (0.0, 0.0)));
            for step in 1..8 {
                let f = step as f64 / 8.0;
                let a = add(scale(stop, (1.0 - f) * (1.0 - f)), scale(control, 2.0 * f * (1.0 - f)));
                points.push(add(a, scale(out_start, f * f)));
            }
        }
    }
    points.push(out_start);
    points.push(out_end);

    let mut pg = PathGeometry::from_points(
        points,
        0.0,
        0.0,
        lane_id(arm, lane, false),
        lane_id(exit_arm, lane, true),
    );
    pg.stop_s = ARM_LEN;
    // Outbound begins where the exit lane starts.
    let out_idx = pg.points.len() - 2;
    pg.out_start_s = pg.cum[out_idx];
    pg
}

/// Path through a circulating ring: entry connector, arc, exit connector.
fn ring_path(arm: Arm, lane: usize, maneuver: Maneuver, half_core: f64) -> PathGeometry {
    let d = arm.inbound_dir();
    let r = right_of(d);
    let off = LANE_WIDTH / 2.0 + lane as f64 * LANE_WIDTH;
    let entry = add(add(CENTER, scale(d, -(half_core + ARM_LEN))), scale(r, off));
    let stop = add(add(CENTER, scale(d, -half_core)), scale(r, off));

    let ring_r = half_core - LANE_WIDTH / 2.0;
    let theta_arm = match arm {
        Arm::East => 0.0,
        Arm::South => std::f64::consts::FRAC_PI_2,
        Arm::West => std::f64::consts::PI,
        Arm::North => 3.0 * std::f64::consts::FRAC_PI_2,
    };
    let quarters = match maneuver {
        Maneuver::Right => 1.0,
        Maneuver::Straight => 2.0,
        Maneuver::Left => 3.0,
    };
    // Circulation runs clockwise in compass terms (angle decreasing).
    let theta_in = theta_arm - 0.35;
    let theta_out = theta_arm - quarters * std::f64::consts::FRAC_PI_2 + 0.35;

    let on_ring = |theta: f64| -> Vec2 {
        (
            CENTER.0 + ring_r * theta.cos(),
            CENTER.1 + ring_r * theta.sin(),
        )
    };

    let mut points = vec![entry, stop, on_ring(theta_in)];
    let span = theta_in - theta_out;
    let steps = (span / 0.2).ceil() as usize;
    for i in 1..steps {
        points.push(on_ring(theta_in - span * i as f64 / steps as f64));
    }
    points.push(on_ring(theta_out));

    let exit_arm = arm.exit_for(maneuver);
    let d_out = scale(exit_arm.inbound_dir(), -1.0);
    let r_out = right_of(d_out);
    let out_start = add(add(CENTER, scale(d_out, half_core)), scale(r_out, off));
    let out_end = add(out_start, scale(d_out, ARM_LEN));
    points.push(out_start);
    points.push(out_end);

    let mut pg = PathGeometry::from_points(
        points,
        0.0,
        0.0,
        lane_id(arm, lane, false),
        lane_id(exit_arm, lane, true),
    );
    pg.stop_s = ARM_LEN;
    let out_idx = pg.points.len() - 2;
    pg.out_start_s = pg.cum[out_idx];
    pg
}

fn line_intersection(p: Vec2, d1: Vec2, q: Vec2, d2: Vec2) -> Option<Vec2> {
    let det = d1.0 * d2.1 - d1.1 * d2.0;
    if det.abs() < 1e-12 {
        return None;
    }
    let t = ((q.0 - p.0) * d2.1 - (q.1 - p.1) * d2.0) / det;
    Some((p.0 + d1.0 * t, p.1 + d1.1 * t))
}
