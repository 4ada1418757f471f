//! Scene audits working only from emitted records and the map sidecar, the
//! way an external checker would.

use crate::data::{LightState, Maneuver, Scene};

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub frame_id: i64,
    pub agent_id: i64,
    pub detail: String,
}

/// Scans consecutive record pairs for agents crossing their stop line into
/// the core while the light shows red at the arrival frame. Right-turning
/// vehicles are exempt when `right_turn_on_red` holds.
///
/// The stop line is the first edge of the light's influence polygon; the
/// crossing direction is from the polygon's back edge toward that line.
pub fn scan_red_violations(scene: &Scene, right_turn_on_red: bool) -> Vec<Violation> {
    let Some(map) = &scene.map else {
        return Vec::new();
    };
    let mut violations = Vec::new();

    for pair in scene.frames().windows(2) {
        let (_, prev_records) = &pair[0];
        let (next_fid, next_records) = &pair[1];
        for prev in prev_records {
            if !prev.in_influence_area {
                continue;
            }
            if prev.maneuver == Maneuver::Right && right_turn_on_red {
                continue;
            }
            let Some(next) = next_records.iter().find(|r| r.agent_id == prev.agent_id) else {
                continue;
            };
            if next.light_state != LightState::Red {
                continue;
            }
            let Some(area) = map
                .influence_areas
                .iter()
                .find(|a| a.light_id == prev.light_id)
            else {
                continue;
            };
            // Stop-line midpoint and the inward (toward-core) direction.
            let stop_mid = (
                (area.polygon[0][0] + area.polygon[1][0]) / 2.0,
                (area.polygon[0][1] + area.polygon[1][1]) / 2.0,
            );
            let back_mid = (
                (area.polygon[2][0] + area.polygon[3][0]) / 2.0,
                (area.polygon[2][1] + area.polygon[3][1]) / 2.0,
            );
            let inward = (stop_mid.0 - back_mid.0, stop_mid.1 - back_mid.1);
            let norm = inward.0.hypot(inward.1);
            let inward = (inward.0 / norm, inward.1 / norm);
            let proj =
                (next.x - stop_mid.0) * inward.0 + (next.y - stop_mid.1) * inward.1;
            if proj > 1e-9 {
                violations.push(Violation {
                    frame_id: *next_fid,
                    agent_id: next.agent_id,
                    detail: format!(
                        "crossed stop line of light {} by {proj:.2} px under red",
                        prev.light_id
                    ),
                });
            }
        }
    }
    violations
}

/// Checks that at most one agent per light per frame carries the
/// head-of-queue flag, and that the flag implies the influence area.
pub fn scan_head_of_queue(scene: &Scene) -> Vec<Violation> {
    let mut violations = Vec::new();
    for (fid, records) in scene.frames() {
        let mut seen_lights: Vec<i64> = Vec::new();
        for r in records {
            if !r.head_of_queue {
                continue;
            }
            if !r.in_influence_area {
                violations.push(Violation {
                    frame_id: *fid,
                    agent_id: r.agent_id,
                    detail: "head-of-queue flag outside the influence area".into(),
                });
            }
            if seen_lights.contains(&r.light_id) {
                violations.push(Violation {
                    frame_id: *fid,
                    agent_id: r.agent_id,
                    detail: format!("second head-of-queue for light {}", r.light_id),
                });
            } else {
                seen_lights.push(r.light_id);
            }
        }
    }
    violations
}
