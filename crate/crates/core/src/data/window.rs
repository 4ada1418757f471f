//! Observation/prediction windowing and displacement encoding.

use super::{AgentRecord, LightState, Maneuver, Scene};

/// One training or evaluation sample: for every agent present through the
/// whole span, `obs_len` observed records and `pred_len` target positions
/// over contiguous frames.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryWindow {
    pub start_frame: i64,
    pub agent_ids: Vec<i64>,
    /// Per agent, `obs_len` records in frame order.
    pub obs: Vec<Vec<AgentRecord>>,
    /// Per agent, `pred_len` future positions in frame order.
    pub target: Vec<Vec<(f64, f64)>>,
}

impl TrajectoryWindow {
    pub fn num_agents(&self) -> usize {
        self.agent_ids.len()
    }

    pub fn obs_len(&self) -> usize {
        self.obs.first().map_or(0, Vec::len)
    }

    pub fn pred_len(&self) -> usize {
        self.target.first().map_or(0, Vec::len)
    }

    /// Absolute observed positions, `[agent][frame]`.
    pub fn obs_positions(&self) -> Vec<Vec<(f64, f64)>> {
        self.obs
            .iter()
            .map(|rs| rs.iter().map(AgentRecord::position).collect())
            .collect()
    }
}

/// Windows a scene with the given observation/prediction lengths and stride.
///
/// One window per start frame, holding the maximal set of agents present in
/// every frame of the span; spans crossing a frame-id gap, or with no agent
/// present throughout, produce nothing. Scenes that are too short yield an
/// empty list.
pub fn window_scene(
    scene: &Scene,
    obs_len: usize,
    pred_len: usize,
    stride: usize,
) -> Vec<TrajectoryWindow> {
    assert!(obs_len > 0 && pred_len > 0 && stride > 0);
    let span = obs_len + pred_len;
    let frames = scene.frames();
    let mut windows = Vec::new();
    if frames.len() < span {
        return windows;
    }

    for start in (0..=frames.len() - span).step_by(stride) {
        let window_frames = &frames[start..start + span];
        let first = window_frames[0].0;
        let contiguous = window_frames
            .iter()
            .enumerate()
            .all(|(i, (fid, _))| *fid == first + i as i64);
        if !contiguous {
            continue;
        }

        // Agents present in every frame of the span.
        let mut ids: Vec<i64> = window_frames[0].1.iter().map(|r| r.agent_id).collect();
        ids.sort_unstable();
        for (_, records) in &window_frames[1..] {
            ids.retain(|id| records.iter().any(|r| r.agent_id == *id));
            if ids.is_empty() {
                break;
            }
        }
        if ids.is_empty() {
            continue;
        }

        let find = |records: &[AgentRecord], id: i64| -> AgentRecord {
            records
                .iter()
                .find(|r| r.agent_id == id)
                .expect("membership established above")
                .clone()
        };
        let obs: Vec<Vec<AgentRecord>> = ids
            .iter()
            .map(|&id| {
                window_frames[..obs_len]
                    .iter()
                    .map(|(_, rs)| find(rs, id))
                    .collect()
            })
            .collect();
        let target: Vec<Vec<(f64, f64)>> = ids
            .iter()
            .map(|&id| {
                window_frames[obs_len..]
                    .iter()
                    .map(|(_, rs)| find(rs, id).position())
                    .collect()
            })
            .collect();

        windows.push(TrajectoryWindow {
            start_frame: first,
            agent_ids: ids,
            obs,
            target,
        });
    }
    windows
}

/// The non-positional part of an [`AgentRecord`], retained so a displacement
/// encoding can be inverted back to full records.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentFrameContext {
    pub frame_id: i64,
    pub agent_id: i64,
    pub lane_id: i64,
    pub in_influence_area: bool,
    pub head_of_queue: bool,
    pub maneuver: Maneuver,
    pub light_id: i64,
    pub light_state: LightState,
    pub light_remaining: f64,
}

impl AgentFrameContext {
    fn of(r: &AgentRecord) -> Self {
        AgentFrameContext {
            frame_id: r.frame_id,
            agent_id: r.agent_id,
            lane_id: r.lane_id,
            in_influence_area: r.in_influence_area,
            head_of_queue: r.head_of_queue,
            maneuver: r.maneuver,
            light_id: r.light_id,
            light_state: r.light_state,
            light_remaining: r.light_remaining,
        }
    }

    fn into_record(self, x: f64, y: f64) -> AgentRecord {
        AgentRecord {
            frame_id: self.frame_id,
            agent_id: self.agent_id,
            x,
            y,
            lane_id: self.lane_id,
            in_influence_area: self.in_influence_area,
            head_of_queue: self.head_of_queue,
            maneuver: self.maneuver,
            light_id: self.light_id,
            light_state: self.light_state,
            light_remaining: self.light_remaining,
        }
    }
}

/// Displacement-encoded window: per-step displacements with a stored origin,
/// plus the per-frame context needed to invert the encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeWindow {
    pub start_frame: i64,
    pub agent_ids: Vec<i64>,
    pub origins: Vec<(f64, f64)>,
    /// `[agent][obs_len]`; the first entry is always `(0, 0)`.
    pub obs_disp: Vec<Vec<(f64, f64)>>,
    /// `[agent][pred_len]`; continues from the last observed position.
    pub target_disp: Vec<Vec<(f64, f64)>>,
    pub obs_context: Vec<Vec<AgentFrameContext>>,
}

impl RelativeWindow {
    pub fn obs_len(&self) -> usize {
        self.obs_disp.first().map_or(0, Vec::len)
    }

    pub fn pred_len(&self) -> usize {
        self.target_disp.first().map_or(0, Vec::len)
    }

    /// Absolute observed positions recovered by integration.
    pub fn obs_positions(&self) -> Vec<Vec<(f64, f64)>> {
        self.origins
            .iter()
            .zip(&self.obs_disp)
            .map(|(&origin, disps)| integrate(origin, disps[1..].iter().copied()))
            .collect()
    }

    /// Absolute target positions recovered by integration.
    pub fn target_positions(&self) -> Vec<Vec<(f64, f64)>> {
        self.obs_positions()
            .iter()
            .zip(&self.target_disp)
            .map(|(obs, disps)| {
                let last = *obs.last().expect("obs_len > 0");
                integrate_from(last, disps.iter().copied())
            })
            .collect()
    }
}

fn integrate(origin: (f64, f64), disps: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut out = vec![origin];
    let mut cur = origin;
    for d in disps {
        cur = (cur.0 + d.0, cur.1 + d.1);
        out.push(cur);
    }
    out
}

fn integrate_from(start: (f64, f64), disps: impl Iterator<Item = (f64, f64)>) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut cur = start;
    for d in disps {
        cur = (cur.0 + d.0, cur.1 + d.1);
        out.push(cur);
    }
    out
}

/// Converts a window to per-step displacements with stored origins.
pub fn to_relative(window: &TrajectoryWindow) -> RelativeWindow {
    let mut origins = Vec::with_capacity(window.num_agents());
    let mut obs_disp = Vec::with_capacity(window.num_agents());
    let mut target_disp = Vec::with_capacity(window.num_agents());
    let mut obs_context = Vec::with_capacity(window.num_agents());

    for (records, target) in window.obs.iter().zip(&window.target) {
        let origin = records[0].position();
        origins.push(origin);
        let mut disps = vec![(0.0, 0.0)];
        for pair in records.windows(2) {
            let (p0, p1) = (pair[0].position(), pair[1].position());
            disps.push((p1.0 - p0.0, p1.1 - p0.1));
        }
        obs_disp.push(disps);

        let mut prev = records.last().unwrap().position();
        let mut tdisps = Vec::with_capacity(target.len());
        for &p in target {
            tdisps.push((p.0 - prev.0, p.1 - prev.1));
            prev = p;
        }
        target_disp.push(tdisps);
        obs_context.push(records.iter().map(AgentFrameContext::of).collect());
    }

    RelativeWindow {
        start_frame: window.start_frame,
        agent_ids: window.agent_ids.clone(),
        origins,
        obs_disp,
        target_disp,
        obs_context,
    }
}

/// Inverts [`to_relative`], rebuilding the absolute window.
pub fn from_relative(rel: &RelativeWindow) -> TrajectoryWindow {
    let obs_positions = rel.obs_positions();
    let target = rel.target_positions();
    let obs = rel
        .obs_context
        .iter()
        .zip(&obs_positions)
        .map(|(ctxs, ps)| {
            ctxs.iter()
                .zip(ps)
                .map(|(ctx, &(x, y))| ctx.clone().into_record(x, y))
                .collect()
        })
        .collect();
    TrajectoryWindow {
        start_frame: rel.start_frame,
        agent_ids: rel.agent_ids.clone(),
        obs,
        target,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Scene;
    use proptest::prelude::*;

    /// Scene where `present(frame, agent)` controls membership and `pos`
    /// supplies coordinates.
    fn build_scene(
        frames: usize,
        agents: &[i64],
        present: impl Fn(usize, i64) -> bool,
        pos: impl Fn(usize, i64) -> (f64, f64),
    ) -> Scene {
        let frames = (0..frames)
            .map(|f| {
                let records = agents
                    .iter()
                    .filter(|&&a| present(f, a))
                    .map(|&a| {
                        let (x, y) = pos(f, a);
                        AgentRecord {
                            frame_id: f as i64,
                            agent_id: a,
                            x,
                            y,
                            lane_id: 1,
                            in_influence_area: false,
                            head_of_queue: false,
                            maneuver: Maneuver::Straight,
                            light_id: 0,
                            light_state: LightState::Green,
                            light_remaining: 10.0,
                        }
                    })
                    .collect();
                (f as i64, records)
            })
            .collect();
        Scene::new(frames)
    }

    #[test]
    fn twenty_frame_scene_gives_one_window() {
        let scene = build_scene(20, &[1], |_, _| true, |f, _| (f as f64, 0.0));
        let windows = window_scene(&scene, 8, 12, 1);
        assert_eq!(windows.len(), 1);
        assert_eq!(windows[0].obs_len(), 8);
        assert_eq!(windows[0].pred_len(), 12);
    }

    #[test]
    fn twentyfive_frame_scene_gives_six_windows() {
        let scene = build_scene(25, &[1], |_, _| true, |f, _| (f as f64, 0.0));
        assert_eq!(window_scene(&scene, 8, 12, 1).len(), 6);
    }

    #[test]
    fn too_short_scene_yields_empty_list() {
        let scene = build_scene(19, &[1], |_, _| true, |f, _| (f as f64, 0.0));
        assert!(window_scene(&scene, 8, 12, 1).is_empty());
    }

    #[test]
    fn vanishing_agent_excluded_per_brute_force_membership() {
        // Agent 7 is absent at frame 10; agent 1 is always present.
        let scene = build_scene(
            30,
            &[1, 7],
            |f, a| !(a == 7 && f == 10),
            |f, a| (f as f64 * 2.0, a as f64 * 10.0),
        );
        let windows = window_scene(&scene, 8, 12, 1);
        assert_eq!(windows.len(), 11);

        // Exhaustive membership oracle.
        for w in &windows {
            let s = w.start_frame as usize;
            for &agent in &[1i64, 7] {
                let present_all = (s..s + 20).all(|f| {
                    scene.frames()[f].1.iter().any(|r| r.agent_id == agent)
                });
                assert_eq!(
                    w.agent_ids.contains(&agent),
                    present_all,
                    "window at {s}, agent {agent}"
                );
            }
        }
        // Windows overlapping frame 10 lose agent 7 but keep agent 1.
        for w in &windows {
            let covers10 = (w.start_frame..w.start_frame + 20).contains(&10);
            assert_eq!(!w.agent_ids.contains(&7), covers10);
        }
    }

    #[test]
    fn frame_gaps_suppress_spanning_windows() {
        let mut scene = build_scene(40, &[1], |_, _| true, |f, _| (f as f64, 1.0));
        // Remove frame 25 entirely to split the scene into two runs.
        let frames: Vec<_> = scene
            .frames()
            .iter()
            .filter(|(fid, _)| *fid != 25)
            .cloned()
            .collect();
        scene = Scene::new(frames);
        let windows = window_scene(&scene, 8, 12, 1);
        for w in &windows {
            assert!(
                w.start_frame + 19 < 25 || w.start_frame > 25,
                "window at {} spans the gap",
                w.start_frame
            );
        }
        // Frames 0..=24 support starts 0..=5; the 14-frame tail is too short.
        assert_eq!(windows.len(), 6);
    }

    #[test]
    fn stationary_agent_encodes_to_zero_displacements() {
        let scene = build_scene(20, &[1], |_, _| true, |_, _| (250.0, 400.0));
        let w = &window_scene(&scene, 8, 12, 1)[0];
        let rel = to_relative(w);
        assert!(rel.obs_disp[0].iter().all(|&d| d == (0.0, 0.0)));
        assert!(rel.target_disp[0].iter().all(|&d| d == (0.0, 0.0)));
        assert_eq!(rel.origins[0], (250.0, 400.0));
    }

    #[test]
    fn constant_velocity_encodes_to_constant_displacement() {
        let scene = build_scene(20, &[1], |_, _| true, |f, _| (100.0 + 2.0 * f as f64, 77.0));
        let w = &window_scene(&scene, 8, 12, 1)[0];
        let rel = to_relative(w);
        assert_eq!(rel.obs_disp[0][0], (0.0, 0.0));
        assert!(rel.obs_disp[0][1..].iter().all(|&d| d == (2.0, 0.0)));
        assert!(rel.target_disp[0].iter().all(|&d| d == (2.0, 0.0)));
    }

    proptest! {
        /// Random-walk trajectories round-trip bit-exactly through the
        /// displacement encoding.
        #[test]
        fn relative_round_trip_is_bit_exact(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n_agents = rng.gen_range(1..4i64);
            let starts: Vec<(f64, f64)> = (0..n_agents)
                .map(|_| (rng.gen_range(100.0..3000.0), rng.gen_range(100.0..3000.0)))
                .collect();
            let mut tracks: Vec<Vec<(f64, f64)>> = starts.iter().map(|&s| vec![s]).collect();
            for track in &mut tracks {
                for _ in 1..20 {
                    let (x, y) = *track.last().unwrap();
                    // Bounded steps, reflected away from the origin, keep the
                    // walk in the regime where float differences are exact.
                    let nx = (x + rng.gen_range(-25.0..25.0)).max(50.0);
                    let ny = (y + rng.gen_range(-25.0..25.0)).max(50.0);
                    track.push((nx, ny));
                }
            }
            let agents: Vec<i64> = (0..n_agents).collect();
            let scene = build_scene(20, &agents, |_, _| true, |f, a| tracks[a as usize][f]);
            let w = &window_scene(&scene, 8, 12, 1)[0];
            let rel = to_relative(w);
            let back = from_relative(&rel);
            prop_assert_eq!(&back, w);
        }

        /// Windows produced from randomized scenes always satisfy their
        /// length, contiguity, and membership invariants.
        #[test]
        fn window_invariants_hold_on_random_scenes(seed in 0u64..300) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let n_frames = rng.gen_range(5..60usize);
            let n_agents = rng.gen_range(1..5i64);
            let drop_prob = rng.gen_range(0.0..0.3);
            let mask: Vec<Vec<bool>> = (0..n_frames)
                .map(|_| (0..n_agents).map(|_| rng.gen_bool(1.0 - drop_prob)).collect())
                .collect();
            let agents: Vec<i64> = (0..n_agents).collect();
            let scene = build_scene(
                n_frames,
                &agents,
                |f, a| mask[f][a as usize],
                |f, a| (60.0 + f as f64 * 3.0, 60.0 + a as f64 * 12.0),
            );
            for w in window_scene(&scene, 8, 12, 1) {
                prop_assert_eq!(w.agent_ids.len(), w.obs.len());
                prop_assert_eq!(w.agent_ids.len(), w.target.len());
                for (records, target) in w.obs.iter().zip(&w.target) {
                    prop_assert_eq!(records.len(), 8);
                    prop_assert_eq!(target.len(), 12);
                    for (i, r) in records.iter().enumerate() {
                        prop_assert_eq!(r.frame_id, w.start_frame + i as i64);
                    }
                }
                // Each listed agent is present through the whole span.
                let s = w.start_frame as usize;
                for &a in &w.agent_ids {
                    prop_assert!((s..s + 20).all(|f| mask[f][a as usize]));
                }
            }
        }
    }
}
