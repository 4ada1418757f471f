use super::*;
use crate::data::{LightState, Maneuver};
use crate::nn::{gat_scores, AttentionHead};
use crate::tensor::TensorData;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn agent(id: i64, x: f64, y: f64, lane: i64) -> AgentRecord {
    AgentRecord {
        frame_id: 0,
        agent_id: id,
        x,
        y,
        lane_id: lane,
        in_influence_area: false,
        head_of_queue: false,
        maneuver: Maneuver::Straight,
        light_id: 0,
        light_state: LightState::Green,
        light_remaining: 5.0,
    }
}

/// Independent scalar evaluation of the three mask predicates, written
/// against the rule definitions rather than the production code path.
fn oracle_masks(
    agents: &[AgentRecord],
    headings: &[(f64, f64)],
    params: &SdgParams,
) -> (Vec<Vec<bool>>, Vec<Vec<bool>>, Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let n = agents.len();
    let mut v = vec![vec![false; n]; n];
    let mut d = vec![vec![false; n]; n];
    let mut l = vec![vec![false; n]; n];
    let mut r = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                v[i][j] = true;
                d[i][j] = true;
                l[i][j] = true;
                r[i][j] = true;
                continue;
            }
            let (dx, dy) = (agents[j].x - agents[i].x, agents[j].y - agents[i].y);
            let dist = dx.hypot(dy);
            let (hx, hy) = headings[i];
            v[i][j] = if (hx, hy) == (0.0, 0.0) || dist == 0.0 {
                true
            } else {
                // Angle via atan2 of the cross/dot pair.
                let cross = hx * dy - hy * dx;
                let dot = hx * dx + hy * dy;
                let angle = cross.abs().atan2(dot);
                let inside = params.intersection_box.is_some_and(|[x0, y0, x1, y1]| {
                    agents[i].x >= x0 && agents[i].x <= x1 && agents[i].y >= y0 && agents[i].y <= y1
                });
                let theta = if inside {
                    params.theta_intersection
                } else {
                    params.theta_road
                };
                angle <= theta
            };
            d[i][j] = dist <= params.d_max;
            l[i][j] = match params.lane_rule {
                LaneRule::DirectionGroup => {
                    agents[i].lane_id.signum() == agents[j].lane_id.signum()
                }
                LaneRule::LiteralLane => agents[i].lane_id == agents[j].lane_id,
            };
            r[i][j] = v[i][j] && d[i][j] && l[i][j];
        }
    }
    (v, d, l, r)
}

/// Union-find re-implementation used as the component oracle.
struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        if self.parent[x] != x {
            let root = self.find(self.parent[x]);
            self.parent[x] = root;
        }
        self.parent[x]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[rb] = ra;
        }
    }
}

fn oracle_components(mask: &AdjacencyMask) -> Vec<Vec<i64>> {
    let n = mask.n();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in 0..n {
            if mask.r.get(i, j) {
                uf.union(i, j);
            }
        }
    }
    let mut by_root: std::collections::BTreeMap<usize, Vec<i64>> = Default::default();
    for i in 0..n {
        let root = uf.find(i);
        by_root.entry(root).or_default().push(mask.agent_ids[i]);
    }
    let mut comps: Vec<Vec<i64>> = by_root
        .into_values()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    comps.sort();
    comps
}

fn random_frame(rng: &mut ChaCha8Rng, n: usize) -> (Vec<AgentRecord>, Vec<(f64, f64)>) {
    let agents: Vec<AgentRecord> = (0..n)
        .map(|i| {
            agent(
                i as i64 + 1,
                rng.gen_range(0.0..400.0),
                rng.gen_range(0.0..400.0),
                *[-2i64, -1, 1, 2].get(rng.gen_range(0..4)).unwrap(),
            )
        })
        .collect();
    let headings: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.15) {
                (0.0, 0.0)
            } else {
                (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            }
        })
        .collect();
    (agents, headings)
}

#[test]
fn dead_ahead_same_group_within_range_connects() {
    let params = SdgParams {
        d_max: 10.0,
        ..SdgParams::default()
    };
    let agents = vec![agent(1, 0.0, 0.0, 3), agent(2, 5.0, 0.0, 4)];
    let mask = build_adjacency(&agents, &[(1.0, 0.0), (1.0, 0.0)], &params).unwrap();
    assert!(mask.r.get(0, 1));
}

#[test]
fn opposite_lane_never_connects_regardless_of_distance() {
    let params = SdgParams::default();
    let agents = vec![agent(1, 0.0, 0.0, 3), agent(7, 2.0, 0.0, -3)];
    let mask = build_adjacency(&agents, &[(1.0, 0.0), (-1.0, 0.0)], &params).unwrap();
    assert!(!mask.r.get(0, 1));
    assert!(!mask.r.get(1, 0));
    // Distance and visibility pass; the lane factor alone vetoes.
    assert!(mask.d.get(0, 1));
    assert!(mask.v.get(0, 1));
    assert!(!mask.l.get(0, 1));
}

#[test]
fn six_random_agents_match_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let params = SdgParams::default();
    for _ in 0..50 {
        let (agents, headings) = random_frame(&mut rng, 6);
        let mask = build_adjacency(&agents, &headings, &params).unwrap();
        let (v, d, l, r) = oracle_masks(&agents, &headings, &params);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(mask.v.get(i, j), v[i][j], "V[{i}][{j}]");
                assert_eq!(mask.d.get(i, j), d[i][j], "D[{i}][{j}]");
                assert_eq!(mask.l.get(i, j), l[i][j], "L[{i}][{j}]");
                assert_eq!(mask.r.get(i, j), r[i][j], "R[{i}][{j}]");
            }
        }
    }
}

#[test]
fn identity_adjacency_partitions_into_singletons() {
    let agents = vec![
        agent(1, 0.0, 0.0, 1),
        agent(2, 1000.0, 0.0, 1),
        agent(3, 0.0, 1000.0, 1),
    ];
    let headings = vec![(1.0, 0.0); 3];
    let mask = build_adjacency(&agents, &headings, &SdgParams::default()).unwrap();
    let comps = partition_subgraphs(&mask);
    assert_eq!(comps, vec![vec![1], vec![2], vec![3]]);
}

#[test]
fn seven_vehicle_frame_partitions_into_expected_subgraphs() {
    // A platoon of three, one distant loner, a close pair, and a vehicle on
    // the opposite lane right next to the platoon.
    let agents = vec![
        agent(1, 0.0, 0.0, 1),
        agent(2, 12.0, 2.0, 2),
        agent(3, 24.0, 0.0, 1),
        agent(4, 500.0, 500.0, 1),
        agent(5, 0.0, 300.0, 1),
        agent(6, 14.0, 300.0, 1),
        agent(7, 6.0, -2.0, -1),
    ];
    let headings = vec![
        (1.0, 0.0),
        (1.0, 0.0),
        (1.0, 0.0),
        (1.0, 0.0),
        (1.0, 0.0),
        (1.0, 0.0),
        (-1.0, 0.0),
    ];
    let mask = build_adjacency(&agents, &headings, &SdgParams::default()).unwrap();
    let comps = partition_subgraphs(&mask);
    assert_eq!(comps, vec![vec![1, 2, 3], vec![4], vec![5, 6], vec![7]]);
    let sizes: Vec<usize> = comps.iter().map(Vec::len).collect();
    assert_eq!(sizes, vec![3, 1, 2, 1]);
}

#[test]
fn random_adjacency_components_match_union_find_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    for _ in 0..100 {
        let n = rng.gen_range(1..9);
        let (agents, headings) = random_frame(&mut rng, n);
        let mask = build_adjacency(&agents, &headings, &SdgParams::default()).unwrap();
        let mut got = partition_subgraphs(&mask);
        got.sort();
        assert_eq!(got, oracle_components(&mask));
    }
}

#[test]
fn empty_frame_rejected() {
    assert!(matches!(
        build_adjacency(&[], &[], &SdgParams::default()),
        Err(GraphError::NoAgents)
    ));
}

#[test]
fn adjacency_is_translation_and_rotation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let params = SdgParams::default();
    for _ in 0..25 {
        let (agents, headings) = random_frame(&mut rng, 5);
        let base = build_adjacency(&agents, &headings, &params).unwrap();

        let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
        let (tx, ty) = (rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let rot = |(x, y): (f64, f64)| (x * phi.cos() - y * phi.sin(), x * phi.sin() + y * phi.cos());
        let moved: Vec<AgentRecord> = agents
            .iter()
            .map(|a| {
                let (x, y) = rot(a.position());
                let mut m = a.clone();
                m.x = x + tx;
                m.y = y + ty;
                m
            })
            .collect();
        let moved_headings: Vec<(f64, f64)> = headings.iter().map(|&h| rot(h)).collect();
        let moved_mask = build_adjacency(&moved, &moved_headings, &params).unwrap();
        assert_eq!(base.v, moved_mask.v);
        assert_eq!(base.d, moved_mask.d);
        assert_eq!(base.l, moved_mask.l);
        assert_eq!(base.r, moved_mask.r);
    }
}

#[test]
fn intersection_zone_widens_the_frustum() {
    let params = SdgParams {
        intersection_box: Some([-10.0, -10.0, 10.0, 10.0]),
        ..SdgParams::default()
    };
    // Neighbor 100 degrees off heading: invisible on the road (60), visible
    // inside the intersection (120).
    let off = 100f64.to_radians();
    let agents_road = vec![
        agent(1, 50.0, 0.0, 1),
        agent(2, 50.0 + 20.0 * off.cos(), 20.0 * off.sin(), 1),
    ];
    let mask = build_adjacency(&agents_road, &[(1.0, 0.0), (1.0, 0.0)], &params).unwrap();
    assert!(!mask.v.get(0, 1));

    let agents_core = vec![
        agent(1, 0.0, 0.0, 1),
        agent(2, 20.0 * off.cos(), 20.0 * off.sin(), 1),
    ];
    let mask = build_adjacency(&agents_core, &[(1.0, 0.0), (1.0, 0.0)], &params).unwrap();
    assert!(mask.v.get(0, 1));
}

fn random_hidden(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<TensorData<f64>> {
    (0..n)
        .map(|_| TensorData::vector((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()))
        .collect()
}

#[test]
fn isolated_agent_aggregates_to_its_own_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let head = AttentionHead::<f64>::init(8, 8, &mut rng);
    let agents = vec![agent(1, 0.0, 0.0, 1), agent(2, 5000.0, 0.0, 1)];
    let mask = build_adjacency(&agents, &[(1.0, 0.0), (1.0, 0.0)], &SdgParams::default()).unwrap();

    let hidden = random_hidden(&mut rng, 2, 8);
    let mut tape = Tape::new();
    let bound = head.bind(&mut tape, false);
    let vars: Vec<Var> = hidden.iter().map(|h| tape.constant(h)).collect();
    let out = spatial_aggregate(&mut tape, &vars, &mask, &bound).unwrap();
    assert_eq!(tape.value(out[0]).data(), hidden[0].data());
    assert_eq!(tape.value(out[1]).data(), hidden[1].data());
}

#[test]
fn identical_neighbors_with_identical_states_return_that_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let head = AttentionHead::<f64>::init(8, 8, &mut rng);
    let agents = vec![agent(1, 0.0, 0.0, 1), agent(2, 5.0, 0.0, 1)];
    let mask = build_adjacency(&agents, &[(1.0, 0.0), (0.0, 0.0)], &SdgParams::default()).unwrap();
    assert!(mask.r.get(0, 1));

    let h = TensorData::vector((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect());
    let mut tape = Tape::new();
    let bound = head.bind(&mut tape, false);
    let hv = tape.constant(&h);
    let out = spatial_aggregate(&mut tape, &[hv, hv], &mask, &bound).unwrap();
    // Convex combination of equal values with weights summing to one.
    for (got, want) in tape.value(out[0]).data().iter().zip(h.data()) {
        assert!((got - want).abs() < 1e-15);
    }
}

#[test]
fn four_agent_aggregate_matches_pairwise_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let head = AttentionHead::<f64>::init(6, 6, &mut rng);
    let (agents, headings) = random_frame(&mut rng, 4);
    let mask = build_adjacency(&agents, &headings, &SdgParams::default()).unwrap();
    let hidden = random_hidden(&mut rng, 4, 6);

    let mut tape = Tape::new();
    let bound = head.bind(&mut tape, false);
    let vars: Vec<Var> = hidden.iter().map(|h| tape.constant(h)).collect();
    let out = spatial_aggregate(&mut tape, &vars, &mask, &bound).unwrap();

    // Scalar re-computation over permitted pairs only.
    let matvec = |m: &TensorData<f64>, v: &[f64]| -> Vec<f64> {
        let (rows, cols) = (m.shape()[0], m.shape()[1]);
        (0..rows)
            .map(|i| (0..cols).map(|j| m.data()[i * cols + j] * v[j]).sum())
            .collect()
    };
    for i in 0..4 {
        let neighbors: Vec<usize> = (0..4).filter(|&j| mask.r.get(i, j)).collect();
        let wq = matvec(&head.proj, hidden[i].data());
        let scores: Vec<f64> = neighbors
            .iter()
            .map(|&j| {
                let wk = matvec(&head.proj, hidden[j].data());
                let mut s = 0.0;
                for (k, &b) in head.score.data().iter().enumerate() {
                    s += b * if k < 6 { wq[k] } else { wk[k - 6] };
                }
                if s >= 0.0 {
                    s
                } else {
                    0.2 * s
                }
            })
            .collect();
        let m = scores.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
        let denom: f64 = exps.iter().sum();
        let mut expect = vec![0.0; 6];
        for (slot, &j) in neighbors.iter().enumerate() {
            let a = exps[slot] / denom;
            for (e, &hv) in expect.iter_mut().zip(hidden[j].data()) {
                *e += a * hv;
            }
        }
        for (got, want) in tape.value(out[i]).data().iter().zip(&expect) {
            assert!((got - want).abs() < 1e-12, "agent {i}: {got} vs {want}");
        }
    }
}

#[test]
fn non_neighbor_perturbation_leaves_aggregate_bit_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let head = AttentionHead::<f64>::init(6, 6, &mut rng);
    let mut checked = 0;
    while checked < 40 {
        let n = rng.gen_range(2..7);
        let (agents, headings) = random_frame(&mut rng, n);
        let mask = build_adjacency(&agents, &headings, &SdgParams::default()).unwrap();
        let pair = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .find(|&(i, j)| i != j && !mask.r.get(i, j));
        let Some((i, j)) = pair else { continue };

        let hidden = random_hidden(&mut rng, n, 6);
        let run = |h_j: &TensorData<f64>| {
            let mut tape = Tape::new();
            let bound = head.bind(&mut tape, false);
            let vars: Vec<Var> = hidden
                .iter()
                .enumerate()
                .map(|(k, h)| tape.constant(if k == j { h_j } else { h }))
                .collect();
            let out = spatial_aggregate(&mut tape, &vars, &mask, &bound).unwrap();
            tape.value(out[i]).data().to_vec()
        };
        let base = run(&hidden[j]);
        let mut perturbed = hidden[j].clone();
        for v in perturbed.data_mut() {
            *v = rng.gen_range(-100.0..100.0);
        }
        let after = run(&perturbed);
        for (a, b) in base.iter().zip(&after) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        checked += 1;
    }
}

#[test]
fn masked_attention_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let head = AttentionHead::<f64>::init(6, 6, &mut rng);
    for _ in 0..20 {
        let n = rng.gen_range(1..8);
        let (agents, headings) = random_frame(&mut rng, n);
        let mask = build_adjacency(&agents, &headings, &SdgParams::default()).unwrap();
        let hidden = random_hidden(&mut rng, n, 6);
        let mut tape = Tape::new();
        let bound = head.bind(&mut tape, false);
        let vars: Vec<Var> = hidden.iter().map(|h| tape.constant(h)).collect();
        for i in 0..n {
            let keys: Vec<Var> = (0..n)
                .filter(|&j| mask.r.get(i, j))
                .map(|j| vars[j])
                .collect();
            let w = gat_scores(&mut tape, &bound, vars[i], &keys).unwrap();
            let total: f64 = tape.value(w).data().iter().sum();
            assert!((total - 1.0).abs() <= 1e-12);
            assert!(tape.value(w).data().iter().all(|&v| v >= 0.0));
        }
    }
}

#[test]
fn mask_csv_dump_lists_all_four_factors() {
    let agents = vec![agent(1, 0.0, 0.0, 1), agent(2, 5.0, 0.0, 1)];
    let mask = build_adjacency(&agents, &[(1.0, 0.0), (1.0, 0.0)], &SdgParams::default()).unwrap();
    let block = mask.to_csv_block(17);
    let lines: Vec<&str> = block.lines().collect();
    assert_eq!(lines.len(), 8);
    assert!(lines[0].starts_with("17,V,0,"));
    assert!(lines[7].starts_with("17,R,1,"));
}
