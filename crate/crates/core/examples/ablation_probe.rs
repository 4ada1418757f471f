use rayon::prelude::*;
use signalpred::interaction::SdgParams;
use signalpred::metrics::evaluate;
use signalpred::model::*;
use signalpred::sim::*;

fn main() {
    // args: epochs seeds lambda spawn green yellow [configs-filter]
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let seeds: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let lambda: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(0.2);
    let spawn: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0.10);
    let green: f64 = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(10.0);
    let yellow: f64 = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(2.5);
    let filter: Option<String> = args.get(7).cloned();

    let scenario = ScenarioConfig {
        spawn_rate: spawn, seed: 424242, green_secs: green, yellow_secs: yellow,
        ..ScenarioConfig::default()
    };
    let scene = generate_scene(&scenario, 6400).unwrap();
    let splits = labeled_splits(&scene, 8, 12, 20, 1).unwrap();
    let agents: usize = splits.train.iter().map(|w| w.num_agents()).sum();
    eprintln!(
        "dataset: {}/{}/{} windows, {:.1} agents avg, {:.0}% light-constrained",
        splits.train.len(), splits.val.len(), splits.test.len(),
        agents as f64 / splits.train.len() as f64,
        light_constrained_fraction(&scene) * 100.0
    );
    let sdg = SdgParams {
        intersection_box: scene.map.as_ref().unwrap().intersection_box(),
        ..SdgParams::default()
    };

    let all: Vec<(&str, AblationConfig)> = vec![
        ("full", AblationConfig::default()),
        ("Sg", AblationConfig { spatial: SpatialMode::GatGlobal, ..Default::default() }),
        ("Bl", AblationConfig { behavior: BehaviorMode::LstmChain, ..Default::default() }),
        ("TLl", AblationConfig { light_encoder: LightEncoderMode::Lstm, ..Default::default() }),
        ("noD", AblationConfig { discriminator: false, ..Default::default() }),
        ("dark", AblationConfig { lights: false, ..Default::default() }),
    ];
    let configs: Vec<(&str, AblationConfig)> = match &filter {
        Some(f) => all.into_iter().filter(|(n, _)| f.split(',').any(|x| x == *n)).collect(),
        None => all,
    };

    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|c| (0..seeds).map(move |s| (c, s)))
        .collect();
    let results: Vec<(usize, u64, f64, f64)> = jobs
        .par_iter()
        .map(|&(ci, seed)| {
            let (label, ablation) = &configs[ci];
            let hp = HyperParams { batch: 16, ablation: *ablation, ..HyperParams::default() };
            let mut params = ModelParams::<f64>::init(&hp, 1000 + seed);
            let cfg = TrainConfig {
                epochs,
                seed: 2000 + seed,
                k_variety: Some(2),
                lambda_adv: lambda,
                variety: VarietyMode::SequenceNorm,
            };
            let t0 = std::time::Instant::now();
            let (_, val_ade) = train_selected(
                &splits.train, &splits.val, &mut params, &sdg, &cfg,
                Selection { every: 10, k: 5, seed: 31337 },
            )
            .unwrap();
            let report = evaluate(&splits.test, &params, &sdg, 20, 777, "probe").unwrap();
            eprintln!(
                "{label} seed {seed}: val {val_ade:.3} | test ADE {:.3} FDE {:.3} ({:.0?})",
                report.ade, report.fde, t0.elapsed()
            );
            (ci, seed, report.ade, report.fde)
        })
        .collect();

    println!("\n== mean over {seeds} seed(s): epochs={epochs} lambda={lambda} spawn={spawn} green={green} ==");
    for (ci, (label, _)) in configs.iter().enumerate() {
        let ades: Vec<f64> = results.iter().filter(|r| r.0 == ci).map(|r| r.2).collect();
        let m = ades.iter().sum::<f64>() / ades.len() as f64;
        println!("{label}: mean test ADE {m:.3} per-seed {ades:?}");
    }
}
