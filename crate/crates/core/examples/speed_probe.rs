use signalpred::interaction::SdgParams;
use signalpred::model::*;
use signalpred::sim::*;

fn main() {
    for spawn in [0.10f64, 0.14, 0.18] {
        let config = ScenarioConfig { spawn_rate: spawn, seed: 7, ..ScenarioConfig::default() };
        let scene = generate_scene(&config, 1200).unwrap();
        let splits = labeled_splits(&scene, 8, 12, 20, 0).unwrap();
        let windows = splits.train;
        let agents: usize = windows.iter().map(|w| w.num_agents()).sum();
        let lcf = light_constrained_fraction(&scene);
        let hp = HyperParams { batch: 16, ..HyperParams::default() };
        let mut params = ModelParams::<f64>::init(&hp, 0);
        let cfg = TrainConfig { epochs: 1, seed: 0, k_variety: Some(2), lambda_adv: 1.0, variety: VarietyMode::SequenceNorm };
        let t0 = std::time::Instant::now();
        train(&windows, &mut params, &SdgParams::default(), &cfg).unwrap();
        println!("spawn {spawn}: {} windows, {:.1} agents avg, {:.0}% constrained, {:?}/epoch ({:.1} ms/window)",
            windows.len(), agents as f64 / windows.len() as f64, lcf * 100.0,
            t0.elapsed(), t0.elapsed().as_secs_f64() * 1000.0 / windows.len() as f64);
    }
}
