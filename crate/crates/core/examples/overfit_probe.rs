use signalpred::data::window_scene;
use signalpred::interaction::SdgParams;
use signalpred::metrics::ade;
use signalpred::model::*;
use signalpred::sim::{generate_scene, ScenarioConfig};

fn main() {
    // Slow single-vehicle scene: displacement ~5 px/frame.
    let config = ScenarioConfig {
        spawn_rate: 0.02,
        speed_limit: 15.0,
        green_secs: 1e5,
        yellow_secs: 0.1,
        seed: 3,
        lanes_per_arm: 1,
        ..ScenarioConfig::default()
    };
    let scene = generate_scene(&config, 200).unwrap();
    let windows = window_scene(&scene, 8, 12, 1);
    let window = windows.into_iter().find(|w| w.num_agents() >= 1).unwrap();
    println!("window agents: {:?}, start {}", w_agents(&window), window.start_frame);

    let hp = HyperParams {
        batch: 1,
        k_best: 1,
        ablation: AblationConfig { discriminator: false, ..Default::default() },
        ..HyperParams::default()
    };
    let sdg = SdgParams::default();
    let mut params = ModelParams::<f64>::init(&hp, 0);
    let cfg = TrainConfig {
        epochs: 2000,
        seed: 0,
        k_variety: Some(1),
        lambda_adv: 0.0,
        variety: VarietyMode::SequenceNorm,
    };
    let t0 = std::time::Instant::now();
    let log = train(std::slice::from_ref(&window), &mut params, &sdg, &cfg).unwrap();
    let dur = t0.elapsed();
    for e in log.epochs.iter().step_by(100) {
        println!("step {:4}: loss {:.4} ade {:.4}", e.epoch, e.gen_loss, e.train_ade);
    }
    let last = log.epochs.last().unwrap();
    println!("final: loss {:.5} train_ade {:.5} in {:?}", last.gen_loss, last.train_ade, dur);

    // Eval-style check of the trained model.
    let samples = predict_k(&window, &params, &sdg, 1, 42).unwrap();
    let mut total = 0.0;
    for (a, gt) in window.target.iter().enumerate() {
        total += ade(&samples[0][a], gt).unwrap();
    }
    println!("eval ADE: {:.4}", total / window.target.len() as f64);
}

fn w_agents(w: &signalpred::data::TrajectoryWindow) -> usize { w.num_agents() }
