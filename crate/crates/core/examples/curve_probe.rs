use rayon::prelude::*;
use signalpred::interaction::SdgParams;
use signalpred::metrics::evaluate;
use signalpred::model::*;
use signalpred::sim::*;

fn main() {
    let scenario = ScenarioConfig { spawn_rate: 0.10, seed: 424242, ..ScenarioConfig::default() };
    let scene = generate_scene(&scenario, 6400).unwrap();
    let splits = labeled_splits(&scene, 8, 12, 20, 1).unwrap();
    let sdg = SdgParams {
        intersection_box: scene.map.as_ref().unwrap().intersection_box(),
        ..SdgParams::default()
    };

    // (label, ablation, lambda, lr)
    let jobs: Vec<(&str, AblationConfig, f64, f64)> = vec![
        ("full λ1.0 lr.01", AblationConfig::default(), 1.0, 0.01),
        ("full λ0.3 lr.02", AblationConfig::default(), 0.3, 0.02),
        ("noD lr.02      ", AblationConfig { discriminator: false, ..Default::default() }, 0.0, 0.02),
        ("full λ0.1 lr.02", AblationConfig::default(), 0.1, 0.02),
    ];
    jobs.par_iter().for_each(|(label, ablation, lambda, lr)| {
        let hp = HyperParams { batch: 16, lr: *lr, ablation: *ablation, ..HyperParams::default() };
        let mut params = ModelParams::<f64>::init(&hp, 1000);
        for chunk in 0..6 {
            let cfg = TrainConfig {
                epochs: 15,
                seed: 2000 + chunk,
                k_variety: Some(2),
                lambda_adv: *lambda,
                variety: VarietyMode::SequenceNorm,
            };
            let log = train(&splits.train, &mut params, &sdg, &cfg).unwrap();
            let last = log.epochs.last().unwrap();
            let report = evaluate(&splits.test, &params, &sdg, 20, 777, "probe").unwrap();
            eprintln!("{label} @{:3} epochs: train_ade {:6.2} gen_loss {:6.2} disc_loss {:5.2} | test ADE {:6.2} FDE {:6.2}",
                (chunk+1)*15, last.train_ade, last.gen_loss, last.disc_loss, report.ade, report.fde);
        }
    });
}
