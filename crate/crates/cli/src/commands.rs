use crate::config::{
    fingerprint, init_run_dir, load_config, EvalRunConfig, GenerateConfig, TrainRunConfig,
};
use crate::{config_err, runtime_err, CliError, CliResult};
use clap::Args;
use signalpred::data::{parse_dataset, window_scene, MapInfo, Scene, TrajectoryWindow};
use signalpred::interaction::{build_adjacency, LaneRule, SdgParams};
use signalpred::metrics;
use signalpred::model::checkpoint::{load_checkpoint, save_checkpoint};
use signalpred::model::{
    train as train_model, AblationConfig, HyperParams, ModelParams, TrainConfig, VarietyMode,
};
use signalpred::scalar::Scalar;
use signalpred::sim::{
    generate_scene, labeled_splits, light_constrained_fraction, scene_subset, Layout,
    ScenarioConfig,
};
use std::fs;
use std::path::{Path, PathBuf};

fn parse_layout(s: &str) -> Result<Layout, String> {
    match s.to_ascii_lowercase().as_str() {
        "crossroad" => Ok(Layout::Crossroad),
        "tjunction" | "t-junction" => Ok(Layout::TJunction),
        "roundabout" => Ok(Layout::Roundabout),
        _ => Err(format!("unknown layout `{s}`")),
    }
}

fn parse_on_off(s: &str) -> Result<bool, String> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on|off, got `{s}`")),
    }
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// crossroad | tjunction | roundabout
    #[arg(long, default_value = "crossroad", value_parser = parse_layout)]
    layout: Layout,
    /// Number of frames to simulate at 3 fps.
    #[arg(long, default_value_t = 600)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    lanes: usize,
    /// Spawn attempts per second per arm.
    #[arg(long, default_value_t = 0.15)]
    spawn_rate: f64,
    /// Free-flow speed in px/s.
    #[arg(long, default_value_t = 60.0)]
    speed_limit: f64,
    /// Influence-area depth in px.
    #[arg(long, default_value_t = 120.0)]
    influence_depth: f64,
    /// on | off
    #[arg(long, default_value = "on", value_parser = parse_on_off, action = clap::ArgAction::Set)]
    right_on_red: bool,
    #[arg(long, default_value_t = 20.0)]
    green_secs: f64,
    #[arg(long, default_value_t = 3.0)]
    yellow_secs: f64,
    #[arg(long, default_value_t = 8)]
    obs: usize,
    #[arg(long, default_value_t = 12)]
    pred: usize,
    /// Window stride; the default tiles the scene into disjoint windows.
    #[arg(long, default_value_t = 20)]
    stride: usize,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

pub fn generate(args: GenerateArgs) -> CliResult<()> {
    if args.frames < args.obs + args.pred {
        return Err(CliError::Config(format!(
            "insufficient frames for one window: {} < {}",
            args.frames,
            args.obs + args.pred
        )));
    }
    let scenario = ScenarioConfig {
        layout: args.layout,
        lanes_per_arm: args.lanes,
        spawn_rate: args.spawn_rate,
        speed_limit: args.speed_limit,
        influence_depth: args.influence_depth,
        right_turn_on_red: args.right_on_red,
        seed: args.seed,
        green_secs: args.green_secs,
        yellow_secs: args.yellow_secs,
    };
    scenario.validate().map_err(config_err)?;
    let config = GenerateConfig {
        command: "generate".into(),
        scenario: scenario.clone(),
        frames: args.frames,
        obs_len: args.obs,
        pred_len: args.pred,
        stride: args.stride,
        split_seed: args.split_seed,
    };
    let (dir, hash) = init_run_dir(&args.out, &config)?;

    let scene = generate_scene(&scenario, args.frames).map_err(runtime_err)?;
    let splits = labeled_splits(&scene, args.obs, args.pred, args.stride, args.split_seed)
        .map_err(config_err)?;

    scene.write_csv(&dir.join("scene.csv")).map_err(runtime_err)?;
    if let Some(map) = &scene.map {
        map.save(&dir.join("map.json")).map_err(runtime_err)?;
    }
    let span = args.obs + args.pred;
    for (name, windows) in [
        ("train", &splits.train),
        ("val", &splits.val),
        ("test", &splits.test),
    ] {
        let subset = scene_subset(&scene, windows, span);
        subset
            .write_csv(&dir.join(format!("{name}.csv")))
            .map_err(runtime_err)?;
    }

    println!(
        "generated {} frames, {} records ({} train / {} val / {} test windows, {:.0}% light-constrained) -> {}",
        args.frames,
        scene.num_records(),
        splits.train.len(),
        splits.val.len(),
        splits.test.len(),
        100.0 * light_constrained_fraction(&scene),
        dir.display()
    );
    let _ = hash;
    Ok(())
}

/// Loads a split CSV from a dataset run dir and re-windows it with the
/// dataset's own windowing parameters.
fn load_split(
    data_dir: &Path,
    split: &str,
) -> CliResult<(Vec<TrajectoryWindow>, GenerateConfig, Option<MapInfo>, String)> {
    let gen_config: GenerateConfig = load_config(data_dir)?;
    let csv = data_dir.join(format!("{split}.csv"));
    let scene: Scene = parse_dataset(&csv)
        .map_err(|e| config_err(format!("unreadable dataset {}: {e}", csv.display())))?;
    let windows = window_scene(&scene, gen_config.obs_len, gen_config.pred_len, gen_config.stride);
    let map = match fs::read_to_string(data_dir.join("map.json")) {
        Ok(text) => Some(serde_json::from_str(&text).map_err(config_err)?),
        Err(_) => None,
    };
    let canonical = serde_json::to_string(&gen_config).map_err(runtime_err)?;
    Ok((windows, gen_config, map, fingerprint(&canonical)))
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset run directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    /// Samples per generator step (variety objective).
    #[arg(long)]
    k_variety: Option<usize>,
    /// Best-of-K default carried into evaluation.
    #[arg(long, default_value_t = 20)]
    k_best: usize,
    /// Configuration label, e.g. Ss+Bb+TLm+D.
    #[arg(long, default_value = "Ss+Bb+TLm+D")]
    ablation: String,
    /// on | off: include traffic-light features.
    #[arg(long, default_value = "on", value_parser = parse_on_off, action = clap::ArgAction::Set)]
    lights: bool,
    #[arg(long, default_value_t = 1.0)]
    lambda_adv: f64,
    /// seq | step: distance over the whole sequence or summed per step.
    #[arg(long, default_value = "seq")]
    variety: String,
    /// f64 | f32
    #[arg(long, default_value = "f64")]
    precision: String,
    /// Visual frustum half-angle on road segments, degrees.
    #[arg(long, default_value_t = 60.0)]
    theta_road: f64,
    /// Visual frustum half-angle inside the intersection, degrees.
    #[arg(long, default_value_t = 120.0)]
    theta_intersection: f64,
    /// Interaction distance threshold, px.
    #[arg(long, default_value_t = 150.0)]
    d_max: f64,
    /// group | literal lane-mask rule.
    #[arg(long, default_value = "group")]
    lane_rule: String,
    /// Behavior window capacity.
    #[arg(long, default_value_t = 6)]
    k_window: usize,
    #[arg(long, default_value_t = 8)]
    noise_dim: usize,
}

fn parse_variety(s: &str) -> CliResult<VarietyMode> {
    match s {
        "seq" => Ok(VarietyMode::SequenceNorm),
        "step" => Ok(VarietyMode::StepSum),
        _ => Err(CliError::Config(format!("unknown variety mode `{s}`"))),
    }
}

pub fn train(args: TrainArgs) -> CliResult<()> {
    let (windows, gen_config, map, data_hash) = load_split(&args.data, "train")?;
    if windows.is_empty() {
        return Err(CliError::Config("training split has no windows".into()));
    }
    let mut ablation = AblationConfig::parse_label(&args.ablation).map_err(config_err)?;
    ablation.lights = args.lights;

    let hp = HyperParams {
        lr: args.lr,
        batch: args.batch,
        k_best: args.k_best,
        obs_len: gen_config.obs_len,
        pred_len: gen_config.pred_len,
        k_window: args.k_window,
        noise_dim: args.noise_dim,
        ablation,
        ..HyperParams::default()
    };
    hp.validate().map_err(config_err)?;

    let sdg = SdgParams {
        theta_road: args.theta_road.to_radians(),
        theta_intersection: args.theta_intersection.to_radians(),
        d_max: args.d_max,
        lane_rule: match args.lane_rule.as_str() {
            "group" => LaneRule::DirectionGroup,
            "literal" => LaneRule::LiteralLane,
            other => return Err(CliError::Config(format!("unknown lane rule `{other}`"))),
        },
        intersection_box: map.as_ref().and_then(MapInfo::intersection_box),
    };
    sdg.validate().map_err(config_err)?;

    let variety = parse_variety(&args.variety)?;
    let run_config = TrainRunConfig {
        command: "train".into(),
        data_fingerprint: data_hash,
        hp: hp.clone(),
        sdg: sdg.clone(),
        epochs: args.epochs,
        seed: args.seed,
        k_variety: args.k_variety.unwrap_or(hp.k_best),
        lambda_adv: args.lambda_adv,
        variety,
        precision: args.precision.clone(),
    };
    let (dir, _) = init_run_dir(&args.out, &run_config)?;

    let cfg = TrainConfig {
        epochs: args.epochs,
        seed: args.seed,
        k_variety: args.k_variety,
        lambda_adv: args.lambda_adv,
        variety,
    };
    match args.precision.as_str() {
        "f64" => run_train::<f64>(&windows, &hp, &sdg, &cfg, &dir)?,
        "f32" => run_train::<f32>(&windows, &hp, &sdg, &cfg, &dir)?,
        other => return Err(CliError::Config(format!("unknown precision `{other}`"))),
    }
    println!("trained {} epochs on {} windows -> {}", args.epochs, windows.len(), dir.display());
    Ok(())
}

fn run_train<S: Scalar>(
    windows: &[TrajectoryWindow],
    hp: &HyperParams,
    sdg: &SdgParams,
    cfg: &TrainConfig,
    dir: &Path,
) -> CliResult<()> {
    let mut params = ModelParams::<S>::init(hp, cfg.seed);
    let log = train_model(windows, &mut params, sdg, cfg).map_err(runtime_err)?;
    save_checkpoint(dir, &params, sdg).map_err(runtime_err)?;
    fs::write(dir.join("loss.csv"), log.to_csv()).map_err(runtime_err)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Dataset run directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint run directory produced by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Split to evaluate: train | val | test.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 20)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn eval(args: EvalArgs) -> CliResult<()> {
    let (windows, _, _, data_hash) = load_split(&args.data, &args.split)?;
    if windows.is_empty() {
        return Err(CliError::Config("evaluation split has no windows".into()));
    }
    let (params, sdg) = load_checkpoint::<f64>(&args.checkpoint).map_err(config_err)?;
    let ckpt_config: TrainRunConfig = load_config(&args.checkpoint)?;
    let ckpt_hash = fingerprint(&serde_json::to_string(&ckpt_config).map_err(runtime_err)?);

    let run_config = EvalRunConfig {
        command: "eval".into(),
        data_fingerprint: data_hash,
        checkpoint_fingerprint: ckpt_hash,
        split: args.split.clone(),
        k: args.k,
        seed: args.seed,
    };
    let (dir, hash) = init_run_dir(&args.out, &run_config)?;

    let report = metrics::evaluate(&windows, &params, &sdg, args.k, args.seed, &hash)
        .map_err(runtime_err)?;
    fs::write(dir.join("report.json"), report.to_json()).map_err(runtime_err)?;
    fs::write(dir.join("report.csv"), report.to_csv()).map_err(runtime_err)?;
    let traces = metrics::trace_csv(&windows, &params, &sdg, args.k, args.seed)
        .map_err(runtime_err)?;
    fs::write(dir.join("traces.csv"), traces).map_err(runtime_err)?;

    println!(
        "evaluated {} windows (K={}): ADE {:.3} px, FDE {:.3} px (min-FDE {:.3}) -> {}",
        windows.len(),
        args.k,
        report.ade,
        report.fde,
        report.min_fde,
        dir.display()
    );
    Ok(())
}

pub fn gradcheck() -> CliResult<()> {
    let outcomes = signalpred::verify::gradient_suite().map_err(runtime_err)?;
    let mut all_ok = true;
    for o in &outcomes {
        let status = if o.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<22} max_rel_err {:.3e} over {} components",
            o.name, o.report.max_rel_err, o.report.components
        );
        all_ok &= o.passed();
    }
    if all_ok {
        Ok(())
    } else {
        Err(CliError::Runtime(
            "gradient suite exceeded the 1e-4 tolerance".into(),
        ))
    }
}

#[derive(Args, Debug)]
pub struct DumpMasksArgs {
    /// Dataset run directory produced by `generate`.
    #[arg(long)]
    data: PathBuf,
    /// Which CSV to read: scene | train | val | test.
    #[arg(long, default_value = "scene")]
    split: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 60.0)]
    theta_road: f64,
    #[arg(long, default_value_t = 120.0)]
    theta_intersection: f64,
    #[arg(long, default_value_t = 150.0)]
    d_max: f64,
}

pub fn dump_masks(args: DumpMasksArgs) -> CliResult<()> {
    let csv = args.data.join(format!("{}.csv", args.split));
    let scene = parse_dataset(&csv)
        .map_err(|e| config_err(format!("unreadable dataset {}: {e}", csv.display())))?;
    let map: Option<MapInfo> = fs::read_to_string(args.data.join("map.json"))
        .ok()
        .and_then(|text| serde_json::from_str(&text).ok());
    let sdg = SdgParams {
        theta_road: args.theta_road.to_radians(),
        theta_intersection: args.theta_intersection.to_radians(),
        d_max: args.d_max,
        intersection_box: map.as_ref().and_then(MapInfo::intersection_box),
        ..SdgParams::default()
    };

    let mut out = String::from("frame,matrix,row,entries...\n");
    let mut prev_pos: std::collections::HashMap<i64, (f64, f64)> = Default::default();
    let mut headings: std::collections::HashMap<i64, (f64, f64)> = Default::default();
    for (fid, records) in scene.frames() {
        let hs: Vec<(f64, f64)> = records
            .iter()
            .map(|r| {
                let h = match prev_pos.get(&r.agent_id) {
                    Some(&(px, py)) => {
                        let d = (r.x - px, r.y - py);
                        if d != (0.0, 0.0) {
                            headings.insert(r.agent_id, d);
                        }
                        *headings.get(&r.agent_id).unwrap_or(&(0.0, 0.0))
                    }
                    None => (0.0, 0.0),
                };
                prev_pos.insert(r.agent_id, (r.x, r.y));
                h
            })
            .collect();
        let mask = build_adjacency(records, &hs, &sdg).map_err(runtime_err)?;
        out.push_str(&mask.to_csv_block(*fid));
    }
    if let Some(parent) = args.out.parent() {
        fs::create_dir_all(parent).map_err(runtime_err)?;
    }
    fs::write(&args.out, out).map_err(runtime_err)?;
    println!("wrote masks for {} frames -> {}", scene.num_frames(), args.out.display());
    Ok(())
}
