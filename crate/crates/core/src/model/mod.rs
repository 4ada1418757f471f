//! Full model assembly: per-frame encoding, interaction-graph aggregation,
//! behavior-window updates, traffic-light fusion, an autoregressive LSTM
//! decoder with noise input, a trajectory discriminator, and the best-of-K
//! training objective.

pub mod checkpoint;
mod rollout;
pub mod train;

pub use rollout::{
    discriminate, forward_rollout, full_disp_sequence, predict_k, prepare_inputs, rollout,
    variety_loss, variety_loss_values, RolloutInputs, RolloutOutput, Trajectory, VarietyMode,
};
pub use train::{train, train_selected, AdamState, EpochStats, Selection, TrainConfig, TrainLog};

use crate::behavior::LIGHT_FEATURES_PER_FRAME;
use crate::interaction::GraphError;
use crate::nn::{
    AttentionHead, BoundAttentionHead, BoundLinear, BoundLstm, BoundMlp, Linear, LstmCell,
    MlpEncoder,
};
use crate::scalar::Scalar;
use crate::tensor::{Tape, TensorData, TensorError, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("model produced a non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("noise vector has {got} elements, expected {expected}")]
    NoiseDim { expected: usize, got: usize },
    #[error("at least one rollout is required (K >= 1)")]
    NoSamples,
    #[error("window has {got} observed frames, model expects {expected}")]
    ObsLen { expected: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training loss became non-finite at epoch {epoch}, batch {batch}; diagnostics: {dump}")]
    NanLoss {
        epoch: usize,
        batch: usize,
        dump: String,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad ablation label `{0}`; expected e.g. Ss+Bb+TLm+D")]
    BadLabel(String),
}

/// Spatial interaction mode: masked per-frame sub-graphs, or attention over
/// every co-present agent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpatialMode {
    GatGlobal,
    Sdg,
}

/// Temporal mode: chain recurrence, or direct attention over the window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BehaviorMode {
    LstmChain,
    Bdg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LightEncoderMode {
    Lstm,
    Mlp,
}

/// The configuration axes exposed for component comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub spatial: SpatialMode,
    pub behavior: BehaviorMode,
    pub light_encoder: LightEncoderMode,
    pub discriminator: bool,
    pub lights: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            spatial: SpatialMode::Sdg,
            behavior: BehaviorMode::Bdg,
            light_encoder: LightEncoderMode::Mlp,
            discriminator: true,
            lights: true,
        }
    }
}

impl AblationConfig {
    /// Parses labels of the form `Ss+Bb+TLm+D` (axis tags in any order,
    /// case-insensitive; omit `D` to drop the discriminator).
    pub fn parse_label(label: &str) -> Result<Self, ModelError> {
        let mut cfg = AblationConfig {
            discriminator: false,
            ..AblationConfig::default()
        };
        for part in label.split('+') {
            match part.to_ascii_lowercase().as_str() {
                "ss" => cfg.spatial = SpatialMode::Sdg,
                "sg" => cfg.spatial = SpatialMode::GatGlobal,
                "bb" => cfg.behavior = BehaviorMode::Bdg,
                "bl" => cfg.behavior = BehaviorMode::LstmChain,
                "tlm" => cfg.light_encoder = LightEncoderMode::Mlp,
                "tll" => cfg.light_encoder = LightEncoderMode::Lstm,
                "d" => cfg.discriminator = true,
                _ => return Err(ModelError::BadLabel(label.to_string())),
            }
        }
        Ok(cfg)
    }

    pub fn label(&self) -> String {
        let mut out = String::new();
        out.push_str(match self.spatial {
            SpatialMode::Sdg => "Ss",
            SpatialMode::GatGlobal => "Sg",
        });
        out.push_str(match self.behavior {
            BehaviorMode::Bdg => "+Bb",
            BehaviorMode::LstmChain => "+Bl",
        });
        out.push_str(match self.light_encoder {
            LightEncoderMode::Mlp => "+TLm",
            LightEncoderMode::Lstm => "+TLl",
        });
        if self.discriminator {
            out.push_str("+D");
        }
        out
    }
}

/// Model dimensions and training constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Width of the fused spatial+light state.
    pub input_dim: usize,
    /// Length of the attention score vector (twice the projection width).
    pub attn_dim: usize,
    pub lr: f64,
    pub batch: usize,
    /// Sample count for best-of-K training and evaluation.
    pub k_best: usize,
    pub obs_len: usize,
    pub pred_len: usize,
    /// Behavior window capacity.
    pub k_window: usize,
    pub noise_dim: usize,
    pub ablation: AblationConfig,
}

impl Default for HyperParams {
    fn default() -> Self {
        HyperParams {
            embed_dim: 16,
            hidden_dim: 32,
            input_dim: 64,
            attn_dim: 64,
            lr: 0.01,
            batch: 64,
            k_best: 20,
            obs_len: 8,
            pred_len: 12,
            k_window: 6,
            noise_dim: 8,
            ablation: AblationConfig::default(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.embed_dim == 0
            || self.hidden_dim == 0
            || self.input_dim == 0
            || self.attn_dim == 0
            || self.batch == 0
            || self.k_best == 0
            || self.obs_len == 0
            || self.pred_len == 0
            || self.k_window == 0
        {
            return Err("dimensions, batch, K, window lengths must be positive".into());
        }
        if !self.attn_dim.is_multiple_of(2) {
            return Err("attn_dim must be even (score vector spans two projections)".into());
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err("learning rate must be finite and non-negative".into());
        }
        Ok(())
    }

    /// Width of the state entering the behavior stage: the fused width when
    /// lights are on, the plain hidden width otherwise.
    pub fn fused_width(&self) -> usize {
        if self.ablation.lights {
            self.input_dim
        } else {
            self.hidden_dim
        }
    }

    fn attn_proj(&self) -> usize {
        self.attn_dim / 2
    }

    pub fn light_feature_len(&self) -> usize {
        self.obs_len * LIGHT_FEATURES_PER_FRAME
    }

    /// Tiny configuration used by the end-to-end gradient suite.
    pub fn miniature() -> Self {
        HyperParams {
            embed_dim: 4,
            hidden_dim: 8,
            input_dim: 16,
            attn_dim: 16,
            lr: 0.01,
            batch: 2,
            k_best: 2,
            obs_len: 3,
            pred_len: 2,
            k_window: 2,
            noise_dim: 2,
            ablation: AblationConfig::default(),
        }
    }
}

/// Generator weights. Optional components exist only in the configurations
/// that use them, so a checkpoint manifest doubles as a structural
/// description of the active paths.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams<S> {
    pub pos_embed: Linear<S>,
    pub encoder: LstmCell<S>,
    pub spatial_head: AttentionHead<S>,
    pub light_mlp: Option<MlpEncoder<S>>,
    pub light_lstm: Option<LstmCell<S>>,
    pub fuse_proj: Option<Linear<S>>,
    pub temporal_head: Option<AttentionHead<S>>,
    pub temporal_value: Option<Linear<S>>,
    pub behavior_lstm: Option<LstmCell<S>>,
    pub feedback_embed: Linear<S>,
    pub decoder: LstmCell<S>,
    pub output_head: Linear<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorParams<S> {
    pub traj_embed: Linear<S>,
    pub traj_lstm: LstmCell<S>,
    pub light_mlp: Option<MlpEncoder<S>>,
    pub head: Linear<S>,
}

/// Every learnable weight, instantiated according to the ablation flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S> {
    pub hp: HyperParams,
    pub gen: GeneratorParams<S>,
    pub disc: Option<DiscriminatorParams<S>>,
}

impl<S: Scalar> ModelParams<S> {
    pub fn init(hp: &HyperParams, seed: u64) -> Self {
        hp.validate().expect("hyperparameters must be valid");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ab = hp.ablation;
        let w = hp.fused_width();
        let light_in = hp.light_feature_len();
        let light_dims = [light_in, 2 * hp.hidden_dim, hp.hidden_dim];

        let gen = GeneratorParams {
            pos_embed: Linear::init(hp.embed_dim, 2, &mut rng),
            encoder: LstmCell::init(hp.embed_dim, hp.hidden_dim, &mut rng),
            spatial_head: AttentionHead::init(hp.hidden_dim, hp.attn_proj(), &mut rng),
            light_mlp: (ab.lights && ab.light_encoder == LightEncoderMode::Mlp)
                .then(|| MlpEncoder::init(&light_dims, &mut rng)),
            light_lstm: (ab.lights && ab.light_encoder == LightEncoderMode::Lstm)
                .then(|| LstmCell::init(LIGHT_FEATURES_PER_FRAME, hp.hidden_dim, &mut rng)),
            fuse_proj: ab
                .lights
                .then(|| Linear::init(hp.input_dim, 2 * hp.hidden_dim, &mut rng)),
            temporal_head: (ab.behavior == BehaviorMode::Bdg)
                .then(|| AttentionHead::init(w, hp.attn_proj(), &mut rng)),
            temporal_value: (ab.behavior == BehaviorMode::Bdg)
                .then(|| Linear::init(w, 2 * w, &mut rng)),
            behavior_lstm: (ab.behavior == BehaviorMode::LstmChain)
                .then(|| LstmCell::init(w, w, &mut rng)),
            feedback_embed: Linear::init(hp.embed_dim, 2, &mut rng),
            decoder: LstmCell::init(
                w + hp.hidden_dim + hp.embed_dim + hp.noise_dim,
                hp.hidden_dim,
                &mut rng,
            ),
            output_head: Linear::init(2, hp.hidden_dim, &mut rng),
        };
        let disc = ab.discriminator.then(|| DiscriminatorParams {
            traj_embed: Linear::init(hp.embed_dim, 2, &mut rng),
            traj_lstm: LstmCell::init(hp.embed_dim, hp.hidden_dim, &mut rng),
            light_mlp: ab.lights.then(|| MlpEncoder::init(&light_dims, &mut rng)),
            head: Linear::init(
                1,
                if ab.lights {
                    2 * hp.hidden_dim
                } else {
                    hp.hidden_dim
                },
                &mut rng,
            ),
        });
        ModelParams {
            hp: hp.clone(),
            gen,
            disc,
        }
    }

    /// Generator tensors with stable names, in registration order.
    pub fn gen_named(&self) -> Vec<(String, &TensorData<S>)> {
        let mut out = Vec::new();
        named_linear(&mut out, "gen.pos_embed", &self.gen.pos_embed);
        named_lstm(&mut out, "gen.encoder", &self.gen.encoder);
        named_attention(&mut out, "gen.spatial_head", &self.gen.spatial_head);
        if let Some(mlp) = &self.gen.light_mlp {
            named_mlp(&mut out, "gen.light_mlp", mlp);
        }
        if let Some(cell) = &self.gen.light_lstm {
            named_lstm(&mut out, "gen.light_lstm", cell);
        }
        if let Some(l) = &self.gen.fuse_proj {
            named_linear(&mut out, "gen.fuse_proj", l);
        }
        if let Some(h) = &self.gen.temporal_head {
            named_attention(&mut out, "gen.temporal_head", h);
        }
        if let Some(l) = &self.gen.temporal_value {
            named_linear(&mut out, "gen.temporal_value", l);
        }
        if let Some(cell) = &self.gen.behavior_lstm {
            named_lstm(&mut out, "gen.behavior_lstm", cell);
        }
        named_linear(&mut out, "gen.feedback_embed", &self.gen.feedback_embed);
        named_lstm(&mut out, "gen.decoder", &self.gen.decoder);
        named_linear(&mut out, "gen.output_head", &self.gen.output_head);
        out
    }

    pub fn disc_named(&self) -> Vec<(String, &TensorData<S>)> {
        let mut out = Vec::new();
        if let Some(disc) = &self.disc {
            named_linear(&mut out, "disc.traj_embed", &disc.traj_embed);
            named_lstm(&mut out, "disc.traj_lstm", &disc.traj_lstm);
            if let Some(mlp) = &disc.light_mlp {
                named_mlp(&mut out, "disc.light_mlp", mlp);
            }
            named_linear(&mut out, "disc.head", &disc.head);
        }
        out
    }

    pub fn named(&self) -> Vec<(String, &TensorData<S>)> {
        let mut out = self.gen_named();
        out.extend(self.disc_named());
        out
    }

    /// Mutable generator tensors, in the same order as [`Self::gen_named`].
    pub fn gen_tensors_mut(&mut self) -> Vec<&mut TensorData<S>> {
        let mut out: Vec<&mut TensorData<S>> = Vec::new();
        let g = &mut self.gen;
        linear_mut(&mut out, &mut g.pos_embed);
        lstm_mut(&mut out, &mut g.encoder);
        out.push(&mut g.spatial_head.proj);
        out.push(&mut g.spatial_head.score);
        if let Some(mlp) = &mut g.light_mlp {
            for l in &mut mlp.layers {
                out.push(&mut l.w);
                out.push(&mut l.b);
            }
        }
        if let Some(cell) = &mut g.light_lstm {
            lstm_mut(&mut out, cell);
        }
        if let Some(l) = &mut g.fuse_proj {
            linear_mut(&mut out, l);
        }
        if let Some(h) = &mut g.temporal_head {
            out.push(&mut h.proj);
            out.push(&mut h.score);
        }
        if let Some(l) = &mut g.temporal_value {
            linear_mut(&mut out, l);
        }
        if let Some(cell) = &mut g.behavior_lstm {
            lstm_mut(&mut out, cell);
        }
        linear_mut(&mut out, &mut g.feedback_embed);
        lstm_mut(&mut out, &mut g.decoder);
        linear_mut(&mut out, &mut g.output_head);
        out
    }

    /// Mutable discriminator tensors, in the same order as [`Self::disc_named`].
    pub fn disc_tensors_mut(&mut self) -> Vec<&mut TensorData<S>> {
        let mut out: Vec<&mut TensorData<S>> = Vec::new();
        if let Some(disc) = &mut self.disc {
            linear_mut(&mut out, &mut disc.traj_embed);
            lstm_mut(&mut out, &mut disc.traj_lstm);
            if let Some(mlp) = &mut disc.light_mlp {
                for l in &mut mlp.layers {
                    out.push(&mut l.w);
                    out.push(&mut l.b);
                }
            }
            linear_mut(&mut out, &mut disc.head);
        }
        out
    }

    /// Registers every tensor on the tape exactly once and returns the bound
    /// handles plus the registration vars aligned with the named orders.
    pub fn bind(
        &self,
        tape: &mut Tape<S>,
        gen_trainable: bool,
        disc_trainable: bool,
    ) -> ModelBinding<S> {
        let mut gen_vars = Vec::new();
        let g = &self.gen;
        let pos_embed = bind_linear(tape, &mut gen_vars, &g.pos_embed, gen_trainable);
        let encoder = bind_lstm(tape, &mut gen_vars, &g.encoder, gen_trainable);
        let spatial_head = bind_attention(tape, &mut gen_vars, &g.spatial_head, gen_trainable);
        let light = match (&g.light_mlp, &g.light_lstm) {
            (Some(mlp), _) => Some(LightEncoderBinding::Mlp(bind_mlp(
                tape,
                &mut gen_vars,
                mlp,
                gen_trainable,
            ))),
            (None, Some(cell)) => Some(LightEncoderBinding::Lstm(bind_lstm(
                tape,
                &mut gen_vars,
                cell,
                gen_trainable,
            ))),
            (None, None) => None,
        };
        let fuse_proj = g
            .fuse_proj
            .as_ref()
            .map(|l| bind_linear(tape, &mut gen_vars, l, gen_trainable));
        let temporal_head = g
            .temporal_head
            .as_ref()
            .map(|h| bind_attention(tape, &mut gen_vars, h, gen_trainable));
        let temporal_value = g
            .temporal_value
            .as_ref()
            .map(|l| bind_linear(tape, &mut gen_vars, l, gen_trainable));
        let behavior_lstm = g
            .behavior_lstm
            .as_ref()
            .map(|c| bind_lstm(tape, &mut gen_vars, c, gen_trainable));
        let feedback_embed = bind_linear(tape, &mut gen_vars, &g.feedback_embed, gen_trainable);
        let decoder = bind_lstm(tape, &mut gen_vars, &g.decoder, gen_trainable);
        let output_head = bind_linear(tape, &mut gen_vars, &g.output_head, gen_trainable);

        let mut disc_vars = Vec::new();
        let disc = self.disc.as_ref().map(|d| DiscriminatorBinding {
            traj_embed: bind_linear(tape, &mut disc_vars, &d.traj_embed, disc_trainable),
            traj_lstm: bind_lstm(tape, &mut disc_vars, &d.traj_lstm, disc_trainable),
            light_mlp: d
                .light_mlp
                .as_ref()
                .map(|m| bind_mlp(tape, &mut disc_vars, m, disc_trainable)),
            head: bind_linear(tape, &mut disc_vars, &d.head, disc_trainable),
        });

        ModelBinding {
            gen: GeneratorBinding {
                pos_embed,
                encoder,
                spatial_head,
                light,
                fuse_proj,
                temporal_head,
                temporal_value,
                behavior_lstm,
                feedback_embed,
                decoder,
                output_head,
            },
            disc,
            gen_vars,
            disc_vars,
        }
    }
}

impl<S: Scalar> ModelParams<S> {
    /// Rebuilds a binding from externally registered vars laid out in the
    /// `gen_named()` / `disc_named()` orders (the gradient suite probes
    /// parameters through this).
    pub fn binding_from_vars(&self, gen_vars: &[Var], disc_vars: &[Var]) -> ModelBinding<S> {
        let mut cur = Cursor { vars: gen_vars, at: 0 };
        let g = &self.gen;
        let pos_embed = cur.linear();
        let encoder = cur.lstm();
        let spatial_head = cur.attention(&g.spatial_head);
        let light = match (&g.light_mlp, &g.light_lstm) {
            (Some(mlp), _) => Some(LightEncoderBinding::Mlp(cur.mlp(mlp))),
            (None, Some(_)) => Some(LightEncoderBinding::Lstm(cur.lstm())),
            (None, None) => None,
        };
        let fuse_proj = g.fuse_proj.as_ref().map(|_| cur.linear());
        let temporal_head = g.temporal_head.as_ref().map(|h| cur.attention(h));
        let temporal_value = g.temporal_value.as_ref().map(|_| cur.linear());
        let behavior_lstm = g.behavior_lstm.as_ref().map(|_| cur.lstm());
        let feedback_embed = cur.linear();
        let decoder = cur.lstm();
        let output_head = cur.linear();
        assert_eq!(cur.at, gen_vars.len(), "generator var count mismatch");

        let mut cur = Cursor { vars: disc_vars, at: 0 };
        let disc = self.disc.as_ref().map(|d| DiscriminatorBinding {
            traj_embed: cur.linear(),
            traj_lstm: cur.lstm(),
            light_mlp: d.light_mlp.as_ref().map(|m| cur.mlp(m)),
            head: cur.linear(),
        });
        assert_eq!(cur.at, disc_vars.len(), "discriminator var count mismatch");

        ModelBinding {
            gen: GeneratorBinding {
                pos_embed,
                encoder,
                spatial_head,
                light,
                fuse_proj,
                temporal_head,
                temporal_value,
                behavior_lstm,
                feedback_embed,
                decoder,
                output_head,
            },
            disc,
            gen_vars: gen_vars.to_vec(),
            disc_vars: disc_vars.to_vec(),
        }
    }
}

struct Cursor<'a> {
    vars: &'a [Var],
    at: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Var {
        let v = self.vars[self.at];
        self.at += 1;
        v
    }

    fn linear(&mut self) -> BoundLinear {
        BoundLinear {
            w: self.next(),
            b: self.next(),
        }
    }

    fn lstm(&mut self) -> BoundLstm {
        BoundLstm {
            input_gate: self.linear(),
            forget_gate: self.linear(),
            cell_gate: self.linear(),
            output_gate: self.linear(),
        }
    }

    fn attention<S: Scalar>(&mut self, head: &AttentionHead<S>) -> BoundAttentionHead<S> {
        BoundAttentionHead {
            proj: self.next(),
            score: self.next(),
            leaky_slope: head.leaky_slope,
        }
    }

    fn mlp<S: Scalar>(&mut self, m: &MlpEncoder<S>) -> BoundMlp<S> {
        BoundMlp {
            layers: (0..m.layers.len()).map(|_| self.linear()).collect(),
            leaky_slope: m.leaky_slope,
        }
    }
}

fn named_linear<'a, S>(
    out: &mut Vec<(String, &'a TensorData<S>)>,
    prefix: &str,
    l: &'a Linear<S>,
) {
    out.push((format!("{prefix}.w"), &l.w));
    out.push((format!("{prefix}.b"), &l.b));
}

fn named_lstm<'a, S>(out: &mut Vec<(String, &'a TensorData<S>)>, prefix: &str, c: &'a LstmCell<S>) {
    named_linear(out, &format!("{prefix}.input_gate"), &c.input_gate);
    named_linear(out, &format!("{prefix}.forget_gate"), &c.forget_gate);
    named_linear(out, &format!("{prefix}.cell_gate"), &c.cell_gate);
    named_linear(out, &format!("{prefix}.output_gate"), &c.output_gate);
}

fn named_attention<'a, S>(
    out: &mut Vec<(String, &'a TensorData<S>)>,
    prefix: &str,
    h: &'a AttentionHead<S>,
) {
    out.push((format!("{prefix}.proj"), &h.proj));
    out.push((format!("{prefix}.score"), &h.score));
}

fn named_mlp<'a, S>(out: &mut Vec<(String, &'a TensorData<S>)>, prefix: &str, m: &'a MlpEncoder<S>) {
    for (i, l) in m.layers.iter().enumerate() {
        named_linear(out, &format!("{prefix}.{i}"), l);
    }
}

fn linear_mut<'a, S>(out: &mut Vec<&'a mut TensorData<S>>, l: &'a mut Linear<S>) {
    out.push(&mut l.w);
    out.push(&mut l.b);
}

fn lstm_mut<'a, S>(out: &mut Vec<&'a mut TensorData<S>>, c: &'a mut LstmCell<S>) {
    linear_mut(out, &mut c.input_gate);
    linear_mut(out, &mut c.forget_gate);
    linear_mut(out, &mut c.cell_gate);
    linear_mut(out, &mut c.output_gate);
}

fn bind_linear<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &mut Vec<Var>,
    l: &Linear<S>,
    trainable: bool,
) -> BoundLinear {
    let b = l.bind(tape, trainable);
    vars.push(b.w);
    vars.push(b.b);
    b
}

fn bind_lstm<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &mut Vec<Var>,
    c: &LstmCell<S>,
    trainable: bool,
) -> BoundLstm {
    BoundLstm {
        input_gate: bind_linear(tape, vars, &c.input_gate, trainable),
        forget_gate: bind_linear(tape, vars, &c.forget_gate, trainable),
        cell_gate: bind_linear(tape, vars, &c.cell_gate, trainable),
        output_gate: bind_linear(tape, vars, &c.output_gate, trainable),
    }
}

fn bind_attention<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &mut Vec<Var>,
    h: &AttentionHead<S>,
    trainable: bool,
) -> BoundAttentionHead<S> {
    let b = h.bind(tape, trainable);
    vars.push(b.proj);
    vars.push(b.score);
    b
}

fn bind_mlp<S: Scalar>(
    tape: &mut Tape<S>,
    vars: &mut Vec<Var>,
    m: &MlpEncoder<S>,
    trainable: bool,
) -> BoundMlp<S> {
    BoundMlp {
        layers: m
            .layers
            .iter()
            .map(|l| bind_linear(tape, vars, l, trainable))
            .collect(),
        leaky_slope: m.leaky_slope,
    }
}

#[derive(Debug, Clone)]
pub enum LightEncoderBinding<S> {
    Mlp(BoundMlp<S>),
    Lstm(BoundLstm),
}

#[derive(Debug, Clone)]
pub struct GeneratorBinding<S> {
    pub pos_embed: BoundLinear,
    pub encoder: BoundLstm,
    pub spatial_head: BoundAttentionHead<S>,
    pub light: Option<LightEncoderBinding<S>>,
    pub fuse_proj: Option<BoundLinear>,
    pub temporal_head: Option<BoundAttentionHead<S>>,
    pub temporal_value: Option<BoundLinear>,
    pub behavior_lstm: Option<BoundLstm>,
    pub feedback_embed: BoundLinear,
    pub decoder: BoundLstm,
    pub output_head: BoundLinear,
}

#[derive(Debug, Clone)]
pub struct DiscriminatorBinding<S> {
    pub traj_embed: BoundLinear,
    pub traj_lstm: BoundLstm,
    pub light_mlp: Option<BoundMlp<S>>,
    pub head: BoundLinear,
}

#[derive(Debug, Clone)]
pub struct ModelBinding<S> {
    pub gen: GeneratorBinding<S>,
    pub disc: Option<DiscriminatorBinding<S>>,
    /// Registration vars aligned with `gen_named()` order.
    pub gen_vars: Vec<Var>,
    /// Registration vars aligned with `disc_named()` order.
    pub disc_vars: Vec<Var>,
}
