//! Noise-prediction MLP with hand-rolled backpropagation and Adam.
//!
//! The network predicts eps from (z_t, t, label): the input concatenates the
//! state, a fixed sinusoidal embedding of the integer timestep, and a learned
//! embedding row per label (0, 1, and the null label 2). One hidden layer
//! with SiLU is enough at toy scale. The output layer starts at zero so an
//! untrained model predicts eps = 0 and the first-batch loss sits at the
//! data dimension in expectation.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledPoint, NULL_LABEL};
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::rng::{stream, Domain};
use crate::schedule::{forward_diffuse, NoiseSchedule};

const TIME_FREQ_BASE: f64 = 10_000.0;
const N_LABELS: usize = 3;

/// Hidden nonlinearity. `Identity` exists so gradient checks can run on a
/// network whose loss is exactly quadratic in every parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Silu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Silu => x * sigmoid(x),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Silu => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Identity => 1.0,
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Architecture parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    /// Sinusoidal frequency pairs in the timestep embedding (2 features each).
    pub time_freq_pairs: usize,
    pub label_embed_dim: usize,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden_dim: 128, time_freq_pairs: 8, label_embed_dim: 8, activation: Activation::Silu }
    }
}

/// Optimization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Probability of replacing a label with the null label per batch item.
    pub label_drop_prob: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 5000,
            learning_rate: 1e-3,
            batch_size: 256,
            label_drop_prob: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

/// Two-layer noise predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    data_dim: usize,
    config: ModelConfig,
    /// hidden_dim x input_dim
    w1: Matrix,
    b1: Vec<f64>,
    /// data_dim x hidden_dim
    w2: Matrix,
    b2: Vec<f64>,
    /// N_LABELS x label_embed_dim
    label_embed: Matrix,
}

impl ScoreModel {
    /// Xavier-uniform first layer, zero output layer, uniform label rows.
    pub fn init(data_dim: usize, config: ModelConfig, seed: u64) -> Result<Self> {
        if data_dim == 0 || config.hidden_dim == 0 {
            return Err(CoreError::InvalidInput("model dimensions must be nonzero".into()));
        }
        if config.time_freq_pairs == 0 || config.label_embed_dim == 0 {
            return Err(CoreError::InvalidInput("embedding dimensions must be nonzero".into()));
        }
        let input_dim = data_dim + 2 * config.time_freq_pairs + config.label_embed_dim;
        let mut rng = stream(seed, Domain::ModelInit, 0);
        let bound = (6.0 / (input_dim + config.hidden_dim) as f64).sqrt();
        let w1_data: Vec<f64> = (0..config.hidden_dim * input_dim)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
            .collect();
        let emb_bound = (3.0 / config.label_embed_dim as f64).sqrt();
        let emb_data: Vec<f64> = (0..N_LABELS * config.label_embed_dim)
            .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * emb_bound)
            .collect();
        Ok(Self {
            data_dim,
            config,
            w1: Matrix::new(config.hidden_dim, input_dim, w1_data)?,
            b1: vec![0.0; config.hidden_dim],
            w2: Matrix::zeros(data_dim, config.hidden_dim),
            b2: vec![0.0; data_dim],
            label_embed: Matrix::new(N_LABELS, config.label_embed_dim, emb_data)?,
        })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn input_dim(&self) -> usize {
        self.data_dim + 2 * self.config.time_freq_pairs + self.config.label_embed_dim
    }

    fn check_query(&self, z: &[f64], label: u8) -> Result<()> {
        if z.len() != self.data_dim {
            return Err(CoreError::DimensionMismatch(format!(
                "state has length {}, model expects {}",
                z.len(),
                self.data_dim
            )));
        }
        if label as usize >= N_LABELS {
            return Err(CoreError::InvalidInput(format!(
                "label must be 0, 1, or {NULL_LABEL}, got {label}"
            )));
        }
        Ok(())
    }

    /// Concatenated input features for one query.
    fn build_input(&self, z: &[f64], t: usize, label: u8) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.input_dim());
        x.extend_from_slice(z);
        let pairs = self.config.time_freq_pairs;
        for k in 0..pairs {
            let freq = TIME_FREQ_BASE.powf(-(k as f64) / pairs as f64);
            let angle = t as f64 * freq;
            x.push(angle.sin());
            x.push(angle.cos());
        }
        x.extend_from_slice(self.label_embed.row(label as usize));
        x
    }

    /// Predicted eps for a state at timestep `t` under `label`.
    pub fn forward(&self, z: &[f64], t: usize, label: u8) -> Result<Vec<f64>> {
        self.check_query(z, label)?;
        let x = self.build_input(z, t, label);
        let (_, _, out) = self.forward_from_input(&x);
        Ok(out)
    }

    /// Forward pass returning the intermediates backprop needs:
    /// pre-activations, activations, output.
    fn forward_from_input(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let hidden = self.config.hidden_dim;
        let mut pre = self.b1.clone();
        for i in 0..hidden {
            let row = self.w1.row(i);
            let mut acc = pre[i];
            for (w, xv) in row.iter().zip(x) {
                acc += w * xv;
            }
            pre[i] = acc;
        }
        let act: Vec<f64> = pre.iter().map(|p| self.config.activation.apply(*p)).collect();
        let mut out = self.b2.clone();
        for o in 0..self.data_dim {
            let row = self.w2.row(o);
            let mut acc = out[o];
            for (w, h) in row.iter().zip(&act) {
                acc += w * h;
            }
            out[o] = acc;
        }
        (pre, act, out)
    }
}

/// One prepared training example: a diffused state with its regression target.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub z: Vec<f64>,
    pub t: usize,
    pub label: u8,
    pub target: Vec<f64>,
}

/// Parameter-shaped accumulator for gradients and Adam moments.
#[derive(Debug, Clone)]
struct ParamBlock {
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: Vec<f64>,
    label_embed: Vec<f64>,
}

impl ParamBlock {
    fn zeros_like(model: &ScoreModel) -> Self {
        Self {
            w1: vec![0.0; model.config.hidden_dim * model.input_dim()],
            b1: vec![0.0; model.config.hidden_dim],
            w2: vec![0.0; model.data_dim * model.config.hidden_dim],
            b2: vec![0.0; model.data_dim],
            label_embed: vec![0.0; N_LABELS * model.config.label_embed_dim],
        }
    }
}

/// Adam state; step count starts at zero and bias correction uses the
/// post-increment count, so the first update applies the full learning rate.
#[derive(Debug, Clone)]
pub struct Adam {
    step: u64,
    m: ParamBlock,
    v: ParamBlock,
}

impl Adam {
    pub fn new(model: &ScoreModel) -> Self {
        Self { step: 0, m: ParamBlock::zeros_like(model), v: ParamBlock::zeros_like(model) }
    }

    fn update(&mut self, model: &mut ScoreModel, grads: &ParamBlock, cfg: &TrainConfig) {
        self.step += 1;
        let bc1 = 1.0 - cfg.adam_beta1.powi(self.step as i32);
        let bc2 = 1.0 - cfg.adam_beta2.powi(self.step as i32);
        let apply = |param: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..param.len() {
                m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
                v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        };
        apply(model.w1.data_mut(), &mut self.m.w1, &mut self.v.w1, &grads.w1);
        apply(&mut model.b1, &mut self.m.b1, &mut self.v.b1, &grads.b1);
        apply(model.w2.data_mut(), &mut self.m.w2, &mut self.v.w2, &grads.w2);
        apply(&mut model.b2, &mut self.m.b2, &mut self.v.b2, &grads.b2);
        apply(model.label_embed.data_mut(), &mut self.m.label_embed, &mut self.v.label_embed, &grads.label_embed);
    }
}

/// Mean over examples of the squared error summed over output coordinates.
pub fn batch_loss(model: &ScoreModel, examples: &[TrainExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("loss needs at least one example".into()));
    }
    let mut total = 0.0;
    for ex in examples {
        model.check_query(&ex.z, ex.label)?;
        let x = model.build_input(&ex.z, ex.t, ex.label);
        let (_, _, out) = model.forward_from_input(&x);
        total += out.iter().zip(&ex.target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>();
    }
    Ok(total / examples.len() as f64)
}

/// Loss and gradients for a prepared batch.
fn batch_backward(model: &ScoreModel, examples: &[TrainExample]) -> Result<(f64, ParamBlock)> {
    if examples.is_empty() {
        return Err(CoreError::EmptyInput("backward needs at least one example".into()));
    }
    let hidden = model.config.hidden_dim;
    let input_dim = model.input_dim();
    let emb_dim = model.config.label_embed_dim;
    let emb_offset = input_dim - emb_dim;
    let inv_n = 1.0 / examples.len() as f64;
    let mut grads = ParamBlock::zeros_like(model);
    let mut loss = 0.0;
    for ex in examples {
        model.check_query(&ex.z, ex.label)?;
        if ex.target.len() != model.data_dim {
            return Err(CoreError::DimensionMismatch(format!(
                "target has length {}, expected {}",
                ex.target.len(),
                model.data_dim
            )));
        }
        let x = model.build_input(&ex.z, ex.t, ex.label);
        let (pre, act, out) = model.forward_from_input(&x);
        let mut d_out = vec![0.0; model.data_dim];
        for o in 0..model.data_dim {
            let diff = out[o] - ex.target[o];
            loss += diff * diff * inv_n;
            d_out[o] = 2.0 * diff * inv_n;
        }
        let mut d_act = vec![0.0; hidden];
        for o in 0..model.data_dim {
            let g = d_out[o];
            grads.b2[o] += g;
            let w2_row = model.w2.row(o);
            let gw2_row = &mut grads.w2[o * hidden..(o + 1) * hidden];
            for j in 0..hidden {
                gw2_row[j] += g * act[j];
                d_act[j] += g * w2_row[j];
            }
        }
        let g_emb = &mut grads.label_embed[ex.label as usize * emb_dim..(ex.label as usize + 1) * emb_dim];
        for j in 0..hidden {
            let d_pre = d_act[j] * model.config.activation.derivative(pre[j]);
            if d_pre == 0.0 {
                continue;
            }
            grads.b1[j] += d_pre;
            let w1_row = model.w1.row(j);
            let gw1_row = &mut grads.w1[j * input_dim..(j + 1) * input_dim];
            for (gw, xv) in gw1_row.iter_mut().zip(&x) {
                *gw += d_pre * xv;
            }
            // The label embedding is part of the input, so its gradient flows
            // back through w1's embedding block.
            for e in 0..emb_dim {
                g_emb[e] += d_pre * w1_row[emb_offset + e];
            }
        }
    }
    Ok((loss, grads))
}

/// Draws timesteps, noise, and label dropout for a batch of dataset points,
/// then takes one Adam step on the noise-prediction loss. Per item the draw
/// order is fixed: timestep, noise coordinates, dropout coin.
pub fn train_step(
    model: &mut ScoreModel,
    adam: &mut Adam,
    batch: &[LabeledPoint],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(CoreError::EmptyInput("training batch is empty".into()));
    }
    let steps = sched.steps();
    let mut examples = Vec::with_capacity(batch.len());
    for point in batch {
        let t = rng.random_range(1..=steps);
        let eps: Vec<f64> = (0..point.position.len()).map(|_| rng.sample(StandardNormal)).collect();
        let label = if rng.random::<f64>() < cfg.label_drop_prob { NULL_LABEL } else { point.label };
        let z = forward_diffuse(&point.position, t, &eps, sched)?;
        examples.push(TrainExample { z, t, label, target: eps });
    }
    let (loss, grads) = batch_backward(model, &examples)?;
    adam.update(model, &grads, cfg);
    Ok(loss)
}

/// Full training loop: `iterations` uniformly resampled batches from `data`.
/// Returns the per-iteration loss history.
pub fn train(
    model: &mut ScoreModel,
    data: &[LabeledPoint],
    sched: &NoiseSchedule,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(CoreError::EmptyInput("training data is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.iterations == 0 {
        return Err(CoreError::InvalidInput("batch size and iterations must be nonzero".into()));
    }
    if !(0.0..=1.0).contains(&cfg.label_drop_prob) {
        return Err(CoreError::InvalidInput(format!(
            "label_drop_prob must lie in [0, 1], got {}",
            cfg.label_drop_prob
        )));
    }
    let mut adam = Adam::new(model);
    let mut rng = stream(cfg.seed, Domain::Train, 0);
    let mut history = Vec::with_capacity(cfg.iterations);
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.iterations {
        batch.clear();
        for _ in 0..cfg.batch_size {
            let idx = rng.random_range(0..data.len());
            batch.push(data[idx].clone());
        }
        let loss = train_step(model, &mut adam, &batch, sched, cfg, &mut rng)?;
        history.push(loss);
    }
    Ok(history)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter, with the denominator floored at 1.
pub fn grad_check(model: &ScoreModel, examples: &[TrainExample]) -> Result<f64> {
    let (_, grads) = batch_backward(model, examples)?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut probe = model.clone();
    let mut check = |param_index: usize, analytic: f64, get_set: &mut dyn FnMut(&mut ScoreModel, usize) -> &mut f64| {
        let original = *get_set(&mut probe, param_index);
        *get_set(&mut probe, param_index) = original + h;
        let up = batch_loss(&probe, examples).expect("loss over validated examples");
        *get_set(&mut probe, param_index) = original - h;
        let down = batch_loss(&probe, examples).expect("loss over validated examples");
        *get_set(&mut probe, param_index) = original;
        let fd = (up - down) / (2.0 * h);
        let denom = analytic.abs().max(fd.abs()).max(1.0);
        worst = worst.max((analytic - fd).abs() / denom);
    };
    for i in 0..grads.w1.len() {
        check(i, grads.w1[i], &mut |m, idx| &mut m.w1.data_mut()[idx]);
    }
    for i in 0..grads.b1.len() {
        check(i, grads.b1[i], &mut |m, idx| &mut m.b1[idx]);
    }
    for i in 0..grads.w2.len() {
        check(i, grads.w2[i], &mut |m, idx| &mut m.w2.data_mut()[idx]);
    }
    for i in 0..grads.b2.len() {
        check(i, grads.b2[i], &mut |m, idx| &mut m.b2[idx]);
    }
    for i in 0..grads.label_embed.len() {
        check(i, grads.label_embed[i], &mut |m, idx| &mut m.label_embed.data_mut()[idx]);
    }
    Ok(worst)
}

/// Serialized model container. `format_version` gates forward compatibility;
/// the schedule block pins what the weights were trained against.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub data_dim: usize,
    pub hidden_dim: usize,
    pub time_freq_pairs: usize,
    pub label_embed_dim: usize,
    pub activation: Activation,
    pub schedule_steps: usize,
    pub schedule_beta_min: f64,
    pub schedule_beta_max: f64,
    pub schedule_fingerprint: String,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
    pub label_embed: Vec<f64>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// Writes the model plus schedule provenance as JSON.
pub fn save_checkpoint(
    model: &ScoreModel,
    sched: &NoiseSchedule,
    beta_min: f64,
    beta_max: f64,
    path: &Path,
) -> Result<()> {
    let cp = Checkpoint {
        format_version: CHECKPOINT_VERSION,
        data_dim: model.data_dim,
        hidden_dim: model.config.hidden_dim,
        time_freq_pairs: model.config.time_freq_pairs,
        label_embed_dim: model.config.label_embed_dim,
        activation: model.config.activation,
        schedule_steps: sched.steps(),
        schedule_beta_min: beta_min,
        schedule_beta_max: beta_max,
        schedule_fingerprint: sched.fingerprint(),
        w1: model.w1.data().to_vec(),
        b1: model.b1.clone(),
        w2: model.w2.data().to_vec(),
        b2: model.b2.clone(),
        label_embed: model.label_embed.data().to_vec(),
    };
    let json = serde_json::to_string_pretty(&cp)?;
    fs::write(path, json)?;
    Ok(())
}

/// Reads a checkpoint, validates shapes and the schedule fingerprint, and
/// rebuilds the model with the schedule it was trained against.
pub fn load_checkpoint(path: &Path) -> Result<(ScoreModel, NoiseSchedule)> {
    let text = fs::read_to_string(path)?;
    let cp: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| CoreError::Checkpoint(format!("malformed checkpoint {path:?}: {e}")))?;
    if cp.format_version != CHECKPOINT_VERSION {
        return Err(CoreError::Checkpoint(format!(
            "unsupported checkpoint version {} (expected {CHECKPOINT_VERSION})",
            cp.format_version
        )));
    }
    let sched = crate::schedule::linear_beta_schedule(cp.schedule_steps, cp.schedule_beta_min, cp.schedule_beta_max)?;
    if sched.fingerprint() != cp.schedule_fingerprint {
        return Err(CoreError::Checkpoint(
            "schedule fingerprint does not match the stored parameters".into(),
        ));
    }
    let config = ModelConfig {
        hidden_dim: cp.hidden_dim,
        time_freq_pairs: cp.time_freq_pairs,
        label_embed_dim: cp.label_embed_dim,
        activation: cp.activation,
    };
    let input_dim = cp.data_dim + 2 * cp.time_freq_pairs + cp.label_embed_dim;
    let expect = |name: &str, got: usize, want: usize| {
        if got != want {
            Err(CoreError::Checkpoint(format!("{name} has {got} entries, expected {want}")))
        } else {
            Ok(())
        }
    };
    expect("w1", cp.w1.len(), cp.hidden_dim * input_dim)?;
    expect("b1", cp.b1.len(), cp.hidden_dim)?;
    expect("w2", cp.w2.len(), cp.data_dim * cp.hidden_dim)?;
    expect("b2", cp.b2.len(), cp.data_dim)?;
    expect("label_embed", cp.label_embed.len(), N_LABELS * cp.label_embed_dim)?;
    let model = ScoreModel {
        data_dim: cp.data_dim,
        config,
        w1: Matrix::new(cp.hidden_dim, input_dim, cp.w1)?,
        b1: cp.b1,
        w2: Matrix::new(cp.data_dim, cp.hidden_dim, cp.w2)?,
        b2: cp.b2,
        label_embed: Matrix::new(N_LABELS, cp.label_embed_dim, cp.label_embed)?,
    };
    Ok((model, sched))
}
