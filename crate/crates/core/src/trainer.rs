//! Mini-batch Adam training of any objective variant.
//!
//! One seed drives everything through independent ChaCha streams: parameter
//! init, per-epoch pairing, batch shuffling and latent noise. Two runs with the
//! same config and data produce bitwise-identical parameters.

use std::borrow::Cow;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedDataset;
use crate::error::{Error, Result};
use crate::model::{ArchConfig, IIAEModel, LatentNoise};
use crate::objective::{evaluate, loss_and_grad, Batch, LossBreakdown, LossParams, Objective};
use crate::scalar::Scalar;

const STREAM_INIT: u64 = 0;
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_PAIRING: u64 = 3;
const STREAM_EVAL: u64 = 4;

/// Rows per forward pass in [`eval_pass`].
const EVAL_CHUNK: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Objective,
    pub lambda: f64,
    pub recon_weight: f64,
    pub fixed_var: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub batch_size: usize,
    pub total_steps: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Global gradient-norm ceiling; a guard against blow-ups only.
    pub grad_clip: f64,
    pub arch: ArchConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            variant: Objective::Iiae,
            lambda: 2.0,
            recon_weight: 10.0,
            fixed_var: 1.0,
            learning_rate: 2e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_size: 64,
            total_steps: 20_000,
            seed: 0,
            eval_every: 500,
            grad_clip: 100.0,
            arch: ArchConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn loss_params(&self) -> LossParams {
        LossParams {
            lambda: self.lambda,
            recon_weight: self.recon_weight,
            fixed_var: self.fixed_var,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss_params().validate()?;
        self.arch.validate()?;
        let bad = |what: &str| Err(Error::InvalidArgument(what.to_string()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if self.batch_size == 0 || self.total_steps == 0 || self.eval_every == 0 {
            return bad("batch_size, total_steps and eval_every must be positive");
        }
        if !(self.grad_clip > 0.0) {
            return bad("grad_clip must be positive");
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    #[serde(flatten)]
    pub train: LossBreakdown,
    /// Loss on the held-out set, when one is supplied.
    pub eval: Option<LossBreakdown>,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

/// Adam with bias correction. State is laid out like `model.param_slices()`.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: T,
    beta1: T,
    beta2: T,
    eps: T,
    t: i32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(model: &IIAEModel<T>, config: &TrainConfig) -> Self {
        let shapes: Vec<Vec<T>> = model.param_slices().iter().map(|s| vec![T::zero(); s.len()]).collect();
        Self {
            lr: T::of(config.learning_rate),
            beta1: T::of(config.beta1),
            beta2: T::of(config.beta2),
            eps: T::of(config.eps),
            t: 0,
            m: shapes.clone(),
            v: shapes,
        }
    }

    pub fn step(&mut self, model: &mut IIAEModel<T>, grads: &IIAEModel<T>) {
        self.t += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.t);
        let c2 = one - self.beta2.powi(self.t);
        let gs = grads.param_slices();
        for (((p, g), m), v) in model.param_slices_mut().into_iter().zip(gs).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (one - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (one - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

/// Supplies the pairs used for one epoch.
pub trait EpochSource {
    fn epoch(&mut self, index: usize, rng: &mut ChaCha8Rng) -> Result<Cow<'_, PairedDataset>>;
}

impl EpochSource for PairedDataset {
    fn epoch(&mut self, _index: usize, _rng: &mut ChaCha8Rng) -> Result<Cow<'_, PairedDataset>> {
        Ok(Cow::Borrowed(self))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: IIAEModel<T>,
    pub log: Vec<StepRecord>,
}

fn stream(seed: u64, s: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(s);
    rng
}

pub fn init_model<T: Scalar>(x_dim: usize, y_dim: usize, config: &TrainConfig) -> Result<IIAEModel<T>> {
    IIAEModel::new(x_dim, y_dim, &config.arch, &mut stream(config.seed, STREAM_INIT))
}

fn batch_of<T: Scalar>(data: &PairedDataset, idx: &[usize]) -> Result<Batch<T>> {
    Batch::new(data.x.select_rows(idx).cast(), data.y.select_rows(idx).cast())
}

/// Full-dataset mean breakdown, no updates. Noise is drawn from a stream
/// fixed by `noise_seed`, so repeated calls agree exactly.
pub fn eval_pass<T: Scalar>(
    model: &IIAEModel<T>,
    data: &PairedDataset,
    variant: Objective,
    params: &LossParams,
    noise_seed: u64,
) -> Result<LossBreakdown> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let mut rng = stream(noise_seed, STREAM_EVAL);
    let mut acc = LossBreakdown {
        lambda: params.lambda,
        recon_weight: params.recon_weight,
        ..LossBreakdown::default()
    };
    let rows: Vec<usize> = (0..data.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let batch = batch_of(data, chunk)?;
        let noise = LatentNoise::sample(&mut rng, chunk.len(), model.dims());
        let l = evaluate(model, &batch, &noise, variant, params)?;
        acc.add_scaled(&l, chunk.len() as f64 / data.len() as f64);
    }
    Ok(acc)
}

/// Initializes a model from the config seed and trains it.
pub fn train<T: Scalar>(
    source: &mut dyn EpochSource,
    eval: Option<&PairedDataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let (x_dim, y_dim) = {
        let d = source.epoch(0, &mut stream(config.seed, STREAM_PAIRING))?;
        (d.x.cols(), d.y.cols())
    };
    let model = init_model(x_dim, y_dim, config)?;
    train_from(model, source, eval, config)
}

/// Trains an existing model in place of a fresh initialization.
pub fn train_from<T: Scalar>(
    mut model: IIAEModel<T>,
    source: &mut dyn EpochSource,
    eval: Option<&PairedDataset>,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>> {
    config.validate()?;
    let params = config.loss_params();
    let mut adam = Adam::new(&model, config);
    let mut shuffle_rng = stream(config.seed, STREAM_SHUFFLE);
    let mut noise_rng = stream(config.seed, STREAM_NOISE);
    let mut pair_rng = stream(config.seed, STREAM_PAIRING);
    let mut log = Vec::new();
    let started = Instant::now();
    let mut step = 0;
    let mut epoch = 0;
    while step < config.total_steps {
        let data = source.epoch(epoch, &mut pair_rng)?;
        epoch += 1;
        if data.is_empty() {
            return Err(Error::Empty("training set".into()));
        }
        let dims = model.dims();
        if data.x.cols() != dims.x_dim || data.y.cols() != dims.y_dim {
            return Err(Error::dim("training data width", dims.x_dim + dims.y_dim, data.x.cols() + data.y.cols()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut shuffle_rng);
        let bs = config.batch_size.min(order.len());
        for idx in order.chunks_exact(bs) {
            if step == config.total_steps {
                break;
            }
            step += 1;
            let batch = batch_of::<T>(&data, idx)?;
            let noise = LatentNoise::sample(&mut noise_rng, idx.len(), model.dims());
            let (loss, mut grads) =
                loss_and_grad(&model, &batch, &noise, config.variant, &params).map_err(|e| match e {
                    Error::NonFiniteLoss { term, .. } => Error::NonFiniteLoss { step, term },
                    other => other,
                })?;
            let norm = grads
                .param_slices()
                .iter()
                .flat_map(|s| s.iter())
                .map(|g| g.as_f64() * g.as_f64())
                .sum::<f64>()
                .sqrt();
            if !norm.is_finite() {
                return Err(Error::NonFiniteLoss { step, term: "gradient" });
            }
            if norm > config.grad_clip {
                let s = T::of(config.grad_clip / norm);
                for g in grads.param_slices_mut() {
                    g.iter_mut().for_each(|v| *v *= s);
                }
            }
            adam.step(&mut model, &grads);
            if step == 1 || step % config.eval_every == 0 || step == config.total_steps {
                let eval = match eval {
                    Some(d) => Some(eval_pass(&model, d, config.variant, &params, config.seed)?),
                    None => None,
                };
                log.push(StepRecord {
                    step,
                    train: loss,
                    eval,
                    grad_norm: norm,
                    wall_ms: started.elapsed().as_millis() as u64,
                });
            }
        }
    }
    Ok(TrainOutcome { model, log })
}
