//! Joint pretraining of the object encoder and SoftGPT on shifted
//! sequences, and one-step error evaluation against persistence.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{SoftGpt, Token};
use crate::error::{Error, Result};
use crate::graph::{GraphEncoder, ManipBatch, ObjectBatch, ShiftedSample, EMBED_DIM};
use crate::skeleton::SkeletonGraph;
use crate::tensor::{AdamConfig, AdamState, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    /// Sequences per optimizer step.
    pub batch: usize,
    pub learning_rate: f64,
    /// Weight of the per-dimension embedding spread hinge.
    pub variance_weight: f64,
    /// Standard deviation below which the hinge is active.
    pub variance_floor: f64,
    /// Anneal the rate to zero over the epochs along a half cosine.
    pub cosine_decay: bool,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { epochs: 50, batch: 32, learning_rate: 3e-4, variance_weight: 0.1, variance_floor: 0.1, cosine_decay: true, seed: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    /// Mean minibatch loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Loss pieces of one minibatch, with the pre-detach target handle kept
/// for gradient instrumentation.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) struct BatchLoss {
    pub loss: Var,
    pub mse: Var,
    pub target_raw: Var,
}

/// Splits sequences into windows of at most `context` samples.
pub(crate) fn windows(sequences: &[Vec<ShiftedSample>], context: usize) -> Vec<&[ShiftedSample]> {
    sequences.iter().flat_map(|s| s.chunks(context)).filter(|w| !w.is_empty()).collect()
}

pub(crate) fn batch_loss(
    tape: &mut Tape,
    model: &SoftGpt,
    encoder: &GraphEncoder,
    batch: &[&[ShiftedSample]],
    cfg: &PretrainConfig,
) -> Result<BatchLoss> {
    batch_loss_with_targets(tape, model, encoder, encoder, batch, cfg)
}

/// [`batch_loss`] with targets computed by `target_encoder`, which may be a
/// frozen copy of `encoder`.
pub(crate) fn batch_loss_with_targets(
    tape: &mut Tape,
    model: &SoftGpt,
    encoder: &GraphEncoder,
    target_encoder: &GraphEncoder,
    batch: &[&[ShiftedSample]],
    cfg: &PretrainConfig,
) -> Result<BatchLoss> {
    let mut lengths: Vec<usize> = batch.iter().map(|w| w.len()).collect();
    lengths.sort_unstable();
    lengths.dedup();

    let (mut preds, mut targets, mut raws, mut eps_all) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for len in lengths {
        let group: Vec<&[ShiftedSample]> = batch.iter().copied().filter(|w| w.len() == len).collect();
        let samples: Vec<&ShiftedSample> = group.iter().flat_map(|w| w.iter()).collect();
        let now: Vec<&SkeletonGraph> = samples.iter().map(|s| &s.skeleton).collect();
        let next: Vec<&SkeletonGraph> = samples.iter().map(|s| &s.skeleton_next).collect();
        let poses: Vec<_> = samples.iter().map(|s| s.pose_next).collect();

        let eps = encoder.encode_objects(tape, &ObjectBatch::new(&now)?)?;
        let raw = target_encoder.encode_objects(tape, &ObjectBatch::new(&next)?)?;
        let target = tape.detach(raw);
        let tokens = encoder.encode_with_predicted(tape, eps, &ManipBatch::new(&poses)?)?;
        preds.push(model.forward_seq(tape, tokens, eps, group.len(), len)?);
        targets.push(target);
        raws.push(raw);
        eps_all.push(eps);
    }
    let pred = tape.concat_rows(&preds)?;
    let target = tape.concat_rows(&targets)?;
    let diff = tape.sub(pred, target)?;
    let sq = tape.square(diff);
    let mse = tape.mean(sq);

    let eps = tape.concat_rows(&eps_all)?;
    let mean = tape.col_mean(eps);
    let neg_mean = tape.neg(mean);
    let centered = tape.add_row(eps, neg_mean)?;
    let sq = tape.square(centered);
    let var = tape.col_mean(sq);
    let var = tape.offset(var, 1e-8);
    let std = tape.sqrt(var);
    let short = tape.neg(std);
    let short = tape.offset(short, cfg.variance_floor);
    let hinge = tape.relu(short);
    let hinge = tape.mean(hinge);
    let hinge = tape.scale(hinge, cfg.variance_weight);
    let loss = tape.add(mse, hinge)?;
    let target_raw = if raws.len() == 1 { raws[0] } else { tape.concat_rows(&raws)? };
    Ok(BatchLoss { loss, mse, target_raw })
}

/// Trains `encoder` and `model` jointly to predict the next object
/// embedding. The regression target is the encoder's own output with
/// gradients blocked.
pub fn pretrain(
    model: &mut SoftGpt,
    encoder: &mut GraphEncoder,
    sequences: &[Vec<ShiftedSample>],
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    train_dynamics(model, encoder, sequences, cfg, true)
}

/// Transformer-only training against a frozen `encoder`, as done inside the
/// policy loop.
pub fn finetune(
    model: &mut SoftGpt,
    encoder: &GraphEncoder,
    sequences: &[Vec<ShiftedSample>],
    cfg: &PretrainConfig,
) -> Result<PretrainReport> {
    train_dynamics(model, &mut encoder.clone(), sequences, cfg, false)
}

fn train_dynamics(
    model: &mut SoftGpt,
    encoder: &mut GraphEncoder,
    sequences: &[Vec<ShiftedSample>],
    cfg: &PretrainConfig,
    update_encoder: bool,
) -> Result<PretrainReport> {
    let windows = windows(sequences, model.config.context);
    if windows.is_empty() {
        return Err(Error::InsufficientData("pretraining needs at least one shifted sample".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::Config("pretraining batch must be positive".into()));
    }
    let mut report = PretrainReport::default();
    if cfg.epochs == 0 {
        return Ok(report);
    }
    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let mut model_opt = AdamState::new(&model.store, adam);
    let mut enc_opt = AdamState::new(&encoder.store, adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..windows.len()).collect();

    for epoch in 0..cfg.epochs {
        let lr = if cfg.cosine_decay {
            0.5 * cfg.learning_rate * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        } else {
            cfg.learning_rate
        };
        model_opt.config.learning_rate = lr;
        enc_opt.config.learning_rate = lr;
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch) {
            let batch: Vec<&[ShiftedSample]> = chunk.iter().map(|&i| windows[i]).collect();
            let mut tape = Tape::new();
            let parts = batch_loss(&mut tape, model, encoder, &batch, cfg)?;
            let loss = tape.value(parts.loss).item();
            if !loss.is_finite() {
                return Err(Error::Training { param: "pretrain loss".into(), reason: format!("non-finite loss at epoch {epoch}") });
            }
            let grads = tape.backward(parts.loss)?;
            model.store.zero_grad();
            model.store.accumulate(&tape, &grads);
            model_opt.step(&mut model.store)?;
            if update_encoder {
                encoder.store.zero_grad();
                encoder.store.accumulate(&tape, &grads);
                enc_opt.step(&mut encoder.store)?;
            }
            total += loss;
            steps += 1;
        }
        let mean = total / steps as f64;
        log::debug!("dynamics epoch {epoch}: loss {mean:.6}");
        report.epoch_losses.push(mean);
    }
    Ok(report)
}

/// Teacher-forced one-step errors of the model and of the persistence
/// predictor `ε_{t+1} = ε_t`, both as mean squared error per coordinate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneStepErrors {
    pub model_mse: f64,
    pub persistence_mse: f64,
    pub transitions: usize,
}

impl OneStepErrors {
    pub fn ratio(&self) -> f64 {
        self.model_mse / self.persistence_mse
    }
}

pub fn one_step_errors(model: &SoftGpt, encoder: &GraphEncoder, sequences: &[Vec<ShiftedSample>]) -> Result<OneStepErrors> {
    let windows = windows(sequences, model.config.context);
    if windows.is_empty() {
        return Err(Error::InsufficientData("evaluation needs at least one shifted sample".into()));
    }
    let (mut model_se, mut persist_se, mut n) = (0.0, 0.0, 0usize);
    for w in windows {
        let now: Vec<&SkeletonGraph> = w.iter().map(|s| &s.skeleton).collect();
        let next: Vec<&SkeletonGraph> = w.iter().map(|s| &s.skeleton_next).collect();
        let poses: Vec<_> = w.iter().map(|s| s.pose_next).collect();
        let eps = encoder.embed_objects(&now)?;
        let targets = encoder.embed_objects(&next)?;
        let scenes = encoder.embed_predicted(&eps, &poses)?;
        let tokens: Vec<Token> = scenes.into_iter().zip(&eps).map(|(scene, &object)| Token { scene, object }).collect();
        let preds = model.predict_sequence(&tokens)?;
        for ((p, e), t) in preds.iter().zip(&eps).zip(&targets) {
            model_se += p.squared_distance(t);
            persist_se += e.squared_distance(t);
        }
        n += w.len();
    }
    let denom = (n * EMBED_DIM) as f64;
    Ok(OneStepErrors { model_mse: model_se / denom, persistence_mse: persist_se / denom, transitions: n })
}
