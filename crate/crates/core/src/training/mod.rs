//! Supervised training loop with validation-based best-model tracking.

mod checkpoint;
mod optim;

pub use checkpoint::{
    checkpoint_bytes, expected_byte_size, load_checkpoint, parse_checkpoint, save_checkpoint,
    Checkpoint, ValSnapshot, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use optim::{Optimizer, OptimizerKind};

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::dataset::{batches, Batch, BatchOptions, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::metrics::{metrics, ConfusionMatrix};
use crate::model::{
    bind_params, class_probs, init_params, model_forward, model_loss, ClassProbs, ForwardCtx,
    ModelConfig, ModelParams,
};
use crate::rng::mix;
use crate::tensor::{Tape, Tensor};

/// Optimization hyperparameters and the master seed. The best model is
/// always tracked by validation macro-F1 (ties keep the earlier epoch).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub optimizer: OptimizerKind,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub adam_eps: f32,
    pub weight_decay: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".to_string()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config(format!(
                "train.learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0,1)".to_string()));
        }
        Ok(())
    }

    pub fn optimizer_state(&self) -> Optimizer {
        Optimizer::new(
            self.optimizer,
            self.learning_rate,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps,
            self.weight_decay,
        )
    }
}

/// One epoch's scores, as recorded in the history CSV.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

/// Per-epoch training record.
#[derive(Debug, Clone, Default)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// `epoch,train_loss,val_loss,val_accuracy,val_macro_f1` rows, six
    /// decimals, byte-stable.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy,val_macro_f1\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{:.6},{:.6},{:.6},{:.6}\n",
                e.epoch, e.train_loss, e.val_loss, e.val_accuracy, e.val_macro_f1
            ));
        }
        out
    }

    /// Start epochs of 20-epoch windows where the 5-epoch-smoothed train
    /// loss increased end to end; used to flag stalled runs.
    pub fn smoothed_loss_violations(&self) -> Vec<usize> {
        const SMOOTH: usize = 5;
        const WINDOW: usize = 20;
        let losses: Vec<f64> = self.epochs.iter().map(|e| e.train_loss).collect();
        if losses.len() < SMOOTH + WINDOW {
            return Vec::new();
        }
        let smoothed: Vec<f64> = losses
            .windows(SMOOTH)
            .map(|w| w.iter().sum::<f64>() / SMOOTH as f64)
            .collect();
        let mut flags = Vec::new();
        for i in 0..smoothed.len().saturating_sub(WINDOW - 1) {
            if smoothed[i + WINDOW - 1] > smoothed[i] + 1e-9 {
                flags.push(self.epochs[i].epoch);
            }
        }
        flags
    }
}

/// Training result: the highest-validation-macro-F1 checkpoint (ties go to
/// the earlier epoch) and the full history.
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub history: History,
    pub final_params: ModelParams,
}

/// Inference forward pass over one normalized input tensor.
pub fn forward_probs(params: &ModelParams, cfg: &ModelConfig, input: Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let binding = bind_params(&mut tape, params);
    let x = tape.constant(input);
    let mut ctx = ForwardCtx::inference();
    let probs = model_forward(&mut tape, x, cfg, &binding, &mut ctx)?;
    Ok(tape.value(probs).clone())
}

/// Inference prediction record for one input.
pub fn predict_one(
    params: &ModelParams,
    cfg: &ModelConfig,
    class_names: &[String],
    input: Tensor,
) -> Result<ClassProbs> {
    let probs = forward_probs(params, cfg, input)?;
    Ok(class_probs(&probs, class_names))
}

fn batch_options<'a>(cfg: &'a RunConfig, train: bool, epoch: u64) -> BatchOptions<'a> {
    BatchOptions {
        batch_size: cfg.train.batch_size,
        image_size: cfg.data.image_size,
        preprocess: &cfg.preprocess,
        augment: if train { Some(&cfg.data.augment) } else { None },
        shuffle_seed: if train { Some(cfg.train.seed) } else { None },
        epoch,
    }
}

/// One evaluated sample: indices, truth, prediction and probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct PredRecord {
    pub manifest_index: usize,
    pub true_class: usize,
    pub predicted_class: usize,
    pub probabilities: Vec<f32>,
}

/// Mean cross-entropy and per-sample prediction records over a split, in
/// manifest order.
pub fn evaluate_split(
    params: &ModelParams,
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<(f64, Vec<PredRecord>)> {
    let model_cfg = cfg.model_config();
    let mut loss_sum = 0.0f64;
    let mut records = Vec::new();
    for batch in batches(manifest, split, batch_options(cfg, false, 0))? {
        let batch = batch?;
        let results: Vec<Result<(f64, ClassProbs)>> = (0..batch.len())
            .into_par_iter()
            .map(|i| {
                let probs = forward_probs(params, &model_cfg, batch.sample(i))?;
                let target = batch.labels[i];
                let p = probs.data()[target] as f64;
                let p = if p < crate::tensor::CROSS_ENTROPY_CLAMP as f64 {
                    crate::tensor::CROSS_ENTROPY_CLAMP as f64
                } else {
                    p
                };
                Ok((-p.ln(), class_probs(&probs, &manifest.class_names)))
            })
            .collect();
        for (i, r) in results.into_iter().enumerate() {
            let (loss, pred) = r?;
            loss_sum += loss;
            records.push(PredRecord {
                manifest_index: batch.indices[i],
                true_class: batch.labels[i],
                predicted_class: pred.predicted_class,
                probabilities: pred.probabilities,
            });
        }
    }
    if records.is_empty() {
        return Err(Error::Input(format!("split {split} is empty")));
    }
    Ok((loss_sum / records.len() as f64, records))
}

fn train_one_batch(
    params: &mut ModelParams,
    model_cfg: &ModelConfig,
    batch: &Batch,
    seed: u64,
    epoch: usize,
    batch_idx: usize,
) -> Result<f64> {
    // independent tapes per sample; gradients reduced in batch order
    type SampleGrads = (f32, Vec<Option<Vec<f32>>>);
    let per_sample: Vec<Result<SampleGrads>> = (0..batch.len())
        .into_par_iter()
        .map(|i| {
            let mut tape = Tape::new();
            let binding = bind_params(&mut tape, params);
            let x = tape.constant(batch.sample(i));
            let dropout_seed = mix(seed, &[epoch as u64, batch.indices[i] as u64]);
            let mut ctx = ForwardCtx::training(dropout_seed);
            let (loss, _) = model_loss(&mut tape, x, batch.labels[i], model_cfg, &binding, &mut ctx)?;
            let loss_val = tape.value(loss).data()[0];
            let mut grads = tape.backward(loss)?;
            let named: Vec<Option<Vec<f32>>> =
                binding.iter().map(|(_, var)| grads.take(var)).collect();
            Ok((loss_val, named))
        })
        .collect();

    let scale = 1.0 / batch.len() as f32;
    let mut loss_sum = 0.0f64;
    for result in per_sample {
        let (loss, named) = result?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: batch_idx,
            });
        }
        loss_sum += loss as f64;
        for ((_, tensor), grad) in params.iter_mut().zip(named) {
            if let Some(mut g) = grad {
                for v in &mut g {
                    *v *= scale;
                }
                tensor.accumulate_grad(&g);
            }
        }
    }
    Ok(loss_sum)
}

/// Runs the full training loop: shuffled batches, mean cross-entropy,
/// backward, optimizer step, per-epoch validation, best-checkpoint tracking
/// by validation macro-F1.
pub fn train(
    cfg: &RunConfig,
    manifest: &DatasetManifest,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model_cfg = cfg.model_config();
    if manifest.split_indices(Split::Train).is_empty()
        || manifest.split_indices(Split::Val).is_empty()
    {
        return Err(Error::Input(
            "train and validation splits must both be non-empty".to_string(),
        ));
    }
    let mut params = init_params(&model_cfg, cfg.train.seed)?;
    let mut optimizer = cfg.train.optimizer_state();
    let mut history = History::default();
    let mut best: Option<Checkpoint> = None;

    for epoch in 1..=cfg.train.epochs {
        let mut train_loss_sum = 0.0f64;
        let mut n_train = 0usize;
        let stream = batches(manifest, Split::Train, batch_options(cfg, true, epoch as u64))?;
        for (batch_idx, batch) in stream.enumerate() {
            let batch = batch?;
            params.clear_grads();
            train_loss_sum += train_one_batch(
                &mut params,
                &model_cfg,
                &batch,
                cfg.train.seed,
                epoch,
                batch_idx,
            )?;
            n_train += batch.len();
            optimizer.step(&mut params);
        }

        let (val_loss, records) = evaluate_split(&params, cfg, manifest, Split::Val)?;
        let pairs: Vec<(usize, usize)> = records
            .iter()
            .map(|r| (r.true_class, r.predicted_class))
            .collect();
        let cm = ConfusionMatrix::from_pairs(&pairs, &manifest.class_names)?;
        let report = metrics(&cm);
        let stats = EpochStats {
            epoch,
            train_loss: train_loss_sum / n_train as f64,
            val_loss,
            val_accuracy: report.accuracy,
            val_macro_f1: report.macro_f1,
        };
        history.epochs.push(stats);
        on_epoch(&stats);

        let improved = best
            .as_ref()
            .map(|b| stats.val_macro_f1 > b.val.macro_f1)
            .unwrap_or(true);
        if improved {
            best = Some(Checkpoint::new(
                cfg.clone(),
                epoch,
                ValSnapshot {
                    loss: val_loss,
                    accuracy: report.accuracy,
                    macro_f1: report.macro_f1,
                },
                params.clone(),
            ));
        }
    }

    Ok(TrainOutcome {
        best: best.expect("at least one epoch ran"),
        history,
        final_params: params,
    })
}
