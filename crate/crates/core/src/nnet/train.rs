//! Seeded minibatch training, inference and accuracy.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checkpoint::{Checkpoint, CheckpointError};
use super::model::{predict, sample_loss_and_grads, FeatureBundle, Mode, ModelDims, ModelError, ModelParams};
use super::optim::Adam;
use crate::qagen::AnswerVocabulary;
use crate::seeding::{derive_rng, derive_seed};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("batch size must be at least 1")]
    ZeroBatch,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub bundle: FeatureBundle,
    pub target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
    /// Stop after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1,
            lr: 1e-6,
            batch_size: 4,
            seed: 0,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
    pub val_accuracy: Option<f64>,
}

/// Runs Adam over shuffled minibatches starting from `params`. Per-sample
/// gradients are computed in parallel and summed in batch order.
pub fn fit(
    params: &mut ModelParams,
    dims: &ModelDims,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<Vec<EpochLog>, TrainError> {
    if train.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if config.batch_size == 0 {
        return Err(TrainError::ZeroBatch);
    }
    let mut opt = Adam::new(dims, config.lr);
    let mut history = Vec::new();
    let mut step = 0usize;
    'epochs: for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut derive_rng(
            config.seed,
            &[b"shuffle", &(epoch as u64).to_le_bytes()],
        ));
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            if config.max_steps.is_some_and(|m| step >= m) {
                history.push(log_epoch(params, dims, val, epoch, step, loss_sum, seen)?);
                break 'epochs;
            }
            let step_seed = derive_seed(config.seed, &[b"step", &(step as u64).to_le_bytes()]);
            let results: Vec<Result<(f32, ModelParams), ModelError>> = batch
                .par_iter()
                .enumerate()
                .map(|(i, &idx)| {
                    let mode = Mode::Train {
                        seed: derive_seed(step_seed, &[&(i as u64).to_le_bytes()]),
                    };
                    sample_loss_and_grads(params, dims, &train[idx].bundle, train[idx].target, mode)
                })
                .collect();
            let mut grads = ModelParams::zeros(dims);
            for r in results {
                let (l, g) = r?;
                loss_sum += l as f64;
                grads.add_assign(&g);
            }
            seen += batch.len();
            grads.scale(1.0 / batch.len() as f32);
            opt.step(params, &grads);
            step += 1;
        }
        history.push(log_epoch(params, dims, val, epoch, step, loss_sum, seen)?);
        log::info!(
            "epoch {epoch}: loss {:.4} val {:?}",
            history.last().unwrap().mean_loss,
            history.last().unwrap().val_accuracy
        );
    }
    Ok(history)
}

fn log_epoch(
    params: &ModelParams,
    dims: &ModelDims,
    val: &[Sample],
    epoch: usize,
    steps: usize,
    loss_sum: f64,
    seen: usize,
) -> Result<EpochLog, TrainError> {
    Ok(EpochLog {
        epoch,
        steps,
        mean_loss: if seen == 0 { f64::NAN } else { loss_sum / seen as f64 },
        val_accuracy: if val.is_empty() {
            None
        } else {
            Some(accuracy(params, dims, val)?)
        },
    })
}

/// Initial parameters: seeded uniform init with the output layer set to the
/// training answer prior.
pub fn initial_params(dims: &ModelDims, vocabulary: &AnswerVocabulary, seed: u64) -> ModelParams {
    let mut p = ModelParams::init(dims, seed);
    let freqs: Vec<u64> = vocabulary.entries().iter().map(|(_, f)| *f).collect();
    p.set_output_prior(&freqs);
    p
}

/// Full training run producing a checkpoint.
pub fn train(
    train_set: &[Sample],
    val: &[Sample],
    dims: ModelDims,
    vocabulary: AnswerVocabulary,
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochLog>), TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let dims = ModelDims {
        k: vocabulary.len(),
        ..dims
    };
    let mut params = initial_params(&dims, &vocabulary, config.seed);
    let history = if config.epochs == 0 {
        Vec::new()
    } else {
        fit(&mut params, &dims, train_set, val, config)?
    };
    Ok((Checkpoint::new(dims, vocabulary, params)?, history))
}

/// Index of the highest-scoring answer, ties to the lower index.
pub fn infer_index(params: &ModelParams, dims: &ModelDims, bundle: &FeatureBundle) -> Result<usize, ModelError> {
    Ok(predict(params, dims, bundle, Mode::Eval)?.argmax())
}

pub fn infer<'a>(checkpoint: &'a Checkpoint, bundle: &FeatureBundle) -> Result<&'a str, ModelError> {
    let i = infer_index(&checkpoint.params, &checkpoint.dims, bundle)?;
    Ok(checkpoint.vocabulary.answer(i))
}

pub fn accuracy(params: &ModelParams, dims: &ModelDims, samples: &[Sample]) -> Result<f64, ModelError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let hits: Result<Vec<bool>, ModelError> = samples
        .par_iter()
        .map(|s| infer_index(params, dims, &s.bundle).map(|i| i == s.target))
        .collect();
    Ok(hits?.into_iter().filter(|&h| h).count() as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::features::{stub_text_features, stub_visual_features};
    use crate::nnet::tensor::Tensor;

    fn dims() -> ModelDims {
        ModelDims {
            c_v: 4,
            d_q: 8,
            c_s: 2,
            h: 2,
            w: 2,
            att_dim: 8,
            mlp_hidden: 16,
            k: 3,
            ..ModelDims::default()
        }
    }

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample {
                bundle: FeatureBundle {
                    f_vhr: stub_visual_features(&format!("p{i}"), 4, 2, 2, 1),
                    f_q: stub_text_features(&format!("question {i}"), 8, 1),
                    f_seg: Tensor::zeros(&[2, 4]),
                },
                target: i % 3,
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let vocab = AnswerVocabulary::from_entries(vec![("a".into(), 3), ("b".into(), 2), ("c".into(), 1)]);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (ck, hist) = train(&samples(6), &[], dims(), vocab.clone(), &cfg).unwrap();
        assert!(hist.is_empty());
        assert_eq!(ck.params, initial_params(&ck.dims, &vocab, 0));
        assert_eq!(infer(&ck, &samples(1)[0].bundle).unwrap(), "a");
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let vocab = AnswerVocabulary::from_entries(vec![("a".into(), 1), ("b".into(), 1), ("c".into(), 1)]);
        let cfg = TrainConfig {
            epochs: 60,
            lr: 1e-2,
            seed: 5,
            ..TrainConfig::default()
        };
        let data = samples(12);
        let (a, hist) = train(&data, &data, dims(), vocab.clone(), &cfg).unwrap();
        let (b, _) = train(&data, &data, dims(), vocab, &cfg).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert!(hist.last().unwrap().mean_loss < hist[0].mean_loss);
        assert!(hist.last().unwrap().val_accuracy.unwrap() > 0.9);
    }

    #[test]
    fn max_steps_stops_early() {
        let d = dims();
        let mut p = ModelParams::init(&d, 1);
        let cfg = TrainConfig {
            epochs: 10,
            lr: 1e-3,
            max_steps: Some(5),
            ..TrainConfig::default()
        };
        let hist = fit(&mut p, &d, &samples(12), &[], &cfg).unwrap();
        assert_eq!(hist.last().unwrap().steps, 5);
        assert_eq!(fit(&mut p, &d, &[], &[], &cfg), Err(TrainError::EmptyDataset));
    }
}
