//! Mini-batch training loop with early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::streamline::Streamline;

use super::adam::{Adam, DecayMode};
use super::linalg::{Mat, Scalar};
use super::{sum_squared_diff, AutoencoderModel, Gradients, Workspace, ENCODE_CHUNK};

/// Identifier of the pseudo-random generator used for shuffling and
/// initialization, recorded in reports for reproducibility.
pub const PRNG_NAME: &str = "chacha8";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub decay_mode: DecayMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 6.68e-4,
            weight_decay: 0.13,
            batch_size: 128,
            max_epochs: 100,
            patience: 5,
            seed: 0,
            decay_mode: DecayMode::Decoupled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    pub train_size: usize,
    pub val_size: usize,
    pub config: TrainConfig,
    pub model_seed: u64,
    pub prng: String,
}

/// Train with mini-batch Adam, tracking validation loss each epoch and
/// returning the parameters of the best validation epoch.
pub fn train<F: Scalar>(
    mut model: AutoencoderModel<F>,
    train_set: &[Streamline],
    val_set: &[Streamline],
    config: &TrainConfig,
) -> Result<(AutoencoderModel<F>, TrainReport)> {
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if config.learning_rate < 0.0 || config.weight_decay < 0.0 {
        return Err(Error::InvalidConfig("negative learning rate or weight decay".into()));
    }
    if config.batch_size == 0 || config.max_epochs == 0 || config.patience == 0 {
        return Err(Error::InvalidConfig(
            "batch size, max epochs and patience must be positive".into(),
        ));
    }
    let points = model.config.input_points;
    for s in train_set.iter().chain(val_set) {
        if s.len() != points {
            return Err(Error::ShapeMismatch(format!(
                "training data must be resampled to {points} points, found {}",
                s.len()
            )));
        }
    }

    let mut adam = Adam::new(&model, config.learning_rate, config.weight_decay, config.decay_mode);
    let mut grads = Gradients::zeros_like(&model);
    let mut ws = Workspace::new();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut epochs = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<Vec<Vec<F>>> = None;
    let mut since_best = 0usize;
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_sq = 0.0f64;
        let mut train_elems = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let refs: Vec<&Streamline> = batch_idx.iter().map(|&i| &train_set[i]).collect();
            let x = model.normalize_batch(&refs);
            model.forward(&x, refs.len(), &mut ws);
            let sq = sum_squared_diff(&ws.recon, &x);
            if !sq.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            train_sq += sq;
            train_elems += x.data.len();

            let scale = F::from_f64(2.0 / x.data.len() as f64);
            let mut d_recon = Mat::zeros(ws.recon.rows, ws.recon.cols);
            for ((d, &r), &t) in d_recon.data.iter_mut().zip(&ws.recon.data).zip(&x.data) {
                *d = (r - t) * scale;
            }
            model.backward(&d_recon, refs.len(), &mut ws, &mut grads);
            adam.step(&mut model, &grads);
        }
        let train_loss = train_sq / train_elems as f64;
        let val_loss = eval_loss(&model, val_set, &mut ws);
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        epochs.push(EpochStats { epoch, train_loss, val_loss });

        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = Some(model.snapshot_params());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_early = true;
                break;
            }
        }
    }

    if let Some(params) = &best_params {
        model.restore_params(params);
    }
    let report = TrainReport {
        epochs,
        best_epoch,
        best_val_loss: best_val,
        stopped_early,
        train_size: train_set.len(),
        val_size: val_set.len(),
        config: config.clone(),
        model_seed: model.config.seed,
        prng: PRNG_NAME.to_string(),
    };
    Ok((model, report))
}

fn eval_loss<F: Scalar>(
    model: &AutoencoderModel<F>,
    set: &[Streamline],
    ws: &mut Workspace<F>,
) -> f64 {
    let mut sq = 0.0f64;
    let mut elems = 0usize;
    for chunk in set.chunks(ENCODE_CHUNK) {
        let refs: Vec<&Streamline> = chunk.iter().collect();
        let x = model.normalize_batch(&refs);
        model.forward(&x, refs.len(), ws);
        sq += sum_squared_diff(&ws.recon, &x);
        elems += x.data.len();
    }
    sq / elems as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{AutoencoderModel, ModelConfig, Normalization};
    use crate::streamline::Point3;

    #[test]
    fn divergence_is_reported_with_epoch() {
        let streamlines: Vec<Streamline> = (0..8)
            .map(|i| {
                Streamline::new(
                    (0..16)
                        .map(|j| {
                            let t = j as f64 / 15.0;
                            Point3::new(20.0 * t, (i as f64) * t, 0.5 * t)
                        })
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let mut model = AutoencoderModel::<f32>::init(ModelConfig {
            input_points: 16,
            encoder_features: vec![4, 8],
            latent_dim: 4,
            seed: 1,
            ..ModelConfig::default()
        })
        .unwrap();
        model.norm = Normalization::fit(&streamlines, Point3::ZERO);
        // an absurd learning rate overflows f32 within the first epochs
        let cfg = TrainConfig {
            learning_rate: 1e30,
            weight_decay: 0.0,
            batch_size: 4,
            max_epochs: 50,
            patience: 50,
            seed: 2,
            ..TrainConfig::default()
        };
        match train(model, &streamlines, &streamlines[..2], &cfg) {
            Err(crate::Error::TrainingDiverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {:?}", other.map(|(_, r)| r)),
        }
    }

    #[test]
    fn rejects_empty_sets_and_bad_config() {
        let model = AutoencoderModel::<f32>::init(ModelConfig {
            input_points: 16,
            encoder_features: vec![4, 8],
            latent_dim: 4,
            seed: 1,
            ..ModelConfig::default()
        })
        .unwrap();
        assert!(matches!(
            train(model, &[], &[], &TrainConfig::default()),
            Err(crate::Error::EmptyBatch)
        ));
    }
}
