use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::augment_sample;
use super::model::{GroundingConfig, GroundingModel};
use super::text::Vocabulary;
use super::{argmax_keypoint, gaussian_target, GroundingError, GroundingSample};
use crate::nn::{binary_cross_entropy, Adam, AdamConfig, Parameters};
use crate::observation::image_to_tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundingTrainConfig {
    pub epochs: usize,
    pub adam: AdamConfig,
    /// Augmented copies per sample on top of the original.
    pub augment_copies: usize,
    pub seed: u64,
}

impl Default for GroundingTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            adam: AdamConfig::default(),
            augment_copies: 7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingTrainReport {
    /// Mean training loss per epoch.
    pub train_loss: Vec<f64>,
    /// Validation loss before training, then after every epoch.
    pub val_loss: Vec<f64>,
    pub steps: usize,
}

fn sample_seed(seed: u64, epoch: usize, index: usize, copy: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ (copy as u64).wrapping_mul(0x94D0_49BB_1331_11EB)
}

/// Mean BCE over a sample set.
pub fn validation_loss(
    model: &GroundingModel,
    samples: &[GroundingSample],
) -> Result<f64, GroundingError> {
    if samples.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in samples {
        let h = model.predict_heatmap(&s.image, &s.instruction)?;
        let t = gaussian_target(s.pixel, model.config.sigma, h.width, h.height);
        total += binary_cross_entropy(&h.data, &t.data)?;
    }
    Ok(total / samples.len() as f64)
}

/// Pixel distance between predicted argmax and label, per sample.
pub fn evaluate_pixel_error(
    model: &GroundingModel,
    samples: &[GroundingSample],
) -> Result<Vec<f64>, GroundingError> {
    samples
        .iter()
        .map(|s| {
            let h = model.predict_heatmap(&s.image, &s.instruction)?;
            let (u, v) = argmax_keypoint(&h);
            Ok((u as f64 - s.pixel[0]).hypot(v as f64 - s.pixel[1]))
        })
        .collect()
}

/// Batch-1 Adam on per-pixel BCE against Gaussian targets. Each epoch visits
/// every sample once as-is plus `augment_copies` freshly augmented versions,
/// in shuffled order.
pub fn train_grounding(
    train: &[GroundingSample],
    val: &[GroundingSample],
    model_config: GroundingConfig,
    config: &GroundingTrainConfig,
) -> Result<(GroundingModel, GroundingTrainReport), GroundingError> {
    if train.is_empty() {
        return Err(GroundingError::EmptyDataset);
    }
    for s in train {
        if !s.pixel_in_bounds() {
            return Err(GroundingError::LabelOutOfBounds(s.pixel[0], s.pixel[1]));
        }
    }
    let texts = train.iter().map(|s| s.instruction.as_str());
    let vocab = if model_config.bigrams {
        Vocabulary::with_bigrams(texts)
    } else {
        Vocabulary::build(texts)
    };
    let mut model = GroundingModel::new(model_config, vocab)?;
    let mut adam = Adam::new(config.adam, &model.params())?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut report = GroundingTrainReport {
        train_loss: Vec::new(),
        val_loss: vec![validation_loss(&model, val)?],
        steps: 0,
    };
    let (w, h) = (model_config.width, model_config.height);
    for epoch in 0..config.epochs {
        let mut order: Vec<(usize, usize)> = (0..train.len())
            .flat_map(|i| (0..=config.augment_copies).map(move |c| (i, c)))
            .collect();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &(i, copy) in &order {
            let sample = if copy == 0 {
                train[i].clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(config.seed, epoch, i, copy));
                match augment_sample(&train[i], &mut rng) {
                    Ok(s) => s,
                    Err(GroundingError::AugmentationExhausted(_)) => train[i].clone(),
                    Err(e) => return Err(e),
                }
            };
            let x = image_to_tensor(&sample.image);
            let tokens = model.vocab.encode(&sample.instruction);
            let target = gaussian_target(sample.pixel, model_config.sigma, w, h);
            let (loss, grads, _) = model.loss_and_grads(&x, &tokens, &target)?;
            adam.step(model.params_mut(), &grads)?;
            total += loss;
            report.steps += 1;
        }
        report.train_loss.push(total / order.len() as f64);
        report.val_loss.push(validation_loss(&model, val)?);
    }
    if model.params().iter().any(|p| !p.all_finite()) {
        return Err(crate::nn::NnError::InvalidConfig(
            "training diverged to non-finite parameters".into(),
        )
        .into());
    }
    Ok((model, report))
}
