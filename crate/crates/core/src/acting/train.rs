use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{skill_loss_grad, LossWeights};
use super::model::{ActorConfig, ActorModel};
use super::{downsample_cloud, infer_waypoints, ActingError};
use crate::geometry::{geodesic_angle, Pose};
use crate::nn::{Adam, AdamConfig, Parameters};
use crate::observation::PointCloud;

/// One cloud with its keypoint mask and demonstrated waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub cloud: PointCloud,
    pub mask: Vec<bool>,
    pub waypoints: Vec<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorTrainConfig {
    pub steps: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub seed: u64,
    /// Loss is averaged over windows of this many steps in the report.
    pub log_every: usize,
    /// Learning rate at the last step as a fraction of the initial one,
    /// reached by cosine decay. 1 keeps it constant.
    #[serde(default = "unit")]
    pub final_lr_scale: f64,
}

fn unit() -> f64 {
    1.0
}

/// Cosine interpolation from 1 at step 0 to `floor` at `total`.
pub fn cosine_scale(step: usize, total: usize, floor: f64) -> f64 {
    if total == 0 {
        return 1.0;
    }
    let t = (step as f64 / total as f64).min(1.0);
    floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

impl Default for ActorTrainConfig {
    fn default() -> Self {
        Self {
            steps: 4000,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            seed: 0,
            log_every: 100,
            final_lr_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorTrainReport {
    pub loss: Vec<f64>,
    pub steps: usize,
}

/// Batch-1 Adam on the waypoint loss, cycling through shuffled examples.
/// Each visit draws a fresh subsample of the cloud at the point budget.
pub fn train_skill(
    examples: &[TrainingExample],
    model_config: ActorConfig,
    config: &ActorTrainConfig,
) -> Result<(ActorModel, ActorTrainReport), ActingError> {
    if examples.is_empty() {
        return Err(ActingError::EmptyDataset);
    }
    for ex in examples {
        if ex.waypoints.len() != model_config.k {
            return Err(ActingError::InconsistentK {
                expected: model_config.k,
                found: ex.waypoints.len(),
            });
        }
        if ex.cloud.is_empty() {
            return Err(ActingError::EmptyCloud);
        }
    }
    let mut model = ActorModel::new(model_config)?;
    let mut adam = Adam::new(config.adam, &model.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let mut report = ActorTrainReport {
        loss: Vec::new(),
        steps: 0,
    };
    let mut window = 0.0;
    let mut in_window = 0;
    let base_lr = config.adam.lr;
    for step in 0..config.steps {
        adam.config.lr = base_lr * cosine_scale(step, config.steps, config.final_lr_scale);
        if order.is_empty() {
            order = (0..examples.len()).collect();
            order.shuffle(&mut rng);
        }
        let ex = &examples[order.pop().expect("refilled above")];
        let (cloud, mask) =
            downsample_cloud(&ex.cloud, &ex.mask, model_config.point_budget, &mut rng);
        let trace = model.forward(&cloud, &mask)?;
        let (loss, grad_out) =
            skill_loss_grad(&trace.output, &cloud, &ex.waypoints, &config.weights)?;
        let grads = model.backward(&trace, &grad_out)?;
        adam.step(model.params_mut(), &grads)?;
        report.steps += 1;
        window += loss;
        in_window += 1;
        if in_window == config.log_every.max(1) {
            report.loss.push(window / in_window as f64);
            window = 0.0;
            in_window = 0;
        }
    }
    if in_window > 0 {
        report.loss.push(window / in_window as f64);
    }
    if model.params().iter().any(|p| !p.all_finite()) {
        return Err(crate::nn::NnError::InvalidConfig(
            "training diverged to non-finite parameters".into(),
        )
        .into());
    }
    Ok((model, report))
}

/// Position error (m) and orientation error (rad) of every inferred waypoint.
pub fn waypoint_errors(
    model: &ActorModel,
    examples: &[TrainingExample],
    seed: u64,
) -> Result<Vec<(f64, f64)>, ActingError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for ex in examples {
        let (cloud, mask) =
            downsample_cloud(&ex.cloud, &ex.mask, model.config.point_budget, &mut rng);
        let output = model.forward(&cloud, &mask)?.output;
        for (pred, truth) in infer_waypoints(&output, &cloud).iter().zip(&ex.waypoints) {
            out.push((
                (pred.position - truth.position).norm(),
                geodesic_angle(pred.orientation(), truth.orientation()),
            ));
        }
    }
    Ok(out)
}
