//! Dataset generation and model training on simulator demonstrations.

use std::path::{Path, PathBuf};

use manip_core::acting::{
    train_skill, waypoint_errors, ActorConfig, ActorModel, ActorTrainConfig, ActorTrainReport,
    LossWeights, TrainingExample,
};
use manip_core::data::{
    build_grounding_dataset, load_dataset, load_supplemental_dir, partition, save_dataset,
    save_grounding_samples, DatasetManifest, SkillDemo,
};
use manip_core::grounding::{
    evaluate_pixel_error, train_grounding, GroundingConfig, GroundingModel, GroundingSample,
    GroundingTrainConfig, GroundingTrainReport,
};
use manip_core::nn::AdamConfig;
use manip_core::skills::{SkillLabel, SkillLibrary};
use manip_sim::demo::{generate_demos, supplemental_labels};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PipelineConfig, DEFAULT_MASK_RADIUS};
use crate::PipelineError;

pub const SUPPLEMENTAL_DIR: &str = "supplemental";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub demos_per_skill: usize,
    /// Supplemental grounding labels per demonstration-derived label.
    pub supplemental_ratio: f64,
    pub data_seed: u64,
    pub grounding_model: GroundingConfig,
    pub grounding: GroundingTrainConfig,
    pub actor_model: ActorConfig,
    pub actor: ActorTrainConfig,
    pub mask_radius: f64,
    /// Skills that get a trained actor.
    #[serde(default = "all_skills")]
    pub actor_skills: Vec<SkillLabel>,
    #[serde(default)]
    pub keypoint_jitter: KeypointJitter,
}

/// Extra actor training copies per demo, each with the mask annotated around
/// the label pixel shifted by an integer offset of length at most `max_px`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KeypointJitter {
    pub copies: usize,
    pub max_px: f64,
}

fn all_skills() -> Vec<SkillLabel> {
    SkillLabel::ALL.to_vec()
}

impl TrainingPlan {
    /// Hex SHA-256 of the serialised plan.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serialises");
        hex::encode(Sha256::digest(json))
    }
}

impl Default for TrainingPlan {
    fn default() -> Self {
        Self {
            demos_per_skill: 50,
            supplemental_ratio: 0.75,
            data_seed: 0,
            grounding_model: GroundingConfig::default(),
            grounding: GroundingTrainConfig {
                epochs: 8,
                ..GroundingTrainConfig::default()
            },
            actor_model: ActorConfig::default(),
            actor: ActorTrainConfig {
                adam: AdamConfig {
                    lr: 1e-3,
                    ..AdamConfig::default()
                },
                steps: 6000,
                final_lr_scale: 0.02,
                weights: LossWeights {
                    ori: 5.0,
                    ..LossWeights::default()
                },
                ..ActorTrainConfig::default()
            },
            mask_radius: DEFAULT_MASK_RADIUS,
            actor_skills: all_skills(),
            keypoint_jitter: KeypointJitter {
                copies: 3,
                max_px: 4.0,
            },
        }
    }
}

/// Generates `count` demos of `skill` and writes them to `dir`.
pub fn generate_dataset(
    dir: &Path,
    skill: SkillLabel,
    count: usize,
    seed: u64,
) -> Result<DatasetManifest, PipelineError> {
    let demos = generate_demos(skill, count, seed)?;
    Ok(save_dataset(&demos, dir, seed)?)
}

/// Writes `count` supplemental grounding labels to `dir/labels.jsonl`.
pub fn generate_supplemental(
    dir: &Path,
    count: usize,
    seed: u64,
) -> Result<PathBuf, PipelineError> {
    let samples = supplemental_labels(count, seed)?;
    Ok(save_grounding_samples(&samples, dir, "labels")?)
}

/// One dataset per skill under `root/<skill>` plus supplemental labels
/// under `root/supplemental`.
pub fn generate_standard_data(root: &Path, plan: &TrainingPlan) -> Result<(), PipelineError> {
    for skill in SkillLabel::ALL {
        generate_dataset(
            &root.join(skill.as_str()),
            skill,
            plan.demos_per_skill,
            plan.data_seed,
        )?;
    }
    let originals = plan.demos_per_skill * SkillLabel::ALL.len();
    let count = (plan.supplemental_ratio * originals as f64).ceil() as usize;
    generate_supplemental(&root.join(SUPPLEMENTAL_DIR), count, plan.data_seed)?;
    Ok(())
}

/// Dataset at `dir`, or at `dir/<skill>` when `dir` holds several.
pub fn resolve_skill_dir(dir: &Path, skill: SkillLabel) -> PathBuf {
    if dir.join("manifest.json").is_file() {
        dir.to_path_buf()
    } else {
        dir.join(skill.as_str())
    }
}

/// Every skill dataset directly below `root`, in directory-name order.
pub fn load_skill_datasets(
    root: &Path,
) -> Result<Vec<(Vec<SkillDemo>, DatasetManifest)>, PipelineError> {
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(PipelineError::Config(format!(
            "no datasets under {}",
            root.display()
        )));
    }
    dirs.iter().map(|d| Ok(load_dataset(d)?)).collect()
}

fn split_demos(
    demos: &[SkillDemo],
    manifest: &DatasetManifest,
) -> (Vec<SkillDemo>, Vec<SkillDemo>) {
    partition(demos, &manifest.splits())
}

/// Training samples (train-split demos plus supplemental labels) and the
/// held-out val-split demo samples.
pub fn grounding_split(
    datasets: &[(Vec<SkillDemo>, DatasetManifest)],
    supplemental: &[GroundingSample],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<GroundingSample>, Vec<GroundingSample>), PipelineError> {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (demos, manifest) in datasets {
        let (t, v) = split_demos(demos, manifest);
        train.extend(t);
        val.extend(v.iter().map(SkillDemo::grounding_sample));
    }
    Ok((
        build_grounding_dataset(&train, supplemental, ratio, seed)?,
        val,
    ))
}

pub struct GroundingRun {
    pub model: GroundingModel,
    pub report: GroundingTrainReport,
    pub val: Vec<GroundingSample>,
    pub val_pixel_error: Vec<f64>,
}

pub fn train_grounding_dir(
    root: &Path,
    plan: &TrainingPlan,
) -> Result<GroundingRun, PipelineError> {
    let datasets = load_skill_datasets(root)?;
    let supp_dir = root.join(SUPPLEMENTAL_DIR);
    let supplemental = if supp_dir.is_dir() {
        load_supplemental_dir(&supp_dir)?
    } else {
        Vec::new()
    };
    let (train, val) = grounding_split(
        &datasets,
        &supplemental,
        plan.supplemental_ratio,
        plan.data_seed,
    )?;
    let (model, report) = train_grounding(&train, &val, plan.grounding_model, &plan.grounding)?;
    let val_pixel_error = evaluate_pixel_error(&model, &val)?;
    Ok(GroundingRun {
        model,
        report,
        val,
        val_pixel_error,
    })
}

pub fn actor_examples(
    demos: &[SkillDemo],
    radius: f64,
) -> Result<Vec<TrainingExample>, PipelineError> {
    demos
        .iter()
        .map(|d| Ok(d.training_example(radius)?))
        .collect()
}

/// Label-pixel examples followed by `jitter.copies` shifted copies per demo.
/// Shifts whose mask comes out empty or off-frame are redrawn.
pub fn jittered_examples(
    demos: &[SkillDemo],
    radius: f64,
    jitter: KeypointJitter,
    seed: u64,
) -> Result<Vec<TrainingExample>, PipelineError> {
    let mut out = actor_examples(demos, radius)?;
    let reach = jitter.max_px.max(0.0).floor() as i64;
    let offsets: Vec<(i64, i64)> = (-reach..=reach)
        .flat_map(|du| (-reach..=reach).map(move |dv| (du, dv)))
        .filter(|&(du, dv)| (du * du + dv * dv) as f64 <= jitter.max_px * jitter.max_px)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for demo in demos {
        let (ku, kv) = demo.label_keypoint();
        let mut made = 0;
        for _ in 0..jitter.copies * 8 {
            if made == jitter.copies {
                break;
            }
            let Some(&(du, dv)) = offsets.choose(&mut rng) else {
                break;
            };
            let (u, v) = (ku as i64 + du, kv as i64 + dv);
            if u < 0 || v < 0 {
                continue;
            }
            if let Ok(ex) = demo.training_example_at((u as usize, v as usize), radius) {
                out.push(ex);
                made += 1;
            }
        }
    }
    Ok(out)
}

pub struct ActorRun {
    pub model: ActorModel,
    pub report: ActorTrainReport,
    /// Position (m) and orientation (rad) error on the val split.
    pub val_errors: Vec<(f64, f64)>,
}

pub fn train_actor(
    demos: &[SkillDemo],
    manifest: &DatasetManifest,
    plan: &TrainingPlan,
) -> Result<ActorRun, PipelineError> {
    let (train, val) = split_demos(demos, manifest);
    let train = jittered_examples(
        &train,
        plan.mask_radius,
        plan.keypoint_jitter,
        plan.actor.seed,
    )?;
    let val = actor_examples(&val, plan.mask_radius)?;
    let model_config = ActorConfig {
        k: manifest.k,
        ..plan.actor_model
    };
    let (model, report) = train_skill(&train, model_config, &plan.actor)?;
    let val_errors = waypoint_errors(&model, &val, plan.actor.seed)?;
    Ok(ActorRun {
        model,
        report,
        val_errors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub grounding_val_loss: Vec<f64>,
    pub grounding_val_within_8px: f64,
    pub actor_final_loss: Vec<(SkillLabel, f64)>,
}

/// Trains the grounding model and one actor per listed skill from `data_root` and
/// writes checkpoints, the library manifest and `pipeline.toml` to `out`.
pub fn build_models(
    data_root: &Path,
    out: &Path,
    plan: &TrainingPlan,
) -> Result<(PipelineConfig, TrainingSummary), PipelineError> {
    std::fs::create_dir_all(out.join("actors"))?;
    let g = train_grounding_dir(data_root, plan)?;
    g.model
        .to_checkpoint_file()
        .save(&out.join("grounding.ckpt"))?;
    let within = g.val_pixel_error.iter().filter(|e| **e <= 8.0).count() as f64
        / g.val_pixel_error.len().max(1) as f64;
    let mut library = SkillLibrary::standard().restricted(&plan.actor_skills);
    let mut finals = Vec::new();
    for &skill in &plan.actor_skills {
        let (demos, manifest) = load_dataset(&resolve_skill_dir(data_root, skill))?;
        if manifest.skill != skill {
            return Err(PipelineError::Config(format!(
                "dataset for {skill} holds {}",
                manifest.skill
            )));
        }
        let run = train_actor(&demos, &manifest, plan)?;
        let rel = PathBuf::from("actors").join(format!("{skill}.ckpt"));
        run.model.to_checkpoint_file().save(&out.join(&rel))?;
        library = library.with_actor(skill, rel);
        finals.push((skill, run.report.loss.last().copied().unwrap_or(f64::NAN)));
    }
    library.save(&out.join("library.json"))?;
    let mut config = PipelineConfig::new("grounding.ckpt".into(), "library.json".into());
    config.mask_radius = plan.mask_radius;
    config.seed = plan.data_seed;
    config.save(&out.join("pipeline.toml"))?;
    let config = PipelineConfig::load(&out.join("pipeline.toml"))?;
    Ok((
        config,
        TrainingSummary {
            grounding_val_loss: g.report.val_loss,
            grounding_val_within_8px: within,
            actor_final_loss: finals,
        },
    ))
}
