//! Trained grounding and actor models.

use std::collections::BTreeMap;

use manip_core::acting::ActorModel;
use manip_core::grounding::GroundingModel;
use manip_core::nn::Checkpoint;
use manip_core::skills::{SkillLabel, SkillLibrary};

use crate::config::PipelineConfig;
use crate::PipelineError;

#[derive(Debug, Clone)]
pub struct Models {
    pub grounding: GroundingModel,
    pub library: SkillLibrary,
    pub actors: BTreeMap<SkillLabel, ActorModel>,
}

impl Models {
    pub fn load(config: &PipelineConfig) -> Result<Self, PipelineError> {
        let grounding = GroundingModel::from_checkpoint(&Checkpoint::load(&config.grounding)?)?;
        let (library, paths) = config.library()?;
        let mut actors = BTreeMap::new();
        for (label, path) in paths {
            let actor = ActorModel::from_checkpoint(&Checkpoint::load(&path)?)?;
            if actor.config.k != label.k() {
                return Err(PipelineError::Config(format!(
                    "actor for {label} predicts {} waypoints, skill needs {}",
                    actor.config.k,
                    label.k()
                )));
            }
            actors.insert(label, actor);
        }
        Ok(Self {
            grounding,
            library,
            actors,
        })
    }

    pub fn actor(&self, label: SkillLabel) -> Result<&ActorModel, PipelineError> {
        self.library.lookup(label.as_str())?;
        self.actors
            .get(&label)
            .ok_or(PipelineError::MissingActor(label))
    }
}
