#![allow(dead_code)]

use std::path::{Path, PathBuf};

use manip_core::acting::{ActorConfig, ActorModel};
use manip_core::grounding::{GroundingConfig, GroundingModel, Vocabulary};
use manip_core::skills::{SkillLabel, SkillLibrary};
use manip_pipeline::config::PipelineConfig;

/// Untrained small models written to `dir`, plus the config pointing at them.
pub fn tiny_models(dir: &Path, skills: &[SkillLabel]) -> PipelineConfig {
    let vocab = Vocabulary::build([
        "pick up the lemon and put it in the bowl open close drawer skill_pick skill_place",
    ]);
    let g = GroundingModel::new(
        GroundingConfig {
            channels: [4, 4, 8],
            decoder_channels: 4,
            embed_dim: 8,
            text_dim: 4,
            ..GroundingConfig::default()
        },
        vocab,
    )
    .unwrap();
    g.to_checkpoint_file()
        .save(&dir.join("grounding.ckpt"))
        .unwrap();
    std::fs::create_dir_all(dir.join("actors")).unwrap();
    let mut library = SkillLibrary::standard();
    for &skill in skills {
        let actor = ActorModel::new(ActorConfig {
            k: skill.k(),
            hidden: 8,
            feature: 8,
            head: 8,
            point_budget: 512,
            ..ActorConfig::default()
        })
        .unwrap();
        let rel = PathBuf::from("actors").join(format!("{skill}.ckpt"));
        actor.to_checkpoint_file().save(&dir.join(&rel)).unwrap();
        library = library.with_actor(skill, rel);
    }
    library.save(&dir.join("library.json")).unwrap();
    let config = PipelineConfig::new("grounding.ckpt".into(), "library.json".into());
    config.save(&dir.join("pipeline.toml")).unwrap();
    PipelineConfig::load(&dir.join("pipeline.toml")).unwrap()
}

pub fn all_skills() -> Vec<SkillLabel> {
    SkillLabel::ALL.to_vec()
}
