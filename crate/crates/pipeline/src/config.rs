//! Pipeline configuration, loaded from TOML or JSON.

use std::path::{Path, PathBuf};

use manip_core::router::{
    CompletionClient, FixtureClient, PromptTemplate, RemoteClient, RuleClient,
};
use manip_core::skills::{SkillLabel, SkillLibrary};
use serde::{Deserialize, Serialize};

use crate::PipelineError;

pub const DEFAULT_MASK_RADIUS: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RouterMode {
    /// Offline keyword router.
    #[default]
    Rules,
    /// Recorded completions keyed by prompt hash.
    Fixture { dir: PathBuf },
    /// Completion endpoint configured through `MANIP_LLM_*` variables.
    Remote,
}

/// Episode that `run` and `serve` start from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub skill: SkillLabel,
    #[serde(default = "default_tier")]
    pub tier: u8,
    #[serde(default)]
    pub compound: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_tier() -> u8 {
    1
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            skill: SkillLabel::Pick,
            tier: 1,
            compound: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Grounding checkpoint.
    pub grounding: PathBuf,
    /// Skill library manifest; its entries name the actor checkpoints.
    pub library: PathBuf,
    #[serde(default)]
    pub router: RouterMode,
    /// Pixel radius of the keypoint mask.
    #[serde(default = "default_radius")]
    pub mask_radius: f64,
    /// Points fed to the actor; defaults to the budget stored in each checkpoint.
    #[serde(default)]
    pub point_budget: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scene: SceneConfig,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_radius() -> f64 {
    DEFAULT_MASK_RADIUS
}

fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

impl PipelineConfig {
    pub fn new(grounding: PathBuf, library: PathBuf) -> Self {
        Self {
            grounding,
            library,
            router: RouterMode::Rules,
            mask_radius: DEFAULT_MASK_RADIUS,
            point_budget: None,
            seed: 0,
            scene: SceneConfig::default(),
            workers: default_workers(),
        }
    }

    /// Parses by extension (`.json`, anything else as TOML) and resolves
    /// relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        let mut config: PipelineConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| PipelineError::Config(e.to_string()))?
        };
        let base = path.parent().unwrap_or(Path::new("."));
        config.grounding = resolve(base, &config.grounding);
        config.library = resolve(base, &config.library);
        if let RouterMode::Fixture { dir } = &mut config.router {
            *dir = resolve(base, dir);
        }
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        let text =
            toml::to_string_pretty(self).map_err(|e| PipelineError::Config(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.mask_radius.is_finite() && self.mask_radius >= 0.0) {
            return Err(PipelineError::Config(format!(
                "mask_radius {} must be finite and non-negative",
                self.mask_radius
            )));
        }
        if self.point_budget == Some(0) {
            return Err(PipelineError::Config(
                "point_budget must be positive".into(),
            ));
        }
        if !(1..=3).contains(&self.scene.tier) {
            return Err(PipelineError::Config(format!(
                "scene tier {} outside 1..=3",
                self.scene.tier
            )));
        }
        Ok(())
    }

    /// Loads the library and checks that every label has an existing actor checkpoint.
    pub fn library(&self) -> Result<(SkillLibrary, Vec<(SkillLabel, PathBuf)>), PipelineError> {
        let library = SkillLibrary::load(&self.library)?;
        let base = self.library.parent().unwrap_or(Path::new("."));
        let mut actors = Vec::new();
        for label in library.labels() {
            let path = library
                .actor_path(label, base)
                .ok_or(PipelineError::MissingActor(label))?;
            if !path.is_file() {
                return Err(PipelineError::Config(format!(
                    "actor checkpoint for {label} not found at {}",
                    path.display()
                )));
            }
            actors.push((label, path));
        }
        Ok((library, actors))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Completion client plus prompt template.
pub struct Router {
    pub client: Box<dyn CompletionClient>,
    pub template: PromptTemplate,
}

impl Router {
    pub fn rules() -> Self {
        Self {
            client: Box::new(RuleClient),
            template: PromptTemplate::standard(),
        }
    }

    pub fn from_mode(mode: &RouterMode) -> Result<Self, PipelineError> {
        let client: Box<dyn CompletionClient> = match mode {
            RouterMode::Rules => Box::new(RuleClient),
            RouterMode::Fixture { dir } => Box::new(FixtureClient::new(dir.clone())),
            RouterMode::Remote => Box::new(
                RemoteClient::from_env()
                    .ok_or_else(|| PipelineError::Config("MANIP_LLM_URL is not set".into()))?,
            ),
        };
        Ok(Self {
            client,
            template: PromptTemplate::standard(),
        })
    }
}
