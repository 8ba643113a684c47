//! Language-to-trajectory loop over the simulator: routing, grounding,
//! acting, benchmarking, training orchestration and the HTTP service.

pub mod benchmark;
pub mod config;
pub mod models;
pub mod service;
pub mod step;
pub mod train;

use manip_core::acting::ActingError;
use manip_core::data::DataError;
use manip_core::grounding::GroundingError;
use manip_core::nn::NnError;
use manip_core::router::RouterError;
use manip_core::skills::{SkillError, SkillLabel};
use manip_sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("no actor checkpoint for {0}")]
    MissingActor(SkillLabel),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    Acting(#[from] ActingError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
