//! Tabletop simulator: scenes, rendering, kinematic execution, tasks and
//! scripted demonstrations.

pub mod demo;
pub mod physics;
pub mod render;
pub mod scene;
pub mod shapes;
pub mod tasks;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("could not place object {0} without collisions")]
    PlacementFailure(usize),
    #[error("target is occluded in the grounding camera")]
    Occluded,
    #[error("task is infeasible: {0}")]
    InfeasibleTask(String),
    #[error("templates: {0}")]
    Templates(String),
}
