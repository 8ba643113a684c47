pub mod acting;
pub mod data;
pub mod geometry;
pub mod grounding;
pub mod nn;
pub mod observation;
pub mod router;
pub mod skills;
