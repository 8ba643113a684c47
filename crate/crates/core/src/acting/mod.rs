//! Keypoint-conditioned waypoint prediction over point clouds.

mod loss;
mod model;
mod train;

pub use loss::{skill_loss, skill_loss_grad, LossWeights};
pub use model::{
    actor_forward, cloud_centre, ActorConfig, ActorModel, ActorOutput, ActorTrace, SLOT_WIDTH,
};
pub use train::{
    cosine_scale, train_skill, waypoint_errors, ActorTrainConfig, ActorTrainReport, TrainingExample,
};

use std::collections::HashMap;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use thiserror::Error;

use crate::geometry::{Camera, Pose};
use crate::nn::NnError;
use crate::observation::{DepthMap, PointCloud};

/// Distance under which a cloud point is associated with a deprojected pixel.
pub const MATCH_EPSILON: f64 = 0.005;
/// Default annotation radius in pixels.
pub const DEFAULT_RADIUS: f64 = 8.0;

#[derive(Debug, Error)]
pub enum ActingError {
    #[error("no valid depth around keypoint ({0}, {1})")]
    EmptyMask(usize, usize),
    #[error("keypoint ({0}, {1}) lies outside the depth map")]
    KeypointOutOfBounds(usize, usize),
    #[error("demonstrations disagree on waypoint count: expected {expected}, found {found}")]
    InconsistentK { expected: usize, found: usize },
    #[error("no training examples")]
    EmptyDataset,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Per-point binary channel marking points near the deprojected keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointMask {
    pub values: Vec<bool>,
    pub radius: f64,
}

impl KeypointMask {
    pub fn count(&self) -> usize {
        self.values.iter().filter(|v| **v).count()
    }
}

fn cell_of(p: &[f64; 3]) -> (i64, i64, i64) {
    (
        (p[0] / MATCH_EPSILON).floor() as i64,
        (p[1] / MATCH_EPSILON).floor() as i64,
        (p[2] / MATCH_EPSILON).floor() as i64,
    )
}

/// Marks cloud points within [`MATCH_EPSILON`] of any valid-depth pixel whose
/// distance to `keypoint` is below `radius` (the keypoint pixel always counts).
pub fn annotate_keypoint_mask(
    cloud: &PointCloud,
    depth: &DepthMap,
    keypoint: (usize, usize),
    radius: f64,
    camera: &Camera,
) -> Result<KeypointMask, ActingError> {
    let (ku, kv) = keypoint;
    if ku >= depth.width || kv >= depth.height {
        return Err(ActingError::KeypointOutOfBounds(ku, kv));
    }
    let reach = radius.max(0.0).ceil() as usize;
    let mut grid: HashMap<(i64, i64, i64), Vec<[f64; 3]>> = HashMap::new();
    for v in kv.saturating_sub(reach)..=(kv + reach).min(depth.height - 1) {
        for u in ku.saturating_sub(reach)..=(ku + reach).min(depth.width - 1) {
            let du = u as f64 - ku as f64;
            let dv = v as f64 - kv as f64;
            let inside = du * du + dv * dv < radius * radius || (u == ku && v == kv);
            if !inside || !depth.is_valid(u, v) {
                continue;
            }
            if let Ok(p) = camera.deproject(u as f64, v as f64, depth.get(u, v)) {
                let p = [p.x, p.y, p.z];
                grid.entry(cell_of(&p)).or_default().push(p);
            }
        }
    }
    if grid.is_empty() {
        return Err(ActingError::EmptyMask(ku, kv));
    }
    let eps2 = MATCH_EPSILON * MATCH_EPSILON;
    let values = cloud
        .points
        .iter()
        .map(|pt| {
            let (cx, cy, cz) = cell_of(&pt.xyz);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(ps) = grid.get(&(cx + dx, cy + dy, cz + dz)) {
                            if ps.iter().any(|q| sq_dist(q, &pt.xyz) <= eps2) {
                                return true;
                            }
                        }
                    }
                }
            }
            false
        })
        .collect();
    Ok(KeypointMask { values, radius })
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Index of the nearest waypoint position for every point; ties go to the lowest index.
pub fn nearest_waypoint_labels(cloud: &PointCloud, waypoints: &[Pose]) -> Vec<usize> {
    cloud
        .points
        .iter()
        .map(|pt| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, w) in waypoints.iter().enumerate() {
                let p = w.position;
                let d = sq_dist(&pt.xyz, &[p.x, p.y, p.z]);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect()
}

/// For each slot, the pose read off the point with the largest logit
/// (lowest index on ties).
pub fn infer_waypoints(output: &ActorOutput, cloud: &PointCloud) -> Vec<Pose> {
    (0..output.k)
        .map(|k| {
            let mut best = 0;
            for i in 1..output.rows {
                if output.logit(i, k) > output.logit(best, k) {
                    best = i;
                }
            }
            let xyz = cloud.points[best].xyz;
            let off = output.offset(best, k);
            let q = output.quaternion(best, k);
            let raw = Quaternion::new(q[0], q[1], q[2], q[3]);
            let orientation = if raw.norm() > 1e-12 {
                UnitQuaternion::from_quaternion(raw)
            } else {
                UnitQuaternion::identity()
            };
            Pose::new(
                Vector3::new(xyz[0] + off[0], xyz[1] + off[1], xyz[2] + off[2]),
                orientation,
            )
        })
        .collect()
}

/// Subsamples without replacement above `budget`, pads by resampling below it.
pub fn downsample_cloud<R: Rng + ?Sized>(
    cloud: &PointCloud,
    mask: &[bool],
    budget: usize,
    rng: &mut R,
) -> (PointCloud, Vec<bool>) {
    let d = cloud.len();
    let indices: Vec<usize> = if d == budget || d == 0 {
        (0..d).collect()
    } else if d > budget {
        let mut idx = sample_indices(rng, d, budget).into_vec();
        idx.sort_unstable();
        idx
    } else {
        let mut idx: Vec<usize> = (0..d).collect();
        idx.extend((d..budget).map(|_| rng.gen_range(0..d)));
        idx
    };
    (
        PointCloud::new(indices.iter().map(|&i| cloud.points[i]).collect()),
        indices.iter().map(|&i| mask[i]).collect(),
    )
}
