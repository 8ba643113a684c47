use serde::{Deserialize, Serialize};

use super::model::{ActorOutput, SLOT_WIDTH};
use super::{nearest_waypoint_labels, ActingError};
use crate::geometry::Pose;
use crate::nn::{sigmoid_scalar, NnError};
use crate::observation::PointCloud;

/// Term weights of the per-point waypoint loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub cls: f64,
    pub ori: f64,
    pub pos: f64,
    /// A point is a positive for slot k when it is labelled k and lies within
    /// this distance (m) of the closest point to waypoint k.
    pub near_margin: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cls: 1.0,
            ori: 1.0,
            pos: 10.0,
            near_margin: 0.03,
        }
    }
}

fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn check_shapes(
    output: &ActorOutput,
    cloud: &PointCloud,
    waypoints: &[Pose],
) -> Result<(), ActingError> {
    if waypoints.len() != output.k {
        return Err(NnError::ShapeMismatch(format!(
            "{} waypoints for K = {}",
            waypoints.len(),
            output.k
        ))
        .into());
    }
    if cloud.len() != output.rows || cloud.is_empty() {
        return Err(NnError::ShapeMismatch(format!(
            "{} points for {} output rows",
            cloud.len(),
            output.rows
        ))
        .into());
    }
    Ok(())
}

/// Value of the waypoint loss: mean over points of a per-slot logistic
/// near/not-near term, `1 - <q̂, q>` and an L1 position term, where the last
/// two use the slot of the point's nearest waypoint.
pub fn skill_loss(
    output: &ActorOutput,
    cloud: &PointCloud,
    waypoints: &[Pose],
    w: &LossWeights,
) -> Result<f64, ActingError> {
    Ok(skill_loss_grad(output, cloud, waypoints, w)?.0)
}

/// Loss value and its gradient with respect to every entry of `output`.
pub fn skill_loss_grad(
    output: &ActorOutput,
    cloud: &PointCloud,
    waypoints: &[Pose],
    w: &LossWeights,
) -> Result<(f64, Vec<f64>), ActingError> {
    check_shapes(output, cloud, waypoints)?;
    let labels = nearest_waypoint_labels(cloud, waypoints);
    let n = cloud.len();
    let inv_n = 1.0 / n as f64;
    let mut dmin = vec![f64::INFINITY; output.k];
    let mut dists = vec![0.0; n * output.k];
    for (i, pt) in cloud.points.iter().enumerate() {
        for k in 0..output.k {
            let p = waypoints[k].position;
            let d =
                ((pt.xyz[0] - p.x).powi(2) + (pt.xyz[1] - p.y).powi(2) + (pt.xyz[2] - p.z).powi(2))
                    .sqrt();
            dists[i * output.k + k] = d;
            dmin[k] = dmin[k].min(d);
        }
    }
    let width = output.width();
    let mut grad = vec![0.0; output.data.len()];
    let mut total = 0.0;
    for i in 0..n {
        let label = labels[i];
        for k in 0..output.k {
            let y = if label == k && dists[i * output.k + k] <= dmin[k] + w.near_margin {
                1.0
            } else {
                0.0
            };
            let z = output.logit(i, k);
            total += w.cls * bce_with_logit(z, y);
            grad[i * width + k * SLOT_WIDTH] = w.cls * (sigmoid_scalar(z) - y) * inv_n;
        }
        let q = waypoints[label].orientation();
        let target = [q.w, q.i, q.j, q.k];
        let raw = output.quaternion(i, label);
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let unit: Vec<f64> = raw.iter().map(|v| v / norm).collect();
        let dot: f64 = unit.iter().zip(&target).map(|(a, b)| a * b).sum();
        total += w.ori * (1.0 - dot);
        let base = i * width + label * SLOT_WIDTH;
        for c in 0..4 {
            grad[base + 4 + c] = -w.ori * (target[c] - unit[c] * dot) / norm * inv_n;
        }
        let off = output.offset(i, label);
        let p = waypoints[label].position;
        let goal = [p.x, p.y, p.z];
        for c in 0..3 {
            let e = cloud.points[i].xyz[c] + off[c] - goal[c];
            total += w.pos * e.abs();
            let s = if e > 0.0 {
                1.0
            } else if e < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad[base + 1 + c] = w.pos * s * inv_n;
        }
    }
    Ok((total * inv_n, grad))
}
