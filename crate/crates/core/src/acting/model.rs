use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ActingError;
use crate::nn::{
    max_pool_rows, relu, relu_backward, Checkpoint, Linear, NnError, Parameters, Tensor,
};
use crate::observation::PointCloud;

pub const CHECKPOINT_KIND: &str = "actor";

/// Values per waypoint slot: logit, 3-D offset, quaternion (w, x, y, z).
pub const SLOT_WIDTH: usize = 8;
const INPUT_WIDTH: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorConfig {
    pub k: usize,
    pub hidden: usize,
    pub feature: usize,
    pub head: usize,
    /// Centred coordinates are divided by this length (m) before the network.
    pub position_scale: f64,
    /// Raw offset outputs are multiplied by this length (m) and added to the
    /// vector from the point to the mask centre.
    pub offset_scale: f64,
    pub point_budget: usize,
    pub seed: u64,
    /// Radius (m) of the neighbourhood around the mask centre pooled as a
    /// third context feature.
    #[serde(default = "default_context_radius")]
    pub context_radius: f64,
}

fn default_context_radius() -> f64 {
    0.09
}

const POOLS: usize = 3;

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            k: 1,
            hidden: 32,
            feature: 64,
            head: 32,
            position_scale: 0.1,
            offset_scale: 0.1,
            point_budget: 4096,
            seed: 0,
            context_radius: default_context_radius(),
        }
    }
}

/// Shared per-point MLP, max-pools over the whole cloud, the masked points
/// and the ball around the mask centre, and a per-point head over
/// `[local, global, masked, neighbourhood]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorModel {
    pub config: ActorConfig,
    l1: Linear,
    l2: Linear,
    h1: Linear,
    h2: Linear,
}

/// `rows × (K · 8)` per-point predictions; offsets in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorOutput {
    pub k: usize,
    pub rows: usize,
    pub data: Vec<f64>,
}

impl ActorOutput {
    pub fn width(&self) -> usize {
        self.k * SLOT_WIDTH
    }

    fn at(&self, i: usize, k: usize) -> &[f64] {
        &self.data[i * self.width() + k * SLOT_WIDTH..][..SLOT_WIDTH]
    }

    pub fn logit(&self, i: usize, k: usize) -> f64 {
        self.at(i, k)[0]
    }

    pub fn offset(&self, i: usize, k: usize) -> [f64; 3] {
        let s = self.at(i, k);
        [s[1], s[2], s[3]]
    }

    /// Unnormalised `(w, x, y, z)`.
    pub fn quaternion(&self, i: usize, k: usize) -> [f64; 4] {
        let s = self.at(i, k);
        [s[4], s[5], s[6], s[7]]
    }
}

#[derive(Debug, Clone)]
pub struct ActorTrace {
    input: Tensor,
    z1: Tensor,
    z2: Tensor,
    pool_args: [Vec<usize>; POOLS],
    cat: Tensor,
    g1: Tensor,
    pub output: ActorOutput,
}

/// Mean of the masked points (all points when none is marked). Coordinates
/// are summed in sorted order so the result does not depend on point order.
pub fn cloud_centre(cloud: &PointCloud, mask: &[bool]) -> [f64; 3] {
    let any = mask.iter().any(|m| *m);
    let mut centre = [0.0; 3];
    for (c, out) in centre.iter_mut().enumerate() {
        let mut vals: Vec<f64> = cloud
            .points
            .iter()
            .zip(mask)
            .filter(|(_, m)| !any || **m)
            .map(|(p, _)| p.xyz[c])
            .collect();
        if vals.is_empty() {
            continue;
        }
        vals.sort_by(f64::total_cmp);
        *out = vals.iter().sum::<f64>() / vals.len() as f64;
    }
    centre
}

/// Column-wise max over the masked rows (all rows when none is masked);
/// ties go to the lowest row.
fn masked_max_pool(x: &Tensor, mask: &[bool]) -> (Vec<f64>, Vec<usize>) {
    if !mask.iter().any(|m| *m) {
        return max_pool_rows(x);
    }
    let c = x.shape()[1];
    let mut best = vec![f64::NEG_INFINITY; c];
    let mut arg = vec![0usize; c];
    for (i, row) in x.rows().enumerate().filter(|(i, _)| mask[*i]) {
        for j in 0..c {
            if row[j] > best[j] {
                best[j] = row[j];
                arg[j] = i;
            }
        }
    }
    (best, arg)
}

impl ActorModel {
    pub fn new(config: ActorConfig) -> Result<Self, NnError> {
        if config.k == 0 {
            return Err(NnError::InvalidConfig("K must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut h2 = Linear::new(&mut rng, config.head, config.k * SLOT_WIDTH, true);
        for w in h2.weight.data_mut().iter_mut() {
            *w *= 0.1;
        }
        if let Some(b) = h2.bias.as_mut() {
            for k in 0..config.k {
                b.data_mut()[k * SLOT_WIDTH + 4] = 1.0;
            }
        }
        Ok(Self {
            l1: Linear::new(&mut rng, INPUT_WIDTH, config.hidden, true),
            l2: Linear::new(&mut rng, config.hidden, config.feature, true),
            h1: Linear::new(&mut rng, (POOLS + 1) * config.feature, config.head, true),
            h2,
            config,
        })
    }

    fn features(&self, cloud: &PointCloud, mask: &[bool]) -> Tensor {
        let centre = cloud_centre(cloud, mask);
        let s = self.config.position_scale;
        let mut data = Vec::with_capacity(cloud.len() * INPUT_WIDTH);
        for (p, m) in cloud.points.iter().zip(mask) {
            data.extend([
                (p.xyz[0] - centre[0]) / s,
                (p.xyz[1] - centre[1]) / s,
                (p.xyz[2] - centre[2]) / s,
                p.rgb[0],
                p.rgb[1],
                p.rgb[2],
                if *m { 1.0 } else { 0.0 },
            ]);
        }
        Tensor::from_vec(&[cloud.len(), INPUT_WIDTH], data).expect("shape")
    }

    pub fn forward(&self, cloud: &PointCloud, mask: &[bool]) -> Result<ActorTrace, ActingError> {
        if cloud.is_empty() {
            return Err(ActingError::EmptyCloud);
        }
        if mask.len() != cloud.len() {
            return Err(NnError::ShapeMismatch(format!(
                "mask has {} entries for {} points",
                mask.len(),
                cloud.len()
            ))
            .into());
        }
        let n = cloud.len();
        let f = self.config.feature;
        let input = self.features(cloud, mask);
        let z1 = relu(&self.l1.forward(&input)?);
        let z2 = relu(&self.l2.forward(&z1)?);
        let centre = cloud_centre(cloud, mask);
        let r2 = self.config.context_radius.powi(2);
        let near: Vec<bool> = cloud
            .points
            .iter()
            .map(|p| (0..3).map(|c| (p.xyz[c] - centre[c]).powi(2)).sum::<f64>() <= r2)
            .collect();
        let (global, a0) = max_pool_rows(&z2);
        let (masked, a1) = masked_max_pool(&z2, mask);
        let (context, a2) = masked_max_pool(&z2, &near);
        let mut cat = Vec::with_capacity(n * (POOLS + 1) * f);
        for row in z2.rows() {
            cat.extend_from_slice(row);
            cat.extend_from_slice(&global);
            cat.extend_from_slice(&masked);
            cat.extend_from_slice(&context);
        }
        let cat = Tensor::from_vec(&[n, (POOLS + 1) * f], cat)?;
        let g1 = relu(&self.h1.forward(&cat)?);
        let mut out = self.h2.forward(&g1)?.into_data();
        let width = self.config.k * SLOT_WIDTH;
        for (row, p) in out.chunks_exact_mut(width).zip(&cloud.points) {
            for slot in row.chunks_exact_mut(SLOT_WIDTH) {
                for c in 0..3 {
                    slot[1 + c] = slot[1 + c] * self.config.offset_scale + centre[c] - p.xyz[c];
                }
            }
        }
        Ok(ActorTrace {
            input,
            z1,
            z2,
            pool_args: [a0, a1, a2],
            cat,
            g1,
            output: ActorOutput {
                k: self.config.k,
                rows: n,
                data: out,
            },
        })
    }

    /// Parameter gradients from the gradient with respect to the output grid.
    pub fn backward(
        &self,
        trace: &ActorTrace,
        grad_output: &[f64],
    ) -> Result<Vec<Tensor>, NnError> {
        let n = trace.output.rows;
        let width = self.config.k * SLOT_WIDTH;
        let f = self.config.feature;
        if grad_output.len() != n * width {
            return Err(NnError::ShapeMismatch(format!(
                "output gradient has {} values, expected {}",
                grad_output.len(),
                n * width
            )));
        }
        let mut g = grad_output.to_vec();
        for row in g.chunks_exact_mut(width) {
            for slot in row.chunks_exact_mut(SLOT_WIDTH) {
                for v in &mut slot[1..4] {
                    *v *= self.config.offset_scale;
                }
            }
        }
        let g = Tensor::from_vec(&[n, width], g)?;
        let (dg1, gh2) = self.h2.backward(&trace.g1, &g)?;
        let (dcat, gh1) = self
            .h1
            .backward(&trace.cat, &relu_backward(&trace.g1, &dg1))?;
        let mut dz2 = vec![0.0; n * f];
        let mut dpool = vec![0.0; POOLS * f];
        for (row, out) in dcat.rows().zip(dz2.chunks_exact_mut(f)) {
            out.copy_from_slice(&row[..f]);
            for (a, b) in dpool.iter_mut().zip(&row[f..]) {
                *a += b;
            }
        }
        for (args, d) in trace.pool_args.iter().zip(dpool.chunks_exact(f)) {
            for (j, &i) in args.iter().enumerate() {
                dz2[i * f + j] += d[j];
            }
        }
        let dz2 = Tensor::from_vec(&[n, f], dz2)?;
        let (dz1, gl2) = self
            .l2
            .backward(&trace.z1, &relu_backward(&trace.z2, &dz2))?;
        let (_, gl1) = self
            .l1
            .backward(&trace.input, &relu_backward(&trace.z1, &dz1))?;
        let mut grads = gl1.into_vec();
        grads.extend(gl2.into_vec());
        grads.extend(gh1.into_vec());
        grads.extend(gh2.into_vec());
        Ok(grads)
    }

    pub fn to_checkpoint_file(&self) -> Checkpoint {
        self.to_checkpoint(
            CHECKPOINT_KIND,
            self.config.seed,
            serde_json::json!({ "model": self.config }),
        )
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, NnError> {
        ck.expect_kind(CHECKPOINT_KIND)?;
        let config: ActorConfig = serde_json::from_value(ck.config["model"].clone())
            .map_err(|e| NnError::Format(e.to_string()))?;
        let mut model = Self::new(config)?;
        ck.load_into(model.params_mut())?;
        Ok(model)
    }
}

/// Per-point predictions for a cloud and its keypoint mask.
pub fn actor_forward(
    model: &ActorModel,
    cloud: &PointCloud,
    mask: &[bool],
) -> Result<ActorOutput, ActingError> {
    Ok(model.forward(cloud, mask)?.output)
}

impl Parameters for ActorModel {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, l) in [
            ("l1", &self.l1),
            ("l2", &self.l2),
            ("h1", &self.h1),
            ("h2", &self.h2),
        ] {
            out.push((format!("{name}.weight"), &l.weight));
            if let Some(b) = &l.bias {
                out.push((format!("{name}.bias"), b));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = self.l1.params_mut();
        out.extend(self.l2.params_mut());
        out.extend(self.h1.params_mut());
        out.extend(self.h2.params_mut());
        out
    }
}
