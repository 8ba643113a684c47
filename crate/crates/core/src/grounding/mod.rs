//! Language-conditioned keypoint grounding: image + instruction → heatmap.

mod augment;
mod model;
mod text;
mod train;

pub use augment::{apply_augmentation, augment_sample, AugmentParams};
pub use model::{GroundingConfig, GroundingModel, GroundingTrace};
pub use text::{tokenize, with_skill_context, Instruction, Vocabulary, OOV_TOKEN};
pub use train::{
    evaluate_pixel_error, train_grounding, GroundingTrainConfig, GroundingTrainReport,
};

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{NnError, BCE_CLAMP};

/// Gaussian target width used when none is configured.
pub const DEFAULT_SIGMA: f64 = 4.0;

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("instruction is empty")]
    EmptyInstruction,
    #[error("image is {got_w}x{got_h}, model expects {want_w}x{want_h}")]
    ResolutionMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
    #[error("no augmentation kept the label inside the frame after {0} attempts")]
    AugmentationExhausted(usize),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("label pixel ({0}, {1}) lies outside the image")]
    LabelOutOfBounds(f64, f64),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// One supervised example: image, instruction and the target pixel `[u, v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundingSample {
    pub image: RgbImage,
    pub instruction: String,
    pub pixel: [f64; 2],
    pub skill: String,
}

impl GroundingSample {
    pub fn pixel_in_bounds(&self) -> bool {
        pixel_in_frame(
            self.pixel,
            self.image.width() as usize,
            self.image.height() as usize,
        )
    }
}

pub(crate) fn pixel_in_frame(p: [f64; 2], width: usize, height: usize) -> bool {
    p[0] >= -0.5 && p[1] >= -0.5 && p[0] < width as f64 - 0.5 && p[1] < height as f64 - 0.5
}

/// Per-pixel likelihoods on a `width × height` grid, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[v * self.width + u] = value;
    }

    /// Grayscale rendering, 0 → black and 1 → white.
    pub fn to_image(&self) -> image::GrayImage {
        image::GrayImage::from_fn(self.width as u32, self.height as u32, |u, v| {
            let x = self.get(u as usize, v as usize).clamp(0.0, 1.0);
            image::Luma([(x * 255.0).round() as u8])
        })
    }
}

/// Pixel `(u, v)` of the largest cell; ties go to the lowest row-major index.
pub fn argmax_keypoint(h: &Heatmap) -> (usize, usize) {
    let mut best = 0;
    for (i, v) in h.data.iter().enumerate() {
        if *v > h.data[best] {
            best = i;
        }
    }
    (best % h.width, best / h.width)
}

/// Unnormalised Gaussian bump with peak 1 at `pixel`.
pub fn gaussian_target(pixel: [f64; 2], sigma: f64, width: usize, height: usize) -> Heatmap {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut data = Vec::with_capacity(width * height);
    for v in 0..height {
        let dv = v as f64 - pixel[1];
        for u in 0..width {
            let du = u as f64 - pixel[0];
            data.push((-(du * du + dv * dv) * inv).exp());
        }
    }
    Heatmap {
        width,
        height,
        data,
    }
}

/// Mean per-pixel binary cross-entropy.
pub fn bce_heatmap_loss(pred: &Heatmap, target: &Heatmap) -> Result<f64, GroundingError> {
    if pred.width != target.width || pred.height != target.height {
        return Err(NnError::ShapeMismatch(format!(
            "heatmap {}x{} vs target {}x{}",
            pred.width, pred.height, target.width, target.height
        ))
        .into());
    }
    Ok(crate::nn::binary_cross_entropy(&pred.data, &target.data)?)
}

/// Lower bound of [`bce_heatmap_loss`] for a given target (its mean entropy).
pub fn bce_floor(target: &Heatmap) -> f64 {
    let n = target.data.len().max(1) as f64;
    target
        .data
        .iter()
        .map(|t| {
            let p = t.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_keypoint(&Heatmap::zeros(160, 120)), (0, 0));
        let mut h = Heatmap::zeros(160, 120);
        h.set(37, 91, 1.0);
        assert_eq!(argmax_keypoint(&h), (37, 91));
    }

    #[test]
    fn argmax_matches_exhaustive_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let (w, h) = (rng.gen_range(1..40), rng.gen_range(1..30));
            let mut map = Heatmap::zeros(w, h);
            for x in map.data.iter_mut() {
                *x = (rng.gen_range(0..20) as f64) / 19.0;
            }
            let mut want = (0, 0);
            let mut best = f64::NEG_INFINITY;
            for v in 0..h {
                for u in 0..w {
                    if map.get(u, v) > best {
                        best = map.get(u, v);
                        want = (u, v);
                    }
                }
            }
            assert_eq!(argmax_keypoint(&map), want);
        }
    }

    #[test]
    fn gaussian_closed_forms() {
        let g = gaussian_target([50.0, 60.0], 4.0, 160, 120);
        assert_eq!(g.get(50, 60), 1.0);
        assert!((g.get(54, 60) - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.get(50, 56) - 0.6065306597126334).abs() < 1e-15);
    }

    #[test]
    fn argmax_inverts_gaussian_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let p = (rng.gen_range(0..160usize), rng.gen_range(0..120usize));
            let g = gaussian_target([p.0 as f64, p.1 as f64], DEFAULT_SIGMA, 160, 120);
            assert_eq!(argmax_keypoint(&g), p);
        }
    }

    #[test]
    fn bce_closed_forms() {
        let half = Heatmap {
            width: 4,
            height: 2,
            data: vec![0.5; 8],
        };
        let t = gaussian_target([1.0, 1.0], 1.0, 4, 2);
        assert!((bce_heatmap_loss(&half, &t).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        let binary = Heatmap {
            width: 4,
            height: 2,
            data: vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0],
        };
        assert!(bce_heatmap_loss(&binary, &binary).unwrap() <= 1.1e-7);
        assert!(bce_heatmap_loss(&half, &Heatmap::zeros(2, 4)).is_err());
    }

    #[test]
    fn bce_minimised_at_target() {
        let t = gaussian_target([2.0, 1.0], 1.5, 5, 3);
        let at = bce_heatmap_loss(&t, &t).unwrap();
        assert!((at - bce_floor(&t)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let mut p = t.clone();
            let i = rng.gen_range(0..p.data.len());
            p.data[i] = (p.data[i] + rng.gen_range(-0.2..0.2)).clamp(0.01, 0.99);
            if p.data[i] != t.data[i] {
                assert!(bce_heatmap_loss(&p, &t).unwrap() > at);
            }
        }
    }
}
