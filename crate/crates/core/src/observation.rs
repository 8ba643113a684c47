//! Sensor data: RGB frames, depth maps and fused point clouds.

use image::RgbImage;
use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::geometry::Camera;
use crate::nn::Tensor;

/// Camera-frame z depth per pixel in meters; 0 marks a missing measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, depth: f64) {
        self.data[v * self.width + u] = depth;
    }

    pub fn is_valid(&self, u: usize, v: usize) -> bool {
        let d = self.get(u, v);
        d.is_finite() && d > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data
            .iter()
            .filter(|d| d.is_finite() && **d > 0.0)
            .count()
    }

    /// (min, max, mean) over valid pixels.
    pub fn stats(&self) -> Option<(f64, f64, f64)> {
        let valid: Vec<f64> = self
            .data
            .iter()
            .copied()
            .filter(|d| d.is_finite() && *d > 0.0)
            .collect();
        if valid.is_empty() {
            return None;
        }
        let min = valid.iter().copied().fold(f64::INFINITY, f64::min);
        let max = valid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((min, max, valid.iter().sum::<f64>() / valid.len() as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudPoint {
    pub xyz: [f64; 3],
    pub rgb: [f64; 3],
}

impl CloudPoint {
    pub fn position(&self) -> Point3<f64> {
        Point3::new(self.xyz[0], self.xyz[1], self.xyz[2])
    }
}

/// Colored points in the robot base frame, colors in [0, 1].
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<CloudPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<CloudPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.points
            .iter()
            .all(|p| p.xyz.iter().chain(&p.rgb).all(|v| v.is_finite()))
    }

    /// Deprojects every valid pixel of `depth`, colouring it from `image`.
    pub fn from_depth(depth: &DepthMap, image: &RgbImage, camera: &Camera) -> Self {
        let mut points = Vec::new();
        for v in 0..depth.height {
            for u in 0..depth.width {
                if !depth.is_valid(u, v) {
                    continue;
                }
                let Ok(p) = camera.deproject(u as f64, v as f64, depth.get(u, v)) else {
                    continue;
                };
                let c = image.get_pixel(u as u32, v as u32).0;
                points.push(CloudPoint {
                    xyz: [p.x, p.y, p.z],
                    rgb: [
                        c[0] as f64 / 255.0,
                        c[1] as f64 / 255.0,
                        c[2] as f64 / 255.0,
                    ],
                });
            }
        }
        Self { points }
    }

    /// Flat `[x, y, z, r, g, b]` rows.
    pub fn to_rows(&self) -> Vec<f64> {
        self.points
            .iter()
            .flat_map(|p| p.xyz.iter().chain(&p.rgb).copied())
            .collect()
    }

    pub fn from_rows(rows: &[f64]) -> Option<Self> {
        if !rows.len().is_multiple_of(6) {
            return None;
        }
        Some(Self {
            points: rows
                .chunks_exact(6)
                .map(|r| CloudPoint {
                    xyz: [r[0], r[1], r[2]],
                    rgb: [r[3], r[4], r[5]],
                })
                .collect(),
        })
    }
}

/// One multi-camera snapshot of the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Image from the grounding camera.
    pub image: RgbImage,
    pub cameras: Vec<Camera>,
    pub depths: Vec<DepthMap>,
    pub grounding_camera: usize,
    pub cloud: PointCloud,
}

impl Observation {
    pub fn grounding_depth(&self) -> &DepthMap {
        &self.depths[self.grounding_camera]
    }

    pub fn grounding(&self) -> &Camera {
        &self.cameras[self.grounding_camera]
    }
}

/// `[3, H, W]` tensor with channels scaled to [0, 1].
pub fn image_to_tensor(image: &RgbImage) -> Tensor {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut data = vec![0.0; 3 * w * h];
    for (i, px) in image.pixels().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = px.0[c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data).expect("length matches shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraExtrinsics, CameraIntrinsics};

    #[test]
    fn cloud_from_depth_skips_holes_and_reprojects() {
        let intr = CameraIntrinsics::new(50.0, 50.0, 3.5, 2.5, 8, 6).unwrap();
        let cam = Camera {
            intrinsics: intr,
            extrinsics: CameraExtrinsics::identity(),
        };
        let mut depth = DepthMap::new(8, 6);
        depth.set(1, 1, 0.5);
        depth.set(4, 3, 1.25);
        let image = RgbImage::from_pixel(8, 6, image::Rgb([255, 0, 51]));
        let cloud = PointCloud::from_depth(&depth, &image, &cam);
        assert_eq!(cloud.len(), 2);
        let p = cam.project(&cloud.points[1].position()).unwrap();
        assert!(
            (p.u - 4.0).abs() < 1e-12
                && (p.v - 3.0).abs() < 1e-12
                && (p.depth - 1.25).abs() < 1e-12
        );
        assert_eq!(cloud.points[0].rgb, [1.0, 0.0, 0.2]);
        assert_eq!(PointCloud::from_rows(&cloud.to_rows()).unwrap(), cloud);
    }

    #[test]
    fn image_tensor_is_channel_major() {
        let mut image = RgbImage::new(2, 1);
        image.put_pixel(1, 0, image::Rgb([0, 255, 0]));
        let t = image_to_tensor(&image);
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }
}
