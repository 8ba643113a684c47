//! Ray-cast RGB-D rendering and observation assembly.

use std::io::Write;
use std::path::Path;

use image::{Rgb, RgbImage};
use manip_core::geometry::Camera;
use manip_core::observation::{CloudPoint, DepthMap, Observation, PointCloud};
use nalgebra::{Point3, Vector3};

use crate::scene::{SceneSpec, TableSpec, WorldState};
use crate::shapes::{PartId, Primitive};

pub const TABLE_COLOR: [u8; 3] = [196, 178, 150];
pub const FLOOR_COLOR: [u8; 3] = [88, 88, 94];
/// Points outside this box (min, max) are dropped from the fused cloud.
pub const WORKSPACE: ([f64; 3], [f64; 3]) = ([0.2, -0.5, -0.01], [1.0, 0.5, 0.6]);

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub image: RgbImage,
    pub depth: DepthMap,
    pub ids: Vec<Option<PartId>>,
}

impl Frame {
    pub fn id(&self, u: usize, v: usize) -> Option<PartId> {
        self.ids[v * self.depth.width + u]
    }
}

fn light() -> Vector3<f64> {
    Vector3::new(0.3, -0.4, 1.0).normalize()
}

fn shade(color: [u8; 3], normal: &Vector3<f64>) -> Rgb<u8> {
    let k = 0.35 + 0.65 * normal.dot(&light()).max(0.0);
    Rgb(color.map(|c| (c as f64 * k).round().clamp(0.0, 255.0) as u8))
}

fn pixel_ray(camera: &Camera, u: f64, v: f64) -> (Point3<f64>, Vector3<f64>) {
    let k = &camera.intrinsics;
    let iso = camera.extrinsics.camera_to_base();
    let d_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    (Point3::from(iso.translation.vector), iso.rotation * d_cam)
}

/// Nearest primitive along the pixel ray. Because the camera-frame ray has
/// unit z, the hit parameter is the depth.
pub fn cast(
    prims: &[Primitive],
    camera: &Camera,
    u: f64,
    v: f64,
) -> Option<(f64, Vector3<f64>, usize)> {
    let (o, d) = pixel_ray(camera, u, v);
    let mut best: Option<(f64, Vector3<f64>, usize)> = None;
    for (i, p) in prims.iter().enumerate() {
        if let Some(h) = p.intersect(&o, &d, 1e-9) {
            if best.is_none_or(|(t, _, _)| h.t < t) {
                best = Some((h.t, h.normal, i));
            }
        }
    }
    best
}

fn background(camera: &Camera, table: &TableSpec, u: f64, v: f64) -> Rgb<u8> {
    let (o, d) = pixel_ray(camera, u, v);
    if d.z < 0.0 {
        let t = -o.z / d.z;
        let (x, y) = (o.x + d.x * t, o.y + d.y * t);
        if x >= table.x[0] && x <= table.x[1] && y >= table.y[0] && y <= table.y[1] {
            return shade(TABLE_COLOR, &Vector3::z());
        }
    }
    Rgb(FLOOR_COLOR)
}

pub fn render_primitives(prims: &[Primitive], camera: &Camera, table: &TableSpec) -> Frame {
    let (w, h) = (camera.intrinsics.width, camera.intrinsics.height);
    let mut image = RgbImage::new(w as u32, h as u32);
    let mut depth = DepthMap::new(w, h);
    let mut ids = vec![None; w * h];
    for v in 0..h {
        for u in 0..w {
            let (uf, vf) = (u as f64, v as f64);
            let px = match cast(prims, camera, uf, vf) {
                Some((t, n, i)) => {
                    depth.set(u, v, t);
                    ids[v * w + u] = Some(prims[i].id);
                    let (_, d) = pixel_ray(camera, uf, vf);
                    let n = if n.dot(&d) > 0.0 { -n } else { n };
                    shade(prims[i].color, &n)
                }
                None => background(camera, table, uf, vf),
            };
            image.put_pixel(u as u32, v as u32, px);
        }
    }
    Frame { image, depth, ids }
}

pub fn render(state: &WorldState, spec: &SceneSpec, camera: &Camera) -> Frame {
    render_primitives(&state.primitives(spec), camera, &spec.table)
}

pub fn in_workspace(p: &[f64; 3]) -> bool {
    (0..3).all(|i| p[i] >= WORKSPACE.0[i] && p[i] <= WORKSPACE.1[i])
}

/// Renders every camera and fuses the deprojected pixels into one cloud.
pub fn observe(state: &WorldState, spec: &SceneSpec) -> Observation {
    let frames: Vec<Frame> = spec
        .cameras
        .iter()
        .map(|c| render(state, spec, c))
        .collect();
    observation_from_frames(spec, frames)
}

pub fn observation_from_frames(spec: &SceneSpec, frames: Vec<Frame>) -> Observation {
    let mut points: Vec<CloudPoint> = Vec::new();
    for (frame, camera) in frames.iter().zip(&spec.cameras) {
        let cloud = PointCloud::from_depth(&frame.depth, &frame.image, camera);
        points.extend(cloud.points.into_iter().filter(|p| in_workspace(&p.xyz)));
    }
    let image = frames[spec.grounding_camera].image.clone();
    Observation {
        image,
        cameras: spec.cameras.clone(),
        depths: frames.into_iter().map(|f| f.depth).collect(),
        grounding_camera: spec.grounding_camera,
        cloud: PointCloud::new(points),
    }
}

/// Writes a little-endian single-channel PFM (bottom-to-top rows).
pub fn write_pfm(depth: &DepthMap, path: &Path) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "Pf\n{} {}\n-1.0\n", depth.width, depth.height)?;
    for v in (0..depth.height).rev() {
        for u in 0..depth.width {
            f.write_all(&(depth.get(u, v) as f32).to_le_bytes())?;
        }
    }
    f.flush()
}
