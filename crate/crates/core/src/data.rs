//! On-disk demonstration datasets, supplemental grounding labels and splits.

use std::path::{Path, PathBuf};

use image::RgbImage;
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::acting::{annotate_keypoint_mask, ActingError, TrainingExample};
use crate::geometry::{Camera, CameraExtrinsics, CameraIntrinsics, Pose};
use crate::grounding::{with_skill_context, GroundingSample};
use crate::observation::{DepthMap, PointCloud};
use crate::skills::SkillLabel;

pub const DATASET_VERSION: u32 = 1;
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;
const BLOB_MAGIC: &[u8; 8] = b"MNPDEMO\0";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("corrupt dataset: {0}")]
    CorruptDataset(String),
    #[error("dataset version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("dataset is empty")]
    Empty,
    #[error("demos disagree on skill or waypoint count")]
    Inconsistent,
    #[error("requested {requested} supplemental labels, only {available} available")]
    InsufficientSupplemental { requested: usize, available: usize },
    #[error("ratio must be finite and non-negative, got {0}")]
    InvalidRatio(f64),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// One scripted demonstration: the initial observation seen through the
/// grounding camera, the fused cloud, the expert waypoints and the label pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct SkillDemo {
    pub skill: SkillLabel,
    pub instruction: String,
    pub image: RgbImage,
    pub camera: Camera,
    pub depth: DepthMap,
    pub cloud: PointCloud,
    pub waypoints: Vec<Pose>,
    pub label_pixel: [f64; 2],
}

impl SkillDemo {
    /// Grounding sample with the skill label appended to the instruction.
    pub fn grounding_sample(&self) -> GroundingSample {
        GroundingSample {
            image: self.image.clone(),
            instruction: with_skill_context(&self.instruction, self.skill.as_str()),
            pixel: self.label_pixel,
            skill: self.skill.as_str().to_string(),
        }
    }

    /// Label pixel rounded to the nearest in-frame pixel.
    pub fn label_keypoint(&self) -> (usize, usize) {
        let clamp = |x: f64, n: usize| (x.round().max(0.0) as usize).min(n.saturating_sub(1));
        (
            clamp(self.label_pixel[0], self.depth.width),
            clamp(self.label_pixel[1], self.depth.height),
        )
    }

    /// Actor example with the keypoint mask annotated around the label pixel.
    pub fn training_example(
        &self,
        radius: f64,
    ) -> std::result::Result<TrainingExample, ActingError> {
        self.training_example_at(self.label_keypoint(), radius)
    }

    /// Actor example with the mask annotated around an arbitrary pixel.
    pub fn training_example_at(
        &self,
        keypoint: (usize, usize),
        radius: f64,
    ) -> std::result::Result<TrainingExample, ActingError> {
        let mask =
            annotate_keypoint_mask(&self.cloud, &self.depth, keypoint, radius, &self.camera)?;
        Ok(TrainingExample {
            cloud: self.cloud.clone(),
            mask: mask.values,
            waypoints: self.waypoints.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Shuffled assignment with `round(n × val_fraction)` validation samples.
pub fn split_assignment(n: usize, val_fraction: f64, seed: u64) -> Vec<Split> {
    let n_val = ((n as f64 * val_fraction).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Split::Train; n];
    for &i in &order[..n_val] {
        out[i] = Split::Val;
    }
    out
}

pub fn partition<T: Clone>(items: &[T], splits: &[Split]) -> (Vec<T>, Vec<T>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for (item, s) in items.iter().zip(splits) {
        match s {
            Split::Train => train.push(item.clone()),
            Split::Val => val.push(item.clone()),
        }
    }
    (train, val)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub instruction: String,
    pub split: Split,
    pub blob_sha256: String,
    pub image_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub skill: SkillLabel,
    pub count: usize,
    pub k: usize,
    pub seed: u64,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn splits(&self) -> Vec<Split> {
        self.samples.iter().map(|s| s.split).collect()
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

struct BlobWriter(Vec<u8>);

impl BlobWriter {
    fn f64s(&mut self, xs: &[f64]) {
        for x in xs {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }

    fn count(&mut self, n: usize) {
        self.0.extend_from_slice(&(n as u64).to_le_bytes());
    }
}

struct BlobReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> BlobReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| DataError::CorruptDataset("blob truncated".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn count(&mut self, limit: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n > limit {
            return Err(DataError::CorruptDataset(format!(
                "count {n} exceeds blob size"
            )));
        }
        Ok(n)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n
            .checked_mul(8)
            .ok_or_else(|| DataError::CorruptDataset("count overflow".into()))?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn encode_blob(demo: &SkillDemo) -> Vec<u8> {
    let mut w = BlobWriter(BLOB_MAGIC.to_vec());
    w.0.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let intr = &demo.camera.intrinsics;
    w.count(intr.width);
    w.count(intr.height);
    w.f64s(&[intr.fx, intr.fy, intr.cx, intr.cy]);
    let iso = demo.camera.extrinsics.camera_to_base();
    let q = iso.rotation.quaternion();
    let t = iso.translation.vector;
    w.f64s(&[q.w, q.i, q.j, q.k, t.x, t.y, t.z]);
    w.f64s(&demo.label_pixel);
    w.count(demo.depth.width);
    w.count(demo.depth.height);
    w.f64s(&demo.depth.data);
    w.count(demo.cloud.len());
    w.f64s(&demo.cloud.to_rows());
    w.count(demo.waypoints.len());
    for p in &demo.waypoints {
        w.f64s(&p.to_array());
    }
    w.0
}

fn decode_blob(
    bytes: &[u8],
    skill: SkillLabel,
    instruction: String,
    image: RgbImage,
) -> Result<SkillDemo> {
    let mut r = BlobReader { bytes, pos: 0 };
    if r.take(8)? != BLOB_MAGIC {
        return Err(DataError::CorruptDataset("bad blob magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != DATASET_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let limit = bytes.len();
    let (width, height) = (r.count(limit)?, r.count(limit)?);
    let k = r.f64s(4)?;
    let intrinsics = CameraIntrinsics::new(k[0], k[1], k[2], k[3], width, height)
        .map_err(|e| DataError::CorruptDataset(e.to_string()))?;
    let e = r.f64s(7)?;
    let extrinsics = CameraExtrinsics::new([e[0], e[1], e[2], e[3]], [e[4], e[5], e[6]])
        .map_err(|e| DataError::CorruptDataset(e.to_string()))?;
    let px = r.f64s(2)?;
    let (dw, dh) = (r.count(limit)?, r.count(limit)?);
    let depth = DepthMap {
        width: dw,
        height: dh,
        data: r.f64s(
            dw.checked_mul(dh)
                .ok_or_else(|| DataError::CorruptDataset("depth size".into()))?,
        )?,
    };
    let n = r.count(limit)?;
    let cloud = PointCloud::from_rows(&r.f64s(n * 6)?).expect("row count is a multiple of 6");
    let kw = r.count(limit)?;
    let mut waypoints = Vec::with_capacity(kw);
    for _ in 0..kw {
        let a = r.f64s(7)?;
        let q = UnitQuaternion::new_unchecked(Quaternion::new(a[3], a[4], a[5], a[6]));
        waypoints.push(Pose::new(Vector3::new(a[0], a[1], a[2]), q));
    }
    if r.pos != bytes.len() {
        return Err(DataError::CorruptDataset("trailing bytes in blob".into()));
    }
    Ok(SkillDemo {
        skill,
        instruction,
        image,
        camera: Camera {
            intrinsics,
            extrinsics,
        },
        depth,
        cloud,
        waypoints,
        label_pixel: [px[0], px[1]],
    })
}

fn png_bytes(image: &RgbImage) -> Result<Vec<u8>> {
    let mut buf = std::io::Cursor::new(Vec::new());
    image.write_to(&mut buf, image::ImageFormat::Png)?;
    Ok(buf.into_inner())
}

fn demo_paths(dir: &Path, i: usize) -> (PathBuf, PathBuf) {
    (
        dir.join("demos").join(format!("{i:04}.bin")),
        dir.join("images").join(format!("{i:04}.png")),
    )
}

/// Writes `manifest.json`, `demos/NNNN.bin` and `images/NNNN.png` under `dir`.
pub fn save_dataset(demos: &[SkillDemo], dir: &Path, seed: u64) -> Result<DatasetManifest> {
    let first = demos.first().ok_or(DataError::Empty)?;
    if demos
        .iter()
        .any(|d| d.skill != first.skill || d.waypoints.len() != first.waypoints.len())
    {
        return Err(DataError::Inconsistent);
    }
    std::fs::create_dir_all(dir.join("demos"))?;
    std::fs::create_dir_all(dir.join("images"))?;
    let splits = split_assignment(demos.len(), DEFAULT_VAL_FRACTION, seed);
    let mut samples = Vec::with_capacity(demos.len());
    for (i, (demo, split)) in demos.iter().zip(&splits).enumerate() {
        let (blob_path, image_path) = demo_paths(dir, i);
        let blob = encode_blob(demo);
        let png = png_bytes(&demo.image)?;
        std::fs::write(&blob_path, &blob)?;
        std::fs::write(&image_path, &png)?;
        samples.push(SampleEntry {
            instruction: demo.instruction.clone(),
            split: *split,
            blob_sha256: sha256_hex(&blob),
            image_sha256: sha256_hex(&png),
        });
    }
    let manifest = DatasetManifest {
        version: DATASET_VERSION,
        skill: first.skill,
        count: demos.len(),
        k: first.waypoints.len(),
        seed,
        samples,
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<(Vec<SkillDemo>, DatasetManifest)> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| DataError::CorruptDataset(format!("manifest: {e}")))?;
    let version = raw["version"].as_u64().unwrap_or(0) as u32;
    if version != DATASET_VERSION {
        return Err(DataError::VersionMismatch {
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let manifest: DatasetManifest = serde_json::from_value(raw)
        .map_err(|e| DataError::CorruptDataset(format!("manifest: {e}")))?;
    if manifest.count == 0 || manifest.samples.len() != manifest.count {
        return Err(DataError::CorruptDataset("sample count mismatch".into()));
    }
    let mut demos = Vec::with_capacity(manifest.count);
    for (i, entry) in manifest.samples.iter().enumerate() {
        let (blob_path, image_path) = demo_paths(dir, i);
        let blob = std::fs::read(&blob_path)?;
        let png = std::fs::read(&image_path)?;
        if sha256_hex(&blob) != entry.blob_sha256 {
            return Err(DataError::CorruptDataset(format!(
                "checksum mismatch for {}",
                blob_path.display()
            )));
        }
        if sha256_hex(&png) != entry.image_sha256 {
            return Err(DataError::CorruptDataset(format!(
                "checksum mismatch for {}",
                image_path.display()
            )));
        }
        let image = image::load_from_memory_with_format(&png, image::ImageFormat::Png)?.to_rgb8();
        let demo = decode_blob(&blob, manifest.skill, entry.instruction.clone(), image)?;
        if demo.waypoints.len() != manifest.k {
            return Err(DataError::CorruptDataset(format!(
                "demo {i} has {} waypoints",
                demo.waypoints.len()
            )));
        }
        demos.push(demo);
    }
    Ok((demos, manifest))
}

/// One line of a grounding label file; `image` is relative to the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub instruction: String,
    pub pixel: [f64; 2],
    pub image: String,
    pub skill: String,
}

/// Writes `<name>.jsonl` plus one PNG per sample into `dir`.
pub fn save_grounding_samples(
    samples: &[GroundingSample],
    dir: &Path,
    name: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut lines = String::new();
    for (i, s) in samples.iter().enumerate() {
        let file = format!("{name}_{i:05}.png");
        std::fs::write(dir.join(&file), png_bytes(&s.image)?)?;
        let record = LabelRecord {
            instruction: s.instruction.clone(),
            pixel: s.pixel,
            image: file,
            skill: s.skill.clone(),
        };
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }
    let path = dir.join(format!("{name}.jsonl"));
    std::fs::write(&path, lines)?;
    Ok(path)
}

pub fn load_grounding_samples(path: &Path) -> Result<Vec<GroundingSample>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
    {
        let r: LabelRecord = serde_json::from_str(line)
            .map_err(|e| DataError::CorruptDataset(format!("{}:{}: {e}", path.display(), n + 1)))?;
        let image = image::open(dir.join(&r.image))?.to_rgb8();
        out.push(GroundingSample {
            image,
            instruction: r.instruction,
            pixel: r.pixel,
            skill: r.skill,
        });
    }
    Ok(out)
}

/// Every `*.jsonl` file in `dir`, in file-name order.
pub fn load_supplemental_dir(dir: &Path) -> Result<Vec<GroundingSample>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(load_grounding_samples(&f)?);
    }
    Ok(out)
}

/// Demo-derived samples from every skill followed by `round(ratio × originals)`
/// supplemental samples drawn without replacement.
pub fn build_grounding_dataset(
    demos: &[SkillDemo],
    supplemental: &[GroundingSample],
    ratio: f64,
    seed: u64,
) -> Result<Vec<GroundingSample>> {
    if !(ratio.is_finite() && ratio >= 0.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let mut out: Vec<GroundingSample> = demos.iter().map(SkillDemo::grounding_sample).collect();
    let requested = (ratio * out.len() as f64).round() as usize;
    if requested > supplemental.len() {
        return Err(DataError::InsufficientSupplemental {
            requested,
            available: supplemental.len(),
        });
    }
    let mut order: Vec<usize> = (0..supplemental.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out.extend(order[..requested].iter().map(|&i| supplemental[i].clone()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::CloudPoint;
    use nalgebra::Point3;
    use rand::Rng;

    pub(crate) fn synthetic_demo(rng: &mut ChaCha8Rng, skill: SkillLabel) -> SkillDemo {
        let (w, h) = (32usize, 24usize);
        let intrinsics = CameraIntrinsics::new(30.0, 30.0, 15.5, 11.5, w, h).unwrap();
        let extrinsics = CameraExtrinsics::look_at(
            Point3::new(0.1, 0.0, 0.7),
            Point3::new(0.5, rng.gen_range(-0.1..0.1), 0.0),
            Vector3::z(),
        );
        let mut depth = DepthMap::new(w, h);
        for d in depth.data.iter_mut() {
            *d = if rng.gen_bool(0.8) {
                rng.gen_range(0.4..0.9)
            } else {
                0.0
            };
        }
        let cloud = PointCloud::new(
            (0..rng.gen_range(1..200))
                .map(|_| CloudPoint {
                    xyz: [rng.gen(), rng.gen(), rng.gen()],
                    rgb: [rng.gen(), rng.gen(), rng.gen()],
                })
                .collect(),
        );
        SkillDemo {
            skill,
            instruction: format!("do {} #{}", skill, rng.gen::<u16>()),
            image: RgbImage::from_fn(w as u32, h as u32, |_, _| {
                image::Rgb([rng.gen(), rng.gen(), rng.gen()])
            }),
            camera: Camera {
                intrinsics,
                extrinsics,
            },
            depth,
            cloud,
            waypoints: vec![Pose::from_euler(
                rng.gen(),
                rng.gen(),
                rng.gen(),
                rng.gen(),
                rng.gen(),
                rng.gen(),
            )],
            label_pixel: [rng.gen_range(0.0..31.0), rng.gen_range(0.0..23.0)],
        }
    }

    fn tmp(name: &str) -> PathBuf {
        let d = std::env::temp_dir().join(format!("data-{name}-{}", std::process::id()));
        std::fs::remove_dir_all(&d).ok();
        d
    }

    fn bits(d: &SkillDemo) -> Vec<u64> {
        let mut v: Vec<u64> = d.depth.data.iter().map(|x| x.to_bits()).collect();
        v.extend(d.cloud.to_rows().iter().map(|x| x.to_bits()));
        v.extend(
            d.waypoints
                .iter()
                .flat_map(|p| p.to_array())
                .map(f64::to_bits),
        );
        v.extend(d.label_pixel.iter().map(|x| x.to_bits()));
        v
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let demos: Vec<SkillDemo> = (0..50)
            .map(|_| synthetic_demo(&mut rng, SkillLabel::Pick))
            .collect();
        let dir = tmp("roundtrip");
        let manifest = save_dataset(&demos, &dir, 7).unwrap();
        let (back, m2) = load_dataset(&dir).unwrap();
        assert_eq!(manifest, m2);
        assert_eq!(back, demos);
        for (a, b) in demos.iter().zip(&back) {
            assert_eq!(bits(a), bits(b));
        }
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn truncated_blob_is_corrupt() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let demos: Vec<SkillDemo> = (0..3)
            .map(|_| synthetic_demo(&mut rng, SkillLabel::Open))
            .collect();
        let dir = tmp("truncated");
        save_dataset(&demos, &dir, 0).unwrap();
        let blob = dir.join("demos/0001.bin");
        let bytes = std::fs::read(&blob).unwrap();
        std::fs::write(&blob, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            load_dataset(&dir),
            Err(DataError::CorruptDataset(_))
        ));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn truncated_blob_with_matching_checksum_is_corrupt() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let demo = synthetic_demo(&mut rng, SkillLabel::Open);
        let bytes = encode_blob(&demo);
        let r = decode_blob(
            &bytes[..bytes.len() - 8],
            demo.skill,
            String::new(),
            demo.image.clone(),
        );
        assert!(matches!(r, Err(DataError::CorruptDataset(_))));
    }

    #[test]
    fn version_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dir = tmp("version");
        save_dataset(&[synthetic_demo(&mut rng, SkillLabel::Close)], &dir, 0).unwrap();
        let path = dir.join("manifest.json");
        let text =
            std::fs::read_to_string(&path)
                .unwrap()
                .replacen("\"version\": 1", "\"version\": 9", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(
            load_dataset(&dir),
            Err(DataError::VersionMismatch {
                found: 9,
                expected: 1
            })
        ));
        std::fs::remove_dir_all(dir).ok();
    }

    #[test]
    fn empty_and_inconsistent_rejected() {
        let dir = tmp("empty");
        assert!(matches!(save_dataset(&[], &dir, 0), Err(DataError::Empty)));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = synthetic_demo(&mut rng, SkillLabel::Pick);
        let mut b = synthetic_demo(&mut rng, SkillLabel::Pick);
        b.waypoints.push(b.waypoints[0]);
        assert!(matches!(
            save_dataset(&[a, b], &dir, 0),
            Err(DataError::Inconsistent)
        ));
    }

    #[test]
    fn splits_are_disjoint_exhaustive_and_deterministic() {
        for n in [1, 10, 50, 333] {
            let s = split_assignment(n, 0.1, 9);
            assert_eq!(s, split_assignment(n, 0.1, 9));
            assert_eq!(s.len(), n);
            let val = s.iter().filter(|x| **x == Split::Val).count();
            assert_eq!(val, (n as f64 * 0.1).round() as usize);
            let items: Vec<usize> = (0..n).collect();
            let (tr, va) = partition(&items, &s);
            assert_eq!(tr.len() + va.len(), n);
            assert!(tr.iter().all(|i| !va.contains(i)));
        }
    }

    fn supplemental(rng: &mut ChaCha8Rng, n: usize) -> Vec<GroundingSample> {
        (0..n)
            .map(|i| GroundingSample {
                image: RgbImage::new(32, 24),
                instruction: format!("extra {i}"),
                pixel: [rng.gen_range(0.0..31.0), rng.gen_range(0.0..23.0)],
                skill: "pick".into(),
            })
            .collect()
    }

    #[test]
    fn supplemental_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let demos: Vec<SkillDemo> = (0..200)
            .map(|i| synthetic_demo(&mut rng, SkillLabel::ALL[i % 8]))
            .collect();
        let extra = supplemental(&mut rng, 180);
        let only = build_grounding_dataset(&demos, &extra, 0.0, 0).unwrap();
        assert_eq!(only.len(), 200);
        let mixed = build_grounding_dataset(&demos, &extra, 0.75, 0).unwrap();
        assert_eq!(mixed.len(), 350);
        assert_eq!(
            mixed
                .iter()
                .filter(|s| s.instruction.starts_with("extra"))
                .count(),
            150
        );
        assert!(mixed.iter().all(|s| s.pixel_in_bounds()));
        assert!(mixed[..200]
            .iter()
            .all(|s| s.instruction.ends_with(&format!("skill_{}", s.skill))));
        assert!(matches!(
            build_grounding_dataset(&demos, &extra[..100], 0.75, 0),
            Err(DataError::InsufficientSupplemental {
                requested: 150,
                available: 100
            })
        ));
    }

    #[test]
    fn label_files_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let extra = supplemental(&mut rng, 5);
        let dir = tmp("labels");
        save_grounding_samples(&extra, &dir, "a").unwrap();
        save_grounding_samples(&extra[..2], &dir, "b").unwrap();
        let back = load_supplemental_dir(&dir).unwrap();
        assert_eq!(back.len(), 7);
        assert_eq!(back[..5], extra[..]);
        std::fs::remove_dir_all(dir).ok();
    }
}
