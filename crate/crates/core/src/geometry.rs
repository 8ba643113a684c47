//! Camera models, pixel/point transforms and pose algebra.
//!
//! Frames: the robot base frame is z-up with the table surface at z = 0.
//! Camera frames follow the OpenCV convention (x right, y down, z forward).
//! Pixel centres sit at integer coordinates.

use nalgebra::{Isometry3, Matrix3, Point3, Quaternion, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("point lies behind the camera (camera-frame depth {0})")]
    BehindCamera(f64),
    #[error("invalid depth {0}")]
    InvalidDepth(f64),
    #[error("pixel ({u}, {v}) lies outside a {width}x{height} image")]
    PixelOutOfBounds {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("quaternion norm {0} differs from 1")]
    NonUnitQuaternion(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GeometryError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cx={} outside [0, {})",
                self.cx, self.width
            )));
        }
        if !(self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "cy={} outside [0, {})",
                self.cy, self.height
            )));
        }
        Ok(())
    }

    /// Whether a continuous pixel coordinate falls inside the image area.
    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= -0.5 && v >= -0.5 && u < self.width as f64 - 0.5 && v < self.height as f64 - 0.5
    }
}

/// Pose of the camera in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawExtrinsics", into = "RawExtrinsics")]
pub struct CameraExtrinsics {
    camera_to_base: Isometry3<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawExtrinsics {
    /// (w, x, y, z)
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl TryFrom<RawExtrinsics> for CameraExtrinsics {
    type Error = GeometryError;

    fn try_from(raw: RawExtrinsics) -> Result<Self, Self::Error> {
        Self::new(raw.rotation, raw.translation)
    }
}

impl From<CameraExtrinsics> for RawExtrinsics {
    fn from(e: CameraExtrinsics) -> Self {
        let q = e.camera_to_base.rotation;
        let t = e.camera_to_base.translation.vector;
        RawExtrinsics {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [t.x, t.y, t.z],
        }
    }
}

impl CameraExtrinsics {
    /// `rotation` is (w, x, y, z) and must already be unit-norm.
    pub fn new(rotation: [f64; 4], translation: [f64; 3]) -> Result<Self, GeometryError> {
        let q = Quaternion::new(rotation[0], rotation[1], rotation[2], rotation[3]);
        let norm = q.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(GeometryError::NonUnitQuaternion(norm));
        }
        Ok(Self {
            camera_to_base: Isometry3::from_parts(
                Translation3::new(translation[0], translation[1], translation[2]),
                UnitQuaternion::new_unchecked(q),
            ),
        })
    }

    pub fn identity() -> Self {
        Self {
            camera_to_base: Isometry3::identity(),
        }
    }

    pub fn from_isometry(camera_to_base: Isometry3<f64>) -> Self {
        Self { camera_to_base }
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll (image y points away from it).
    pub fn look_at(eye: Point3<f64>, target: Point3<f64>, up: Vector3<f64>) -> Self {
        let z = (target - eye).normalize();
        let x = z.cross(&up).normalize();
        let y = z.cross(&x);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(Matrix3::from_columns(&[x, y, z]));
        Self {
            camera_to_base: Isometry3::from_parts(
                Translation3::from(eye.coords),
                UnitQuaternion::from_rotation_matrix(&rot),
            ),
        }
    }

    pub fn camera_to_base(&self) -> &Isometry3<f64> {
        &self.camera_to_base
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.camera_to_base.translation.vector)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
}

impl Camera {
    pub fn project(&self, point: &Point3<f64>) -> Result<Projection, GeometryError> {
        project(point, &self.intrinsics, &self.extrinsics)
    }

    pub fn deproject(&self, u: f64, v: f64, depth: f64) -> Result<Point3<f64>, GeometryError> {
        deproject(u, v, depth, &self.intrinsics, &self.extrinsics)
    }
}

/// Pixel coordinates plus camera-frame depth of a projected point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

pub fn project(
    point: &Point3<f64>,
    intr: &CameraIntrinsics,
    extr: &CameraExtrinsics,
) -> Result<Projection, GeometryError> {
    let p = extr.camera_to_base.inverse_transform_point(point);
    if !(p.z > 0.0) {
        return Err(GeometryError::BehindCamera(p.z));
    }
    Ok(Projection {
        u: intr.fx * p.x / p.z + intr.cx,
        v: intr.fy * p.y / p.z + intr.cy,
        depth: p.z,
    })
}

/// Inverse pinhole mapping. A depth of 0 encodes a missing measurement.
pub fn deproject(
    u: f64,
    v: f64,
    depth: f64,
    intr: &CameraIntrinsics,
    extr: &CameraExtrinsics,
) -> Result<Point3<f64>, GeometryError> {
    if !(depth.is_finite() && depth > 0.0) {
        return Err(GeometryError::InvalidDepth(depth));
    }
    if !intr.contains(u, v) {
        return Err(GeometryError::PixelOutOfBounds {
            u,
            v,
            width: intr.width,
            height: intr.height,
        });
    }
    let cam = Point3::new(
        (u - intr.cx) * depth / intr.fx,
        (v - intr.cy) * depth / intr.fy,
        depth,
    );
    Ok(extr.camera_to_base.transform_point(&cam))
}

/// Flips the quaternion sign so that w >= 0. When w is exactly 0 the first
/// non-zero vector component is made positive.
pub fn canonicalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.into_inner();
    let flip = if c.w != 0.0 {
        c.w < 0.0
    } else if c.i != 0.0 {
        c.i < 0.0
    } else if c.j != 0.0 {
        c.j < 0.0
    } else {
        c.k < 0.0
    };
    if flip {
        UnitQuaternion::new_unchecked(-c)
    } else {
        q
    }
}

/// Yaw (about Z), pitch (about Y), roll (about X), applied intrinsically in that order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

pub fn euler_to_quat(yaw: f64, pitch: f64, roll: f64) -> UnitQuaternion<f64> {
    let (sy, cy) = (yaw * 0.5).sin_cos();
    let (sp, cp) = (pitch * 0.5).sin_cos();
    let (sr, cr) = (roll * 0.5).sin_cos();
    let q = Quaternion::new(
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    );
    canonicalize(UnitQuaternion::new_normalize(q))
}

/// Inverse of [`euler_to_quat`]. At gimbal lock (pitch = ±π/2) only the
/// combined yaw/roll is observable; it is reported as yaw with roll = 0.
pub fn quat_to_euler(q: &UnitQuaternion<f64>) -> EulerAngles {
    let r = q.to_rotation_matrix();
    let m = r.matrix();
    let sp = (-m[(2, 0)]).clamp(-1.0, 1.0);
    let pitch = sp.asin();
    if (1.0 - sp.abs()) > 1e-12 {
        EulerAngles {
            yaw: m[(1, 0)].atan2(m[(0, 0)]),
            pitch,
            roll: m[(2, 1)].atan2(m[(2, 2)]),
        }
    } else {
        EulerAngles {
            yaw: (-m[(0, 1)]).atan2(m[(1, 1)]),
            pitch,
            roll: 0.0,
        }
    }
}

/// Rotation angle between two orientations, accounting for the double cover.
pub fn geodesic_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let dot = a.coords.dot(&b.coords).abs().min(1.0);
    2.0 * dot.acos()
}

/// Shortest-arc spherical interpolation; the result is canonicalised.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, t: f64) -> UnitQuaternion<f64> {
    let mut b = *b;
    if a.coords.dot(&b.coords) < 0.0 {
        b = UnitQuaternion::new_unchecked(-b.into_inner());
    }
    let out = a.try_slerp(&b, t, 1e-12).unwrap_or_else(|| {
        // Nearly identical: fall back to normalised lerp.
        UnitQuaternion::new_normalize(a.into_inner().lerp(&b.into_inner(), t))
    });
    canonicalize(out)
}

/// End-effector pose in the robot base frame. The gripper approaches along
/// its tool -z axis, so the identity orientation points straight down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "RawPose", into = "RawPose")]
pub struct Pose {
    pub position: Vector3<f64>,
    orientation: UnitQuaternion<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    position: [f64; 3],
    /// (w, x, y, z)
    orientation: [f64; 4],
}

impl From<RawPose> for Pose {
    fn from(raw: RawPose) -> Self {
        Pose::from_array(&[
            raw.position[0],
            raw.position[1],
            raw.position[2],
            raw.orientation[0],
            raw.orientation[1],
            raw.orientation[2],
            raw.orientation[3],
        ])
    }
}

impl From<Pose> for RawPose {
    fn from(p: Pose) -> Self {
        let a = p.to_array();
        RawPose {
            position: [a[0], a[1], a[2]],
            orientation: [a[3], a[4], a[5], a[6]],
        }
    }
}

impl Pose {
    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: canonicalize(orientation),
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(Vector3::new(x, y, z), UnitQuaternion::identity())
    }

    /// `(x, y, z, yaw, pitch, roll)` action/waypoint parameterisation.
    pub fn from_euler(x: f64, y: f64, z: f64, yaw: f64, pitch: f64, roll: f64) -> Self {
        Self::new(Vector3::new(x, y, z), euler_to_quat(yaw, pitch, roll))
    }

    pub fn orientation(&self) -> &UnitQuaternion<f64> {
        &self.orientation
    }

    pub fn set_orientation(&mut self, q: UnitQuaternion<f64>) {
        self.orientation = canonicalize(q);
    }

    pub fn euler(&self) -> EulerAngles {
        quat_to_euler(&self.orientation)
    }

    /// Direction the gripper moves in when approaching its target.
    pub fn approach_axis(&self) -> Vector3<f64> {
        self.orientation * Vector3::new(0.0, 0.0, -1.0)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.position), self.orientation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.translation.vector, iso.rotation)
    }

    /// `[x, y, z, qw, qx, qy, qz]`.
    pub fn to_array(&self) -> [f64; 7] {
        let q = self.orientation.quaternion();
        [
            self.position.x,
            self.position.y,
            self.position.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ]
    }

    /// Inverse of [`Pose::to_array`]; the quaternion is renormalised.
    pub fn from_array(a: &[f64; 7]) -> Self {
        Self::new(
            Vector3::new(a[0], a[1], a[2]),
            UnitQuaternion::new_normalize(Quaternion::new(a[3], a[4], a[5], a[6])),
        )
    }

    pub fn translated(&self, delta: Vector3<f64>) -> Self {
        Self::new(self.position + delta, self.orientation)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 160.0, 120.0, 320, 240).unwrap()
    }

    // Rotation matrix oracle built from elementary rotations.
    fn rz(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    }
    fn ry(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
    }
    fn rx(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
    }
    fn mm(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut o = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    o[i][j] += a[i][k] * b[k][j];
                }
            }
        }
        o
    }
    fn quat_matrix(q: &UnitQuaternion<f64>) -> [[f64; 3]; 3] {
        let (w, x, y, z) = (q.w, q.i, q.j, q.k);
        [
            [
                1.0 - 2.0 * (y * y + z * z),
                2.0 * (x * y - w * z),
                2.0 * (x * z + w * y),
            ],
            [
                2.0 * (x * y + w * z),
                1.0 - 2.0 * (x * x + z * z),
                2.0 * (y * z - w * x),
            ],
            [
                2.0 * (x * z - w * y),
                2.0 * (y * z + w * x),
                1.0 - 2.0 * (x * x + y * y),
            ],
        ]
    }
    fn max_diff(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                d = d.max((a[i][j] - b[i][j]).abs());
            }
        }
        d
    }

    #[test]
    fn principal_ray_projects_to_principal_point() {
        let p = project(
            &Point3::new(0.0, 0.0, 1.0),
            &intr(),
            &CameraExtrinsics::identity(),
        )
        .unwrap();
        assert_eq!((p.u, p.v, p.depth), (160.0, 120.0, 1.0));
        let p = project(
            &Point3::new(0.1, 0.0, 1.0),
            &intr(),
            &CameraExtrinsics::identity(),
        )
        .unwrap();
        assert!((p.u - 170.0).abs() < 1e-12);
        assert_eq!(p.v, 120.0);
    }

    #[test]
    fn behind_camera_rejected() {
        let e = project(
            &Point3::new(0.0, 0.0, -1.0),
            &intr(),
            &CameraExtrinsics::identity(),
        );
        assert!(matches!(e, Err(GeometryError::BehindCamera(_))));
        let e = project(
            &Point3::new(0.3, 0.0, 0.0),
            &intr(),
            &CameraExtrinsics::identity(),
        );
        assert!(matches!(e, Err(GeometryError::BehindCamera(_))));
    }

    #[test]
    fn deproject_principal_point() {
        let p = deproject(160.0, 120.0, 2.0, &intr(), &CameraExtrinsics::identity()).unwrap();
        assert_eq!(p, Point3::new(0.0, 0.0, 2.0));
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                deproject(10.0, 10.0, bad, &intr(), &CameraExtrinsics::identity()),
                Err(GeometryError::InvalidDepth(_))
            ));
        }
        assert!(matches!(
            deproject(400.0, 10.0, 1.0, &intr(), &CameraExtrinsics::identity()),
            Err(GeometryError::PixelOutOfBounds { .. })
        ));
    }

    #[test]
    fn intrinsics_invariants() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 1.0, -0.1, 4, 4).is_err());
        assert!(CameraExtrinsics::new([1.0, 0.1, 0.0, 0.0], [0.0; 3]).is_err());
    }

    fn random_extrinsics(rng: &mut ChaCha8Rng) -> CameraExtrinsics {
        let q = euler_to_quat(
            rng.gen_range(-PI..PI),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-PI..PI),
        );
        let c = q.quaternion();
        CameraExtrinsics::new(
            [c.w, c.i, c.j, c.k],
            [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn projection_matches_homogeneous_matrix_pipeline() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let intr = intr();
        for _ in 0..1000 {
            let extr = random_extrinsics(&mut rng);
            // Build the 4x4 base->camera matrix independently.
            let q = extr.camera_to_base().rotation;
            let t = extr.camera_to_base().translation.vector;
            let r = quat_matrix(&q);
            let mut m = [[0.0; 4]; 4];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] = r[j][i];
                }
                m[i][3] = -(r[0][i] * t.x + r[1][i] * t.y + r[2][i] * t.z);
            }
            m[3][3] = 1.0;
            let k = [
                [intr.fx, 0.0, intr.cx, 0.0],
                [0.0, intr.fy, intr.cy, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ];
            // Sample a camera-frame point in front of the camera, map to base.
            let cam = Point3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.2..3.0),
            );
            let p = extr.camera_to_base().transform_point(&cam);
            let h = [p.x, p.y, p.z, 1.0];
            let mut c = [0.0; 4];
            for i in 0..4 {
                for j in 0..4 {
                    c[i] += m[i][j] * h[j];
                }
            }
            let mut uvw = [0.0; 3];
            for i in 0..3 {
                for j in 0..4 {
                    uvw[i] += k[i][j] * c[j];
                }
            }
            let got = project(&p, &intr, &extr).unwrap();
            assert!((got.u - uvw[0] / uvw[2]).abs() < 1e-9);
            assert!((got.v - uvw[1] / uvw[2]).abs() < 1e-9);
            assert!((got.depth - c[2]).abs() < 1e-9);
        }
    }

    #[test]
    fn euler_examples() {
        let q = euler_to_quat(0.0, 0.0, 0.0);
        assert_eq!(
            q.quaternion().coords,
            Quaternion::new(1.0, 0.0, 0.0, 0.0).coords
        );
        let q = euler_to_quat(PI, 0.0, 0.0);
        let c = q.quaternion();
        assert!(c.w.abs() < 1e-12 && c.i.abs() < 1e-12 && c.j.abs() < 1e-12);
        assert!((c.k - 1.0).abs() < 1e-12);
    }

    #[test]
    fn euler_round_trip_matches_rotation_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (yaw, pitch, roll) = (
                rng.gen_range(-PI..PI),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-PI..PI),
            );
            let q = euler_to_quat(yaw, pitch, roll);
            let oracle = mm(mm(rz(yaw), ry(pitch)), rx(roll));
            assert!(max_diff(quat_matrix(&q), oracle) < 1e-9);
            let e = quat_to_euler(&q);
            let back = mm(mm(rz(e.yaw), ry(e.pitch)), rx(e.roll));
            assert!(max_diff(back, oracle) < 1e-9);
            assert!(geodesic_angle(&q, &euler_to_quat(e.yaw, e.pitch, e.roll)) < 1e-7);
        }
    }

    #[test]
    fn gimbal_lock_preserves_rotation() {
        for pitch in [PI / 2.0, -PI / 2.0] {
            let q = euler_to_quat(0.4, pitch, 0.3);
            let e = quat_to_euler(&q);
            assert_eq!(e.roll, 0.0);
            let back = euler_to_quat(e.yaw, e.pitch, e.roll);
            assert!(max_diff(quat_matrix(&q), quat_matrix(&back)) < 1e-7);
        }
    }

    #[test]
    fn slerp_midpoint_is_half_rotation() {
        let a = UnitQuaternion::identity();
        let b = euler_to_quat(0.0, 0.0, PI / 2.0);
        let mid = slerp(&a, &b, 0.5);
        assert!(max_diff(quat_matrix(&mid), rx(PI / 4.0)) < 1e-9);
    }

    proptest! {
        #[test]
        fn project_deproject_round_trip(
            x in -1.0f64..1.0, y in -1.0f64..1.0, z in 0.1f64..4.0,
            yaw in -PI..PI, pitch in -1.5f64..1.5, roll in -PI..PI,
        ) {
            let intr = intr();
            let q = euler_to_quat(yaw, pitch, roll);
            let c = q.quaternion();
            let extr = CameraExtrinsics::new([c.w, c.i, c.j, c.k], [0.2, -0.1, 0.5]).unwrap();
            let p = extr.camera_to_base().transform_point(&Point3::new(x * z, y * z * 0.7, z));
            let pr = project(&p, &intr, &extr).unwrap();
            prop_assume!(intr.contains(pr.u, pr.v));
            let back = deproject(pr.u, pr.v, pr.depth, &intr, &extr).unwrap();
            prop_assert!((back - p).norm() < 1e-9);
        }

        #[test]
        fn produced_quaternions_are_canonical(yaw in -10.0f64..10.0, pitch in -10.0f64..10.0, roll in -10.0f64..10.0) {
            let q = euler_to_quat(yaw, pitch, roll);
            prop_assert!((q.norm() - 1.0).abs() < 1e-12);
            prop_assert!(q.w >= 0.0);
            let p = Pose::new(Vector3::zeros(), UnitQuaternion::new_unchecked(-q.into_inner()));
            prop_assert!(p.orientation().w >= 0.0);
        }
    }
}
