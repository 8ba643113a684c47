//! Scene description, world state and reset.

use manip_core::geometry::{Camera, CameraExtrinsics, CameraIntrinsics, Pose};
use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::shapes::{Aabb, PartId, Primitive, Shape};
use crate::SimError;

pub const IMAGE_WIDTH: usize = 160;
pub const IMAGE_HEIGHT: usize = 120;
/// Full drawer travel in meters.
pub const DRAWER_TRAVEL: f64 = 0.05;
pub const GRASP_RADIUS: f64 = 0.02;
pub const DRAWER_NAMES: [&str; 3] = ["top", "middle", "bottom"];
pub const SLOT_RADIUS: f64 = 0.024;
pub const SLOT_DEPTH: f64 = 0.03;
const PLACEMENT_ATTEMPTS: usize = 100;
const PLACEMENT_MARGIN: f64 = 0.01;

const CABINET_HALF: [f64; 3] = [0.125, 0.15, 0.18];
const DRAWER_Z: [f64; 3] = [0.30, 0.18, 0.06];
const DRAWER_FRONT_X: f64 = -0.13;
const HANDLE_HALF: [f64; 3] = [0.0125, 0.04, 0.01];
const KEURIG_TOP: f64 = 0.3;

fn rz(yaw: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw)
}

fn ry(pitch: f64) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), pitch)
}

fn iso(x: f64, y: f64, z: f64, q: UnitQuaternion<f64>) -> Isometry3<f64> {
    Isometry3::from_parts(Translation3::new(x, y, z), q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Lemon,
    Lego,
    Screwdriver,
    Marker,
    Bowl,
    Mug,
    Cup,
    Pitcher,
    Pod,
    Keurig,
}

/// Named interaction points on an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Grasp,
    Top,
    Reservoir,
    Slot,
}

impl ObjectKind {
    pub fn default_color(&self) -> [u8; 3] {
        match self {
            ObjectKind::Lemon => [235, 205, 40],
            ObjectKind::Lego => [210, 40, 40],
            ObjectKind::Screwdriver => [200, 60, 30],
            ObjectKind::Marker => [40, 90, 200],
            ObjectKind::Bowl => [60, 160, 70],
            ObjectKind::Mug => [225, 225, 235],
            ObjectKind::Cup => [90, 140, 220],
            ObjectKind::Pitcher => [150, 205, 230],
            ObjectKind::Pod => [120, 70, 40],
            ObjectKind::Keurig => [45, 45, 52],
        }
    }

    pub fn yaw_range(&self) -> f64 {
        match self {
            ObjectKind::Lemon | ObjectKind::Bowl | ObjectKind::Cup | ObjectKind::Pod => 0.0,
            ObjectKind::Keurig => 15f64.to_radians(),
            _ => 25f64.to_radians(),
        }
    }

    /// Sampling range for the object's x coordinate.
    pub fn x_range(&self) -> [f64; 2] {
        match self {
            ObjectKind::Keurig => [0.68, 0.78],
            _ => [0.3, 0.62],
        }
    }

    pub fn y_range(&self) -> [f64; 2] {
        match self {
            ObjectKind::Keurig => [-0.15, 0.15],
            _ => [-0.32, 0.32],
        }
    }

    /// Primitives in the object frame (origin at the bottom centre when upright).
    pub fn parts(&self, color: [u8; 3]) -> Vec<(Shape, Isometry3<f64>, [u8; 3])> {
        let id = UnitQuaternion::identity();
        let side = ry(std::f64::consts::FRAC_PI_2);
        let cyl = |radius, half_height| Shape::Cylinder {
            radius,
            half_height,
        };
        let cube = |a, b, c| Shape::Cuboid { half: [a, b, c] };
        match self {
            ObjectKind::Lemon => vec![(
                Shape::Sphere { radius: 0.03 },
                iso(0.0, 0.0, 0.03, id),
                color,
            )],
            ObjectKind::Lego => vec![
                (cube(0.032, 0.016, 0.0195), iso(0.0, 0.0, 0.0195, id), color),
                (cyl(0.006, 0.003), iso(-0.016, 0.0, 0.042, id), color),
                (cyl(0.006, 0.003), iso(0.016, 0.0, 0.042, id), color),
            ],
            ObjectKind::Screwdriver => vec![
                (cyl(0.015, 0.045), iso(-0.03, 0.0, 0.015, side), color),
                (
                    cyl(0.004, 0.05),
                    iso(0.065, 0.0, 0.015, side),
                    [170, 170, 175],
                ),
            ],
            ObjectKind::Marker => vec![
                (
                    cyl(0.011, 0.055),
                    iso(-0.01, 0.0, 0.012, side),
                    [235, 235, 235],
                ),
                (cyl(0.012, 0.014), iso(0.055, 0.0, 0.012, side), color),
            ],
            ObjectKind::Bowl => vec![(cyl(0.07, 0.025), iso(0.0, 0.0, 0.025, id), color)],
            ObjectKind::Mug => vec![
                (cyl(0.04, 0.045), iso(0.0, 0.0, 0.045, id), color),
                (cube(0.006, 0.012, 0.025), iso(0.0, 0.05, 0.045, id), color),
            ],
            ObjectKind::Cup => vec![(cyl(0.035, 0.04), iso(0.0, 0.0, 0.04, id), color)],
            ObjectKind::Pitcher => vec![
                (cyl(0.045, 0.06), iso(0.0, 0.0, 0.06, id), color),
                (cube(0.01, 0.008, 0.035), iso(-0.055, 0.0, 0.06, id), color),
                (cube(0.015, 0.012, 0.008), iso(0.05, 0.0, 0.11, id), color),
            ],
            ObjectKind::Pod => vec![(cyl(0.018, 0.0125), iso(0.0, 0.0, 0.0125, id), color)],
            ObjectKind::Keurig => vec![
                (cube(0.1, 0.085, 0.15), iso(0.0, 0.0, 0.15, id), color),
                (
                    cube(0.035, 0.07, 0.012),
                    iso(0.06, 0.0, KEURIG_TOP + 0.012, id),
                    [120, 170, 230],
                ),
                (
                    cyl(SLOT_RADIUS, 0.002),
                    iso(-0.04, 0.0, KEURIG_TOP + 0.002, id),
                    [205, 205, 210],
                ),
            ],
        }
    }

    /// Anchor offset in the object frame.
    pub fn anchor(&self, part: Part) -> Option<Vector3<f64>> {
        let v = Vector3::new;
        match (self, part) {
            (ObjectKind::Lemon, Part::Grasp) => Some(v(0.0, 0.0, 0.03)),
            (ObjectKind::Lego, Part::Grasp) => Some(v(0.0, 0.0, 0.0195)),
            (ObjectKind::Screwdriver, Part::Grasp) => Some(v(-0.03, 0.0, 0.015)),
            (ObjectKind::Marker, Part::Grasp) => Some(v(0.0, 0.0, 0.012)),
            (ObjectKind::Bowl, Part::Grasp | Part::Top) => Some(v(0.0, 0.0, 0.05)),
            (ObjectKind::Mug, Part::Grasp) => Some(v(0.0, 0.0, 0.045)),
            (ObjectKind::Cup, Part::Top) => Some(v(0.0, 0.0, 0.08)),
            (ObjectKind::Pitcher, Part::Grasp) => Some(v(0.0, 0.0, 0.06)),
            (ObjectKind::Pod, Part::Grasp) => Some(v(0.0, 0.0, 0.0125)),
            (ObjectKind::Keurig, Part::Reservoir) => Some(v(0.06, 0.0, KEURIG_TOP + 0.024)),
            (ObjectKind::Keurig, Part::Slot) => Some(v(-0.04, 0.0, KEURIG_TOP + 0.004)),
            _ => None,
        }
    }

    pub fn graspable(&self) -> bool {
        self.anchor(Part::Grasp).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub name: String,
    pub kind: ObjectKind,
    pub color: [u8; 3],
    /// Rest on the side (mugs) instead of upright.
    #[serde(default)]
    pub lying: bool,
    /// Preferred `[x, y, yaw]`; resampled if it collides.
    #[serde(default)]
    pub requested: Option<[f64; 3]>,
}

impl ObjectSpec {
    pub fn new(name: &str, kind: ObjectKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            color: kind.default_color(),
            lying: false,
            requested: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CabinetSpec {
    #[serde(default)]
    pub requested: Option<[f64; 3]>,
    pub extensions: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableSpec {
    pub x: [f64; 2],
    pub y: [f64; 2],
}

impl Default for TableSpec {
    fn default() -> Self {
        Self {
            x: [0.25, 0.95],
            y: [-0.4, 0.4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub table: TableSpec,
    pub objects: Vec<ObjectSpec>,
    pub cabinet: Option<CabinetSpec>,
    pub cameras: Vec<Camera>,
    pub grounding_camera: usize,
    pub seed: u64,
}

pub fn default_cameras() -> Vec<Camera> {
    let intrinsics = CameraIntrinsics::new(125.0, 125.0, 79.5, 59.5, IMAGE_WIDTH, IMAGE_HEIGHT)
        .expect("valid intrinsics");
    let look = |eye: [f64; 3], target: [f64; 3]| Camera {
        intrinsics,
        extrinsics: CameraExtrinsics::look_at(
            Point3::from(eye),
            Point3::from(target),
            Vector3::z(),
        ),
    };
    vec![
        look([0.05, 0.0, 0.8], [0.6, 0.0, 0.12]),
        look([0.25, -0.6, 0.55], [0.6, 0.0, 0.12]),
    ]
}

impl SceneSpec {
    pub fn new(objects: Vec<ObjectSpec>, cabinet: Option<CabinetSpec>, seed: u64) -> Self {
        Self {
            table: TableSpec::default(),
            objects,
            cabinet,
            cameras: default_cameras(),
            grounding_camera: 0,
            seed,
        }
    }

    pub fn grounding(&self) -> &Camera {
        &self.cameras[self.grounding_camera]
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.cameras.len() < 2 || self.grounding_camera >= self.cameras.len() {
            return Err(SimError::InvalidSpec(
                "need at least two cameras and a valid grounding index".into(),
            ));
        }
        let t = &self.table;
        let centre = Point3::new((t.x[0] + t.x[1]) / 2.0, (t.y[0] + t.y[1]) / 2.0, 0.0);
        let sees = self
            .grounding()
            .project(&centre)
            .map(|p| self.grounding().intrinsics.contains(p.u, p.v))
            .unwrap_or(false);
        if !sees {
            return Err(SimError::InvalidSpec(
                "grounding camera does not see the table centre".into(),
            ));
        }
        if let Some(c) = &self.cabinet {
            if c.extensions.iter().any(|e| !(0.0..=1.0).contains(e)) {
                return Err(SimError::InvalidSpec(
                    "drawer extension outside [0, 1]".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn find_object(&self, name: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.name == name)
    }
}

/// Planar cabinet placement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

impl Placement {
    pub fn isometry(&self) -> Isometry3<f64> {
        iso(self.x, self.y, 0.0, rz(self.yaw))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Held {
    Object { index: usize, relative: Pose },
    Handle { drawer: usize, s0: f64, e0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GripperState {
    pub pose: Pose,
    pub closed: bool,
    pub held: Option<Held>,
}

pub fn home_pose() -> Pose {
    Pose::from_translation(0.3, -0.25, 0.4)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub objects: Vec<Pose>,
    pub cabinet: Option<Placement>,
    pub drawers: Vec<f64>,
    pub gripper: GripperState,
}

fn object_aabb(spec: &ObjectSpec, pose: &Isometry3<f64>) -> Aabb {
    spec.kind
        .parts(spec.color)
        .iter()
        .map(|(shape, local, _)| {
            Primitive {
                shape: *shape,
                pose: pose * local,
                color: [0; 3],
                id: PartId::Cabinet,
            }
            .aabb()
        })
        .fold(Aabb::empty(), |a, b| a.union(&b))
}

/// Object pose resting on the table at `(x, y)` with the given yaw.
pub fn resting_pose(spec: &ObjectSpec, x: f64, y: f64, yaw: f64) -> Pose {
    let q = if spec.lying {
        rz(yaw) * ry(std::f64::consts::FRAC_PI_2)
    } else {
        rz(yaw)
    };
    let bb = object_aabb(spec, &iso(0.0, 0.0, 0.0, q));
    Pose::new(Vector3::new(x, y, -bb.min[2]), q)
}

fn cabinet_primitives(place: &Placement, extensions: &[f64]) -> Vec<Primitive> {
    let base = place.isometry();
    let id = UnitQuaternion::identity();
    let mut out = vec![Primitive {
        shape: Shape::Cuboid { half: CABINET_HALF },
        pose: base * iso(0.0, 0.0, CABINET_HALF[2], id),
        color: [140, 100, 70],
        id: PartId::Cabinet,
    }];
    for (d, e) in extensions.iter().enumerate() {
        let front = DRAWER_FRONT_X - e * DRAWER_TRAVEL;
        out.push(Primitive {
            shape: Shape::Cuboid {
                half: [0.1, 0.14, 0.052],
            },
            pose: base * iso(front + 0.1, 0.0, DRAWER_Z[d], id),
            color: [190, 155, 115],
            id: PartId::Drawer(d),
        });
        out.push(Primitive {
            shape: Shape::Cuboid { half: HANDLE_HALF },
            pose: base * iso(front - HANDLE_HALF[0], 0.0, DRAWER_Z[d], id),
            color: [60, 60, 65],
            id: PartId::Handle(d),
        });
    }
    out
}

fn cabinet_aabb(place: &Placement) -> Aabb {
    cabinet_primitives(place, &[1.0; 3])
        .iter()
        .map(Primitive::aabb)
        .fold(Aabb::empty(), |a, b| a.union(&b))
}

/// Handle centre in the cabinet frame at extension `e`.
pub fn handle_local(drawer: usize, e: f64) -> Vector3<f64> {
    Vector3::new(
        DRAWER_FRONT_X - e * DRAWER_TRAVEL - HANDLE_HALF[0],
        0.0,
        DRAWER_Z[drawer],
    )
}

pub fn handle_half_width() -> f64 {
    HANDLE_HALF[1]
}

impl WorldState {
    pub fn primitives(&self, spec: &SceneSpec) -> Vec<Primitive> {
        let mut out = Vec::new();
        if let Some(place) = &self.cabinet {
            out.extend(cabinet_primitives(place, &self.drawers));
        }
        for (i, (o, pose)) in spec.objects.iter().zip(&self.objects).enumerate() {
            let base = pose.isometry();
            for (shape, local, color) in o.kind.parts(o.color) {
                out.push(Primitive {
                    shape,
                    pose: base * local,
                    color,
                    id: PartId::Object(i),
                });
            }
        }
        out
    }

    pub fn object_aabb(&self, spec: &SceneSpec, index: usize) -> Aabb {
        object_aabb(&spec.objects[index], &self.objects[index].isometry())
    }

    pub fn anchor(&self, spec: &SceneSpec, index: usize, part: Part) -> Option<Point3<f64>> {
        let local = spec.objects.get(index)?.kind.anchor(part)?;
        Some(self.objects[index].isometry() * Point3::from(local))
    }

    /// World position of a drawer handle centre.
    pub fn handle_anchor(&self, drawer: usize) -> Option<Point3<f64>> {
        let place = self.cabinet?;
        let e = *self.drawers.get(drawer)?;
        Some(place.isometry() * Point3::from(handle_local(drawer, e)))
    }

    /// Gripper pose for grasping a handle: approach axis points into the cabinet.
    pub fn handle_grasp_pose(&self, drawer: usize) -> Option<Pose> {
        let p = self.handle_anchor(drawer)?;
        let yaw = self.cabinet?.yaw;
        Some(Pose::new(
            p.coords,
            rz(yaw) * ry(-std::f64::consts::FRAC_PI_2),
        ))
    }

    /// Unit vector pointing out of the cabinet front.
    pub fn drawer_outward(&self) -> Option<Vector3<f64>> {
        Some(rz(self.cabinet?.yaw) * Vector3::new(-1.0, 0.0, 0.0))
    }

    pub fn held_object(&self) -> Option<usize> {
        match self.gripper.held {
            Some(Held::Object { index, .. }) => Some(index),
            _ => None,
        }
    }

    /// Rigidly attaches object `index` so that its grasp anchor sits at the gripper.
    pub fn attach_at_gripper(&mut self, spec: &SceneSpec, index: usize) {
        let kind = spec.objects[index].kind;
        let anchor = kind.anchor(Part::Grasp).unwrap_or_else(Vector3::zeros);
        let g = self.gripper.pose;
        let yaw = self.objects[index].euler().yaw;
        let q = g.orientation() * rz(yaw - g.euler().yaw);
        let pos = g.position - q * anchor;
        self.objects[index] = Pose::new(pos, q);
        let relative = g.isometry().inverse() * self.objects[index].isometry();
        self.gripper.closed = true;
        self.gripper.held = Some(Held::Object {
            index,
            relative: Pose::from_isometry(&relative),
        });
    }
}

fn inside_table(bb: &Aabb, table: &TableSpec) -> bool {
    bb.min[0] >= table.x[0]
        && bb.max[0] <= table.x[1]
        && bb.min[1] >= table.y[0]
        && bb.max[1] <= table.y[1]
}

/// Samples a collision-free initial state; identical specs give identical states.
pub fn reset(spec: &SceneSpec) -> Result<WorldState, SimError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut placed: Vec<Aabb> = Vec::new();
    let mut cabinet = None;
    let mut drawers = Vec::new();
    if let Some(c) = &spec.cabinet {
        let place = match c.requested {
            Some([x, y, yaw]) => Placement { x, y, yaw },
            None => Placement {
                x: rng.gen_range(0.70..0.76),
                y: rng.gen_range(-0.15..0.15),
                yaw: rng.gen_range(-15f64..15.0).to_radians(),
            },
        };
        placed.push(cabinet_aabb(&place));
        cabinet = Some(place);
        drawers = c.extensions.to_vec();
    }
    // Largest footprints first so big items are not squeezed out by clutter.
    let mut order: Vec<usize> = (0..spec.objects.len()).collect();
    let footprint = |o: &ObjectSpec| {
        let bb = object_aabb(o, &Isometry3::identity());
        (bb.max[0] - bb.min[0]) * (bb.max[1] - bb.min[1])
    };
    order.sort_by(|&a, &b| footprint(&spec.objects[b]).total_cmp(&footprint(&spec.objects[a])));
    let mut objects = vec![Pose::from_translation(0.0, 0.0, 0.0); spec.objects.len()];
    for i in order {
        let o = &spec.objects[i];
        let fits = |pose: &Pose, placed: &[Aabb]| {
            let bb = object_aabb(o, &pose.isometry());
            inside_table(&bb, &spec.table)
                && placed
                    .iter()
                    .all(|p| !p.overlaps(&bb.inflate(PLACEMENT_MARGIN)))
        };
        let mut chosen = o
            .requested
            .map(|[x, y, yaw]| resting_pose(o, x, y, yaw))
            .filter(|p| fits(p, &placed));
        let mut attempts = 0;
        while chosen.is_none() {
            if attempts == PLACEMENT_ATTEMPTS {
                return Err(SimError::PlacementFailure(i));
            }
            attempts += 1;
            let [x0, x1] = o.kind.x_range();
            let [y0, y1] = o.kind.y_range();
            let r = o.kind.yaw_range();
            let yaw = if r > 0.0 { rng.gen_range(-r..r) } else { 0.0 };
            let pose = resting_pose(o, rng.gen_range(x0..x1), rng.gen_range(y0..y1), yaw);
            if fits(&pose, &placed) {
                chosen = Some(pose);
            }
        }
        let pose = chosen.expect("loop exits with a pose");
        placed.push(object_aabb(o, &pose.isometry()));
        objects[i] = pose;
    }
    Ok(WorldState {
        objects,
        cabinet,
        drawers,
        gripper: GripperState {
            pose: home_pose(),
            closed: false,
            held: None,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn clutter_spec(seed: u64) -> SceneSpec {
        let objs = [
            ObjectKind::Lemon,
            ObjectKind::Lego,
            ObjectKind::Screwdriver,
            ObjectKind::Marker,
            ObjectKind::Bowl,
        ]
        .iter()
        .map(|k| ObjectSpec::new(&format!("{k:?}").to_lowercase(), *k))
        .collect();
        SceneSpec::new(
            objs,
            Some(CabinetSpec {
                requested: None,
                extensions: [0.0, 0.5, 1.0],
            }),
            seed,
        )
    }

    #[test]
    fn reset_is_deterministic() {
        let spec = clutter_spec(3);
        assert_eq!(reset(&spec).unwrap(), reset(&spec).unwrap());
        assert_ne!(reset(&spec).unwrap(), reset(&clutter_spec(4)).unwrap());
    }

    #[test]
    fn overlapping_requests_are_resampled() {
        let mut a = ObjectSpec::new("a", ObjectKind::Lego);
        let mut b = ObjectSpec::new("b", ObjectKind::Lego);
        a.requested = Some([0.45, 0.0, 0.0]);
        b.requested = Some([0.45, 0.0, 0.0]);
        let spec = SceneSpec::new(vec![a, b], None, 0);
        let s = reset(&spec).unwrap();
        assert_eq!(s.objects[0].position.x, 0.45);
        assert!(!s.object_aabb(&spec, 0).overlaps(&s.object_aabb(&spec, 1)));
    }

    #[test]
    fn thousand_seeds_have_no_overlaps() {
        for seed in 0..1000 {
            let spec = clutter_spec(seed);
            let s = reset(&spec).unwrap();
            let mut boxes: Vec<Aabb> = (0..spec.objects.len())
                .map(|i| s.object_aabb(&spec, i))
                .collect();
            boxes.push(cabinet_aabb(s.cabinet.as_ref().unwrap()));
            for i in 0..boxes.len() {
                for j in i + 1..boxes.len() {
                    assert!(
                        !boxes[i].overlaps(&boxes[j]),
                        "seed {seed}: {i} overlaps {j}"
                    );
                }
            }
            for i in 0..spec.objects.len() {
                let bb = s.object_aabb(&spec, i);
                assert!(inside_table(&bb, &spec.table));
                assert!(
                    bb.min[2].abs() < 1e-12,
                    "object {i} not resting on the table"
                );
            }
        }
    }

    #[test]
    fn impossible_scene_fails() {
        let objs = (0..60)
            .map(|i| ObjectSpec::new(&format!("b{i}"), ObjectKind::Bowl))
            .collect();
        assert!(matches!(
            reset(&SceneSpec::new(objs, None, 0)),
            Err(SimError::PlacementFailure(_))
        ));
    }

    #[test]
    fn handle_grasp_axis_points_into_cabinet() {
        let spec = clutter_spec(1);
        let s = reset(&spec).unwrap();
        let g = s.handle_grasp_pose(0).unwrap();
        let out = s.drawer_outward().unwrap();
        assert!((g.approach_axis() + out).norm() < 1e-12);
    }

    #[test]
    fn lying_mug_rests_on_table() {
        let mut m = ObjectSpec::new("mug", ObjectKind::Mug);
        m.lying = true;
        let p = resting_pose(&m, 0.5, 0.0, 0.3);
        let axis = p.orientation() * Vector3::z();
        assert!(axis.z.abs() < 1e-12);
        assert!((p.position.z - 0.04).abs() < 1e-12);
    }
}
