//! Skill library and the controllers that expand waypoints into trajectories.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{geodesic_angle, slerp, Pose};

pub const APPROACH_OFFSET: f64 = 0.05;
pub const LOAD_POD_OFFSET: f64 = 0.02;
pub const LIFT_HEIGHT: f64 = 0.05;
/// How far past the handle a close trajectory pushes.
pub const PUSH_DEPTH: f64 = 0.08;
pub const POUR_STEPS: usize = 20;
pub const MAX_STEP_POSITION: f64 = 0.05;
pub const MAX_STEP_ANGLE: f64 = 10.0 * std::f64::consts::PI / 180.0;
/// Height at which a re-oriented mug is held before release.
pub const REORIENT_HEIGHT: f64 = 0.2;
pub const TIMESTEP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("unknown skill '{0}'")]
    UnknownSkill(String),
    #[error("skill expects {expected} waypoints, got {found}")]
    WaypointCountMismatch { expected: usize, found: usize },
    #[error("library manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkillLabel {
    Pick,
    Place,
    Open,
    Close,
    ReorientMug,
    PourCup,
    RefillKeurig,
    LoadPod,
}

impl SkillLabel {
    pub const ALL: [SkillLabel; 8] = [
        SkillLabel::Pick,
        SkillLabel::Place,
        SkillLabel::Open,
        SkillLabel::Close,
        SkillLabel::ReorientMug,
        SkillLabel::PourCup,
        SkillLabel::RefillKeurig,
        SkillLabel::LoadPod,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SkillLabel::Pick => "pick",
            SkillLabel::Place => "place",
            SkillLabel::Open => "open",
            SkillLabel::Close => "close",
            SkillLabel::ReorientMug => "reorient_mug",
            SkillLabel::PourCup => "pour_cup",
            SkillLabel::RefillKeurig => "refill_keurig",
            SkillLabel::LoadPod => "load_pod",
        }
    }

    /// Every skill is parameterised by a single interaction waypoint.
    pub fn k(&self) -> usize {
        1
    }
}

impl fmt::Display for SkillLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SkillLabel {
    type Err = SkillError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_lowercase();
        SkillLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or(SkillError::UnknownSkill(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GripperCommand {
    Open,
    Close,
    Hold,
}

/// Target pose plus the gripper action taken on arrival.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub pose: Pose,
    pub gripper: GripperCommand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub setpoints: Vec<Setpoint>,
    pub dt: f64,
}

impl Trajectory {
    pub fn commands(&self) -> Vec<GripperCommand> {
        self.setpoints.iter().map(|s| s.gripper).collect()
    }

    pub fn last_pose(&self) -> Option<&Pose> {
        self.setpoints.last().map(|s| &s.pose)
    }
}

/// Evenly spaced poses from `a` to `b` (both included) so that no step
/// exceeds either bound; position is linear and orientation is slerped.
pub fn interpolate(a: &Pose, b: &Pose, max_step_pos: f64, max_step_ang: f64) -> Vec<Pose> {
    let dist = (b.position - a.position).norm();
    let ang = geodesic_angle(a.orientation(), b.orientation());
    let ratio = (dist / max_step_pos).max(ang / max_step_ang);
    let n = ((ratio - 1e-9).ceil() as usize).max(1);
    let mut out = Vec::with_capacity(n + 1);
    out.push(*a);
    for i in 1..n {
        let t = i as f64 / n as f64;
        out.push(Pose::new(
            a.position + (b.position - a.position) * t,
            slerp(a.orientation(), b.orientation(), t),
        ));
    }
    out.push(*b);
    out
}

struct Builder {
    last: Pose,
    setpoints: Vec<Setpoint>,
}

impl Builder {
    fn new(current: &Pose) -> Self {
        Self {
            last: *current,
            setpoints: Vec::new(),
        }
    }

    fn move_to(&mut self, target: Pose, gripper: GripperCommand) {
        let path = interpolate(&self.last, &target, MAX_STEP_POSITION, MAX_STEP_ANGLE);
        let n = path.len();
        for (i, pose) in path.into_iter().enumerate().skip(1) {
            self.setpoints.push(Setpoint {
                pose,
                gripper: if i + 1 == n {
                    gripper
                } else {
                    GripperCommand::Hold
                },
            });
        }
        self.last = target;
    }

    fn push(&mut self, pose: Pose, gripper: GripperCommand) {
        self.setpoints.push(Setpoint { pose, gripper });
        self.last = pose;
    }

    fn finish(self) -> Trajectory {
        Trajectory {
            setpoints: self.setpoints,
            dt: TIMESTEP,
        }
    }
}

/// Pose backed off by `offset` along the negative approach axis.
pub fn approach_pose(kappa: &Pose, offset: f64) -> Pose {
    kappa.translated(-kappa.approach_axis() * offset)
}

fn raised(kappa: &Pose, dz: f64) -> Pose {
    kappa.translated(Vector3::new(0.0, 0.0, dz))
}

/// Same yaw as `pose` with zero pitch and roll.
pub fn untilted(pose: &Pose) -> Pose {
    let yaw = pose.euler().yaw;
    Pose::new(
        pose.position,
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
    )
}

/// Expands the waypoints of `label` into a setpoint trajectory starting at `current`.
pub fn run_controller(
    label: SkillLabel,
    waypoints: &[Pose],
    current: &Pose,
) -> Result<Trajectory, SkillError> {
    if waypoints.len() != label.k() {
        return Err(SkillError::WaypointCountMismatch {
            expected: label.k(),
            found: waypoints.len(),
        });
    }
    use GripperCommand::*;
    let kappa = waypoints[0];
    let mut b = Builder::new(current);
    match label {
        SkillLabel::Pick => {
            b.move_to(approach_pose(&kappa, APPROACH_OFFSET), Open);
            b.move_to(kappa, Close);
            b.move_to(raised(&kappa, LIFT_HEIGHT), Hold);
        }
        SkillLabel::Place => {
            b.move_to(raised(&kappa, APPROACH_OFFSET), Open);
        }
        SkillLabel::Open => {
            let approach = approach_pose(&kappa, APPROACH_OFFSET);
            b.move_to(approach, Open);
            b.move_to(kappa, Close);
            b.move_to(approach, Hold);
            b.push(approach, Open);
        }
        SkillLabel::Close => {
            b.move_to(approach_pose(&kappa, APPROACH_OFFSET), Hold);
            b.move_to(kappa, Hold);
            b.move_to(approach_pose(&kappa, -PUSH_DEPTH), Hold);
        }
        SkillLabel::ReorientMug => {
            b.move_to(approach_pose(&kappa, APPROACH_OFFSET), Open);
            b.move_to(kappa, Close);
            let mut upright = Pose::new(kappa.position, UnitQuaternion::identity());
            upright.position.z = REORIENT_HEIGHT;
            b.move_to(upright, Hold);
            b.push(upright, Open);
        }
        SkillLabel::PourCup | SkillLabel::RefillKeurig => {
            let start = untilted(&kappa);
            b.move_to(start, Hold);
            for i in 1..=POUR_STEPS {
                let t = i as f64 / POUR_STEPS as f64;
                let q = if i == POUR_STEPS {
                    *kappa.orientation()
                } else {
                    slerp(start.orientation(), kappa.orientation(), t)
                };
                b.push(Pose::new(kappa.position, q), Hold);
            }
        }
        SkillLabel::LoadPod => {
            b.move_to(raised(&kappa, LOAD_POD_OFFSET), Open);
            b.move_to(kappa, Hold);
        }
    }
    Ok(b.finish())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillEntry {
    pub label: SkillLabel,
    pub k: usize,
    /// Actor checkpoint, relative to the manifest directory when not absolute.
    pub actor: Option<PathBuf>,
    pub controller: String,
}

/// Immutable label → skill mapping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillLibrary {
    entries: BTreeMap<SkillLabel, SkillEntry>,
}

impl Default for SkillLibrary {
    fn default() -> Self {
        Self::standard()
    }
}

impl SkillLibrary {
    /// All eight skills, without actor checkpoints.
    pub fn standard() -> Self {
        Self {
            entries: SkillLabel::ALL
                .into_iter()
                .map(|l| {
                    (
                        l,
                        SkillEntry {
                            label: l,
                            k: l.k(),
                            actor: None,
                            controller: l.as_str().to_string(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn with_actor(mut self, label: SkillLabel, path: PathBuf) -> Self {
        if let Some(e) = self.entries.get_mut(&label) {
            e.actor = Some(path);
        }
        self
    }

    /// Keeps only the entries for `labels`.
    pub fn restricted(mut self, labels: &[SkillLabel]) -> Self {
        self.entries.retain(|l, _| labels.contains(l));
        self
    }

    pub fn lookup(&self, label: &str) -> Result<&SkillEntry, SkillError> {
        let l: SkillLabel = label.parse()?;
        self.entries
            .get(&l)
            .ok_or_else(|| SkillError::UnknownSkill(label.to_string()))
    }

    pub fn labels(&self) -> impl Iterator<Item = SkillLabel> + '_ {
        self.entries.keys().copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = &SkillEntry> {
        self.entries.values()
    }

    pub fn save(&self, path: &Path) -> Result<(), SkillError> {
        let json = serde_json::to_string_pretty(&self.entries)
            .map_err(|e| SkillError::Manifest(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SkillError> {
        let text = std::fs::read_to_string(path)?;
        let entries: BTreeMap<SkillLabel, SkillEntry> =
            serde_json::from_str(&text).map_err(|e| SkillError::Manifest(e.to_string()))?;
        for (label, entry) in &entries {
            if entry.label != *label || entry.k != label.k() {
                return Err(SkillError::Manifest(format!(
                    "inconsistent entry for {label}"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Actor checkpoint path resolved against `base`.
    pub fn actor_path(&self, label: SkillLabel, base: &Path) -> Option<PathBuf> {
        self.entries
            .get(&label)
            .and_then(|e| e.actor.as_ref())
            .map(|p| {
                if p.is_absolute() {
                    p.clone()
                } else {
                    base.join(p)
                }
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close_to(a: &Pose, b: &Pose) -> bool {
        (a.position - b.position).norm() < 1e-12
            && geodesic_angle(a.orientation(), b.orientation()) < 1e-9
    }

    #[test]
    fn restricted_library_drops_other_labels() {
        let lib = SkillLibrary::standard().restricted(&[SkillLabel::Open]);
        assert_eq!(lib.labels().collect::<Vec<_>>(), vec![SkillLabel::Open]);
        assert!(matches!(
            lib.lookup("pick"),
            Err(SkillError::UnknownSkill(_))
        ));
    }

    #[test]
    fn lookup_examples() {
        let lib = SkillLibrary::standard();
        assert_eq!(lib.lookup("pick").unwrap().k, 1);
        assert!(matches!(
            lib.lookup("fly"),
            Err(SkillError::UnknownSkill(_))
        ));
        for l in SkillLabel::ALL {
            assert_eq!(lib.lookup(l.as_str()).unwrap().label, l);
        }
    }

    #[test]
    fn pick_setpoints_match_template() {
        let kappa = Pose::from_translation(0.4, 0.0, 0.1);
        let approach = Pose::from_translation(0.4, 0.0, 0.15);
        let traj = run_controller(SkillLabel::Pick, &[kappa], &approach).unwrap();
        let want = [
            (approach, GripperCommand::Open),
            (kappa, GripperCommand::Close),
            (approach, GripperCommand::Hold),
        ];
        assert_eq!(traj.setpoints.len(), 3);
        for (s, (p, g)) in traj.setpoints.iter().zip(want) {
            assert!(close_to(&s.pose, &p), "{:?}", s.pose);
            assert_eq!(s.gripper, g);
        }
    }

    #[test]
    fn gripper_templates() {
        use GripperCommand::*;
        let current = Pose::from_translation(0.3, 0.0, 0.4);
        let count =
            |t: &Trajectory, c: GripperCommand| t.commands().iter().filter(|x| **x == c).count();
        let kappa = Pose::from_euler(0.6, 0.1, 0.2, 0.0, -std::f64::consts::FRAC_PI_2, 0.0);
        let expect = [
            (SkillLabel::Pick, 1, 1),
            (SkillLabel::Place, 0, 1),
            (SkillLabel::Open, 1, 2),
            (SkillLabel::Close, 0, 0),
            (SkillLabel::ReorientMug, 1, 2),
            (SkillLabel::PourCup, 0, 0),
            (SkillLabel::RefillKeurig, 0, 0),
            (SkillLabel::LoadPod, 0, 1),
        ];
        for (label, closes, opens) in expect {
            let t = run_controller(label, &[kappa], &current).unwrap();
            assert_eq!(
                (count(&t, Close), count(&t, Open)),
                (closes, opens),
                "{label}"
            );
            assert!(t.setpoints.len() >= 2);
        }
    }

    #[test]
    fn approach_offsets() {
        let kappa = Pose::from_euler(0.6, 0.1, 0.2, 0.3, -std::f64::consts::FRAC_PI_2, 0.0);
        let a = approach_pose(&kappa, APPROACH_OFFSET);
        assert!(((a.position - kappa.position).norm() - 0.05).abs() < 1e-12);
        let t = run_controller(SkillLabel::LoadPod, &[kappa], &kappa).unwrap();
        let release = t
            .setpoints
            .iter()
            .find(|s| s.gripper == GripperCommand::Open)
            .unwrap();
        assert!((release.pose.position.z - kappa.position.z - 0.02).abs() < 1e-12);
        assert!(close_to(t.last_pose().unwrap(), &kappa));
    }

    #[test]
    fn waypoint_count_checked() {
        let p = Pose::from_translation(0.0, 0.0, 0.0);
        assert!(matches!(
            run_controller(SkillLabel::Pick, &[p, p], &p),
            Err(SkillError::WaypointCountMismatch {
                expected: 1,
                found: 2
            })
        ));
    }

    #[test]
    fn pour_with_untilted_target_holds_constant_pose() {
        let kappa = Pose::from_euler(0.5, 0.0, 0.3, 0.7, 0.0, 0.0);
        let t = run_controller(SkillLabel::PourCup, &[kappa], &kappa).unwrap();
        let tail = &t.setpoints[t.setpoints.len() - POUR_STEPS..];
        for s in tail {
            assert!(close_to(&s.pose, &kappa));
        }
    }

    #[test]
    fn pour_rotates_uniformly() {
        let kappa = Pose::from_euler(0.5, 0.0, 0.3, 0.2, 1.6, 0.0);
        let t = run_controller(
            SkillLabel::RefillKeurig,
            &[kappa],
            &Pose::from_translation(0.3, 0.0, 0.4),
        )
        .unwrap();
        let tail = &t.setpoints[t.setpoints.len() - POUR_STEPS - 1..];
        let steps: Vec<f64> = tail
            .windows(2)
            .map(|w| geodesic_angle(w[0].pose.orientation(), w[1].pose.orientation()))
            .collect();
        for s in &steps {
            assert!((s - steps[0]).abs() < 1e-9);
        }
        assert!(close_to(t.last_pose().unwrap(), &kappa));
    }

    #[test]
    fn interpolation_examples() {
        let a = Pose::from_translation(0.1, 0.2, 0.3);
        assert_eq!(interpolate(&a, &a, 0.05, MAX_STEP_ANGLE), vec![a, a]);
        let b = Pose::from_translation(0.0, 0.0, 0.0);
        let c = Pose::from_translation(0.1, 0.0, 0.0);
        let path = interpolate(&b, &c, 0.05, MAX_STEP_ANGLE);
        assert_eq!(path.len(), 3);
        assert_eq!(path[1].position, Vector3::new(0.05, 0.0, 0.0));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = std::env::temp_dir().join(format!("skills-manifest-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let lib = SkillLibrary::standard().with_actor(SkillLabel::Pick, PathBuf::from("pick.ckpt"));
        let path = dir.join("library.json");
        lib.save(&path).unwrap();
        let back = SkillLibrary::load(&path).unwrap();
        assert_eq!(back, lib);
        assert_eq!(
            back.actor_path(SkillLabel::Pick, &dir),
            Some(dir.join("pick.ckpt"))
        );
        std::fs::remove_dir_all(dir).ok();
    }

    proptest! {
        #[test]
        fn interpolation_respects_bounds(
            a in prop::array::uniform7(-1.0f64..1.0),
            b in prop::array::uniform7(-1.0f64..1.0),
        ) {
            let pa = Pose::from_euler(a[0], a[1], a[2], a[3] * 3.0, a[4] * 1.5, a[5] * 3.0);
            let pb = Pose::from_euler(b[0], b[1], b[2], b[3] * 3.0, b[4] * 1.5, b[5] * 3.0);
            let path = interpolate(&pa, &pb, MAX_STEP_POSITION, MAX_STEP_ANGLE);
            prop_assert_eq!(path[0], pa);
            prop_assert_eq!(*path.last().unwrap(), pb);
            for w in path.windows(2) {
                prop_assert!((w[1].position - w[0].position).norm() <= MAX_STEP_POSITION * (1.0 + 1e-6));
                prop_assert!(geodesic_angle(w[0].orientation(), w[1].orientation()) <= MAX_STEP_ANGLE * (1.0 + 1e-6));
            }
        }
    }
}
