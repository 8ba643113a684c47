//! Task sampling, expert waypoints, ground-truth keypoints and success checks.

use std::collections::BTreeMap;

use manip_core::geometry::{geodesic_angle, Pose};
use manip_core::skills::SkillLabel;
use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::render::cast;
use crate::scene::{
    reset, CabinetSpec, ObjectKind, ObjectSpec, Part, SceneSpec, WorldState, DRAWER_NAMES,
};
use crate::shapes::PartId;
use crate::SimError;

/// Pitch of the commanded pouring pose.
pub const POUR_TILT: f64 = 1.2;
/// Height of the pouring pose above the vessel opening.
pub const POUR_HEIGHT: f64 = 0.1;
const SAMPLE_ATTEMPTS: u64 = 50;

const TEMPLATES: &str = include_str!("../data/templates.toml");

#[derive(Debug, Clone, Deserialize)]
struct TierConfig {
    distractors: [usize; 2],
}

#[derive(Debug, Clone, Deserialize)]
struct SkillPhrases {
    tier1: Vec<String>,
    tier2: Vec<String>,
    tier3: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Templates {
    tiers: BTreeMap<String, TierConfig>,
    skills: BTreeMap<String, SkillPhrases>,
}

impl Templates {
    pub fn standard() -> Self {
        Self::from_toml(TEMPLATES).expect("bundled templates parse")
    }

    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let t: Templates = toml::from_str(text).map_err(|e| SimError::Templates(e.to_string()))?;
        for label in SkillLabel::ALL {
            if !t.skills.contains_key(label.as_str()) {
                return Err(SimError::Templates(format!("missing phrases for {label}")));
            }
        }
        for tier in 1..=3 {
            if !t.tiers.contains_key(&format!("tier{tier}")) {
                return Err(SimError::Templates(format!("missing tier{tier}")));
            }
        }
        Ok(t)
    }

    /// Phrase pool for `skill` at `tier` (cumulative over lower tiers).
    pub fn phrases(&self, skill: SkillLabel, tier: u8) -> Vec<&str> {
        let p = &self.skills[skill.as_str()];
        let mut out: Vec<&str> = p.tier1.iter().map(String::as_str).collect();
        if tier >= 2 {
            out.extend(p.tier2.iter().map(String::as_str));
        }
        if tier >= 3 {
            out.extend(p.tier3.iter().map(String::as_str));
        }
        out
    }

    pub fn distractors(&self, tier: u8) -> [usize; 2] {
        self.tiers[&format!("tier{}", tier.clamp(1, 3))].distractors
    }
}

pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    slots.iter().fold(template.to_string(), |acc, (k, v)| {
        acc.replace(&format!("{{{k}}}"), v)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Target {
    Object { index: usize, part: Part },
    Drawer { index: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub skill: SkillLabel,
    pub tier: u8,
    pub instruction: String,
    /// What the grounding keypoint should land on.
    pub target: Target,
    /// The manipulated object, if any.
    pub object: Option<usize>,
    /// Whether the object starts on the table and must be picked first.
    pub compound: bool,
    /// Position of the manipulated object at the start of the episode.
    pub start: Option<[f64; 3]>,
}

impl TaskSpec {
    /// Target of the step that executes `skill` within this task.
    pub fn target_for(&self, skill: SkillLabel) -> Target {
        match (skill, self.object) {
            (SkillLabel::Pick, Some(index)) if self.skill != SkillLabel::Pick => Target::Object {
                index,
                part: Part::Grasp,
            },
            _ => self.target,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub spec: SceneSpec,
    pub state: WorldState,
    pub task: TaskSpec,
}

pub fn target_point(state: &WorldState, spec: &SceneSpec, target: Target) -> Option<Point3<f64>> {
    match target {
        Target::Object { index, part } => state.anchor(spec, index, part),
        Target::Drawer { index } => state.handle_anchor(index),
    }
}

fn target_id(target: Target) -> PartId {
    match target {
        Target::Object { index, .. } => PartId::Object(index),
        Target::Drawer { index } => PartId::Handle(index),
    }
}

/// Projection of the target anchor into the grounding camera, if the pixel it
/// falls on actually shows the target.
pub fn ground_truth_keypoint(
    state: &WorldState,
    spec: &SceneSpec,
    target: Target,
) -> Result<[f64; 2], SimError> {
    let p = target_point(state, spec, target)
        .ok_or_else(|| SimError::InfeasibleTask("target has no anchor".into()))?;
    let cam = spec.grounding();
    let proj = cam.project(&p).map_err(|_| SimError::Occluded)?;
    let (u, v) = (proj.u.round(), proj.v.round());
    if !cam.intrinsics.contains(u, v) {
        return Err(SimError::Occluded);
    }
    let prims = state.primitives(spec);
    match cast(&prims, cam, u, v) {
        Some((_, _, i)) if prims[i].id == target_id(target) => Ok([proj.u, proj.v]),
        _ => Err(SimError::Occluded),
    }
}

fn yaw_of(pose: &Pose) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), pose.euler().yaw)
}

fn tilt() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::y_axis(), POUR_TILT)
}

/// Ideal interaction waypoint for `skill` against `target` in the current state.
pub fn expert_waypoints(
    state: &WorldState,
    spec: &SceneSpec,
    skill: SkillLabel,
    target: Target,
) -> Result<Vec<Pose>, SimError> {
    let missing = || SimError::InfeasibleTask(format!("{skill} target missing"));
    let p = target_point(state, spec, target).ok_or_else(missing)?;
    let object_pose = match target {
        Target::Object { index, .. } => Some(state.objects[index]),
        Target::Drawer { .. } => None,
    };
    let pose = match skill {
        SkillLabel::Pick => Pose::new(p.coords, yaw_of(&object_pose.ok_or_else(missing)?)),
        SkillLabel::Place => Pose::new(p.coords, UnitQuaternion::identity()),
        SkillLabel::Open | SkillLabel::Close => match target {
            Target::Drawer { index } => state.handle_grasp_pose(index).ok_or_else(missing)?,
            _ => return Err(missing()),
        },
        SkillLabel::ReorientMug => {
            Pose::new(p.coords, *object_pose.ok_or_else(missing)?.orientation())
        }
        SkillLabel::PourCup => Pose::new(p.coords + Vector3::z() * POUR_HEIGHT, tilt()),
        SkillLabel::RefillKeurig => Pose::new(
            p.coords + Vector3::z() * POUR_HEIGHT,
            yaw_of(&object_pose.ok_or_else(missing)?) * tilt(),
        ),
        SkillLabel::LoadPod => Pose::new(p.coords, yaw_of(&object_pose.ok_or_else(missing)?)),
    };
    Ok(vec![pose])
}

pub fn check_success(state: &WorldState, spec: &SceneSpec, task: &TaskSpec) -> bool {
    let target = target_point(state, spec, task.target);
    match task.skill {
        SkillLabel::Pick => match (task.object, task.start) {
            (Some(i), Some(start)) => {
                state.held_object() == Some(i) && state.objects[i].position.z >= start[2] + 0.04
            }
            _ => false,
        },
        SkillLabel::Place => match (task.object, target) {
            (Some(i), Some(dest)) => {
                let Some(a) = state.anchor(spec, i, Part::Grasp) else {
                    return false;
                };
                state.held_object() != Some(i)
                    && (a.x - dest.x).hypot(a.y - dest.y) <= 0.03
                    && a.z >= dest.z
            }
            _ => false,
        },
        SkillLabel::Open | SkillLabel::Close => match task.target {
            Target::Drawer { index } => {
                let e = state.drawers[index];
                if task.skill == SkillLabel::Open {
                    e >= 0.7
                } else {
                    e <= 0.1
                }
            }
            _ => false,
        },
        SkillLabel::ReorientMug => task.object.is_some_and(|i| {
            let axis = state.objects[i].orientation() * Vector3::z();
            axis.z >= 15f64.to_radians().cos()
        }),
        SkillLabel::PourCup | SkillLabel::RefillKeurig => {
            let (Some(dest), Ok(kappa)) = (
                target,
                expert_waypoints(state, spec, task.skill, task.target),
            ) else {
                return false;
            };
            let g = &state.gripper.pose;
            geodesic_angle(g.orientation(), kappa[0].orientation()) <= 10f64.to_radians()
                && (g.position.x - dest.x).hypot(g.position.y - dest.y) <= 0.03
                && g.position.z > dest.z
        }
        SkillLabel::LoadPod => match (task.object, target) {
            (Some(i), Some(slot)) => {
                let pod = state.objects[i].position;
                let rim = slot.z - 0.004;
                state.held_object() != Some(i)
                    && (pod.x - slot.x).hypot(pod.y - slot.y) <= 0.01
                    && pod.z < rim
            }
            _ => false,
        },
    }
}

const LEGO_COLORS: [(&str, [u8; 3]); 3] = [
    ("red", [210, 40, 40]),
    ("blue", [40, 80, 210]),
    ("yellow", [230, 200, 30]),
];

fn tabletop_pool() -> Vec<ObjectSpec> {
    let mut out = vec![
        ObjectSpec::new("lemon", ObjectKind::Lemon),
        ObjectSpec::new("screwdriver", ObjectKind::Screwdriver),
        ObjectSpec::new("expo marker", ObjectKind::Marker),
    ];
    for (name, color) in LEGO_COLORS {
        let mut o = ObjectSpec::new(&format!("{name} lego"), ObjectKind::Lego);
        o.color = color;
        out.push(o);
    }
    out
}

fn drawer_state(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.7) {
        0.0
    } else {
        rng.gen_range(0.2..1.0)
    }
}

/// Builds one scene for `skill`. The returned task has no `start` yet.
fn build(
    skill: SkillLabel,
    tier: u8,
    compound: bool,
    rng: &mut ChaCha8Rng,
    templates: &Templates,
) -> (SceneSpec, TaskSpec, Option<ObjectSpec>) {
    let [lo, hi] = templates.distractors(tier);
    let n_distractors = rng.gen_range(lo..=hi);
    let phrase = *templates
        .phrases(skill, tier)
        .choose(rng)
        .expect("non-empty pool");
    let mut objects: Vec<ObjectSpec> = Vec::new();
    let mut cabinet = None;
    let mut object = None;
    let mut held = None;
    let target;
    let instruction;
    match skill {
        SkillLabel::Pick | SkillLabel::Place | SkillLabel::Open | SkillLabel::Close => {
            let mut pool = tabletop_pool();
            pool.shuffle(rng);
            let mut ext = [0.0; 3];
            for e in ext.iter_mut() {
                *e = drawer_state(rng);
            }
            let drawer = rng.gen_range(0..3);
            match skill {
                SkillLabel::Open => ext[drawer] = 0.0,
                SkillLabel::Close => ext[drawer] = rng.gen_range(0.6..1.0),
                _ => {}
            }
            cabinet = Some(CabinetSpec {
                requested: None,
                extensions: ext,
            });
            match skill {
                SkillLabel::Pick | SkillLabel::Place => {
                    let obj = pool.remove(0);
                    objects.push(obj.clone());
                    object = Some(0);
                    let bowl_name = if rng.gen_bool(0.5) {
                        "bowl"
                    } else {
                        "green bowl"
                    };
                    objects.push(ObjectSpec::new(bowl_name, ObjectKind::Bowl));
                    if skill == SkillLabel::Pick {
                        target = Target::Object {
                            index: 0,
                            part: Part::Grasp,
                        };
                        instruction = fill(phrase, &[("object", &obj.name)]);
                    } else {
                        target = Target::Object {
                            index: 1,
                            part: Part::Top,
                        };
                        instruction =
                            fill(phrase, &[("object", &obj.name), ("destination", bowl_name)]);
                        if !compound {
                            held = Some(obj);
                        }
                    }
                }
                _ => {
                    target = Target::Drawer { index: drawer };
                    instruction = fill(phrase, &[("drawer", DRAWER_NAMES[drawer])]);
                }
            }
            objects.extend(pool.into_iter().take(n_distractors));
        }
        _ => {
            objects.push(ObjectSpec::new("keurig", ObjectKind::Keurig));
            let cup_name = if rng.gen_bool(0.5) { "cup" } else { "blue cup" };
            objects.push(ObjectSpec::new(cup_name, ObjectKind::Cup));
            let mut pool = vec![
                ObjectSpec::new("lemon", ObjectKind::Lemon),
                ObjectSpec::new("red lego", ObjectKind::Lego),
                ObjectSpec::new("expo marker", ObjectKind::Marker),
            ];
            pool.shuffle(rng);
            match skill {
                SkillLabel::ReorientMug => {
                    let mut mug = ObjectSpec::new("mug", ObjectKind::Mug);
                    mug.lying = true;
                    objects.push(mug);
                    object = Some(2);
                    target = Target::Object {
                        index: 2,
                        part: Part::Grasp,
                    };
                    instruction = fill(phrase, &[("object", "mug")]);
                }
                SkillLabel::PourCup | SkillLabel::RefillKeurig => {
                    let pitcher = ObjectSpec::new("pitcher", ObjectKind::Pitcher);
                    objects.push(pitcher.clone());
                    held = Some(pitcher);
                    object = Some(2);
                    target = if skill == SkillLabel::PourCup {
                        Target::Object {
                            index: 1,
                            part: Part::Top,
                        }
                    } else {
                        Target::Object {
                            index: 0,
                            part: Part::Reservoir,
                        }
                    };
                    instruction = fill(phrase, &[("destination", cup_name)]);
                    pool.push(ObjectSpec::new("mug", ObjectKind::Mug));
                }
                _ => {
                    let pod = ObjectSpec::new("pod", ObjectKind::Pod);
                    objects.push(pod.clone());
                    held = Some(pod);
                    object = Some(2);
                    target = Target::Object {
                        index: 0,
                        part: Part::Slot,
                    };
                    instruction = phrase.to_string();
                }
            }
            objects.extend(pool.into_iter().take(n_distractors));
        }
    }
    let spec = SceneSpec::new(objects, cabinet, rng.gen());
    let task = TaskSpec {
        skill,
        tier,
        instruction,
        target,
        object,
        compound,
        start: None,
    };
    (spec, task, held)
}

fn try_episode(
    skill: SkillLabel,
    tier: u8,
    compound: bool,
    seed: u64,
    templates: &Templates,
) -> Result<Episode, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (spec, mut task, held) = build(skill, tier, compound, &mut rng, templates);
    let mut state = reset(&spec)?;
    if held.is_some() {
        let i = task.object.expect("held object is the task object");
        let rest = state.objects[i];
        let grip = match skill {
            SkillLabel::Place => {
                let a = state.anchor(&spec, i, Part::Grasp).expect("graspable");
                Pose::new(a.coords + Vector3::z() * 0.05, yaw_of(&rest))
            }
            _ => state.gripper.pose,
        };
        state.gripper.pose = grip;
        state.attach_at_gripper(&spec, i);
    }
    task.start = task.object.map(|i| {
        let p = state.objects[i].position;
        [p.x, p.y, p.z]
    });
    ground_truth_keypoint(&state, &spec, task.target)?;
    if compound {
        ground_truth_keypoint(&state, &spec, task.target_for(SkillLabel::Pick))?;
    }
    if check_success(&state, &spec, &task) {
        return Err(SimError::InfeasibleTask("already satisfied".into()));
    }
    Ok(Episode { spec, state, task })
}

fn derive(seed: u64, attempt: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ attempt.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Samples a feasible episode whose target is visible to the grounding camera.
pub fn sample_episode(skill: SkillLabel, tier: u8, seed: u64) -> Result<Episode, SimError> {
    sample_with(skill, tier, false, seed, &Templates::standard())
}

/// Pick-then-place episode that starts with the object on the table.
pub fn sample_compound_episode(tier: u8, seed: u64) -> Result<Episode, SimError> {
    sample_with(SkillLabel::Place, tier, true, seed, &Templates::standard())
}

pub fn sample_with(
    skill: SkillLabel,
    tier: u8,
    compound: bool,
    seed: u64,
    templates: &Templates,
) -> Result<Episode, SimError> {
    let mut last = None;
    for attempt in 0..SAMPLE_ATTEMPTS {
        match try_episode(skill, tier, compound, derive(seed, attempt), templates) {
            Ok(ep) => return Ok(ep),
            Err(e) => last = Some(e),
        }
    }
    Err(SimError::InfeasibleTask(format!(
        "{skill}: no feasible episode after {SAMPLE_ATTEMPTS} attempts ({})",
        last.map(|e| e.to_string()).unwrap_or_default()
    )))
}
