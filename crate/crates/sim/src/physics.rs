//! Kinematic execution of gripper setpoints.

use manip_core::geometry::Pose;
use manip_core::skills::{GripperCommand, Setpoint, Trajectory};
use nalgebra::Point3;

use crate::scene::{
    handle_half_width, handle_local, Held, ObjectKind, Part, SceneSpec, WorldState, DRAWER_TRAVEL,
    GRASP_RADIUS, SLOT_DEPTH, SLOT_RADIUS,
};

const PUSH_LATERAL_SLACK: f64 = 0.02;
const PUSH_VERTICAL_SLACK: f64 = 0.03;

/// Outward coordinate of `p` along the drawer axis.
fn outward_coordinate(state: &WorldState, p: &Point3<f64>) -> Option<f64> {
    let place = state.cabinet?;
    let axis = state.drawer_outward()?;
    Some((p.coords - nalgebra::Vector3::new(place.x, place.y, 0.0)).dot(&axis))
}

fn push_drawers(state: &mut WorldState) {
    let Some(place) = state.cabinet else { return };
    let g = place
        .isometry()
        .inverse_transform_point(&Point3::from(state.gripper.pose.position));
    for d in 0..state.drawers.len() {
        let e = state.drawers[d];
        let h = handle_local(d, e);
        let h0 = handle_local(d, 0.0);
        let lateral = g.y.abs() <= handle_half_width() + PUSH_LATERAL_SLACK;
        let vertical = (g.z - h.z).abs() <= PUSH_VERTICAL_SLACK;
        if lateral && vertical && g.x > h.x && g.x < h0.x + 0.2 {
            let pushed = ((h0.x - g.x) / DRAWER_TRAVEL).clamp(0.0, 1.0);
            state.drawers[d] = e.min(pushed);
        }
    }
}

fn try_grasp(state: &mut WorldState, spec: &SceneSpec) {
    let g = Point3::from(state.gripper.pose.position);
    let mut best: Option<(f64, Held)> = None;
    let mut offer = |dist: f64, held: Held| {
        if dist <= GRASP_RADIUS && best.is_none_or(|(b, _)| dist < b) {
            best = Some((dist, held));
        }
    };
    for i in 0..spec.objects.len() {
        if let Some(a) = state.anchor(spec, i, Part::Grasp) {
            let relative = Pose::from_isometry(
                &(state.gripper.pose.isometry().inverse() * state.objects[i].isometry()),
            );
            offer((a - g).norm(), Held::Object { index: i, relative });
        }
    }
    for d in 0..state.drawers.len() {
        if let (Some(a), Some(s0)) = (state.handle_anchor(d), outward_coordinate(state, &g)) {
            offer(
                (a - g).norm(),
                Held::Handle {
                    drawer: d,
                    s0,
                    e0: state.drawers[d],
                },
            );
        }
    }
    state.gripper.held = best.map(|(_, h)| h);
}

/// Height of the surface under `(x, y)` that an object with bottom at `bottom` lands on.
pub fn support_height(
    state: &WorldState,
    spec: &SceneSpec,
    skip: usize,
    x: f64,
    y: f64,
    bottom: f64,
) -> f64 {
    let mut best = 0.0f64;
    for (j, o) in spec.objects.iter().enumerate() {
        if j == skip || state.held_object() == Some(j) {
            continue;
        }
        let local = state.objects[j]
            .isometry()
            .inverse_transform_point(&Point3::new(x, y, state.objects[j].position.z));
        let top = state.object_aabb(spec, j).max[2];
        let candidate = match o.kind {
            ObjectKind::Bowl | ObjectKind::Cup => {
                let r = if o.kind == ObjectKind::Bowl {
                    0.07
                } else {
                    0.035
                };
                (local.x.hypot(local.y) <= r).then_some(top)
            }
            ObjectKind::Keurig => {
                let slot = state
                    .anchor(spec, j, Part::Slot)
                    .expect("keurig has a slot");
                let body_top = slot.z - 0.004;
                if (x - slot.x).hypot(y - slot.y) <= SLOT_RADIUS {
                    Some(body_top - SLOT_DEPTH)
                } else if local.x.abs() <= 0.1 && local.y.abs() <= 0.085 {
                    Some(top)
                } else {
                    None
                }
            }
            _ => None,
        };
        if let Some(z) = candidate {
            if z <= bottom + 1e-9 {
                best = best.max(z);
            }
        }
    }
    best
}

fn release(state: &mut WorldState, spec: &SceneSpec) {
    if let Some(Held::Object { index, .. }) = state.gripper.held {
        state.gripper.held = None;
        let bb = state.object_aabb(spec, index);
        let (cx, cy) = ((bb.min[0] + bb.max[0]) / 2.0, (bb.min[1] + bb.max[1]) / 2.0);
        let z = support_height(state, spec, index, cx, cy, bb.min[2]);
        state.objects[index] =
            state.objects[index].translated(nalgebra::Vector3::new(0.0, 0.0, z - bb.min[2]));
    }
    state.gripper.held = None;
}

/// Moves the gripper to one setpoint, drags whatever it holds, then applies
/// the gripper command.
pub fn step_setpoint(state: &mut WorldState, spec: &SceneSpec, setpoint: &Setpoint) {
    state.gripper.pose = setpoint.pose;
    match state.gripper.held {
        Some(Held::Object { index, relative }) => {
            state.objects[index] =
                Pose::from_isometry(&(setpoint.pose.isometry() * relative.isometry()));
        }
        Some(Held::Handle { drawer, s0, e0 }) => {
            if let Some(s) = outward_coordinate(state, &Point3::from(setpoint.pose.position)) {
                state.drawers[drawer] = (e0 + (s - s0) / DRAWER_TRAVEL).clamp(0.0, 1.0);
            }
        }
        None => push_drawers(state),
    }
    match setpoint.gripper {
        GripperCommand::Close => {
            state.gripper.closed = true;
            if state.gripper.held.is_none() {
                try_grasp(state, spec);
            }
        }
        GripperCommand::Open => {
            state.gripper.closed = false;
            release(state, spec);
        }
        GripperCommand::Hold => {}
    }
}

pub fn apply_trajectory(state: &WorldState, spec: &SceneSpec, traj: &Trajectory) -> WorldState {
    let mut s = state.clone();
    for sp in &traj.setpoints {
        step_setpoint(&mut s, spec, sp);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{reset, CabinetSpec, ObjectSpec};
    use manip_core::skills::{run_controller, SkillLabel};
    use nalgebra::Vector3;

    fn lone(kind: ObjectKind) -> (SceneSpec, WorldState) {
        let mut o = ObjectSpec::new("cube", kind);
        o.requested = Some([0.45, 0.05, 0.2]);
        let spec = SceneSpec::new(vec![o], None, 0);
        let s = reset(&spec).unwrap();
        (spec, s)
    }

    #[test]
    fn close_far_from_everything_grasps_nothing() {
        let (spec, s) = lone(ObjectKind::Lego);
        let mut t = s.clone();
        let far = Pose::from_translation(0.45, 0.05 + 0.021, 0.0195);
        step_setpoint(
            &mut t,
            &spec,
            &Setpoint {
                pose: far,
                gripper: GripperCommand::Close,
            },
        );
        assert!(t.gripper.closed);
        assert_eq!(t.gripper.held, None);
        assert_eq!(t.objects, s.objects);
    }

    #[test]
    fn scripted_pick_lifts_cube() {
        let (spec, s) = lone(ObjectKind::Lego);
        let anchor = s.anchor(&spec, 0, Part::Grasp).unwrap();
        let kappa = Pose::new(anchor.coords, s.objects[0].orientation().to_owned());
        let traj = run_controller(SkillLabel::Pick, &[kappa], &s.gripper.pose).unwrap();
        let t = apply_trajectory(&s, &spec, &traj);
        assert_eq!(t.held_object(), Some(0));
        assert!((t.objects[0].position.z - s.objects[0].position.z - 0.05).abs() < 1e-9);
        assert!((t.objects[0].position.xy() - s.objects[0].position.xy()).norm() < 1e-9);
    }

    #[test]
    fn open_drawer_extends_monotonically() {
        let spec = SceneSpec::new(
            vec![],
            Some(CabinetSpec {
                requested: Some([0.72, 0.05, 0.2]),
                extensions: [0.0; 3],
            }),
            0,
        );
        let s = reset(&spec).unwrap();
        let kappa = s.handle_grasp_pose(1).unwrap();
        let traj = run_controller(SkillLabel::Open, &[kappa], &s.gripper.pose).unwrap();
        let mut t = s.clone();
        let mut last = 0.0;
        for sp in &traj.setpoints {
            step_setpoint(&mut t, &spec, sp);
            assert!(t.drawers[1] >= last);
            last = t.drawers[1];
        }
        assert!(last >= 0.9);
        assert_eq!((t.drawers[0], t.drawers[2]), (0.0, 0.0));
        assert_eq!(t.gripper.held, None);
    }

    #[test]
    fn close_pushes_drawer_shut() {
        let spec = SceneSpec::new(
            vec![],
            Some(CabinetSpec {
                requested: Some([0.72, -0.05, -0.2]),
                extensions: [0.9, 0.0, 0.0],
            }),
            0,
        );
        let s = reset(&spec).unwrap();
        let kappa = s.handle_grasp_pose(0).unwrap();
        let traj = run_controller(SkillLabel::Close, &[kappa], &s.gripper.pose).unwrap();
        let t = apply_trajectory(&s, &spec, &traj);
        assert_eq!(t.drawers[0], 0.0);
    }

    #[test]
    fn released_objects_land_on_supports() {
        let mut bowl = ObjectSpec::new("bowl", ObjectKind::Bowl);
        bowl.requested = Some([0.45, 0.1, 0.0]);
        let mut lemon = ObjectSpec::new("lemon", ObjectKind::Lemon);
        lemon.requested = Some([0.45, -0.15, 0.0]);
        let spec = SceneSpec::new(vec![bowl, lemon], None, 0);
        let mut s = reset(&spec).unwrap();
        s.gripper.pose = Pose::from_translation(0.46, 0.1, 0.3);
        s.attach_at_gripper(&spec, 1);
        let here = s.gripper.pose;
        step_setpoint(
            &mut s,
            &spec,
            &Setpoint {
                pose: here,
                gripper: GripperCommand::Open,
            },
        );
        let bb = s.object_aabb(&spec, 1);
        assert!((bb.min[2] - 0.05).abs() < 1e-9);
        s.gripper.pose = Pose::from_translation(0.3, -0.2, 0.3);
        s.attach_at_gripper(&spec, 1);
        let moved = s.gripper.pose.translated(Vector3::new(0.0, 0.0, 0.01));
        step_setpoint(
            &mut s,
            &spec,
            &Setpoint {
                pose: moved,
                gripper: GripperCommand::Open,
            },
        );
        assert!(s.object_aabb(&spec, 1).min[2].abs() < 1e-9);
    }

    #[test]
    fn pod_drops_into_slot() {
        let mut k = ObjectSpec::new("keurig", ObjectKind::Keurig);
        k.requested = Some([0.72, 0.0, 0.1]);
        let spec = SceneSpec::new(vec![k, ObjectSpec::new("pod", ObjectKind::Pod)], None, 0);
        let mut s = reset(&spec).unwrap();
        let slot = s.anchor(&spec, 0, Part::Slot).unwrap();
        let kappa = Pose::new(slot.coords, s.objects[0].orientation().to_owned());
        s.gripper.pose = Pose::from_translation(0.4, 0.0, 0.45);
        s.attach_at_gripper(&spec, 1);
        let traj = run_controller(SkillLabel::LoadPod, &[kappa], &s.gripper.pose).unwrap();
        let t = apply_trajectory(&s, &spec, &traj);
        let pod = t.objects[1].position;
        assert!((pod.xy() - slot.coords.xy()).norm() < 1e-9);
        assert!(pod.z < slot.z - 0.004);
    }
}
