//! Scripted expert demonstrations and supplemental grounding labels.

use manip_core::data::SkillDemo;
use manip_core::grounding::{with_skill_context, GroundingSample};
use manip_core::skills::{run_controller, SkillLabel};

use crate::physics::apply_trajectory;
use crate::render::observe;
use crate::scene::WorldState;
use crate::tasks::{
    check_success, expert_waypoints, ground_truth_keypoint, sample_compound_episode,
    sample_episode, Episode,
};
use crate::SimError;

/// Records the initial observation and the expert waypoint of an episode,
/// replays the expert through its controller and checks that it succeeds.
pub fn scripted_demo(ep: &Episode) -> Result<(SkillDemo, WorldState), SimError> {
    let skill = ep.task.skill;
    let obs = observe(&ep.state, &ep.spec);
    let label = ground_truth_keypoint(&ep.state, &ep.spec, ep.task.target)?;
    let waypoints = expert_waypoints(&ep.state, &ep.spec, skill, ep.task.target)?;
    let traj = run_controller(skill, &waypoints, &ep.state.gripper.pose)
        .map_err(|e| SimError::InfeasibleTask(e.to_string()))?;
    let end = apply_trajectory(&ep.state, &ep.spec, &traj);
    if !check_success(&end, &ep.spec, &ep.task) {
        return Err(SimError::InfeasibleTask(format!(
            "{skill} expert replay failed"
        )));
    }
    let demo = SkillDemo {
        skill,
        instruction: ep.task.instruction.clone(),
        image: obs.image.clone(),
        camera: *obs.grounding(),
        depth: obs.grounding_depth().clone(),
        cloud: obs.cloud,
        waypoints,
        label_pixel: label,
    };
    Ok((demo, end))
}

/// Seed of the `index`-th episode of `skill` in a generated set.
pub fn episode_seed(seed: u64, skill: SkillLabel, index: usize) -> u64 {
    let s = SkillLabel::ALL
        .iter()
        .position(|l| *l == skill)
        .unwrap_or(0) as u64;
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ (s << 48) ^ index as u64
}

/// `count` demos cycling through tiers 1..=3.
pub fn generate_demos(
    skill: SkillLabel,
    count: usize,
    seed: u64,
) -> Result<Vec<SkillDemo>, SimError> {
    (0..count)
        .map(|i| {
            let ep = sample_episode(skill, 1 + (i % 3) as u8, episode_seed(seed, skill, i))?;
            scripted_demo(&ep).map(|(d, _)| d)
        })
        .collect()
}

/// Grounding-only labels: every other one is the pick stage of a
/// pick-then-place instruction, the rest are single-skill episodes.
pub fn supplemental_labels(count: usize, seed: u64) -> Result<Vec<GroundingSample>, SimError> {
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let s = seed.wrapping_mul(0x9E6C_63D0_676A_9A99) ^ (1 << 62) ^ i as u64;
        let tier = 1 + (i % 3) as u8;
        let (ep, skill) = if i % 2 == 0 {
            (sample_compound_episode(tier, s)?, SkillLabel::Pick)
        } else {
            let skill = SkillLabel::ALL[(i / 2) % SkillLabel::ALL.len()];
            (sample_episode(skill, tier, s)?, skill)
        };
        let target = ep.task.target_for(skill);
        let pixel = ground_truth_keypoint(&ep.state, &ep.spec, target)?;
        let obs = observe(&ep.state, &ep.spec);
        out.push(GroundingSample {
            image: obs.image,
            instruction: with_skill_context(&ep.task.instruction, skill.as_str()),
            pixel,
            skill: skill.as_str().to_string(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::render;
    use crate::shapes::PartId;
    use crate::tasks::{target_point, Target};

    #[test]
    fn pick_demo_waypoint_is_grasp_anchor() {
        let ep = sample_episode(SkillLabel::Pick, 1, 3).unwrap();
        let (demo, end) = scripted_demo(&ep).unwrap();
        let anchor = target_point(&ep.state, &ep.spec, ep.task.target).unwrap();
        assert_eq!(demo.waypoints.len(), 1);
        assert!((demo.waypoints[0].position - anchor.coords).norm() < 1e-12);
        assert_eq!(end.held_object(), ep.task.object);
    }

    #[test]
    fn open_demo_labels_the_handle() {
        let ep = sample_episode(SkillLabel::Open, 1, 5).unwrap();
        let (demo, _) = scripted_demo(&ep).unwrap();
        let Target::Drawer { index } = ep.task.target else {
            panic!()
        };
        let p = ep.state.handle_anchor(index).unwrap();
        let proj = ep.spec.grounding().project(&p).unwrap();
        assert_eq!(demo.label_pixel, [proj.u, proj.v]);
        let f = render(&ep.state, &ep.spec, ep.spec.grounding());
        let (u, v) = demo.label_keypoint();
        assert_eq!(f.id(u, v), Some(PartId::Handle(index)));
    }

    #[test]
    fn demos_are_deterministic() {
        let a = generate_demos(SkillLabel::Close, 3, 1).unwrap();
        let b = generate_demos(SkillLabel::Close, 3, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn supplemental_labels_carry_skill_context() {
        let labels = supplemental_labels(6, 0).unwrap();
        assert!(labels[0].instruction.ends_with("skill_pick"));
        assert!(labels.iter().all(|s| s.pixel_in_bounds()));
    }
}
