//! Observe, ground, route, infer waypoints, execute, replan.

use std::time::Instant;

use manip_core::acting::{
    actor_forward, annotate_keypoint_mask, downsample_cloud, infer_waypoints,
};
use manip_core::geometry::Pose;
use manip_core::grounding::{
    argmax_keypoint, gaussian_target, with_skill_context, Heatmap, Instruction,
};
use manip_core::router::select_skills;
use manip_core::skills::{run_controller, SkillLabel, Trajectory};
use manip_sim::physics::apply_trajectory;
use manip_sim::render::observe;
use manip_sim::scene::{SceneSpec, WorldState};
use manip_sim::tasks::{check_success, ground_truth_keypoint, TaskSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Router};
use crate::models::Models;
use crate::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeypointSource {
    #[default]
    Learned,
    /// Projection of the ground-truth target, with a Gaussian heatmap around it.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskStats {
    pub points: usize,
    pub marked: usize,
    pub radius: f64,
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timings {
    pub route_ms: f64,
    pub observe_ms: f64,
    pub ground_ms: f64,
    pub act_ms: f64,
    pub execute_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub instruction: String,
    /// Routed label sequence this step belongs to.
    pub labels: Vec<SkillLabel>,
    /// Position of this step within `labels`.
    pub index: usize,
    pub skill: Option<SkillLabel>,
    pub grounding_text: Option<String>,
    pub keypoint_source: KeypointSource,
    pub heatmap: Option<Heatmap>,
    pub keypoint: Option<[usize; 2]>,
    pub mask: Option<MaskStats>,
    pub waypoints: Vec<Pose>,
    /// Gripper pose the controller started from.
    pub start: Option<Pose>,
    pub trajectory: Option<Trajectory>,
    pub executed: bool,
    /// Task check after the last step of an episode with a known task.
    pub success: Option<bool>,
    pub error: Option<String>,
    pub timings: Timings,
}

impl StepTrace {
    fn failed(
        instruction: &str,
        labels: Vec<SkillLabel>,
        index: usize,
        skill: Option<SkillLabel>,
        error: String,
    ) -> Self {
        Self {
            instruction: instruction.to_string(),
            labels,
            index,
            skill,
            grounding_text: None,
            keypoint_source: KeypointSource::Learned,
            heatmap: None,
            keypoint: None,
            mask: None,
            waypoints: Vec::new(),
            start: None,
            trajectory: None,
            executed: false,
            success: None,
            error: Some(error),
            timings: Timings::default(),
        }
    }
}

/// Routed labels still to execute for one instruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub instruction: String,
    pub labels: Vec<SkillLabel>,
    pub next: usize,
}

impl Plan {
    pub fn is_done(&self) -> bool {
        self.next >= self.labels.len()
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Routes `instruction`. A leading `pick` is dropped when the gripper
/// already holds an object.
pub fn plan(instruction: &str, state: &WorldState, router: &Router) -> Result<Plan, PipelineError> {
    let instr = Instruction::new(instruction)?;
    let mut labels = select_skills(&instr, router.client.as_ref(), &router.template)?;
    if labels.len() > 1 && labels[0] == SkillLabel::Pick && state.held_object().is_some() {
        labels.remove(0);
    }
    Ok(Plan {
        instruction: instruction.to_string(),
        labels,
        next: 0,
    })
}

/// Seed of the actor's point subsample for step `index`.
fn step_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Executes the head of `plan` from a fresh observation. Failures leave the
/// world state unchanged and are recorded in the trace.
pub fn step(
    plan: &mut Plan,
    state: &WorldState,
    spec: &SceneSpec,
    models: &Models,
    config: &PipelineConfig,
    oracle: Option<[f64; 2]>,
) -> (StepTrace, WorldState) {
    let index = plan.next;
    let Some(&skill) = plan.labels.get(index) else {
        let trace = StepTrace::failed(
            &plan.instruction,
            plan.labels.clone(),
            index,
            None,
            "plan is complete".into(),
        );
        return (trace, state.clone());
    };
    plan.next += 1;
    let mut trace = StepTrace::failed(
        &plan.instruction,
        plan.labels.clone(),
        index,
        Some(skill),
        String::new(),
    );
    trace.error = None;
    match execute(&mut trace, skill, state, spec, models, config, oracle) {
        Ok(next) => {
            trace.executed = true;
            (trace, next)
        }
        Err(e) => {
            trace.error = Some(e.to_string());
            (trace, state.clone())
        }
    }
}

fn execute(
    trace: &mut StepTrace,
    skill: SkillLabel,
    state: &WorldState,
    spec: &SceneSpec,
    models: &Models,
    config: &PipelineConfig,
    oracle: Option<[f64; 2]>,
) -> Result<WorldState, PipelineError> {
    let actor = models.actor(skill)?;
    let t = Instant::now();
    let obs = observe(state, spec);
    trace.timings.observe_ms = ms(t);

    let t = Instant::now();
    let text = with_skill_context(&trace.instruction, skill.as_str());
    let heatmap = match oracle {
        Some(p) => {
            trace.keypoint_source = KeypointSource::Oracle;
            let (w, h) = (obs.image.width() as usize, obs.image.height() as usize);
            let u = (p[0].round().max(0.0) as usize).min(w - 1);
            let v = (p[1].round().max(0.0) as usize).min(h - 1);
            gaussian_target([u as f64, v as f64], models.grounding.config.sigma, w, h)
        }
        None => models.grounding.predict_heatmap(&obs.image, &text)?,
    };
    let (u, v) = argmax_keypoint(&heatmap);
    trace.grounding_text = Some(text);
    trace.keypoint = Some([u, v]);
    trace.heatmap = Some(heatmap);
    trace.timings.ground_ms = ms(t);

    let t = Instant::now();
    let mask = annotate_keypoint_mask(
        &obs.cloud,
        obs.grounding_depth(),
        (u, v),
        config.mask_radius,
        obs.grounding(),
    )?;
    trace.mask = Some(MaskStats {
        points: obs.cloud.len(),
        marked: mask.count(),
        radius: mask.radius,
    });
    let budget = config.point_budget.unwrap_or(actor.config.point_budget);
    let mut rng = ChaCha8Rng::seed_from_u64(step_seed(config.seed, trace.index));
    let (cloud, mask) = downsample_cloud(&obs.cloud, &mask.values, budget, &mut rng);
    let output = actor_forward(actor, &cloud, &mask)?;
    trace.waypoints = infer_waypoints(&output, &cloud);
    trace.timings.act_ms = ms(t);

    let t = Instant::now();
    let traj = run_controller(skill, &trace.waypoints, &state.gripper.pose)?;
    let next = apply_trajectory(state, spec, &traj);
    trace.start = Some(state.gripper.pose);
    trace.trajectory = Some(traj);
    trace.timings.execute_ms = ms(t);
    Ok(next)
}

/// Plans and runs every routed step, re-observing before each one. Stops at
/// the first failed step.
pub fn run_instruction(
    instruction: &str,
    state: &WorldState,
    spec: &SceneSpec,
    models: &Models,
    router: &Router,
    config: &PipelineConfig,
    oracle: Option<&dyn Fn(&WorldState, SkillLabel) -> Option<[f64; 2]>>,
) -> (Vec<StepTrace>, WorldState) {
    let t = Instant::now();
    let mut plan = match plan(instruction, state, router) {
        Ok(p) => p,
        Err(e) => {
            return (
                vec![StepTrace::failed(
                    instruction,
                    Vec::new(),
                    0,
                    None,
                    e.to_string(),
                )],
                state.clone(),
            )
        }
    };
    let route_ms = ms(t);
    let mut traces = Vec::new();
    let mut current = state.clone();
    while !plan.is_done() {
        let skill = plan.labels[plan.next];
        let kp = oracle.and_then(|f| f(&current, skill));
        let (mut trace, next) = step(&mut plan, &current, spec, models, config, kp);
        if traces.is_empty() {
            trace.timings.route_ms = route_ms;
        }
        current = next;
        let failed = trace.error.is_some();
        traces.push(trace);
        if failed {
            break;
        }
    }
    (traces, current)
}

/// One live episode: scene, world state, optional task and the step log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub spec: SceneSpec,
    pub state: WorldState,
    pub task: Option<TaskSpec>,
    pub log: Vec<StepTrace>,
}

impl Session {
    pub fn new(spec: SceneSpec, state: WorldState, task: Option<TaskSpec>) -> Self {
        Self {
            spec,
            state,
            task,
            log: Vec::new(),
        }
    }

    /// Runs `instruction`; with `oracle` set, keypoints come from the task's
    /// ground-truth targets. The last trace carries the task check.
    pub fn instruct(
        &mut self,
        instruction: &str,
        models: &Models,
        router: &Router,
        config: &PipelineConfig,
        oracle: bool,
    ) -> Vec<StepTrace> {
        let spec = &self.spec;
        let task = self.task.clone();
        let lookup = |s: &WorldState, skill: SkillLabel| {
            let task = task.as_ref()?;
            ground_truth_keypoint(s, spec, task.target_for(skill)).ok()
        };
        let oracle_fn: Option<&dyn Fn(&WorldState, SkillLabel) -> Option<[f64; 2]>> =
            if oracle { Some(&lookup) } else { None };
        let (mut traces, next) = run_instruction(
            instruction,
            &self.state,
            spec,
            models,
            router,
            config,
            oracle_fn,
        );
        if let (Some(task), Some(last)) = (&self.task, traces.last_mut()) {
            last.success = Some(check_success(&next, spec, task));
        }
        self.state = next;
        self.log.extend(traces.iter().cloned());
        traces
    }
}
