//! Seeded episode suites and deterministic metric reports.

use std::collections::BTreeMap;
use std::path::Path;

use manip_core::geometry::geodesic_angle;
use manip_core::skills::SkillLabel;
use manip_sim::tasks::{
    expert_waypoints, ground_truth_keypoint, sample_compound_episode, sample_episode, Episode,
};
use serde::{Deserialize, Serialize};

use crate::config::{PipelineConfig, Router};
use crate::models::Models;
use crate::step::{KeypointSource, Session};
use crate::PipelineError;

/// Category name of pick-then-place episodes.
pub const COMPOUND: &str = "pick_then_place";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub skill: SkillLabel,
    pub tier: u8,
    #[serde(default)]
    pub compound: bool,
    pub seed: u64,
}

impl SuiteEntry {
    pub fn category(&self) -> String {
        if self.compound {
            COMPOUND.to_string()
        } else {
            self.skill.as_str().to_string()
        }
    }

    pub fn sample(&self) -> Result<Episode, PipelineError> {
        Ok(if self.compound {
            sample_compound_episode(self.tier, self.seed)?
        } else {
            sample_episode(self.skill, self.tier, self.seed)?
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub episodes: Vec<SuiteEntry>,
}

impl Suite {
    /// `count` tier-1 episodes for each skill, plus `count` compound ones when
    /// `compound` is set. Seeds are disjoint from demo generation.
    pub fn tier1(skills: &[SkillLabel], count: usize, compound: bool, seed: u64) -> Self {
        let mut episodes = Vec::new();
        for (s, &skill) in skills.iter().enumerate() {
            for i in 0..count {
                episodes.push(SuiteEntry {
                    skill,
                    tier: 1,
                    compound: false,
                    seed: suite_seed(seed, s as u64, i),
                });
            }
        }
        if compound {
            for i in 0..count {
                episodes.push(SuiteEntry {
                    skill: SkillLabel::Place,
                    tier: 1,
                    compound: true,
                    seed: suite_seed(seed, 100, i),
                });
            }
        }
        Self { episodes }
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("suite {}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), PipelineError> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(|e| PipelineError::Config(e.to_string()))?,
        )?;
        Ok(())
    }
}

fn suite_seed(seed: u64, group: u64, index: usize) -> u64 {
    (seed ^ 0xB3A5_C0DE_0000_0000).wrapping_mul(0xFF51_AFD7_ED55_8CCD)
        ^ (group << 40)
        ^ index as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub skill: Option<SkillLabel>,
    pub keypoint: Option<[usize; 2]>,
    pub label: Option<[f64; 2]>,
    pub pixel_error: Option<f64>,
    pub position_error: Option<f64>,
    /// Degrees.
    pub orientation_error: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub index: usize,
    pub category: String,
    pub tier: u8,
    pub seed: u64,
    pub instruction: Option<String>,
    pub routed: Vec<SkillLabel>,
    pub steps: Vec<StepOutcome>,
    pub success: bool,
    /// Set when no feasible episode could be sampled; excluded from rates.
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub count: usize,
    pub skipped: usize,
    pub successes: usize,
    pub rate: f64,
}

impl Tally {
    fn add(&mut self, r: &EpisodeResult) {
        self.count += 1;
        if r.skipped.is_some() {
            self.skipped += 1;
        } else if r.success {
            self.successes += 1;
        }
        let run = self.count - self.skipped;
        self.rate = if run == 0 {
            0.0
        } else {
            self.successes as f64 / run as f64
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        let p90 = v[((0.9 * n as f64).ceil() as usize).clamp(1, n) - 1];
        Self {
            count: n,
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            p90,
            max: v[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PixelStats {
    #[serde(flatten)]
    pub stats: Stats,
    /// Fraction of keypoints within 8 px of the label.
    pub within_8px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub keypoints: KeypointSource,
    pub episodes: usize,
    pub overall: Tally,
    pub per_skill: BTreeMap<String, Tally>,
    pub per_tier: BTreeMap<String, Tally>,
    pub pixel_error: PixelStats,
    /// Meters.
    pub position_error: Stats,
    /// Degrees.
    pub orientation_error: Stats,
    pub results: Vec<EpisodeResult>,
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn rate(&self, category: &str) -> Option<f64> {
        self.per_skill.get(category).map(|t| t.rate)
    }
}

/// Runs one suite entry from reset to the task check.
pub fn run_episode(
    index: usize,
    entry: &SuiteEntry,
    models: &Models,
    router: &Router,
    config: &PipelineConfig,
    keypoints: KeypointSource,
) -> EpisodeResult {
    let mut result = EpisodeResult {
        index,
        category: entry.category(),
        tier: entry.tier,
        seed: entry.seed,
        instruction: None,
        routed: Vec::new(),
        steps: Vec::new(),
        success: false,
        skipped: None,
    };
    let ep = match entry.sample() {
        Ok(ep) => ep,
        Err(e) => {
            result.skipped = Some(e.to_string());
            return result;
        }
    };
    result.instruction = Some(ep.task.instruction.clone());
    let mut session = Session::new(ep.spec.clone(), ep.state.clone(), Some(ep.task.clone()));
    let traces = session.instruct(
        &ep.task.instruction,
        models,
        router,
        config,
        keypoints == KeypointSource::Oracle,
    );
    // Replay to recover the state each step started from.
    let mut before = ep.state.clone();
    for trace in &traces {
        result.routed.clone_from(&trace.labels);
        let mut out = StepOutcome {
            skill: trace.skill,
            keypoint: trace.keypoint,
            label: None,
            pixel_error: None,
            position_error: None,
            orientation_error: None,
            error: trace.error.clone(),
        };
        if let Some(skill) = trace.skill {
            let target = ep.task.target_for(skill);
            out.label = ground_truth_keypoint(&before, &ep.spec, target).ok();
            if let (Some(l), Some(k)) = (out.label, trace.keypoint) {
                out.pixel_error = Some((k[0] as f64 - l[0]).hypot(k[1] as f64 - l[1]));
            }
            if let (Ok(expert), Some(pred)) = (
                expert_waypoints(&before, &ep.spec, skill, target),
                trace.waypoints.first(),
            ) {
                out.position_error = Some((pred.position - expert[0].position).norm());
                out.orientation_error =
                    Some(geodesic_angle(pred.orientation(), expert[0].orientation()).to_degrees());
            }
        }
        if let Some(traj) = &trace.trajectory {
            before = manip_sim::physics::apply_trajectory(&before, &ep.spec, traj);
        }
        result.steps.push(out);
    }
    result.success = traces.last().and_then(|t| t.success).unwrap_or(false);
    result
}

/// Runs every entry on `config.workers` threads; results keep suite order.
pub fn run_benchmark(
    suite: &[SuiteEntry],
    models: &Models,
    router: &Router,
    config: &PipelineConfig,
    keypoints: KeypointSource,
) -> Result<BenchmarkReport, PipelineError> {
    if suite.is_empty() {
        return Err(PipelineError::Config("benchmark suite is empty".into()));
    }
    let workers = config.workers.clamp(1, suite.len());
    let mut slots: Vec<Option<EpisodeResult>> = vec![None; suite.len()];
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                scope.spawn(move || {
                    (w..suite.len())
                        .step_by(workers)
                        .map(|i| run_episode(i, &suite[i], models, router, config, keypoints))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for r in h.join().expect("benchmark worker panicked") {
                let i = r.index;
                slots[i] = Some(r);
            }
        }
    });
    let results: Vec<EpisodeResult> = slots
        .into_iter()
        .map(|r| r.expect("every index filled"))
        .collect();
    Ok(summarise(keypoints, results))
}

pub fn summarise(keypoints: KeypointSource, results: Vec<EpisodeResult>) -> BenchmarkReport {
    let mut overall = Tally::default();
    let mut per_skill: BTreeMap<String, Tally> = BTreeMap::new();
    let mut per_tier: BTreeMap<String, Tally> = BTreeMap::new();
    let (mut px, mut pos, mut ori) = (Vec::new(), Vec::new(), Vec::new());
    for r in &results {
        overall.add(r);
        per_skill.entry(r.category.clone()).or_default().add(r);
        per_tier
            .entry(format!("tier{}", r.tier))
            .or_default()
            .add(r);
        for s in &r.steps {
            px.extend(s.pixel_error);
            pos.extend(s.position_error);
            ori.extend(s.orientation_error);
        }
    }
    let within = if px.is_empty() {
        0.0
    } else {
        px.iter().filter(|e| **e <= 8.0).count() as f64 / px.len() as f64
    };
    BenchmarkReport {
        keypoints,
        episodes: results.len(),
        overall,
        per_skill,
        per_tier,
        pixel_error: PixelStats {
            stats: Stats::of(&px),
            within_8px: within,
        },
        position_error: Stats::of(&pos),
        orientation_error: Stats::of(&ori),
        results,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_closed_forms() {
        let s = Stats::of(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!((s.count, s.mean, s.median, s.max), (4, 2.5, 2.5, 4.0));
        assert_eq!(s.p90, 4.0);
        assert_eq!(Stats::of(&[]), Stats::default());
        let s = Stats::of(&(1..=10).map(f64::from).collect::<Vec<_>>());
        assert_eq!((s.median, s.p90), (5.5, 9.0));
    }

    #[test]
    fn tier1_suite_layout() {
        let s = Suite::tier1(&[SkillLabel::Pick, SkillLabel::Open], 5, true, 0);
        assert_eq!(s.episodes.len(), 15);
        assert!(s.episodes.iter().all(|e| e.tier == 1));
        assert_eq!(s.episodes.iter().filter(|e| e.compound).count(), 5);
        let mut seeds: Vec<u64> = s.episodes.iter().map(|e| e.seed).collect();
        seeds.sort_unstable();
        seeds.dedup();
        assert_eq!(seeds.len(), 15);
    }

    fn result(category: &str, tier: u8, success: bool, skipped: bool) -> EpisodeResult {
        EpisodeResult {
            index: 0,
            category: category.into(),
            tier,
            seed: 0,
            instruction: None,
            routed: Vec::new(),
            steps: vec![StepOutcome {
                skill: None,
                keypoint: None,
                label: None,
                pixel_error: Some(if success { 2.0 } else { 20.0 }),
                position_error: None,
                orientation_error: None,
                error: None,
            }],
            success,
            skipped: skipped.then(|| "infeasible".into()),
        }
    }

    proptest! {
        #[test]
        fn per_skill_counts_sum_to_suite(outcomes in prop::collection::vec((0usize..3, 1u8..4, any::<bool>(), any::<bool>()), 1..40)) {
            let names = ["pick", "open", COMPOUND];
            let results: Vec<_> = outcomes.iter().map(|&(c, t, s, k)| result(names[c], t, s, k)).collect();
            let r = summarise(KeypointSource::Learned, results);
            prop_assert_eq!(r.per_skill.values().map(|t| t.count).sum::<usize>(), outcomes.len());
            prop_assert_eq!(r.per_tier.values().map(|t| t.count).sum::<usize>(), outcomes.len());
            prop_assert_eq!(r.overall.count, outcomes.len());
            let run = outcomes.iter().filter(|o| !o.3).count();
            let wins = outcomes.iter().filter(|o| !o.3 && o.2).count();
            prop_assert!(r.overall.successes == wins);
            if run > 0 {
                prop_assert!((r.overall.rate - wins as f64 / run as f64).abs() < 1e-15);
            }
            for t in r.per_skill.values() {
                prop_assert!((0.0..=1.0).contains(&t.rate));
            }
        }
    }
}
