use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use manip_core::data::load_dataset;
use manip_core::skills::SkillLabel;
use manip_pipeline::benchmark::{run_benchmark, Suite};
use manip_pipeline::config::{PipelineConfig, Router};
use manip_pipeline::models::Models;
use manip_pipeline::service::{new_session, serve, AppState};
use manip_pipeline::step::KeypointSource;
use manip_pipeline::train::{
    build_models, generate_dataset, generate_standard_data, generate_supplemental,
    resolve_skill_dir, train_actor, train_grounding_dir, TrainingPlan, SUPPLEMENTAL_DIR,
};

#[derive(Parser)]
#[command(name = "manip", about = "Language-conditioned tabletop manipulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scripted demonstrations for one skill, or supplemental
    /// grounding labels with `--skill supplemental`.
    GenData {
        #[arg(long)]
        skill: String,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the grounding model on every dataset below `--data`.
    TrainGrounding {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0.75)]
        ratio: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train one skill's actor.
    TrainSkill {
        #[arg(long)]
        skill: SkillLabel,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Generate the standard data (unless `--data` already holds it), train
    /// every model and write `pipeline.toml` into `--out`.
    Build {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a suite and write the JSON report.
    Bench {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Use ground-truth keypoints instead of the grounding model.
        #[arg(long)]
        oracle: bool,
    },
    /// Execute one instruction in the configured scene and print the traces.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData {
            skill,
            count,
            seed,
            out,
        } => {
            if skill == "supplemental" {
                let path = generate_supplemental(&out, count, seed)?;
                println!("wrote {count} labels to {}", path.display());
            } else {
                let label: SkillLabel = skill.parse()?;
                let m = generate_dataset(&out, label, count, seed)?;
                println!("wrote {} {label} demos to {}", m.count, out.display());
            }
        }
        Command::TrainGrounding {
            data,
            out,
            epochs,
            ratio,
            seed,
        } => {
            let mut plan = TrainingPlan {
                supplemental_ratio: ratio,
                data_seed: seed,
                ..TrainingPlan::default()
            };
            plan.grounding.seed = seed;
            if let Some(e) = epochs {
                plan.grounding.epochs = e;
            }
            let run = train_grounding_dir(&data, &plan)?;
            run.model.to_checkpoint_file().save(&out)?;
            let within = run.val_pixel_error.iter().filter(|e| **e <= 8.0).count();
            println!(
                "val loss {:?}; {within}/{} val keypoints within 8 px",
                run.report.val_loss,
                run.val_pixel_error.len()
            );
        }
        Command::TrainSkill {
            skill,
            data,
            out,
            steps,
        } => {
            let mut plan = TrainingPlan::default();
            if let Some(s) = steps {
                plan.actor.steps = s;
            }
            let (demos, manifest) = load_dataset(&resolve_skill_dir(&data, skill))?;
            if manifest.skill != skill {
                bail!("dataset holds {} demos, not {skill}", manifest.skill);
            }
            let run = train_actor(&demos, &manifest, &plan)?;
            run.model.to_checkpoint_file().save(&out)?;
            let mut pos: Vec<f64> = run.val_errors.iter().map(|e| e.0).collect();
            pos.sort_by(f64::total_cmp);
            println!(
                "final loss {:?}; median val position error {:.4} m",
                run.report.loss.last(),
                pos.get(pos.len() / 2).copied().unwrap_or(f64::NAN)
            );
        }
        Command::Build { data, out, seed } => {
            let plan = TrainingPlan {
                data_seed: seed,
                ..TrainingPlan::default()
            };
            if !data.join(SUPPLEMENTAL_DIR).is_dir() {
                generate_standard_data(&data, &plan)?;
            }
            let (_, summary) = build_models(&data, &out, &plan)?;
            println!(
                "grounding: {:.1}% of val keypoints within 8 px",
                100.0 * summary.grounding_val_within_8px
            );
            for (skill, loss) in &summary.actor_final_loss {
                println!("{skill}: final loss {loss:.4}");
            }
            println!("wrote {}", out.join("pipeline.toml").display());
        }
        Command::Bench {
            suite,
            config,
            report,
            oracle,
        } => {
            let config = PipelineConfig::load(&config)?;
            let models = Models::load(&config)?;
            let router = Router::from_mode(&config.router)?;
            let suite = Suite::load(&suite)?;
            let keypoints = if oracle {
                KeypointSource::Oracle
            } else {
                KeypointSource::Learned
            };
            let r = run_benchmark(&suite.episodes, &models, &router, &config, keypoints)?;
            std::fs::write(&report, r.to_json())
                .with_context(|| format!("writing {}", report.display()))?;
            for (name, t) in &r.per_skill {
                println!(
                    "{name}: {}/{} ({:.2})",
                    t.successes,
                    t.count - t.skipped,
                    t.rate
                );
            }
        }
        Command::Run {
            config,
            instruction,
            seed,
        } => {
            let config = PipelineConfig::load(&config)?;
            let models = Models::load(&config)?;
            let router = Router::from_mode(&config.router)?;
            let mut session = new_session(&config, seed.unwrap_or(config.scene.seed))?;
            let traces = session.instruct(&instruction, &models, &router, &config, false);
            let views: Vec<_> = traces
                .into_iter()
                .map(manip_pipeline::service::TraceView::from)
                .collect();
            println!("{}", serde_json::to_string_pretty(&views)?);
        }
        Command::Serve { config, port } => {
            let config = PipelineConfig::load(&config)?;
            let models = Models::load(&config)?;
            let router = Router::from_mode(&config.router)?;
            let state = AppState::new(models, router, config)?;
            let rt = tokio::runtime::Runtime::new()?;
            println!("listening on 127.0.0.1:{port}");
            rt.block_on(serve(state, port))?;
        }
    }
    Ok(())
}
