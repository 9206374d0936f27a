//! `experiment` descriptors and reports.
//!
//! ```json
//! {
//!   "task": { "m": 8, "n": 8, "spectrum": [10, 1, 1, 1], "seed": 7 },
//!   "schedule": { "stages": [{ "rank": 4, "steps": 6000 }, { "rank": 1, "steps": 500 }] },
//!   "train": { "learning_rate": 0.01, "seed": 0 }
//! }
//! ```
//!
//! `schedule` may instead be `{ "plan": { "start_rank", "end_rank",
//! "total_steps", "scheme", "min_steps" } }` or `{ "path": "schedule.json" }`,
//! a file written by `plan --output`, resolved relative to the descriptor.

use std::fs;
use std::path::Path;
use std::time::Instant;

use lora_squeeze::schedule::{
    plan_min_steps, plan_standard, rank_ladder, AnnealingSchedule, Stage, DEFAULT_MIN_STEPS,
};
use lora_squeeze::trainer::{make_task, run_annealed, StageOutcome, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::{CliError, ExperimentArgs};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskSpec {
    pub m: usize,
    pub n: usize,
    pub spectrum: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PlanKind {
    Standard,
    MinSteps,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSpec {
    start_rank: usize,
    end_rank: usize,
    total_steps: u64,
    #[serde(default = "default_scheme")]
    scheme: PlanKind,
    #[serde(default)]
    min_steps: Option<u64>,
}

fn default_scheme() -> PlanKind {
    PlanKind::Standard
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
enum ScheduleSpec {
    Stages(Vec<Stage>),
    Plan(PlanSpec),
    Path(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainSpec {
    learning_rate: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Descriptor {
    task: TaskSpec,
    schedule: ScheduleSpec,
    train: TrainSpec,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub task: TaskSpec,
    pub schedule: AnnealingSchedule,
    pub learning_rate: f64,
    pub train_seed: u64,
    pub final_rank: usize,
    pub final_loss: f64,
    /// Smallest squared error any product of the final rank can reach.
    pub optimal_loss: f64,
    pub stages: Vec<StageOutcome>,
    pub wall_time_secs: f64,
}

fn invalid(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::Validation(format!("{}: {msg}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn resolve_schedule(spec: ScheduleSpec, base: &Path) -> Result<AnnealingSchedule, CliError> {
    let schedule = match spec {
        ScheduleSpec::Stages(stages) => AnnealingSchedule::custom(stages),
        ScheduleSpec::Plan(p) => {
            let ladder = rank_ladder(p.start_rank, p.end_rank).map_err(|e| invalid(base, e))?;
            match p.scheme {
                PlanKind::Standard => plan_standard(&ladder, p.total_steps),
                PlanKind::MinSteps => plan_min_steps(
                    &ladder,
                    p.total_steps,
                    p.min_steps.unwrap_or(DEFAULT_MIN_STEPS),
                ),
            }
        }
        ScheduleSpec::Path(rel) => {
            let path = base.parent().unwrap_or(Path::new(".")).join(rel);
            let text = read_text(&path)?;
            return AnnealingSchedule::from_json(&text).map_err(|e| invalid(&path, e));
        }
    };
    schedule.map_err(|e| invalid(base, e))
}

pub fn run(args: ExperimentArgs) -> Result<(), CliError> {
    let text = read_text(&args.spec)?;
    let desc: Descriptor = serde_json::from_str(&text).map_err(|e| invalid(&args.spec, e))?;
    let schedule = resolve_schedule(desc.schedule, &args.spec)?;
    let task = make_task(
        desc.task.m,
        desc.task.n,
        &desc.task.spectrum,
        desc.task.seed,
    )
    .map_err(|e| invalid(&args.spec, e))?;
    let cfg = TrainConfig {
        learning_rate: desc.train.learning_rate,
        steps: 0,
        seed: desc.train.seed,
    };

    let start = Instant::now();
    let run = run_annealed(&task, &schedule, &cfg)?;
    let last = run.trajectory.last().expect("schedules have a stage");
    let report = ExperimentReport {
        task: desc.task,
        final_rank: last.rank,
        final_loss: last.final_loss,
        optimal_loss: last.optimal_loss,
        learning_rate: cfg.learning_rate,
        train_seed: cfg.seed,
        schedule,
        stages: run.trajectory,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &args.output {
        Some(path) => {
            crate::commands::write_file(path, &text)?;
            print_summary(&report);
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn print_summary(report: &ExperimentReport) {
    use lora_squeeze::format_sig;
    println!("stage  rank  steps   retention     final loss   optimal loss");
    for (i, s) in report.stages.iter().enumerate() {
        println!(
            "{:>5}  {:>4}  {:>5}  {:>10}  {:>13}  {:>13}",
            i + 1,
            s.rank,
            s.steps,
            s.retention.map_or("-".to_string(), format_sig),
            format_sig(s.final_loss),
            format_sig(s.optimal_loss)
        );
    }
}
