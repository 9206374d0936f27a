//! Rank-annealing schedules.
//!
//! A schedule is a strictly decreasing list of ranks, each with a step budget.
//! Training runs at the first rank, is squeezed to the next, and so on. The
//! budgets always add up to the requested total.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_STEPS: u64 = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage {
    pub rank: usize,
    pub steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Steps proportional to rank.
    Standard,
    /// A per-stage floor, then the remainder proportional to rank.
    MinSteps,
    /// A single continued-training stage after a one-shot squeeze.
    ContSqueeze,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnealingSchedule {
    pub scheme: Scheme,
    pub total_steps: u64,
    /// Requested per-stage floor for [`Scheme::MinSteps`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_steps: Option<u64>,
    /// Floor actually applied; lower than `min_steps` when the budget ran short.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied_min_steps: Option<u64>,
    /// Set when the requested floor could not be honoured.
    #[serde(default)]
    pub warning: bool,
    /// Rank the single stage is squeezed from, for continued training.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_rank: Option<usize>,
    pub stages: Vec<Stage>,
}

impl AnnealingSchedule {
    pub fn ranks(&self) -> Vec<usize> {
        self.stages.iter().map(|s| s.rank).collect()
    }

    pub fn steps(&self) -> Vec<u64> {
        self.stages.iter().map(|s| s.steps).collect()
    }

    pub fn final_rank(&self) -> Option<usize> {
        self.stages.last().map(|s| s.rank)
    }

    /// Checks the structural invariants: at least one stage, positive and
    /// strictly decreasing ranks, and budgets summing to `total_steps`.
    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidArgument("schedule has no stages".into()));
        }
        if self.stages.iter().any(|s| s.rank == 0) {
            return Err(Error::InvalidArgument(
                "stage ranks must be positive".into(),
            ));
        }
        if self.stages.windows(2).any(|w| w[1].rank >= w[0].rank) {
            return Err(Error::InvalidArgument(
                "stage ranks must be strictly decreasing".into(),
            ));
        }
        let sum: u64 = self.stages.iter().map(|s| s.steps).sum();
        if sum != self.total_steps {
            return Err(Error::InvalidArgument(format!(
                "stage steps sum to {sum}, expected {}",
                self.total_steps
            )));
        }
        Ok(())
    }

    /// Builds a schedule from explicit stages.
    pub fn custom(stages: Vec<Stage>) -> Result<Self> {
        let schedule = AnnealingSchedule {
            scheme: Scheme::Standard,
            total_steps: stages.iter().map(|s| s.steps).sum(),
            min_steps: None,
            applied_min_steps: None,
            warning: false,
            source_rank: None,
            stages,
        };
        schedule.validate()?;
        Ok(schedule)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schedule: AnnealingSchedule = serde_json::from_str(text)?;
        schedule.validate()?;
        Ok(schedule)
    }
}

/// Halving ladder from `start_rank` down to `end_rank`, inclusive.
///
/// Odd ranks halve with ceiling division. The last halving that would reach
/// or pass `end_rank` is replaced by `end_rank` itself.
pub fn rank_ladder(start_rank: usize, end_rank: usize) -> Result<Vec<usize>> {
    if end_rank == 0 {
        return Err(Error::InvalidArgument("end rank must be at least 1".into()));
    }
    if end_rank > start_rank {
        return Err(Error::InvalidArgument(format!(
            "end rank {end_rank} exceeds start rank {start_rank}"
        )));
    }
    let mut ladder = vec![start_rank];
    let mut current = start_rank;
    while current > end_rank {
        let next = current.div_ceil(2);
        if next <= end_rank {
            break;
        }
        ladder.push(next);
        current = next;
    }
    if *ladder.last().unwrap() != end_rank {
        ladder.push(end_rank);
    }
    Ok(ladder)
}

fn check_ladder(ladder: &[usize]) -> Result<()> {
    if ladder.is_empty() {
        return Err(Error::InvalidArgument("empty rank ladder".into()));
    }
    if ladder.contains(&0) || ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument(
            "ladder ranks must be positive and strictly decreasing".into(),
        ));
    }
    Ok(())
}

/// Splits `budget` proportionally to `ladder` ranks: floors first, then one
/// leftover step each to the highest ranks.
fn proportional_split(ladder: &[usize], budget: u64) -> Vec<u64> {
    let rank_sum: u128 = ladder.iter().map(|&r| r as u128).sum();
    let mut steps: Vec<u64> = ladder
        .iter()
        .map(|&r| (budget as u128 * r as u128 / rank_sum) as u64)
        .collect();
    let remainder = budget - steps.iter().sum::<u64>();
    // Fractional parts sum to less than the stage count.
    debug_assert!((remainder as usize) < ladder.len());
    for s in steps.iter_mut().take(remainder as usize) {
        *s += 1;
    }
    steps
}

fn stages(ladder: &[usize], steps: Vec<u64>) -> Vec<Stage> {
    ladder
        .iter()
        .zip(steps)
        .map(|(&rank, steps)| Stage { rank, steps })
        .collect()
}

/// Steps proportional to rank.
pub fn plan_standard(ladder: &[usize], total_steps: u64) -> Result<AnnealingSchedule> {
    check_ladder(ladder)?;
    if total_steps < ladder.len() as u64 {
        return Err(Error::InvalidArgument(format!(
            "{total_steps} steps cannot cover {} stages",
            ladder.len()
        )));
    }
    Ok(AnnealingSchedule {
        scheme: Scheme::Standard,
        total_steps,
        min_steps: None,
        applied_min_steps: None,
        warning: false,
        source_rank: None,
        stages: stages(ladder, proportional_split(ladder, total_steps)),
    })
}

/// Every stage first receives `min_steps`; what is left is split as in
/// [`plan_standard`]. If the budget cannot cover the floor for every stage,
/// the floor drops to `total_steps / stages` and the schedule is flagged.
pub fn plan_min_steps(
    ladder: &[usize],
    total_steps: u64,
    min_steps: u64,
) -> Result<AnnealingSchedule> {
    check_ladder(ladder)?;
    if min_steps == 0 {
        return Err(Error::InvalidArgument(
            "minimum steps must be positive".into(),
        ));
    }
    let count = ladder.len() as u64;
    if total_steps < count {
        return Err(Error::InvalidArgument(format!(
            "{total_steps} steps cannot cover {count} stages"
        )));
    }
    let (floor, warning) = match min_steps.checked_mul(count) {
        Some(reserved) if reserved <= total_steps => (min_steps, false),
        _ => (total_steps / count, true),
    };
    let rest = proportional_split(ladder, total_steps - floor * count);
    Ok(AnnealingSchedule {
        scheme: Scheme::MinSteps,
        total_steps,
        min_steps: Some(min_steps),
        applied_min_steps: Some(floor),
        warning,
        source_rank: None,
        stages: stages(ladder, rest.into_iter().map(|s| s + floor).collect()),
    })
}

/// One continued-training stage at `target_rank` after squeezing from
/// `source_rank`. Zero extra steps is a plain one-shot squeeze.
pub fn plan_cont_squeeze(
    source_rank: usize,
    target_rank: usize,
    extra_steps: u64,
) -> Result<AnnealingSchedule> {
    if target_rank == 0 || source_rank == 0 {
        return Err(Error::InvalidArgument("ranks must be positive".into()));
    }
    Ok(AnnealingSchedule {
        scheme: Scheme::ContSqueeze,
        total_steps: extra_steps,
        min_steps: None,
        applied_min_steps: None,
        warning: false,
        source_rank: Some(source_rank),
        stages: vec![Stage {
            rank: target_rank,
            steps: extra_steps,
        }],
    })
}
