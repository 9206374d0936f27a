//! Gradient-descent fitting of a factor pair to a synthetic target.
//!
//! This is a desk-scale stand-in for adapter fine-tuning: the objective is
//! plain Frobenius regression `‖A·B − T‖²_F` onto a matrix `T` with a known
//! spectrum. It exists to drive squeeze and annealing end to end and says
//! nothing about language-model accuracy.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{householder_qr, svd_full};
use crate::matrix::{gaussian_matrix, Matrix};
use crate::rng::Rng;
use crate::schedule::AnnealingSchedule;
use crate::squeeze::{squeeze_efficient, CoreSvd, LoraFactorPair, SqueezeMethod};

/// Loss above which training is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

const GRADIENT_CHECK_COORDINATES: usize = 20;
const GRADIENT_CHECK_SEED: u64 = 0x5EED_0FC0_FFEE;
/// Decorrelates the right basis from the left one in [`make_task`].
const RIGHT_BASIS_SALT: u64 = 0xA5A5_5A5A_0F0F_F0F0;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTask {
    pub name: String,
    pub target: Matrix,
    /// Singular values the target was built from, descending.
    pub singular_values: Vec<f64>,
    pub seed: u64,
}

impl SyntheticTask {
    pub fn shape(&self) -> (usize, usize) {
        self.target.shape()
    }

    /// Smallest achievable squared error at `rank`: the sum of the squared
    /// singular values beyond it.
    pub fn optimal_error(&self, rank: usize) -> f64 {
        self.singular_values
            .iter()
            .skip(rank)
            .fold(0.0, |acc, s| acc + s * s)
    }
}

/// `T = U diag(s) Vᵀ` with `U`, `V` orthonormal bases from the QR of seeded
/// Gaussian matrices.
pub fn make_task(m: usize, n: usize, singular_values: &[f64], seed: u64) -> Result<SyntheticTask> {
    if m == 0 || n == 0 {
        return Err(Error::DimensionMismatch(format!(
            "task dimensions must be positive, got {m}x{n}"
        )));
    }
    let k = singular_values.len();
    if k > m.min(n) {
        return Err(Error::InvalidArgument(format!(
            "{k} singular values do not fit a {m}x{n} task"
        )));
    }
    if singular_values.iter().any(|s| !s.is_finite() || *s < 0.0)
        || singular_values.windows(2).any(|w| w[1] > w[0])
    {
        return Err(Error::InvalidArgument(
            "singular values must be finite, non-negative and descending".into(),
        ));
    }
    let target = if k == 0 {
        Matrix::zeros(m, n)
    } else {
        let (u, _) = householder_qr(&gaussian_matrix(m, k, seed)?);
        let (v, _) = householder_qr(&gaussian_matrix(n, k, seed ^ RIGHT_BASIS_SALT)?);
        u.scale_columns(singular_values).matmul(&v.transpose())?
    };
    Ok(SyntheticTask {
        name: format!("task-{m}x{n}-{seed}"),
        target,
        singular_values: singular_values.to_vec(),
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Number of full-batch steps for [`train`]. Schedules carry their own.
    #[serde(default)]
    pub steps: u64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            steps: 1000,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be finite and positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub pair: LoraFactorPair,
    pub final_loss: f64,
    /// Loss before every step, then the final loss.
    pub loss_history: Vec<f64>,
}

fn residual(task: &SyntheticTask, pair: &LoraFactorPair) -> Result<Matrix> {
    pair.a.matmul(&pair.b)?.sub(&task.target)
}

/// `‖A·B − T‖²_F`.
pub fn loss(task: &SyntheticTask, pair: &LoraFactorPair) -> Result<f64> {
    Ok(residual(task, pair)?.squared_norm())
}

/// `(∂L/∂A, ∂L/∂B) = (2 R Bᵀ, 2 Aᵀ R)` with `R = A·B − T`.
pub fn gradients(task: &SyntheticTask, pair: &LoraFactorPair) -> Result<(Matrix, Matrix)> {
    let r = residual(task, pair)?;
    let grad_a = r.matmul(&pair.b.transpose())?.scale(2.0);
    let grad_b = pair.a.transpose_matmul(&r)?.scale(2.0);
    Ok((grad_a, grad_b))
}

fn check_shapes(task: &SyntheticTask, pair: &LoraFactorPair) -> Result<()> {
    if pair.delta_shape() != task.shape() {
        return Err(Error::DimensionMismatch(format!(
            "pair product is {:?} but the task is {:?}",
            pair.delta_shape(),
            task.shape()
        )));
    }
    Ok(())
}

/// Continues full-batch gradient descent from `pair`.
pub fn descend(
    task: &SyntheticTask,
    mut pair: LoraFactorPair,
    steps: u64,
    learning_rate: f64,
) -> Result<TrainOutcome> {
    check_shapes(task, &pair)?;
    let mut loss_history = Vec::with_capacity(steps as usize + 1);
    for step in 0..steps {
        let r = residual(task, &pair)?;
        let current = r.squared_norm();
        if !current.is_finite() || current > DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                step: step as usize,
                loss: current,
            });
        }
        loss_history.push(current);
        let grad_a = r.matmul(&pair.b.transpose())?;
        let grad_b = pair.a.transpose_matmul(&r)?;
        let step_size = 2.0 * learning_rate;
        pair.a = pair.a.sub(&grad_a.scale(step_size))?;
        pair.b = pair.b.sub(&grad_b.scale(step_size))?;
    }
    let final_loss = loss(task, &pair)?;
    if !final_loss.is_finite() || final_loss > DIVERGENCE_LOSS {
        return Err(Error::Divergence {
            step: steps as usize,
            loss: final_loss,
        });
    }
    loss_history.push(final_loss);
    Ok(TrainOutcome {
        pair,
        final_loss,
        loss_history,
    })
}

/// Standard LoRA initialisation: `A` Gaussian with standard deviation
/// `1/√rank`, `B` zero.
pub fn init_pair(task: &SyntheticTask, rank: usize, seed: u64) -> Result<LoraFactorPair> {
    let (m, n) = task.shape();
    if rank == 0 || rank > m.min(n) {
        return Err(Error::InvalidRank(format!(
            "training rank {rank} outside 1..={}",
            m.min(n)
        )));
    }
    let a = gaussian_matrix(m, rank, seed)?.scale(1.0 / (rank as f64).sqrt());
    LoraFactorPair::new(task.name.clone(), a, Matrix::zeros(rank, n))
}

/// Trains a fresh rank-`rank` pair for `cfg.steps` steps.
pub fn train(task: &SyntheticTask, rank: usize, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pair = init_pair(task, rank, cfg.seed)?;
    descend(task, pair, cfg.steps, cfg.learning_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageOutcome {
    pub rank: usize,
    pub steps: u64,
    /// Loss right after squeezing into this stage; absent for the first stage.
    pub loss_after_squeeze: Option<f64>,
    /// Retention of the squeeze into this stage; absent for the first stage.
    pub retention: Option<f64>,
    pub final_loss: f64,
    /// Best squared error any rank-`rank` product can reach on the task.
    pub optimal_loss: f64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnealedRun {
    pub pair: LoraFactorPair,
    pub trajectory: Vec<StageOutcome>,
}

/// Trains at each stage's rank for its budget, squeezing (core-matrix route,
/// exact core SVD) between stages.
pub fn run_annealed(
    task: &SyntheticTask,
    schedule: &AnnealingSchedule,
    cfg: &TrainConfig,
) -> Result<AnnealedRun> {
    schedule.validate()?;
    cfg.validate()?;
    let (m, n) = task.shape();
    if let Some(stage) = schedule.stages.iter().find(|s| s.rank > m.min(n)) {
        return Err(Error::InvalidRank(format!(
            "stage rank {} exceeds min({m}, {n})",
            stage.rank
        )));
    }
    let squeeze_method = SqueezeMethod::Efficient(CoreSvd::Full);
    let mut trajectory = Vec::with_capacity(schedule.stages.len());
    let mut pair: Option<LoraFactorPair> = None;

    for stage in &schedule.stages {
        let start = Instant::now();
        let (start_pair, loss_after_squeeze, retention) = match pair.take() {
            None => (init_pair(task, stage.rank, cfg.seed)?, None, None),
            Some(prev) => {
                let (next, report) = squeeze_efficient(&prev, stage.rank, &squeeze_method)?;
                let l = loss(task, &next)?;
                (next, Some(l), Some(1.0 - report.discarded_energy))
            }
        };
        let outcome = descend(task, start_pair, stage.steps, cfg.learning_rate)?;
        trajectory.push(StageOutcome {
            rank: stage.rank,
            steps: stage.steps,
            loss_after_squeeze,
            retention,
            final_loss: outcome.final_loss,
            optimal_loss: task.optimal_error(stage.rank),
            wall_time_secs: start.elapsed().as_secs_f64(),
        });
        pair = Some(outcome.pair);
    }
    Ok(AnnealedRun {
        pair: pair.expect("validated schedules have a stage"),
        trajectory,
    })
}

/// Compares analytic gradients with central differences at 20 randomly
/// chosen entries of `A` and `B` and returns the largest deviation.
///
/// Deviations are relative to the analytic value for components of
/// magnitude above one and absolute below that.
pub fn gradient_check(task: &SyntheticTask, pair: &LoraFactorPair, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    check_shapes(task, pair)?;
    let (grad_a, grad_b) = gradients(task, pair)?;
    let a_len = pair.a.rows() * pair.a.cols();
    let b_len = pair.b.rows() * pair.b.cols();
    let mut rng = Rng::seed_from_u64(GRADIENT_CHECK_SEED);
    let mut worst: f64 = 0.0;

    for _ in 0..GRADIENT_CHECK_COORDINATES {
        let pick = rng.below(a_len + b_len);
        let in_a = pick < a_len;
        let (factor_cols, idx) = if in_a {
            (pair.a.cols(), pick)
        } else {
            (pair.b.cols(), pick - a_len)
        };
        let (r, c) = (idx / factor_cols, idx % factor_cols);

        let probe = |delta: f64| -> Result<f64> {
            let mut p = pair.clone();
            if in_a {
                p.a[(r, c)] += delta;
            } else {
                p.b[(r, c)] += delta;
            }
            loss(task, &p)
        };
        let numeric = (probe(epsilon)? - probe(-epsilon)?) / (2.0 * epsilon);
        let analytic = if in_a { grad_a[(r, c)] } else { grad_b[(r, c)] };
        let deviation = (numeric - analytic).abs() / analytic.abs().max(1.0);
        worst = worst.max(deviation);
    }
    Ok(worst)
}

/// Spectrum of the task target, for checking [`make_task`].
pub fn target_spectrum(task: &SyntheticTask) -> Result<Vec<f64>> {
    Ok(svd_full(&task.target)?.singular_values)
}
