//! Variance (energy) retention of truncated spectra.
//!
//! `V(r_src → r_tgt) = Σ_{i≤r_tgt} s_i² / Σ_{i≤r_src} s_i²`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::squeeze::{core_spectrum, LoraFactorPair};

pub const DEFAULT_COLLAPSE_THRESHOLD: f64 = 0.80;

/// Share of squared singular mass kept when truncating from `source_rank`
/// to `target_rank`. An all-zero spectrum loses nothing and returns 1.
pub fn retention(singular_values: &[f64], source_rank: usize, target_rank: usize) -> Result<f64> {
    if target_rank > source_rank || source_rank > singular_values.len() {
        return Err(Error::InvalidRank(format!(
            "need target {target_rank} <= source {source_rank} <= spectrum length {}",
            singular_values.len()
        )));
    }
    if singular_values.iter().any(|s| *s < 0.0 || !s.is_finite()) {
        return Err(Error::InvalidArgument(
            "singular values must be finite and non-negative".into(),
        ));
    }
    if singular_values.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidArgument(
            "singular values must be sorted in descending order".into(),
        ));
    }
    if target_rank == source_rank {
        return Ok(1.0);
    }
    let kept: f64 = singular_values[..target_rank].iter().map(|s| s * s).sum();
    let total: f64 = kept
        + singular_values[target_rank..source_rank]
            .iter()
            .map(|s| s * s)
            .sum::<f64>();
    if total == 0.0 {
        return Ok(1.0);
    }
    Ok(kept / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetentionPoint {
    pub target_rank: usize,
    pub retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionCurve {
    pub tensor: String,
    pub source_rank: usize,
    pub points: Vec<RetentionPoint>,
    pub singular_values: Vec<f64>,
}

impl RetentionCurve {
    pub fn ranks(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.target_rank).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.retention).collect()
    }
}

/// Retention curve for one pair, with the spectrum taken from the core
/// matrix route (no `m x n` product is formed).
pub fn retention_curve(pair: &LoraFactorPair, target_ranks: &[usize]) -> Result<RetentionCurve> {
    let source_rank = pair.rank();
    if let Some(bad) = target_ranks.iter().find(|&&r| r == 0 || r > source_rank) {
        return Err(Error::InvalidRank(format!(
            "target rank {bad} outside 1..={source_rank} for tensor `{}`",
            pair.name
        )));
    }
    let spectrum = core_spectrum(pair)?;
    let points = target_ranks
        .iter()
        .map(|&r| {
            Ok(RetentionPoint {
                target_rank: r,
                retention: retention(&spectrum, source_rank, r)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RetentionCurve {
        tensor: pair.name.clone(),
        source_rank,
        points,
        singular_values: spectrum,
    })
}

/// Curves for many pairs, computed concurrently and returned in input order.
pub fn retention_curves(
    pairs: &[LoraFactorPair],
    target_ranks: &[usize],
) -> Result<Vec<RetentionCurve>> {
    par::try_map_ordered(pairs, |p| retention_curve(p, target_ranks))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionReport {
    pub threshold: f64,
    pub target_ranks: Vec<usize>,
    /// Unweighted mean over tensors, per target rank.
    pub aggregate: Vec<RetentionPoint>,
    /// Target ranks whose aggregate retention is below the threshold.
    pub flagged_ranks: Vec<usize>,
    pub curves: Vec<RetentionCurve>,
}

impl RetentionReport {
    /// `tensor,target_rank,retention` rows, one per curve point, followed by
    /// aggregate rows under the tensor name `*`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tensor,target_rank,retention\n");
        for curve in &self.curves {
            for p in &curve.points {
                out.push_str(&format!(
                    "{},{},{}\n",
                    csv_field(&curve.tensor),
                    p.target_rank,
                    format_sig(p.retention)
                ));
            }
        }
        for p in &self.aggregate {
            out.push_str(&format!(
                "*,{},{}\n",
                p.target_rank,
                format_sig(p.retention)
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Formats with six significant digits.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    if (-4..6).contains(&magnitude) {
        let decimals = (5 - magnitude).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    }
}

/// Averages curves that share a target-rank grid and flags ranks below
/// `threshold`.
pub fn aggregate_report(curves: Vec<RetentionCurve>, threshold: f64) -> Result<RetentionReport> {
    let grid = curves
        .first()
        .map(RetentionCurve::ranks)
        .unwrap_or_default();
    if curves.iter().any(|c| c.ranks() != grid) {
        return Err(Error::InvalidArgument(
            "retention curves use different target-rank grids".into(),
        ));
    }
    let count = curves.len() as f64;
    let aggregate: Vec<RetentionPoint> = grid
        .iter()
        .enumerate()
        .map(|(i, &target_rank)| RetentionPoint {
            target_rank,
            retention: curves.iter().map(|c| c.points[i].retention).sum::<f64>() / count,
        })
        .collect();
    let flagged_ranks = aggregate
        .iter()
        .filter(|p| p.retention < threshold)
        .map(|p| p.target_rank)
        .collect();
    Ok(RetentionReport {
        threshold,
        target_ranks: grid,
        aggregate,
        flagged_ranks,
        curves,
    })
}
