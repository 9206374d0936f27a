//! Rank transformation of LoRA factor pairs.
//!
//! Three backends produce a rank-`r_tgt` pair from a rank-`r_src` pair:
//!
//! * [`SqueezeMethod::FullSvd`] reconstructs `ΔW = A·B` and takes its exact SVD.
//! * [`SqueezeMethod::Rsvd`] reconstructs `ΔW` and runs a randomized SVD.
//! * [`SqueezeMethod::Efficient`] never forms `ΔW`. It orthogonalises both
//!   factors, `A = Q_A R_A` and `Bᵀ = Q_B R_B`, so that
//!   `ΔW = Q_A (R_A R_Bᵀ) Q_Bᵀ`, and decomposes only the small core
//!   `M = R_A R_Bᵀ`. The singular values of `M` are those of `ΔW`.
//!
//! In every case singular values are split evenly between the new factors:
//! `A = U_r Σ_r^{1/2}` and `B = Σ_r^{1/2} V_rᵀ`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{householder_qr, rsvd_detailed, svd_full, RsvdConfig, SvdResult};
use crate::matrix::Matrix;

/// One adapted layer: `ΔW ≈ a · b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraFactorPair {
    pub name: String,
    /// m x r
    pub a: Matrix,
    /// r x n
    pub b: Matrix,
}

impl LoraFactorPair {
    pub fn new(name: impl Into<String>, a: Matrix, b: Matrix) -> Result<Self> {
        let name = name.into();
        if a.cols() != b.rows() {
            return Err(Error::DimensionMismatch(format!(
                "tensor `{name}`: A is {}x{} but B is {}x{}",
                a.rows(),
                a.cols(),
                b.rows(),
                b.cols()
            )));
        }
        Ok(Self { name, a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.cols()
    }

    /// Shape `(m, n)` of the reconstructed update.
    pub fn delta_shape(&self) -> (usize, usize) {
        (self.a.rows(), self.b.cols())
    }

    pub fn max_rank(&self) -> usize {
        let (m, n) = self.delta_shape();
        m.min(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreSvd {
    Full,
    Randomized(RsvdConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SqueezeMethod {
    FullSvd,
    Rsvd(RsvdConfig),
    Efficient(CoreSvd),
}

impl SqueezeMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SqueezeMethod::FullSvd => "full",
            SqueezeMethod::Rsvd(_) => "rsvd",
            SqueezeMethod::Efficient(CoreSvd::Full) => "efficient",
            SqueezeMethod::Efficient(CoreSvd::Randomized(_)) => "efficient-rsvd",
        }
    }

    /// Same method with any randomized component reseeded.
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            SqueezeMethod::FullSvd => SqueezeMethod::FullSvd,
            SqueezeMethod::Rsvd(cfg) => SqueezeMethod::Rsvd(cfg.with_seed(seed)),
            SqueezeMethod::Efficient(CoreSvd::Full) => SqueezeMethod::Efficient(CoreSvd::Full),
            SqueezeMethod::Efficient(CoreSvd::Randomized(cfg)) => {
                SqueezeMethod::Efficient(CoreSvd::Randomized(cfg.with_seed(seed)))
            }
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            SqueezeMethod::Rsvd(cfg) | SqueezeMethod::Efficient(CoreSvd::Randomized(cfg)) => {
                Some(cfg.seed)
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqueezeReport {
    pub tensor: String,
    pub source_rank: usize,
    pub target_rank: usize,
    pub method: String,
    pub retained_singular_values: Vec<f64>,
    /// `1 − V_r`, the share of squared singular mass that was dropped.
    pub discarded_energy: f64,
    /// Set when only a sketch of the spectrum was available, so the true
    /// discarded energy may be larger.
    pub discarded_energy_is_lower_bound: bool,
    pub rsvd_clamped: bool,
    pub rsvd_degraded: bool,
    pub wall_time_secs: f64,
}

impl SqueezeReport {
    /// Copy with the timing field zeroed, for reproducible comparisons.
    pub fn without_timing(&self) -> SqueezeReport {
        SqueezeReport {
            wall_time_secs: 0.0,
            ..self.clone()
        }
    }
}

/// `ΔW = A · B`.
pub fn reconstruct_delta(pair: &LoraFactorPair) -> Result<Matrix> {
    pair.a.matmul(&pair.b)
}

/// `A = U diag(√s)`, `B = diag(√s) Vᵀ`.
pub fn split_factors(svd: &SvdResult, name: impl Into<String>) -> Result<LoraFactorPair> {
    if let Some((index, &value)) = svd
        .singular_values
        .iter()
        .enumerate()
        .find(|(_, s)| **s < 0.0 || !s.is_finite())
    {
        return Err(Error::NegativeSingularValue { index, value });
    }
    let roots: Vec<f64> = svd.singular_values.iter().map(|s| s.sqrt()).collect();
    LoraFactorPair::new(
        name,
        svd.u.scale_columns(&roots),
        svd.v_t.scale_rows(&roots),
    )
}

fn check_pair(pair: &LoraFactorPair) -> Result<()> {
    if !pair.a.is_finite() || !pair.b.is_finite() {
        return Err(Error::NonFinite(format!("factors of `{}`", pair.name)));
    }
    Ok(())
}

fn check_target(pair: &LoraFactorPair, target_rank: usize) -> Result<()> {
    let (m, n) = pair.delta_shape();
    if target_rank == 0 {
        return Err(Error::InvalidRank("target rank must be at least 1".into()));
    }
    if target_rank > m.min(n) {
        return Err(Error::InvalidRank(format!(
            "target rank {target_rank} exceeds min({m}, {n}) for tensor `{}`",
            pair.name
        )));
    }
    Ok(())
}

/// Fraction of squared mass outside the leading `keep` values.
fn discarded_fraction(spectrum: &[f64], keep: usize) -> f64 {
    let total: f64 = spectrum.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0.0;
    }
    let kept: f64 = spectrum.iter().take(keep).map(|s| s * s).sum();
    (1.0 - kept / total).clamp(0.0, 1.0)
}

/// Post-squeeze through the reconstructed update.
///
/// Target ranks above the source rank are allowed; the extra singular values
/// are numerically zero.
pub fn squeeze_standard(
    pair: &LoraFactorPair,
    target_rank: usize,
    method: &SqueezeMethod,
) -> Result<(LoraFactorPair, SqueezeReport)> {
    let start = Instant::now();
    check_target(pair, target_rank)?;
    check_pair(pair)?;
    let delta = reconstruct_delta(pair)?;

    let (svd, spectrum, lower_bound, clamped, degraded) = match method {
        SqueezeMethod::FullSvd => {
            let svd = svd_full(&delta)?;
            let spectrum = svd.singular_values.clone();
            (svd.truncate(target_rank), spectrum, false, false, false)
        }
        SqueezeMethod::Rsvd(cfg) => {
            let (svd, info) = rsvd_detailed(&delta, target_rank, cfg)?;
            // `ΔW` has rank at most `r_src`, so a sketch that wide sees everything.
            let covers_all = info.sketch_width >= delta.min_dim().min(pair.rank());
            let degraded = info.degraded();
            (
                svd,
                info.sketch_spectrum,
                !covers_all,
                info.clamped,
                degraded,
            )
        }
        SqueezeMethod::Efficient(_) => return squeeze_efficient(pair, target_rank, method),
    };

    let out = split_factors(&svd, pair.name.clone())?;
    let report = SqueezeReport {
        tensor: pair.name.clone(),
        source_rank: pair.rank(),
        target_rank,
        method: method.label().to_string(),
        retained_singular_values: svd.singular_values.clone(),
        discarded_energy: discarded_fraction(&spectrum, target_rank),
        discarded_energy_is_lower_bound: lower_bound,
        rsvd_clamped: clamped,
        rsvd_degraded: degraded,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((out, report))
}

/// Orthonormal basis and coefficients for the columns of `x`.
///
/// A tall `x` uses thin QR. When `x` has no more rows than columns the
/// identity already spans its column space, so the basis is `I` and the
/// coefficients are `x` itself.
struct Basis {
    q: Option<Matrix>,
    coeffs: Matrix,
}

impl Basis {
    fn of(x: &Matrix) -> Basis {
        if x.rows() > x.cols() {
            let (q, r) = householder_qr(x);
            Basis {
                q: Some(q),
                coeffs: r,
            }
        } else {
            Basis {
                q: None,
                coeffs: x.clone(),
            }
        }
    }

    fn lift(&self, small: &Matrix) -> Result<Matrix> {
        match &self.q {
            Some(q) => q.matmul(small),
            None => Ok(small.clone()),
        }
    }
}

/// Orthogonal bases for both factors and the core matrix `R_A · R_Bᵀ`.
fn core_factorization(pair: &LoraFactorPair) -> Result<(Basis, Basis, Matrix)> {
    let left = Basis::of(&pair.a);
    let right = Basis::of(&pair.b.transpose());
    let core = left.coeffs.matmul(&right.coeffs.transpose())?;
    Ok((left, right, core))
}

/// Singular values of `A·B` computed from the core matrix alone, padded with
/// zeros to the source rank.
pub fn core_spectrum(pair: &LoraFactorPair) -> Result<Vec<f64>> {
    check_pair(pair)?;
    let (_, _, core) = core_factorization(pair)?;
    let mut spectrum = svd_full(&core)?.singular_values;
    spectrum.resize(spectrum.len().max(pair.rank()), 0.0);
    spectrum.truncate(pair.rank());
    Ok(spectrum)
}

/// Memory-efficient squeeze: never allocates an m x n matrix.
///
/// `method` must be [`SqueezeMethod::Efficient`]; other variants are routed
/// to [`squeeze_standard`].
pub fn squeeze_efficient(
    pair: &LoraFactorPair,
    target_rank: usize,
    method: &SqueezeMethod,
) -> Result<(LoraFactorPair, SqueezeReport)> {
    let core_svd = match method {
        SqueezeMethod::Efficient(core_svd) => core_svd,
        other => return squeeze_standard(pair, target_rank, other),
    };
    let start = Instant::now();
    check_target(pair, target_rank)?;
    if target_rank > pair.rank() {
        return Err(Error::InvalidRank(format!(
            "efficient squeeze cannot raise rank {} to {target_rank}; use expansion",
            pair.rank()
        )));
    }
    check_pair(pair)?;

    let (left, right, core) = core_factorization(pair)?;
    let (svd, spectrum, lower_bound, clamped, degraded) = match core_svd {
        CoreSvd::Full => {
            let svd = svd_full(&core)?;
            let spectrum = svd.singular_values.clone();
            (svd.truncate(target_rank), spectrum, false, false, false)
        }
        CoreSvd::Randomized(cfg) => {
            let (svd, info) = rsvd_detailed(&core, target_rank, cfg)?;
            let covers_all = info.sketch_width == core.min_dim();
            let degraded = info.degraded();
            (
                svd,
                info.sketch_spectrum,
                !covers_all,
                info.clamped,
                degraded,
            )
        }
    };

    let roots: Vec<f64> = svd.singular_values.iter().map(|s| s.sqrt()).collect();
    let a = left.lift(&svd.u.scale_columns(&roots))?;
    let b = right
        .lift(&svd.v_t.transpose().scale_columns(&roots))?
        .transpose();
    let out = LoraFactorPair::new(pair.name.clone(), a, b)?;

    let report = SqueezeReport {
        tensor: pair.name.clone(),
        source_rank: pair.rank(),
        target_rank,
        method: method.label().to_string(),
        retained_singular_values: svd.singular_values.clone(),
        discarded_energy: discarded_fraction(&spectrum, target_rank),
        discarded_energy_is_lower_bound: lower_bound,
        rsvd_clamped: clamped,
        rsvd_degraded: degraded,
        wall_time_secs: start.elapsed().as_secs_f64(),
    };
    Ok((out, report))
}

/// Dispatches to the backend named by `method`.
pub fn squeeze(
    pair: &LoraFactorPair,
    target_rank: usize,
    method: &SqueezeMethod,
) -> Result<(LoraFactorPair, SqueezeReport)> {
    match method {
        SqueezeMethod::Efficient(_) => squeeze_efficient(pair, target_rank, method),
        _ => squeeze_standard(pair, target_rank, method),
    }
}

/// Raises (or keeps) the rank of a pair. The product is unchanged: the new
/// directions carry zero singular values.
pub fn squeeze_expand(
    pair: &LoraFactorPair,
    target_rank: usize,
) -> Result<(LoraFactorPair, SqueezeReport)> {
    if target_rank < pair.rank() {
        return Err(Error::InvalidRank(format!(
            "expansion target {target_rank} is below source rank {}",
            pair.rank()
        )));
    }
    squeeze_standard(pair, target_rank, &SqueezeMethod::FullSvd)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlopBackend {
    FullSvd,
    Rsvd,
    Efficient,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlopEstimate {
    pub backend: FlopBackend,
    /// Cost of the decomposition itself.
    pub decomposition: f64,
    /// Cost of forming `ΔW` first (`m·n·r_src`); zero for the efficient path.
    pub reconstruction: f64,
}

impl FlopEstimate {
    pub fn total(&self) -> f64 {
        self.decomposition + self.reconstruction
    }
}

/// Coarse FLOP counts: `m·n·min(m,n)` for full SVD, `m·n·(r_tgt + k_o)` for
/// randomized SVD and `(m+n)·r_src²` for the core-matrix route.
pub fn estimate_flops(
    m: usize,
    n: usize,
    source_rank: usize,
    target_rank: usize,
    oversampling: usize,
    backend: FlopBackend,
) -> FlopEstimate {
    let (mf, nf) = (m as f64, n as f64);
    let r_src = source_rank as f64;
    let surcharge = mf * nf * r_src;
    let (decomposition, reconstruction) = match backend {
        FlopBackend::FullSvd => (mf * nf * m.min(n) as f64, surcharge),
        FlopBackend::Rsvd => (mf * nf * (target_rank + oversampling) as f64, surcharge),
        FlopBackend::Efficient => ((mf + nf) * r_src * r_src, 0.0),
    };
    FlopEstimate {
        backend,
        decomposition,
        reconstruction,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qr_decompose;
    use crate::matrix::gaussian_matrix;

    fn random_pair(m: usize, n: usize, r: usize, seed: u64) -> LoraFactorPair {
        LoraFactorPair::new(
            "t",
            gaussian_matrix(m, r, seed).unwrap(),
            gaussian_matrix(r, n, seed + 1000).unwrap(),
        )
        .unwrap()
    }

    /// Pair whose product has exactly the given singular values.
    fn pair_with_spectrum(m: usize, n: usize, spectrum: &[f64], seed: u64) -> LoraFactorPair {
        let k = spectrum.len();
        let (u, _) = qr_decompose(&gaussian_matrix(m, k, seed).unwrap()).unwrap();
        let (v, _) = qr_decompose(&gaussian_matrix(n, k, seed + 1).unwrap()).unwrap();
        LoraFactorPair::new("known", u.scale_columns(spectrum), v.transpose()).unwrap()
    }

    fn naive_product(a: &Matrix, b: &Matrix) -> Matrix {
        Matrix::from_fn(a.rows(), b.cols(), |i, j| {
            (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
        })
    }

    #[test]
    fn reconstruct_hand_product() {
        let a = Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap();
        let b = Matrix::from_rows(&[vec![0.0, 2.0]]).unwrap();
        let pair = LoraFactorPair::new("x", a, b).unwrap();
        let d = reconstruct_delta(&pair).unwrap();
        assert_eq!(
            d,
            Matrix::from_rows(&[vec![0.0, 2.0], vec![0.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn reconstruct_zero_factor() {
        let pair = LoraFactorPair::new("z", Matrix::zeros(4, 2), gaussian_matrix(2, 3, 1).unwrap())
            .unwrap();
        assert!(reconstruct_delta(&pair).unwrap().is_zero());
    }

    #[test]
    fn reconstruct_matches_triple_loop() {
        let pair = random_pair(8, 8, 3, 5);
        let d = reconstruct_delta(&pair).unwrap();
        assert_eq!(d, naive_product(&pair.a, &pair.b));
    }

    #[test]
    fn mismatched_factors_rejected() {
        let err = LoraFactorPair::new("bad", Matrix::zeros(3, 2), Matrix::zeros(3, 3));
        assert!(matches!(err, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn split_sqrt_four() {
        let svd = SvdResult {
            u: Matrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap(),
            singular_values: vec![4.0],
            v_t: Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap(),
        };
        let pair = split_factors(&svd, "s").unwrap();
        assert_eq!(pair.a, Matrix::from_rows(&[vec![2.0], vec![0.0]]).unwrap());
        assert_eq!(pair.b, Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap());
    }

    #[test]
    fn split_zero_spectrum() {
        let svd = SvdResult {
            u: Matrix::eye(3, 2),
            singular_values: vec![0.0, 0.0],
            v_t: Matrix::eye(2, 4),
        };
        let pair = split_factors(&svd, "z").unwrap();
        assert!(pair.a.is_zero() && pair.b.is_zero());
    }

    #[test]
    fn split_rejects_negative_values() {
        let svd = SvdResult {
            u: Matrix::eye(2, 1),
            singular_values: vec![-1.0],
            v_t: Matrix::eye(1, 2),
        };
        assert!(matches!(
            split_factors(&svd, "n"),
            Err(Error::NegativeSingularValue { index: 0, .. })
        ));
    }

    #[test]
    fn split_is_balanced_and_exact() {
        let svd = svd_full(&gaussian_matrix(9, 7, 3).unwrap()).unwrap();
        let pair = split_factors(&svd, "b").unwrap();
        assert!(
            reconstruct_delta(&pair)
                .unwrap()
                .relative_error(&svd.reconstruct())
                .unwrap()
                < 1e-7
        );
        for (i, s) in svd.singular_values.iter().enumerate() {
            let col: f64 = pair.a.column(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            let row: f64 = pair.b.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((col - s.sqrt()).abs() < 1e-8);
            assert!((row - s.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn full_squeeze_is_idempotent_at_source_rank() {
        let pair = random_pair(6, 5, 1, 2);
        let (out, _) = squeeze_standard(&pair, 1, &SqueezeMethod::FullSvd).unwrap();
        let before = reconstruct_delta(&pair).unwrap();
        let after = reconstruct_delta(&out).unwrap();
        assert!(after.relative_error(&before).unwrap() < 1e-7);
    }

    #[test]
    fn discarded_energy_on_known_spectrum() {
        let pair = pair_with_spectrum(16, 16, &[5.0, 2.0, 0.1], 8);
        let expected = 0.01 / (25.0 + 4.0 + 0.01);
        for method in [
            SqueezeMethod::FullSvd,
            SqueezeMethod::Efficient(CoreSvd::Full),
        ] {
            let (out, report) = squeeze(&pair, 2, &method).unwrap();
            assert_eq!(out.rank(), 2);
            assert!((report.discarded_energy - expected).abs() < 1e-10);
            assert!(!report.discarded_energy_is_lower_bound);
            assert_eq!(report.retained_singular_values.len(), 2);
        }
    }

    #[test]
    fn efficient_rank_one_idempotent() {
        let pair = random_pair(10, 7, 1, 4);
        let method = SqueezeMethod::Efficient(CoreSvd::Full);
        let (out, _) = squeeze_efficient(&pair, 1, &method).unwrap();
        let err = reconstruct_delta(&out)
            .unwrap()
            .relative_error(&reconstruct_delta(&pair).unwrap())
            .unwrap();
        assert!(err < 1e-7);
    }

    #[test]
    fn efficient_core_spectrum_matches_dense() {
        let pair = random_pair(64, 48, 8, 21);
        let core = core_spectrum(&pair).unwrap();
        let dense = svd_full(&reconstruct_delta(&pair).unwrap()).unwrap();
        for (a, b) in core.iter().zip(&dense.singular_values) {
            assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
        }
        let method = SqueezeMethod::Efficient(CoreSvd::Full);
        let (eff, _) = squeeze_efficient(&pair, 3, &method).unwrap();
        let (std, _) = squeeze_standard(&pair, 3, &SqueezeMethod::FullSvd).unwrap();
        let e = reconstruct_delta(&eff).unwrap();
        let s = reconstruct_delta(&std).unwrap();
        assert!(e.relative_error(&s).unwrap() < 1e-6);
    }

    #[test]
    fn efficient_handles_layers_narrower_than_rank() {
        // m = 3 < r_src = 6 < n = 10
        let pair = random_pair(3, 10, 6, 31);
        let method = SqueezeMethod::Efficient(CoreSvd::Full);
        let (eff, _) = squeeze_efficient(&pair, 2, &method).unwrap();
        let (std, _) = squeeze_standard(&pair, 2, &SqueezeMethod::FullSvd).unwrap();
        let e = reconstruct_delta(&eff).unwrap();
        assert!(e.relative_error(&reconstruct_delta(&std).unwrap()).unwrap() < 1e-6);
        assert_eq!(core_spectrum(&pair).unwrap().len(), 6);
    }

    #[test]
    fn efficient_randomized_core() {
        let pair = random_pair(40, 30, 16, 3);
        let method = SqueezeMethod::Efficient(CoreSvd::Randomized(RsvdConfig::default()));
        let (eff, report) = squeeze_efficient(&pair, 4, &method).unwrap();
        let (std, _) = squeeze_standard(&pair, 4, &SqueezeMethod::FullSvd).unwrap();
        let e = reconstruct_delta(&eff).unwrap();
        // Sketch width 14 of a rank-16 core: approximate, not exact.
        assert!(e.relative_error(&reconstruct_delta(&std).unwrap()).unwrap() < 0.1);
        assert!(report.discarded_energy_is_lower_bound);
    }

    #[test]
    fn efficient_rejects_expansion() {
        let pair = random_pair(8, 8, 2, 1);
        let method = SqueezeMethod::Efficient(CoreSvd::Full);
        assert!(matches!(
            squeeze_efficient(&pair, 3, &method),
            Err(Error::InvalidRank(_))
        ));
    }

    #[test]
    fn target_rank_bounds() {
        let pair = random_pair(4, 6, 2, 1);
        assert!(squeeze_standard(&pair, 0, &SqueezeMethod::FullSvd).is_err());
        assert!(squeeze_standard(&pair, 5, &SqueezeMethod::FullSvd).is_err());
        assert!(squeeze_standard(&pair, 4, &SqueezeMethod::FullSvd).is_ok());
    }

    #[test]
    fn non_finite_factors_rejected() {
        let mut pair = random_pair(4, 4, 2, 1);
        pair.a = pair.a.map(|_| f64::NAN);
        assert!(matches!(
            squeeze_standard(&pair, 1, &SqueezeMethod::FullSvd),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn expansion_adds_no_information() {
        let pair = random_pair(16, 16, 2, 12);
        let (wide, report) = squeeze_expand(&pair, 4).unwrap();
        assert_eq!(wide.rank(), 4);
        let s = &report.retained_singular_values;
        assert!(s[2] <= 1e-6 * s[0] && s[3] <= 1e-6 * s[0]);
        let before = reconstruct_delta(&pair).unwrap();
        assert!(
            reconstruct_delta(&wide)
                .unwrap()
                .relative_error(&before)
                .unwrap()
                < 1e-6
        );

        let (back, _) = squeeze_standard(&wide, 2, &SqueezeMethod::FullSvd).unwrap();
        assert!(
            reconstruct_delta(&back)
                .unwrap()
                .relative_error(&before)
                .unwrap()
                < 1e-6
        );

        let (same, _) = squeeze_expand(&pair, 2).unwrap();
        assert!(
            reconstruct_delta(&same)
                .unwrap()
                .relative_error(&before)
                .unwrap()
                < 1e-7
        );

        assert!(squeeze_expand(&pair, 1).is_err());
        assert!(squeeze_expand(&pair, 17).is_err());
    }

    #[test]
    fn error_monotone_in_target_rank() {
        let pair = random_pair(20, 18, 8, 77);
        let delta = reconstruct_delta(&pair).unwrap();
        let errors: Vec<f64> = (1..=8)
            .map(|r| {
                let (out, _) = squeeze_standard(&pair, r, &SqueezeMethod::FullSvd).unwrap();
                reconstruct_delta(&out)
                    .unwrap()
                    .sub(&delta)
                    .unwrap()
                    .frobenius_norm()
            })
            .collect();
        assert!(
            errors.windows(2).all(|w| w[1] <= w[0] + 1e-12),
            "{errors:?}"
        );
    }

    #[test]
    fn flop_estimates() {
        let full = estimate_flops(2048, 2048, 64, 8, 10, FlopBackend::FullSvd);
        let rsvd = estimate_flops(2048, 2048, 64, 8, 10, FlopBackend::Rsvd);
        let eff = estimate_flops(2048, 2048, 64, 8, 10, FlopBackend::Efficient);
        assert_eq!(full.decomposition, 8_589_934_592.0);
        assert_eq!(rsvd.decomposition, 75_497_472.0);
        assert_eq!(eff.decomposition, 16_777_216.0);
        assert_eq!(full.reconstruction, 268_435_456.0);
        assert_eq!(rsvd.reconstruction, 268_435_456.0);
        assert_eq!(eff.reconstruction, 0.0);

        let unit: Vec<f64> = [
            FlopBackend::FullSvd,
            FlopBackend::Rsvd,
            FlopBackend::Efficient,
        ]
        .into_iter()
        .map(|b| estimate_flops(1, 1, 1, 1, 0, b).decomposition)
        .collect();
        assert_eq!(unit, vec![1.0, 1.0, 2.0]);
    }
}
