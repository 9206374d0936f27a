use serde::{Deserialize, Serialize};

use super::qr::householder_qr;
use super::svd::{fix_signs, svd_full, SvdResult};
use crate::error::{Error, Result};
use crate::matrix::{gaussian_matrix, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RsvdConfig {
    /// Extra sketch columns beyond the target rank.
    pub oversampling: usize,
    /// Subspace (power) iterations.
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for RsvdConfig {
    fn default() -> Self {
        Self {
            oversampling: 10,
            power_iterations: 2,
            seed: 42,
        }
    }
}

impl RsvdConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// What the sketch actually looked like for one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsvdInfo {
    /// Columns in the Gaussian test matrix after clamping.
    pub sketch_width: usize,
    /// `rank + oversampling` exceeded the smaller matrix dimension.
    pub clamped: bool,
    pub oversampling_used: usize,
    pub power_iterations: usize,
    /// Every singular value of the projected matrix, `sketch_width` long.
    pub sketch_spectrum: Vec<f64>,
}

impl RsvdInfo {
    /// The sketch ran without oversampling or without power iterations.
    pub fn degraded(&self) -> bool {
        self.oversampling_used == 0 || self.power_iterations == 0
    }
}

/// Randomized SVD returning the leading `rank` singular triplets of `w`.
pub fn rsvd(w: &Matrix, rank: usize, cfg: &RsvdConfig) -> Result<SvdResult> {
    rsvd_detailed(w, rank, cfg).map(|(svd, _)| svd)
}

/// [`rsvd`] plus sketch metadata.
pub fn rsvd_detailed(w: &Matrix, rank: usize, cfg: &RsvdConfig) -> Result<(SvdResult, RsvdInfo)> {
    let (m, n) = w.shape();
    let min_dim = m.min(n);
    if rank == 0 || rank > min_dim {
        return Err(Error::InvalidRank(format!(
            "randomized SVD rank {rank} outside 1..={min_dim} for a {m}x{n} matrix"
        )));
    }
    if !w.is_finite() {
        return Err(Error::NonFinite("randomized SVD input".into()));
    }
    let requested = rank + cfg.oversampling;
    let width = requested.min(min_dim);
    let mut info = RsvdInfo {
        sketch_width: width,
        clamped: requested > min_dim,
        oversampling_used: width - rank,
        power_iterations: cfg.power_iterations,
        sketch_spectrum: vec![0.0; width],
    };

    if w.is_zero() {
        let svd = SvdResult {
            u: Matrix::zeros(m, rank),
            singular_values: vec![0.0; rank],
            v_t: Matrix::zeros(rank, n),
        };
        return Ok((svd, info));
    }

    let omega = gaussian_matrix(n, width, cfg.seed)?;
    let mut y = w.matmul(&omega)?;
    for _ in 0..cfg.power_iterations {
        let (q, _) = householder_qr(&y);
        let y_star = w.transpose_matmul(&q)?;
        let (q_star, _) = householder_qr(&y_star);
        y = w.matmul(&q_star)?;
    }
    let (q, _) = householder_qr(&y);
    let d = q.transpose_matmul(w)?;
    let small = svd_full(&d)?;
    let mut full = SvdResult {
        u: q.matmul(&small.u)?,
        singular_values: small.singular_values,
        v_t: small.v_t,
    };
    fix_signs(&mut full);
    info.sketch_spectrum = full.singular_values.clone();
    Ok((full.truncate(rank), info))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_rank_two() -> Matrix {
        let u1 = gaussian_matrix(20, 1, 1).unwrap();
        let u2 = gaussian_matrix(20, 1, 2).unwrap();
        let v1 = gaussian_matrix(1, 15, 3).unwrap();
        let v2 = gaussian_matrix(1, 15, 4).unwrap();
        // Orthonormalise so the spectrum is exactly [5, 2].
        let (qu, _) = householder_qr(&Matrix::from_columns(&[u1.column(0), u2.column(0)]));
        let (qv, _) = householder_qr(&Matrix::from_columns(&[
            v1.row(0).to_vec(),
            v2.row(0).to_vec(),
        ]));
        qu.scale_columns(&[5.0, 2.0])
            .matmul(&qv.transpose())
            .unwrap()
    }

    #[test]
    fn recovers_constructed_spectrum() {
        let w = exact_rank_two();
        let svd = rsvd(&w, 2, &RsvdConfig::default()).unwrap();
        assert!((svd.singular_values[0] - 5.0).abs() < 1e-6);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn zero_input_short_circuits() {
        let w = Matrix::zeros(16, 16);
        let (svd, info) = rsvd_detailed(&w, 4, &RsvdConfig::default()).unwrap();
        assert_eq!(svd.singular_values, vec![0.0; 4]);
        assert_eq!(svd.u.shape(), (16, 4));
        assert!(svd.u.is_zero() && svd.v_t.is_zero());
        assert!(!info.clamped);
        assert_eq!(info.sketch_width, 14);
    }

    #[test]
    fn clamps_small_matrices() {
        let w = gaussian_matrix(6, 5, 9).unwrap();
        let (svd, info) = rsvd_detailed(&w, 3, &RsvdConfig::default()).unwrap();
        assert!(info.clamped);
        assert_eq!(info.sketch_width, 5);
        assert_eq!(info.oversampling_used, 2);
        // A full-width sketch spans the column space: results are exact.
        let exact = svd_full(&w).unwrap();
        for (a, b) in svd.singular_values.iter().zip(&exact.singular_values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn flags_degraded_configs() {
        let w = gaussian_matrix(30, 30, 1).unwrap();
        let cfg = RsvdConfig {
            oversampling: 0,
            power_iterations: 0,
            seed: 1,
        };
        let (_, info) = rsvd_detailed(&w, 4, &cfg).unwrap();
        assert!(info.degraded());
        let (_, info) = rsvd_detailed(&w, 4, &RsvdConfig::default()).unwrap();
        assert!(!info.degraded());
    }

    #[test]
    fn rejects_bad_rank() {
        let w = gaussian_matrix(4, 6, 1).unwrap();
        assert!(matches!(
            rsvd(&w, 5, &RsvdConfig::default()),
            Err(Error::InvalidRank(_))
        ));
        assert!(rsvd(&w, 0, &RsvdConfig::default()).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let w = gaussian_matrix(40, 30, 5).unwrap();
        let cfg = RsvdConfig::default().with_seed(77);
        assert_eq!(rsvd(&w, 5, &cfg).unwrap(), rsvd(&w, 5, &cfg).unwrap());
    }
}
