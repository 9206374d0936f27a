use super::qr::householder_qr;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAX_SWEEPS: usize = 80;
const ROTATION_TOLERANCE: f64 = 1e-15;

/// Thin singular value decomposition `u · diag(s) · v_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Matrix,
    pub singular_values: Vec<f64>,
    pub v_t: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> SvdResult {
        assert!(k >= 1 && k <= self.rank(), "truncation rank out of range");
        SvdResult {
            u: self.u.leading_columns(k),
            singular_values: self.singular_values[..k].to_vec(),
            v_t: self.v_t.leading_rows(k),
        }
    }

    pub fn reconstruct(&self) -> Matrix {
        self.u
            .scale_columns(&self.singular_values)
            .matmul(&self.v_t)
            .expect("SVD factors are conformable")
    }
}

/// Full thin SVD by one-sided (Hestenes) Jacobi rotations on the triangular
/// factor of a Householder QR.
///
/// Returns `min(rows, cols)` triplets in descending order. Each left singular
/// vector is signed so that its largest-magnitude entry is non-negative.
pub fn svd_full(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::NonFinite("SVD input".into()));
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose())?;
        let mut out = SvdResult {
            u: t.v_t.transpose(),
            singular_values: t.singular_values,
            v_t: t.u.transpose(),
        };
        fix_signs(&mut out);
        return Ok(out);
    }
    let mut out = svd_tall(m)?;
    fix_signs(&mut out);
    Ok(out)
}

fn svd_tall(m: &Matrix) -> Result<SvdResult> {
    let n = m.cols();
    let (q, r) = householder_qr(m);

    let mut g = r.to_columns();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..n - 1 {
            for k in p + 1..n {
                let alpha = dot(&g[p], &g[p]);
                let beta = dot(&g[k], &g[k]);
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                let gamma = dot(&g[p], &g[k]);
                if gamma.abs() <= ROTATION_TOLERANCE * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut g, p, k, c, s);
                rotate(&mut v, p, k, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let norms: Vec<f64> = g.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let singular_values: Vec<f64> = order.iter().map(|&i| norms[i]).collect();
    let mut u_cols: Vec<Option<Vec<f64>>> = order
        .iter()
        .map(|&i| {
            let s = norms[i];
            (s > f64::MIN_POSITIVE).then(|| g[i].iter().map(|e| e / s).collect())
        })
        .collect();
    complete_basis(&mut u_cols, n);
    let u_cols: Vec<Vec<f64>> = u_cols.into_iter().map(Option::unwrap).collect();

    let u_small = Matrix::from_columns(&u_cols);
    let u = q.matmul(&u_small)?;
    let v_t = Matrix::from_fn(n, n, |row, col| v[order[row]][col]);
    Ok(SvdResult {
        u,
        singular_values,
        v_t,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn rotate(cols: &mut [Vec<f64>], p: usize, k: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(k);
    let (x, y) = (&mut head[p], &mut tail[0]);
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let a = *xi;
        let b = *yi;
        *xi = c * a - s * b;
        *yi = s * a + c * b;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other column,
/// drawing candidates from the standard basis.
fn complete_basis(cols: &mut [Option<Vec<f64>>], dim: usize) {
    let mut candidate = 0;
    for slot in 0..cols.len() {
        if cols[slot].is_some() {
            continue;
        }
        while candidate < dim {
            let mut e = vec![0.0; dim];
            e[candidate] = 1.0;
            candidate += 1;
            // Two Gram-Schmidt passes against the columns fixed so far.
            for _ in 0..2 {
                for other in cols.iter().flatten() {
                    let proj = dot(&e, other);
                    e.iter_mut()
                        .zip(other)
                        .for_each(|(ei, oi)| *ei -= proj * oi);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > 1e-8 {
                e.iter_mut().for_each(|ei| *ei /= norm);
                cols[slot] = Some(e);
                break;
            }
        }
    }
}

/// Flips each `(u_i, v_i)` pair so the largest-magnitude entry of `u_i` is
/// non-negative (first occurrence wins ties).
pub(crate) fn fix_signs(svd: &mut SvdResult) {
    let (rows, k) = svd.u.shape();
    for i in 0..k {
        let mut best = 0;
        let mut best_abs = -1.0;
        for r in 0..rows {
            let a = svd.u[(r, i)].abs();
            if a > best_abs {
                best_abs = a;
                best = r;
            }
        }
        if svd.u[(best, i)] < 0.0 {
            for r in 0..rows {
                svd.u[(r, i)] = -svd.u[(r, i)];
            }
            svd.v_t.row_mut(i).iter_mut().for_each(|e| *e = -*e);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gaussian_matrix;

    fn orthonormal_columns_defect(m: &Matrix) -> f64 {
        m.transpose_matmul(m)
            .unwrap()
            .sub(&Matrix::identity(m.cols()))
            .unwrap()
            .max_abs()
    }

    #[test]
    fn diagonal_spectrum() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let svd = svd_full(&m).unwrap();
        assert_eq!(svd.singular_values, vec![3.0, 1.0]);
    }

    #[test]
    fn rank_one_outer_product() {
        // |u| = 2, |v| = 3.
        let u = [2.0, 0.0];
        let v = [0.0, 3.0];
        let m = Matrix::from_fn(2, 2, |i, j| u[i] * v[j]);
        let svd = svd_full(&m).unwrap();
        assert!((svd.singular_values[0] - 6.0).abs() < 1e-12);
        assert!(svd.singular_values[1].abs() < 1e-12);
        assert!(orthonormal_columns_defect(&svd.u) < 1e-12);
    }

    #[test]
    fn reconstruction_and_orthogonality_all_shapes() {
        for (seed, (r, c)) in [(6, 6), (9, 4), (4, 9), (1, 5), (5, 1), (20, 13)]
            .into_iter()
            .enumerate()
        {
            let m = gaussian_matrix(r, c, seed as u64).unwrap();
            let svd = svd_full(&m).unwrap();
            let k = r.min(c);
            assert_eq!(svd.u.shape(), (r, k));
            assert_eq!(svd.v_t.shape(), (k, c));
            assert!(svd.reconstruct().relative_error(&m).unwrap() < 1e-12);
            assert!(orthonormal_columns_defect(&svd.u) < 1e-8);
            assert!(orthonormal_columns_defect(&svd.v_t.transpose()) < 1e-8);
            assert!(svd.singular_values.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn zero_matrix_gets_orthonormal_bases() {
        let m = Matrix::zeros(5, 3);
        let svd = svd_full(&m).unwrap();
        assert_eq!(svd.singular_values, vec![0.0; 3]);
        assert!(orthonormal_columns_defect(&svd.u) < 1e-12);
    }

    #[test]
    fn sign_convention_holds() {
        let m = gaussian_matrix(7, 5, 3).unwrap();
        let svd = svd_full(&m).unwrap();
        for i in 0..5 {
            let col = svd.u.column(i);
            let max = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let min = col.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(max >= -min);
        }
    }

    #[test]
    fn deterministic() {
        let m = gaussian_matrix(12, 8, 4).unwrap();
        assert_eq!(svd_full(&m).unwrap(), svd_full(&m).unwrap());
    }

    #[test]
    fn rejects_non_finite() {
        // Matrix::new refuses non-finite data; map does not check.
        let m = Matrix::zeros(2, 2).map(|_| f64::INFINITY);
        assert!(matches!(svd_full(&m), Err(Error::NonFinite(_))));
    }
}
