use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Thin QR factorisation of a tall (or square) matrix.
///
/// Returns `q` (rows x cols, orthonormal columns) and `r` (cols x cols,
/// upper triangular with a non-negative diagonal). Entries of `r` below the
/// diagonal are exact zeros.
pub fn qr_decompose(m: &Matrix) -> Result<(Matrix, Matrix)> {
    if m.rows() < m.cols() {
        return Err(Error::DimensionMismatch(format!(
            "thin QR needs rows >= cols, got {}x{}; factor the transpose instead",
            m.rows(),
            m.cols()
        )));
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("QR input".into()));
    }
    Ok(householder_qr(m))
}

/// Householder QR for any shape: `q` is rows x k and `r` is k x cols with
/// k = min(rows, cols).
pub(crate) fn householder_qr(m: &Matrix) -> (Matrix, Matrix) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    // Column-major working copy; reflectors are applied column by column.
    let mut work = m.to_columns();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(k);

    for j in 0..k {
        let x = &work[j][j..];
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|e| e * e).sum();
        if v_norm_sq == 0.0 {
            reflectors.push(Vec::new());
            continue;
        }
        let scale = 2.0 / v_norm_sq;
        work[j][j] = alpha;
        work[j][j + 1..].iter_mut().for_each(|e| *e = 0.0);
        for col in work.iter_mut().skip(j + 1) {
            apply_reflector(&v, scale, &mut col[j..]);
        }
        reflectors.push(v);
    }

    let mut r = Matrix::zeros(k, cols);
    for (c, col) in work.iter().enumerate() {
        for (i, &v) in col.iter().enumerate().take(k.min(c + 1)) {
            r[(i, c)] = v;
        }
    }

    // Q = H_0 H_1 ... H_{k-1} applied to the leading k columns of the identity.
    let mut q_cols: Vec<Vec<f64>> = (0..k)
        .map(|c| {
            let mut e = vec![0.0; rows];
            e[c] = 1.0;
            e
        })
        .collect();
    for (j, v) in reflectors.iter().enumerate().rev() {
        if v.is_empty() {
            continue;
        }
        let scale = 2.0 / v.iter().map(|e| e * e).sum::<f64>();
        for col in q_cols.iter_mut() {
            apply_reflector(v, scale, &mut col[j..]);
        }
    }

    for i in 0..k {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).iter_mut().for_each(|e| *e = -*e);
            q_cols[i].iter_mut().for_each(|e| *e = -*e);
        }
    }
    (Matrix::from_columns(&q_cols), r)
}

fn apply_reflector(v: &[f64], scale: f64, x: &mut [f64]) {
    let dot: f64 = v.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
    if dot == 0.0 {
        return;
    }
    let f = scale * dot;
    for (xi, vi) in x.iter_mut().zip(v) {
        *xi -= f * vi;
    }
}
