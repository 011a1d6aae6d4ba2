//! Small dense linear-algebra kernels used by the fitters.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// Returns `None` when a pivot is not positive relative to its diagonal entry
/// (cancellation below `1e-12 · a_jj` is treated as singular).
pub fn cholesky(a: ArrayView2<f64>) -> Option<Array2<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 1e-12 * a[[j, j]]) || !d.is_finite() {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = djj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / djj;
        }
    }
    Some(l)
}

/// Cholesky with escalating diagonal jitter: 1e-12·scale, ×10 per step, up to 1e-8·scale.
///
/// A matrix whose diagonal is identically zero factors to the zero matrix.
/// Returns the factor and the jitter that was added.
pub fn cholesky_jittered(a: ArrayView2<f64>) -> Result<(Array2<f64>, f64)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Shape(format!("cholesky of {}x{} matrix", n, a.ncols())));
    }
    if n == 0 {
        return Ok((Array2::zeros((0, 0)), 0.0));
    }
    let scale = a.diag().iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    if scale == 0.0 {
        if a.iter().all(|&v| v == 0.0) {
            return Ok((Array2::zeros((n, n)), 0.0));
        }
        return Err(Error::Numeric("matrix with zero diagonal is not PSD".into()));
    }
    if let Some(l) = cholesky(a) {
        return Ok((l, 0.0));
    }
    let mut jitter = 1e-12 * scale;
    while jitter <= 1e-8 * scale * (1.0 + 1e-9) {
        let mut b = a.to_owned();
        for i in 0..n {
            b[[i, i]] += jitter;
        }
        if let Some(l) = cholesky(b.view()) {
            return Ok((l, jitter));
        }
        jitter *= 10.0;
    }
    Err(Error::Numeric(format!(
        "matrix is not positive semidefinite (Cholesky failed with jitter up to {:.3e})",
        1e-8 * scale
    )))
}

/// Solve `A x = b` given the lower Cholesky factor of `A`.
pub fn cholesky_solve(l: ArrayView2<f64>, b: ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.to_owned();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[[i, k]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * y[k];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

/// Solve a symmetric positive definite system; `None` if `A` is not numerically PD.
pub fn solve_spd(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Option<Array1<f64>> {
    let l = cholesky(a)?;
    let x = cholesky_solve(l.view(), b);
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Least squares `min ||X b - y||` by Householder QR.
///
/// Fails when `X` is rank deficient relative to its largest column norm.
pub fn lstsq_qr(x: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (m, n) = x.dim();
    if y.len() != m {
        return Err(Error::Shape(format!("lstsq: {} rows vs {} responses", m, y.len())));
    }
    if m < n {
        return Err(Error::InvalidArgument(format!("lstsq: {m} rows < {n} columns")));
    }
    let mut a = x.to_owned();
    let mut rhs = y.to_owned();
    let col_scale = (0..n)
        .map(|j| a.column(j).dot(&a.column(j)).sqrt())
        .fold(0.0_f64, f64::max);
    for k in 0..n {
        let norm = (k..m).map(|i| a[[i, k]] * a[[i, k]]).sum::<f64>().sqrt();
        if norm <= 1e-12 * col_scale.max(f64::MIN_POSITIVE) {
            return Err(Error::InvalidArgument("lstsq: rank-deficient design".into()));
        }
        let alpha = if a[[k, k]] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (k..m).map(|i| a[[i, k]]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|t| t * t).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i - k] * a[[i, j]]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    a[[i, j]] -= f * v[i - k];
                }
            }
            let dot: f64 = (k..m).map(|i| v[i - k] * rhs[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                rhs[i] -= f * v[i - k];
            }
        }
    }
    let mut b = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = rhs[i];
        for j in (i + 1)..n {
            s -= a[[i, j]] * b[j];
        }
        b[i] = s / a[[i, i]];
    }
    Ok(b)
}
