//! Clamped B-spline bases on [0, 1] and projection of curves onto basis scores.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::fungrid::Grid;
use crate::linalg;

/// B-spline basis with equally spaced interior knots and clamped boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    degree: usize,
    knots: Vec<f64>,
    n_basis: usize,
}

impl BSplineBasis {
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of basis functions `K_n`.
    pub fn n_basis(&self) -> usize {
        self.n_basis
    }

    /// Full knot vector including the repeated boundary knots.
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.degree + 1..self.n_basis]
    }

    /// Support `[lo, hi]` of basis function `k`.
    pub fn support(&self, k: usize) -> (f64, f64) {
        (self.knots[k], self.knots[k + self.degree + 1])
    }

    fn find_span(&self, t: f64) -> usize {
        let p = self.degree;
        let last = self.n_basis - 1;
        if t >= self.knots[last + 1] {
            return last;
        }
        // knots[p] <= t < knots[last + 1]
        let (mut lo, mut hi) = (p, last + 1);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// All `K_n` basis values at `t` (clamped to [0, 1]).
    pub fn evaluate(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_basis];
        let t = t.clamp(0.0, 1.0);
        let p = self.degree;
        let span = self.find_span(t);
        // de Boor / Cox recursion for the p+1 non-vanishing functions.
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = n[r] / (right[r + 1] + left[j - r]);
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        out[span - p..=span].copy_from_slice(&n);
        out
    }

    /// `n_points x K_n` matrix of basis values on the grid.
    pub fn design(&self, grid: &Grid) -> Array2<f64> {
        let mut b = Array2::zeros((grid.len(), self.n_basis));
        for (h, &t) in grid.points().iter().enumerate() {
            for (k, v) in self.evaluate(t).into_iter().enumerate() {
                b[[h, k]] = v;
            }
        }
        b
    }

    /// Basis matrix with each row scaled by its quadrature weight.
    pub fn weighted_design(&self, grid: &Grid) -> Array2<f64> {
        let mut b = self.design(grid);
        for (mut row, w) in b.outer_iter_mut().zip(grid.weights()) {
            row *= *w;
        }
        b
    }

    /// Gram matrix of the basis under the grid quadrature.
    pub fn gram(&self, grid: &Grid) -> Array2<f64> {
        self.design(grid).t().dot(&self.weighted_design(grid))
    }
}

/// Basis with `n_basis` functions of the given degree.
pub fn build_basis(n_basis: usize, degree: usize) -> Result<BSplineBasis> {
    if n_basis < degree + 1 {
        return Err(Error::InvalidArgument(format!(
            "K_n = {n_basis} is too small for degree {degree} (need at least {})",
            degree + 1
        )));
    }
    let n_interior = n_basis - degree - 1;
    let mut knots = Vec::with_capacity(n_basis + degree + 1);
    knots.extend(std::iter::repeat_n(0.0, degree + 1));
    knots.extend((1..=n_interior).map(|i| i as f64 / (n_interior + 1) as f64));
    knots.extend(std::iter::repeat_n(1.0, degree + 1));
    Ok(BSplineBasis { degree, knots, n_basis })
}

/// Number of basis functions for sample size `n`: `max(5, ceil(2 n^(1/5)))` unless overridden.
pub fn select_kn(n: usize, override_kn: Option<usize>) -> usize {
    if let Some(k) = override_kn {
        return k;
    }
    let raw = (2.0 * (n.max(1) as f64).powf(0.2)).ceil() as usize;
    raw.max(5)
}

/// Basis scores `∫ curve_i(t) b_k(t) dt` for every row of `curves` (`n x n_points`).
pub fn reduce(curves: &Array2<f64>, basis: &BSplineBasis, grid: &Grid) -> Result<Array2<f64>> {
    if curves.ncols() != grid.len() {
        return Err(Error::Shape(format!(
            "curves have {} points, grid has {}",
            curves.ncols(),
            grid.len()
        )));
    }
    Ok(curves.dot(&basis.weighted_design(grid)))
}

/// `Σ_k γ_k b_k(t)` evaluated on the grid.
pub fn expand_coefficients(
    gamma: ArrayView1<f64>,
    basis: &BSplineBasis,
    grid: &Grid,
) -> Result<Array1<f64>> {
    if gamma.len() != basis.n_basis() {
        return Err(Error::Shape(format!(
            "{} coefficients for a basis of size {}",
            gamma.len(),
            basis.n_basis()
        )));
    }
    Ok(basis.design(grid).dot(&gamma))
}

/// L2 projection of a curve onto the spline space: solves `G γ = reduce(f)`.
pub fn project(f: ArrayView1<f64>, basis: &BSplineBasis, grid: &Grid) -> Result<Array1<f64>> {
    if f.len() != grid.len() {
        return Err(Error::Shape(format!("curve has {} points, grid has {}", f.len(), grid.len())));
    }
    let rhs = basis.weighted_design(grid).t().dot(&f);
    linalg::solve_spd(basis.gram(grid).view(), rhs.view())
        .ok_or_else(|| Error::Numeric("basis Gram matrix is singular on this grid".into()))
}
