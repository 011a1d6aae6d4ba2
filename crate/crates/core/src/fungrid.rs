//! Observation grids on [0, 1], replicate containers and trapezoidal quadrature.

use ndarray::{Array1, Array2, Array3, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Ordered time points on [0, 1] with quadrature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Shape(format!(
                "grid has {} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("grid points must be strictly increasing".into()));
        }
        let (first, last) = (points[0], points[points.len() - 1]);
        if !(first >= 0.0) || !(last <= 1.0) {
            return Err(Error::InvalidArgument("grid points must lie in [0, 1]".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("quadrature weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - (last - first)).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "quadrature weights sum to {total}, expected {}",
                last - first
            )));
        }
        Ok(Self { points, weights })
    }

    /// Trapezoidal weights for arbitrary strictly increasing points.
    pub fn trapezoidal(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
        }
        let m = points.len();
        let mut weights = vec![0.0; m];
        for h in 0..m - 1 {
            let half = 0.5 * (points[h + 1] - points[h]);
            weights[h] += half;
            weights[h + 1] += half;
        }
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Equally spaced grid `0, 1/(n-1), ..., 1` with trapezoidal weights.
pub fn make_uniform_grid(n_points: usize) -> Result<Grid> {
    if n_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "uniform grid needs n_points >= 2, got {n_points}"
        )));
    }
    let h = 1.0 / (n_points - 1) as f64;
    let points = (0..n_points)
        .map(|i| if i == n_points - 1 { 1.0 } else { i as f64 * h })
        .collect();
    let mut weights = vec![h; n_points];
    weights[0] = 0.5 * h;
    weights[n_points - 1] = 0.5 * h;
    Grid::new(points, weights)
}

/// Quadrature approximation of the integral of `f·g` over the grid.
pub fn inner_product(f: ArrayView1<f64>, g: ArrayView1<f64>, grid: &Grid) -> Result<f64> {
    if f.len() != grid.len() || g.len() != grid.len() {
        return Err(Error::Shape(format!(
            "inner product of lengths {} and {} on a {}-point grid",
            f.len(),
            g.len(),
            grid.len()
        )));
    }
    Ok(grid
        .weights()
        .iter()
        .zip(f.iter().zip(g.iter()))
        .map(|(w, (a, b))| w * a * b)
        .sum())
}

/// Repeated functional observations `W_ij(t)` on a shared grid.
///
/// Each subject holds a `J_i x n_points` block; `J_i` may differ between subjects.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionalReplicates {
    grid: Grid,
    subjects: Vec<Array2<f64>>,
}

impl FunctionalReplicates {
    pub fn new(grid: Grid, subjects: Vec<Array2<f64>>) -> Result<Self> {
        for (i, block) in subjects.iter().enumerate() {
            if block.ncols() != grid.len() {
                return Err(Error::Shape(format!(
                    "subject {i}: {} time points, grid has {}",
                    block.ncols(),
                    grid.len()
                )));
            }
            if block.nrows() == 0 {
                return Err(Error::InvalidArgument(format!("subject {i} has no replicates")));
            }
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("subject {i} has non-finite values")));
            }
        }
        Ok(Self { grid, subjects })
    }

    /// Balanced replicates from an `n x J x n_points` array.
    pub fn from_array(grid: Grid, values: Array3<f64>) -> Result<Self> {
        let subjects = values.outer_iter().map(|s| s.to_owned()).collect();
        Self::new(grid, subjects)
    }

    /// One replicate per subject, from an `n x n_points` matrix.
    pub fn single(grid: Grid, curves: &Array2<f64>) -> Result<Self> {
        let subjects = curves.outer_iter().map(|c| c.insert_axis(Axis(0)).to_owned()).collect();
        Self::new(grid, subjects)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    /// `J_i x n_points` block of subject `i`.
    pub fn subject(&self, i: usize) -> &Array2<f64> {
        &self.subjects[i]
    }

    pub fn subjects(&self) -> &[Array2<f64>] {
        &self.subjects
    }

    pub fn replicate_counts(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.nrows()).collect()
    }

    /// Common replicate count, or `None` when subjects differ.
    pub fn n_replicates(&self) -> Option<usize> {
        common_count(self.subjects.iter().map(|s| s.nrows()))
    }

    pub fn min_replicates(&self) -> usize {
        self.subjects.iter().map(|s| s.nrows()).min().unwrap_or(0)
    }

    /// Curves of one session (0-based) as an `n x n_points` matrix.
    pub fn session(&self, j: usize) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.n_subjects(), self.grid.len()));
        for (i, s) in self.subjects.iter().enumerate() {
            if j >= s.nrows() {
                return Err(Error::InvalidArgument(format!(
                    "session {} out of range for subject {i} with {} replicates",
                    j + 1,
                    s.nrows()
                )));
            }
            out.row_mut(i).assign(&s.row(j));
        }
        Ok(out)
    }

    /// Subjects picked by index (repeats allowed), e.g. a bootstrap resample.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            grid: self.grid.clone(),
            subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect(),
        }
    }

    /// Apply `f` to every value, keeping the layout.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            subjects: self.subjects.iter().map(|s| s.mapv(&f)).collect(),
        }
    }
}

/// Repeated scalar surrogates `W_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarReplicates {
    subjects: Vec<Vec<f64>>,
}

impl ScalarReplicates {
    pub fn new(subjects: Vec<Vec<f64>>) -> Result<Self> {
        for (i, s) in subjects.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::InvalidArgument(format!("subject {i} has no replicates")));
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("subject {i} has non-finite values")));
            }
        }
        Ok(Self { subjects })
    }

    /// Balanced replicates from an `n x J` matrix.
    pub fn from_array(values: &Array2<f64>) -> Result<Self> {
        Self::new(values.outer_iter().map(|r| r.to_vec()).collect())
    }

    pub fn single(values: &[f64]) -> Result<Self> {
        Self::new(values.iter().map(|&v| vec![v]).collect())
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn subject(&self, i: usize) -> &[f64] {
        &self.subjects[i]
    }

    pub fn subjects(&self) -> &[Vec<f64>] {
        &self.subjects
    }

    pub fn replicate_counts(&self) -> Vec<usize> {
        self.subjects.iter().map(|s| s.len()).collect()
    }

    pub fn n_replicates(&self) -> Option<usize> {
        common_count(self.subjects.iter().map(|s| s.len()))
    }

    pub fn min_replicates(&self) -> usize {
        self.subjects.iter().map(|s| s.len()).min().unwrap_or(0)
    }

    pub fn session(&self, j: usize) -> Result<Vec<f64>> {
        self.subjects
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.get(j).copied().ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "session {} out of range for subject {i} with {} replicates",
                        j + 1,
                        s.len()
                    ))
                })
            })
            .collect()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self { subjects: idx.iter().map(|&i| self.subjects[i].clone()).collect() }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { subjects: self.subjects.iter().map(|s| s.iter().map(|&v| f(v)).collect()).collect() }
    }
}

fn common_count(mut counts: impl Iterator<Item = usize>) -> Option<usize> {
    let first = counts.next()?;
    counts.all(|c| c == first).then_some(first)
}

/// Per-subject average over the replicate axis.
pub trait ReplicateMean {
    type Output;
    fn replicate_mean(&self) -> Self::Output;
}

impl ReplicateMean for FunctionalReplicates {
    /// `n x n_points` matrix of mean curves.
    type Output = Array2<f64>;

    fn replicate_mean(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_subjects(), self.grid.len()));
        for (i, s) in self.subjects.iter().enumerate() {
            let j = s.nrows() as f64;
            let mut row = out.row_mut(i);
            for rep in s.outer_iter() {
                row += &rep;
            }
            row /= j;
        }
        out
    }
}

impl ReplicateMean for ScalarReplicates {
    type Output = Array1<f64>;

    fn replicate_mean(&self) -> Array1<f64> {
        self.subjects.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    #[test]
    fn uniform_grid_small_cases() {
        let g = make_uniform_grid(2).unwrap();
        assert_eq!(g.points(), &[0.0, 1.0]);
        assert_eq!(g.weights(), &[0.5, 0.5]);
        let g = make_uniform_grid(3).unwrap();
        assert_eq!(g.points(), &[0.0, 0.5, 1.0]);
        assert_eq!(g.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn uniform_grid_weights_sum_to_one() {
        let g = make_uniform_grid(101).unwrap();
        let mut total = 0.0;
        for w in g.weights() {
            total += *w;
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points_rejected() {
        assert!(matches!(make_uniform_grid(1), Err(Error::InvalidArgument(_))));
        assert!(make_uniform_grid(0).is_err());
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(Grid::new(vec![0.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(Grid::new(vec![0.5, 0.2], vec![0.15, 0.15]).is_err());
        assert!(Grid::trapezoidal(vec![-0.1, 0.5]).is_err());
        assert!(Grid::trapezoidal(vec![0.1, 0.3, 0.9]).is_ok());
    }

    #[test]
    fn quadrature_constants_and_linear() {
        for n in [2, 5, 17, 101] {
            let g = make_uniform_grid(n).unwrap();
            let one = Array1::<f64>::ones(n);
            let t = Array1::from(g.points().to_vec());
            assert!((inner_product(one.view(), one.view(), &g).unwrap() - 1.0).abs() < 1e-12);
            assert!((inner_product(t.view(), one.view(), &g).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn quadrature_sine_squared() {
        let g = make_uniform_grid(201).unwrap();
        let s: Array1<f64> = g.points().iter().map(|t| (2.0 * PI * t).sin()).collect();
        let v = inner_product(s.view(), s.view(), &g).unwrap();
        assert!((v - 0.5).abs() < 1e-4);
    }

    #[test]
    fn inner_product_length_mismatch() {
        let g = make_uniform_grid(5).unwrap();
        let a = Array1::<f64>::ones(4);
        let b = Array1::<f64>::ones(5);
        assert!(matches!(inner_product(a.view(), b.view(), &g), Err(Error::Shape(_))));
    }

    proptest! {
        #[test]
        fn inner_product_symmetric_bilinear(
            a in proptest::collection::vec(-5.0f64..5.0, 12),
            b in proptest::collection::vec(-5.0f64..5.0, 12),
            c in proptest::collection::vec(-5.0f64..5.0, 12),
            s in -3.0f64..3.0,
        ) {
            let g = make_uniform_grid(12).unwrap();
            let (a, b, c) = (Array1::from(a), Array1::from(b), Array1::from(c));
            let ab = inner_product(a.view(), b.view(), &g).unwrap();
            let ba = inner_product(b.view(), a.view(), &g).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
            let lhs = inner_product((&a * s + &c).view(), b.view(), &g).unwrap();
            let rhs = s * ab + inner_product(c.view(), b.view(), &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn replicate_mean_permutation_invariant(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let g = make_uniform_grid(4).unwrap();
            let vals = Array3::from_shape_fn((3, 5, 4), |_| rng.random::<f64>());
            let mut rev = vals.clone();
            rev.invert_axis(Axis(1));
            let a = FunctionalReplicates::from_array(g.clone(), vals).unwrap().replicate_mean();
            let b = FunctionalReplicates::from_array(g, rev).unwrap().replicate_mean();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn replicate_mean_single_replicate_is_identity() {
        let g = make_uniform_grid(3).unwrap();
        let curves = ndarray::array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.5]];
        let reps = FunctionalReplicates::single(g, &curves).unwrap();
        assert_eq!(reps.replicate_mean(), curves);
        let s = ScalarReplicates::single(&[1.5, -2.0]).unwrap();
        assert_eq!(s.replicate_mean().to_vec(), vec![1.5, -2.0]);
    }

    #[test]
    fn replicate_mean_of_two_values() {
        let s = ScalarReplicates::new(vec![vec![1.0, 3.0]]).unwrap();
        assert_eq!(s.replicate_mean()[0], 2.0);
        let g = make_uniform_grid(2).unwrap();
        let f = FunctionalReplicates::from_array(
            g,
            Array3::from_shape_vec((1, 2, 2), vec![1.0, 0.0, 3.0, 0.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(f.replicate_mean()[[0, 0]], 2.0);
    }

    #[test]
    fn replicate_mean_matches_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (n, j, m) = (6, 5, 7);
        let vals = Array3::from_shape_fn((n, j, m), |_| rng.random::<f64>() * 10.0 - 5.0);
        let g = make_uniform_grid(m).unwrap();
        let got = FunctionalReplicates::from_array(g, vals.clone()).unwrap().replicate_mean();
        for i in 0..n {
            for h in 0..m {
                let mut s = 0.0;
                for r in 0..j {
                    s += vals[[i, r, h]];
                }
                assert_eq!(got[[i, h]], s / j as f64);
            }
        }
    }

    #[test]
    fn unbalanced_and_invalid_blocks() {
        let g = make_uniform_grid(2).unwrap();
        let reps = FunctionalReplicates::new(
            g.clone(),
            vec![Array2::zeros((2, 2)), Array2::zeros((3, 2))],
        )
        .unwrap();
        assert_eq!(reps.n_replicates(), None);
        assert_eq!(reps.replicate_counts(), vec![2, 3]);
        assert!(reps.session(2).is_err());
        assert!(FunctionalReplicates::new(g.clone(), vec![Array2::zeros((2, 3))]).is_err());
        let mut bad = Array2::zeros((1, 2));
        bad[[0, 1]] = f64::NAN;
        assert!(FunctionalReplicates::new(g, vec![bad]).is_err());
        assert!(ScalarReplicates::new(vec![vec![]]).is_err());
    }
}
