//! Covariance structures over a grid and mean-zero Gaussian-process draws.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::fungrid::Grid;
use crate::linalg;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceKind {
    CompoundSymmetric,
    Ar1,
    SquaredExponential,
    Unstructured,
}

impl CovarianceKind {
    pub fn name(self) -> &'static str {
        match self {
            CovarianceKind::CompoundSymmetric => "cs",
            CovarianceKind::Ar1 => "ar1",
            CovarianceKind::SquaredExponential => "sqexp",
            CovarianceKind::Unstructured => "un",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cs" | "compound_symmetric" | "compoundsymmetric" => Ok(CovarianceKind::CompoundSymmetric),
            "ar1" => Ok(CovarianceKind::Ar1),
            "sqexp" | "exp" | "squared_exponential" | "squaredexponential" => {
                Ok(CovarianceKind::SquaredExponential)
            }
            "un" | "unstructured" => Ok(CovarianceKind::Unstructured),
            other => Err(Error::Config(format!("unknown covariance kind '{other}'"))),
        }
    }
}

/// Named covariance structure and its parameters.
///
/// `rho` is used by CS, AR1 and Unstructured; `length_scale` by the
/// squared exponential; `jitter_seed` drives the random adjacent
/// correlations of the unstructured kind.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub sigma: f64,
    pub rho: f64,
    pub length_scale: f64,
    pub jitter_seed: u64,
}

impl CovarianceSpec {
    pub fn squared_exponential(sigma: f64, length_scale: f64) -> Self {
        Self { kind: CovarianceKind::SquaredExponential, sigma, rho: 0.0, length_scale, jitter_seed: 0 }
    }

    pub fn compound_symmetric(sigma: f64, rho: f64) -> Self {
        Self { kind: CovarianceKind::CompoundSymmetric, sigma, rho, length_scale: 1.0, jitter_seed: 0 }
    }

    pub fn ar1(sigma: f64, rho: f64) -> Self {
        Self { kind: CovarianceKind::Ar1, sigma, rho, length_scale: 1.0, jitter_seed: 0 }
    }

    pub fn unstructured(sigma: f64, rho: f64, jitter_seed: u64) -> Self {
        Self { kind: CovarianceKind::Unstructured, sigma, rho, length_scale: 1.0, jitter_seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return Err(Error::InvalidArgument(format!("sigma must be >= 0, got {}", self.sigma)));
        }
        match self.kind {
            CovarianceKind::SquaredExponential => {
                if !(self.length_scale > 0.0) || !self.length_scale.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "length_scale must be > 0, got {}",
                        self.length_scale
                    )));
                }
            }
            _ => {
                if !(0.0..=1.0).contains(&self.rho) {
                    return Err(Error::InvalidArgument(format!("rho must be in [0, 1], got {}", self.rho)));
                }
            }
        }
        Ok(())
    }
}

/// Symmetric covariance matrix over the grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    matrix: Array2<f64>,
}

impl CovarianceMatrix {
    /// Validates squareness, finiteness and symmetry (1e-12 relative to the largest entry).
    pub fn new(matrix: Array2<f64>) -> Result<Self> {
        let (r, c) = matrix.dim();
        if r != c {
            return Err(Error::Shape(format!("covariance must be square, got {r}x{c}")));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariance has non-finite entries".into()));
        }
        let scale = matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in (i + 1)..r {
                if (matrix[[i, j]] - matrix[[j, i]]).abs() > 1e-12 * scale {
                    return Err(Error::InvalidArgument(format!(
                        "covariance is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { matrix })
    }

    pub fn zeros(n: usize) -> Self {
        Self { matrix: Array2::zeros((n, n)) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.matrix.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.matrix
    }

    /// Lower Cholesky factor, with the escalating-jitter policy.
    pub fn factor(&self) -> Result<Array2<f64>> {
        linalg::cholesky_jittered(self.matrix.view()).map(|(l, _)| l)
    }
}

/// Covariance matrix of `spec` evaluated on the grid.
pub fn build_covariance(spec: &CovarianceSpec, grid: &Grid) -> Result<CovarianceMatrix> {
    spec.validate()?;
    let t = grid.points();
    let m = t.len();
    let var = spec.sigma * spec.sigma;
    let matrix = match spec.kind {
        CovarianceKind::SquaredExponential => {
            let denom = 2.0 * spec.length_scale * spec.length_scale;
            Array2::from_shape_fn((m, m), |(a, b)| {
                let d = t[a] - t[b];
                var * (-(d * d) / denom).exp()
            })
        }
        CovarianceKind::CompoundSymmetric => {
            Array2::from_shape_fn((m, m), |(a, b)| if a == b { var } else { var * spec.rho })
        }
        CovarianceKind::Ar1 => Array2::from_shape_fn((m, m), |(a, b)| {
            var * spec.rho.powi(a.abs_diff(b) as i32)
        }),
        CovarianceKind::Unstructured => {
            let adjacent = unstructured_adjacent_correlations(spec, m)?;
            let mut c = Array2::zeros((m, m));
            for a in 0..m {
                c[[a, a]] = var;
                let mut corr = 1.0;
                for b in (a + 1)..m {
                    corr *= adjacent[b - 1];
                    c[[a, b]] = var * corr;
                    c[[b, a]] = var * corr;
                }
            }
            c
        }
    };
    let cov = CovarianceMatrix::new(matrix)?;
    if spec.sigma > 0.0 {
        cov.factor()?;
    }
    Ok(cov)
}

/// Adjacent correlations `r_h ~ U[max(0, ρ-0.25), min(ρ+0.25, 1)]`, `h = 0..m-1`.
pub fn unstructured_adjacent_correlations(spec: &CovarianceSpec, m: usize) -> Result<Vec<f64>> {
    let lo = (spec.rho - 0.25).max(0.0);
    let hi = (spec.rho + 0.25).min(1.0);
    let mut rng = stream_rng(spec.jitter_seed, 0);
    let dist = Uniform::new_inclusive(lo, hi)
        .map_err(|e| Error::InvalidArgument(format!("bad correlation range: {e}")))?;
    Ok((0..m.saturating_sub(1)).map(|_| dist.sample(&mut rng)).collect())
}

/// Draws from `N(0, Σ)` using a cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct GpSampler {
    factor: Array2<f64>,
}

impl GpSampler {
    pub fn new(cov: &CovarianceMatrix) -> Result<Self> {
        Ok(Self { factor: cov.factor()? })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    /// `n_draws x dim` matrix; row `r` is `L z_r` with `z_r` standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, n_draws: usize, rng: &mut R) -> Array2<f64> {
        let m = self.dim();
        let z = Array2::from_shape_simple_fn((n_draws, m), || StandardNormal.sample(rng));
        z.dot(&self.factor.t())
    }
}

/// `n_draws` i.i.d. rows from `N(0, cov)`.
pub fn sample_gp<R: Rng + ?Sized>(
    cov: &CovarianceMatrix,
    n_draws: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    Ok(GpSampler::new(cov)?.sample(n_draws, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fungrid::make_uniform_grid;
    use crate::rng::stream_rng;

    fn grid(n: usize) -> Grid {
        make_uniform_grid(n).unwrap()
    }

    #[test]
    fn sqexp_diagonal_is_variance() {
        let c = build_covariance(&CovarianceSpec::squared_exponential(2.0, 0.15), &grid(20)).unwrap();
        for i in 0..20 {
            assert!((c.matrix()[[i, i]] - 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn ar1_entry_is_rho_power() {
        let c = build_covariance(&CovarianceSpec::ar1(1.0, 0.25), &grid(10)).unwrap();
        assert!((c.matrix()[[3, 5]] - 0.0625).abs() < 1e-15);
        assert!((c.matrix()[[5, 3]] - 0.0625).abs() < 1e-15);
    }

    #[test]
    fn cs_entries() {
        let c = build_covariance(&CovarianceSpec::compound_symmetric(2.0, 0.25), &grid(5)).unwrap();
        assert_eq!(c.matrix()[[0, 0]], 4.0);
        assert_eq!(c.matrix()[[0, 4]], 1.0);
    }

    #[test]
    fn zero_rho_gives_diagonal() {
        for spec in [CovarianceSpec::ar1(1.5, 0.0), CovarianceSpec::compound_symmetric(1.5, 0.0)] {
            let c = build_covariance(&spec, &grid(8)).unwrap();
            for ((i, j), v) in c.matrix().indexed_iter() {
                assert_eq!(*v, if i == j { 2.25 } else { 0.0 });
            }
        }
    }

    #[test]
    fn sqexp_tiny_length_scale_is_white() {
        let c = build_covariance(&CovarianceSpec::squared_exponential(1.0, 1e-4), &grid(11)).unwrap();
        for ((i, j), v) in c.matrix().indexed_iter() {
            if i != j {
                assert!(v.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unstructured_adjacent_range() {
        let spec = CovarianceSpec::unstructured(1.0, 0.25, 99);
        let r = unstructured_adjacent_correlations(&spec, 100).unwrap();
        assert_eq!(r.len(), 99);
        assert!(r.iter().all(|&v| (0.0..=0.5).contains(&v)));
        let c = build_covariance(&spec, &grid(100)).unwrap();
        for h in 0..99 {
            assert!((c.matrix()[[h, h + 1]] - r[h]).abs() < 1e-15);
        }
        let spec = CovarianceSpec::unstructured(1.0, 0.9, 3);
        let r = unstructured_adjacent_correlations(&spec, 50).unwrap();
        assert!(r.iter().all(|&v| (0.65..=1.0).contains(&v)));
    }

    #[test]
    fn all_kinds_symmetric_and_psd() {
        let g = grid(60);
        let specs = [
            CovarianceSpec::squared_exponential(3.0, 0.05),
            CovarianceSpec::squared_exponential(2.0, 0.25),
            CovarianceSpec::compound_symmetric(4.0, 0.25),
            CovarianceSpec::ar1(4.0, 0.25),
            CovarianceSpec::unstructured(4.0, 0.25, 1),
            CovarianceSpec::unstructured(2.0, 0.9, 2),
        ];
        for spec in specs {
            let c = build_covariance(&spec, &g).unwrap();
            let m = c.matrix();
            assert_eq!(m, &m.t().to_owned());
            let mut shifted = m.clone();
            let var = spec.sigma * spec.sigma;
            for i in 0..60 {
                shifted[[i, i]] += 1e-8 * var;
            }
            assert!(linalg::cholesky(shifted.view()).is_some(), "{spec:?}");
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        let g = grid(5);
        assert!(build_covariance(&CovarianceSpec::ar1(-1.0, 0.2), &g).is_err());
        assert!(build_covariance(&CovarianceSpec::ar1(1.0, 1.2), &g).is_err());
        assert!(build_covariance(&CovarianceSpec::squared_exponential(1.0, 0.0), &g).is_err());
        assert!(CovarianceMatrix::new(ndarray::array![[1.0, 0.5], [0.4, 1.0]]).is_err());
        assert!(CovarianceMatrix::new(Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn non_psd_matrix_fails_to_sample() {
        let c = CovarianceMatrix::new(ndarray::array![[1.0, 2.0], [2.0, 1.0]]).unwrap();
        let mut rng = stream_rng(1, 0);
        assert!(matches!(sample_gp(&c, 3, &mut rng), Err(Error::Numeric(_))));
    }

    #[test]
    fn degenerate_gp_is_zero() {
        let c = build_covariance(&CovarianceSpec::squared_exponential(0.0, 0.1), &grid(7)).unwrap();
        let mut rng = stream_rng(3, 0);
        let draws = sample_gp(&c, 10, &mut rng).unwrap();
        assert!(draws.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sampling_is_deterministic() {
        let c = build_covariance(&CovarianceSpec::squared_exponential(1.0, 0.2), &grid(12)).unwrap();
        let a = sample_gp(&c, 5, &mut stream_rng(77, 2)).unwrap();
        let b = sample_gp(&c, 5, &mut stream_rng(77, 2)).unwrap();
        assert_eq!(a, b);
        let d = sample_gp(&c, 5, &mut stream_rng(78, 2)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn sample_covariance_matches_target() {
        let g = grid(10);
        let c = build_covariance(&CovarianceSpec::squared_exponential(1.0, 0.15), &g).unwrap();
        let n = 50_000;
        let draws = sample_gp(&c, n, &mut stream_rng(2024, 0)).unwrap();
        // Monte Carlo oracle: plain sample covariance around the known zero mean.
        for a in 0..10 {
            let mean_a = draws.column(a).sum() / n as f64;
            assert!(mean_a.abs() < 3.0 / (n as f64).sqrt());
            for b in 0..10 {
                let mut s = 0.0;
                for r in 0..n {
                    s += draws[[r, a]] * draws[[r, b]];
                }
                let emp = s / n as f64;
                assert!((emp - c.matrix()[[a, b]]).abs() < 0.05, "({a},{b}): {emp}");
            }
        }
    }
}
