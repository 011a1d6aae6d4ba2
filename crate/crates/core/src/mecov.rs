//! Measurement-error covariance of the replicate-averaged surrogates.
//!
//! With `J` replicates per subject the estimators are
//!
//! ```text
//! Σ̂_U1(t, t') = Σ_i Σ_j [W_ij(t') - W̄_i(t')][W_ij(t) - W̄_i(t)] / {n (J-1) J}
//! σ̂²_U2      = Σ_i Σ_j [W_ij - W̄_i]² / {n (J-1) J}
//! ```
//!
//! i.e. the covariance of the *averaged* error `Ū_i`. Unbalanced replicate
//! counts use `Σ_i (J_i - 1) · J̄` in the denominator, `J̄` the mean count.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::fungrid::{FunctionalReplicates, ScalarReplicates};
use crate::gp::CovarianceMatrix;

/// Covariance of `Ū_1i(t)` over the grid and variance of `Ū_2i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorCovariance {
    pub functional: CovarianceMatrix,
    pub scalar_var: f64,
}

impl ErrorCovariance {
    pub fn new(functional: CovarianceMatrix, scalar_var: f64) -> Result<Self> {
        if !(scalar_var >= 0.0) || !scalar_var.is_finite() {
            return Err(Error::InvalidArgument(format!("scalar error variance must be >= 0, got {scalar_var}")));
        }
        functional.factor()?;
        Ok(Self { functional, scalar_var })
    }

    pub fn zeros(n_points: usize) -> Self {
        Self { functional: CovarianceMatrix::zeros(n_points), scalar_var: 0.0 }
    }
}

/// Estimate both blocks from replicates.
pub fn estimate_error_cov(w1: &FunctionalReplicates, w2: &ScalarReplicates) -> Result<ErrorCovariance> {
    let functional = estimate_functional_error_cov(w1)?;
    let scalar_var = estimate_scalar_error_var(w2)?;
    Ok(ErrorCovariance { functional, scalar_var })
}

fn denominator(counts: &[usize], block: &str) -> Result<f64> {
    let dof: usize = counts.iter().map(|j| j.saturating_sub(1)).sum();
    if dof == 0 {
        return Err(Error::Identifiability(format!(
            "{block} covariate has a single replicate per subject; supply a known error covariance instead"
        )));
    }
    let mean_j = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
    Ok(dof as f64 * mean_j)
}

pub fn estimate_functional_error_cov(w1: &FunctionalReplicates) -> Result<CovarianceMatrix> {
    let denom = denominator(&w1.replicate_counts(), "functional")?;
    let m = w1.grid().len();
    let mut acc = Array2::<f64>::zeros((m, m));
    for block in w1.subjects() {
        let mean = block.mean_axis(Axis(0)).expect("non-empty block");
        let centered = block - &mean.insert_axis(Axis(0));
        acc += &centered.t().dot(&centered);
    }
    // gemm round-off can break exact symmetry
    let sym = (&acc + &acc.t()) * (0.5 / denom);
    CovarianceMatrix::new(sym)
}

pub fn estimate_scalar_error_var(w2: &ScalarReplicates) -> Result<f64> {
    let denom = denominator(&w2.replicate_counts(), "scalar")?;
    let mut ss = 0.0;
    for s in w2.subjects() {
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        ss += s.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    Ok(ss / denom)
}

/// Read a known error covariance: a headerless square CSV for the functional
/// block and an optional single-value CSV for the scalar variance.
pub fn load_known_cov(
    functional_path: &Path,
    scalar_path: Option<&Path>,
    n_points: usize,
) -> Result<ErrorCovariance> {
    let rows = read_numeric_csv(functional_path)?;
    let dim = rows.len();
    if dim != n_points || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape(format!(
            "{}: expected a {n_points}x{n_points} matrix",
            functional_path.display()
        )));
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let matrix = Array2::from_shape_vec((dim, dim), flat).expect("checked dimensions");
    let functional = CovarianceMatrix::new(matrix)?;
    let scalar_var = match scalar_path {
        Some(p) => {
            let vals: Vec<f64> = read_numeric_csv(p)?.into_iter().flatten().collect();
            if vals.len() != 1 {
                return Err(Error::Data(format!("{}: expected a single value", p.display())));
            }
            vals[0]
        }
        None => 0.0,
    };
    ErrorCovariance::new(functional, scalar_var)
}

/// Write the files read by [`load_known_cov`]; values round-trip exactly.
pub fn save_known_cov(cov: &ErrorCovariance, functional_path: &Path, scalar_path: Option<&Path>) -> Result<()> {
    let mut out = String::new();
    for row in cov.functional.matrix().outer_iter() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    fs::write(functional_path, out)?;
    if let Some(p) = scalar_path {
        fs::write(p, format!("{:?}\n", cov.scalar_var))?;
    }
    Ok(())
}

fn read_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path)?;
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::Data(format!("{}:{}: '{f}' is not a number", path.display(), line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fungrid::make_uniform_grid;
    use crate::gp::{build_covariance, sample_gp, CovarianceSpec};
    use crate::rng::stream_rng;
    use ndarray::Array3;
    use rand::Rng;

    fn random_reps(n: usize, j: usize, m: usize, seed: u64) -> (FunctionalReplicates, ScalarReplicates) {
        let mut rng = stream_rng(seed, 0);
        let g = make_uniform_grid(m).unwrap();
        let f = Array3::from_shape_fn((n, j, m), |_| rng.random::<f64>() * 4.0 - 2.0);
        let s = Array2::from_shape_fn((n, j), |_| rng.random::<f64>() * 4.0 - 2.0);
        (FunctionalReplicates::from_array(g, f).unwrap(), ScalarReplicates::from_array(&s).unwrap())
    }

    #[test]
    fn identical_replicates_give_zero() {
        let g = make_uniform_grid(5).unwrap();
        let f = Array3::from_shape_fn((4, 3, 5), |(i, _, h)| (i * 10 + h) as f64);
        let s = Array2::from_shape_fn((4, 3), |(i, _)| i as f64);
        let cov = estimate_error_cov(
            &FunctionalReplicates::from_array(g, f).unwrap(),
            &ScalarReplicates::from_array(&s).unwrap(),
        )
        .unwrap();
        assert!(cov.functional.matrix().iter().all(|&v| v == 0.0));
        assert_eq!(cov.scalar_var, 0.0);
    }

    #[test]
    fn hand_evaluated_scalar_variance() {
        let s = ScalarReplicates::new(vec![vec![0.0, 2.0]]).unwrap();
        assert_eq!(estimate_scalar_error_var(&s).unwrap(), 1.0);
    }

    #[test]
    fn single_replicate_is_unidentified() {
        let s = ScalarReplicates::single(&[1.0, 2.0]).unwrap();
        assert!(matches!(estimate_scalar_error_var(&s), Err(Error::Identifiability(_))));
        let g = make_uniform_grid(3).unwrap();
        let f = FunctionalReplicates::single(g, &Array2::zeros((2, 3))).unwrap();
        assert!(matches!(estimate_functional_error_cov(&f), Err(Error::Identifiability(_))));
    }

    #[test]
    fn matches_formula_loop_oracle() {
        let (f, s) = random_reps(7, 4, 5, 3);
        let est = estimate_error_cov(&f, &s).unwrap();
        let (n, j) = (7.0, 4.0);
        for a in 0..5 {
            for b in 0..5 {
                let mut acc = 0.0;
                for blk in f.subjects() {
                    let ma: f64 = blk.column(a).sum() / j;
                    let mb: f64 = blk.column(b).sum() / j;
                    for r in 0..4 {
                        acc += (blk[[r, a]] - ma) * (blk[[r, b]] - mb);
                    }
                }
                let want = acc / (n * (j - 1.0) * j);
                assert!((est.functional.matrix()[[a, b]] - want).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn scales_quadratically() {
        let (f, s) = random_reps(6, 3, 4, 9);
        let base = estimate_error_cov(&f, &s).unwrap();
        let scaled = estimate_error_cov(&f.map(|v| 2.0 * v), &s.map(|v| 2.0 * v)).unwrap();
        assert_eq!(scaled.functional.matrix(), &(base.functional.matrix() * 4.0));
        assert_eq!(scaled.scalar_var, base.scalar_var * 4.0);
    }

    #[test]
    fn invariant_to_subject_shift_and_replicate_order() {
        let (f, s) = random_reps(5, 4, 6, 12);
        let base = estimate_error_cov(&f, &s).unwrap();
        let shifted_blocks: Vec<_> = f
            .subjects()
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut b = b.clone();
                let mut rev = b.clone();
                rev.invert_axis(Axis(0));
                b.assign(&rev);
                b + (i as f64 * 3.7 - 2.0)
            })
            .collect();
        let f2 = FunctionalReplicates::new(f.grid().clone(), shifted_blocks).unwrap();
        let s2 = ScalarReplicates::new(
            s.subjects().iter().enumerate().map(|(i, v)| v.iter().rev().map(|x| x + i as f64).collect()).collect(),
        )
        .unwrap();
        let other = estimate_error_cov(&f2, &s2).unwrap();
        for (a, b) in base.functional.matrix().iter().zip(other.functional.matrix().iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((base.scalar_var - other.scalar_var).abs() < 1e-12);
    }

    #[test]
    fn unbalanced_counts_use_mean_replicate_count() {
        let s = ScalarReplicates::new(vec![vec![0.0, 2.0], vec![1.0, 1.0, 4.0], vec![5.0]]).unwrap();
        // SS = 2 + 6 = 8; dof = 1 + 2 + 0 = 3; J̄ = 2
        assert!((estimate_scalar_error_var(&s).unwrap() - 8.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_for_sqexp_errors() {
        let (n, j, m) = (2000, 5, 30);
        let g = make_uniform_grid(m).unwrap();
        let truth = build_covariance(&CovarianceSpec::squared_exponential(2.0, 0.15), &g).unwrap();
        let mut rng = stream_rng(314, 0);
        let draws = sample_gp(&truth, n * j, &mut rng).unwrap();
        let x = sample_gp(&truth, n, &mut rng).unwrap();
        let blocks: Vec<Array2<f64>> = (0..n)
            .map(|i| {
                let mut b = draws.slice(ndarray::s![i * j..(i + 1) * j, ..]).to_owned();
                b += &x.row(i);
                b
            })
            .collect();
        let f = FunctionalReplicates::new(g, blocks).unwrap();
        let est = estimate_functional_error_cov(&f).unwrap();
        let diff = est.matrix() * j as f64 - truth.matrix();
        let rel = diff.iter().map(|v| v * v).sum::<f64>().sqrt()
            / truth.matrix().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rel < 0.1, "relative Frobenius error {rel}");
    }

    #[test]
    fn known_cov_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let (f, s) = random_reps(5, 3, 4, 1);
        let cov = estimate_error_cov(&f, &s).unwrap();
        let fp = dir.path().join("sigma.csv");
        let sp = dir.path().join("var.csv");
        save_known_cov(&cov, &fp, Some(&sp)).unwrap();
        let back = load_known_cov(&fp, Some(&sp), 4).unwrap();
        assert_eq!(back, cov);

        fs::write(&fp, "1,0,0\n0,1,0\n0,0,1\n").unwrap();
        let id = load_known_cov(&fp, None, 3).unwrap();
        assert_eq!(id.functional.matrix(), &Array2::eye(3));
        assert!(matches!(load_known_cov(&fp, None, 4), Err(Error::Shape(_))));

        fs::write(&fp, "1,0.5\n0.2,1\n").unwrap();
        assert!(load_known_cov(&fp, None, 2).is_err());
        fs::write(&fp, "1,2\n2,1\n").unwrap();
        assert!(matches!(load_known_cov(&fp, None, 2), Err(Error::Numeric(_))));
        fs::write(&fp, "1,x\nx,1\n").unwrap();
        assert!(matches!(load_known_cov(&fp, None, 2), Err(Error::Data(_))));
    }
}
