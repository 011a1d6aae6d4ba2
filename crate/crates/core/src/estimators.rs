//! Oracle, average and naive fits.
//!
//! Every estimator, including SIMEX and RC, ends in [`fit_scores`]: the
//! functional covariate enters through its basis scores, followed by the
//! scalar surrogate and the error-free covariates. Estimators differ only in
//! which version of the covariates they hand to it.

use std::fmt;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use crate::bspline::{build_basis, BSplineBasis};
use crate::error::{Error, Result};
use crate::fungrid::{FunctionalReplicates, Grid, ReplicateMean, ScalarReplicates};
use crate::glm::{fit_glm_from, DesignMatrix, Family, GlmFit, GlmOptions};

pub const INTERCEPT: &str = "intercept";
pub const BETA2: &str = "beta2";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Oracle,
    Simex,
    Rc,
    Average,
    Naive,
}

impl EstimatorKind {
    /// Reporting order.
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Oracle,
        EstimatorKind::Simex,
        EstimatorKind::Rc,
        EstimatorKind::Average,
        EstimatorKind::Naive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Simex => "simex",
            EstimatorKind::Rc => "rc",
            EstimatorKind::Average => "average",
            EstimatorKind::Naive => "naive",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown estimator '{s}' (expected oracle, average, naive, simex or rc)"
                ))
            })
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Error-free covariates `Z` (`n x p`) with column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    values: Array2<f64>,
    labels: Vec<String>,
}

impl Covariates {
    pub fn new(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if values.ncols() != labels.len() {
            return Err(Error::Shape(format!("{} covariate columns, {} labels", values.ncols(), labels.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("covariates contain non-finite values".into()));
        }
        for l in &labels {
            if l.is_empty() || l == INTERCEPT || l == BETA2 || l.starts_with("gamma_") {
                return Err(Error::InvalidArgument(format!("covariate label '{l}' is reserved or empty")));
            }
        }
        Ok(Self { values, labels })
    }

    /// No error-free covariates for `n` subjects.
    pub fn none(n: usize) -> Self {
        Self { values: Array2::zeros((n, 0)), labels: Vec::new() }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self { values: self.values.select(ndarray::Axis(0), idx), labels: self.labels.clone() }
    }
}

/// Basis, grid and GLM settings shared by all estimators.
#[derive(Debug, Clone)]
pub struct FitContext {
    pub basis: BSplineBasis,
    pub grid: Grid,
    pub family: Family,
    pub include_intercept: bool,
    pub glm: GlmOptions,
    design: Array2<f64>,
    weighted: Array2<f64>,
}

impl FitContext {
    /// Cubic B-spline basis with `n_basis` functions.
    pub fn new(grid: Grid, n_basis: usize, family: Family) -> Result<Self> {
        Self::with_basis(grid, build_basis(n_basis, 3)?, family)
    }

    pub fn with_basis(grid: Grid, basis: BSplineBasis, family: Family) -> Result<Self> {
        let design = basis.design(&grid);
        let weighted = basis.weighted_design(&grid);
        Ok(Self { basis, grid, family, include_intercept: true, glm: GlmOptions::default(), design, weighted })
    }

    pub fn intercept(mut self, include: bool) -> Self {
        self.include_intercept = include;
        self
    }

    pub fn glm_options(mut self, opts: GlmOptions) -> Self {
        self.glm = opts;
        self
    }

    pub fn n_basis(&self) -> usize {
        self.basis.n_basis()
    }

    /// `curves · diag(w) · B`: basis scores of each row.
    pub fn scores(&self, curves: ArrayView2<f64>) -> Result<Array2<f64>> {
        if curves.ncols() != self.grid.len() {
            return Err(Error::Shape(format!(
                "curves have {} points, grid has {}",
                curves.ncols(),
                self.grid.len()
            )));
        }
        Ok(curves.dot(&self.weighted))
    }

    /// `diag(w) · B`, so that `scores = curves · weighted_design`.
    pub fn weighted_design(&self) -> &Array2<f64> {
        &self.weighted
    }

    pub fn expand(&self, gamma: ArrayView1<f64>) -> Array1<f64> {
        self.design.dot(&gamma)
    }

    /// Coefficient labels in design order.
    pub fn labels(&self, z: &Covariates) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.n_coefficients(z));
        if self.include_intercept {
            labels.push(INTERCEPT.to_string());
        }
        labels.extend((1..=self.n_basis()).map(|k| format!("gamma_{k}")));
        labels.push(BETA2.to_string());
        labels.extend(z.labels.iter().cloned());
        labels
    }

    pub fn n_coefficients(&self, z: &Covariates) -> usize {
        self.include_intercept as usize + self.n_basis() + 1 + z.labels.len()
    }

    /// Design matrix `[1 | scores | x2 | Z]`.
    pub fn design_matrix(&self, scores: ArrayView2<f64>, x2: ArrayView1<f64>, z: &Covariates) -> Result<DesignMatrix> {
        let n = scores.nrows();
        if scores.ncols() != self.n_basis() {
            return Err(Error::Shape(format!("{} score columns for K_n = {}", scores.ncols(), self.n_basis())));
        }
        if x2.len() != n || z.n_rows() != n {
            return Err(Error::Shape(format!(
                "inconsistent subject counts: scores {n}, scalar {}, covariates {}",
                x2.len(),
                z.n_rows()
            )));
        }
        let p = self.n_coefficients(z);
        let mut x = Array2::zeros((n, p));
        let mut col = 0;
        if self.include_intercept {
            x.column_mut(0).fill(1.0);
            col = 1;
        }
        let k = self.n_basis();
        x.slice_mut(s![.., col..col + k]).assign(&scores);
        col += k;
        x.column_mut(col).assign(&x2);
        col += 1;
        x.slice_mut(s![.., col..]).assign(z.values());
        DesignMatrix::new(x, self.labels(z))
    }
}

/// Summary of the final GLM fit.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GlmSummary {
    pub converged: bool,
    pub n_iter: usize,
    pub deviance: f64,
    pub ridge_applied: bool,
}

impl From<&GlmFit> for GlmSummary {
    fn from(f: &GlmFit) -> Self {
        Self { converged: f.converged, n_iter: f.n_iter, deviance: f.deviance, ridge_applied: f.ridge_applied }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub kind: EstimatorKind,
    /// Full coefficient vector in design order, see `labels`.
    pub coefficients: Array1<f64>,
    pub labels: Vec<String>,
    pub gamma: Array1<f64>,
    /// `β̂₁` on the context grid.
    pub beta1: Array1<f64>,
    pub beta2: f64,
    pub alpha: Array1<f64>,
    /// 0 when the model has no intercept.
    pub intercept: f64,
    pub glm: GlmSummary,
}

impl FitResult {
    /// Split a coefficient vector laid out as in [`FitContext::design_matrix`].
    pub fn from_coefficients(
        kind: EstimatorKind,
        coefficients: Array1<f64>,
        labels: Vec<String>,
        ctx: &FitContext,
        glm: GlmSummary,
    ) -> Result<Self> {
        let off = ctx.include_intercept as usize;
        let k = ctx.n_basis();
        if coefficients.len() < off + k + 1 || coefficients.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} coefficients / {} labels do not match the design layout",
                coefficients.len(),
                labels.len()
            )));
        }
        let gamma = coefficients.slice(s![off..off + k]).to_owned();
        let beta1 = ctx.expand(gamma.view());
        Ok(Self {
            kind,
            intercept: if off == 1 { coefficients[0] } else { 0.0 },
            beta2: coefficients[off + k],
            alpha: coefficients.slice(s![off + k + 1..]).to_owned(),
            gamma,
            beta1,
            coefficients,
            labels,
            glm,
        })
    }

    pub fn coefficient(&self, label: &str) -> Option<f64> {
        self.labels.iter().position(|l| l == label).map(|i| self.coefficients[i])
    }
}

/// GLM fit from basis scores; non-convergence is a numeric error.
pub fn fit_scores(
    kind: EstimatorKind,
    scores: ArrayView2<f64>,
    x2: ArrayView1<f64>,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
) -> Result<FitResult> {
    let (coef, summary, labels) = glm_coefficients(scores, x2, z, y, ctx, None)?;
    FitResult::from_coefficients(kind, coef, labels, ctx, summary)
}

/// Raw coefficient vector for a score design, optionally warm-started.
pub(crate) fn glm_coefficients(
    scores: ArrayView2<f64>,
    x2: ArrayView1<f64>,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
    start: Option<ArrayView1<f64>>,
) -> Result<(Array1<f64>, GlmSummary, Vec<String>)> {
    let design = ctx.design_matrix(scores, x2, z)?;
    let fit = fit_glm_from(&design, y, ctx.family, &ctx.glm, start)?;
    if !fit.converged {
        return Err(Error::Numeric(format!(
            "GLM did not converge after {} iterations (deviance {:.6})",
            fit.n_iter, fit.deviance
        )));
    }
    let summary = GlmSummary::from(&fit);
    Ok((fit.coefficients, summary, fit.labels))
}

/// Fit on the error-free covariates (simulation only).
pub fn fit_oracle(
    x1: &Array2<f64>,
    x2: &[f64],
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
) -> Result<FitResult> {
    let scores = ctx.scores(x1.view())?;
    fit_scores(EstimatorKind::Oracle, scores.view(), ArrayView1::from(x2), z, y, ctx)
}

/// Fit on the per-subject replicate means.
pub fn fit_average(
    w1: &FunctionalReplicates,
    w2: &ScalarReplicates,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
) -> Result<FitResult> {
    check_subjects(w1, w2)?;
    let scores = ctx.scores(w1.replicate_mean().view())?;
    let x2 = w2.replicate_mean();
    fit_scores(EstimatorKind::Average, scores.view(), x2.view(), z, y, ctx)
}

/// Fit on a single session (1-based, the first by convention).
pub fn fit_naive(
    w1: &FunctionalReplicates,
    w2: &ScalarReplicates,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
    session: usize,
) -> Result<FitResult> {
    check_subjects(w1, w2)?;
    if session == 0 {
        return Err(Error::InvalidArgument("naive session index is 1-based".into()));
    }
    let curves = w1.session(session - 1)?;
    let x2 = w2.session(session - 1)?;
    let scores = ctx.scores(curves.view())?;
    fit_scores(EstimatorKind::Naive, scores.view(), ArrayView1::from(&x2[..]), z, y, ctx)
}

pub(crate) fn check_subjects(w1: &FunctionalReplicates, w2: &ScalarReplicates) -> Result<()> {
    if w1.n_subjects() != w2.n_subjects() {
        return Err(Error::Shape(format!(
            "{} subjects in the functional block, {} in the scalar block",
            w1.n_subjects(),
            w2.n_subjects()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fungrid::make_uniform_grid;
    use crate::glm::expit;
    use crate::linalg::lstsq_qr;
    use crate::rng::stream_rng;
    use ndarray::Array3;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    struct Fixture {
        x1: Array2<f64>,
        x2: Vec<f64>,
        z: Covariates,
        y: Vec<f64>,
    }

    fn fixture(n: usize, family: Family, seed: u64, ctx: &FitContext) -> Fixture {
        let mut rng = stream_rng(seed, 0);
        let t = ctx.grid.points().to_vec();
        let mut x1 = Array2::zeros((n, t.len()));
        for mut row in x1.rows_mut() {
            for k in 0..8 {
                let a: f64 = StandardNormal.sample(&mut rng);
                for (h, v) in row.iter_mut().enumerate() {
                    *v += a * (std::f64::consts::PI * k as f64 * t[h]).cos();
                }
            }
        }
        let x2: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let zv = Array2::from_shape_fn((n, 2), |(_, j)| if j == 0 { rng.random::<f64>() } else { (rng.random::<f64>() < 0.5) as u8 as f64 });
        let z = Covariates::new(zv, vec!["z1".into(), "z2".into()]).unwrap();
        let beta1: Vec<f64> = t.iter().map(|s| (2.0 * std::f64::consts::PI * s).sin()).collect();
        let y = (0..n)
            .map(|i| {
                let eta: f64 = (0..t.len()).map(|h| ctx.grid.weights()[h] * beta1[h] * x1[[i, h]]).sum::<f64>()
                    + 0.5 * x2[i]
                    + 0.3 * z.values()[[i, 0]]
                    - 0.2 * z.values()[[i, 1]];
                match family {
                    Family::BinomialLogit => (rng.random::<f64>() < expit(eta)) as u8 as f64,
                    Family::GaussianIdentity => {
                        let e: f64 = StandardNormal.sample(&mut rng);
                        eta + 0.1 * e
                    }
                }
            })
            .collect();
        Fixture { x1, x2, z, y }
    }

    fn ctx(family: Family) -> FitContext {
        FitContext::new(make_uniform_grid(40).unwrap(), 6, family).unwrap()
    }

    fn replicate(x1: &Array2<f64>, x2: &[f64], j: usize) -> (FunctionalReplicates, ScalarReplicates) {
        let (n, m) = x1.dim();
        let f = Array3::from_shape_fn((n, j, m), |(i, _, h)| x1[[i, h]]);
        let s = Array2::from_shape_fn((n, j), |(i, _)| x2[i]);
        (
            FunctionalReplicates::from_array(make_uniform_grid(m).unwrap(), f).unwrap(),
            ScalarReplicates::from_array(&s).unwrap(),
        )
    }

    #[test]
    fn labels_and_layout() {
        let c = ctx(Family::GaussianIdentity);
        let z = Covariates::new(Array2::zeros((3, 1)), vec!["age".into()]).unwrap();
        assert_eq!(
            c.labels(&z),
            ["intercept", "gamma_1", "gamma_2", "gamma_3", "gamma_4", "gamma_5", "gamma_6", "beta2", "age"]
        );
        let c = c.intercept(false);
        assert_eq!(c.labels(&z)[0], "gamma_1");
        assert!(Covariates::new(Array2::zeros((3, 1)), vec!["beta2".into()]).is_err());
    }

    #[test]
    fn gaussian_matches_least_squares() {
        let c = ctx(Family::GaussianIdentity);
        let f = fixture(300, Family::GaussianIdentity, 1, &c);
        let fit = fit_oracle(&f.x1, &f.x2, &f.z, &f.y, &c).unwrap();
        let scores = f.x1.dot(c.weighted_design());
        let design = c.design_matrix(scores.view(), ArrayView1::from(&f.x2[..]), &f.z).unwrap();
        let ols = lstsq_qr(design.values().view(), ArrayView1::from(&f.y[..])).unwrap();
        for (a, b) in fit.coefficients.iter().zip(ols.iter()) {
            assert!((a - b).abs() < 1e-8 * (1.0 + b.abs()), "{a} vs {b}");
        }
        let again = c.expand(fit.gamma.view());
        for (a, b) in again.iter().zip(fit.beta1.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(fit.coefficient("beta2"), Some(fit.beta2));
        assert_eq!(fit.alpha.len(), 2);
    }

    #[test]
    fn zero_error_collapses_to_oracle() {
        let c = ctx(Family::BinomialLogit);
        let f = fixture(400, Family::BinomialLogit, 2, &c);
        let oracle = fit_oracle(&f.x1, &f.x2, &f.z, &f.y, &c).unwrap();
        let (w1, w2) = replicate(&f.x1, &f.x2, 3);
        let avg = fit_average(&w1, &w2, &f.z, &f.y, &c).unwrap();
        let naive = fit_naive(&w1, &w2, &f.z, &f.y, &c, 2).unwrap();
        for fit in [&avg, &naive] {
            for (a, b) in fit.coefficients.iter().zip(oracle.coefficients.iter()) {
                assert!((a - b).abs() < 1e-8);
            }
        }
        assert_eq!(avg.kind, EstimatorKind::Average);
        assert!(fit_naive(&w1, &w2, &f.z, &f.y, &c, 4).is_err());
        assert!(fit_naive(&w1, &w2, &f.z, &f.y, &c, 0).is_err());
    }

    #[test]
    fn single_replicate_average_equals_naive() {
        let c = ctx(Family::BinomialLogit);
        let f = fixture(300, Family::BinomialLogit, 3, &c);
        let mut rng = stream_rng(3, 1);
        let noisy = f.x1.mapv(|v| v + rng.random::<f64>() - 0.5);
        let (w1, w2) = replicate(&noisy, &f.x2, 1);
        let a = fit_average(&w1, &w2, &f.z, &f.y, &c).unwrap();
        let b = fit_naive(&w1, &w2, &f.z, &f.y, &c, 1).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
    }

    #[test]
    fn subject_permutation_leaves_estimates_unchanged() {
        let c = ctx(Family::BinomialLogit).glm_options(GlmOptions { tol: 1e-13, ..Default::default() });
        let f = fixture(250, Family::BinomialLogit, 4, &c);
        let base = fit_oracle(&f.x1, &f.x2, &f.z, &f.y, &c).unwrap();
        let perm: Vec<usize> = (0..250).rev().collect();
        let x1 = f.x1.select(ndarray::Axis(0), &perm);
        let x2: Vec<f64> = perm.iter().map(|&i| f.x2[i]).collect();
        let y: Vec<f64> = perm.iter().map(|&i| f.y[i]).collect();
        let fit = fit_oracle(&x1, &x2, &f.z.select(&perm), &y, &c).unwrap();
        for (a, b) in fit.coefficients.iter().zip(base.coefficients.iter()) {
            assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn non_convergence_is_an_error() {
        let c = ctx(Family::BinomialLogit);
        let mut f = fixture(200, Family::BinomialLogit, 5, &c);
        // perfect separation on x2
        f.y = f.x2.iter().map(|&v| (v > 0.0) as u8 as f64).collect();
        let err = fit_oracle(&f.x1, &f.x2, &f.z, &f.y, &c).unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    #[test]
    fn estimator_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(EstimatorKind::parse(k.name()).unwrap(), k);
        }
        assert!(EstimatorKind::parse("bayes").is_err());
    }
}
