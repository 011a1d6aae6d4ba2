//! Simulation-extrapolation.
//!
//! For each λ on the grid the averaged surrogates are contaminated with extra
//! error of covariance `λ Σ̂`, refitted `S` times, and the mean coefficients are
//! extrapolated back to λ = −1 with a per-coefficient quadratic.
//!
//! The functional pseudo-error only enters the model through its basis scores,
//! and the score map is linear, so the fits draw the scores directly from
//! `N(0, Bwᵀ Σ̂ Bw)` (`Bw = diag(w) B`) instead of simulating full curves.
//! This is the same distribution; [`make_pseudo_data`] still produces curves.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{check_subjects, glm_coefficients, Covariates, EstimatorKind, FitContext, FitResult};
use crate::fungrid::{FunctionalReplicates, ReplicateMean, ScalarReplicates};
use crate::gp::GpSampler;
use crate::linalg::{cholesky_jittered, lstsq_qr};
use crate::mecov::ErrorCovariance;
use crate::rng::{derive_seed, stream_rng};

const SIMEX_STREAM_TAG: u64 = 0x5349_4d45;
/// Largest tolerated share of failed fits at one λ.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SimexConfig {
    pub lambdas: Vec<f64>,
    /// Pseudo-datasets per λ.
    pub n_sim: usize,
    pub seed: u64,
    pub max_lambda: f64,
}

impl Default for SimexConfig {
    fn default() -> Self {
        Self { lambdas: vec![0.0, 0.5, 1.0, 1.5, 2.0], n_sim: 200, seed: 0, max_lambda: 2.0 }
    }
}

impl SimexConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambdas.len() < 3 {
            return Err(Error::Config(format!(
                "quadratic extrapolation needs at least 3 lambda values, got {}",
                self.lambdas.len()
            )));
        }
        for (i, &l) in self.lambdas.iter().enumerate() {
            if !l.is_finite() || l < 0.0 || l > self.max_lambda {
                return Err(Error::Config(format!("lambda {l} outside [0, {}]", self.max_lambda)));
            }
            if self.lambdas[..i].contains(&l) {
                return Err(Error::Config(format!("duplicate lambda {l}")));
            }
        }
        if self.n_sim < 2 {
            return Err(Error::Config(format!("SIMEX needs at least 2 simulations per lambda, got {}", self.n_sim)));
        }
        Ok(())
    }
}

/// Mean coefficients per λ.
#[derive(Debug, Clone, PartialEq)]
pub struct SimexTrace {
    pub lambdas: Vec<f64>,
    pub labels: Vec<String>,
    /// `|λ| x n_coef`, averaged over the successful fits.
    pub means: Array2<f64>,
    pub failures: Vec<usize>,
    pub n_sim: usize,
}

impl SimexTrace {
    /// Long CSV: `lambda,label,mean,failures`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda,label,mean,failures\n");
        for (l, row) in self.means.outer_iter().enumerate() {
            for (label, v) in self.labels.iter().zip(row.iter()) {
                let _ = writeln!(out, "{:?},{},{:?},{}", self.lambdas[l], label, v, self.failures[l]);
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Least-squares quadratic in λ through `(lambdas, means)`, evaluated at λ = −1.
pub fn extrapolate_quadratic(lambdas: &[f64], means: &[f64]) -> Result<f64> {
    if lambdas.len() != means.len() {
        return Err(Error::Shape(format!("{} lambdas, {} means", lambdas.len(), means.len())));
    }
    if lambdas.len() < 3 {
        return Err(Error::InvalidArgument("quadratic extrapolation needs at least 3 points".into()));
    }
    let x = Array2::from_shape_fn((lambdas.len(), 3), |(i, j)| lambdas[i].powi(j as i32));
    let c = lstsq_qr(x.view(), ArrayView1::from(means))
        .map_err(|_| Error::InvalidArgument("lambda values must contain at least 3 distinct points".into()))?;
    Ok(c[0] - c[1] + c[2])
}

/// `W̄ + √λ Ū` with `Ū₁ ~ GP(0, Σ̂)` and `Ū₂ ~ N(0, σ̂²)` drawn per subject.
///
/// λ = 0 returns the inputs untouched without consuming randomness.
pub fn make_pseudo_data<R: Rng + ?Sized>(
    w1_bar: &Array2<f64>,
    w2_bar: &[f64],
    errcov: &ErrorCovariance,
    lambda: f64,
    rng: &mut R,
) -> Result<(Array2<f64>, Vec<f64>)> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if errcov.functional.dim() != w1_bar.ncols() {
        return Err(Error::Shape(format!(
            "error covariance is {0}x{0}, curves have {1} points",
            errcov.functional.dim(),
            w1_bar.ncols()
        )));
    }
    if w2_bar.len() != w1_bar.nrows() {
        return Err(Error::Shape("functional and scalar blocks differ in subject count".into()));
    }
    if lambda == 0.0 {
        return Ok((w1_bar.clone(), w2_bar.to_vec()));
    }
    let scale = lambda.sqrt();
    let draws = GpSampler::new(&errcov.functional)?.sample(w1_bar.nrows(), rng);
    let w1 = w1_bar + &(draws * scale);
    let sd = errcov.scalar_var.sqrt() * scale;
    let w2 = w2_bar
        .iter()
        .map(|&v| {
            let e: f64 = StandardNormal.sample(rng);
            v + sd * e
        })
        .collect();
    Ok((w1, w2))
}

/// Draws pseudo-error basis scores `n x K` from `N(0, Bwᵀ Σ̂ Bw)`.
#[derive(Debug, Clone)]
pub(crate) struct ScoreSampler {
    factor: Array2<f64>,
    scalar_sd: f64,
}

impl ScoreSampler {
    pub(crate) fn new(ctx: &FitContext, errcov: &ErrorCovariance) -> Result<Self> {
        if errcov.functional.dim() != ctx.grid.len() {
            return Err(Error::Shape(format!(
                "error covariance is {0}x{0}, grid has {1} points",
                errcov.functional.dim(),
                ctx.grid.len()
            )));
        }
        let bw = ctx.weighted_design();
        let cov = bw.t().dot(&errcov.functional.matrix().dot(bw));
        let cov = (&cov + &cov.t()) * 0.5;
        let (factor, _) = cholesky_jittered(cov.view())?;
        Ok(Self { factor, scalar_sd: errcov.scalar_var.sqrt() })
    }

    /// Functional score errors and scalar errors for `n` subjects, unscaled.
    pub(crate) fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Array2<f64>, Array1<f64>) {
        let k = self.factor.nrows();
        let z = Array2::from_shape_simple_fn((n, k), || StandardNormal.sample(rng));
        let scores = z.dot(&self.factor.t());
        let scalar = Array1::from_shape_simple_fn(n, || {
            let e: f64 = StandardNormal.sample(rng);
            self.scalar_sd * e
        });
        (scores, scalar)
    }
}

/// SIMEX fit. The error covariance must describe the replicate-mean error.
pub fn run_simex(
    w1: &FunctionalReplicates,
    w2: &ScalarReplicates,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
    cfg: &SimexConfig,
    errcov: &ErrorCovariance,
) -> Result<(FitResult, SimexTrace)> {
    cfg.validate()?;
    check_subjects(w1, w2)?;
    let base_scores = ctx.scores(w1.replicate_mean().view())?;
    let base_x2 = w2.replicate_mean();
    simex_from_scores(&base_scores, &base_x2, z, y, ctx, cfg, errcov)
}

pub(crate) fn simex_from_scores(
    base_scores: &Array2<f64>,
    base_x2: &Array1<f64>,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
    cfg: &SimexConfig,
    errcov: &ErrorCovariance,
) -> Result<(FitResult, SimexTrace)> {
    cfg.validate()?;
    let n = base_scores.nrows();
    let sampler = ScoreSampler::new(ctx, errcov)?;
    let labels = ctx.labels(z);
    let p = labels.len();

    let base = glm_coefficients(base_scores.view(), base_x2.view(), z, y, ctx, None);
    let (start, summary) = match &base {
        Ok((c, s, _)) => (Some(c.clone()), s.clone()),
        Err(_) => (None, Default::default()),
    };

    let jobs: Vec<(usize, usize)> = cfg
        .lambdas
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0)
        .flat_map(|(l, _)| (0..cfg.n_sim).map(move |s| (l, s)))
        .collect();
    let fits: Vec<Option<Array1<f64>>> = jobs
        .par_iter()
        .map(|&(l, s)| {
            let mut rng = stream_rng(derive_seed(cfg.seed, SIMEX_STREAM_TAG, l as u64), s as u64);
            let (du, de) = sampler.sample(n, &mut rng);
            let scale = cfg.lambdas[l].sqrt();
            let scores = base_scores + &(du * scale);
            let x2 = base_x2 + &(de * scale);
            glm_coefficients(scores.view(), x2.view(), z, y, ctx, start.as_ref().map(|c| c.view()))
                .ok()
                .map(|(c, _, _)| c)
        })
        .collect();

    let mut means = Array2::zeros((cfg.lambdas.len(), p));
    let mut failures = vec![0usize; cfg.lambdas.len()];
    let mut results = fits.into_iter();
    for (l, &lambda) in cfg.lambdas.iter().enumerate() {
        let mut row = means.row_mut(l);
        if lambda == 0.0 {
            // every pseudo-dataset equals the averaged data
            match &base {
                Ok((c, _, _)) => row.assign(c),
                Err(_) => failures[l] = cfg.n_sim,
            }
        } else {
            let mut ok = 0usize;
            for fit in results.by_ref().take(cfg.n_sim) {
                match fit {
                    Some(c) => {
                        row += &c;
                        ok += 1;
                    }
                    None => failures[l] += 1,
                }
            }
            if ok > 0 {
                row /= ok as f64;
            }
        }
    }

    let limit = MAX_FAILURE_RATE * cfg.n_sim as f64;
    if failures.iter().any(|&f| f as f64 > limit) {
        let detail: Vec<String> =
            cfg.lambdas.iter().zip(&failures).map(|(l, f)| format!("lambda={l}:{f}/{}", cfg.n_sim)).collect();
        return Err(Error::EstimatorFailure(format!("too many failed SIMEX fits ({})", detail.join(" "))));
    }

    let mut coef = Array1::zeros(p);
    for (j, c) in coef.iter_mut().enumerate() {
        let col = means.index_axis(Axis(1), j).to_vec();
        *c = extrapolate_quadratic(&cfg.lambdas, &col)?;
    }
    let trace = SimexTrace { lambdas: cfg.lambdas.clone(), labels: labels.clone(), means, failures, n_sim: cfg.n_sim };
    let fit = FitResult::from_coefficients(EstimatorKind::Simex, coef, labels, ctx, summary)?;
    Ok((fit, trace))
}
