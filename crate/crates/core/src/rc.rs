//! Regression calibration with per-timepoint random-intercept models.
//!
//! At every grid point `W_ij(t) = μ(t) + b_i(t) + e_ij(t)` is fitted by
//! one-way ANOVA moments and each subject's latent value is predicted by
//! `μ̂ + κ_i (W̄_i − μ̂)` with `κ_i = σ̂²_b / (σ̂²_b + σ̂²_e / J_i)`.
//! With unequal replicate counts the between-subject moment uses the usual
//! `n₀ = (N − Σ J_i² / N) / (n − 1)` in place of `J`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{check_subjects, fit_scores, Covariates, EstimatorKind, FitContext, FitResult};
use crate::fungrid::{FunctionalReplicates, ScalarReplicates};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomInterceptFit {
    pub mu: f64,
    pub sigma2_between: f64,
    pub sigma2_within: f64,
    /// Shrinkage at the mean replicate count.
    pub shrinkage: f64,
}

impl RandomInterceptFit {
    /// `σ̂²_b / (σ̂²_b + σ̂²_e / j)`, 1 when both components vanish.
    pub fn shrinkage_for(&self, j: usize) -> f64 {
        let denom = self.sigma2_between + self.sigma2_within / j as f64;
        if denom <= 0.0 {
            1.0
        } else {
            self.sigma2_between / denom
        }
    }

    /// Predicted latent value for a subject with replicate mean `w_bar` over `j` replicates.
    pub fn predict(&self, w_bar: f64, j: usize) -> f64 {
        self.mu + self.shrinkage_for(j) * (w_bar - self.mu)
    }
}

/// ANOVA estimates for one set of grouped observations (one group per subject).
pub fn fit_random_intercept<G: AsRef<[f64]>>(groups: &[G]) -> Result<RandomInterceptFit> {
    let n = groups.len();
    if n < 2 {
        return Err(Error::Identifiability(format!("random-intercept model needs at least 2 subjects, got {n}")));
    }
    let counts: Vec<usize> = groups.iter().map(|g| g.as_ref().len()).collect();
    if counts.contains(&0) {
        return Err(Error::InvalidArgument("subject without observations".into()));
    }
    let total: usize = counts.iter().sum();
    if total == n {
        return Err(Error::Identifiability(
            "random-intercept model needs at least two replicates for some subject".into(),
        ));
    }
    let means: Vec<f64> = groups.iter().map(|g| g.as_ref().iter().sum::<f64>() / g.as_ref().len() as f64).collect();
    let grand = groups.iter().map(|g| g.as_ref().iter().sum::<f64>()).sum::<f64>() / total as f64;
    let ssw: f64 = groups
        .iter()
        .zip(&means)
        .map(|(g, m)| g.as_ref().iter().map(|v| (v - m) * (v - m)).sum::<f64>())
        .sum();
    let ssb: f64 = counts.iter().zip(&means).map(|(&j, m)| j as f64 * (m - grand) * (m - grand)).sum();
    let sigma2_within = ssw / (total - n) as f64;
    let msb = ssb / (n - 1) as f64;
    let sum_sq: f64 = counts.iter().map(|&j| (j * j) as f64).sum();
    let n0 = (total as f64 - sum_sq / total as f64) / (n - 1) as f64;
    let sigma2_between = ((msb - sigma2_within) / n0).max(0.0);
    let mut fit = RandomInterceptFit { mu: grand, sigma2_between, sigma2_within, shrinkage: 1.0 };
    let denom = sigma2_between + sigma2_within * n as f64 / total as f64;
    fit.shrinkage = if denom <= 0.0 { 1.0 } else { sigma2_between / denom };
    Ok(fit)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RcConfig {
    /// Odd moving-average window applied along `t` after calibration; `None` disables it.
    pub smoothing_window: Option<usize>,
}

impl RcConfig {
    pub fn validate(&self) -> Result<()> {
        match self.smoothing_window {
            Some(w) if w == 0 || w % 2 == 0 => {
                Err(Error::Config(format!("smoothing window must be a positive odd number, got {w}")))
            }
            _ => Ok(()),
        }
    }
}

/// Per-timepoint variance components.
#[derive(Debug, Clone, PartialEq)]
pub struct RcDiagnostics {
    pub t: Vec<f64>,
    pub fits: Vec<RandomInterceptFit>,
    pub scalar: RandomInterceptFit,
}

impl RcDiagnostics {
    /// CSV `t,mu,sigma2_b,sigma2_e,shrinkage` for the functional block.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mu,sigma2_b,sigma2_e,shrinkage\n");
        for (t, f) in self.t.iter().zip(&self.fits) {
            let _ = writeln!(out, "{t:?},{:?},{:?},{:?},{:?}", f.mu, f.sigma2_between, f.sigma2_within, f.shrinkage);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Calibrated curves `X̂₁` (`n x n_points`) and the per-point fits.
pub fn calibrate_functional(
    w1: &FunctionalReplicates,
    cfg: &RcConfig,
) -> Result<(Array2<f64>, Vec<RandomInterceptFit>)> {
    cfg.validate()?;
    let n = w1.n_subjects();
    let m = w1.grid().len();
    let counts = w1.replicate_counts();
    let columns: Vec<Result<(Vec<f64>, RandomInterceptFit)>> = (0..m)
        .into_par_iter()
        .map(|h| {
            let groups: Vec<Vec<f64>> = w1.subjects().iter().map(|b| b.column(h).to_vec()).collect();
            let fit = fit_random_intercept(&groups)?;
            let pred = groups
                .iter()
                .zip(&counts)
                .map(|(g, &j)| fit.predict(g.iter().sum::<f64>() / j as f64, j))
                .collect();
            Ok((pred, fit))
        })
        .collect();
    let mut x_hat = Array2::zeros((n, m));
    let mut fits = Vec::with_capacity(m);
    for (h, col) in columns.into_iter().enumerate() {
        let (pred, fit) = col?;
        x_hat.column_mut(h).assign(&ArrayView1::from(&pred));
        fits.push(fit);
    }
    if let Some(w) = cfg.smoothing_window {
        for mut row in x_hat.rows_mut() {
            let smoothed = moving_average(row.view(), w);
            row.assign(&smoothed);
        }
    }
    Ok((x_hat, fits))
}

/// Calibrated scalar covariate and its fit.
pub fn calibrate_scalar(w2: &ScalarReplicates) -> Result<(Array1<f64>, RandomInterceptFit)> {
    let fit = fit_random_intercept(w2.subjects())?;
    let pred = w2.subjects().iter().map(|s| fit.predict(s.iter().sum::<f64>() / s.len() as f64, s.len())).collect();
    Ok((pred, fit))
}

/// Centered moving average, window truncated at the ends.
pub fn moving_average(x: ArrayView1<f64>, window: usize) -> Array1<f64> {
    let half = window / 2;
    let m = x.len();
    Array1::from_shape_fn(m, |h| {
        let lo = h.saturating_sub(half);
        let hi = (h + half + 1).min(m);
        x.slice(ndarray::s![lo..hi]).sum() / (hi - lo) as f64
    })
}

/// RC fit: calibrate both blocks, then the usual pipeline on `X̂`.
pub fn fit_rc(
    w1: &FunctionalReplicates,
    w2: &ScalarReplicates,
    z: &Covariates,
    y: &[f64],
    ctx: &FitContext,
    cfg: &RcConfig,
) -> Result<(FitResult, RcDiagnostics)> {
    check_subjects(w1, w2)?;
    let (x1_hat, fits) = calibrate_functional(w1, cfg)?;
    let (x2_hat, scalar) = calibrate_scalar(w2)?;
    let scores = ctx.scores(x1_hat.view())?;
    let fit = fit_scores(EstimatorKind::Rc, scores.view(), x2_hat.view(), z, y, ctx)?;
    Ok((fit, RcDiagnostics { t: w1.grid().points().to_vec(), fits, scalar }))
}
