//! Subject-level nonparametric bootstrap with pointwise percentile bands.
//!
//! Percentiles use linear interpolation between order statistics: for sorted
//! draws `x_0 ≤ … ≤ x_{B-1}` the `p` quantile is `x_k + f (x_{k+1} - x_k)`
//! where `k + f = (B - 1) p`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array1;
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::GflmDataset;
use crate::error::{Error, Result};
use crate::estimators::FitContext;
use crate::pipeline::{fit_dataset, EstimatorSpec};
use crate::rng::{derive_seed, stream_rng};

const SIMEX_SEED_TAG: u64 = 0x424f_4f54;
/// Share of failed refits above which the bootstrap is abandoned.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub b: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { b: 500, level: 0.95, seed: 0 }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.b < 2 {
            return Err(Error::Config(format!("bootstrap needs at least 2 resamples, got {}", self.b)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("confidence level must be in (0, 1), got {}", self.level)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarInterval {
    pub label: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapBands {
    pub t: Vec<f64>,
    pub beta1: Array1<f64>,
    pub beta1_lower: Array1<f64>,
    pub beta1_upper: Array1<f64>,
    /// Every coefficient except the basis scores.
    pub scalar_intervals: Vec<ScalarInterval>,
    pub b: usize,
    pub failures: usize,
    pub level: f64,
}

impl BootstrapBands {
    pub fn beta1_csv(&self) -> String {
        let mut out = String::from("t,estimate,lower,upper\n");
        for h in 0..self.t.len() {
            let _ = writeln!(
                out,
                "{:?},{:?},{:?},{:?}",
                self.t[h], self.beta1[h], self.beta1_lower[h], self.beta1_upper[h]
            );
        }
        out
    }

    pub fn scalar_csv(&self) -> String {
        let mut out = String::from("label,estimate,lower,upper\n");
        for s in &self.scalar_intervals {
            let _ = writeln!(out, "{},{:?},{:?},{:?}", s.label, s.estimate, s.lower, s.upper);
        }
        out
    }

    pub fn write_csv(&self, beta1_path: &Path, scalar_path: &Path) -> Result<()> {
        std::fs::write(beta1_path, self.beta1_csv())?;
        std::fs::write(scalar_path, self.scalar_csv())?;
        Ok(())
    }
}

/// Linear-interpolation quantile of already sorted values.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let k = h.floor() as usize;
    let f = h - k as f64;
    match sorted.get(k + 1) {
        Some(&next) if f > 0.0 => sorted[k] + f * (next - sorted[k]),
        _ => sorted[k],
    }
}

/// `(lower, upper)` percentile limits of each column of `draws`.
pub fn percentile_limits(draws: &[Vec<f64>], level: f64) -> (Vec<f64>, Vec<f64>) {
    let p = draws.first().map_or(0, Vec::len);
    let alpha = (1.0 - level) / 2.0;
    (0..p)
        .map(|c| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[c]).collect();
            col.sort_by(f64::total_cmp);
            (quantile_sorted(&col, alpha), quantile_sorted(&col, 1.0 - alpha))
        })
        .unzip()
}

fn is_score(label: &str) -> bool {
    label.starts_with("gamma_")
}

/// Resample subjects with replacement, refit the whole pipeline (including the
/// error covariance estimate) and take pointwise percentiles.
pub fn bootstrap_ci(
    ds: &GflmDataset,
    ctx: &FitContext,
    spec: &EstimatorSpec,
    cfg: &BootstrapConfig,
) -> Result<BootstrapBands> {
    cfg.validate()?;
    let point = fit_dataset(ds, ctx, spec)?.fit;
    let n = ds.n_subjects();
    let keep: Vec<usize> = (0..point.labels.len()).filter(|&k| !is_score(&point.labels[k])).collect();

    let refits: Vec<Result<Vec<f64>>> = (0..cfg.b)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(cfg.seed, b as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut spec = spec.clone();
            spec.simex.seed = derive_seed(spec.simex.seed, SIMEX_SEED_TAG, b as u64);
            let fit = fit_dataset(&ds.select(&idx), ctx, &spec)?.fit;
            let mut v = fit.beta1.to_vec();
            v.extend(keep.iter().map(|&k| fit.coefficients[k]));
            Ok(v)
        })
        .collect();

    let failures = refits.iter().filter(|r| r.is_err()).count();
    if failures as f64 > MAX_FAILURE_RATE * cfg.b as f64 {
        let first = refits.iter().find_map(|r| r.as_ref().err()).map(ToString::to_string).unwrap_or_default();
        return Err(Error::EstimatorFailure(format!(
            "{failures} of {} bootstrap refits failed (limit {:.0}%); first failure: {first}",
            cfg.b,
            MAX_FAILURE_RATE * 100.0
        )));
    }
    let draws: Vec<Vec<f64>> = refits.into_iter().flatten().collect();
    let (lower, upper) = percentile_limits(&draws, cfg.level);
    let m = point.beta1.len();
    Ok(BootstrapBands {
        t: ctx.grid.points().to_vec(),
        beta1: point.beta1.clone(),
        beta1_lower: Array1::from(lower[..m].to_vec()),
        beta1_upper: Array1::from(upper[..m].to_vec()),
        scalar_intervals: keep
            .iter()
            .enumerate()
            .map(|(i, &k)| ScalarInterval {
                label: point.labels[k].clone(),
                estimate: point.coefficients[k],
                lower: lower[m + i],
                upper: upper[m + i],
            })
            .collect(),
        b: cfg.b,
        failures,
        level: cfg.level,
    })
}
