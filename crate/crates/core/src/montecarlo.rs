//! Simulation study: scenario files, data generation, the five-estimator loop
//! and the bias/variance summaries.
//!
//! Scenario files are flat `key = value` text; `#` starts a comment. Keys not
//! listed in [`SCENARIO_KEYS`] are rejected.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Normal};
use rayon::prelude::*;

use crate::bspline::select_kn;
use crate::dataset::{GflmDataset, Truth};
use crate::error::{Error, Result};
use crate::estimators::{Covariates, EstimatorKind, FitContext, FitResult};
use crate::fungrid::{make_uniform_grid, FunctionalReplicates, Grid, ScalarReplicates};
use crate::glm::{expit, Family};
use crate::gp::{build_covariance, CovarianceKind, CovarianceSpec, GpSampler};
use crate::pipeline::{fit_dataset, EstimatorSpec};
use crate::rng::{derive_seed, stream_rng};
use crate::simex::SimexConfig;

const SIMEX_SEED_TAG: u64 = 0x4d43_5349;
/// Share of failed replications above which an estimator is flagged.
pub const FLAG_FAILURE_RATE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Beta1Shape {
    /// `sin(2πt)`
    Sin2Pi,
    Zero,
}

impl Beta1Shape {
    pub fn name(self) -> &'static str {
        match self {
            Beta1Shape::Sin2Pi => "sin_2pi",
            Beta1Shape::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sin_2pi" => Ok(Beta1Shape::Sin2Pi),
            "zero" => Ok(Beta1Shape::Zero),
            _ => Err(Error::Config(format!("unknown beta1_shape '{s}' (sin_2pi, zero)"))),
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        match self {
            Beta1Shape::Sin2Pi => (2.0 * std::f64::consts::PI * t).sin(),
            Beta1Shape::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanShape {
    /// `1 / (1 + exp(8 (t - 0.5)))`
    Logistic,
    Zero,
}

impl MeanShape {
    pub fn name(self) -> &'static str {
        match self {
            MeanShape::Logistic => "logistic",
            MeanShape::Zero => "zero",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "logistic" => Ok(MeanShape::Logistic),
            "zero" => Ok(MeanShape::Zero),
            _ => Err(Error::Config(format!("unknown X1_mean '{s}' (logistic, zero)"))),
        }
    }

    pub fn eval(self, t: f64) -> f64 {
        match self {
            MeanShape::Logistic => 1.0 / (1.0 + (8.0 * (t - 0.5)).exp()),
            MeanShape::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScenario {
    pub name: String,
    pub n: usize,
    pub t_points: usize,
    pub j: usize,
    pub beta1_shape: Beta1Shape,
    pub beta2: f64,
    /// Effects of `Z1 ~ N(2, σ_Z²)` and `Z2 ~ Bernoulli(z2_prob)`.
    pub alpha: Vec<f64>,
    pub x1_mean: MeanShape,
    pub cov_x1: CovarianceSpec,
    pub cov_u1: CovarianceSpec,
    pub sigma_x2: f64,
    pub sigma_u2: f64,
    pub mu_x2: f64,
    pub sigma_z: f64,
    pub z2_prob: f64,
    pub n_replications: usize,
    pub family: Family,
    pub seed: u64,
    /// Basis size; `None` uses [`select_kn`].
    pub kn: Option<usize>,
    pub simex_lambdas: Vec<f64>,
    pub simex_s: usize,
    pub include_intercept: bool,
}

impl Default for SimScenario {
    fn default() -> Self {
        let mut cov_u1 = CovarianceSpec::squared_exponential(3.0, 0.15);
        cov_u1.jitter_seed = 1;
        Self {
            name: "default".into(),
            n: 2000,
            t_points: 100,
            j: 5,
            beta1_shape: Beta1Shape::Sin2Pi,
            beta2: 1.0,
            alpha: vec![1.0, 1.0],
            x1_mean: MeanShape::Logistic,
            cov_x1: CovarianceSpec::squared_exponential(3.0, 0.05),
            cov_u1,
            sigma_x2: 3.0,
            sigma_u2: 3.0,
            mu_x2: 2.0,
            sigma_z: 1.0,
            z2_prob: 0.6,
            n_replications: 500,
            family: Family::BinomialLogit,
            seed: 2024,
            kn: None,
            simex_lambdas: SimexConfig::default().lambdas,
            simex_s: SimexConfig::default().n_sim,
            include_intercept: true,
        }
    }
}

/// Accepted scenario keys.
pub const SCENARIO_KEYS: &[&str] = &[
    "name",
    "n",
    "t_points",
    "J",
    "beta1_shape",
    "beta2",
    "alpha",
    "X1_mean",
    "cov_X1.kind",
    "cov_X1.sigma",
    "cov_X1.rho",
    "cov_X1.length_scale",
    "cov_X1.jitter_seed",
    "cov_U1.kind",
    "cov_U1.sigma",
    "cov_U1.rho",
    "cov_U1.length_scale",
    "cov_U1.jitter_seed",
    "sigma_X2",
    "sigma_U2",
    "mu_X2",
    "sigma_Z",
    "z2_prob",
    "n_replications",
    "family",
    "seed",
    "kn",
    "simex_lambdas",
    "simex_s",
    "include_intercept",
];

fn value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',').map(|p| value(key, p.trim())).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",")
}

impl SimScenario {
    /// Parse a scenario file body; absent keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sc = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let (key, v) = (key.trim(), v.trim());
            if !SCENARIO_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {}: unknown scenario key '{key}'", lineno + 1)));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
            sc.set(key, v)?;
        }
        sc.validate()?;
        Ok(sc)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if let Some((block, field)) = key.split_once('.') {
            let spec = if block == "cov_X1" { &mut self.cov_x1 } else { &mut self.cov_u1 };
            match field {
                "kind" => spec.kind = CovarianceKind::parse(v)?,
                "sigma" => spec.sigma = value(key, v)?,
                "rho" => spec.rho = value(key, v)?,
                "length_scale" => spec.length_scale = value(key, v)?,
                _ => spec.jitter_seed = value(key, v)?,
            }
            return Ok(());
        }
        match key {
            "name" => self.name = v.to_string(),
            "n" => self.n = value(key, v)?,
            "t_points" => self.t_points = value(key, v)?,
            "J" => self.j = value(key, v)?,
            "beta1_shape" => self.beta1_shape = Beta1Shape::parse(v)?,
            "beta2" => self.beta2 = value(key, v)?,
            "alpha" => self.alpha = list(key, v)?,
            "X1_mean" => self.x1_mean = MeanShape::parse(v)?,
            "sigma_X2" => self.sigma_x2 = value(key, v)?,
            "sigma_U2" => self.sigma_u2 = value(key, v)?,
            "mu_X2" => self.mu_x2 = value(key, v)?,
            "sigma_Z" => self.sigma_z = value(key, v)?,
            "z2_prob" => self.z2_prob = value(key, v)?,
            "n_replications" => self.n_replications = value(key, v)?,
            "family" => self.family = Family::parse(v)?,
            "seed" => self.seed = value(key, v)?,
            "kn" => self.kn = if v == "auto" { None } else { Some(value(key, v)?) },
            "simex_lambdas" => self.simex_lambdas = list(key, v)?,
            "simex_s" => self.simex_s = value(key, v)?,
            _ => self.include_intercept = value(key, v)?,
        }
        Ok(())
    }

    /// Scenario file text that parses back to `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("name", self.name.clone());
        kv("n", self.n.to_string());
        kv("t_points", self.t_points.to_string());
        kv("J", self.j.to_string());
        kv("beta1_shape", self.beta1_shape.name().into());
        kv("beta2", format!("{:?}", self.beta2));
        kv("alpha", join(&self.alpha));
        kv("X1_mean", self.x1_mean.name().into());
        for (block, spec) in [("cov_X1", &self.cov_x1), ("cov_U1", &self.cov_u1)] {
            kv(&format!("{block}.kind"), spec.kind.name().into());
            kv(&format!("{block}.sigma"), format!("{:?}", spec.sigma));
            kv(&format!("{block}.rho"), format!("{:?}", spec.rho));
            kv(&format!("{block}.length_scale"), format!("{:?}", spec.length_scale));
            kv(&format!("{block}.jitter_seed"), spec.jitter_seed.to_string());
        }
        kv("sigma_X2", format!("{:?}", self.sigma_x2));
        kv("sigma_U2", format!("{:?}", self.sigma_u2));
        kv("mu_X2", format!("{:?}", self.mu_x2));
        kv("sigma_Z", format!("{:?}", self.sigma_z));
        kv("z2_prob", format!("{:?}", self.z2_prob));
        kv("n_replications", self.n_replications.to_string());
        kv("family", self.family.name().into());
        kv("seed", self.seed.to_string());
        kv("kn", self.kn.map_or("auto".into(), |k| k.to_string()));
        kv("simex_lambdas", join(&self.simex_lambdas));
        kv("simex_s", self.simex_s.to_string());
        kv("include_intercept", self.include_intercept.to_string());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if self.t_points < 2 {
            return bad(format!("t_points must be at least 2, got {}", self.t_points));
        }
        if self.j < 1 {
            return bad("J must be at least 1".into());
        }
        if self.n_replications < 1 {
            return bad("n_replications must be at least 1".into());
        }
        if self.alpha.len() != 2 {
            return bad(format!("alpha needs 2 values (Z1, Z2), got {}", self.alpha.len()));
        }
        for (k, v) in [("sigma_X2", self.sigma_x2), ("sigma_U2", self.sigma_u2), ("sigma_Z", self.sigma_z)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{k} must be >= 0, got {v}"));
            }
        }
        if !(0.0..=1.0).contains(&self.z2_prob) {
            return bad(format!("z2_prob must be in [0, 1], got {}", self.z2_prob));
        }
        for v in [self.beta2, self.mu_x2].iter().chain(&self.alpha) {
            if !v.is_finite() {
                return bad("non-finite coefficient in scenario".into());
            }
        }
        self.cov_x1.validate().map_err(|e| Error::Config(format!("cov_X1: {e}")))?;
        self.cov_u1.validate().map_err(|e| Error::Config(format!("cov_U1: {e}")))?;
        self.simex_config(0).validate()
    }

    pub fn grid(&self) -> Result<Grid> {
        make_uniform_grid(self.t_points)
    }

    pub fn n_basis(&self) -> usize {
        select_kn(self.n, self.kn)
    }

    pub fn fit_context(&self) -> Result<FitContext> {
        Ok(FitContext::new(self.grid()?, self.n_basis(), self.family)?.intercept(self.include_intercept))
    }

    pub fn simex_config(&self, seed: u64) -> SimexConfig {
        SimexConfig { lambdas: self.simex_lambdas.clone(), n_sim: self.simex_s, seed, ..Default::default() }
    }

    pub fn beta1_on(&self, grid: &Grid) -> Array1<f64> {
        grid.points().iter().map(|&t| self.beta1_shape.eval(t)).collect()
    }
}

/// Draws the true covariates, outcomes and replicated surrogates.
pub fn generate_dataset<R: Rng + ?Sized>(sc: &SimScenario, rng: &mut R) -> Result<GflmDataset> {
    sc.validate()?;
    let grid = sc.grid()?;
    let (n, m, j) = (sc.n, grid.len(), sc.j);
    let xs = GpSampler::new(&build_covariance(&sc.cov_x1, &grid)?)?;
    let us = GpSampler::new(&build_covariance(&sc.cov_u1, &grid)?)?;
    let normal = |sd: f64| Normal::new(0.0, sd).map_err(|e| Error::Config(e.to_string()));

    let mean: Array1<f64> = grid.points().iter().map(|&t| sc.x1_mean.eval(t)).collect();
    let x1 = xs.sample(n, rng) + &mean;
    let d_x2 = normal(sc.sigma_x2)?;
    let x2: Vec<f64> = (0..n).map(|_| sc.mu_x2 + d_x2.sample(rng)).collect();
    let d_z = normal(sc.sigma_z)?;
    let bern = Bernoulli::new(sc.z2_prob).map_err(|e| Error::Config(e.to_string()))?;
    let mut z = Array2::zeros((n, 2));
    for mut row in z.rows_mut() {
        row[0] = 2.0 + d_z.sample(rng);
        row[1] = bern.sample(rng) as u8 as f64;
    }

    let weighted_beta1: Array1<f64> = sc.beta1_on(&grid) * &Array1::from(grid.weights().to_vec());
    let eta = x1.dot(&weighted_beta1)
        + &(Array1::from(x2.clone()) * sc.beta2)
        + &z.dot(&Array1::from(sc.alpha.clone()));
    let y: Vec<f64> = match sc.family {
        Family::BinomialLogit => eta.iter().map(|&e| (rng.random::<f64>() < expit(e)) as u8 as f64).collect(),
        Family::GaussianIdentity => {
            let d = normal(1.0)?;
            eta.iter().map(|&e| e + d.sample(rng)).collect()
        }
    };

    let u1 = us.sample(n * j, rng);
    let blocks: Vec<Array2<f64>> = (0..n)
        .map(|i| {
            let mut b = u1.slice(ndarray::s![i * j..(i + 1) * j, ..]).to_owned();
            b += &x1.row(i);
            b
        })
        .collect();
    let d_u2 = normal(sc.sigma_u2)?;
    let w2: Vec<Vec<f64>> = x2.iter().map(|&x| (0..j).map(|_| x + d_u2.sample(rng)).collect()).collect();
    debug_assert_eq!(blocks[0].ncols(), m);

    GflmDataset::new(
        (1..=n).map(|i| i.to_string()).collect(),
        y,
        Covariates::new(z, vec!["z1".into(), "z2".into()])?,
        FunctionalReplicates::new(grid, blocks)?,
        ScalarReplicates::new(w2)?,
        sc.family,
        Some(Truth { x1, x2 }),
    )
}

/// `β̂₁` on the metric grid and `β̂₂` from one replication.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub beta1: Array1<f64>,
    pub beta2: f64,
}

impl From<&FitResult> for Estimate {
    fn from(f: &FitResult) -> Self {
        Self { beta1: f.beta1.clone(), beta2: f.beta2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub abias2: f64,
    pub avar: f64,
    pub aimse: f64,
    pub bias2: f64,
    pub var: f64,
    pub mse: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 6] =
        ["ABias2_beta1", "AVar_beta1", "AIMSE_beta1", "Bias2_beta2", "Var_beta2", "MSE_beta2"];

    pub fn values(&self) -> [f64; 6] {
        [self.abias2, self.avar, self.aimse, self.bias2, self.var, self.mse]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

/// Metrics over replications, with the `1/R` variance divisor; NaN when empty.
pub fn compute_metrics(estimates: &[Estimate], beta1: &[f64], beta2: f64) -> Metrics {
    let r = estimates.len() as f64;
    let m = beta1.len();
    let mut bar1 = Array1::<f64>::zeros(m);
    let mut bar2 = 0.0;
    for e in estimates {
        bar1 += &e.beta1;
        bar2 += e.beta2;
    }
    bar1 /= r;
    bar2 /= r;
    let abias2 = bar1.iter().zip(beta1).map(|(b, t)| (b - t) * (b - t)).sum::<f64>() / m as f64;
    let mut ss = 0.0;
    let mut ss2 = 0.0;
    for e in estimates {
        ss += e.beta1.iter().zip(bar1.iter()).map(|(v, b)| (v - b) * (v - b)).sum::<f64>();
        ss2 += (e.beta2 - bar2) * (e.beta2 - bar2);
    }
    let avar = ss / (m as f64 * r);
    let bias2 = (bar2 - beta2) * (bar2 - beta2);
    let var = ss2 / r;
    Metrics { abias2, avar, aimse: abias2 + avar, bias2, var, mse: bias2 + var }
}

/// Leave-one-out jackknife standard errors of `(Bias², Var, MSE)` for `β̂₂`.
pub fn beta2_jackknife_se(values: &[f64], beta2: f64) -> [f64; 3] {
    let r = values.len();
    if r < 2 {
        return [f64::NAN; 3];
    }
    let stats = |skip: usize| {
        let k = (r - 1) as f64;
        let mean = values.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, v)| v).sum::<f64>() / k;
        let var = values
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, v)| (v - mean) * (v - mean))
            .sum::<f64>()
            / k;
        let bias2 = (mean - beta2) * (mean - beta2);
        [bias2, var, bias2 + var]
    };
    let loo: Vec<[f64; 3]> = (0..r).map(stats).collect();
    let mut se = [0.0; 3];
    for (c, s) in se.iter_mut().enumerate() {
        let mean = loo.iter().map(|v| v[c]).sum::<f64>() / r as f64;
        let ss = loo.iter().map(|v| (v[c] - mean) * (v[c] - mean)).sum::<f64>();
        *s = ((r - 1) as f64 / r as f64 * ss).sqrt();
    }
    se
}

/// Per-replication estimates of one estimator; `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRuns {
    pub kind: EstimatorKind,
    pub estimates: Vec<Option<Estimate>>,
}

impl EstimatorRuns {
    pub fn successes(&self) -> Vec<Estimate> {
        self.estimates.iter().flatten().cloned().collect()
    }

    pub fn failures(&self) -> usize {
        self.estimates.iter().filter(|e| e.is_none()).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub scenario: SimScenario,
    pub beta1_true: Array1<f64>,
    pub runs: Vec<EstimatorRuns>,
}

impl StudyResult {
    pub fn runs(&self, kind: EstimatorKind) -> &EstimatorRuns {
        self.runs.iter().find(|r| r.kind == kind).expect("every estimator is run")
    }

    pub fn report(&self) -> MetricsReport {
        let rows = self
            .runs
            .iter()
            .map(|run| {
                let ok = run.successes();
                let failures = run.failures();
                EstimatorMetrics {
                    kind: run.kind,
                    metrics: compute_metrics(&ok, self.beta1_true.as_slice().expect("contiguous"), self.scenario.beta2),
                    successes: ok.len(),
                    failures,
                    flagged: failures as f64 > FLAG_FAILURE_RATE * run.estimates.len() as f64,
                }
            })
            .collect();
        MetricsReport { scenario: self.scenario.name.clone(), replications: self.scenario.n_replications, rows }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorMetrics {
    pub kind: EstimatorKind,
    pub metrics: Metrics,
    pub successes: usize,
    pub failures: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub scenario: String,
    pub replications: usize,
    pub rows: Vec<EstimatorMetrics>,
}

impl MetricsReport {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorMetrics> {
        self.rows.iter().find(|r| r.kind == kind)
    }

    /// Metric value by estimator and metric name.
    pub fn value(&self, kind: EstimatorKind, metric: &str) -> Option<f64> {
        self.get(kind).and_then(|r| r.metrics.get(metric))
    }

    /// One row per (estimator, metric).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,estimator,metric,value,replications,failures,flagged\n");
        for row in &self.rows {
            for (name, v) in Metrics::NAMES.iter().zip(row.metrics.values()) {
                let _ = writeln!(
                    out,
                    "{},{},{name},{v:?},{},{},{}",
                    self.scenario,
                    row.kind,
                    self.replications,
                    row.failures,
                    row.flagged
                );
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Generate and fit one replication with all five estimators.
pub fn run_replication(sc: &SimScenario, ctx: &FitContext, index: usize) -> Result<Vec<Option<Estimate>>> {
    let mut rng = stream_rng(sc.seed, index as u64);
    let ds = generate_dataset(sc, &mut rng)?;
    Ok(EstimatorKind::ALL
        .iter()
        .map(|&kind| {
            let mut spec = EstimatorSpec::new(kind);
            spec.simex = sc.simex_config(derive_seed(sc.seed, SIMEX_SEED_TAG, index as u64));
            fit_dataset(&ds, ctx, &spec).ok().map(|o| Estimate::from(&o.fit))
        })
        .collect())
}

/// All replications of a scenario; results do not depend on the thread count.
pub fn run_study(sc: &SimScenario) -> Result<StudyResult> {
    sc.validate()?;
    let ctx = sc.fit_context()?;
    let per_rep: Vec<Vec<Option<Estimate>>> = (0..sc.n_replications)
        .into_par_iter()
        .map(|r| run_replication(sc, &ctx, r))
        .collect::<Result<_>>()?;
    let runs = EstimatorKind::ALL
        .iter()
        .enumerate()
        .map(|(k, &kind)| EstimatorRuns { kind, estimates: per_rep.iter().map(|rep| rep[k].clone()).collect() })
        .collect();
    Ok(StudyResult { scenario: sc.clone(), beta1_true: sc.beta1_on(&ctx.grid), runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fungrid::ReplicateMean;
    use crate::gp::CovarianceSpec;
    use approx::assert_abs_diff_eq;

    fn small() -> SimScenario {
        SimScenario {
            name: "small".into(),
            n: 300,
            t_points: 30,
            n_replications: 3,
            simex_s: 5,
            ..Default::default()
        }
    }

    #[test]
    fn scenario_round_trip_and_defaults() {
        let sc = SimScenario { kn: Some(9), simex_lambdas: vec![0.0, 1.0, 2.0], ..small() };
        assert_eq!(SimScenario::parse(&sc.to_config_string()).unwrap(), sc);
        let d = SimScenario::parse("# nothing\n\n").unwrap();
        assert_eq!(d, SimScenario::default());
        assert_eq!(d.n_replications, 500);
        assert_eq!(d.alpha, [1.0, 1.0]);
    }

    #[test]
    fn scenario_rejects_bad_input() {
        for text in [
            "sigma_U = 3",
            "n = 10\nn = 20",
            "cov_X1.sigmaa = 1",
            "n",
            "n = ten",
            "z2_prob = 1.5",
            "cov_U1.kind = spline",
            "simex_lambdas = 0,1",
            "alpha = 1",
            "sigma_X2 = -1",
        ] {
            assert!(matches!(SimScenario::parse(text), Err(Error::Config(_))), "{text}");
        }
        let sc = SimScenario::parse("cov_U1.kind = ar1\ncov_U1.rho = 0.3 # comment\nJ = 2").unwrap();
        assert_eq!(sc.cov_u1.kind, CovarianceKind::Ar1);
        assert_eq!(sc.cov_u1.rho, 0.3);
        assert_eq!(sc.j, 2);
    }

    #[test]
    fn zero_variance_generator_is_deterministic_structure() {
        let sc = SimScenario {
            cov_x1: CovarianceSpec::squared_exponential(0.0, 0.1),
            cov_u1: CovarianceSpec::squared_exponential(0.0, 0.1),
            sigma_x2: 0.0,
            sigma_u2: 0.0,
            ..small()
        };
        let ds = generate_dataset(&sc, &mut stream_rng(1, 0)).unwrap();
        let truth = ds.truth.as_ref().unwrap();
        let mean: Vec<f64> = ds.grid().points().iter().map(|&t| MeanShape::Logistic.eval(t)).collect();
        for i in 0..sc.n {
            assert_eq!(truth.x1.row(i).to_vec(), mean);
            assert_eq!(truth.x2[i], 2.0);
            for rep in ds.w1.subject(i).outer_iter() {
                assert_eq!(rep.to_vec(), mean);
            }
            assert!(ds.w2.subject(i).iter().all(|&v| v == 2.0));
        }
    }

    #[test]
    fn generator_moments() {
        let sc = SimScenario { n: 100_000, t_points: 5, j: 2, sigma_x2: 3.0, sigma_u2: 1.5, ..small() };
        let ds = generate_dataset(&sc, &mut stream_rng(2, 0)).unwrap();
        let x2 = &ds.truth.as_ref().unwrap().x2;
        let n = x2.len() as f64;
        let mean = x2.iter().sum::<f64>() / n;
        assert!((mean - 2.0).abs() < 0.05);
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
        };
        let w: Vec<f64> = ds.w2.subjects().iter().map(|s| s[0]).collect();
        let excess = var(&w) - var(x2);
        assert!((excess / 2.25 - 1.0).abs() < 0.05, "excess variance {excess}");
        let z2 = ds.z.values().column(1).mean().unwrap();
        assert!((z2 - 0.6).abs() < 0.01);
        let z1 = ds.z.values().column(0).mean().unwrap();
        assert!((z1 - 2.0).abs() < 0.02);
        let ybar = ds.y.iter().sum::<f64>() / n;
        assert!(ybar > 0.5 && ybar < 1.0);
    }

    #[test]
    fn metrics_examples() {
        let truth = [0.5, -0.5];
        let exact = vec![Estimate { beta1: ndarray::array![0.5, -0.5], beta2: 1.0 }; 3];
        let m = compute_metrics(&exact, &truth, 1.0);
        assert_eq!(m.values(), [0.0; 6]);

        let two = vec![
            Estimate { beta1: ndarray::array![0.5, -0.5], beta2: 0.0 },
            Estimate { beta1: ndarray::array![0.5, -0.5], beta2: 2.0 },
        ];
        let m = compute_metrics(&two, &truth, 1.0);
        assert_eq!((m.bias2, m.var, m.mse), (0.0, 1.0, 1.0));
    }

    #[test]
    fn metrics_match_loop_oracle() {
        let mut rng = stream_rng(5, 0);
        let truth: Vec<f64> = (0..7).map(|h| (h as f64 * 0.3).sin()).collect();
        let est: Vec<Estimate> = (0..11)
            .map(|_| Estimate {
                beta1: (0..7).map(|_| rng.random::<f64>()).collect(),
                beta2: rng.random::<f64>() * 2.0,
            })
            .collect();
        let m = compute_metrics(&est, &truth, 1.0);
        let r = est.len() as f64;
        let mut abias = 0.0;
        let mut avar = 0.0;
        for h in 0..7 {
            let mut bar = 0.0;
            for e in &est {
                bar += e.beta1[h];
            }
            bar /= r;
            abias += (bar - truth[h]).powi(2);
            let mut v = 0.0;
            for e in &est {
                v += (e.beta1[h] - bar).powi(2);
            }
            avar += v / r;
        }
        assert_abs_diff_eq!(m.abias2, abias / 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m.avar, avar / 7.0, epsilon = 1e-14);
        assert_eq!(m.aimse, m.abias2 + m.avar);
        assert_eq!(m.mse, m.bias2 + m.var);
    }

    #[test]
    fn jackknife_se_of_mean_squared_bias() {
        // For Var, a hand check on three points.
        let se = beta2_jackknife_se(&[0.0, 1.0, 2.0], 1.0);
        // leave-one-out variances: 0.25, 1.0, 0.25 → mean 0.5, ss = 0.375
        assert_abs_diff_eq!(se[1], (2.0 / 3.0 * 0.375f64).sqrt(), epsilon = 1e-14);
        assert!(beta2_jackknife_se(&[1.0], 1.0)[0].is_nan());
    }

    #[test]
    fn study_is_deterministic_and_complete() {
        let sc = small();
        let a = run_study(&sc).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_study(&sc).unwrap());
        assert_eq!(a, b);
        let report = a.report();
        assert_eq!(report.rows.len(), 5);
        assert_eq!(report.to_csv().lines().count(), 31);
        for row in &report.rows {
            assert_eq!(row.successes + row.failures, 3);
        }
    }

    #[test]
    fn single_replication_has_zero_variance() {
        let sc = SimScenario { n_replications: 1, ..small() };
        let report = run_study(&sc).unwrap().report();
        for row in &report.rows {
            if row.successes == 1 {
                assert_eq!(row.metrics.avar, 0.0);
                assert_eq!(row.metrics.var, 0.0);
            }
        }
    }

    #[test]
    fn zero_error_estimators_agree() {
        let sc = SimScenario {
            cov_u1: CovarianceSpec::squared_exponential(0.0, 0.15),
            sigma_u2: 0.0,
            n_replications: 1,
            ..small()
        };
        let ctx = sc.fit_context().unwrap();
        let ds = generate_dataset(&sc, &mut stream_rng(sc.seed, 0)).unwrap();
        let diff = &ds.w1.replicate_mean() - &ds.truth.as_ref().unwrap().x1;
        assert!(diff.iter().all(|d| d.abs() < 1e-12));
        let reps = run_replication(&sc, &ctx, 0).unwrap();
        let oracle = reps[0].as_ref().unwrap();
        for e in reps.iter().skip(1) {
            let e = e.as_ref().unwrap();
            assert!((e.beta2 - oracle.beta2).abs() < 1e-6);
            for (a, b) in e.beta1.iter().zip(oracle.beta1.iter()) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
