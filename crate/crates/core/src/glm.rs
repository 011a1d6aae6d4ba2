//! Generalized linear models fitted by iteratively reweighted least squares.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    BinomialLogit,
    GaussianIdentity,
}

impl Family {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "binomial" | "binomiallogit" | "logit" | "logistic" => Ok(Family::BinomialLogit),
            "gaussian" | "gaussianidentity" | "identity" | "normal" => Ok(Family::GaussianIdentity),
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::BinomialLogit => "binomial",
            Family::GaussianIdentity => "gaussian",
        }
    }

    fn mean(self, eta: f64) -> f64 {
        match self {
            Family::BinomialLogit => expit(eta),
            Family::GaussianIdentity => eta,
        }
    }

    /// Unit deviance summed over observations.
    pub fn deviance(self, y: ArrayView1<f64>, mu: ArrayView1<f64>) -> f64 {
        match self {
            Family::BinomialLogit => {
                -2.0 * y
                    .iter()
                    .zip(mu.iter())
                    .map(|(&yi, &m)| {
                        let mut ll = 0.0;
                        if yi > 0.0 {
                            ll += yi * m.ln();
                        }
                        if yi < 1.0 {
                            ll += (1.0 - yi) * (1.0 - m).ln();
                        }
                        ll
                    })
                    .sum::<f64>()
            }
            Family::GaussianIdentity => {
                y.iter().zip(mu.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
            }
        }
    }
}

/// Logistic function, clipped to `[1e-15, 1 - 1e-15]` once `|η| > 35`.
pub fn expit(eta: f64) -> f64 {
    const LIMIT: f64 = 35.0;
    if eta > LIMIT {
        1.0 - 1e-15
    } else if eta < -LIMIT {
        1e-15
    } else if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Regression design with labelled columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Array2<f64>,
    labels: Vec<String>,
}

impl DesignMatrix {
    pub fn new(values: Array2<f64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.ncols() {
            return Err(Error::Shape(format!(
                "{} labels for {} design columns",
                labels.len(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("design matrix has non-finite entries".into()));
        }
        Ok(Self { values, labels })
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

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the largest absolute coefficient change.
    pub tol: f64,
    /// Ridge added to the weighted normal equations only when they are singular.
    pub ridge: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, ridge: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Array1<f64>,
    pub labels: Vec<String>,
    pub converged: bool,
    pub n_iter: usize,
    pub deviance: f64,
    pub family: Family,
    /// The ridge fallback was used at least once.
    pub ridge_applied: bool,
    /// Deviance at the start value and after every iteration.
    pub deviance_trace: Vec<f64>,
}

const MIN_WEIGHT: f64 = 1e-10;
const MAX_HALVINGS: usize = 30;

/// Fit a GLM starting from zero coefficients.
pub fn fit_glm(x: &DesignMatrix, y: &[f64], family: Family, opts: &GlmOptions) -> Result<GlmFit> {
    fit_glm_from(x, y, family, opts, None)
}

/// Fit a GLM from an optional warm start.
///
/// Non-convergence is reported through `converged = false`, not as an error.
pub fn fit_glm_from(
    x: &DesignMatrix,
    y: &[f64],
    family: Family,
    opts: &GlmOptions,
    start: Option<ArrayView1<f64>>,
) -> Result<GlmFit> {
    let (n, p) = x.values.dim();
    if y.len() != n {
        return Err(Error::Shape(format!("{} outcomes for {} design rows", y.len(), n)));
    }
    if n <= p {
        return Err(Error::InvalidArgument(format!("need more observations ({n}) than columns ({p})")));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("outcome has non-finite values".into()));
    }
    if family == Family::BinomialLogit && y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument("binomial outcome must be 0/1".into()));
    }
    let xm = &x.values;
    let y = ArrayView1::from(y);
    let mut beta = match start {
        Some(s) if s.len() == p => s.to_owned(),
        Some(s) => {
            return Err(Error::Shape(format!("start has {} values for {p} columns", s.len())));
        }
        None => Array1::zeros(p),
    };
    let mut eta = xm.dot(&beta);
    let mut mu = eta.mapv(|e| family.mean(e));
    let mut dev = family.deviance(y, mu.view());
    let mut trace = vec![dev];
    let mut ridge_applied = false;
    let mut converged = false;
    let mut n_iter = 0;

    for it in 1..=opts.max_iter {
        n_iter = it;
        let (w, z) = working_values(family, y, eta.view(), mu.view());
        let sw = w.mapv(f64::sqrt);
        let xw = xm * &sw.view().insert_axis(Axis(1));
        let a = xw.t().dot(&xw);
        let b = xm.t().dot(&(&w * &z));
        let candidate = match linalg::solve_spd(a.view(), b.view()) {
            Some(c) => c,
            None => {
                let mut ar = a.clone();
                for j in 0..p {
                    ar[[j, j]] += opts.ridge;
                }
                match (opts.ridge > 0.0).then(|| linalg::solve_spd(ar.view(), b.view())).flatten() {
                    Some(c) => {
                        ridge_applied = true;
                        c
                    }
                    None => break,
                }
            }
        };

        let full_step = candidate
            .iter()
            .zip(beta.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        let mut next = candidate;
        let mut eta_next = xm.dot(&next);
        let mut mu_next = eta_next.mapv(|e| family.mean(e));
        let mut dev_next = family.deviance(y, mu_next.view());
        let mut halvings = 0;
        while !(dev_next <= dev) && halvings < MAX_HALVINGS {
            next = (&beta + &next) * 0.5;
            eta_next = xm.dot(&next);
            mu_next = eta_next.mapv(|e| family.mean(e));
            dev_next = family.deviance(y, mu_next.view());
            halvings += 1;
        }
        if !(dev_next <= dev) {
            // No descent left. At the optimum this is round-off in the deviance.
            converged = full_step < opts.tol;
            break;
        }
        let delta = next
            .iter()
            .zip(beta.iter())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        beta = next;
        eta = eta_next;
        mu = mu_next;
        dev = dev_next;
        trace.push(dev);
        if delta < opts.tol {
            converged = true;
            break;
        }
    }

    Ok(GlmFit {
        coefficients: beta,
        labels: x.labels.clone(),
        converged,
        n_iter,
        deviance: dev.max(0.0),
        family,
        ridge_applied,
        deviance_trace: trace,
    })
}

fn working_values(
    family: Family,
    y: ArrayView1<f64>,
    eta: ArrayView1<f64>,
    mu: ArrayView1<f64>,
) -> (Array1<f64>, Array1<f64>) {
    match family {
        Family::BinomialLogit => {
            let w = mu.mapv(|m| (m * (1.0 - m)).max(MIN_WEIGHT));
            let z = ndarray::Zip::from(&eta)
                .and(&y)
                .and(&mu)
                .and(&w)
                .map_collect(|&e, &yi, &m, &wi| e + (yi - m) / wi);
            (w, z)
        }
        Family::GaussianIdentity => (Array1::ones(y.len()), y.to_owned()),
    }
}

/// `X β` for a fitted model.
pub fn linear_predictor(fit: &GlmFit, x: &DesignMatrix) -> Result<Array1<f64>> {
    if x.n_cols() != fit.coefficients.len() {
        return Err(Error::Shape(format!(
            "design has {} columns, fit has {} coefficients",
            x.n_cols(),
            fit.coefficients.len()
        )));
    }
    Ok(x.values.dot(&fit.coefficients))
}

/// Fitted means `g^{-1}(X β)`.
pub fn predict_mean(fit: &GlmFit, x: &DesignMatrix) -> Result<Array1<f64>> {
    Ok(linear_predictor(fit, x)?.mapv(|e| fit.family.mean(e)))
}
