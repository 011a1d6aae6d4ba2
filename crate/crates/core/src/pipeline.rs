//! Run any estimator on a dataset.

use crate::dataset::GflmDataset;
use crate::error::{Error, Result};
use crate::estimators::{fit_average, fit_naive, fit_oracle, EstimatorKind, FitContext, FitResult};
use crate::mecov::{estimate_error_cov, ErrorCovariance};
use crate::rc::{fit_rc, RcConfig, RcDiagnostics};
use crate::simex::{run_simex, SimexConfig, SimexTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    /// 1-based session used by the naive estimator.
    pub naive_session: usize,
    pub simex: SimexConfig,
    pub rc: RcConfig,
    /// Error covariance of the replicate means; estimated from the data when absent.
    pub known_cov: Option<ErrorCovariance>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self { kind, naive_session: 1, simex: SimexConfig::default(), rc: RcConfig::default(), known_cov: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub fit: FitResult,
    pub simex_trace: Option<SimexTrace>,
    pub rc_diagnostics: Option<RcDiagnostics>,
}

pub fn fit_dataset(ds: &GflmDataset, ctx: &FitContext, spec: &EstimatorSpec) -> Result<FitOutcome> {
    if ds.grid() != &ctx.grid {
        return Err(Error::Shape("dataset grid differs from the fit context grid".into()));
    }
    let plain = |fit| FitOutcome { fit, simex_trace: None, rc_diagnostics: None };
    match spec.kind {
        EstimatorKind::Oracle => {
            let truth = ds.truth.as_ref().ok_or_else(|| {
                Error::InvalidArgument("the oracle estimator needs the true covariates".into())
            })?;
            fit_oracle(&truth.x1, &truth.x2, &ds.z, &ds.y, ctx).map(plain)
        }
        EstimatorKind::Average => fit_average(&ds.w1, &ds.w2, &ds.z, &ds.y, ctx).map(plain),
        EstimatorKind::Naive => fit_naive(&ds.w1, &ds.w2, &ds.z, &ds.y, ctx, spec.naive_session).map(plain),
        EstimatorKind::Simex => {
            let estimated;
            let cov = match &spec.known_cov {
                Some(c) => c,
                None => {
                    estimated = estimate_error_cov(&ds.w1, &ds.w2)?;
                    &estimated
                }
            };
            let (fit, trace) = run_simex(&ds.w1, &ds.w2, &ds.z, &ds.y, ctx, &spec.simex, cov)?;
            Ok(FitOutcome { fit, simex_trace: Some(trace), rc_diagnostics: None })
        }
        EstimatorKind::Rc => {
            let (fit, diag) = fit_rc(&ds.w1, &ds.w2, &ds.z, &ds.y, ctx, &spec.rc)?;
            Ok(FitOutcome { fit, simex_trace: None, rc_diagnostics: Some(diag) })
        }
    }
}
