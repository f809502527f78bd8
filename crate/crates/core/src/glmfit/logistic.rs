//! Binary logistic regression.

use nalgebra::{DMatrix, DVector};

use super::newton::{maximize, Objective};
use super::{invert_information, normal_terms, Design, Family, FitError, FitOptions, FitResult, ModelSpec};
use crate::features::FeatureTable;

/// Fitted linear predictors beyond this magnitude mean probabilities within
/// about 2e-9 of 0 or 1, which only happens under separation.
const SEPARATION_ETA: f64 = 20.0;

/// `ln(1 + e^η)` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticObjective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>) -> Self {
        LogisticObjective { x, y }
    }

    pub fn loglik(&self, beta: &DVector<f64>) -> f64 {
        let eta = self.x * beta;
        eta.iter()
            .zip(self.y.iter())
            .map(|(&e, &y)| y * e - softplus(e))
            .sum()
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let p = (self.x * beta).map(sigmoid);
        self.x.tr_mul(&(self.y - p))
    }

    pub fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let p = (self.x * beta).map(sigmoid);
        let mut xw = self.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= p[i] * (1.0 - p[i]);
        }
        self.x.tr_mul(&xw)
    }
}

impl Objective for LogisticObjective<'_> {
    fn loglik(&self, beta: &DVector<f64>) -> f64 {
        LogisticObjective::loglik(self, beta)
    }
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        LogisticObjective::gradient(self, beta)
    }
    fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        LogisticObjective::information(self, beta)
    }
}

pub fn logistic_loglik(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    LogisticObjective::new(x, y).loglik(beta)
}

pub fn fit_logistic(table: &FeatureTable, spec: &ModelSpec) -> Result<FitResult, FitError> {
    match spec.family {
        Family::Logistic => fit_design(&Design::from_table(table, &spec.covariates)?, &spec.options),
        other => Err(FitError::FamilyMismatch {
            family: "logistic",
            requested: other.name(),
        }),
    }
}

pub(crate) fn fit_design(design: &Design, opts: &FitOptions) -> Result<FitResult, FitError> {
    for (row, &v) in design.y.iter().enumerate() {
        if v != 0.0 && v != 1.0 {
            return Err(FitError::NonBinaryOutcome { row, value: v });
        }
    }
    design.check_rank()?;
    let n = design.y.len();
    let ybar = design.y.mean();
    if ybar == 0.0 || ybar == 1.0 {
        return Err(FitError::Separation);
    }

    let intercept = design.intercept_index();
    let mut start = DVector::zeros(design.x.ncols());
    if let Some(j) = intercept {
        let m = ybar.clamp(0.01, 0.99);
        start[j] = (m / (1.0 - m)).ln();
    }
    let obj = LogisticObjective::new(&design.x, &design.y);
    let out = maximize(&obj, start, opts)?;
    let eta = &design.x * &out.beta;
    if eta.amax() > SEPARATION_ETA {
        return Err(FitError::Separation);
    }
    if !out.converged {
        return Err(FitError::NonConvergence {
            iterations: out.iterations,
            gradient_norm: out.gradient_norm,
        });
    }
    let cov = invert_information(obj.information(&out.beta))
        .ok_or_else(|| FitError::Boundary("information matrix is singular at the optimum".into()))?;

    let p = eta.map(sigmoid);
    let pearson = (0..n)
        .map(|i| (design.y[i] - p[i]).powi(2) / (p[i] * (1.0 - p[i])))
        .sum();
    let null_ll = intercept.map(|_| n as f64 * (ybar * ybar.ln() + (1.0 - ybar) * (1.0 - ybar).ln()));

    let k = design.x.ncols();
    Ok(FitResult {
        family: Family::Logistic,
        outcome: design.outcome.clone(),
        terms: normal_terms(&design.names, &out.beta, &cov),
        n_obs: n,
        df_model: k - usize::from(intercept.is_some()),
        df_residuals: n - k,
        log_likelihood: out.loglik,
        null_log_likelihood: null_ll,
        deviance: -2.0 * out.loglik,
        pearson_chi2: pearson,
        converged: true,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
        covariance: opts.covariance,
        pseudo_r2: null_ll.map(|l0| 1.0 - out.loglik / l0),
        r_squared: None,
        adj_r_squared: None,
        f_statistic: None,
        f_p_value: None,
    })
}
