//! NB2 regression with log link and fixed dispersion.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use super::newton::{maximize, Objective};
use super::{
    invert_information, normal_terms, Covariance, Design, FitError, FitOptions, FitResult,
    ModelSpec,
};
use crate::features::FeatureTable;

/// Counts above this use `ln Γ` for the `y`-only constant instead of a sum.
const DIRECT_SUM_LIMIT: f64 = 64.0;
/// Linear predictors are clamped here so `exp` stays finite.
const ETA_MAX: f64 = 700.0;

/// NB2 log-likelihood, score and information for a fixed design.
#[derive(Debug, Clone)]
pub struct NegBinObjective<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    alpha: f64,
    /// Σ_{k<y} ln(1+αk) − ln Γ(y+1), independent of β.
    constants: Vec<f64>,
}

impl<'a> NegBinObjective<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, alpha: f64) -> Self {
        let constants = y.iter().map(|&yi| y_constant(yi, alpha)).collect();
        NegBinObjective {
            x,
            y,
            alpha,
            constants,
        }
    }

    fn mu(&self, beta: &DVector<f64>) -> DVector<f64> {
        (self.x * beta).map(|eta| eta.min(ETA_MAX).exp())
    }

    pub fn loglik(&self, beta: &DVector<f64>) -> f64 {
        let a = self.alpha;
        let mu = self.mu(beta);
        let mut ll = 0.0;
        for i in 0..self.y.len() {
            let (yi, mi) = (self.y[i], mu[i]);
            let l1p = (a * mi).ln_1p();
            let ylnmu = if yi == 0.0 { 0.0 } else { yi * mi.ln() };
            ll += self.constants[i] + ylnmu - yi * l1p - l1p / a;
        }
        ll
    }

    pub fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mu = self.mu(beta);
        let w = DVector::from_fn(self.y.len(), |i, _| {
            (self.y[i] - mu[i]) / (1.0 + self.alpha * mu[i])
        });
        self.x.tr_mul(&w)
    }

    /// Observed information `Σ x xᵀ μ(1+αy)/(1+αμ)²`.
    pub fn observed_information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let mu = self.mu(beta);
        let a = self.alpha;
        self.weighted_gram(|i| {
            let d = 1.0 + a * mu[i];
            mu[i] * (1.0 + a * self.y[i]) / (d * d)
        })
    }

    /// Expected information `Σ x xᵀ μ/(1+αμ)`.
    pub fn expected_information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        let mu = self.mu(beta);
        self.weighted_gram(|i| mu[i] / (1.0 + self.alpha * mu[i]))
    }

    fn weighted_gram(&self, w: impl Fn(usize) -> f64) -> DMatrix<f64> {
        let mut xw = self.x.clone();
        for (i, mut row) in xw.row_iter_mut().enumerate() {
            row *= w(i);
        }
        self.x.tr_mul(&xw)
    }
}

impl Objective for NegBinObjective<'_> {
    fn loglik(&self, beta: &DVector<f64>) -> f64 {
        NegBinObjective::loglik(self, beta)
    }
    fn gradient(&self, beta: &DVector<f64>) -> DVector<f64> {
        NegBinObjective::gradient(self, beta)
    }
    fn information(&self, beta: &DVector<f64>) -> DMatrix<f64> {
        self.observed_information(beta)
    }
}

fn y_constant(y: f64, alpha: f64) -> f64 {
    if y < DIRECT_SUM_LIMIT {
        let mut s = 0.0;
        let mut k = 0.0;
        while k < y {
            s += (alpha * k).ln_1p();
            k += 1.0;
        }
        s - ln_gamma(y + 1.0)
    } else {
        // Σ_{k<y} ln(1+αk) = lnΓ(y+1/α) − lnΓ(1/α) + y ln α
        let r = 1.0 / alpha;
        ln_gamma(y + r) - ln_gamma(r) + y * alpha.ln() - ln_gamma(y + 1.0)
    }
}

/// NB2 log-likelihood of `y` under means `exp(xβ)`.
pub fn negbin_loglik(x: &DMatrix<f64>, y: &DVector<f64>, alpha: f64, beta: &DVector<f64>) -> f64 {
    NegBinObjective::new(x, y, alpha).loglik(beta)
}

pub fn fit_negbin(table: &FeatureTable, spec: &ModelSpec) -> Result<FitResult, FitError> {
    match spec.family {
        super::Family::NegativeBinomial { alpha } => {
            let design = Design::from_table(table, &spec.covariates)?;
            fit_design(&design, alpha, &spec.options)
        }
        other => Err(FitError::FamilyMismatch {
            family: "negative_binomial",
            requested: other.name(),
        }),
    }
}

pub(crate) fn fit_design(design: &Design, alpha: f64, opts: &FitOptions) -> Result<FitResult, FitError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(FitError::BadDispersion(alpha));
    }
    for (row, &v) in design.y.iter().enumerate() {
        if !(v >= 0.0 && v.fract() == 0.0 && v.is_finite()) {
            return Err(FitError::NegativeOutcome { row, value: v });
        }
    }
    design.check_rank()?;
    let n = design.y.len();
    let ybar = design.y.mean();
    if design.y.iter().all(|&v| v == 0.0) {
        return Err(FitError::Boundary(
            "all outcomes are zero, so fitted means tend to zero".into(),
        ));
    }

    let intercept = design.intercept_index();
    let mut start = DVector::zeros(design.x.ncols());
    if let Some(j) = intercept {
        start[j] = (ybar + 0.1).ln();
    }
    let obj = NegBinObjective::new(&design.x, &design.y, alpha);
    let out = maximize(&obj, start, opts)?;
    log::debug!(
        "negative binomial: {} accepted steps, log-likelihood {:.6} -> {:.6}",
        out.path.len() - 1,
        out.path[0],
        out.loglik
    );
    if !out.converged {
        return Err(FitError::NonConvergence {
            iterations: out.iterations,
            gradient_norm: out.gradient_norm,
        });
    }

    let info = match opts.covariance {
        Covariance::Observed => obj.observed_information(&out.beta),
        Covariance::Expected => obj.expected_information(&out.beta),
    };
    let cov = invert_information(info)
        .ok_or_else(|| FitError::Boundary("information matrix is singular at the optimum".into()))?;

    let mu = obj.mu(&out.beta);
    let mut deviance = 0.0;
    let mut pearson = 0.0;
    for i in 0..n {
        let (yi, mi) = (design.y[i], mu[i]);
        let ylog = if yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
        deviance += 2.0 * (ylog - (yi + 1.0 / alpha) * ((1.0 + alpha * yi) / (1.0 + alpha * mi)).ln());
        pearson += (yi - mi).powi(2) / (mi + alpha * mi * mi);
    }

    // the intercept-only MLE sets every mean to ȳ
    let null_ll = intercept.map(|_| {
        let x0 = DMatrix::from_element(n, 1, 1.0);
        negbin_loglik(&x0, &design.y, alpha, &DVector::from_element(1, ybar.ln()))
    });

    let p = design.x.ncols();
    Ok(FitResult {
        family: super::Family::NegativeBinomial { alpha },
        outcome: design.outcome.clone(),
        terms: normal_terms(&design.names, &out.beta, &cov),
        n_obs: n,
        df_model: p - usize::from(intercept.is_some()),
        df_residuals: n - p,
        log_likelihood: out.loglik,
        null_log_likelihood: null_ll,
        deviance,
        pearson_chi2: pearson,
        converged: true,
        iterations: out.iterations,
        gradient_norm: out.gradient_norm,
        covariance: opts.covariance,
        pseudo_r2: None,
        r_squared: None,
        adj_r_squared: None,
        f_statistic: None,
        f_p_value: None,
    })
}
