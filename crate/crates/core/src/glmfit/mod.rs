//! Maximum-likelihood fitting for negative binomial, logistic and OLS models.
//!
//! All three families share one entry point, [`fit`], which selects design
//! columns from a [`FeatureTable`] and returns a [`FitResult`] carrying the
//! full coefficient table plus goodness-of-fit footer.

mod logistic;
mod negbin;
mod newton;
mod ols;
mod table;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::features::FeatureTable;

pub use logistic::{fit_logistic, logistic_loglik, LogisticObjective};
pub use negbin::{fit_negbin, negbin_loglik, NegBinObjective};
pub use ols::fit_ols;
pub use table::{read_fit_json, write_fit_csv, write_fit_json};

/// z quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("column {0} is not in the feature table")]
    UnknownColumn(String),
    #[error("design matrix is rank deficient: column {column} is a linear combination of earlier columns")]
    RankDeficient { column: String },
    #[error("need more observations ({n}) than parameters ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("outcome row {row} is {value}, expected a nonnegative integer count")]
    NegativeOutcome { row: usize, value: f64 },
    #[error("outcome row {row} is {value}, expected 0 or 1")]
    NonBinaryOutcome { row: usize, value: f64 },
    #[error("likelihood is maximized on the boundary: {0}")]
    Boundary(String),
    #[error("complete or quasi-complete separation: fitted probabilities reach 0 or 1")]
    Separation,
    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence { iterations: usize, gradient_norm: f64 },
    #[error("{family} fit requested for a {requested} model spec")]
    FamilyMismatch {
        family: &'static str,
        requested: &'static str,
    },
    #[error("dispersion must be positive and finite, got {0}")]
    BadDispersion(f64),
    #[error("regression table io: {0}")]
    Io(#[from] std::io::Error),
    #[error("regression table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("regression table json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    NegativeBinomial { alpha: f64 },
    Logistic,
    Ols,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::NegativeBinomial { .. } => "negative_binomial",
            Family::Logistic => "logistic",
            Family::Ols => "ols",
        }
    }

    /// Name of the test statistic column.
    pub fn stat_name(&self) -> &'static str {
        match self {
            Family::Ols => "t",
            _ => "z",
        }
    }
}

/// Source of the covariance matrix for count models. Logistic models coincide
/// under both; OLS ignores it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    #[default]
    Observed,
    Expected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Relative log-likelihood change below which iteration may stop.
    pub rel_tol: f64,
    /// Score norm bound, scaled by `1 + ‖β‖`.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub covariance: Covariance,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            rel_tol: 1e-10,
            grad_tol: 1e-8,
            max_iter: 100,
            covariance: Covariance::Observed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Informational; the table's outcome column is always used.
    #[serde(default)]
    pub outcome: String,
    /// Design columns in order; empty selects every table column.
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub options: FitOptions,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            outcome: String::new(),
            covariates: Vec::new(),
            options: FitOptions::default(),
        }
    }

    pub fn negbin(alpha: f64) -> Self {
        Self::new(Family::NegativeBinomial { alpha })
    }
}

/// One row of a regression table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub name: String,
    pub coef: f64,
    pub std_err: f64,
    pub stat: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: Family,
    pub outcome: String,
    pub terms: Vec<Term>,
    pub n_obs: usize,
    pub df_model: usize,
    pub df_residuals: usize,
    pub log_likelihood: f64,
    /// Intercept-only log-likelihood, when the design has an intercept.
    pub null_log_likelihood: Option<f64>,
    pub deviance: f64,
    pub pearson_chi2: f64,
    pub converged: bool,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub covariance: Covariance,
    /// McFadden pseudo-R², logistic only.
    pub pseudo_r2: Option<f64>,
    pub r_squared: Option<f64>,
    pub adj_r_squared: Option<f64>,
    pub f_statistic: Option<f64>,
    pub f_p_value: Option<f64>,
}

impl FitResult {
    pub fn term(&self, name: &str) -> Option<&Term> {
        self.terms.iter().find(|t| t.name == name)
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coef).collect()
    }
}

/// Percentage change in the outcome for a unit change in a log-link covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub coef: f64,
    pub percent: f64,
}

pub fn effect_pct(coef: f64) -> EffectSize {
    EffectSize {
        coef,
        percent: coef.exp_m1() * 100.0,
    }
}

/// Numeric design assembled from a feature table.
#[derive(Debug, Clone)]
pub struct Design {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub outcome: String,
}

impl Design {
    pub fn new(names: Vec<String>, x: DMatrix<f64>, y: DVector<f64>) -> Self {
        Design {
            names,
            x,
            y,
            outcome: "y".into(),
        }
    }

    pub fn from_table(table: &FeatureTable, covariates: &[String]) -> Result<Self, FitError> {
        let names: Vec<String> = if covariates.is_empty() {
            table.column_names.clone()
        } else {
            covariates.to_vec()
        };
        let cols = names
            .iter()
            .map(|n| table.column(n).ok_or_else(|| FitError::UnknownColumn(n.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let n = table.n_rows();
        let x = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
        Ok(Design {
            names,
            x,
            y: DVector::from_column_slice(&table.outcome),
            outcome: table.outcome_name.clone(),
        })
    }

    pub fn intercept_index(&self) -> Option<usize> {
        (0..self.x.ncols()).find(|&j| self.x.column(j).iter().all(|&v| v == 1.0))
    }

    /// Rejects `n <= p` and columns that are (numerically) in the span of
    /// earlier ones.
    pub(crate) fn check_rank(&self) -> Result<(), FitError> {
        let (n, p) = self.x.shape();
        if n <= p {
            return Err(FitError::TooFewObservations { n, p });
        }
        let mut scaled = self.x.clone();
        for mut col in scaled.column_iter_mut() {
            let norm = col.norm();
            if norm > 0.0 {
                col /= norm;
            }
        }
        let r = scaled.qr().r();
        for j in 0..p {
            if r[(j, j)].abs() < 1e-10 {
                return Err(FitError::RankDeficient {
                    column: self.names[j].clone(),
                });
            }
        }
        Ok(())
    }
}

/// Fits `spec` on `table`, dispatching on the family.
pub fn fit(table: &FeatureTable, spec: &ModelSpec) -> Result<FitResult, FitError> {
    let design = Design::from_table(table, &spec.covariates)?;
    fit_design(&design, spec.family, &spec.options)
}

pub fn fit_design(design: &Design, family: Family, opts: &FitOptions) -> Result<FitResult, FitError> {
    match family {
        Family::NegativeBinomial { alpha } => negbin::fit_design(design, alpha, opts),
        Family::Logistic => logistic::fit_design(design, opts),
        Family::Ols => ols::fit_design(design),
    }
}

/// Builds normal-theory terms from estimates and a covariance matrix.
pub(crate) fn normal_terms(names: &[String], beta: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<Term> {
    let normal = Normal::standard();
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let coef = beta[j];
            let std_err = cov[(j, j)].max(0.0).sqrt();
            let stat = coef / std_err;
            Term {
                name: name.clone(),
                coef,
                std_err,
                stat,
                p_value: 2.0 * normal.sf(stat.abs()),
                ci_low: coef - Z_95 * std_err,
                ci_high: coef + Z_95 * std_err,
            }
        })
        .collect()
}

/// Inverts a symmetric positive definite information matrix.
pub(crate) fn invert_information(info: DMatrix<f64>) -> Option<DMatrix<f64>> {
    match info.clone().cholesky() {
        Some(ch) => Some(ch.inverse()),
        None => info.try_inverse(),
    }
}
