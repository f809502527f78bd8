//! Dataset-combination atypicality and its association with scholarly impact.
//!
//! The crate covers the whole analysis path: corpus loading and validation,
//! a sparse co-usage similarity engine, Rao-Stirling atypicality scores,
//! feature construction, negative binomial / logistic / OLS fitting, matched
//! pair robustness checks, and a synthetic corpus generator with planted
//! effects.

pub mod corpus;
pub mod features;
pub mod glmfit;
pub mod matchrobust;
pub mod metrics;
pub mod pipeline;
pub mod simengine;
pub mod synth;
