//! End-to-end runs: corpus → scores → feature tables → fits → matching →
//! report bundle.
//!
//! Every stage writes plain CSV/JSON so stages can also be run one at a time.
//! Outputs are byte-deterministic for a fixed corpus and config; the only
//! volatile value is the timestamp in `manifest.json`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{load_corpus, validate, Corpus, CorpusPaths, ValidationReport, Window};
use crate::features::{
    build_features, FeatureError, FeatureSpec, FeatureTable, ModelKind, Period, ScoreTable, LOG_OFFSET,
};
use crate::glmfit::{effect_pct, fit, Covariance, Family, FitOptions, FitResult, ModelSpec};
use crate::matchrobust::{
    evaluate_pairs, match_by_atypicality, match_by_count_with, CandidateRule, MatchMethod,
    MatchReport, PairEvaluation,
};
use crate::metrics::{score_corpus_modes, ScoreMode, ScoreOptions, ScoreSet};
use crate::simengine::Mode;

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{stage} failed ({context}): {source}")]
    Stage {
        stage: &'static str,
        context: String,
        #[source]
        source: BoxError,
    },
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    fn stage(stage: &'static str, context: impl Into<String>, source: impl Into<BoxError>) -> Self {
        PipelineError::Stage {
            stage,
            context: context.into(),
            source: source.into(),
        }
    }
}

/// One model to build and fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    #[serde(flatten)]
    pub spec: FeatureSpec,
    /// Overrides the default dispersion of count models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl ModelEntry {
    pub fn new(model: ModelKind) -> Self {
        ModelEntry {
            spec: FeatureSpec::new(model),
            alpha: None,
        }
    }

    pub fn family(&self) -> Family {
        match (self.spec.default_family(), self.alpha) {
            (Family::NegativeBinomial { .. }, Some(alpha)) => Family::NegativeBinomial { alpha },
            (family, _) => family,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchingOptions {
    pub enabled: bool,
    pub methods: Vec<MatchMethod>,
    pub candidate_rule: CandidateRule,
    pub windows: Vec<Window>,
}

impl Default for MatchingOptions {
    fn default() -> Self {
        MatchingOptions {
            enabled: true,
            methods: vec![MatchMethod::Count, MatchMethod::Atypicality],
            candidate_rule: CandidateRule::default(),
            windows: Window::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Similarity spaces to score; models add whatever they need.
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default)]
    pub score_options: ScoreOptions,
    #[serde(default = "default_models")]
    pub models: Vec<ModelEntry>,
    /// Also fit every model within each publication era.
    #[serde(default)]
    pub per_period: bool,
    #[serde(default)]
    pub fit_options: FitOptions,
    #[serde(default)]
    pub matching: MatchingOptions,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Record wall-clock time in the manifest.
    #[serde(default = "yes")]
    pub timestamp: bool,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::Dataset, Mode::Topic, Mode::Journal]
}

fn yes() -> bool {
    true
}

/// Headline designs: data combination, dataset atypicality and topic
/// atypicality on 3-year citations.
pub fn default_models() -> Vec<ModelEntry> {
    vec![
        ModelEntry::new(ModelKind::DataCombination { window: Window::Y3 }),
        ModelEntry::new(ModelKind::Atypicality { window: Window::Y3 }),
        ModelEntry::new(ModelKind::TopicAtypicality { window: Window::Y3 }),
    ]
}

impl PipelineConfig {
    pub fn new(corpus_dir: impl Into<PathBuf>, out_dir: impl Into<PathBuf>, seed: Option<u64>) -> Self {
        PipelineConfig {
            corpus_dir: corpus_dir.into(),
            out_dir: out_dir.into(),
            modes: default_modes(),
            score_options: ScoreOptions::default(),
            models: default_models(),
            per_period: false,
            fit_options: FitOptions::default(),
            matching: MatchingOptions::default(),
            seed,
            timestamp: true,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if self.matching.enabled && !self.matching.methods.is_empty() && self.seed.is_none() {
            return Err(PipelineError::Config(
                "matching is enabled but no seed is set; pass --seed or set \"seed\"".into(),
            ));
        }
        let paths = CorpusPaths::in_dir(&self.corpus_dir);
        for p in [&paths.datasets, &paths.papers, &paths.journals] {
            if !p.is_file() {
                return Err(PipelineError::Config(format!(
                    "corpus file {} does not exist",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    /// Models to fit, per-period variants included.
    pub fn expanded_models(&self) -> Vec<ModelEntry> {
        let mut out = self.models.clone();
        if self.per_period {
            for m in &self.models {
                for era in Period::eras() {
                    let mut e = m.clone();
                    e.spec.period = Some(era);
                    out.push(e);
                }
            }
        }
        out
    }
}

/// Writes to `path` through a buffered writer, creating parent directories.
pub fn write_output(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), BoxError>,
) -> Result<(), PipelineError> {
    let io = |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io)?;
    }
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    body(&mut w).map_err(|e| PipelineError::stage("write", path.display().to_string(), e))?;
    w.flush().map_err(io)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    write_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)?;
        Ok(())
    })
}

pub fn load_stage(corpus_dir: &Path) -> Result<(Corpus, ValidationReport), PipelineError> {
    let corpus = load_corpus(&CorpusPaths::in_dir(corpus_dir))
        .map_err(|e| PipelineError::stage("ingest", corpus_dir.display().to_string(), e))?;
    let report = validate(&corpus);
    if !report.is_valid() {
        let first = &report.errors[0];
        return Err(PipelineError::stage(
            "ingest",
            format!("record {}", first.record),
            format!("{} validation errors, first: {}", report.errors.len(), first.message),
        ));
    }
    Ok((corpus, report))
}

pub fn score_stage(
    corpus: &Corpus,
    modes: &[ScoreMode],
    options: &ScoreOptions,
) -> Result<Vec<ScoreSet>, PipelineError> {
    score_corpus_modes(corpus, modes, options)
        .map_err(|e| PipelineError::stage("score", format!("{modes:?}"), e))
}

/// One fitted model with the table it was fitted on.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub entry: ModelEntry,
    pub table: FeatureTable,
    pub fit: FitResult,
}

impl FittedModel {
    pub fn name(&self) -> String {
        self.entry.spec.name()
    }
}

/// Builds the feature table for one model and fits it.
pub fn fit_model(
    corpus: &Corpus,
    scores: &ScoreTable,
    entry: &ModelEntry,
    options: &FitOptions,
) -> Result<FittedModel, PipelineError> {
    let name = entry.spec.name();
    let table = build_features(corpus, scores, &entry.spec)
        .map_err(|e| PipelineError::stage("features", name.clone(), e))?;
    let spec = ModelSpec {
        family: entry.family(),
        outcome: table.outcome_name.clone(),
        covariates: Vec::new(),
        options: *options,
    };
    let result = fit(&table, &spec).map_err(|e| PipelineError::stage("fit", name, e))?;
    Ok(FittedModel {
        entry: entry.clone(),
        table,
        fit: result,
    })
}

/// Fits every model in parallel; results keep the input order.
pub fn fit_stage(
    corpus: &Corpus,
    scores: &ScoreTable,
    models: &[ModelEntry],
    options: &FitOptions,
) -> Result<Vec<FittedModel>, PipelineError> {
    models
        .par_iter()
        .map(|entry| fit_model(corpus, scores, entry, options))
        .collect()
}

pub fn write_model(dir: &Path, m: &FittedModel) -> Result<Vec<PathBuf>, PipelineError> {
    let name = m.name();
    let paths = [
        dir.join("features").join(format!("{name}.csv")),
        dir.join("features").join(format!("{name}.meta.json")),
        dir.join("fits").join(format!("{name}.csv")),
        dir.join("fits").join(format!("{name}.json")),
    ];
    write_output(&paths[0], |w| Ok(m.table.write_csv(w)?))?;
    write_output(&paths[1], |w| {
        m.table.write_metadata(&mut *w)?;
        writeln!(w)?;
        Ok(())
    })?;
    write_output(&paths[2], |w| Ok(crate::glmfit::write_fit_csv(&m.fit, w)?))?;
    write_output(&paths[3], |w| {
        crate::glmfit::write_fit_json(&m.fit, &mut *w)?;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(paths.to_vec())
}

/// Pair list plus test results for one matching method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub method: MatchMethod,
    pub seed: u64,
    pub focal_count: usize,
    pub unmatched: usize,
    pub dropped_not_lower: usize,
    pub n_pairs: usize,
    pub evaluations: BTreeMap<String, WindowEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WindowEvaluation {
    Done(PairEvaluation),
    Skipped { skipped: String },
}

pub fn summarize_matches(report: &MatchReport, windows: &[Window]) -> MatchSummary {
    let evaluations = windows
        .iter()
        .map(|&w| {
            let e = match evaluate_pairs(&report.pairs, w) {
                Ok(e) => WindowEvaluation::Done(e),
                Err(e) => WindowEvaluation::Skipped {
                    skipped: e.to_string(),
                },
            };
            (w.to_string(), e)
        })
        .collect();
    MatchSummary {
        method: report.method,
        seed: report.seed,
        focal_count: report.focal_count,
        unmatched: report.unmatched,
        dropped_not_lower: report.dropped_not_lower,
        n_pairs: report.pairs.len(),
        evaluations,
    }
}

pub fn match_stage(
    corpus: &Corpus,
    dataset_scores: Option<&ScoreSet>,
    options: &MatchingOptions,
    seed: u64,
) -> Result<Vec<(MatchReport, MatchSummary)>, PipelineError> {
    options
        .methods
        .iter()
        .map(|&method| {
            let report = match method {
                MatchMethod::Count => match_by_count_with(corpus, seed, options.candidate_rule),
                MatchMethod::Atypicality => {
                    let scores = dataset_scores.ok_or_else(|| {
                        PipelineError::Config("atypicality matching needs dataset scores".into())
                    })?;
                    match_by_atypicality(corpus, scores, seed)
                }
            };
            let summary = summarize_matches(&report, &options.windows);
            Ok((report, summary))
        })
        .collect()
}

pub fn write_matches(
    dir: &Path,
    report: &MatchReport,
    summary: &MatchSummary,
) -> Result<Vec<PathBuf>, PipelineError> {
    let tag = match report.method {
        MatchMethod::Count => "count",
        MatchMethod::Atypicality => "atypicality",
    };
    let pairs = dir.join("matching").join(format!("{tag}_pairs.csv"));
    let sum = dir.join("matching").join(format!("{tag}_summary.json"));
    write_output(&pairs, |w| Ok(report.write_pairs_csv(w)?))?;
    write_json(&sum, summary)?;
    Ok(vec![pairs, sum])
}

/// One point of a plot-ready effect series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub model: String,
    pub period: String,
    pub term: String,
    pub family: String,
    pub coef: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Percentage change for log-link models; `None` for OLS.
    pub effect_pct: Option<f64>,
    pub effect_pct_low: Option<f64>,
    pub effect_pct_high: Option<f64>,
    pub p_value: f64,
    pub n_obs: usize,
}

pub fn effect_series(models: &[FittedModel]) -> Vec<SeriesPoint> {
    models
        .iter()
        .filter_map(|m| {
            let term = m.fit.term(m.entry.spec.model.focal_term())?;
            let pct = |v: f64| match m.fit.family {
                Family::NegativeBinomial { .. } | Family::Logistic => Some(effect_pct(v).percent),
                Family::Ols => None,
            };
            Some(SeriesPoint {
                model: m.entry.spec.model.name(),
                period: m
                    .entry
                    .spec
                    .period
                    .map_or_else(|| "all".to_string(), |p| p.to_string()),
                term: term.name.clone(),
                family: m.fit.family.name().to_string(),
                coef: term.coef,
                ci_low: term.ci_low,
                ci_high: term.ci_high,
                effect_pct: pct(term.coef),
                effect_pct_low: pct(term.ci_low),
                effect_pct_high: pct(term.ci_high),
                p_value: term.p_value,
                n_obs: m.fit.n_obs,
            })
        })
        .collect()
}

/// Defaults in effect for a run, recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defaults {
    pub log_base: String,
    pub log_offsets: BTreeMap<String, f64>,
    pub year_bins: String,
    pub discipline_encoding: String,
    pub zscore: String,
    pub hit_flag: String,
    pub pair_convention: String,
    pub leave_one_out: bool,
    pub zero_column_similarity: String,
    pub dispersion: String,
    pub covariance: String,
    pub convergence: String,
    pub confidence_intervals: String,
    pub count_matching: String,
    pub atypicality_matching: String,
    pub ratio_convention: String,
    pub sign_test: String,
}

fn defaults(config: &PipelineConfig) -> Defaults {
    let fo = &config.fit_options;
    Defaults {
        log_base: "e".into(),
        log_offsets: BTreeMap::from([
            ("author recognition".into(), LOG_OFFSET),
            ("journal impact".into(), LOG_OFFSET),
            ("author count".into(), 0.0),
            ("dataset count".into(), 0.0),
            ("dataset use frequency".into(), 0.0),
        ]),
        year_bins: "right-closed five-year bins; earliest populated bin is the reference".into(),
        discipline_encoding: "continuous weights; all-zero columns dropped".into(),
        zscore: "sample sd (n-1) over the rows of each feature table".into(),
        hit_flag: "3-year citations strictly above the nearest-rank 95th percentile".into(),
        pair_convention: format!("{:?}", config.score_options.convention),
        leave_one_out: config.score_options.leave_one_out,
        zero_column_similarity: "0 for any pair involving an empty column".into(),
        dispersion: "fixed: 1, 0.25 for full-sample topic models, unless overridden".into(),
        covariance: match fo.covariance {
            Covariance::Observed => "observed information".into(),
            Covariance::Expected => "expected information".into(),
        },
        convergence: format!(
            "relative log-likelihood change < {:e} and score norm <= {:e} (1 + |beta|), at most {} iterations",
            fo.rel_tol, fo.grad_tol, fo.max_iter
        ),
        confidence_intervals: "coef +/- 1.96 se (normal) for count and logistic models, Student-t for OLS".into(),
        count_matching: format!(
            "{:?} candidates, nearest year, seeded uniform tie-break, candidates reusable",
            config.matching.candidate_rule
        ),
        atypicality_matching: "focal: exactly two datasets and score strictly above the nearest-rank 90th percentile; match: least atypical multi-dataset paper sharing a dataset; matches not strictly lower dropped".into(),
        ratio_convention: "focal/matched; 0/0 counts as 1; x/0 is infinite, kept for median and sign test, excluded from mean".into(),
        sign_test: "exact two-sided binomial, ties dropped".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestModel {
    pub name: String,
    pub family: Family,
    pub n_obs: usize,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_unix: Option<u64>,
    pub corpus_sha256: String,
    pub config: PipelineConfig,
    pub defaults: Defaults,
    pub validation_warnings: usize,
    pub models: Vec<ManifestModel>,
    /// Generated era variants with no rows, with the reason.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub skipped_models: BTreeMap<String, String>,
    /// Output file (relative to the bundle root) → SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// Runs every stage and writes the report bundle to `config.out_dir`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    config.check()?;
    let out = &config.out_dir;
    let (corpus, validation) = load_stage(&config.corpus_dir)?;
    let models = config.expanded_models();

    let mut modes: Vec<ScoreMode> = config.modes.iter().map(|&m| ScoreMode::from_index_mode(m)).collect();
    for m in &models {
        modes.extend(m.spec.required_scores());
    }
    if config.matching.enabled && config.matching.methods.contains(&MatchMethod::Atypicality) {
        modes.push(ScoreMode::Dataset);
    }
    modes.sort();
    modes.dedup();

    let sets = score_stage(&corpus, &modes, &config.score_options)?;
    let mut written: Vec<PathBuf> = Vec::new();
    for set in &sets {
        let path = out.join("scores").join(format!("{}.csv", set.mode.name()));
        write_output(&path, |w| Ok(set.write_csv(w)?))?;
        written.push(path);
    }
    let score_table = ScoreTable::from(sets.as_slice());

    // generated era variants whose population is empty are skipped, not fatal
    let attempts: Vec<Result<FittedModel, PipelineError>> = models
        .par_iter()
        .map(|entry| fit_model(&corpus, &score_table, entry, &config.fit_options))
        .collect();
    let mut fitted = Vec::new();
    let mut skipped_models = BTreeMap::new();
    for (k, (entry, attempt)) in models.iter().zip(attempts).enumerate() {
        match attempt {
            Ok(m) => fitted.push(m),
            Err(PipelineError::Stage { ref source, .. })
                if k >= config.models.len()
                    && matches!(
                        source.downcast_ref::<FeatureError>(),
                        Some(FeatureError::EmptyPopulation { .. })
                    ) =>
            {
                skipped_models.insert(entry.spec.name(), source.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    for m in &fitted {
        written.extend(write_model(out, m)?);
    }

    if config.matching.enabled && !config.matching.methods.is_empty() {
        let seed = config.seed.expect("checked above");
        let dataset_scores = sets.iter().find(|s| s.mode == ScoreMode::Dataset);
        for (report, summary) in match_stage(&corpus, dataset_scores, &config.matching, seed)? {
            written.extend(write_matches(out, &report, &summary)?);
        }
    }

    let series = out.join("report").join("series.json");
    write_json(&series, &effect_series(&fitted))?;
    written.push(series);

    let mut outputs = BTreeMap::new();
    for path in &written {
        let bytes = fs::read(path).map_err(|source| PipelineError::Io {
            path: path.clone(),
            source,
        })?;
        let rel = path.strip_prefix(out).unwrap_or(path);
        outputs.insert(rel.to_string_lossy().replace('\\', "/"), hex::encode(Sha256::digest(&bytes)));
    }
    let manifest = Manifest {
        tool: "datacomb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        generated_unix: config.timestamp.then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        }),
        corpus_sha256: hex::encode(corpus.content_hash()),
        config: config.clone(),
        defaults: defaults(config),
        validation_warnings: validation.warnings.len(),
        models: fitted
            .iter()
            .map(|m| ManifestModel {
                name: m.name(),
                family: m.fit.family,
                n_obs: m.fit.n_obs,
                converged: m.fit.converged,
                iterations: m.fit.iterations,
            })
            .collect(),
        skipped_models,
        outputs,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}
