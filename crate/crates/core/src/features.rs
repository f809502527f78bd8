//! Control variables and design matrices for the regression models.
//!
//! A [`FeatureSpec`] names one model (outcome, population, covariate set) and
//! [`build_features`] turns a corpus plus atypicality scores into a
//! [`FeatureTable`]: one row per paper in the population, an explicit
//! `Intercept` column, and every transform applied. Rows missing a required
//! field are dropped and counted, never imputed.
//!
//! Transforms use the natural log. `+0.01` offsets are applied to author
//! recognition and journal impact only; counts (authors, datasets, dataset
//! use frequency) are at least 1 and logged directly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Channel, Corpus, PaperRecord, Window};
use crate::glmfit::Family;
use crate::metrics::{zscore_params, MetricError, ScoreMode, ScoreSet};

/// Offset added before logging author recognition and journal impact.
pub const LOG_OFFSET: f64 = 0.01;

pub const INTERCEPT: &str = "Intercept";
pub const MULTI_DATASET: &str = "binary_UsingMultipleDataset";
pub const DATASET_COUNT: &str = "NumDatasets_original";
pub const DATASET_COUNT_LOG: &str = "NumDatasets_log";
pub const ATYPICALITY: &str = "Atypicality_of_datasets";
pub const TOPIC_ATYPICALITY: &str = "Topic_atypicality";
pub const PAPER_NOVELTY: &str = "Paper_novelty";
pub const USE_FREQUENCY_LOG: &str = "Data_use_frequency_log";
pub const AUTHORS_LOG: &str = "NumAuthor_log";
pub const RECOGNITION_LOG: &str = "AuthorExperience_log";
pub const IMPACT_LOG: &str = "ImpactFactor_log";
pub const HIT: &str = "hit_top5pct";

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("year {year} is outside the binned range ({first}, {last}]")]
    YearOutOfRange { year: i32, first: i32, last: i32 },
    #[error("year bin edges must be strictly increasing with at least two bins")]
    BadEdges,
    #[error("{model}: population is empty after filtering ({population} candidates, {dropped} dropped)")]
    EmptyPopulation {
        model: String,
        population: usize,
        dropped: usize,
    },
    #[error("hit flag needs at least 20 papers with 3-year citations, found {0}")]
    PercentileUndefined(usize),
    #[error("{model}: no {mode:?} scores supplied")]
    MissingScores { model: String, mode: ScoreMode },
    #[error("{model}: cannot z-score {column}: {source}")]
    Normalization {
        model: String,
        column: String,
        #[source]
        source: MetricError,
    },
    #[error("feature table csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature table metadata: {0}")]
    Json(#[from] serde_json::Error),
}

/// Right-closed five-year bins, e.g. `(1974, 1979]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearBins {
    edges: Vec<i32>,
}

impl Default for YearBins {
    /// `(1930, 1974]` followed by five-year bins up to `(2014, 2019]`.
    fn default() -> Self {
        let mut edges = vec![1930];
        edges.extend((1974..=2019).step_by(5));
        YearBins { edges }
    }
}

impl YearBins {
    pub fn new(edges: Vec<i32>) -> Result<Self, FeatureError> {
        if edges.len() < 3 || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FeatureError::BadEdges);
        }
        Ok(YearBins { edges })
    }

    pub fn edges(&self) -> &[i32] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn bin_of(&self, year: i32) -> Result<usize, FeatureError> {
        let (first, last) = (self.edges[0], *self.edges.last().unwrap());
        if year <= first || year > last {
            return Err(FeatureError::YearOutOfRange { year, first, last });
        }
        Ok(self.edges.partition_point(|&e| e < year) - 1)
    }

    pub fn label(&self, bin: usize) -> String {
        format!("({}, {}]", self.edges[bin], self.edges[bin + 1])
    }

    pub fn column_name(&self, bin: usize) -> String {
        format!("Year_bin[T.{}]", self.label(bin))
    }
}

/// Dummy encoding of `year`: one entry per bin after the first, which is the
/// reference category.
pub fn year_bins(year: i32, bins: &YearBins) -> Result<Vec<f64>, FeatureError> {
    let b = bins.bin_of(year)?;
    let mut dummies = vec![0.0; bins.n_bins() - 1];
    if b > 0 {
        dummies[b - 1] = 1.0;
    }
    Ok(dummies)
}

/// Top-5% hit flag over every paper with a 3-year citation count.
///
/// A paper is a hit when its count strictly exceeds the nearest-rank 95th
/// percentile, so ties at the threshold are never flagged.
pub fn hit_flag(corpus: &Corpus) -> Result<BTreeMap<String, u8>, FeatureError> {
    let counted: Vec<(&str, u64)> = corpus
        .papers()
        .iter()
        .filter_map(|p| p.citations.y3.map(|c| (p.id.as_str(), c)))
        .collect();
    if counted.len() < 20 {
        return Err(FeatureError::PercentileUndefined(counted.len()));
    }
    let mut sorted: Vec<u64> = counted.iter().map(|&(_, c)| c).collect();
    sorted.sort_unstable();
    let threshold = nearest_rank(&sorted, 0.95);
    Ok(counted
        .into_iter()
        .map(|(id, c)| (id.to_string(), u8::from(c > threshold)))
        .collect())
}

/// Nearest-rank percentile of an ascending slice: the value at rank `ceil(q n)`.
pub fn nearest_rank<T: Copy>(sorted: &[T], q: f64) -> T {
    let n = sorted.len();
    // 1e-9 guards q*n landing a hair above an integer, e.g. 0.95 * 100
    let rank = ((q * n as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[rank.min(n) - 1]
}

/// Half-open publication-year window `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: Option<i32>,
    pub end: Option<i32>,
}

impl Period {
    pub fn contains(&self, year: i32) -> bool {
        self.start.is_none_or(|s| year >= s) && self.end.is_none_or(|e| year < e)
    }

    /// The four periods used for per-era robustness fits.
    pub fn eras() -> [Period; 4] {
        [
            Period { start: None, end: Some(1990) },
            Period { start: Some(1990), end: Some(2000) },
            Period { start: Some(2000), end: Some(2010) },
            Period { start: Some(2010), end: Some(2020) },
        ]
    }
}

impl fmt::Display for Period {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.start, self.end) {
            (None, None) => write!(f, "all"),
            (None, Some(e)) => write!(f, "before{e}"),
            (Some(s), None) => write!(f, "from{s}"),
            (Some(s), Some(e)) => write!(f, "{s}-{e}"),
        }
    }
}

/// The regression designs the crate knows how to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelKind {
    /// Citations on the multiple-dataset flag plus controls, all papers.
    DataCombination { window: Window },
    /// Citations on the raw dataset count plus controls, all papers.
    DatasetCount { window: Window },
    /// Citations on dataset atypicality, papers with two or more datasets.
    Atypicality { window: Window },
    /// Online mentions on dataset atypicality, papers published after 2010.
    AtypicalityAltmetric { channel: Channel },
    /// Top-5% hit status on dataset atypicality (logistic).
    AtypicalityHit,
    /// Citations on dataset and topic atypicality, papers with two or more topics.
    TopicAtypicality { window: Window },
    /// Top-5% hit status on dataset and topic atypicality (logistic).
    TopicHit,
    /// Multiple-dataset flag on team size (logistic).
    TeamSizeDataCombination,
    /// Multiple-dataset flag on author recognition (logistic).
    TeamExperienceDataCombination,
    /// Dataset atypicality on team size (OLS).
    TeamSizeAtypicality,
    /// Dataset atypicality on author recognition (OLS).
    TeamExperienceAtypicality,
    /// Citations on the multiple-dataset flag and dataset atypicality jointly;
    /// atypicality is z-scored among multi-dataset papers and 0 otherwise.
    DataCombinationAtypicality { window: Window },
}

impl ModelKind {
    pub fn name(&self) -> String {
        match self {
            ModelKind::DataCombination { window } => format!("datacomb_{window}"),
            ModelKind::DatasetCount { window } => format!("dataset_count_{window}"),
            ModelKind::Atypicality { window } => format!("atypicality_{window}"),
            ModelKind::AtypicalityAltmetric { channel } => format!("atypicality_{}", channel.name()),
            ModelKind::AtypicalityHit => "atypicality_hit".into(),
            ModelKind::TopicAtypicality { window } => format!("topic_{window}"),
            ModelKind::TopicHit => "topic_hit".into(),
            ModelKind::TeamSizeDataCombination => "teamsize_datacomb".into(),
            ModelKind::TeamExperienceDataCombination => "teamexp_datacomb".into(),
            ModelKind::TeamSizeAtypicality => "teamsize_atypicality".into(),
            ModelKind::TeamExperienceAtypicality => "teamexp_atypicality".into(),
            ModelKind::DataCombinationAtypicality { window } => {
                format!("datacomb_atypicality_{window}")
            }
        }
    }

    /// The same design on another citation window; models without a window
    /// are returned unchanged.
    pub fn with_window(self, w: Window) -> Self {
        use ModelKind::*;
        match self {
            DataCombination { .. } => DataCombination { window: w },
            DatasetCount { .. } => DatasetCount { window: w },
            Atypicality { .. } => Atypicality { window: w },
            TopicAtypicality { .. } => TopicAtypicality { window: w },
            DataCombinationAtypicality { .. } => DataCombinationAtypicality { window: w },
            other => other,
        }
    }

    /// The coefficient the model is about.
    pub fn focal_term(&self) -> &'static str {
        match self {
            ModelKind::DataCombination { .. } => MULTI_DATASET,
            ModelKind::DatasetCount { .. } => DATASET_COUNT,
            ModelKind::Atypicality { .. }
            | ModelKind::AtypicalityAltmetric { .. }
            | ModelKind::AtypicalityHit
            | ModelKind::DataCombinationAtypicality { .. } => ATYPICALITY,
            ModelKind::TopicAtypicality { .. } | ModelKind::TopicHit => TOPIC_ATYPICALITY,
            ModelKind::TeamSizeDataCombination | ModelKind::TeamSizeAtypicality => AUTHORS_LOG,
            ModelKind::TeamExperienceDataCombination | ModelKind::TeamExperienceAtypicality => {
                RECOGNITION_LOG
            }
        }
    }

    fn needs(&self) -> Needs {
        use ModelKind::*;
        let full = Needs {
            bins: true,
            disciplines: true,
            use_frequency: true,
            authors: true,
            recognition: true,
            impact: true,
            ..Needs::default()
        };
        match self {
            DataCombination { .. } => Needs {
                multi_flag: true,
                ..full
            },
            DatasetCount { .. } => Needs {
                dataset_count: true,
                ..full
            },
            Atypicality { .. } | AtypicalityAltmetric { .. } | AtypicalityHit => Needs {
                atypicality: true,
                dataset_count_log: true,
                novelty: true,
                ..full
            },
            TopicAtypicality { .. } | TopicHit => Needs {
                atypicality: true,
                topic: true,
                dataset_count_log: true,
                novelty: true,
                ..full
            },
            TeamSizeDataCombination => Needs {
                authors: true,
                use_frequency: true,
                impact: true,
                ..Needs::default()
            },
            TeamExperienceDataCombination => Needs {
                recognition: true,
                use_frequency: true,
                impact: true,
                ..Needs::default()
            },
            TeamSizeAtypicality => Needs {
                authors: true,
                dataset_count_log: true,
                use_frequency: true,
                impact: true,
                ..Needs::default()
            },
            TeamExperienceAtypicality => Needs {
                recognition: true,
                dataset_count_log: true,
                use_frequency: true,
                impact: true,
                ..Needs::default()
            },
            DataCombinationAtypicality { .. } => Needs {
                multi_flag: true,
                atypicality: true,
                ..full
            },
        }
    }

    fn outcome(&self) -> Outcome {
        use ModelKind::*;
        match *self {
            DataCombination { window }
            | DatasetCount { window }
            | Atypicality { window }
            | TopicAtypicality { window }
            | DataCombinationAtypicality { window } => Outcome::Citations(window),
            AtypicalityAltmetric { channel } => Outcome::Mentions(channel),
            AtypicalityHit | TopicHit => Outcome::Hit,
            TeamSizeDataCombination | TeamExperienceDataCombination => Outcome::MultiDataset,
            TeamSizeAtypicality | TeamExperienceAtypicality => Outcome::Atypicality,
        }
    }

    fn population(&self) -> PopulationRule {
        use ModelKind::*;
        match self {
            DataCombination { .. }
            | DatasetCount { .. }
            | TeamSizeDataCombination
            | TeamExperienceDataCombination
            | DataCombinationAtypicality { .. } => PopulationRule::All,
            Atypicality { .. } | AtypicalityHit | TeamSizeAtypicality | TeamExperienceAtypicality => {
                PopulationRule::MultiDataset
            }
            AtypicalityAltmetric { .. } => PopulationRule::MultiDatasetAfter2010,
            TopicAtypicality { .. } | TopicHit => PopulationRule::MultiTopic,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Needs {
    bins: bool,
    disciplines: bool,
    multi_flag: bool,
    dataset_count: bool,
    dataset_count_log: bool,
    atypicality: bool,
    topic: bool,
    novelty: bool,
    use_frequency: bool,
    authors: bool,
    recognition: bool,
    impact: bool,
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Citations(Window),
    Mentions(Channel),
    Hit,
    MultiDataset,
    Atypicality,
}

impl Outcome {
    fn name(&self) -> String {
        match self {
            Outcome::Citations(w) => format!("citations_{w}"),
            Outcome::Mentions(c) => format!("mentions_{}", c.name()),
            Outcome::Hit => HIT.into(),
            Outcome::MultiDataset => MULTI_DATASET.into(),
            Outcome::Atypicality => ATYPICALITY.into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum PopulationRule {
    All,
    MultiDataset,
    MultiDatasetAfter2010,
    MultiTopic,
}

impl PopulationRule {
    fn describe(&self) -> &'static str {
        match self {
            PopulationRule::All => "all papers",
            PopulationRule::MultiDataset => "papers using at least two datasets",
            PopulationRule::MultiDatasetAfter2010 => {
                "papers using at least two datasets, published after 2010"
            }
            PopulationRule::MultiTopic => {
                "papers using at least two datasets whose datasets carry at least two topic tags"
            }
        }
    }

    fn admits(&self, corpus: &Corpus, p: &PaperRecord) -> bool {
        match self {
            PopulationRule::All => true,
            PopulationRule::MultiDataset => p.n_datasets() >= 2,
            PopulationRule::MultiDatasetAfter2010 => p.n_datasets() >= 2 && p.year > 2010,
            PopulationRule::MultiTopic => {
                p.n_datasets() >= 2 && corpus.topic_union(p).len() >= 2
            }
        }
    }
}

/// One model's design: which model, optional era restriction, year binning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    #[serde(flatten)]
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Period>,
    #[serde(default)]
    pub year_bins: YearBins,
}

impl FeatureSpec {
    pub fn new(model: ModelKind) -> Self {
        FeatureSpec {
            model,
            period: None,
            year_bins: YearBins::default(),
        }
    }

    pub fn in_period(mut self, period: Period) -> Self {
        self.period = Some(period);
        self
    }

    pub fn name(&self) -> String {
        match &self.period {
            Some(p) => format!("{}_{}", self.model.name(), p),
            None => self.model.name(),
        }
    }

    /// Score modes [`build_features`] will look up for this design.
    pub fn required_scores(&self) -> Vec<ScoreMode> {
        let needs = self.model.needs();
        let mut modes = Vec::new();
        if needs.atypicality || matches!(self.model.outcome(), Outcome::Atypicality) {
            modes.push(ScoreMode::Dataset);
        }
        if needs.topic {
            modes.push(ScoreMode::Topic);
        }
        if needs.novelty {
            modes.push(ScoreMode::PaperNovelty);
        }
        modes
    }

    /// Model family this design is fitted with. Full-sample topic models use
    /// dispersion 0.25, every other count model 1.
    pub fn default_family(&self) -> Family {
        match self.model.outcome() {
            Outcome::Citations(_) | Outcome::Mentions(_) => {
                let alpha = match self.model {
                    ModelKind::TopicAtypicality { .. } if self.period.is_none() => 0.25,
                    _ => 1.0,
                };
                Family::NegativeBinomial { alpha }
            }
            Outcome::Hit | Outcome::MultiDataset => Family::Logistic,
            Outcome::Atypicality => Family::Ols,
        }
    }
}

/// Raw atypicality scores by paper id, per score mode.
#[derive(Debug, Clone, Default)]
pub struct ScoreTable {
    by_mode: HashMap<ScoreMode, HashMap<String, f64>>,
}

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_set(&mut self, set: &ScoreSet) {
        let m = self.by_mode.entry(set.mode).or_default();
        for s in &set.scores {
            m.insert(s.paper_id.clone(), s.raw);
        }
    }

    pub fn insert(&mut self, mode: ScoreMode, paper_id: &str, raw: f64) {
        self.by_mode
            .entry(mode)
            .or_default()
            .insert(paper_id.to_string(), raw);
    }

    pub fn has_mode(&self, mode: ScoreMode) -> bool {
        self.by_mode.contains_key(&mode)
    }

    pub fn get(&self, mode: ScoreMode, paper_id: &str) -> Option<f64> {
        self.by_mode.get(&mode)?.get(paper_id).copied()
    }
}

impl From<&[ScoreSet]> for ScoreTable {
    fn from(sets: &[ScoreSet]) -> Self {
        let mut t = ScoreTable::new();
        for s in sets {
            t.insert_set(s);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZscoreParams {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Everything needed to reproduce or audit a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMetadata {
    pub model: String,
    pub spec: FeatureSpec,
    pub population: String,
    pub population_count: usize,
    pub dropped_count: usize,
    pub dropped_reasons: BTreeMap<String, usize>,
    pub reference_categories: BTreeMap<String, String>,
    pub omitted_columns: Vec<String>,
    pub log_base: String,
    pub offsets: BTreeMap<String, f64>,
    pub zscore_population: String,
    pub zscore: BTreeMap<String, ZscoreParams>,
}

/// Named design matrix, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub row_ids: Vec<String>,
    pub outcome_name: String,
    pub outcome: Vec<f64>,
    pub column_names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub metadata: TableMetadata,
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.row_ids.len()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .map(|i| self.columns[i].as_slice())
    }

    /// CSV with header `paper_id,<outcome>,<columns..>`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), FeatureError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["paper_id".to_string(), self.outcome_name.clone()];
        header.extend(self.column_names.iter().cloned());
        out.write_record(&header)?;
        for (r, id) in self.row_ids.iter().enumerate() {
            let mut rec = vec![id.clone(), self.outcome[r].to_string()];
            rec.extend(self.columns.iter().map(|c| c[r].to_string()));
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn write_metadata<W: Write>(&self, w: W) -> Result<(), FeatureError> {
        serde_json::to_writer_pretty(w, &self.metadata)?;
        Ok(())
    }
}

/// Intermediate row before transforms that depend on the whole population.
struct RawRow {
    id: String,
    outcome: f64,
    bin: Option<usize>,
    values: Vec<f64>,
    atypicality: Option<f64>,
    topic: Option<f64>,
    novelty: Option<f64>,
    multi: bool,
    disciplines: BTreeMap<String, f64>,
}

pub fn build_features(
    corpus: &Corpus,
    scores: &ScoreTable,
    spec: &FeatureSpec,
) -> Result<FeatureTable, FeatureError> {
    let model = spec.name();
    let needs = spec.model.needs();
    let outcome = spec.model.outcome();
    let rule = spec.model.population();

    for mode in spec.required_scores() {
        if !scores.has_mode(mode) {
            return Err(FeatureError::MissingScores {
                model: model.clone(),
                mode,
            });
        }
    }

    let hits = match outcome {
        Outcome::Hit => Some(hit_flag(corpus)?),
        _ => None,
    };
    let usage = corpus.dataset_usage_counts();

    let mut population_count = 0;
    let mut dropped: BTreeMap<String, usize> = BTreeMap::new();
    let mut rows: Vec<RawRow> = Vec::new();

    for p in corpus.papers() {
        if !rule.admits(corpus, p) || !spec.period.is_none_or(|per| per.contains(p.year)) {
            continue;
        }
        population_count += 1;
        match raw_row(corpus, scores, p, needs, outcome, hits.as_ref(), &usage, spec) {
            Ok(row) => rows.push(row),
            Err(reason) => *dropped.entry(reason.to_string()).or_default() += 1,
        }
    }
    let dropped_count: usize = dropped.values().sum();
    if rows.is_empty() {
        return Err(FeatureError::EmptyPopulation {
            model,
            population: population_count,
            dropped: dropped_count,
        });
    }

    let mut column_names = vec![INTERCEPT.to_string()];
    let mut columns = vec![vec![1.0; rows.len()]];
    let mut reference_categories = BTreeMap::new();
    let mut omitted = Vec::new();

    if needs.bins {
        let present: BTreeSet<usize> = rows.iter().filter_map(|r| r.bin).collect();
        let mut present = present.into_iter();
        if let Some(reference) = present.next() {
            reference_categories.insert("Year_bin".into(), spec.year_bins.label(reference));
        }
        for b in present {
            column_names.push(spec.year_bins.column_name(b));
            columns.push(rows.iter().map(|r| f64::from(r.bin == Some(b))).collect());
        }
        for b in 0..spec.year_bins.n_bins() {
            if !rows.iter().any(|r| r.bin == Some(b)) {
                omitted.push(spec.year_bins.column_name(b));
            }
        }
    }

    let mut zscores = BTreeMap::new();
    let mut zcolumn = |name: &str,
                       values: Vec<Option<f64>>,
                       column_names: &mut Vec<String>,
                       columns: &mut Vec<Vec<f64>>|
     -> Result<(), FeatureError> {
        let present: Vec<f64> = values.iter().flatten().copied().collect();
        let (mean, sd) = zscore_params(&present).map_err(|source| FeatureError::Normalization {
            model: model.clone(),
            column: name.to_string(),
            source,
        })?;
        zscores.insert(
            name.to_string(),
            ZscoreParams {
                mean,
                sd,
                n: present.len(),
            },
        );
        column_names.push(name.to_string());
        columns.push(
            values
                .into_iter()
                .map(|v| v.map_or(0.0, |x| (x - mean) / sd))
                .collect(),
        );
        Ok(())
    };

    // order mirrors the published tables: focal terms, then controls
    let fixed = fixed_column_names(needs);
    let mut fixed_iter = fixed.iter().enumerate();
    if needs.multi_flag {
        let (k, name) = fixed_iter.next().unwrap();
        column_names.push(name.to_string());
        columns.push(rows.iter().map(|r| r.values[k]).collect());
    }
    if needs.dataset_count {
        let (k, name) = fixed_iter.next().unwrap();
        column_names.push(name.to_string());
        columns.push(rows.iter().map(|r| r.values[k]).collect());
    }
    if needs.atypicality {
        let values = rows
            .iter()
            .map(|r| if r.multi { r.atypicality } else { None })
            .collect();
        zcolumn(ATYPICALITY, values, &mut column_names, &mut columns)?;
    }
    if needs.topic {
        let values = rows.iter().map(|r| r.topic).collect();
        zcolumn(TOPIC_ATYPICALITY, values, &mut column_names, &mut columns)?;
    }
    for (k, name) in fixed_iter.by_ref() {
        if *name == USE_FREQUENCY_LOG && needs.novelty {
            let values = rows.iter().map(|r| r.novelty).collect();
            zcolumn(PAPER_NOVELTY, values, &mut column_names, &mut columns)?;
        }
        column_names.push(name.to_string());
        columns.push(rows.iter().map(|r| r.values[k]).collect());
    }

    if needs.disciplines {
        let names: BTreeSet<&String> = rows.iter().flat_map(|r| r.disciplines.keys()).collect();
        for name in names {
            let col: Vec<f64> = rows
                .iter()
                .map(|r| r.disciplines.get(name).copied().unwrap_or(0.0))
                .collect();
            if col.iter().all(|&v| v == 0.0) {
                omitted.push(name.clone());
            } else {
                column_names.push(name.clone());
                columns.push(col);
            }
        }
    }

    let (outcome_values, outcome_name) = if let Outcome::Atypicality = outcome {
        let raw: Vec<f64> = rows.iter().map(|r| r.outcome).collect();
        let (mean, sd) = zscore_params(&raw).map_err(|source| FeatureError::Normalization {
            model: model.clone(),
            column: ATYPICALITY.into(),
            source,
        })?;
        zscores.insert(
            format!("{ATYPICALITY} (outcome)"),
            ZscoreParams {
                mean,
                sd,
                n: raw.len(),
            },
        );
        (
            raw.iter().map(|x| (x - mean) / sd).collect(),
            outcome.name(),
        )
    } else {
        (rows.iter().map(|r| r.outcome).collect(), outcome.name())
    };

    let mut offsets = BTreeMap::new();
    if needs.recognition {
        offsets.insert(RECOGNITION_LOG.to_string(), LOG_OFFSET);
    }
    if needs.impact {
        offsets.insert(IMPACT_LOG.to_string(), LOG_OFFSET);
    }

    let metadata = TableMetadata {
        model: model.clone(),
        spec: spec.clone(),
        population: rule.describe().to_string(),
        population_count,
        dropped_count,
        dropped_reasons: dropped,
        reference_categories,
        omitted_columns: omitted,
        log_base: "e".into(),
        offsets,
        zscore_population: "rows of this table".into(),
        zscore: zscores,
    };
    Ok(FeatureTable {
        row_ids: rows.into_iter().map(|r| r.id).collect(),
        outcome_name,
        outcome: outcome_values,
        column_names,
        columns,
        metadata,
    })
}

fn fixed_column_names(needs: Needs) -> Vec<&'static str> {
    let mut names = Vec::new();
    if needs.multi_flag {
        names.push(MULTI_DATASET);
    }
    if needs.dataset_count {
        names.push(DATASET_COUNT);
    }
    if needs.dataset_count_log {
        names.push(DATASET_COUNT_LOG);
    }
    if needs.use_frequency {
        names.push(USE_FREQUENCY_LOG);
    }
    if needs.authors {
        names.push(AUTHORS_LOG);
    }
    if needs.recognition {
        names.push(RECOGNITION_LOG);
    }
    if needs.impact {
        names.push(IMPACT_LOG);
    }
    names
}

#[allow(clippy::too_many_arguments)]
fn raw_row(
    corpus: &Corpus,
    scores: &ScoreTable,
    p: &PaperRecord,
    needs: Needs,
    outcome: Outcome,
    hits: Option<&BTreeMap<String, u8>>,
    usage: &[usize],
    spec: &FeatureSpec,
) -> Result<RawRow, &'static str> {
    let n_datasets = p.n_datasets();
    if n_datasets == 0 {
        return Err("no datasets");
    }
    let outcome_value = match outcome {
        Outcome::Citations(w) => p.citations.get(w).ok_or("outcome window not observed")? as f64,
        Outcome::Mentions(c) => p.altmetric.ok_or("no altmetric record")?.get(c) as f64,
        Outcome::Hit => f64::from(
            *hits
                .and_then(|h| h.get(&p.id))
                .ok_or("no 3-year citations for hit flag")?,
        ),
        Outcome::MultiDataset => f64::from(n_datasets >= 2),
        Outcome::Atypicality => scores
            .get(ScoreMode::Dataset, &p.id)
            .ok_or("no dataset atypicality score")?,
    };

    let bin = if needs.bins {
        Some(spec.year_bins.bin_of(p.year).map_err(|_| "year outside bins")?)
    } else {
        None
    };

    let mut values = Vec::new();
    if needs.multi_flag {
        values.push(f64::from(n_datasets >= 2));
    }
    if needs.dataset_count {
        values.push(n_datasets as f64);
    }
    if needs.dataset_count_log {
        values.push((n_datasets as f64).ln());
    }
    if needs.use_frequency {
        let mut total = 0usize;
        for d in &p.dataset_ids {
            total += corpus.dataset_index(d).map(|i| usage[i]).ok_or("unknown dataset")?;
        }
        values.push((total as f64 / n_datasets as f64).ln());
    }
    if needs.authors {
        if p.author_ids.is_empty() {
            return Err("no authors");
        }
        values.push((p.author_ids.len() as f64).ln());
    }
    if needs.recognition {
        values.push((p.author_mean_citations + LOG_OFFSET).ln());
    }
    if needs.impact {
        let impact = corpus.impact_of(p).ok_or("no journal impact")?;
        values.push((impact + LOG_OFFSET).ln());
    }

    let multi = n_datasets >= 2;
    let atypicality = if needs.atypicality && multi {
        Some(
            scores
                .get(ScoreMode::Dataset, &p.id)
                .ok_or("no dataset atypicality score")?,
        )
    } else {
        None
    };
    let topic = if needs.topic {
        Some(
            scores
                .get(ScoreMode::Topic, &p.id)
                .ok_or("no topic atypicality score")?,
        )
    } else {
        None
    };
    let novelty = if needs.novelty {
        Some(
            scores
                .get(ScoreMode::PaperNovelty, &p.id)
                .ok_or("no paper novelty score")?,
        )
    } else {
        None
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err("non-finite covariate");
    }

    Ok(RawRow {
        id: p.id.clone(),
        outcome: outcome_value,
        bin,
        values,
        atypicality,
        topic,
        novelty,
        multi,
        disciplines: if needs.disciplines {
            p.discipline_weights.clone()
        } else {
            BTreeMap::new()
        },
    })
}
