//! Rao-Stirling atypicality scores over dataset, topic and journal combinations.
//!
//! Every score has the same shape,
//!
//! ```text
//! raw = 1 - Σ_i Σ_j D(i, j) · P_i · P_j
//! ```
//!
//! where `D` is the co-usage cosine similarity of two entities and `P` the
//! proportional weight of each entity in the paper. Datasets and topics are
//! weighted uniformly (`1/N`); referenced journals by their share of the
//! paper's references. Because `D(i, i) = 1`, the score is Rao's quadratic
//! entropy with dissimilarity `1 - D` and lies in `[0, 1 - 1/N]` for uniform
//! weights.

use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PaperRecord};
use crate::simengine::{build_incidence, IncidenceIndex, Mode, SimilarityProvider};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("paper {paper}: {mode:?} entity {entity} is not in the similarity index")]
    Unresolvable {
        paper: String,
        mode: Mode,
        entity: String,
    },
    #[error("paper {0}: none of its datasets carries a topic tag")]
    EmptyTopicUnion(String),
    #[error("paper {0} references no journal")]
    NoReferences(String),
    #[error("paper {0} uses no dataset")]
    NoDatasets(String),
    #[error("similarity index is in {found:?} mode, {expected:?} required")]
    ModeMismatch { expected: Mode, found: Mode },
    #[error("z-score population has {n} members with standard deviation {sd}")]
    DegeneratePopulation { n: usize, sd: f64 },
    #[error("score file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Dataset,
    Topic,
    PaperNovelty,
}

impl ScoreMode {
    pub fn index_mode(self) -> Mode {
        match self {
            ScoreMode::Dataset => Mode::Dataset,
            ScoreMode::Topic => Mode::Topic,
            ScoreMode::PaperNovelty => Mode::Journal,
        }
    }

    pub fn from_index_mode(mode: Mode) -> Self {
        match mode {
            Mode::Dataset => ScoreMode::Dataset,
            Mode::Topic => ScoreMode::Topic,
            Mode::Journal => ScoreMode::PaperNovelty,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ScoreMode::Dataset => "dataset",
            ScoreMode::Topic => "topic",
            ScoreMode::PaperNovelty => "paper_novelty",
        }
    }
}

/// Which `(i, j)` pairs enter the similarity sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairConvention {
    /// Every ordered pair, diagonal included.
    #[default]
    AllOrdered,
    /// Ordered pairs with `i != j`.
    OrderedOffDiagonal,
    /// Unordered pairs with `i < j`.
    UnorderedOffDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtypicalityScore {
    pub paper_id: String,
    pub mode: ScoreMode,
    pub raw: f64,
    pub normalized: Option<f64>,
    /// `N_c` for datasets and topics, number of distinct referenced journals otherwise.
    pub n_entities: usize,
}

impl AtypicalityScore {
    /// Single-entity scores are identically zero and carry no information.
    pub fn is_degenerate(&self) -> bool {
        self.n_entities < 2
    }
}

/// `1 - Σ D(i,j) w_i w_j` over the pairs selected by `convention`.
pub fn rao_stirling(
    weights: &[f64],
    convention: PairConvention,
    mut sim: impl FnMut(usize, usize) -> f64,
) -> f64 {
    let n = weights.len();
    let mut total = 0.0;
    for i in 0..n {
        let lo = match convention {
            PairConvention::UnorderedOffDiagonal => i + 1,
            _ => 0,
        };
        let mut row = 0.0;
        for j in lo..n {
            if i == j && convention != PairConvention::AllOrdered {
                continue;
            }
            row += sim(i, j) * weights[j];
        }
        total += row * weights[i];
    }
    1.0 - total
}

fn resolve(
    paper: &PaperRecord,
    sim: &SimilarityProvider<'_>,
    ids: &[&str],
) -> Result<Vec<u32>, MetricError> {
    let index = sim.index();
    ids.iter()
        .map(|&id| {
            index.entity(id).ok_or_else(|| MetricError::Unresolvable {
                paper: paper.id.clone(),
                mode: index.mode(),
                entity: id.to_string(),
            })
        })
        .collect()
}

fn check_mode(sim: &SimilarityProvider<'_>, expected: Mode) -> Result<(), MetricError> {
    let found = sim.index().mode();
    if found != expected {
        return Err(MetricError::ModeMismatch { expected, found });
    }
    Ok(())
}

fn score_entities(
    paper: &PaperRecord,
    sim: &mut SimilarityProvider<'_>,
    coords: &[u32],
    weights: &[f64],
    convention: PairConvention,
) -> f64 {
    let focal = if sim.leave_one_out() {
        sim.index().article_of(&paper.id)
    } else {
        None
    };
    rao_stirling(weights, convention, |i, j| {
        sim.similarity(coords[i], coords[j], focal)
    })
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

pub fn dataset_atypicality(
    paper: &PaperRecord,
    sim: &mut SimilarityProvider<'_>,
) -> Result<AtypicalityScore, MetricError> {
    dataset_atypicality_with(paper, sim, PairConvention::default())
}

pub fn dataset_atypicality_with(
    paper: &PaperRecord,
    sim: &mut SimilarityProvider<'_>,
    convention: PairConvention,
) -> Result<AtypicalityScore, MetricError> {
    check_mode(sim, Mode::Dataset)?;
    if paper.dataset_ids.is_empty() {
        return Err(MetricError::NoDatasets(paper.id.clone()));
    }
    let ids: Vec<&str> = paper.dataset_ids.iter().map(String::as_str).collect();
    let coords = resolve(paper, sim, &ids)?;
    let raw = score_entities(paper, sim, &coords, &uniform(ids.len()), convention);
    Ok(AtypicalityScore {
        paper_id: paper.id.clone(),
        mode: ScoreMode::Dataset,
        raw,
        normalized: None,
        n_entities: ids.len(),
    })
}

pub fn topic_atypicality(
    paper: &PaperRecord,
    corpus: &Corpus,
    sim: &mut SimilarityProvider<'_>,
) -> Result<AtypicalityScore, MetricError> {
    topic_atypicality_with(paper, corpus, sim, PairConvention::default())
}

pub fn topic_atypicality_with(
    paper: &PaperRecord,
    corpus: &Corpus,
    sim: &mut SimilarityProvider<'_>,
    convention: PairConvention,
) -> Result<AtypicalityScore, MetricError> {
    check_mode(sim, Mode::Topic)?;
    let ids: Vec<&str> = corpus.topic_union(paper).into_iter().collect();
    if ids.is_empty() {
        return Err(MetricError::EmptyTopicUnion(paper.id.clone()));
    }
    let coords = resolve(paper, sim, &ids)?;
    let raw = score_entities(paper, sim, &coords, &uniform(ids.len()), convention);
    Ok(AtypicalityScore {
        paper_id: paper.id.clone(),
        mode: ScoreMode::Topic,
        raw,
        normalized: None,
        n_entities: ids.len(),
    })
}

pub fn paper_novelty(
    paper: &PaperRecord,
    sim: &mut SimilarityProvider<'_>,
) -> Result<AtypicalityScore, MetricError> {
    paper_novelty_with(paper, sim, PairConvention::default())
}

pub fn paper_novelty_with(
    paper: &PaperRecord,
    sim: &mut SimilarityProvider<'_>,
    convention: PairConvention,
) -> Result<AtypicalityScore, MetricError> {
    check_mode(sim, Mode::Journal)?;
    let total = paper.n_references();
    if total == 0 {
        return Err(MetricError::NoReferences(paper.id.clone()));
    }
    let ids: Vec<&str> = paper
        .referenced_journal_counts
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(j, _)| j.as_str())
        .collect();
    let weights: Vec<f64> = paper
        .referenced_journal_counts
        .values()
        .filter(|&&c| c > 0)
        .map(|&c| f64::from(c) / total as f64)
        .collect();
    let coords = resolve(paper, sim, &ids)?;
    let raw = score_entities(paper, sim, &coords, &weights, convention);
    Ok(AtypicalityScore {
        paper_id: paper.id.clone(),
        mode: ScoreMode::PaperNovelty,
        raw,
        normalized: None,
        n_entities: ids.len(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub convention: PairConvention,
    pub leave_one_out: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedPaper {
    pub paper_id: String,
    pub reason: String,
}

/// Scores of one mode for a whole corpus, in corpus order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub mode: ScoreMode,
    pub scores: Vec<AtypicalityScore>,
    pub skipped: Vec<SkippedPaper>,
}

impl ScoreSet {
    pub fn by_paper(&self) -> HashMap<&str, &AtypicalityScore> {
        self.scores
            .iter()
            .map(|s| (s.paper_id.as_str(), s))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MetricError> {
        write_scores_csv(w, &self.scores)
    }
}

/// Scores every paper of the corpus in `mode`. Papers the score is undefined
/// for (no topic tags, no references) are skipped and listed.
pub fn score_corpus(
    corpus: &Corpus,
    index: &IncidenceIndex,
    mode: ScoreMode,
    options: &ScoreOptions,
) -> Result<ScoreSet, MetricError> {
    if index.mode() != mode.index_mode() {
        return Err(MetricError::ModeMismatch {
            expected: mode.index_mode(),
            found: index.mode(),
        });
    }
    let base = SimilarityProvider::new(index).with_leave_one_out(options.leave_one_out);
    let results: Vec<Result<AtypicalityScore, MetricError>> = corpus
        .papers()
        .par_chunks(512)
        .map(|chunk| {
            let mut sim = base.fork();
            chunk
                .iter()
                .map(|p| match mode {
                    ScoreMode::Dataset => dataset_atypicality_with(p, &mut sim, options.convention),
                    ScoreMode::Topic => {
                        topic_atypicality_with(p, corpus, &mut sim, options.convention)
                    }
                    ScoreMode::PaperNovelty => {
                        paper_novelty_with(p, &mut sim, options.convention)
                    }
                })
                .collect::<Vec<_>>()
        })
        .flatten()
        .collect();

    let mut scores = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(
                ref e @ (MetricError::EmptyTopicUnion(ref paper_id)
                | MetricError::NoReferences(ref paper_id)
                | MetricError::NoDatasets(ref paper_id)),
            ) => skipped.push(SkippedPaper {
                paper_id: paper_id.clone(),
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(ScoreSet {
        mode,
        scores,
        skipped,
    })
}

/// Builds one incidence index per mode and scores the whole corpus with it.
pub fn score_corpus_modes(
    corpus: &Corpus,
    modes: &[ScoreMode],
    options: &ScoreOptions,
) -> Result<Vec<ScoreSet>, MetricError> {
    modes
        .iter()
        .map(|&mode| {
            let index = build_incidence(corpus, mode.index_mode());
            score_corpus(corpus, &index, mode, options)
        })
        .collect()
}

/// Sample mean and standard deviation (`n - 1` divisor).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// z-normalizes the scores selected by `population`; all other scores get
/// `normalized = None`.
pub fn zscore(
    scores: &[AtypicalityScore],
    population: impl Fn(&AtypicalityScore) -> bool,
) -> Result<Vec<AtypicalityScore>, MetricError> {
    let selected: Vec<f64> = scores
        .iter()
        .filter(|s| population(s))
        .map(|s| s.raw)
        .collect();
    let (mean, sd) = zscore_params(&selected)?;
    Ok(scores
        .iter()
        .map(|s| AtypicalityScore {
            normalized: population(s).then(|| (s.raw - mean) / sd),
            ..s.clone()
        })
        .collect())
}

/// Mean and sample sd of a z-score population, rejecting degenerate ones.
pub fn zscore_params(values: &[f64]) -> Result<(f64, f64), MetricError> {
    if values.len() < 2 {
        return Err(MetricError::DegeneratePopulation {
            n: values.len(),
            sd: 0.0,
        });
    }
    let (mean, sd) = mean_sd(values);
    if !(sd > 1e-14 * (1.0 + mean.abs())) {
        return Err(MetricError::DegeneratePopulation {
            n: values.len(),
            sd,
        });
    }
    Ok((mean, sd))
}

#[derive(Debug, Serialize, Deserialize)]
struct ScoreRow {
    paper_id: String,
    mode: ScoreMode,
    raw: f64,
    normalized: Option<f64>,
    n_entities: usize,
}

/// CSV with header `paper_id,mode,raw,normalized,n_entities`.
pub fn write_scores_csv<W: Write>(w: W, scores: &[AtypicalityScore]) -> Result<(), MetricError> {
    let mut out = csv::Writer::from_writer(w);
    for s in scores {
        out.serialize(ScoreRow {
            paper_id: s.paper_id.clone(),
            mode: s.mode,
            raw: s.raw,
            normalized: s.normalized,
            n_entities: s.n_entities,
        })?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_scores_csv<R: Read>(r: R) -> Result<Vec<AtypicalityScore>, MetricError> {
    let mut rdr = csv::Reader::from_reader(r);
    rdr.deserialize::<ScoreRow>()
        .map(|row| {
            let row = row?;
            Ok(AtypicalityScore {
                paper_id: row.paper_id,
                mode: row.mode,
                raw: row.raw,
                normalized: row.normalized,
                n_entities: row.n_entities,
            })
        })
        .collect()
}
