//! Synthetic corpora with planted regression effects.
//!
//! Papers draw their datasets from a power-law popularity distribution with
//! a cluster structure, so some dataset pairs are routinely co-used and others
//! almost never are. Outcomes are then drawn from a gamma-Poisson (NB2) model
//! whose mean is `exp(xᵀβ)`, with `x` taken from the very feature table the
//! features module builds for the chosen model.

use std::collections::{BTreeMap, BTreeSet};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Altmetric, Citations, Corpus, DatasetRecord, PaperRecord, Window};
use crate::features::{
    build_features, FeatureError, FeatureSpec, FeatureTable, ModelKind, ScoreTable, ATYPICALITY,
    INTERCEPT, MULTI_DATASET,
};
use crate::metrics::{score_corpus_modes, MetricError, ScoreOptions};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
    #[error("planted coefficient {0} is not a column of the generated design")]
    UnknownCoefficient(String),
    #[error("scoring the synthetic corpus: {0}")]
    Metric(#[from] MetricError),
    #[error("building the synthetic design: {0}")]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_papers: usize,
    pub n_datasets: usize,
    pub n_topics: usize,
    pub n_journals: usize,
    /// Exponent `s` of the dataset popularity law `P(rank k) ∝ k^-s`.
    pub popularity_exponent: f64,
    /// Probability that a paper uses more than one dataset.
    pub multi_dataset_prob: f64,
    /// Continuation probability for each dataset beyond the second.
    pub extra_dataset_prob: f64,
    /// Probability that an additional dataset comes from the first one's cluster.
    pub within_cluster_prob: f64,
    pub cluster_size: usize,
    /// Inclusive publication-year range.
    pub first_year: i32,
    pub last_year: i32,
    /// Design the outcome is generated from; also the design to fit.
    pub model: ModelKind,
    /// Planted coefficients by design column name; other columns get 0.
    pub beta: BTreeMap<String, f64>,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_papers: 5000,
            n_datasets: 400,
            n_topics: 40,
            n_journals: 60,
            popularity_exponent: 1.1,
            multi_dataset_prob: 0.35,
            extra_dataset_prob: 0.3,
            within_cluster_prob: 0.7,
            cluster_size: 10,
            first_year: 1980,
            last_year: 2016,
            model: ModelKind::DataCombinationAtypicality { window: Window::Y3 },
            beta: BTreeMap::from([
                (INTERCEPT.to_string(), 5f64.ln()),
                (MULTI_DATASET.to_string(), 0.15),
                (ATYPICALITY.to_string(), 0.17),
            ]),
            alpha: 1.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        for (name, v) in [
            ("n_papers", self.n_papers),
            ("n_datasets", self.n_datasets),
            ("n_topics", self.n_topics),
            ("n_journals", self.n_journals),
            ("cluster_size", self.cluster_size),
        ] {
            if v < 2 {
                return bad(format!("{name} must be at least 2, got {v}"));
            }
        }
        for (name, p) in [
            ("multi_dataset_prob", self.multi_dataset_prob),
            ("extra_dataset_prob", self.extra_dataset_prob),
            ("within_cluster_prob", self.within_cluster_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.extra_dataset_prob >= 1.0 {
            return bad("extra_dataset_prob must be below 1 so dataset counts stay finite".into());
        }
        if !(self.popularity_exponent >= 0.0 && self.popularity_exponent.is_finite()) {
            return bad(format!("popularity_exponent must be nonnegative, got {}", self.popularity_exponent));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.first_year > self.last_year || self.first_year <= 1930 || self.last_year > 2019 {
            return bad(format!(
                "year range {}..={} must sit inside (1930, 2019]",
                self.first_year, self.last_year
            ));
        }
        if !self.beta.contains_key(INTERCEPT) {
            return bad("beta must include an Intercept".into());
        }
        Ok(())
    }
}

/// What was planted, for checking recovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: FeatureSpec,
    /// Coefficient per design column, zeros included.
    pub beta: BTreeMap<String, f64>,
    pub alpha: f64,
    pub seed: u64,
    pub n_rows: usize,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    pub truth: GroundTruth,
    /// The design the outcomes were drawn from.
    pub table: FeatureTable,
}

const DISCIPLINES: [&str; 4] = ["Economics", "Political_science", "Psychology", "Sociology"];

fn power_law(n: usize, s: f64) -> WeightedIndex<f64> {
    WeightedIndex::new((1..=n).map(|k| (k as f64).powf(-s))).expect("positive weights")
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        0
    } else {
        Poisson::new(lambda).expect("finite positive rate").sample(rng) as u64
    }
}

/// Generates a corpus and draws every paper's outcome from the planted model.
pub fn generate_corpus(config: &SynthConfig) -> Result<SynthCorpus, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let corpus = draw_structure(config, &mut rng);
    let spec = FeatureSpec::new(config.model);

    let sets = score_corpus_modes(&corpus, &spec.required_scores(), &ScoreOptions::default())?;
    let table = build_features(&corpus, &ScoreTable::from(sets.as_slice()), &spec)?;
    for name in config.beta.keys() {
        if table.column(name).is_none() {
            return Err(SynthError::UnknownCoefficient(name.clone()));
        }
    }
    let beta: BTreeMap<String, f64> = table
        .column_names
        .iter()
        .map(|c| (c.clone(), config.beta.get(c).copied().unwrap_or(0.0)))
        .collect();

    let gamma_shape = 1.0 / config.alpha;
    let mut table = table;
    let mut outcome: BTreeMap<String, u64> = BTreeMap::new();
    for r in 0..table.n_rows() {
        let eta: f64 = table
            .column_names
            .iter()
            .zip(&table.columns)
            .map(|(name, col)| beta[name] * col[r])
            .sum();
        let mu = eta.exp();
        let lambda = Gamma::new(gamma_shape, config.alpha * mu)
            .expect("positive gamma parameters")
            .sample(&mut rng);
        let y = poisson(&mut rng, lambda);
        table.outcome[r] = y as f64;
        outcome.insert(table.row_ids[r].clone(), y);
    }

    let window = match config.model {
        ModelKind::DataCombination { window }
        | ModelKind::DatasetCount { window }
        | ModelKind::Atypicality { window }
        | ModelKind::TopicAtypicality { window }
        | ModelKind::DataCombinationAtypicality { window } => window,
        other => {
            return Err(SynthError::Config(format!(
                "model {} does not have a citation-count outcome",
                other.name()
            )))
        }
    };
    let mut papers = corpus.papers().to_vec();
    for p in &mut papers {
        let Some(&y) = outcome.get(p.id.as_str()) else {
            continue;
        };
        // later windows accumulate further citations
        let y3 = if window == Window::Y3 { y } else { y / 2 };
        let y5 = if window == Window::Y5 { y } else { y3 + poisson(&mut rng, 0.5 * y3 as f64) };
        let y10 = if window == Window::Y10 { y } else { y5 + poisson(&mut rng, y5 as f64) };
        p.citations = Citations {
            y3: Some(y3),
            y5: Some(y5),
            y10: (p.year + 10 <= 2019 || window == Window::Y10).then_some(y10),
        };
        p.citations.set(window, Some(y));
    }
    let corpus = Corpus::new(
        corpus.datasets().to_vec(),
        papers,
        corpus.journal_impact().clone(),
    );
    let n_rows = table.n_rows();
    Ok(SynthCorpus {
        corpus,
        truth: GroundTruth {
            spec,
            beta,
            alpha: config.alpha,
            seed: config.seed,
            n_rows,
        },
        table,
    })
}

/// Datasets, journals and papers with placeholder outcomes.
fn draw_structure(config: &SynthConfig, rng: &mut ChaCha8Rng) -> Corpus {
    let topic_law = power_law(config.n_topics, 0.8);
    let datasets: Vec<DatasetRecord> = (0..config.n_datasets)
        .map(|d| {
            let k = rng.random_range(1..=3usize.min(config.n_topics));
            let mut topics = BTreeSet::new();
            while topics.len() < k {
                topics.insert(format!("T{:03}", topic_law.sample(rng)));
            }
            DatasetRecord {
                id: format!("D{d:05}"),
                title: format!("Synthetic dataset {d}"),
                topics,
            }
        })
        .collect();

    let journal_law = power_law(config.n_journals, 1.0);
    let impact_dist = LogNormal::new(0.5, 0.8).expect("valid lognormal");
    let journal_impact: BTreeMap<String, f64> = (0..config.n_journals)
        .map(|j| (format!("J{j:04}"), impact_dist.sample(rng)))
        .collect();

    // popularity ranks are shuffled so clusters mix popular and rare datasets
    let dataset_law = power_law(config.n_datasets, config.popularity_exponent);
    let mut rank_to_dataset: Vec<usize> = (0..config.n_datasets).collect();
    for i in (1..rank_to_dataset.len()).rev() {
        let j = rng.random_range(0..=i);
        rank_to_dataset.swap(i, j);
    }
    let recognition = LogNormal::new(2.0, 1.0).expect("valid lognormal");

    let papers = (0..config.n_papers)
        .map(|i| {
            let year = rng.random_range(config.first_year..=config.last_year);
            let mut n_c = 1;
            if rng.random::<f64>() < config.multi_dataset_prob {
                n_c = 2;
                while rng.random::<f64>() < config.extra_dataset_prob {
                    n_c += 1;
                }
            }
            let n_c = n_c.min(config.n_datasets);
            let first = rank_to_dataset[dataset_law.sample(rng)];
            let mut chosen = BTreeSet::from([first]);
            let cluster = first / config.cluster_size;
            let cluster_lo = cluster * config.cluster_size;
            let cluster_hi = (cluster_lo + config.cluster_size).min(config.n_datasets);
            while chosen.len() < n_c {
                let next = if rng.random::<f64>() < config.within_cluster_prob
                    && chosen.len() < cluster_hi - cluster_lo
                {
                    rng.random_range(cluster_lo..cluster_hi)
                } else {
                    rank_to_dataset[dataset_law.sample(rng)]
                };
                chosen.insert(next);
            }

            let journal = format!("J{:04}", journal_law.sample(rng));
            let n_refs = rng.random_range(3..=15);
            let mut refs: BTreeMap<String, u32> = BTreeMap::new();
            for _ in 0..n_refs {
                *refs.entry(format!("J{:04}", journal_law.sample(rng))).or_default() += 1;
            }
            let n_authors = 1 + poisson(rng, 2.0) as usize;
            let author_ids = (0..n_authors).map(|a| format!("A{i:06}_{a}")).collect();
            let mut disciplines = BTreeMap::new();
            let primary = DISCIPLINES[rng.random_range(0..DISCIPLINES.len())];
            disciplines.insert(primary.to_string(), 0.5 + 0.5 * rng.random::<f64>());
            let secondary = DISCIPLINES[rng.random_range(0..DISCIPLINES.len())];
            if secondary != primary {
                disciplines.insert(secondary.to_string(), 0.5 * rng.random::<f64>());
            }
            let altmetric = (year > 2010).then(|| Altmetric {
                twitter: poisson(rng, 3.0),
                wikipedia: poisson(rng, 0.3),
                policy: poisson(rng, 0.2),
                news: poisson(rng, 0.5),
            });

            PaperRecord {
                id: format!("P{i:06}"),
                year,
                dataset_ids: chosen.into_iter().map(|d| datasets[d].id.clone()).collect(),
                journal_id: Some(journal),
                referenced_journal_counts: refs,
                author_ids,
                author_mean_citations: recognition.sample(rng),
                discipline_weights: disciplines,
                citations: Citations {
                    y3: Some(0),
                    y5: Some(0),
                    y10: Some(0),
                },
                altmetric,
            }
        })
        .collect();
    Corpus::new(datasets, papers, journal_impact)
}
