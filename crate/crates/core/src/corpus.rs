//! Bibliographic data model and line-delimited corpus ingestion.
//!
//! A corpus is three JSON-lines files:
//!
//! * `datasets.jsonl`: `{"id", "title", "topics": [..]}`
//! * `papers.jsonl`: `{"id", "year", "datasets": [..], "journal", "ref_journals": {jid: count},
//!   "authors": [..], "author_mean_cites", "disciplines": {name: weight},
//!   "cites": {"y3", "y5", "y10"}, "altmetric": {..} | null}`
//! * `journals.jsonl`: `{"id", "impact"}`
//!
//! Every line may carry a `"schema"` field; the only supported version is
//! [`SCHEMA_VERSION`]. Lines written by this crate always carry it.
//!
//! Records are held in canonical (id-sorted) order, so the order of input
//! lines never reaches any downstream computation.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Record schema version written to and accepted from corpus files.
pub const SCHEMA_VERSION: u32 = 1;

pub const DATASETS_FILE: &str = "datasets.jsonl";
pub const PAPERS_FILE: &str = "papers.jsonl";
pub const JOURNALS_FILE: &str = "journals.jsonl";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("paper {paper} references unknown dataset {dataset}")]
    DanglingDataset { paper: String, dataset: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: String },
}

/// Citation windows counted from the publication year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Window {
    #[serde(rename = "3")]
    Y3,
    #[serde(rename = "5")]
    Y5,
    #[serde(rename = "10")]
    Y10,
}

impl Window {
    pub const ALL: [Window; 3] = [Window::Y3, Window::Y5, Window::Y10];

    pub fn years(self) -> u32 {
        match self {
            Window::Y3 => 3,
            Window::Y5 => 5,
            Window::Y10 => 10,
        }
    }

    pub fn from_years(years: u32) -> Option<Self> {
        match years {
            3 => Some(Window::Y3),
            5 => Some(Window::Y5),
            10 => Some(Window::Y10),
            _ => None,
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}y", self.years())
    }
}

/// Online-attention channels tracked for recent papers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Twitter,
    Wikipedia,
    Policy,
    News,
}

impl Channel {
    pub const ALL: [Channel; 4] = [
        Channel::Policy,
        Channel::Wikipedia,
        Channel::Twitter,
        Channel::News,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Twitter => "twitter",
            Channel::Wikipedia => "wikipedia",
            Channel::Policy => "policy",
            Channel::News => "news",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub topics: BTreeSet<String>,
}

/// Citation counts per window; `None` when the window runs past the corpus horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citations {
    #[serde(default)]
    pub y3: Option<u64>,
    #[serde(default)]
    pub y5: Option<u64>,
    #[serde(default)]
    pub y10: Option<u64>,
}

impl Citations {
    pub fn get(&self, window: Window) -> Option<u64> {
        match window {
            Window::Y3 => self.y3,
            Window::Y5 => self.y5,
            Window::Y10 => self.y10,
        }
    }

    pub fn set(&mut self, window: Window, value: Option<u64>) {
        match window {
            Window::Y3 => self.y3 = value,
            Window::Y5 => self.y5 = value,
            Window::Y10 => self.y10 = value,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Altmetric {
    pub twitter: u64,
    pub wikipedia: u64,
    pub policy: u64,
    pub news: u64,
}

impl Altmetric {
    pub fn get(&self, channel: Channel) -> u64 {
        match channel {
            Channel::Twitter => self.twitter,
            Channel::Wikipedia => self.wikipedia,
            Channel::Policy => self.policy,
            Channel::News => self.news,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub year: i32,
    /// Sorted, duplicate-free.
    #[serde(rename = "datasets")]
    pub dataset_ids: Vec<String>,
    /// Publishing journal; `None` when unknown.
    #[serde(rename = "journal", default)]
    pub journal_id: Option<String>,
    /// Referenced journal -> number of references into it.
    #[serde(rename = "ref_journals", default)]
    pub referenced_journal_counts: BTreeMap<String, u32>,
    #[serde(rename = "authors", default)]
    pub author_ids: Vec<String>,
    #[serde(rename = "author_mean_cites", default)]
    pub author_mean_citations: f64,
    #[serde(rename = "disciplines", default)]
    pub discipline_weights: BTreeMap<String, f64>,
    #[serde(rename = "cites", default)]
    pub citations: Citations,
    #[serde(default)]
    pub altmetric: Option<Altmetric>,
}

impl PaperRecord {
    /// Number of datasets used (`N_c`).
    pub fn n_datasets(&self) -> usize {
        self.dataset_ids.len()
    }

    /// Total number of journal references (`R_c`).
    pub fn n_references(&self) -> u64 {
        self.referenced_journal_counts
            .values()
            .map(|&c| u64::from(c))
            .sum()
    }

    fn canonicalize(&mut self) {
        self.dataset_ids.sort();
        self.dataset_ids.dedup();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct JournalLine {
    id: String,
    impact: f64,
}

#[derive(Serialize, Deserialize)]
struct Versioned<T> {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    schema: Option<u32>,
    #[serde(flatten)]
    record: T,
}

/// An immutable, canonically ordered collection of datasets, papers and journal impacts.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    datasets: Vec<DatasetRecord>,
    papers: Vec<PaperRecord>,
    journal_impact: BTreeMap<String, f64>,
    dataset_lookup: HashMap<String, usize>,
    paper_lookup: HashMap<String, usize>,
}

impl Corpus {
    /// Builds a corpus in canonical order. No invariants are checked here;
    /// run [`validate`] for that.
    pub fn new(
        mut datasets: Vec<DatasetRecord>,
        mut papers: Vec<PaperRecord>,
        journal_impact: BTreeMap<String, f64>,
    ) -> Self {
        datasets.sort_by(|a, b| a.id.cmp(&b.id));
        for p in &mut papers {
            p.canonicalize();
        }
        papers.sort_by(|a, b| a.id.cmp(&b.id).then_with(|| a.year.cmp(&b.year)));
        let dataset_lookup = datasets
            .iter()
            .enumerate()
            .map(|(i, d)| (d.id.clone(), i))
            .collect();
        let paper_lookup = papers
            .iter()
            .enumerate()
            .map(|(i, p)| (p.id.clone(), i))
            .collect();
        Corpus {
            datasets,
            papers,
            journal_impact,
            dataset_lookup,
            paper_lookup,
        }
    }

    pub fn empty() -> Self {
        Corpus::new(Vec::new(), Vec::new(), BTreeMap::new())
    }

    pub fn datasets(&self) -> &[DatasetRecord] {
        &self.datasets
    }

    pub fn papers(&self) -> &[PaperRecord] {
        &self.papers
    }

    pub fn journal_impact(&self) -> &BTreeMap<String, f64> {
        &self.journal_impact
    }

    pub fn dataset(&self, id: &str) -> Option<&DatasetRecord> {
        self.dataset_lookup.get(id).map(|&i| &self.datasets[i])
    }

    pub fn dataset_index(&self, id: &str) -> Option<usize> {
        self.dataset_lookup.get(id).copied()
    }

    pub fn paper(&self, id: &str) -> Option<&PaperRecord> {
        self.paper_lookup.get(id).map(|&i| &self.papers[i])
    }

    pub fn paper_index(&self, id: &str) -> Option<usize> {
        self.paper_lookup.get(id).copied()
    }

    /// Impact proxy of the paper's journal, if both are known.
    pub fn impact_of(&self, paper: &PaperRecord) -> Option<f64> {
        paper
            .journal_id
            .as_ref()
            .and_then(|j| self.journal_impact.get(j))
            .copied()
    }

    /// Number of papers using each dataset, indexed like [`Corpus::datasets`].
    pub fn dataset_usage_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.datasets.len()];
        for p in &self.papers {
            for d in &p.dataset_ids {
                if let Some(i) = self.dataset_index(d) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    /// Union of the topic sets of the paper's datasets, sorted.
    pub fn topic_union(&self, paper: &PaperRecord) -> BTreeSet<&str> {
        paper
            .dataset_ids
            .iter()
            .filter_map(|d| self.dataset(d))
            .flat_map(|d| d.topics.iter().map(String::as_str))
            .collect()
    }

    /// Returns a copy with `journal_impact` replaced.
    pub fn with_journal_impact(&self, journal_impact: BTreeMap<String, f64>) -> Corpus {
        Corpus::new(self.datasets.clone(), self.papers.clone(), journal_impact)
    }

    /// SHA-256 over the canonical serialization of all three files.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        let mut buf = Vec::new();
        self.write_datasets(&mut buf).expect("in-memory write");
        hasher.update(&buf);
        buf.clear();
        self.write_papers(&mut buf).expect("in-memory write");
        hasher.update(&buf);
        buf.clear();
        self.write_journals(&mut buf).expect("in-memory write");
        hasher.update(&buf);
        hasher.finalize().into()
    }

    pub fn write_datasets<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_lines(w, &self.datasets)
    }

    pub fn write_papers<W: Write>(&self, w: W) -> std::io::Result<()> {
        write_lines(w, &self.papers)
    }

    pub fn write_journals<W: Write>(&self, w: W) -> std::io::Result<()> {
        let lines: Vec<JournalLine> = self
            .journal_impact
            .iter()
            .map(|(id, &impact)| JournalLine {
                id: id.clone(),
                impact,
            })
            .collect();
        write_lines(w, &lines)
    }

    /// Writes `datasets.jsonl`, `papers.jsonl` and `journals.jsonl` into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> std::io::Result<()>| {
            let path = dir.join(name);
            let io = |source| CorpusError::Io {
                path: path.clone(),
                source,
            };
            let mut out = BufWriter::new(File::create(&path).map_err(io)?);
            f(&mut out).map_err(io)?;
            out.flush().map_err(io)
        };
        write(DATASETS_FILE, &|w| self.write_datasets(w))?;
        write(PAPERS_FILE, &|w| self.write_papers(w))?;
        write(JOURNALS_FILE, &|w| self.write_journals(w))
    }
}

fn write_lines<W: Write, T: Serialize>(mut w: W, records: &[T]) -> std::io::Result<()> {
    for record in records {
        let line = Versioned {
            schema: Some(SCHEMA_VERSION),
            record,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn read_lines<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| CorpusError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let v: Versioned<T> = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        if let Some(version) = v.schema {
            if version != SCHEMA_VERSION {
                return Err(parse_err(format!("unsupported schema version {version}")));
            }
        }
        out.push(v.record);
    }
    Ok(out)
}

/// Paths of the three corpus files.
#[derive(Debug, Clone)]
pub struct CorpusPaths {
    pub datasets: PathBuf,
    pub papers: PathBuf,
    pub journals: PathBuf,
}

impl CorpusPaths {
    pub fn in_dir(dir: &Path) -> Self {
        CorpusPaths {
            datasets: dir.join(DATASETS_FILE),
            papers: dir.join(PAPERS_FILE),
            journals: dir.join(JOURNALS_FILE),
        }
    }
}

/// Reads and cross-references the three corpus files.
///
/// Fails on malformed lines (with line number), duplicate ids, and papers
/// that reference a dataset absent from the dataset file. Other invariant
/// violations are left for [`validate`].
pub fn load_corpus(paths: &CorpusPaths) -> Result<Corpus, CorpusError> {
    let datasets: Vec<DatasetRecord> = read_lines(&paths.datasets)?;
    let papers: Vec<PaperRecord> = read_lines(&paths.papers)?;
    let journals: Vec<JournalLine> = read_lines(&paths.journals)?;

    let mut dataset_ids = HashSet::with_capacity(datasets.len());
    for d in &datasets {
        if !dataset_ids.insert(d.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                kind: "dataset",
                id: d.id.clone(),
            });
        }
    }
    let mut paper_ids = HashSet::with_capacity(papers.len());
    for p in &papers {
        if !paper_ids.insert(p.id.as_str()) {
            return Err(CorpusError::DuplicateId {
                kind: "paper",
                id: p.id.clone(),
            });
        }
        if let Some(missing) = p.dataset_ids.iter().find(|d| !dataset_ids.contains(d.as_str())) {
            return Err(CorpusError::DanglingDataset {
                paper: p.id.clone(),
                dataset: missing.clone(),
            });
        }
    }
    let mut journal_impact = BTreeMap::new();
    for j in journals {
        if journal_impact.insert(j.id.clone(), j.impact).is_some() {
            return Err(CorpusError::DuplicateId {
                kind: "journal",
                id: j.id,
            });
        }
    }
    Ok(Corpus::new(datasets, papers, journal_impact))
}

/// Loads `datasets.jsonl`, `papers.jsonl` and `journals.jsonl` from one directory.
pub fn load_corpus_dir(dir: &Path) -> Result<Corpus, CorpusError> {
    load_corpus(&CorpusPaths::in_dir(dir))
}

/// Recomputes the journal impact proxy as the mean `window` citation count of
/// papers each journal published in `year`. Journals with no such paper get 0.
pub fn recompute_journal_impact(
    corpus: &Corpus,
    year: i32,
    window: Window,
) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for p in corpus.papers() {
        if let Some(j) = &p.journal_id {
            sums.entry(j.as_str()).or_insert((0.0, 0));
            if p.year == year {
                if let Some(c) = p.citations.get(window) {
                    let e = sums.get_mut(j.as_str()).unwrap();
                    e.0 += c as f64;
                    e.1 += 1;
                }
            }
        }
    }
    let mut out: BTreeMap<String, f64> = corpus
        .journal_impact()
        .keys()
        .map(|k| (k.clone(), 0.0))
        .collect();
    for (j, (sum, n)) in sums {
        out.insert(j.to_string(), if n > 0 { sum / n as f64 } else { 0.0 });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub record: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Summary {
    pub papers: usize,
    pub datasets: usize,
    pub single_dataset_papers: usize,
    pub multi_dataset_papers: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<Violation>,
    pub warnings: Vec<Violation>,
    pub summary: Summary,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }
}

/// Checks every corpus invariant. Violations are returned as data.
pub fn validate(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut err = |record: &str, message: String| {
        report.errors.push(Violation {
            record: record.to_string(),
            message,
        })
    };

    for pair in corpus.datasets().windows(2) {
        if pair[0].id == pair[1].id {
            err(&pair[0].id, "duplicate dataset id".into());
        }
    }
    for pair in corpus.papers().windows(2) {
        if pair[0].id == pair[1].id {
            err(&pair[0].id, "duplicate paper id".into());
        }
    }
    for (j, &impact) in corpus.journal_impact() {
        if !impact.is_finite() || impact < 0.0 {
            err(j, format!("journal impact {impact} is not a nonnegative real"));
        }
    }
    for p in corpus.papers() {
        if p.dataset_ids.is_empty() {
            err(&p.id, "paper uses no dataset".into());
        }
        for d in &p.dataset_ids {
            if corpus.dataset(d).is_none() {
                err(&p.id, format!("unknown dataset {d}"));
            }
        }
        for (j, &count) in &p.referenced_journal_counts {
            if count == 0 {
                err(&p.id, format!("reference count for journal {j} is zero"));
            }
        }
        for (name, &w) in &p.discipline_weights {
            if !(0.0..=1.0).contains(&w) {
                err(&p.id, format!("discipline weight {name}={w} outside [0,1]"));
            }
        }
        if !p.author_mean_citations.is_finite() || p.author_mean_citations < 0.0 {
            err(
                &p.id,
                format!("author mean citations {} is negative", p.author_mean_citations),
            );
        }
        if let Some(j) = &p.journal_id {
            if !corpus.journal_impact().contains_key(j) {
                err(&p.id, format!("journal {j} has no impact entry"));
            }
        }
    }

    for d in corpus.datasets() {
        if d.topics.is_empty() {
            report.warnings.push(Violation {
                record: d.id.clone(),
                message: "dataset has no topic tags".into(),
            });
        }
    }
    for p in corpus.papers() {
        if p.journal_id.is_none() {
            report.warnings.push(Violation {
                record: p.id.clone(),
                message: "paper has no journal; excluded from impact-factor models".into(),
            });
        }
    }

    let multi = corpus
        .papers()
        .iter()
        .filter(|p| p.n_datasets() >= 2)
        .count();
    report.summary = Summary {
        papers: corpus.papers().len(),
        datasets: corpus.datasets().len(),
        single_dataset_papers: corpus.papers().len() - multi,
        multi_dataset_papers: multi,
    };
    report
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) {
        std::fs::write(dir.join(name), body).unwrap();
    }

    #[test]
    fn loads_two_paper_fixture() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            DATASETS_FILE,
            "{\"id\":\"D1\",\"title\":\"a\",\"topics\":[\"T1\"]}\n{\"id\":\"D2\",\"title\":\"b\",\"topics\":[]}\n",
        );
        write(
            dir.path(),
            PAPERS_FILE,
            concat!(
                "{\"id\":\"P2\",\"year\":2001,\"datasets\":[\"D1\",\"D2\"],\"journal\":\"J1\",\"ref_journals\":{\"J1\":1},",
                "\"authors\":[\"a\"],\"author_mean_cites\":1.0,\"disciplines\":{},\"cites\":{\"y3\":1,\"y5\":2,\"y10\":3},\"altmetric\":null}\n",
                "{\"id\":\"P1\",\"year\":2017,\"datasets\":[\"D1\"],\"journal\":null,\"ref_journals\":{},",
                "\"authors\":[],\"author_mean_cites\":0.0,\"disciplines\":{},\"cites\":{\"y3\":null,\"y5\":null,\"y10\":null},",
                "\"altmetric\":{\"twitter\":1,\"wikipedia\":0,\"policy\":0,\"news\":2}}\n"
            ),
        );
        write(dir.path(), JOURNALS_FILE, "{\"id\":\"J1\",\"impact\":2.5}\n");
        let corpus = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(corpus.papers().len(), 2);
        assert_eq!(corpus.datasets().len(), 2);
        // canonical order
        assert_eq!(corpus.papers()[0].id, "P1");
        // absent 3y window stays absent rather than becoming zero
        assert_eq!(corpus.paper("P1").unwrap().citations.y3, None);
        assert_eq!(corpus.paper("P1").unwrap().journal_id, None);
        assert_eq!(corpus.paper("P1").unwrap().altmetric.unwrap().news, 2);
        assert!(validate(&corpus).is_valid());
    }

    #[test]
    fn dangling_dataset_is_named() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), DATASETS_FILE, "{\"id\":\"D1\",\"title\":\"\",\"topics\":[]}\n");
        write(
            dir.path(),
            PAPERS_FILE,
            "{\"id\":\"P1\",\"year\":2000,\"datasets\":[\"D1\",\"D99\"]}\n",
        );
        write(dir.path(), JOURNALS_FILE, "");
        match load_corpus_dir(dir.path()) {
            Err(CorpusError::DanglingDataset { dataset, .. }) => assert_eq!(dataset, "D99"),
            other => panic!("expected dangling dataset, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            DATASETS_FILE,
            "{\"id\":\"D1\",\"topics\":[]}\n{\"id\": oops}\n",
        );
        write(dir.path(), PAPERS_FILE, "");
        write(dir.path(), JOURNALS_FILE, "");
        match load_corpus_dir(dir.path()) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_schema_version() {
        let dir = tempfile::tempdir().unwrap();
        write(
            dir.path(),
            DATASETS_FILE,
            "{\"schema\":7,\"id\":\"D1\",\"topics\":[]}\n",
        );
        write(dir.path(), PAPERS_FILE, "");
        write(dir.path(), JOURNALS_FILE, "");
        assert!(matches!(
            load_corpus_dir(dir.path()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus_dir(dir.path()).unwrap_err();
        assert!(err.to_string().contains(DATASETS_FILE));
    }

    #[test]
    fn validate_counts_and_warnings() {
        let corpus = Corpus::new(
            vec![dataset("D1", &["T1"]), dataset("D2", &[])],
            vec![
                paper("P1", 2000, &["D1"]),
                paper("P2", 2001, &["D2"]),
                paper("P3", 2002, &["D1", "D2"]),
            ],
            impacts(),
        );
        let report = validate(&corpus);
        assert!(report.errors.is_empty(), "{:?}", report.errors);
        assert_eq!(report.summary.multi_dataset_papers, 1);
        assert_eq!(report.summary.single_dataset_papers, 2);
        assert_eq!(report.warnings.len(), 1);
        assert_eq!(report.warnings[0].record, "D2");
    }

    #[test]
    fn validate_flags_empty_dataset_set() {
        let corpus = Corpus::new(
            vec![dataset("D1", &["T1"])],
            vec![paper("P1", 2000, &[])],
            impacts(),
        );
        let report = validate(&corpus);
        assert_eq!(report.errors.len(), 1);
        assert_eq!(report.errors[0].record, "P1");
    }

    #[test]
    fn validate_flags_bad_weights_and_counts() {
        let mut p = paper("P1", 2000, &["D1"]);
        p.discipline_weights.insert("Art".into(), 1.5);
        p.referenced_journal_counts.insert("J3".into(), 0);
        p.journal_id = Some("J9".into());
        let corpus = Corpus::new(vec![dataset("D1", &["T1"])], vec![p], impacts());
        assert_eq!(validate(&corpus).errors.len(), 3);
    }

    #[test]
    fn write_then_load_is_identity() {
        let corpus = Corpus::new(
            vec![dataset("D1", &["T1", "T2"]), dataset("D2", &["T2"])],
            vec![paper("P2", 2001, &["D2", "D1"]), paper("P1", 2000, &["D1"])],
            impacts(),
        );
        let dir = tempfile::tempdir().unwrap();
        corpus.write_dir(dir.path()).unwrap();
        let back = load_corpus_dir(dir.path()).unwrap();
        assert_eq!(back, corpus);
        assert_eq!(back.content_hash(), corpus.content_hash());
    }

    #[test]
    fn recompute_impact_averages_target_year() {
        let mut a = paper("P1", 2019, &["D1"]);
        a.citations.y3 = Some(4);
        let mut b = paper("P2", 2019, &["D1"]);
        b.citations.y3 = Some(8);
        let mut c = paper("P3", 2018, &["D1"]);
        c.citations.y3 = Some(100);
        let mut d = paper("P4", 2010, &["D1"]);
        d.journal_id = Some("J2".into());
        let corpus = Corpus::new(vec![dataset("D1", &["T"])], vec![a, b, c, d], impacts());
        let impact = recompute_journal_impact(&corpus, 2019, Window::Y3);
        assert_eq!(impact["J1"], 6.0);
        assert_eq!(impact["J2"], 0.0);
    }
}
