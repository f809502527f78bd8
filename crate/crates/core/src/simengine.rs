//! Sparse binary usage vectors and their cosine similarities.
//!
//! For every entity (a dataset, a topic, or a referenced journal) the index
//! stores the sorted list of articles that use it. Cosine similarity between
//! two binary vectors reduces to `|A ∩ B| / sqrt(|A| |B|)`, so only set sizes
//! and intersection counts are ever needed.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, PaperRecord};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown {mode:?} entity {id}")]
    UnknownEntity { mode: Mode, id: String },
    #[error("entity {0} listed twice")]
    DuplicateEntity(String),
    #[error("index cache {path}: {message}")]
    Cache { path: String, message: String },
    #[error("index cache io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Dataset,
    Topic,
    Journal,
}

impl Mode {
    fn tag(self) -> u8 {
        match self {
            Mode::Dataset => 0,
            Mode::Topic => 1,
            Mode::Journal => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Mode::Dataset),
            1 => Some(Mode::Topic),
            2 => Some(Mode::Journal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Dataset => "dataset",
            Mode::Topic => "topic",
            Mode::Journal => "journal",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dataset" => Ok(Mode::Dataset),
            "topic" => Ok(Mode::Topic),
            "journal" => Ok(Mode::Journal),
            other => Err(format!("unknown mode {other:?} (expected dataset, topic or journal)")),
        }
    }
}

/// Entity x article incidence in sparse column form.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceIndex {
    mode: Mode,
    entity_ids: Vec<String>,
    lookup: HashMap<String, u32>,
    columns: Vec<Vec<u32>>,
    article_count: u32,
    /// Corpus paper position -> article coordinate, `u32::MAX` when the paper
    /// is outside the indexed article set.
    article_of_paper: Vec<u32>,
    paper_lookup: HashMap<String, u32>,
}

const NOT_INDEXED: u32 = u32::MAX;

/// Entities the given paper touches in `mode`, sorted and duplicate-free.
pub fn entities_of<'c>(corpus: &'c Corpus, paper: &'c PaperRecord, mode: Mode) -> Vec<&'c str> {
    match mode {
        Mode::Dataset => paper.dataset_ids.iter().map(String::as_str).collect(),
        Mode::Topic => corpus.topic_union(paper).into_iter().collect(),
        Mode::Journal => paper
            .referenced_journal_counts
            .keys()
            .map(String::as_str)
            .collect(),
    }
}

/// Builds the index with every corpus paper as an article.
pub fn build_incidence(corpus: &Corpus, mode: Mode) -> IncidenceIndex {
    build_incidence_over(corpus, mode, |_| true)
}

/// Builds the index with only the papers accepted by `include` as articles.
/// The entity set is always drawn from the full corpus.
pub fn build_incidence_over(
    corpus: &Corpus,
    mode: Mode,
    include: impl Fn(&PaperRecord) -> bool,
) -> IncidenceIndex {
    let entity_ids: Vec<String> = match mode {
        Mode::Dataset => corpus.datasets().iter().map(|d| d.id.clone()).collect(),
        Mode::Topic => corpus
            .datasets()
            .iter()
            .flat_map(|d| d.topics.iter())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect(),
        Mode::Journal => corpus
            .papers()
            .iter()
            .flat_map(|p| p.referenced_journal_counts.keys())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .cloned()
            .collect(),
    };
    let lookup: HashMap<String, u32> = entity_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i as u32))
        .collect();

    let mut columns = vec![Vec::new(); entity_ids.len()];
    let mut article_of_paper = vec![NOT_INDEXED; corpus.papers().len()];
    let mut article = 0u32;
    for (pos, paper) in corpus.papers().iter().enumerate() {
        if !include(paper) {
            continue;
        }
        article_of_paper[pos] = article;
        for e in entities_of(corpus, paper, mode) {
            if let Some(&col) = lookup.get(e) {
                columns[col as usize].push(article);
            }
        }
        article += 1;
    }

    let index = IncidenceIndex {
        mode,
        entity_ids,
        lookup,
        columns,
        article_count: article,
        article_of_paper,
        paper_lookup: paper_lookup(corpus),
    };
    let zero = index.columns.iter().filter(|c| c.is_empty()).count();
    if zero > 0 {
        log::warn!(
            "{zero} {} entities are used by no article; their similarity is 0 against everything",
            mode.name()
        );
    }
    index
}

fn paper_lookup(corpus: &Corpus) -> HashMap<String, u32> {
    corpus
        .papers()
        .iter()
        .enumerate()
        .map(|(i, p)| (p.id.clone(), i as u32))
        .collect()
}

impl IncidenceIndex {
    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn entity_ids(&self) -> &[String] {
        &self.entity_ids
    }

    pub fn article_count(&self) -> u32 {
        self.article_count
    }

    pub fn entity(&self, id: &str) -> Option<u32> {
        self.lookup.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<u32, SimError> {
        self.entity(id).ok_or_else(|| SimError::UnknownEntity {
            mode: self.mode,
            id: id.to_string(),
        })
    }

    /// Sorted article coordinates of entity `e`.
    pub fn column(&self, e: u32) -> &[u32] {
        &self.columns[e as usize]
    }

    pub fn column_of(&self, id: &str) -> Result<&[u32], SimError> {
        Ok(self.column(self.require(id)?))
    }

    /// Entities used by no article.
    pub fn zero_columns(&self) -> Vec<&str> {
        self.entity_ids
            .iter()
            .zip(&self.columns)
            .filter(|(_, c)| c.is_empty())
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Article coordinate of a paper, if it is part of the indexed article set.
    pub fn article_of(&self, paper_id: &str) -> Option<u32> {
        let pos = *self.paper_lookup.get(paper_id)?;
        match self.article_of_paper[pos as usize] {
            NOT_INDEXED => None,
            a => Some(a),
        }
    }

    /// Writes the index to a versioned binary cache tagged with `corpus_hash`.
    pub fn save_cache(&self, path: &Path, corpus_hash: &[u8; 32]) -> Result<(), SimError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(CACHE_MAGIC)?;
        w.write_u32::<LittleEndian>(CACHE_VERSION)?;
        w.write_all(corpus_hash)?;
        w.write_u8(self.mode.tag())?;
        w.write_u32::<LittleEndian>(self.article_count)?;
        w.write_u32::<LittleEndian>(self.entity_ids.len() as u32)?;
        for (id, col) in self.entity_ids.iter().zip(&self.columns) {
            w.write_u32::<LittleEndian>(id.len() as u32)?;
            w.write_all(id.as_bytes())?;
            w.write_u32::<LittleEndian>(col.len() as u32)?;
            for &a in col {
                w.write_u32::<LittleEndian>(a)?;
            }
        }
        w.write_u32::<LittleEndian>(self.article_of_paper.len() as u32)?;
        for &a in &self.article_of_paper {
            w.write_u32::<LittleEndian>(a)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a cache written by [`IncidenceIndex::save_cache`]. Returns
    /// `Ok(None)` when the cache belongs to a different corpus or mode.
    pub fn load_cache(
        path: &Path,
        corpus: &Corpus,
        mode: Mode,
    ) -> Result<Option<IncidenceIndex>, SimError> {
        let bad = |message: &str| SimError::Cache {
            path: path.display().to_string(),
            message: message.to_string(),
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(bad("not an incidence cache"));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != CACHE_VERSION {
            return Err(bad(&format!("unsupported cache version {version}")));
        }
        let mut hash = [0u8; 32];
        r.read_exact(&mut hash)?;
        let cached_mode = Mode::from_tag(r.read_u8()?).ok_or_else(|| bad("bad mode tag"))?;
        if hash != corpus.content_hash() || cached_mode != mode {
            return Ok(None);
        }
        let article_count = r.read_u32::<LittleEndian>()?;
        let n = r.read_u32::<LittleEndian>()? as usize;
        let mut entity_ids = Vec::with_capacity(n);
        let mut columns = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.read_u32::<LittleEndian>()? as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            entity_ids.push(String::from_utf8(bytes).map_err(|_| bad("entity id is not utf-8"))?);
            let clen = r.read_u32::<LittleEndian>()? as usize;
            let mut col = vec![0u32; clen];
            r.read_u32_into::<LittleEndian>(&mut col)?;
            columns.push(col);
        }
        let np = r.read_u32::<LittleEndian>()? as usize;
        if np != corpus.papers().len() {
            return Err(bad("paper count does not match corpus"));
        }
        let mut article_of_paper = vec![0u32; np];
        r.read_u32_into::<LittleEndian>(&mut article_of_paper)?;
        let lookup = entity_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i as u32))
            .collect();
        Ok(Some(IncidenceIndex {
            mode,
            entity_ids,
            lookup,
            columns,
            article_count,
            article_of_paper,
            paper_lookup: paper_lookup(corpus),
        }))
    }
}

const CACHE_MAGIC: &[u8; 8] = b"DCINCIDX";
const CACHE_VERSION: u32 = 1;

/// Size of the intersection of two strictly increasing lists.
pub fn intersection_size(a: &[u32], b: &[u32]) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if small.is_empty() {
        return 0;
    }
    if large.len() / small.len() >= 16 {
        // gallop: binary search each element of the short list in the
        // remaining suffix of the long one
        let mut rest = large;
        let mut count = 0;
        for &x in small {
            match rest.binary_search(&x) {
                Ok(i) => {
                    count += 1;
                    rest = &rest[i + 1..];
                }
                Err(i) => rest = &rest[i..],
            }
            if rest.is_empty() {
                break;
            }
        }
        return count;
    }
    let (mut i, mut j, mut count) = (0, 0, 0);
    while i < small.len() && j < large.len() {
        match small[i].cmp(&large[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                count += 1;
                i += 1;
                j += 1;
            }
        }
    }
    count
}

fn cosine_from_counts(shared: usize, na: usize, nb: usize) -> f64 {
    if na == 0 || nb == 0 {
        return 0.0;
    }
    let v = shared as f64 / ((na as f64) * (nb as f64)).sqrt();
    v.min(1.0)
}

/// Cosine similarity between the usage vectors of two entities.
///
/// Zero if either entity is used by no article, including against itself.
pub fn cosine(index: &IncidenceIndex, a: &str, b: &str) -> Result<f64, SimError> {
    let (ea, eb) = (index.require(a)?, index.require(b)?);
    let (ca, cb) = (index.column(ea), index.column(eb));
    Ok(cosine_from_counts(
        intersection_size(ca, cb),
        ca.len(),
        cb.len(),
    ))
}

/// Memoizing similarity lookups over one index.
///
/// Intersection counts are cached under the canonical key `(min, max)`. With
/// leave-one-out enabled, a focal article is removed from both columns before
/// the cosine is taken.
#[derive(Debug, Clone)]
pub struct SimilarityProvider<'a> {
    index: &'a IncidenceIndex,
    memo: HashMap<(u32, u32), u32>,
    leave_one_out: bool,
}

impl<'a> SimilarityProvider<'a> {
    pub fn new(index: &'a IncidenceIndex) -> Self {
        SimilarityProvider {
            index,
            memo: HashMap::new(),
            leave_one_out: false,
        }
    }

    pub fn with_leave_one_out(mut self, on: bool) -> Self {
        self.leave_one_out = on;
        self
    }

    pub fn leave_one_out(&self) -> bool {
        self.leave_one_out
    }

    pub fn index(&self) -> &'a IncidenceIndex {
        self.index
    }

    pub fn memo_len(&self) -> usize {
        self.memo.len()
    }

    /// Empty-memo provider over the same index and settings.
    pub fn fork(&self) -> Self {
        SimilarityProvider {
            index: self.index,
            memo: HashMap::new(),
            leave_one_out: self.leave_one_out,
        }
    }

    /// Folds another provider's cached counts into this one.
    pub fn merge(&mut self, other: SimilarityProvider<'a>) {
        self.memo.extend(other.memo);
    }

    fn shared(&mut self, a: u32, b: u32) -> u32 {
        let key = if a <= b { (a, b) } else { (b, a) };
        if key.0 == key.1 {
            return self.index.column(a).len() as u32;
        }
        let index = self.index;
        *self
            .memo
            .entry(key)
            .or_insert_with(|| intersection_size(index.column(key.0), index.column(key.1)) as u32)
    }

    /// Similarity between entity coordinates `a` and `b`. `focal` is the
    /// article being scored; it only matters under leave-one-out.
    pub fn similarity(&mut self, a: u32, b: u32, focal: Option<u32>) -> f64 {
        let mut shared = self.shared(a, b) as usize;
        let mut na = self.index.column(a).len();
        let mut nb = self.index.column(b).len();
        if let (true, Some(f)) = (self.leave_one_out, focal) {
            let in_a = self.index.column(a).binary_search(&f).is_ok();
            let in_b = self.index.column(b).binary_search(&f).is_ok();
            if in_a && in_b {
                shared -= 1;
            }
            na -= usize::from(in_a);
            nb -= usize::from(in_b);
        }
        cosine_from_counts(shared, na, nb)
    }

    pub fn similarity_by_id(&mut self, a: &str, b: &str) -> Result<f64, SimError> {
        let (ea, eb) = (self.index.require(a)?, self.index.require(b)?);
        Ok(self.similarity(ea, eb, None))
    }
}

/// Dense, row-major symmetric block of similarities among `ids`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityBlock {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
}

impl SimilarityBlock {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ids.len() + j]
    }
}

pub fn pairwise_similarity(
    index: &IncidenceIndex,
    ids: &[&str],
) -> Result<SimilarityBlock, SimError> {
    let mut coords = Vec::with_capacity(ids.len());
    let mut seen = BTreeSet::new();
    for &id in ids {
        if !seen.insert(id) {
            return Err(SimError::DuplicateEntity(id.to_string()));
        }
        coords.push(index.require(id)?);
    }
    let n = ids.len();
    let mut provider = SimilarityProvider::new(index);
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = provider.similarity(coords[i], coords[j], None);
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    Ok(SimilarityBlock {
        ids: ids.iter().map(|s| s.to_string()).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{dataset, impacts, paper};
    use proptest::prelude::*;

    fn two_paper_corpus() -> Corpus {
        Corpus::new(
            vec![dataset("D1", &["T1", "T2"]), dataset("D2", &["T2", "T3"])],
            vec![paper("P1", 2000, &["D1"]), paper("P2", 2001, &["D1", "D2"])],
            impacts(),
        )
    }

    #[test]
    fn dataset_columns() {
        let idx = build_incidence(&two_paper_corpus(), Mode::Dataset);
        assert_eq!(idx.column_of("D1").unwrap(), &[0, 1]);
        assert_eq!(idx.column_of("D2").unwrap(), &[1]);
        assert_eq!(idx.article_count(), 2);
    }

    #[test]
    fn topic_columns_follow_dataset_union() {
        let idx = build_incidence(&two_paper_corpus(), Mode::Topic);
        assert_eq!(idx.column_of("T1").unwrap(), &[0, 1]);
        assert_eq!(idx.column_of("T2").unwrap(), &[0, 1]);
        assert_eq!(idx.column_of("T3").unwrap(), &[1]);
    }

    #[test]
    fn journal_columns_follow_references() {
        let mut c = two_paper_corpus().papers().to_vec();
        c[1].referenced_journal_counts = [("J3".to_string(), 4)].into();
        let corpus = Corpus::new(two_paper_corpus().datasets().to_vec(), c, impacts());
        let idx = build_incidence(&corpus, Mode::Journal);
        assert_eq!(idx.column_of("J1").unwrap(), &[0]);
        assert_eq!(idx.column_of("J3").unwrap(), &[1]);
    }

    #[test]
    fn empty_corpus_has_no_entities() {
        let idx = build_incidence(&Corpus::empty(), Mode::Dataset);
        assert!(idx.entity_ids().is_empty());
        assert_eq!(idx.article_count(), 0);
    }

    #[test]
    fn restricted_article_set() {
        let idx = build_incidence_over(&two_paper_corpus(), Mode::Dataset, |p| p.year > 2000);
        assert_eq!(idx.column_of("D1").unwrap(), &[0]);
        assert_eq!(idx.article_of("P1"), None);
        assert_eq!(idx.article_of("P2"), Some(0));
    }

    fn hand_index(cols: &[&[u32]]) -> IncidenceIndex {
        let entity_ids: Vec<String> = (0..cols.len()).map(|i| format!("E{i}")).collect();
        IncidenceIndex {
            mode: Mode::Dataset,
            lookup: entity_ids
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i as u32))
                .collect(),
            entity_ids,
            columns: cols.iter().map(|c| c.to_vec()).collect(),
            article_count: 64,
            article_of_paper: Vec::new(),
            paper_lookup: HashMap::new(),
        }
    }

    #[test]
    fn cosine_examples() {
        let idx = hand_index(&[&[1, 2], &[1, 3], &[5, 6], &[1, 2], &[]]);
        assert_eq!(cosine(&idx, "E0", "E3").unwrap(), 1.0);
        assert_eq!(cosine(&idx, "E0", "E2").unwrap(), 0.0);
        assert_eq!(cosine(&idx, "E0", "E1").unwrap(), 0.5);
        assert_eq!(cosine(&idx, "E4", "E4").unwrap(), 0.0);
        assert!(matches!(
            cosine(&idx, "E0", "nope"),
            Err(SimError::UnknownEntity { .. })
        ));
    }

    #[test]
    fn pairwise_blocks() {
        let idx = hand_index(&[&[1, 2], &[3]]);
        let b = pairwise_similarity(&idx, &["E0", "E1"]).unwrap();
        assert_eq!(b.values, vec![1.0, 0.0, 0.0, 1.0]);
        let b = pairwise_similarity(&idx, &["E1"]).unwrap();
        assert_eq!(b.values, vec![1.0]);
        assert!(matches!(
            pairwise_similarity(&idx, &["E1", "E1"]),
            Err(SimError::DuplicateEntity(_))
        ));
    }

    #[test]
    fn leave_one_out_drops_focal_article() {
        // P2 is the only co-user of D1 and D2
        let corpus = two_paper_corpus();
        let idx = build_incidence(&corpus, Mode::Dataset);
        let (d1, d2) = (idx.entity("D1").unwrap(), idx.entity("D2").unwrap());
        let focal = idx.article_of("P2");
        let mut literal = SimilarityProvider::new(&idx);
        assert!((literal.similarity(d1, d2, focal) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let mut loo = SimilarityProvider::new(&idx).with_leave_one_out(true);
        assert_eq!(loo.similarity(d1, d2, focal), 0.0);
        // D2 has no other user, so its column is empty without P2
        assert_eq!(loo.similarity(d2, d2, focal), 0.0);
        assert_eq!(loo.similarity(d1, d1, focal), 1.0);
    }

    #[test]
    fn cache_round_trip() {
        let corpus = two_paper_corpus();
        let idx = build_incidence(&corpus, Mode::Topic);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topic.idx");
        idx.save_cache(&path, &corpus.content_hash()).unwrap();
        let back = IncidenceIndex::load_cache(&path, &corpus, Mode::Topic)
            .unwrap()
            .unwrap();
        assert_eq!(back, idx);
        assert!(IncidenceIndex::load_cache(&path, &corpus, Mode::Dataset)
            .unwrap()
            .is_none());
        let other = Corpus::new(corpus.datasets().to_vec(), Vec::new(), impacts());
        assert!(IncidenceIndex::load_cache(&path, &other, Mode::Topic)
            .unwrap()
            .is_none());
    }

    fn sorted_set() -> impl Strategy<Value = Vec<u32>> {
        proptest::collection::btree_set(0u32..400, 0..120).prop_map(|s| s.into_iter().collect())
    }

    proptest! {
        #[test]
        fn intersection_matches_naive(a in sorted_set(), b in sorted_set()) {
            let naive = a.iter().filter(|x| b.contains(x)).count();
            prop_assert_eq!(intersection_size(&a, &b), naive);
        }

        #[test]
        fn galloping_path_matches_naive(a in proptest::collection::btree_set(0u32..5000, 0..4),
                                        b in proptest::collection::btree_set(0u32..5000, 100..800)) {
            let a: Vec<u32> = a.into_iter().collect();
            let b: Vec<u32> = b.into_iter().collect();
            let naive = a.iter().filter(|x| b.contains(x)).count();
            prop_assert_eq!(intersection_size(&a, &b), naive);
        }

        #[test]
        fn cosine_matches_dense_vectors(a in sorted_set(), b in sorted_set()) {
            let idx = hand_index(&[&a, &b]);
            let dense = |c: &[u32]| {
                let mut v = vec![0.0f64; 400];
                for &x in c { v[x as usize] = 1.0; }
                v
            };
            let (va, vb) = (dense(&a), dense(&b));
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
            let na: f64 = va.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = vb.iter().map(|x| x * x).sum::<f64>().sqrt();
            let expected = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
            let got = cosine(&idx, "E0", "E1").unwrap();
            prop_assert!((got - expected).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
            prop_assert_eq!(got, cosine(&idx, "E1", "E0").unwrap());
        }
    }
}
