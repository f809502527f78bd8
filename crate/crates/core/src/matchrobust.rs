//! Matched-pair robustness checks and their tests.
//!
//! Two matchings are provided. Count matching pairs every two-dataset paper
//! with a paper from the nearest year that uses only one of its datasets.
//! Atypicality matching pairs each top-decile two-dataset paper with the
//! least atypical paper sharing one of its datasets. Pairs are then compared
//! on citations with a paired t-test, a one-sample t-test on citation ratios
//! and an exact sign test.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::corpus::{Citations, Corpus, PaperRecord, Window};
use crate::features::nearest_rank;
use crate::metrics::{mean_sd, ScoreSet};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("need at least 2 pairs with {window} citations for both papers, found {found}")]
    TooFewPairs { window: Window, found: usize },
    #[error("pair csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("pair summary: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMethod {
    Count,
    Atypicality,
}

/// Which papers may serve as the single-dataset side of a count match.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRule {
    /// Papers using exactly one dataset, which is one of the focal pair.
    #[default]
    SingleDataset,
    /// Papers using exactly one of the focal pair, whatever else they use.
    OneOfPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub focal_id: String,
    pub matched_id: String,
    pub shared_dataset: String,
    pub year_gap: u32,
    pub focal_citations: Citations,
    pub matched_citations: Citations,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_score: Option<f64>,
}

impl MatchedPair {
    pub fn outcomes(&self, window: Window) -> Option<(u64, u64)> {
        Some((
            self.focal_citations.get(window)?,
            self.matched_citations.get(window)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub method: MatchMethod,
    pub seed: u64,
    pub focal_count: usize,
    /// Focals with no eligible candidate.
    pub unmatched: usize,
    /// Atypicality matches dropped because the match was not strictly less atypical.
    pub dropped_not_lower: usize,
    pub pairs: Vec<MatchedPair>,
}

impl MatchReport {
    pub fn write_pairs_csv<W: Write>(&self, w: W) -> Result<(), MatchError> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![
            "focal_id",
            "matched_id",
            "shared_dataset",
            "year_gap",
            "focal_score",
            "matched_score",
        ]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
        for win in Window::ALL {
            header.push(format!("focal_citations_{win}"));
            header.push(format!("matched_citations_{win}"));
        }
        out.write_record(&header)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let cnt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.pairs {
            let mut rec = vec![
                p.focal_id.clone(),
                p.matched_id.clone(),
                p.shared_dataset.clone(),
                p.year_gap.to_string(),
                opt(p.focal_score),
                opt(p.matched_score),
            ];
            for win in Window::ALL {
                rec.push(cnt(p.focal_citations.get(win)));
                rec.push(cnt(p.matched_citations.get(win)));
            }
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

/// Draws uniformly among tied best candidates; consumes randomness only when
/// there is an actual tie.
fn pick<'a, T>(rng: &mut ChaCha8Rng, best: &'a [T]) -> &'a T {
    if best.len() == 1 {
        &best[0]
    } else {
        &best[rng.random_range(0..best.len())]
    }
}

fn dataset_users(corpus: &Corpus) -> BTreeMap<&str, Vec<usize>> {
    let mut users: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, p) in corpus.papers().iter().enumerate() {
        for d in &p.dataset_ids {
            users.entry(d.as_str()).or_default().push(i);
        }
    }
    users
}

fn pair(focal: &PaperRecord, matched: &PaperRecord, shared: &str) -> MatchedPair {
    MatchedPair {
        focal_id: focal.id.clone(),
        matched_id: matched.id.clone(),
        shared_dataset: shared.to_string(),
        year_gap: focal.year.abs_diff(matched.year),
        focal_citations: focal.citations,
        matched_citations: matched.citations,
        focal_score: None,
        matched_score: None,
    }
}

pub fn match_by_count(corpus: &Corpus, seed: u64) -> MatchReport {
    match_by_count_with(corpus, seed, CandidateRule::default())
}

/// Pairs each exactly-two-dataset paper with a nearest-year paper using only
/// one of its datasets. Candidates may be reused across focals.
pub fn match_by_count_with(corpus: &Corpus, seed: u64, rule: CandidateRule) -> MatchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let users = dataset_users(corpus);
    let papers = corpus.papers();
    let mut report = MatchReport {
        method: MatchMethod::Count,
        seed,
        focal_count: 0,
        unmatched: 0,
        dropped_not_lower: 0,
        pairs: Vec::new(),
    };
    for focal in papers.iter().filter(|p| p.n_datasets() == 2) {
        report.focal_count += 1;
        let (a, b) = (&focal.dataset_ids[0], &focal.dataset_ids[1]);
        let mut candidates: Vec<(usize, &str)> = Vec::new();
        for (this, other) in [(a, b), (b, a)] {
            for &i in users.get(this.as_str()).into_iter().flatten() {
                let c = &papers[i];
                let eligible = match rule {
                    CandidateRule::SingleDataset => c.n_datasets() == 1,
                    CandidateRule::OneOfPair => !c.dataset_ids.contains(other),
                };
                if eligible && c.id != focal.id {
                    candidates.push((i, this.as_str()));
                }
            }
        }
        let Some(gap) = candidates
            .iter()
            .map(|&(i, _)| focal.year.abs_diff(papers[i].year))
            .min()
        else {
            report.unmatched += 1;
            continue;
        };
        let mut best: Vec<(usize, &str)> = candidates
            .into_iter()
            .filter(|&(i, _)| focal.year.abs_diff(papers[i].year) == gap)
            .collect();
        best.sort_by(|x, y| papers[x.0].id.cmp(&papers[y.0].id));
        let &(i, shared) = pick(&mut rng, &best);
        report.pairs.push(pair(focal, &papers[i], shared));
    }
    report
}

/// Pairs each exactly-two-dataset paper whose score strictly exceeds the
/// nearest-rank 90th percentile with the least atypical multi-dataset paper
/// sharing one of its datasets. Matches that are not strictly less atypical
/// are dropped.
pub fn match_by_atypicality(corpus: &Corpus, scores: &ScoreSet, seed: u64) -> MatchReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let by_paper = scores.by_paper();
    let papers = corpus.papers();
    let score_of = |p: &PaperRecord| {
        by_paper
            .get(p.id.as_str())
            .filter(|s| !s.is_degenerate())
            .map(|s| s.raw)
    };
    let mut report = MatchReport {
        method: MatchMethod::Atypicality,
        seed,
        focal_count: 0,
        unmatched: 0,
        dropped_not_lower: 0,
        pairs: Vec::new(),
    };

    let group: Vec<(&PaperRecord, f64)> = papers
        .iter()
        .filter(|p| p.n_datasets() == 2)
        .filter_map(|p| score_of(p).map(|s| (p, s)))
        .collect();
    if group.is_empty() {
        return report;
    }
    let mut sorted: Vec<f64> = group.iter().map(|g| g.1).collect();
    sorted.sort_by(f64::total_cmp);
    let threshold = nearest_rank(&sorted, 0.9);

    let users = dataset_users(corpus);
    for &(focal, focal_score) in group.iter().filter(|g| g.1 > threshold) {
        report.focal_count += 1;
        let candidates: BTreeSet<usize> = focal
            .dataset_ids
            .iter()
            .flat_map(|d| users.get(d.as_str()).into_iter().flatten().copied())
            .filter(|&i| papers[i].id != focal.id && score_of(&papers[i]).is_some())
            .collect();
        let Some(min) = candidates
            .iter()
            .map(|&i| score_of(&papers[i]).unwrap())
            .min_by(f64::total_cmp)
        else {
            report.unmatched += 1;
            continue;
        };
        let best: Vec<usize> = candidates
            .into_iter()
            .filter(|&i| score_of(&papers[i]) == Some(min))
            .collect();
        let matched = &papers[*pick(&mut rng, &best)];
        if min >= focal_score {
            report.dropped_not_lower += 1;
            continue;
        }
        let shared = focal
            .dataset_ids
            .iter()
            .find(|d| matched.dataset_ids.contains(d))
            .expect("candidates share a dataset");
        let mut p = pair(focal, matched, shared);
        p.focal_score = Some(focal_score);
        p.matched_score = Some(min);
        report.pairs.push(p);
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Observations left out of this test.
    pub excluded: usize,
}

/// Two-sided Student-t test that the mean of `values` equals `mu0`.
pub fn one_sample_t_test(values: &[f64], mu0: f64) -> TestResult {
    let n = values.len();
    let (mean, sd) = mean_sd(values);
    let diff = mean - mu0;
    let (statistic, p_value) = if n < 2 {
        (f64::NAN, 1.0)
    } else if sd == 0.0 {
        if diff == 0.0 {
            (0.0, 1.0)
        } else {
            (diff.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = diff / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("n >= 2");
        (t, (2.0 * dist.sf(t.abs())).min(1.0))
    };
    TestResult {
        test: "one-sample t".into(),
        statistic,
        p_value,
        n,
        excluded: 0,
    }
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> TestResult {
    assert_eq!(a.len(), b.len(), "paired samples differ in length");
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    TestResult {
        test: "paired t".into(),
        ..one_sample_t_test(&diffs, 0.0)
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`, summed term by term.
pub fn binomial_upper_tail(k: usize, n: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let ln_half_n = n as f64 * std::f64::consts::LN_2;
    let ln_nf = ln_gamma(n as f64 + 1.0);
    // smallest terms first
    (k..=n)
        .rev()
        .map(|j| {
            (ln_nf - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64 + 1.0) - ln_half_n).exp()
        })
        .sum::<f64>()
        .min(1.0)
}

/// Exact two-sided sign test of `values` against the median `m0`; values equal
/// to `m0` are dropped.
pub fn sign_test(values: &[f64], m0: f64) -> TestResult {
    let above = values.iter().filter(|&&v| v > m0).count();
    let below = values.iter().filter(|&&v| v < m0).count();
    let n = above + below;
    let p_value = if n == 0 {
        1.0
    } else {
        (2.0 * binomial_upper_tail(above.max(below), n)).min(1.0)
    };
    TestResult {
        test: "sign".into(),
        statistic: above as f64,
        p_value,
        n,
        excluded: values.len() - n,
    }
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        let (a, b) = (sorted[n / 2 - 1], sorted[n / 2]);
        if a == b {
            a
        } else {
            // an infinite upper middle leaves the median infinite
            a / 2.0 + b / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub window: Window,
    /// Pairs with both citation counts observed in the window.
    pub n_pairs: usize,
    pub paired_t: TestResult,
    /// Mean of finite focal/matched ratios.
    pub ratio_mean: Option<f64>,
    /// Median over all usable pairs, zero denominators included.
    pub ratio_median: f64,
    /// One-sample t-test of the finite ratios against 1.
    pub mean_t: Option<TestResult>,
    pub sign: TestResult,
    /// Pairs whose matched paper has zero citations.
    pub zero_denominator: usize,
}

/// Citation ratio focal/matched. A zero denominator gives 1 for 0/0 and
/// infinity otherwise.
pub fn citation_ratio(focal: u64, matched: u64) -> f64 {
    match (focal, matched) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (f, m) => f as f64 / m as f64,
    }
}

pub fn evaluate_pairs(pairs: &[MatchedPair], window: Window) -> Result<PairEvaluation, MatchError> {
    let usable: Vec<(u64, u64)> = pairs.iter().filter_map(|p| p.outcomes(window)).collect();
    if usable.len() < 2 {
        return Err(MatchError::TooFewPairs {
            window,
            found: usable.len(),
        });
    }
    let focal: Vec<f64> = usable.iter().map(|&(f, _)| f as f64).collect();
    let matched: Vec<f64> = usable.iter().map(|&(_, m)| m as f64).collect();
    let ratios: Vec<f64> = usable.iter().map(|&(f, m)| citation_ratio(f, m)).collect();
    let zero_denominator = usable.iter().filter(|&&(_, m)| m == 0).count();
    let finite: Vec<f64> = usable
        .iter()
        .filter(|&&(_, m)| m > 0)
        .map(|&(f, m)| f as f64 / m as f64)
        .collect();

    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let mean_t = (finite.len() >= 2).then(|| TestResult {
        excluded: zero_denominator,
        ..one_sample_t_test(&finite, 1.0)
    });
    Ok(PairEvaluation {
        window,
        n_pairs: usable.len(),
        paired_t: paired_t_test(&focal, &matched),
        ratio_mean: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        ratio_median: median(&sorted),
        mean_t,
        sign: sign_test(&ratios, 1.0),
        zero_denominator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::fixtures::{dataset, impacts, paper};
    use crate::metrics::{AtypicalityScore, ScoreMode};

    fn cites(y3: u64) -> Citations {
        Citations {
            y3: Some(y3),
            y5: None,
            y10: None,
        }
    }

    fn outcome_pair(f: u64, m: u64) -> MatchedPair {
        MatchedPair {
            focal_id: "F".into(),
            matched_id: "M".into(),
            shared_dataset: "A".into(),
            year_gap: 0,
            focal_citations: cites(f),
            matched_citations: cites(m),
            focal_score: None,
            matched_score: None,
        }
    }

    fn corpus(papers: Vec<PaperRecord>) -> Corpus {
        let ds = ["A", "B", "C", "D"].iter().map(|d| dataset(d, &["T"])).collect();
        Corpus::new(ds, papers, impacts())
    }

    #[test]
    fn count_match_nearest_year() {
        let c = corpus(vec![
            paper("P1", 2004, &["A"]),
            paper("P2", 2010, &["B"]),
            paper("P3", 2005, &["A", "B"]),
        ]);
        let r = match_by_count(&c, 1);
        assert_eq!(r.pairs.len(), 1);
        assert_eq!(r.pairs[0].matched_id, "P1");
        assert_eq!(r.pairs[0].year_gap, 1);
        assert_eq!(r.pairs[0].shared_dataset, "A");
    }

    #[test]
    fn count_match_excludes_papers_using_both() {
        let c = corpus(vec![
            paper("P1", 2005, &["A", "B", "C"]),
            paper("P2", 2011, &["B"]),
            paper("P3", 2005, &["A", "B"]),
            paper("P4", 2005, &["A", "C"]),
        ]);
        let strict = match_by_count(&c, 1);
        let p3 = strict.pairs.iter().find(|p| p.focal_id == "P3").unwrap();
        assert_eq!(p3.matched_id, "P2");
        // P4 = {A, C}: P1 uses both, nobody else uses A or C alone
        assert_eq!(strict.unmatched, 1);

        let loose = match_by_count_with(&c, 1, CandidateRule::OneOfPair);
        let p3 = loose.pairs.iter().find(|p| p.focal_id == "P3").unwrap();
        // P4 uses A but not B
        assert_eq!(p3.matched_id, "P4");
    }

    #[test]
    fn count_match_ties_depend_on_seed_only() {
        let c = corpus(vec![
            paper("P1", 2004, &["A"]),
            paper("P2", 2006, &["B"]),
            paper("P3", 2005, &["A", "B"]),
        ]);
        let first = match_by_count(&c, 42);
        assert_eq!(first, match_by_count(&c, 42));
        let seen: BTreeSet<String> = (0..64)
            .map(|s| match_by_count(&c, s).pairs[0].matched_id.clone())
            .collect();
        assert_eq!(seen, BTreeSet::from(["P1".to_string(), "P2".to_string()]));
    }

    fn score_set(entries: &[(&str, f64, usize)]) -> ScoreSet {
        ScoreSet {
            mode: ScoreMode::Dataset,
            scores: entries
                .iter()
                .map(|&(id, raw, n)| AtypicalityScore {
                    paper_id: id.into(),
                    mode: ScoreMode::Dataset,
                    raw,
                    normalized: None,
                    n_entities: n,
                })
                .collect(),
            skipped: Vec::new(),
        }
    }

    #[test]
    fn decile_of_ten_is_the_maximum() {
        let ids: Vec<String> = (0..10).map(|i| format!("Q{i}")).collect();
        let papers = ids.iter().map(|id| paper(id, 2000, &["A", "B"])).collect();
        let entries: Vec<(&str, f64, usize)> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i as f64 / 10.0, 2)).collect();
        let r = match_by_atypicality(&corpus(papers), &score_set(&entries), 3);
        assert_eq!(r.focal_count, 1);
        assert_eq!(r.pairs[0].focal_id, "Q9");
        assert_eq!(r.pairs[0].matched_id, "Q0");
    }

    #[test]
    fn equal_score_match_is_dropped() {
        let mut papers = Vec::new();
        let mut entries = Vec::new();
        let ids: Vec<String> = (0..10).map(|i| format!("Q{i}")).collect();
        for (i, id) in ids.iter().enumerate() {
            // Q9 uses C and D, shared only with Q8 at the same score
            let ds: &[&str] = if i >= 8 { &["C", "D"] } else { &["A", "B"] };
            papers.push(paper(id, 2000, ds));
            entries.push((id.as_str(), if i >= 8 { 0.9 } else { i as f64 / 10.0 }, 2));
        }
        let r = match_by_atypicality(&corpus(papers), &score_set(&entries), 3);
        // nearest-rank threshold is 0.9 itself, so no focal strictly exceeds it
        assert_eq!(r.focal_count, 0);

        let mut papers: Vec<PaperRecord> =
            ids.iter().take(9).map(|id| paper(id, 2000, &["A", "B"])).collect();
        papers.push(paper("Z", 2000, &["C", "D"]));
        papers.push(paper("Y", 2000, &["C", "D", "A"]));
        let mut entries: Vec<(&str, f64, usize)> =
            ids.iter().take(9).enumerate().map(|(i, id)| (id.as_str(), i as f64 / 10.0, 2)).collect();
        entries.push(("Z", 5.0, 2));
        entries.push(("Y", 5.0, 3));
        let r = match_by_atypicality(&corpus(papers), &score_set(&entries), 3);
        assert_eq!(r.focal_count, 1);
        // Y is Z's only candidate and ties it
        assert_eq!(r.dropped_not_lower, 1);
        assert!(r.pairs.is_empty());
    }

    #[test]
    fn isolated_focal_is_counted() {
        let mut papers: Vec<PaperRecord> =
            (0..9).map(|i| paper(&format!("Q{i}"), 2000, &["A", "B"])).collect();
        papers.push(paper("Z", 2000, &["C", "D"]));
        let ids: Vec<String> = (0..9).map(|i| format!("Q{i}")).collect();
        let mut entries: Vec<(&str, f64, usize)> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i as f64 / 10.0, 2)).collect();
        entries.push(("Z", 5.0, 2));
        let r = match_by_atypicality(&corpus(papers), &score_set(&entries), 3);
        assert_eq!(r.focal_count, 1);
        assert_eq!(r.unmatched, 1);
    }

    #[test]
    fn evaluate_example_pairs() {
        let pairs = [outcome_pair(4, 2), outcome_pair(6, 3), outcome_pair(5, 5)];
        let e = evaluate_pairs(&pairs, Window::Y3).unwrap();
        assert_eq!(e.ratio_median, 2.0);
        assert!((e.ratio_mean.unwrap() - 5.0 / 3.0).abs() < 1e-15);
        assert_eq!(e.sign.statistic, 2.0);
        assert_eq!(e.sign.n, 2);
        assert_eq!(e.sign.excluded, 1);
        assert!((e.sign.p_value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identical_outcomes_are_null() {
        let pairs = [outcome_pair(3, 3), outcome_pair(7, 7), outcome_pair(0, 0)];
        let e = evaluate_pairs(&pairs, Window::Y3).unwrap();
        assert_eq!(e.paired_t.statistic, 0.0);
        assert_eq!(e.paired_t.p_value, 1.0);
        assert_eq!(e.sign.p_value, 1.0);
    }

    #[test]
    fn zero_denominator_handling() {
        let pairs = [outcome_pair(4, 2), outcome_pair(6, 3), outcome_pair(5, 0)];
        let e = evaluate_pairs(&pairs, Window::Y3).unwrap();
        assert_eq!(e.zero_denominator, 1);
        assert_eq!(e.ratio_mean, Some(2.0));
        assert_eq!(e.mean_t.as_ref().unwrap().n, 2);
        assert_eq!(e.paired_t.n, 3);
        assert_eq!(e.sign.n, 3);
        assert_eq!(e.ratio_median, 2.0);
    }

    #[test]
    fn too_few_pairs() {
        let mut p = outcome_pair(1, 1);
        p.matched_citations.y3 = None;
        assert!(matches!(
            evaluate_pairs(&[outcome_pair(1, 2), p], Window::Y3),
            Err(MatchError::TooFewPairs { found: 1, .. })
        ));
    }

    /// Exact `Σ_{j>=k} C(n, j) / 2^n` with integer binomials.
    fn tail_oracle(k: usize, n: usize) -> f64 {
        let mut c: u128 = 1;
        let mut total: u128 = 0;
        for j in 0..=n {
            if j >= k {
                total += c;
            }
            c = c * (n - j) as u128 / (j + 1) as u128;
        }
        total as f64 / 2f64.powi(n as i32)
    }

    #[test]
    fn binomial_tail_matches_integer_oracle() {
        for n in 1..=60 {
            for k in 0..=n + 1 {
                let got = binomial_upper_tail(k, n);
                assert!((got - tail_oracle(k, n)).abs() < 1e-12, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn paired_t_known_value() {
        // differences 1, 2, 3: mean 2, sd 1, t = 2 * sqrt(3)
        let t = paired_t_test(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]);
        assert!((t.statistic - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!(t.p_value > 0.05 && t.p_value < 0.1);
    }

    #[test]
    fn pair_csv_has_all_windows() {
        let r = MatchReport {
            method: MatchMethod::Count,
            seed: 0,
            focal_count: 1,
            unmatched: 0,
            dropped_not_lower: 0,
            pairs: vec![outcome_pair(2, 1)],
        };
        let mut buf = Vec::new();
        r.write_pairs_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().ends_with("focal_citations_10y,matched_citations_10y"));
        assert_eq!(lines.next().unwrap(), "F,M,A,0,,,2,1,,,,");
    }
}
