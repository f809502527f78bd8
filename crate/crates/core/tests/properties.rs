use std::fs;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use datacomb::corpus::{load_corpus_dir, validate, Window};
use datacomb::features::{build_features, FeatureSpec, ModelKind, ScoreTable};
use datacomb::glmfit::{fit, ModelSpec, NegBinObjective};
use datacomb::matchrobust::{match_by_atypicality, match_by_count, paired_t_test};
use datacomb::metrics::{rao_stirling, score_corpus_modes, PairConvention, ScoreMode, ScoreOptions};
use datacomb::simengine::{build_incidence, cosine, Mode};
use datacomb::synth::{generate_corpus, SynthConfig};

fn small(seed: u64, n_papers: usize) -> SynthConfig {
    SynthConfig {
        n_papers,
        n_datasets: 80,
        n_topics: 15,
        n_journals: 20,
        seed,
        ..SynthConfig::default()
    }
}

fn scores_for(corpus: &datacomb::corpus::Corpus) -> ScoreTable {
    let modes = [ScoreMode::Dataset, ScoreMode::Topic, ScoreMode::PaperNovelty];
    let sets = score_corpus_modes(corpus, &modes, &ScoreOptions::default()).unwrap();
    ScoreTable::from(sets.as_slice())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn synth_output_loads_and_validates(seed in any::<u64>()) {
        let s = generate_corpus(&small(seed, 400)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.corpus.write_dir(dir.path()).unwrap();
        let loaded = load_corpus_dir(dir.path()).unwrap();
        let report = validate(&loaded);
        prop_assert!(report.errors.is_empty(), "{:?}", report.errors);
        prop_assert_eq!(
            report.summary.papers,
            report.summary.single_dataset_papers + report.summary.multi_dataset_papers
        );
        prop_assert_eq!(loaded, s.corpus);
    }

    #[test]
    fn ingestion_ignores_line_order(seed in any::<u64>()) {
        let s = generate_corpus(&small(seed, 200)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        s.corpus.write_dir(dir.path()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for name in ["datasets.jsonl", "papers.jsonl", "journals.jsonl"] {
            let path = dir.path().join(name);
            let text = fs::read_to_string(&path).unwrap();
            let mut lines: Vec<&str> = text.lines().collect();
            lines.shuffle(&mut rng);
            fs::write(&path, lines.join("\n") + "\n").unwrap();
        }
        prop_assert_eq!(load_corpus_dir(dir.path()).unwrap(), s.corpus);
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(seed in any::<u64>()) {
        let s = generate_corpus(&small(seed, 300)).unwrap();
        for mode in [Mode::Dataset, Mode::Topic, Mode::Journal] {
            let index = build_incidence(&s.corpus, mode);
            let ids = index.entity_ids();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..200 {
                let a = &ids[rng.random_range(0..ids.len())];
                let b = &ids[rng.random_range(0..ids.len())];
                let ab = cosine(&index, a, b).unwrap();
                prop_assert_eq!(ab.to_bits(), cosine(&index, b, a).unwrap().to_bits());
                prop_assert!((0.0..=1.0).contains(&ab));
            }
        }
    }

    #[test]
    fn feature_rows_account_for_population(seed in any::<u64>()) {
        let s = generate_corpus(&small(seed, 600)).unwrap();
        let scores = scores_for(&s.corpus);
        for model in [
            ModelKind::DataCombination { window: Window::Y3 },
            ModelKind::Atypicality { window: Window::Y5 },
            ModelKind::TopicAtypicality { window: Window::Y3 },
            ModelKind::TeamSizeAtypicality,
        ] {
            let t = build_features(&s.corpus, &scores, &FeatureSpec::new(model)).unwrap();
            prop_assert_eq!(t.n_rows() + t.metadata.dropped_count, t.metadata.population_count);
            for name in t.column_names.iter().filter(|n| n.ends_with("_log")) {
                prop_assert!(t.column(name).unwrap().iter().all(|v| v.is_finite()), "{}", name);
            }
        }
    }

    #[test]
    fn rao_stirling_is_permutation_invariant(
        n in 2usize..8,
        seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            d[i][i] = 1.0;
            for j in 0..i {
                let v: f64 = rng.random();
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        let w: Vec<f64> = {
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        };
        let base = rao_stirling(&w, PairConvention::AllOrdered, |i, j| d[i][j]);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let pw: Vec<f64> = perm.iter().map(|&p| w[p]).collect();
        let permuted = rao_stirling(&pw, PairConvention::AllOrdered, |i, j| d[perm[i]][perm[j]]);
        prop_assert!((base - permuted).abs() < 1e-12);

        // lowering one off-diagonal similarity never lowers the score
        let (a, b) = (0, 1 + rng.random_range(0..n - 1));
        let cut = d[a][b] * rng.random::<f64>();
        let mut lower = d.clone();
        lower[a][b] = cut;
        lower[b][a] = cut;
        let after = rao_stirling(&w, PairConvention::AllOrdered, |i, j| lower[i][j]);
        prop_assert!(after >= base);
    }

    #[test]
    fn matched_pairs_satisfy_eligibility(seed in any::<u64>()) {
        let s = generate_corpus(&small(seed, 800)).unwrap();
        let c = &s.corpus;
        let count = match_by_count(c, seed);
        prop_assert_eq!(count.pairs.len() + count.unmatched, count.focal_count);
        prop_assert_eq!(&count, &match_by_count(c, seed));
        for p in &count.pairs {
            let (f, m) = (c.paper(&p.focal_id).unwrap(), c.paper(&p.matched_id).unwrap());
            prop_assert_eq!(f.n_datasets(), 2);
            prop_assert_eq!(&m.dataset_ids, &vec![p.shared_dataset.clone()]);
            prop_assert!(f.dataset_ids.contains(&p.shared_dataset));
            prop_assert_eq!(p.year_gap, f.year.abs_diff(m.year));
        }

        let sets = score_corpus_modes(c, &[ScoreMode::Dataset], &ScoreOptions::default()).unwrap();
        let atyp = match_by_atypicality(c, &sets[0], seed);
        for p in &atyp.pairs {
            let (f, m) = (c.paper(&p.focal_id).unwrap(), c.paper(&p.matched_id).unwrap());
            prop_assert_eq!(f.n_datasets(), 2);
            prop_assert!(m.dataset_ids.contains(&p.shared_dataset) && f.dataset_ids.contains(&p.shared_dataset));
            prop_assert!(p.matched_score.unwrap() < p.focal_score.unwrap());
        }
    }
}

#[test]
fn novelty_with_uniform_counts_matches_set_formula() {
    let mut s = generate_corpus(&small(3, 300)).unwrap().corpus;
    // rebuild with every reference count set to 1
    let papers: Vec<_> = s
        .papers()
        .iter()
        .cloned()
        .map(|mut p| {
            for c in p.referenced_journal_counts.values_mut() {
                *c = 1;
            }
            p
        })
        .collect();
    s = datacomb::corpus::Corpus::new(s.datasets().to_vec(), papers, s.journal_impact().clone());
    let index = build_incidence(&s, Mode::Journal);
    let sets = score_corpus_modes(&s, &[ScoreMode::PaperNovelty], &ScoreOptions::default()).unwrap();
    for score in &sets[0].scores {
        let p = s.paper(&score.paper_id).unwrap();
        let ids: Vec<&String> = p.referenced_journal_counts.keys().collect();
        let w = vec![1.0 / ids.len() as f64; ids.len()];
        let expected = rao_stirling(&w, PairConvention::AllOrdered, |i, j| {
            cosine(&index, ids[i], ids[j]).unwrap()
        });
        assert!((score.raw - expected).abs() < 1e-12);
    }
}

#[test]
fn permuted_corpus_gives_identical_tables() {
    let s = generate_corpus(&small(9, 700)).unwrap().corpus;
    let mut papers = s.papers().to_vec();
    let mut datasets = s.datasets().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    papers.shuffle(&mut rng);
    datasets.shuffle(&mut rng);
    let shuffled = datacomb::corpus::Corpus::new(datasets, papers, s.journal_impact().clone());
    let spec = FeatureSpec::new(ModelKind::TopicAtypicality { window: Window::Y3 });
    let a = build_features(&s, &scores_for(&s), &spec).unwrap();
    let b = build_features(&shuffled, &scores_for(&shuffled), &spec).unwrap();
    assert_eq!(a.row_ids, b.row_ids);
    assert_eq!(a.columns, b.columns);
    assert_eq!(a.outcome, b.outcome);
}

#[test]
fn score_vanishes_at_the_fitted_optimum() {
    for seed in 0..5 {
        let s = generate_corpus(&small(seed, 1500)).unwrap();
        let f = fit(&s.table, &ModelSpec::negbin(1.0)).unwrap();
        let names: Vec<String> = f.terms.iter().map(|t| t.name.clone()).collect();
        let design = datacomb::glmfit::Design::from_table(&s.table, &names).unwrap();
        let beta = nalgebra::DVector::from_vec(f.coefficients());
        let g = NegBinObjective::new(&design.x, &design.y, 1.0).gradient(&beta);
        assert!(g.norm() <= 1e-8 * (1.0 + beta.norm()), "seed {seed}: {}", g.norm());
    }
}

/// Two-dataset papers drawn with a 25% higher NB mean than their matches: the
/// paired t-test should reject at 5% in at least 90% of 500-pair samples.
#[test]
fn paired_t_power_on_higher_means() {
    use rand_distr::{Distribution, Gamma, Poisson};
    let draw = |rng: &mut ChaCha8Rng, mu: f64| {
        let lambda = Gamma::new(1.0, mu).unwrap().sample(rng);
        if lambda <= 0.0 {
            0.0
        } else {
            Poisson::new(lambda).unwrap().sample(rng)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let reps = 400;
    let mut rejections = 0;
    for _ in 0..reps {
        let (mut a, mut b) = (Vec::with_capacity(500), Vec::with_capacity(500));
        for _ in 0..500 {
            let base = rng.random_range(3.0..8.0);
            a.push(draw(&mut rng, base * 1.25));
            b.push(draw(&mut rng, base));
        }
        let t = paired_t_test(&a, &b);
        if t.p_value < 0.05 && t.statistic > 0.0 {
            rejections += 1;
        }
    }
    let power = rejections as f64 / reps as f64;
    assert!(power >= 0.9, "power {power}");
}
