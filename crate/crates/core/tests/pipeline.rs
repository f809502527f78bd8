use std::fs;

use sha2::{Digest, Sha256};

use datacomb::corpus::{Channel, Window};
use datacomb::features::{ModelKind, Period};
use datacomb::pipeline::{run_pipeline, ModelEntry, PipelineConfig, PipelineError, SeriesPoint};
use datacomb::synth::{generate_corpus, SynthConfig};

fn corpus_dir(seed: u64) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let s = generate_corpus(&SynthConfig {
        n_papers: 4000,
        seed,
        ..SynthConfig::default()
    })
    .unwrap();
    s.corpus.write_dir(dir.path()).unwrap();
    dir
}

#[test]
fn bundle_lists_every_output_with_its_hash() {
    let corpus = corpus_dir(21);
    let out = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::new(corpus.path(), out.path(), Some(4));
    config.models.extend([
        ModelEntry::new(ModelKind::AtypicalityHit),
        ModelEntry::new(ModelKind::TeamSizeAtypicality),
        ModelEntry::new(ModelKind::AtypicalityAltmetric { channel: Channel::Twitter }),
    ]);
    config.per_period = true;
    config.timestamp = false;
    let manifest = run_pipeline(&config).unwrap();

    assert!(manifest.generated_unix.is_none());
    for (rel, hash) in &manifest.outputs {
        let bytes = fs::read(out.path().join(rel)).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(&digest, hash, "{rel}");
    }
    // the online-mention model only covers papers after 2010
    assert_eq!(manifest.models.len() + manifest.skipped_models.len(), 6 * 5);
    assert!(manifest.skipped_models.contains_key("atypicality_twitter_before1990"));
    assert!(manifest.models.iter().all(|m| m.converged));

    let series: Vec<SeriesPoint> =
        serde_json::from_slice(&fs::read(out.path().join("report/series.json")).unwrap()).unwrap();
    assert_eq!(series.len(), manifest.models.len());
    let ols = series.iter().find(|s| s.model == "teamsize_atypicality").unwrap();
    assert!(ols.effect_pct.is_none());
    let headline = series
        .iter()
        .find(|s| s.model == "datacomb_3y" && s.period == "all")
        .unwrap();
    let pct = headline.effect_pct.unwrap();
    assert!((pct - (headline.coef.exp() - 1.0) * 100.0).abs() < 1e-9);
    assert!(headline.effect_pct_low.unwrap() < pct && pct < headline.effect_pct_high.unwrap());
    assert!(series.iter().any(|s| s.period == Period::eras()[3].to_string()));
}

#[test]
fn stage_errors_name_the_stage_and_model() {
    let corpus = corpus_dir(22);
    let out = tempfile::tempdir().unwrap();
    let mut config = PipelineConfig::new(corpus.path(), out.path(), None);
    config.matching.enabled = false;
    // no synthetic paper predates 1980
    config.models = vec![ModelEntry {
        spec: datacomb::features::FeatureSpec::new(ModelKind::Atypicality { window: Window::Y3 })
            .in_period(Period { start: None, end: Some(1950) }),
        alpha: None,
    }];
    let err = run_pipeline(&config).unwrap_err();
    match &err {
        PipelineError::Stage { stage, context, .. } => {
            assert_eq!(*stage, "features");
            assert!(context.contains("atypicality_3y"), "{context}");
        }
        other => panic!("unexpected {other}"),
    }
}

#[test]
fn malformed_record_reports_its_line() {
    let corpus = corpus_dir(23);
    let papers = corpus.path().join("papers.jsonl");
    let mut text = fs::read_to_string(&papers).unwrap();
    text.push_str("{\"id\": \"broken\"\n");
    fs::write(&papers, text).unwrap();
    let out = tempfile::tempdir().unwrap();
    let err = run_pipeline(&PipelineConfig::new(corpus.path(), out.path(), Some(1)))
        .unwrap_err()
        .to_string();
    assert!(err.starts_with("ingest failed"), "{err}");
    assert!(err.contains("papers.jsonl") && err.contains("4001"), "{err}");
}
