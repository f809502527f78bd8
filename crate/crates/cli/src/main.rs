//! `datacomb`: command-line front end. Each subcommand reads and writes the
//! documented CSV/JSON formats so stages compose through files.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use datacomb::corpus::Window;
use datacomb::features::ScoreTable;
use datacomb::metrics::{read_scores_csv, ScoreMode, ScoreOptions};
use datacomb::pipeline::{
    self, default_models, write_matches, write_model, write_output, MatchingOptions, ModelEntry,
    PipelineConfig,
};
use datacomb::simengine::Mode;
use datacomb::synth::{generate_corpus, SynthConfig};
use serde::de::DeserializeOwned;

#[derive(Parser)]
#[command(name = "datacomb", version, about = "Dataset-combination atypicality and impact analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Directory holding datasets.jsonl, papers.jsonl and journals.csv.
    #[arg(long)]
    corpus_dir: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a corpus; writes validation.json.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Score every paper in one similarity space; writes scores/<mode>.csv.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "dataset")]
        mode: Mode,
        /// JSON score options (pair convention, leave-one-out).
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Build feature tables and fit models; writes features/ and fits/.
    Fit {
        #[command(flatten)]
        common: Common,
        /// JSON model entry, or a list of them. Defaults to the three headline models.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Fixed dispersion for count models.
        #[arg(long)]
        alpha: Option<f64>,
        /// Citation window in years (3, 5 or 10).
        #[arg(long, value_parser = parse_window)]
        window: Option<Window>,
        /// Directory of score CSVs from `score`; missing modes are computed.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
    /// Matched-pair robustness checks; writes matching/.
    Match {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON matching options.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Evaluate only this citation window.
        #[arg(long, value_parser = parse_window)]
        window: Option<Window>,
    },
    /// Generate a synthetic corpus with planted effects plus ground_truth.json.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON generator configuration.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Run every stage and write the full report bundle with manifest.json.
    Report {
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON pipeline configuration; flags override its fields.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Restrict scoring to one space (models still add what they need).
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_parser = parse_window)]
        window: Option<Window>,
    },
}

fn parse_window(s: &str) -> Result<Window, String> {
    s.parse::<u32>()
        .ok()
        .and_then(Window::from_years)
        .ok_or_else(|| format!("invalid window {s:?} (expected 3, 5 or 10)"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f)).with_context(|| format!("invalid JSON in {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        use std::io::Write;
        writeln!(w)?;
        Ok(())
    })?;
    Ok(())
}

fn read_models(path: &Path) -> Result<Vec<ModelEntry>> {
    let value: serde_json::Value = read_json(path)?;
    let models = if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|m| vec![m])
    };
    models.with_context(|| format!("invalid model spec in {}", path.display()))
}

fn adjust_models(models: &mut [ModelEntry], alpha: Option<f64>, window: Option<Window>) {
    for m in models {
        if let Some(w) = window {
            m.spec.model = m.spec.model.with_window(w);
        }
        if alpha.is_some() {
            m.alpha = alpha;
        }
    }
}

fn ingest(common: &Common) -> Result<()> {
    let corpus = datacomb::corpus::load_corpus_dir(&common.corpus_dir)?;
    let report = datacomb::corpus::validate(&corpus);
    write_json(&common.out.join("validation.json"), &report)?;
    eprintln!(
        "{} papers, {} datasets, {} errors, {} warnings",
        report.summary.papers,
        report.summary.datasets,
        report.errors.len(),
        report.warnings.len()
    );
    if !report.is_valid() {
        bail!("corpus {} failed validation", common.corpus_dir.display());
    }
    Ok(())
}

fn score(common: &Common, mode: Mode, spec: Option<&Path>) -> Result<()> {
    let options: ScoreOptions = spec.map(read_json).transpose()?.unwrap_or_default();
    let (corpus, _) = pipeline::load_stage(&common.corpus_dir)?;
    let sets = pipeline::score_stage(&corpus, &[ScoreMode::from_index_mode(mode)], &options)?;
    for set in &sets {
        let path = common.out.join("scores").join(format!("{}.csv", set.mode.name()));
        write_output(&path, |w| Ok(set.write_csv(w)?))?;
        eprintln!("{}: {} scored, {} skipped", path.display(), set.scores.len(), set.skipped.len());
    }
    Ok(())
}

fn fit(
    common: &Common,
    spec: Option<&Path>,
    alpha: Option<f64>,
    window: Option<Window>,
    scores_dir: Option<&Path>,
) -> Result<()> {
    let mut models = match spec {
        Some(p) => read_models(p)?,
        None => default_models(),
    };
    adjust_models(&mut models, alpha, window);
    let (corpus, _) = pipeline::load_stage(&common.corpus_dir)?;

    let mut needed: Vec<ScoreMode> = models.iter().flat_map(|m| m.spec.required_scores()).collect();
    needed.sort();
    needed.dedup();
    let mut table = ScoreTable::new();
    let mut missing = Vec::new();
    for mode in needed {
        let file = scores_dir.map(|d| d.join(format!("{}.csv", mode.name())));
        match file.filter(|f| f.is_file()) {
            Some(f) => {
                let rdr = File::open(&f).with_context(|| format!("cannot read {}", f.display()))?;
                let scores = read_scores_csv(BufReader::new(rdr)).with_context(|| format!("reading {}", f.display()))?;
                for s in scores {
                    table.insert(mode, &s.paper_id, s.raw);
                }
            }
            None => missing.push(mode),
        }
    }
    for set in pipeline::score_stage(&corpus, &missing, &ScoreOptions::default())? {
        table.insert_set(&set);
    }

    let fitted = pipeline::fit_stage(&corpus, &table, &models, &Default::default())?;
    for m in &fitted {
        write_model(&common.out, m)?;
        let focal = m.entry.spec.model.focal_term();
        match m.fit.term(focal) {
            Some(t) => eprintln!(
                "{}: n={} {}={:.4} (se {:.4}), converged={}",
                m.name(),
                m.fit.n_obs,
                focal,
                t.coef,
                t.std_err,
                m.fit.converged
            ),
            None => eprintln!("{}: n={}, converged={}", m.name(), m.fit.n_obs, m.fit.converged),
        }
    }
    Ok(())
}

fn run_match(common: &Common, seed: Option<u64>, spec: Option<&Path>, window: Option<Window>) -> Result<()> {
    let mut options: MatchingOptions = spec.map(read_json).transpose()?.unwrap_or_default();
    options.enabled = true;
    if let Some(w) = window {
        options.windows = vec![w];
    }
    let Some(seed) = seed else {
        bail!("configuration error: matching needs a seed; pass --seed");
    };
    let (corpus, _) = pipeline::load_stage(&common.corpus_dir)?;
    let dataset = pipeline::score_stage(&corpus, &[ScoreMode::Dataset], &ScoreOptions::default())?;
    for (report, summary) in pipeline::match_stage(&corpus, dataset.first(), &options, seed)? {
        write_matches(&common.out, &report, &summary)?;
        eprintln!(
            "{:?}: {} focal papers, {} pairs, {} unmatched, {} dropped",
            summary.method, summary.focal_count, summary.n_pairs, summary.unmatched, summary.dropped_not_lower
        );
    }
    Ok(())
}

fn synth(out: &Path, seed: Option<u64>, spec: Option<&Path>, alpha: Option<f64>) -> Result<()> {
    let mut config: SynthConfig = spec.map(read_json).transpose()?.unwrap_or_default();
    match (seed, spec) {
        (Some(s), _) => config.seed = s,
        (None, None) => bail!("configuration error: synth needs a seed; pass --seed"),
        (None, Some(_)) => {}
    }
    if let Some(a) = alpha {
        config.alpha = a;
    }
    let generated = generate_corpus(&config)?;
    generated.corpus.write_dir(out)?;
    write_json(&out.join("ground_truth.json"), &generated.truth)?;
    eprintln!(
        "{}: {} papers, {} datasets",
        out.display(),
        generated.corpus.papers().len(),
        generated.corpus.datasets().len()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn report(
    corpus_dir: Option<PathBuf>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    spec: Option<&Path>,
    mode: Option<Mode>,
    alpha: Option<f64>,
    window: Option<Window>,
) -> Result<()> {
    let mut config = match spec {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => {
            let (Some(c), Some(o)) = (corpus_dir.clone(), out.clone()) else {
                bail!("report needs --corpus-dir and --out, or --spec");
            };
            PipelineConfig::new(c, o, seed)
        }
    };
    if let Some(c) = corpus_dir {
        config.corpus_dir = c;
    }
    if let Some(o) = out {
        config.out_dir = o;
    }
    if seed.is_some() {
        config.seed = seed;
    }
    if let Some(m) = mode {
        config.modes = vec![m];
    }
    adjust_models(&mut config.models, alpha, window);
    if let Some(w) = window {
        config.matching.windows = vec![w];
    }
    let manifest = pipeline::run_pipeline(&config)?;
    for m in &manifest.models {
        eprintln!("{}: n={}, converged={}", m.name, m.n_obs, m.converged);
    }
    eprintln!("{} outputs in {}", manifest.outputs.len() + 1, config.out_dir.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest { common } => ingest(&common),
        Command::Score { common, mode, spec } => score(&common, mode, spec.as_deref()),
        Command::Fit {
            common,
            spec,
            alpha,
            window,
            scores,
        } => fit(&common, spec.as_deref(), alpha, window, scores.as_deref()),
        Command::Match {
            common,
            seed,
            spec,
            window,
        } => run_match(&common, seed, spec.as_deref(), window),
        Command::Synth { out, seed, spec, alpha } => synth(&out, seed, spec.as_deref(), alpha),
        Command::Report {
            corpus_dir,
            out,
            seed,
            spec,
            mode,
            alpha,
            window,
        } => report(corpus_dir, out, seed, spec.as_deref(), mode, alpha, window),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
