use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use defrauder::detect::ScoredGroup;
use defrauder::eval::CoherenceFeature;
use defrauder::pipeline::{self, Manifest, PipelineConfig};
use defrauder::rank::{RankOrder, RankedGroup};
use defrauder::report;
use defrauder::synth::{self, CampaignSpec};
use defrauder::{Error, Result};

const PRECEDENCE: &str = "Settings are resolved in three layers: built-in defaults, then the \
TOML file given with --config, then command-line flags. DEFRAUDER_THREADS sets the thread \
count when --threads is absent.";

#[derive(Parser)]
#[command(name = "defrauder", version, about = "Detect and rank collusive reviewer groups", after_help = PRECEDENCE)]
struct Cli {
    /// Worker threads (0 = all cores). 1 makes every output reproducible.
    #[arg(long, global = true, env = "DEFRAUDER_THREADS")]
    threads: Option<usize>,

    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

struct Global {
    threads: Option<usize>,
    config: Option<PathBuf>,
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with planted groups.
    Synth(SynthArgs),
    /// Extract candidate groups and their indicator scores.
    Detect(DetectArgs),
    /// Rank a groups file by embedding dispersion.
    Rank(RankArgs),
    /// Compute metrics for a ranked report.
    Eval(EvalArgs),
    /// Detect, rank and evaluate in one run.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Campaign spec (TOML).
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Default)]
struct InputArgs {
    /// Reviews file: CSV, or JSON lines for .jsonl/.ndjson/.json.
    #[arg(long)]
    reviews: Option<PathBuf>,
    /// `reviewer_id,label` CSV.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    rating_min: Option<i32>,
    #[arg(long, allow_hyphen_values = true)]
    rating_max: Option<i32>,
    /// Word vectors (`word v1 .. vd` lines) for review text.
    #[arg(long)]
    word_vectors: Option<PathBuf>,
}

#[derive(Args, Default)]
struct DetectFlags {
    /// Co-review time threshold in days.
    #[arg(long)]
    tau_t: Option<f64>,
    /// Collective score a group must exceed.
    #[arg(long)]
    tau_spam: Option<f64>,
    /// Time-window indicator width in days.
    #[arg(long)]
    time_window: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Args, Default)]
struct RankFlags {
    /// ascending (tightest first) or descending.
    #[arg(long)]
    order: Option<RankOrder>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    walks_per_node: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Also write the reviewer embedding.
    #[arg(long)]
    write_embedding: bool,
}

#[derive(Args, Default)]
struct EvalFlags {
    /// Comma-separated NDCG cutoffs.
    #[arg(long, value_delimiter = ',')]
    k: Option<Vec<usize>>,
    /// Comma-separated coherence features.
    #[arg(long, value_delimiter = ',')]
    ks_feature: Option<Vec<CoherenceFeature>>,
    #[arg(long)]
    random_pairs: Option<usize>,
}

#[derive(Args)]
struct DetectArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
}

#[derive(Args)]
struct RankArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Groups file from `detect`.
    #[arg(long)]
    groups: PathBuf,
    #[command(flatten)]
    rank: RankFlags,
    #[arg(long)]
    time_window: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    groups: PathBuf,
    /// Ranked report from `rank`.
    #[arg(long)]
    ranked: PathBuf,
    #[command(flatten)]
    eval: EvalFlags,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    detect: DetectFlags,
    #[command(flatten)]
    rank: RankFlags,
    #[command(flatten)]
    eval: EvalFlags,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl InputArgs {
    fn apply(self, c: &mut PipelineConfig) {
        c.paths.reviews = self.reviews.or(c.paths.reviews.take());
        c.paths.labels = self.labels.or(c.paths.labels.take());
        c.paths.output_dir = self.out.or(c.paths.output_dir.take());
        c.paths.word_vectors = self.word_vectors.or(c.paths.word_vectors.take());
        set(&mut c.rating_scale.min, self.rating_min);
        set(&mut c.rating_scale.max, self.rating_max);
    }
}

impl DetectFlags {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.detection.tau_t, self.tau_t);
        set(&mut c.detection.tau_spam, self.tau_spam);
        set(&mut c.detection.time_window_days, self.time_window);
        set(&mut c.detection.max_iterations, self.max_iterations);
    }
}

impl RankFlags {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.ranking.order, self.order);
        set(&mut c.collusion.alpha, self.alpha);
        set(&mut c.collusion.beta, self.beta);
        set(&mut c.collusion.gamma, self.gamma);
        set(&mut c.collusion.theta, self.theta);
        set(&mut c.embedding.dim, self.dim);
        set(&mut c.embedding.walk_length, self.walk_length);
        set(&mut c.embedding.walks_per_node, self.walks_per_node);
        set(&mut c.embedding.window, self.window);
        c.ranking.write_embedding |= self.write_embedding;
    }
}

impl EvalFlags {
    fn apply(self, c: &mut PipelineConfig) {
        set(&mut c.evaluation.k, self.k);
        set(&mut c.evaluation.ks_features, self.ks_feature);
        set(&mut c.evaluation.n_random_pairs, self.random_pairs);
    }
}

fn base_config(cli: &Global) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    set(&mut c.threads, cli.threads);
    set(&mut c.seed, cli.seed);
    Ok(c)
}

fn prepare_out(config: &PipelineConfig) -> Result<PathBuf> {
    let dir = config.output_dir()?.to_owned();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn cmd_synth(cli: &Global, args: &SynthArgs) -> Result<()> {
    let mut spec = CampaignSpec::load(&args.spec)?;
    set(&mut spec.seed, cli.seed);
    let corpus = synth::generate(&spec)?;
    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let ds = &corpus.dataset;
    report::write_file(&args.out.join("reviews.csv"), |w| {
        defrauder::ingest::write_reviews_csv(&ds.to_reviews(), w)
    })?;
    let labels: HashMap<String, bool> = ds.label_map().unwrap_or_default();
    report::write_file(&args.out.join("labels.csv"), |w| {
        defrauder::ingest::write_labels_csv(&labels, w)
    })?;
    let truth = corpus
        .truth
        .iter()
        .enumerate()
        .map(|(k, g)| {
            Ok(ScoredGroup {
                id: k + 1,
                group: g.clone(),
                indicators: defrauder::indicators::collective_score(
                    g,
                    ds,
                    defrauder::indicators::DEFAULT_TIME_WINDOW_DAYS,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    report::write_file(&args.out.join("truth_groups.tsv"), |w| {
        report::write_groups(&truth, ds, w)
    })?;
    let spec_path = args.out.join("spec.toml");
    std::fs::write(&spec_path, spec.to_toml_string()).map_err(|e| Error::io(&spec_path, e))?;
    eprintln!(
        "wrote {} reviews by {} reviewers ({} planted groups) to {}",
        ds.num_reviews(),
        ds.num_reviewers(),
        truth.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_detect(cli: &Global, args: DetectArgs) -> Result<()> {
    let mut c = base_config(cli)?;
    args.input.apply(&mut c);
    args.detect.apply(&mut c);
    c.validate()?;
    let dir = prepare_out(&c)?;
    let mut manifest = Manifest::new("detect", &c)?;
    let (ds, result) = pipeline::with_threads(&c, || -> Result<_> {
        let (ds, _) = pipeline::load_dataset(&c)?;
        let result = pipeline::detect(&ds, &c)?;
        Ok((ds, result))
    })??;
    pipeline::write_detection(&dir, &result.groups, &ds)?;
    manifest.stat("groups", result.groups.len());
    manifest.stat("iterations", result.iterations_run);
    manifest.stat("safeguard_fired", result.safeguard_fired);
    manifest.output(&dir, pipeline::GROUPS_FILE)?;
    manifest.output(&dir, pipeline::INDICATORS_FILE)?;
    manifest.write(&dir.join("detect.manifest.json"))?;
    eprintln!("{} groups written to {}", result.groups.len(), dir.display());
    Ok(())
}

fn cmd_rank(cli: &Global, args: RankArgs) -> Result<()> {
    let mut c = base_config(cli)?;
    args.input.apply(&mut c);
    args.rank.apply(&mut c);
    set(&mut c.detection.time_window_days, args.time_window);
    c.validate()?;
    let dir = prepare_out(&c)?;
    let mut manifest = Manifest::new("rank", &c)?;
    manifest.inputs.push(pipeline::FileDigest {
        path: args.groups.display().to_string(),
        sha256: pipeline::sha256_file(&args.groups)?,
    });
    let (ds, out) = pipeline::with_threads(&c, || -> Result<_> {
        let (ds, _) = pipeline::load_dataset(&c)?;
        let groups = report::read_groups(&args.groups, &ds, c.detection.time_window_days)?;
        if groups.is_empty() {
            return Err(Error::format(&args.groups, "no groups to rank"));
        }
        let out = pipeline::rank(&ds, groups, &c)?;
        Ok((ds, out))
    })??;
    pipeline::write_ranking(&dir, &out.ranked, &ds)?;
    manifest.output(&dir, pipeline::RANKED_FILE)?;
    if c.ranking.write_embedding {
        report::write_file(&dir.join(pipeline::EMBEDDING_FILE), |w| out.embedding.write(w))?;
        manifest.output(&dir, pipeline::EMBEDDING_FILE)?;
    }
    manifest.stat("groups", out.ranked.len());
    manifest.stat("collusion_edges", out.collusion_edges);
    manifest.write(&dir.join("rank.manifest.json"))?;
    eprintln!(
        "ranked {} groups into {}",
        out.ranked.len(),
        dir.join(pipeline::RANKED_FILE).display()
    );
    Ok(())
}

fn ranked_from_files(ranked_path: &Path, groups: Vec<ScoredGroup>) -> Result<Vec<RankedGroup>> {
    let mut by_id: HashMap<usize, ScoredGroup> = groups.into_iter().map(|g| (g.id, g)).collect();
    let mut rows = report::read_ranked(ranked_path)?;
    rows.sort_by_key(|r| r.rank);
    rows.into_iter()
        .map(|row| {
            let group = by_id.remove(&row.group_id).ok_or_else(|| {
                Error::format(ranked_path, format!("group {} missing from groups file", row.group_id))
            })?;
            Ok(RankedGroup {
                rank: row.rank,
                dispersion: row.dispersion,
                group,
            })
        })
        .collect()
}

fn cmd_eval(cli: &Global, args: EvalArgs) -> Result<()> {
    let mut c = base_config(cli)?;
    args.input.apply(&mut c);
    args.eval.apply(&mut c);
    c.validate()?;
    if c.paths.labels.is_none() {
        return Err(Error::NoLabels);
    }
    let dir = prepare_out(&c)?;
    let mut manifest = Manifest::new("eval", &c)?;
    for p in [&args.groups, &args.ranked] {
        manifest.inputs.push(pipeline::FileDigest {
            path: p.display().to_string(),
            sha256: pipeline::sha256_file(p)?,
        });
    }
    let metrics = pipeline::with_threads(&c, || -> Result<_> {
        let (ds, _) = pipeline::load_dataset(&c)?;
        let groups = report::read_groups(&args.groups, &ds, c.detection.time_window_days)?;
        let ranked = ranked_from_files(&args.ranked, groups)?;
        pipeline::eval(&ds, &ranked, &c, true)
    })??;
    pipeline::write_metrics(&dir, &metrics)?;
    manifest.output(&dir, pipeline::METRICS_FILE)?;
    manifest.output(&dir, pipeline::GROUP_SCORES_FILE)?;
    manifest.write(&dir.join("eval.manifest.json"))?;
    for (k, v) in &metrics.ndcg {
        eprintln!("ndcg@{k} = {v:.4}");
    }
    Ok(())
}

fn cmd_pipeline(cli: &Global, args: PipelineArgs) -> std::result::Result<(), Box<dyn std::error::Error>> {
    let mut c = base_config(cli)?;
    args.input.apply(&mut c);
    args.detect.apply(&mut c);
    args.rank.apply(&mut c);
    args.eval.apply(&mut c);
    let outcome = pipeline::run_pipeline(&c)?;
    eprintln!(
        "{} groups detected; outputs in {}",
        outcome.detection.groups.len(),
        c.output_dir()?.display()
    );
    if let Some(m) = &outcome.metrics {
        for (k, v) in &m.ndcg {
            eprintln!("ndcg@{k} = {v:.4}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let Cli {
        threads,
        config,
        seed,
        verbose,
        command,
    } = Cli::parse();
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let global = Global { threads, config, seed };
    let result: std::result::Result<(), Box<dyn std::error::Error>> = match command {
        Command::Synth(a) => cmd_synth(&global, &a).map_err(Into::into),
        Command::Detect(a) => cmd_detect(&global, a).map_err(Into::into),
        Command::Rank(a) => cmd_rank(&global, a).map_err(Into::into),
        Command::Eval(a) => cmd_eval(&global, a).map_err(Into::into),
        Command::Pipeline(a) => cmd_pipeline(&global, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
