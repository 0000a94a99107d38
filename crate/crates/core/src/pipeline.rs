//! End-to-end orchestration: detect, rank, evaluate, and the run manifest.
//!
//! Configuration has three layers: built-in defaults, a TOML config file,
//! then command-line overrides applied by the caller.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::collusion::{build_collusion_graph, CollusionParams};
use crate::detect::{extract_groups, DetectionParams, DetectionResult, ScoredGroup};
use crate::embed::{embed_reviewers, EmbeddingParams, ReviewerEmbedding};
use crate::error::{Error, Result};
use crate::eval::{evaluate, CoherenceFeature, EvalOptions, MetricReport, DEFAULT_K_LIST};
use crate::ingest::{load_labels, load_reviews, ParseReport, ReviewFormat};
use crate::model::{Dataset, RatingScale};
use crate::rank::{rank_groups, RankOrder, RankedGroup};
use crate::report;
use crate::text::TextVectorizer;

pub const GROUPS_FILE: &str = "groups.tsv";
pub const INDICATORS_FILE: &str = "indicators.csv";
pub const RANKED_FILE: &str = "ranked.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const GROUP_SCORES_FILE: &str = "group_scores.csv";
pub const EMBEDDING_FILE: &str = "embedding.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub reviews: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Pretrained word vectors for review text; hashed term frequencies
    /// are used when absent.
    pub word_vectors: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankingConfig {
    pub order: RankOrder,
    pub write_embedding: bool,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            order: RankOrder::Ascending,
            write_embedding: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub k: Vec<usize>,
    pub ks_features: Vec<CoherenceFeature>,
    pub n_random_pairs: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            k: DEFAULT_K_LIST.to_vec(),
            ks_features: CoherenceFeature::ALL.to_vec(),
            n_random_pairs: 10_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub seed: u64,
    /// Worker threads; 0 uses every core. 1 makes every stage deterministic.
    pub threads: usize,
    pub rating_scale: RatingScale,
    pub detection: DetectionParams,
    pub collusion: CollusionParams,
    pub embedding: EmbeddingParams,
    pub ranking: RankingConfig,
    pub evaluation: EvaluationConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidParams(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.detection.validate()?;
        self.collusion.validate()?;
        EmbeddingParams {
            threads: 1,
            ..self.embedding.clone()
        }
        .validate()?;
        RatingScale::new(self.rating_scale.min, self.rating_scale.max)?;
        if self.evaluation.k.is_empty() || self.evaluation.k.contains(&0) {
            return Err(Error::InvalidParams(
                "k list must be non-empty with values of at least 1".into(),
            ));
        }
        for path in [&self.paths.reviews, &self.paths.labels, &self.paths.word_vectors]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::io(path, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }

    /// Thread count after resolving 0 to the number of cores.
    pub fn effective_threads(&self) -> usize {
        if self.threads == 0 {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        } else {
            self.threads
        }
    }

    pub fn vectorizer(&self) -> Result<TextVectorizer> {
        match &self.paths.word_vectors {
            Some(path) => TextVectorizer::pretrained(path),
            None => Ok(TextVectorizer::default()),
        }
    }

    fn require<'a>(&self, path: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| Error::InvalidParams(format!("no {what} path configured")))
    }

    pub fn reviews_path(&self) -> Result<&Path> {
        self.require(&self.paths.reviews, "reviews")
    }

    pub fn output_dir(&self) -> Result<&Path> {
        self.require(&self.paths.output_dir, "output directory")
    }
}

/// Runs `f` on a thread pool sized by the config.
pub fn with_threads<T: Send>(config: &PipelineConfig, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.effective_threads())
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Loads reviews (and labels when configured).
pub fn load_dataset(config: &PipelineConfig) -> Result<(Dataset, ParseReport)> {
    let path = config.reviews_path()?;
    let labels = config.paths.labels.as_deref().map(load_labels).transpose()?;
    load_reviews(
        path,
        ReviewFormat::from_path(path),
        config.rating_scale,
        labels.as_ref(),
    )
}

pub fn detect(dataset: &Dataset, config: &PipelineConfig) -> Result<DetectionResult> {
    extract_groups(dataset, &config.detection)
}

#[derive(Clone, Debug)]
pub struct RankOutput {
    pub ranked: Vec<RankedGroup>,
    pub embedding: ReviewerEmbedding,
    pub collusion_edges: usize,
}

pub fn rank(dataset: &Dataset, groups: Vec<ScoredGroup>, config: &PipelineConfig) -> Result<RankOutput> {
    let graph = build_collusion_graph(dataset, &config.collusion, &config.vectorizer()?)?;
    let params = EmbeddingParams {
        threads: config.effective_threads(),
        ..config.embedding.clone()
    };
    let embedding = embed_reviewers(&graph, dataset, &params, config.seed)?;
    let ranked = rank_groups(groups, dataset, &embedding, config.ranking.order)?;
    Ok(RankOutput {
        ranked,
        embedding,
        collusion_edges: graph.num_edges(),
    })
}

pub fn eval(
    dataset: &Dataset,
    ranked: &[RankedGroup],
    config: &PipelineConfig,
    require_labels: bool,
) -> Result<MetricReport> {
    let vectors = config.vectorizer()?.vectorize_dataset(dataset);
    let options = EvalOptions {
        k_list: config.evaluation.k.clone(),
        ks_features: config.evaluation.ks_features.clone(),
        n_random_pairs: config.evaluation.n_random_pairs,
        seed: config.seed,
        require_labels,
    };
    evaluate(ranked, dataset, &vectors, &options)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command: parameters, seed, input digests.
/// Deliberately free of timestamps so reruns produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub threads: usize,
    pub deterministic: bool,
    pub config: PipelineConfig,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub stats: BTreeMap<String, serde_json::Value>,
}

impl Manifest {
    pub fn new(command: &str, config: &PipelineConfig) -> Result<Self> {
        let mut inputs = Vec::new();
        for path in [&config.paths.reviews, &config.paths.labels, &config.paths.word_vectors]
            .into_iter()
            .flatten()
        {
            inputs.push(FileDigest {
                path: path.display().to_string(),
                sha256: sha256_file(path)?,
            });
        }
        let threads = config.effective_threads();
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed: config.seed,
            threads,
            deterministic: threads == 1,
            config: config.clone(),
            inputs,
            outputs: Vec::new(),
            stats: BTreeMap::new(),
        })
    }

    pub fn stat(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.stats.insert(key.into(), value.into());
    }

    /// Records the digest of an output written into `dir`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<()> {
        self.outputs.push(FileDigest {
            path: name.into(),
            sha256: sha256_file(&dir.join(name))?,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut json = serde_json::to_string_pretty(self).expect("manifest serializes");
        json.push('\n');
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

/// Error from a named pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> std::result::Result<T, StageError> {
    r.map_err(|error| StageError { stage: name, error })
}

#[derive(Clone, Debug)]
pub struct PipelineOutcome {
    pub dataset: Dataset,
    pub detection: DetectionResult,
    pub ranked: Vec<RankedGroup>,
    pub metrics: Option<MetricReport>,
    pub manifest: Manifest,
}

pub fn write_detection(dir: &Path, groups: &[ScoredGroup], dataset: &Dataset) -> Result<()> {
    report::write_file(&dir.join(GROUPS_FILE), |w| report::write_groups(groups, dataset, w))?;
    report::write_file(&dir.join(INDICATORS_FILE), |w| report::write_indicators(groups, w))
}

pub fn write_ranking(dir: &Path, ranked: &[RankedGroup], dataset: &Dataset) -> Result<()> {
    report::write_file(&dir.join(RANKED_FILE), |w| report::write_ranked(ranked, dataset, w))
}

pub fn write_metrics(dir: &Path, metrics: &MetricReport) -> Result<()> {
    report::write_file(&dir.join(METRICS_FILE), |w| report::write_metrics(metrics, w))?;
    report::write_file(&dir.join(GROUP_SCORES_FILE), |w| report::write_group_scores(metrics, w))
}

/// Detect, rank and evaluate into the configured output directory. Without
/// labels the NDCG rows are omitted; with no groups the metrics file only
/// records the count.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<PipelineOutcome, StageError> {
    stage("config", config.validate())?;
    let dir = stage("config", config.output_dir())?.to_owned();
    stage("config", std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)))?;
    let mut manifest = stage("config", Manifest::new("pipeline", config))?;

    stage(
        "pipeline",
        with_threads(config, || -> std::result::Result<PipelineOutcome, StageError> {
            let (dataset, parse) = stage("load", load_dataset(config))?;
            manifest.stat("reviews", dataset.num_reviews());
            manifest.stat("reviewers", dataset.num_reviewers());
            manifest.stat("products", dataset.num_products());
            manifest.stat("rows_rejected", parse.rows_rejected());
            manifest.stat("duplicates_dropped", dataset.duplicates_dropped());

            let detection = stage("detect", detect(&dataset, config))?;
            stage("detect", write_detection(&dir, &detection.groups, &dataset))?;
            manifest.stat("groups", detection.groups.len());
            manifest.stat("iterations", detection.iterations_run);
            manifest.stat("safeguard_fired", detection.safeguard_fired);

            let (ranked, metrics) = if detection.groups.is_empty() {
                log::warn!("no groups survived detection; ranking and metrics are empty");
                stage("rank", write_ranking(&dir, &[], &dataset))?;
                stage(
                    "eval",
                    report::write_file(&dir.join(METRICS_FILE), |w| writeln!(w, "groups=0")),
                )?;
                (Vec::new(), None)
            } else {
                let out = stage("rank", rank(&dataset, detection.groups.clone(), config))?;
                manifest.stat("collusion_edges", out.collusion_edges);
                stage("rank", write_ranking(&dir, &out.ranked, &dataset))?;
                if config.ranking.write_embedding {
                    stage(
                        "rank",
                        report::write_file(&dir.join(EMBEDDING_FILE), |w| out.embedding.write(w)),
                    )?;
                }
                if !dataset.has_labels() {
                    log::warn!("no labels configured; NDCG is skipped");
                }
                let metrics = stage("eval", eval(&dataset, &out.ranked, config, false))?;
                stage("eval", write_metrics(&dir, &metrics))?;
                (out.ranked, Some(metrics))
            };

            let mut names = vec![GROUPS_FILE, INDICATORS_FILE, RANKED_FILE, METRICS_FILE];
            if metrics.is_some() {
                names.push(GROUP_SCORES_FILE);
                if config.ranking.write_embedding {
                    names.push(EMBEDDING_FILE);
                }
            }
            for name in names {
                stage("manifest", manifest.output(&dir, name))?;
            }
            stage("manifest", manifest.write(&dir.join(MANIFEST_FILE)))?;
            Ok(PipelineOutcome {
                dataset,
                detection,
                ranked,
                metrics,
                manifest: manifest.clone(),
            })
        }),
    )?
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_parameters() {
        let c = PipelineConfig::default();
        assert_eq!(c.detection.tau_t, 20.0);
        assert_eq!(c.detection.tau_spam, 0.4);
        assert_eq!(c.detection.time_window_days, 30.0);
        assert_eq!(
            (c.collusion.alpha, c.collusion.beta, c.collusion.gamma),
            (0.3, 0.3, 0.4)
        );
        assert_eq!(c.collusion.theta, 0.4);
        assert_eq!(c.evaluation.k, vec![10, 20, 30, 40, 50]);
        assert_eq!(c.ranking.order, RankOrder::Ascending);
    }

    #[test]
    fn config_layers() {
        let c =
            PipelineConfig::from_toml_str("seed = 9\n[detection]\ntau_spam = 0.5\n[ranking]\norder = \"descending\"\n")
                .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.detection.tau_spam, 0.5);
        assert_eq!(c.detection.tau_t, 20.0);
        assert_eq!(c.ranking.order, RankOrder::Descending);
        assert_eq!(PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
        assert!(PipelineConfig::from_toml_str("[detection]\ntau_spamm = 0.5\n").is_err());
    }

    #[test]
    fn missing_input_is_named() {
        let mut c = PipelineConfig::default();
        c.paths.reviews = Some("/nonexistent/reviews.csv".into());
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("/nonexistent/reviews.csv"), "{err}");
    }

    #[test]
    fn digest() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
