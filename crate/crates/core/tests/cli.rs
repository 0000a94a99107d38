use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_defrauder"));
    c.env_remove("DEFRAUDER_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SPEC: &str = r#"
n_organic_reviewers = 300
n_products = 300
seed = 5

[[planted]]
size = 4
n_targets = 3
time_spread_days = 1
paraphrase_rate = 0.5

[[planted]]
size = 3
n_targets = 4
time_spread_days = 0
paraphrase_rate = 0.5

[[planted]]
size = 5
n_targets = 3
time_spread_days = 2
paraphrase_rate = 0.5
"#;

/// Synthesises the small fixture corpus into `dir/corpus`.
fn corpus(dir: &Path) -> PathBuf {
    let spec = dir.join("spec.toml");
    fs::write(&spec, SPEC).unwrap();
    let out = dir.join("corpus");
    ok(&["synth", "--spec", s(&spec), "--out", s(&out)]);
    out
}

fn member_sets(groups_tsv: &Path) -> Vec<BTreeSet<String>> {
    fs::read_to_string(groups_tsv)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split('\t').nth(1).unwrap().split(',').map(String::from).collect())
        .collect()
}

#[test]
fn missing_input_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = run(&["detect", "--reviews", s(&missing), "--out", s(dir.path())]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope.csv"), "{err}");
}

#[test]
fn detect_recovers_planted_groups() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let out = dir.path().join("det");
    ok(&[
        "--threads",
        "1",
        "detect",
        "--reviews",
        s(&c.join("reviews.csv")),
        "--out",
        s(&out),
    ]);
    let found = member_sets(&out.join("groups.tsv"));
    let truth = member_sets(&c.join("truth_groups.tsv"));
    assert_eq!(truth.len(), 3);
    for t in &truth {
        let covered = found
            .iter()
            .any(|g| g.intersection(t).count() as f64 >= 0.8 * t.len() as f64);
        assert!(covered, "planted {t:?} not recovered");
    }
    assert!(out.join("indicators.csv").exists());
    assert!(out.join("detect.manifest.json").exists());

    // the maximal threshold removes everything
    let strict = dir.path().join("strict");
    ok(&[
        "detect",
        "--reviews",
        s(&c.join("reviews.csv")),
        "--out",
        s(&strict),
        "--tau-spam",
        "1.0",
    ]);
    assert!(member_sets(&strict.join("groups.tsv")).is_empty());
}

#[test]
fn rank_and_eval_chain() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let reviews = c.join("reviews.csv");
    let det = dir.path().join("det");
    ok(&["detect", "--reviews", s(&reviews), "--out", s(&det)]);
    let groups = det.join("groups.tsv");

    let mut csvs = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        ok(&[
            "--threads",
            "1",
            "--seed",
            "3",
            "rank",
            "--reviews",
            s(&reviews),
            "--groups",
            s(&groups),
            "--out",
            s(&out),
            "--dim",
            "16",
        ]);
        csvs.push(fs::read(out.join("ranked.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "same seed must give identical ranking bytes");
    let ranked = dir.path().join("r1/ranked.csv");
    let text = String::from_utf8(csvs[0].clone()).unwrap();
    let ranks: Vec<usize> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(ranks, (1..=ranks.len()).collect::<Vec<_>>());

    // eval needs labels
    let ev = dir.path().join("ev");
    let out = run(&[
        "eval",
        "--reviews",
        s(&reviews),
        "--groups",
        s(&groups),
        "--ranked",
        s(&ranked),
        "--out",
        s(&ev),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("label"));

    ok(&[
        "eval",
        "--reviews",
        s(&reviews),
        "--labels",
        s(&c.join("labels.csv")),
        "--groups",
        s(&groups),
        "--ranked",
        s(&ranked),
        "--out",
        s(&ev),
        "--k",
        "10,20,30,40,50",
    ]);
    let metrics = fs::read_to_string(ev.join("metrics.txt")).unwrap();
    assert_eq!(metrics.lines().filter(|l| l.starts_with("ndcg@")).count(), 5);
    assert!(metrics.contains("gs_emd="));
}

#[test]
fn single_group_ranks_first() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = dir.path().join("reviews.csv");
    let mut csv = String::from("reviewer_id,product_id,rating,date,text\n");
    for r in ["a", "b", "c"] {
        for p in ["p1", "p2", "p3"] {
            csv.push_str(&format!("{r},{p},5,2021-03-04,same words\n"));
        }
    }
    fs::write(&reviews, csv).unwrap();
    let det = dir.path().join("det");
    ok(&["detect", "--reviews", s(&reviews), "--out", s(&det)]);
    ok(&[
        "--threads",
        "1",
        "rank",
        "--reviews",
        s(&reviews),
        "--groups",
        s(&det.join("groups.tsv")),
        "--out",
        s(&det),
    ]);
    let text = fs::read_to_string(det.join("ranked.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("1,"));
}

#[test]
fn pipeline_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let out = dir.path().join("run");
    ok(&[
        "--threads",
        "1",
        "pipeline",
        "--reviews",
        s(&c.join("reviews.csv")),
        "--labels",
        s(&c.join("labels.csv")),
        "--out",
        s(&out),
        "--dim",
        "16",
        "--walks-per-node",
        "4",
    ]);
    for f in [
        "groups.tsv",
        "indicators.csv",
        "ranked.csv",
        "metrics.txt",
        "group_scores.csv",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    let cfg = &manifest["config"];
    assert_eq!(cfg["detection"]["tau_t"], 20.0);
    assert_eq!(cfg["detection"]["tau_spam"], 0.4);
    assert_eq!(cfg["detection"]["time_window_days"], 30.0);
    assert_eq!(cfg["collusion"]["alpha"], 0.3);
    assert_eq!(cfg["collusion"]["beta"], 0.3);
    assert_eq!(cfg["collusion"]["gamma"], 0.4);
    assert_eq!(cfg["collusion"]["theta"], 0.4);
    assert_eq!(cfg["embedding"]["dim"], 16);
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn empty_dataset_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let reviews = dir.path().join("reviews.csv");
    fs::write(&reviews, "reviewer_id,product_id,rating,date,text\n").unwrap();
    let out = run(&["pipeline", "--reviews", s(&reviews), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("load"), "{err}");
    assert!(err.starts_with("error:"), "{err}");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let config = dir.path().join("config.toml");
    fs::write(
        &config,
        "seed = 11\nthreads = 1\n[detection]\ntau_spam = 0.5\ntau_t = 10.0\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&[
        "--config",
        s(&config),
        "detect",
        "--reviews",
        s(&c.join("reviews.csv")),
        "--out",
        s(&out),
        "--tau-spam",
        "0.45",
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("detect.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["detection"]["tau_t"], 10.0);
    assert_eq!(manifest["config"]["detection"]["tau_spam"], 0.45);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[detection]\ntau_spamm = 0.5\n").unwrap();
    let out = run(&[
        "--config",
        s(&bad),
        "detect",
        "--reviews",
        s(&c.join("reviews.csv")),
        "--out",
        s(&dir.path().join("b")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("tau_spamm"));
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus(dir.path());
    let out = dir.path().join("o");
    let status = bin()
        .env("DEFRAUDER_THREADS", "1")
        .args(["detect", "--reviews", s(&c.join("reviews.csv")), "--out", s(&out)])
        .status()
        .unwrap();
    assert!(status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("detect.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["threads"], 1);
    assert_eq!(manifest["deterministic"], true);
}
