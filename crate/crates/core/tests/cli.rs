use std::path::Path;
use std::process::{Command, Output};

use dr_crossfit::config::CampaignConfig;
use dr_crossfit::learners::LearnerSpec;
use dr_crossfit::superlearner::LearnerLibrary;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dr-crossfit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_cohort(dir: &Path, n: usize, seed: u64) -> String {
    let path = dir.join(format!("cohort_{n}_{seed}.csv"));
    let path_s = path.to_str().unwrap().to_string();
    let o = bin(&[
        "dgm",
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        &path_s,
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    path_s
}

#[test]
fn dgm_is_byte_identical_for_a_seed() {
    let a = bin(&["dgm", "--n", "200", "--seed", "17"]);
    let b = bin(&["dgm", "--n", "200", "--seed", "17"]);
    let c = bin(&["dgm", "--n", "200", "--seed", "18"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);
    let text = stdout(&a);
    assert_eq!(text.lines().count(), 201);
    assert_eq!(text.lines().next(), Some("A,L,D,R,X,Y"));
    assert!(text.lines().skip(1).all(|l| l.split(',').count() == 6));
}

#[test]
fn dgm_oracle_view_adds_latent_columns() {
    let o = bin(&["dgm", "--n", "50", "--seed", "3", "--oracle-view"]);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("A,L,D,F,R,X,Y0,Y1,Y"));
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 9);
        // observed outcome is the potential outcome of the received treatment
        let expected = if f[5] == "1" { f[7] } else { f[6] };
        assert_eq!(f[8], expected);
    }
}

#[test]
fn dgm_rejects_empty_samples() {
    let o = bin(&["dgm", "--n", "0", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn analyze_prints_one_json_record() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_cohort(dir.path(), 3000, 21);
    let o = bin(&[
        "analyze",
        "--data",
        &data,
        "--method",
        "tmle",
        "--nuisance",
        "main-effects",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    for key in [
        "method",
        "nuisance",
        "psi",
        "se",
        "ci_lower",
        "ci_upper",
        "n",
        "clip_count",
        "runtime_s",
    ] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["method"], "tmle");
    assert_eq!(v["n"], 3000);
    let psi = v["psi"].as_f64().unwrap();
    assert!((psi + 0.12).abs() < 0.03, "psi {psi}");
    assert!(v["ci_lower"].as_f64().unwrap() < psi && psi < v["ci_upper"].as_f64().unwrap());
}

#[test]
fn analyze_runs_the_crossfit_estimators() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_cohort(dir.path(), 900, 4);
    let dump = dir.path().join("partitions.csv");
    let o = bin(&[
        "analyze",
        "--data",
        &data,
        "--method",
        "dc-aipw",
        "--nuisance",
        "main-effects",
        "--partitions",
        "4",
        "--dump-partitions",
        dump.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["method"], "dc-aipw");
    let rows = std::fs::read_to_string(dump).unwrap();
    assert_eq!(rows.lines().count(), 5);
}

#[test]
fn analyze_names_a_missing_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("no_r.csv");
    std::fs::write(&path, "A,L,D,X,Y\n50,4.8,0,1,0\n60,5.0,1,0,1\n").unwrap();
    let o = bin(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--method",
        "aipw",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(stderr(&o).contains("`R`"), "{}", stderr(&o));
}

#[test]
fn analyze_rejects_malformed_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "A,L,D,R,X,Y\n50,4.8,0,0.1,1,0\n60,five,1,0.2,0,1\n").unwrap();
    let o = bin(&[
        "analyze",
        "--data",
        path.to_str().unwrap(),
        "--method",
        "ipw",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn simulate_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(&[
        "simulate",
        "--preset",
        "desk",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"));
}

#[test]
fn simulate_reports_every_config_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = CampaignConfig::desk();
    config.replicates = 1;
    config.partitions = 0;
    config.bootstrap = 1;
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, config.to_toml_string()).unwrap();
    let o = bin(&[
        "simulate",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for field in ["replicates", "partitions", "bootstrap"] {
        assert!(err.contains(field), "{field} not reported: {err}");
    }
}

#[test]
fn simulate_print_config_round_trips() {
    let o = bin(&["simulate", "--preset", "full", "--print-config"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        CampaignConfig::from_toml_str(&stdout(&o)).unwrap(),
        CampaignConfig::full()
    );
}

fn tiny_config() -> CampaignConfig {
    let mut c = CampaignConfig::desk();
    c.n = 600;
    c.replicates = 3;
    c.oracle_size = 20_000;
    c.partitions = 2;
    c.bootstrap = 5;
    c.super_learner.folds = 2;
    c.super_learner.bootstrap = 0;
    c.super_learner.library = LearnerLibrary::new(vec![
        ("mean", LearnerSpec::EmpiricalMean),
        ("logistic", LearnerSpec::logistic()),
    ])
    .unwrap();
    c
}

#[test]
fn simulate_writes_a_full_deterministic_grid() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("tiny.toml");
    std::fs::write(&config_path, tiny_config().to_toml_string()).unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = bin(&[
            "simulate",
            "--config",
            config_path.to_str().unwrap(),
            "--seed",
            "99",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (o, out)
    };
    let (a, out_a) = run("a");
    let (b, _) = run("b");
    assert_eq!(a.stdout, b.stdout);
    let metrics = std::fs::read_to_string(out_a.join("metrics.csv")).unwrap();
    assert_eq!(metrics, stdout(&a));
    assert_eq!(metrics.lines().count(), 1 + 18);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 99);
    assert!(manifest["oracle_truth"].as_f64().unwrap() < 0.0);
}

#[test]
fn stability_defaults_cover_six_partition_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_cohort(dir.path(), 600, 8);
    let o = bin(&[
        "stability",
        "--data",
        &data,
        "--nuisance",
        "main-effects",
        "--reruns",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let ps: Vec<&str> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(ps, ["5", "10", "25", "50", "75", "100"]);
}
