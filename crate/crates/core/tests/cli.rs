//! The `fedmmf` binary end to end on the MovieLens 100K sample:
//! prepare → run → attack → report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fedmmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedmmf"))
        .args(args)
        .env_remove("FEDMMF_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = fedmmf(args);
    assert!(
        out.status.success(),
        "fedmmf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/ml-100k-sample")
}

/// Writes a small config over `bundle` and returns its path.
fn config(dir: &Path, name: &str, bundle: &Path, algorithm: &str) -> PathBuf {
    let text = format!(
        r#"name = "{name}"
repetitions = 2
seed = 11
th_j = 0.05
eval_every = 10

[dataset]
format = "bundle"
path = "{}"

[algorithm]
{algorithm}

[hyperparams]
k = 4
gamma = 0.01
lambda = 0.1
epochs = 20

[mask]
epochs = 30
"#,
        bundle.display()
    );
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, text).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn prepare_run_attack_report() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let bundle = root.join("bundle");
    ok(&[
        "prepare",
        "--dataset",
        "ml100k",
        "--in",
        s(&fixture()),
        "--out",
        s(&bundle),
        "--pca-dim",
        "4",
    ]);
    assert!(bundle.join("manifest.json").is_file());

    let fedmmf_cfg = config(root, "masked", &bundle, "kind = \"fed_mmf\"\nmask = \"one_order\"");
    let fedmf_cfg = config(root, "plain", &bundle, "kind = \"fed_mf\"");
    let zero_cfg = config(
        root,
        "zero",
        &bundle,
        "kind = \"fed_mmf\"\nmask = \"one_order\"\nzero_mask = true",
    );
    // everyone must send plaintext, as under FedMF; a zero prediction lies
    // below the rating range, so J can exceed 1
    let text = fs::read_to_string(&zero_cfg)
        .unwrap()
        .replace("th_j = 0.05", "th_j = 100.0");
    fs::write(&zero_cfg, text).unwrap();
    let (run_a, run_b, run_mf, run_zero) = (root.join("a"), root.join("b"), root.join("mf"), root.join("zero"));
    ok(&["run", "--config", s(&fedmmf_cfg), "--out", s(&run_a)]);
    ok(&["run", "--config", s(&fedmmf_cfg), "--out", s(&run_b), "--transcript"]);
    ok(&["run", "--config", s(&fedmf_cfg), "--out", s(&run_mf)]);
    ok(&["run", "--config", s(&zero_cfg), "--out", s(&run_zero)]);

    // same config and seeds: identical metrics, histories and masked ratings
    for file in [
        "metrics.csv",
        "rep_0/history.csv",
        "rep_1/masked_ratings.csv",
        "rep_0/privacy.csv",
    ] {
        assert_eq!(
            fs::read(run_a.join(file)).unwrap(),
            fs::read(run_b.join(file)).unwrap(),
            "{file}"
        );
    }
    assert!(run_b.join("rep_0/transcript.jsonl").is_file());
    assert!(!run_a.join("rep_0/transcript.jsonl").exists());

    let metrics = csv_rows(&run_a.join("metrics.csv"));
    assert_eq!(
        metrics[0],
        [
            "algorithm",
            "dataset",
            "repetition",
            "seed",
            "rmse",
            "mae",
            "rounds_run"
        ]
    );
    assert_eq!(metrics.len(), 3);
    assert_eq!(metrics[1][3], "11");
    assert_eq!(metrics[2][3], "12");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(run_a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["algorithm"], "FedMMF-LR");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(manifest["seeds"], serde_json::json!([11, 12]));

    // the zero mask reproduces plain FedMF exactly
    let metric_values = |dir: &Path| -> Vec<Vec<String>> {
        csv_rows(&dir.join("metrics.csv"))
            .into_iter()
            .skip(1)
            .map(|r| r[2..].to_vec())
            .collect()
    };
    assert_eq!(metric_values(&run_zero), metric_values(&run_mf));

    // attacks on masked ratings
    ok(&["attack", "--run", s(&run_a), "--g", "1,2", "--h", "0.1"]);
    let attack = csv_rows(&run_a.join("attack/attack.csv"));
    assert_eq!(attack[0], ["party_id", "n_items", "alpha_g1", "alpha_g2", "beta_h0.1"]);
    assert_eq!(attack.len(), 1 + 30);
    for row in &attack[1..] {
        let a1: f64 = row[2].parse().unwrap();
        let a2: f64 = row[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&a1) && a1 <= a2);
    }
    let hist = csv_rows(&run_a.join("attack/hist_alpha_g1.csv"));
    assert_eq!(hist[0], ["bin_low", "bin_high", "proportion"]);
    let total: f64 = hist[1..].iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);

    // FedMF has no masked ratings to attack, only gradients
    let refused = fedmmf(&["attack", "--run", s(&run_mf)]);
    assert!(!refused.status.success());
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--leakage"));
    ok(&["attack", "--run", s(&run_mf), "--leakage", "--max-parties", "3"]);
    let leakage = csv_rows(&run_mf.join("attack/leakage.csv"));
    assert_eq!(leakage.len(), 1 + 3);
    for row in &leakage[1..] {
        assert_eq!(row[3], "resolved", "{row:?}");
        assert!(row[6].parse::<f64>().unwrap() < 1e-3, "{row:?}");
    }

    let table_csv = root.join("table.csv");
    let table = ok(&["report", s(&run_mf), s(&run_a), "--out", s(&table_csv)]);
    assert!(table.starts_with("| algorithm | ml100k RMSE | ml100k MAE |"), "{table}");
    assert!(table.contains("| FedMF |") && table.contains("| FedMMF-LR |"));
    assert!(table.contains(" ± "));
    assert_eq!(csv_rows(&table_csv).len(), 3);
}

#[test]
fn bad_input_exits_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(
        &cfg,
        "[dataset]\nformat = \"ml100k\"\npath = \"x\"\n\n[algorithm]\nkind = \"fed_mf\"\n\n[hyperparams]\ngamma = -1.0\n",
    )
    .unwrap();
    let out = fedmmf(&["run", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hyperparams.gamma"));

    let out = fedmmf(&[
        "prepare",
        "--dataset",
        "lastfm",
        "--in",
        s(tmp.path()),
        "--out",
        s(&tmp.path().join("b")),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("user_artists.dat"));

    assert!(!fedmmf(&["frobnicate"]).status.success());
}

#[test]
fn data_dir_variable_locates_raw_data() {
    let tmp = tempfile::tempdir().unwrap();
    let fixtures = fixture().parent().unwrap().to_path_buf();
    let out = Command::new(env!("CARGO_BIN_EXE_fedmmf"))
        .args(["prepare", "--dataset", "ml100k", "--out", s(&tmp.path().join("b"))])
        .env("FEDMMF_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    // nothing named ml-100k under the data dir
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("ml-100k"));

    fs::create_dir(tmp.path().join("ml-100k")).unwrap();
    for f in ["u.data", "u.item", "u.user"] {
        fs::copy(
            fixtures.join("ml-100k-sample").join(f),
            tmp.path().join("ml-100k").join(f),
        )
        .unwrap();
    }
    let out = Command::new(env!("CARGO_BIN_EXE_fedmmf"))
        .args(["prepare", "--dataset", "ml100k", "--out", s(&tmp.path().join("b"))])
        .env("FEDMMF_DATA_DIR", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
