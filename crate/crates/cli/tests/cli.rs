use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tck"))
        .args(args)
        .env_remove("TCK_OUTPUT_ROOT")
        .output()
        .expect("running tck")
}

fn ok(args: &[&str]) -> Output {
    let out = tck(args);
    assert!(
        out.status.success(),
        "tck {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn generate_var1(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--recipe", "var1", "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate_var1(&a, &["--seed", "5"]);
    generate_var1(&b, &["--seed", "5"]);
    for f in ["train.csv", "train_labels.csv", "test.csv", "test_labels.csv"] {
        assert!(
            fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap(),
            "{f} differs"
        );
    }
    let summary = |d: &Path| {
        let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        m["summary"].clone()
    };
    assert_eq!(summary(&a), summary(&b));
    let c = tmp.path().join("c");
    generate_var1(&c, &["--seed", "6"]);
    assert_ne!(
        fs::read(a.join("train.csv")).unwrap(),
        fs::read(c.join("train.csv")).unwrap()
    );
}

#[test]
fn no_missing_writes_complete_series() {
    let tmp = tempfile::tempdir().unwrap();
    generate_var1(tmp.path(), &["--no-missing"]);
    let text = fs::read_to_string(tmp.path().join("train.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("# N=200"));
    // 200 series x 2 attributes x 50 steps, plus two header lines.
    assert_eq!(text.lines().count(), 200 * 2 * 50 + 2);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["train_missing_rate"], 0.0);
}

#[test]
fn train_then_eval_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, m, e) = (tmp.path().join("g"), tmp.path().join("m"), tmp.path().join("e"));
    generate_var1(&g, &[]);
    ok(&[
        "train",
        "--data",
        p(&g.join("train.csv")),
        "--labels",
        p(&g.join("train_labels.csv")),
        "--variant",
        "sstck_im",
        "--n-inits",
        "2",
        "--extra-components",
        "2",
        "--out",
        p(&m),
    ]);
    for f in [
        "model.json",
        "train_kernel.csv",
        "manifest.json",
        "ensemble/manifest.json",
    ] {
        assert!(m.join(f).exists(), "{f}");
    }
    assert!(fs::read_dir(m.join("ensemble")).unwrap().any(|f| f
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with("transform_")));
    let kernel = fs::read_to_string(m.join("train_kernel.csv")).unwrap();
    assert!(kernel.starts_with("200,200,"));

    ok(&[
        "eval",
        "--model",
        p(&m),
        "--test",
        p(&g.join("test.csv")),
        "--test-labels",
        p(&g.join("test_labels.csv")),
        "--out",
        p(&e),
    ]);
    let metrics = csv_rows(&e.join("metrics.csv"));
    let acc: f64 = metrics[0][0].parse().unwrap();
    assert!((0.5..=1.0).contains(&acc), "accuracy {acc}");
    assert_eq!(csv_rows(&e.join("predictions.csv")).len(), 200);
    let emb = fs::read_to_string(e.join("embedding_test.csv")).unwrap();
    assert!(emb.starts_with("series_id,label,pc1,pc2\n"));
}

#[test]
fn scoring_the_training_set_recovers_its_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, m, e) = (tmp.path().join("g"), tmp.path().join("m"), tmp.path().join("e"));
    generate_var1(&g, &[]);
    let (data, labels) = (g.join("train.csv"), g.join("train_labels.csv"));
    ok(&[
        "train",
        "--data",
        p(&data),
        "--labels",
        p(&labels),
        "--variant",
        "tck",
        "--n-inits",
        "2",
        "--extra-components",
        "2",
        "--out",
        p(&m),
    ]);
    // With k = 1 every training series is its own nearest neighbour.
    ok(&[
        "eval",
        "--model",
        p(&m),
        "--test",
        p(&data),
        "--test-labels",
        p(&labels),
        "--dim",
        "200",
        "--out",
        p(&e),
    ]);
    let acc: f64 = csv_rows(&e.join("metrics.csv"))[0][0].parse().unwrap();
    assert!(acc > 0.99, "accuracy {acc}");
}

#[test]
fn folds_writes_per_fold_and_summary_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, cv) = (tmp.path().join("g"), tmp.path().join("cv"));
    generate_var1(&g, &[]);
    ok(&[
        "eval",
        "--folds",
        "3",
        "--data",
        p(&g.join("test.csv")),
        "--labels",
        p(&g.join("test_labels.csv")),
        "--variant",
        "tck_im",
        "--n-inits",
        "2",
        "--extra-components",
        "1",
        "--out",
        p(&cv),
    ]);
    let rows = csv_rows(&cv.join("cv_metrics.csv"));
    let first: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(first, ["1", "2", "3", "mean", "se"]);
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("gen.toml");
    fs::write(&cfg, "recipe = \"var1\"\nseed = 9\nno_missing = true\n").unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["generate", "--config", p(&cfg), "--out", p(&a)]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 9);
    assert_eq!(manifest["config"]["no_missing"], true);
    ok(&["generate", "--config", p(&cfg), "--seed", "10", "--out", p(&b)]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 10);
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_tck"))
        .args(["generate", "--recipe", "var1", "--no-missing"])
        .env("TCK_OUTPUT_ROOT", tmp.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(tmp.path().join("generate/train.csv").exists());
}

#[test]
fn failures_exit_nonzero_with_a_message() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let out = tck(&[
        "train",
        "--data",
        p(&missing),
        "--variant",
        "tck",
        "--out",
        p(tmp.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));

    generate_var1(tmp.path(), &["--no-missing"]);
    let out = tck(&[
        "train",
        "--data",
        p(&tmp.path().join("train.csv")),
        "--variant",
        "stck",
        "--out",
        p(tmp.path()),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("label"));

    let out = tck(&[
        "train",
        "--data",
        p(&tmp.path().join("train.csv")),
        "--variant",
        "bogus",
    ]);
    assert!(!out.status.success());
}

#[test]
fn rate_recipe_reports_its_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, r) = (tmp.path().join("g"), tmp.path().join("r"));
    generate_var1(&g, &["--no-missing"]);
    ok(&[
        "generate",
        "--recipe",
        "mnar",
        "--input",
        p(&g.join("train.csv")),
        "--labels",
        p(&g.join("train_labels.csv")),
        "--e",
        "0.1",
        "--out",
        p(&r),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(r.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["summary"]["e"], 0.1);
    let rate = manifest["summary"]["missing_rate"].as_f64().unwrap();
    assert!(rate > 0.0 && rate < 1.0, "missing rate {rate}");
    assert!(r.join("data.csv").exists() && r.join("labels.csv").exists());
}
