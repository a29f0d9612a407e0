use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kforest(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kforest"))
        .args(args)
        .env_remove("KFOREST_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = kforest(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn fitted(dir: &Path, extra: &[&str]) -> (String, String) {
    let train = dir.join("train.csv");
    let model = dir.join("model.kf");
    ok(&[
        "generate",
        "--scenario",
        "friedman1",
        "--n",
        "150",
        "--noise",
        "3",
        "--seed",
        "4",
        "--out",
        s(&train),
    ]);
    let mut args = vec!["fit", "--data", s(&train), "--out", s(&model), "--trees", "10"];
    args.extend_from_slice(extra);
    ok(&args);
    (s(&train).to_string(), s(&model).to_string())
}

#[test]
fn generate_is_deterministic_and_has_header() {
    let a = ok(&[
        "generate",
        "--scenario",
        "rectangular",
        "--n",
        "20",
        "--noise",
        "2",
        "--seed",
        "9",
    ]);
    let b = ok(&[
        "--threads",
        "1",
        "generate",
        "--scenario",
        "rectangular",
        "--n",
        "20",
        "--noise",
        "2",
        "--seed",
        "9",
    ]);
    assert_eq!(a, b);
    let mut lines = a.lines();
    assert_eq!(lines.next(), Some("x1,x2,x3,x4,x5,x6,y"));
    assert_eq!(lines.count(), 20);
}

#[test]
fn fit_predict_quantile_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (train, model) = fitted(dir.path(), &[]);
    for kind in ["dino", "ranbu"] {
        let preds = ok(&["predict", "--model", &model, "--data", &train, "--kind", kind]);
        let mut lines = preds.lines();
        assert_eq!(lines.next(), Some("prediction"));
        let values: Vec<f64> = lines.map(|l| l.parse().unwrap()).collect();
        assert_eq!(values.len(), 150);
        assert!(values.iter().all(|v| v.is_finite()));
    }
    let q = ok(&[
        "quantile",
        "--model",
        &model,
        "--data",
        &train,
        "--alpha",
        "0.1,0.9",
        "--bandwidth",
        "5",
    ]);
    let mut lines = q.lines();
    assert_eq!(lines.next(), Some("q0.1,q0.9"));
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(v[0] <= v[1]);
    }
}

#[test]
#[allow(clippy::needless_range_loop)]
fn distances_are_symmetric_with_zero_diagonal() {
    let dir = tempfile::tempdir().unwrap();
    let (train, model) = fitted(dir.path(), &[]);
    let out = dir.path().join("d.csv");
    ok(&[
        "distances",
        "--model",
        &model,
        "--data",
        &train,
        "--kind",
        "dino",
        "--out",
        s(&out),
    ]);
    let m: Vec<Vec<f64>> = fs::read_to_string(&out)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(m.len(), 150);
    for i in 0..150 {
        assert_eq!(m[i].len(), 150);
        assert_eq!(m[i][i], 0.0);
        for j in 0..150 {
            assert_eq!(m[i][j], m[j][i]);
            assert!((0.0..=1.0).contains(&m[i][j]));
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["predict", "--bogus"],
        vec!["generate", "--scenario", "nope", "--n", "3"],
        vec!["fit", "--data", "x.csv", "--out", "m.kf", "--max-depth", "deep"],
        vec![],
    ] {
        let out = kforest(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert_eq!(kforest(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.kf");
    let out = kforest(&["predict", "--model", s(&missing), "--data", s(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.contains("missing.kf"), "{err}");

    let junk = dir.path().join("junk.kf");
    fs::write(&junk, b"not a model").unwrap();
    let out = kforest(&["predict", "--model", s(&junk), "--data", s(&junk)]);
    assert_eq!(out.status.code(), Some(2));

    // the MRCA distance needs a finite depth
    let (train, model) = fitted(dir.path(), &["--max-depth", "unlimited"]);
    let out = kforest(&["predict", "--model", &model, "--data", &train, "--kind", "dino"]);
    assert_eq!(out.status.code(), Some(2));
    ok(&["predict", "--model", &model, "--data", &train, "--kind", "ranbu"]);
}

#[test]
fn bench_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.toml");
    fs::write(
        &cfg,
        "scenario = \"friedman1\"\nn_train = 100\nn_test = 50\nnoise_count = 2\nreplications = 2\ntrees = 5\nfull_rf_trees = 10\n",
    )
    .unwrap();
    let report = dir.path().join("r.json");
    ok(&["bench", "--config", s(&cfg), "--out", s(&report)]);
    assert!(fs::read_to_string(&report)
        .unwrap()
        .contains("\"schema_version\": 1"));
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4 * 3);

    fs::write(
        &cfg,
        "scenario = \"friedman1\"\nn_train = 100\nnoise_count = 2\nreplications = 2\ncolour = 1\n",
    )
    .unwrap();
    let out = kforest(&["bench", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}
