use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use oodkit::io::{read_scores, write_features, write_labels, Dtype};
use oodkit::synth::{sample_synthetic, SynthCase, SynthSpec};

fn oodkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oodkit"))
        .args(args)
        .env("OODKIT_THREADS", "2")
        .output()
        .unwrap()
}

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
        .display()
        .to_string()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn stderr_line(out: &Output) -> String {
    let s = String::from_utf8_lossy(&out.stderr).to_string();
    assert_eq!(s.trim_end().lines().count(), 1, "stderr: {s:?}");
    s
}

fn json(path: &str) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn eval_matches_the_pair_count_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "report.json");
    let status = oodkit(&["eval", "--id-scores", &fixture("id_scores.csv"), "--ood-scores", &fixture("ood_scores.csv"), "--out", &out]);
    assert_eq!(status.status.code(), Some(0));
    let id = read_scores(Path::new(&fixture("id_scores.csv"))).unwrap();
    let ood = read_scores(Path::new(&fixture("ood_scores.csv"))).unwrap();
    let mut twice = 0u32;
    for a in &id {
        for b in &ood {
            twice += if a > b { 2 } else if a == b { 1 } else { 0 };
        }
    }
    let oracle = twice as f64 / (2 * id.len() * ood.len()) as f64;
    let report = json(&out);
    assert_eq!(report["auroc"].as_f64(), Some(oracle));
    // All five ID scores must pass, so the threshold is the smallest, 1.
    assert_eq!(report["threshold"].as_f64(), Some(1.0));
    assert_eq!(report["fpr95"].as_f64(), Some(0.75));
    assert_eq!(report["n_id"].as_u64(), Some(5));
    assert_eq!(report["n_ood"].as_u64(), Some(4));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.ends_with("}\n") && !text.contains(" \n"));
}

#[test]
fn fit_score_eval_on_gaussian_mixture() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (name, seed, shift) in [("train", "42", "0"), ("id", "43", "0"), ("ood", "44", "12")] {
        let out = oodkit(&["synth", "--case", "gaussian-mixture", "--n", "5000", "--seed", seed, "--shift", shift, "--out", &p(d, name)]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let spec = json(&p(d, "train/spec.json"));
    assert_eq!(spec["seed"].as_u64(), Some(42));
    assert_eq!(spec["spec"]["mu2"].as_f64(), Some(8.0));
    let out = oodkit(&["fit", "--train", &p(d, "train/features.oodf"), "--labels", &p(d, "train/labels.oodl"), "--p", "2", "--estimator", "sn", "--out", &p(d, "model")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for set in ["id", "ood"] {
        let out = oodkit(&["score", "--model", &p(d, "model"), "--features", &p(d, &format!("{set}/features.oodf")), "--out", &p(d, &format!("{set}.csv"))]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let scores = std::fs::read_to_string(p(d, "id.csv")).unwrap();
    assert!(scores.contains("# p=2\n") && scores.contains("# estimator=sn\n") && scores.contains("# seed=0\n"));
    let out = oodkit(&["eval", "--id-scores", &p(d, "id.csv"), "--ood-scores", &p(d, "ood.csv"), "--out", &p(d, "r.json")]);
    assert_eq!(out.status.code(), Some(0));
    let auroc = json(&p(d, "r.json"))["auroc"].as_f64().unwrap();
    assert!(auroc >= 0.99, "AUROC {auroc}");
}

#[test]
fn malformed_inputs_fail_without_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["bad_magic.oodf", "bad_version.oodf", "truncated_header.oodf", "truncated_payload.oodf", "nan.csv"] {
        let out_path = p(dir.path(), "scores.csv");
        let out = oodkit(&["score", "--method", "knn", "--knn-k", "1", "--train", &fixture(name), "--features", &fixture("good.oodf"), "--out", &out_path]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        assert!(stderr_line(&out).starts_with("error: "), "{name}");
        assert!(!Path::new(&out_path).exists(), "{name}");
        let model = p(dir.path(), "model");
        let out = oodkit(&["fit", "--train", &fixture(name), "--labels", &fixture("good.oodl"), "--out", &model]);
        assert_eq!(out.status.code(), Some(1), "{name}");
        assert!(!Path::new(&model).join("prototypes.oodf").exists(), "{name}");
    }
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn usage_errors_are_single_line_with_exit_one() {
    for args in [
        vec!["fit"],
        vec!["score", "--out", "x.csv", "--method", "sideways"],
        vec!["eval", "--id-scores", "missing.csv", "--ood-scores", "missing.csv", "--out", "r.json"],
        vec!["verify", "--property", "t2-bound", "--mu-out", "1,x"],
        vec!["synth", "--case", "blobs", "--n", "0", "--out", "never"],
    ] {
        let out = oodkit(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        stderr_line(&out);
    }
    assert!(!Path::new("never").exists());
}

#[test]
fn unknown_config_keys_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = p(dir.path(), "run.cfg");
    std::fs::write(&cfg, "p=2.5\ncolour=blue\n").unwrap();
    let out = oodkit(&["fit", "--config", &cfg, "--train", &fixture("tiny_labeled.csv"), "--out", &p(dir.path(), "m")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("colour"));
}

#[test]
fn verify_exit_codes() {
    let out = oodkit(&["verify", "--property", "t2-bound", "--mu-in", "0,0", "--mu-out", "4,0", "--n-mc", "20000"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["bound"].as_f64(), Some(2.0));
    assert_eq!(report["verdict"].as_str(), Some("pass"));

    let out = oodkit(&["verify", "--property", "is-unbiased", "--n", "400", "--resamples", "100", "--tolerance", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let out = oodkit(&["verify", "--property", "is-unbiased", "--n", "400", "--resamples", "100", "--alpha", "1", "--tolerance", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["max_deviation"].as_f64(), Some(0.0));

    let out = oodkit(&["verify", "--property", "grad-check", "--q", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let out = oodkit(&["verify", "--property", "is-unbiased", "--resamples", "10"]);
    assert_eq!(out.status.code(), Some(1));
}

fn write_blobs(dir: &Path) {
    let case = SynthCase::IsotropicBlobs { n_classes: 3, dim: 4, center_scale: 2.0, cluster_std: 1.0 };
    let data = sample_synthetic(&SynthSpec::new(case, 600, 5)).unwrap();
    write_features(&data.features, &dir.join("train.oodf"), Dtype::F32).unwrap();
    write_labels(&data.labels, &dir.join("train.oodl")).unwrap();
}

#[test]
fn refit_partition_keeps_prototypes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_blobs(d);
    let model = p(d, "model");
    let (train, labels) = (p(d, "train.oodf"), p(d, "train.oodl"));
    let fit = |extra: &[&str]| {
        let mut args = vec!["fit", "--train", &train, "--labels", &labels, "--out", &model];
        args.extend_from_slice(extra);
        oodkit(&args)
    };
    assert_eq!(fit(&["--p", "2.5", "--seed", "1"]).status.code(), Some(0));
    let protos = std::fs::read(p(d, "model/prototypes.oodf")).unwrap();
    let before = std::fs::read_to_string(p(d, "model/partition.txt")).unwrap();
    assert_eq!(fit(&["--refit-partition", "--estimator", "kde", "--kernel", "laplace"]).status.code(), Some(0));
    let after = std::fs::read_to_string(p(d, "model/partition.txt")).unwrap();
    assert_ne!(before, after);
    assert!(after.starts_with("kind=kde\nkernel=laplace\n"));
    assert_eq!(std::fs::read(p(d, "model/prototypes.oodf")).unwrap(), protos);
    let config = std::fs::read_to_string(p(d, "model/config.txt")).unwrap();
    assert!(config.contains("p=2.5\n") && config.contains("estimator=kde\n"));

    // KDE scoring needs the training rows back.
    let out = oodkit(&["score", "--model", &model, "--features", &p(d, "train.oodf"), "--out", &p(d, "s.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("--train"));
    let out = oodkit(&["score", "--model", &model, "--features", &p(d, "train.oodf"), "--train", &p(d, "train.oodf"), "--labels", &p(d, "train.oodl"), "--out", &p(d, "s.csv")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read_scores(Path::new(&p(d, "s.csv"))).unwrap().len(), 600);

    // Scoring cannot silently change fit-time settings.
    let out = oodkit(&["score", "--model", &model, "--p", "3", "--features", &p(d, "train.oodf"), "--out", &p(d, "t.csv")]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn model_directory_lock_fails_fast() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_blobs(d);
    std::fs::create_dir_all(d.join("model")).unwrap();
    std::fs::write(d.join("model/.lock"), "").unwrap();
    let out = oodkit(&["fit", "--train", &p(d, "train.oodf"), "--labels", &p(d, "train.oodl"), "--out", &p(d, "model")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("locked"));
    assert!(!d.join("model/prototypes.oodf").exists());
}

#[test]
fn search_p_trailer_and_sweep_q_marker() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_blobs(d);
    let out = oodkit(&["synth", "--case", "blobs", "--classes", "3", "--dim", "4", "--center-scale", "2", "--cluster-std", "1", "--n", "300", "--seed", "5", "--shift", "3", "--unlabeled", "--out", &p(d, "aux")]);
    assert_eq!(out.status.code(), Some(0));
    let common = ["--train", &p(d, "train.oodf"), "--labels", &p(d, "train.oodl"), "--id-eval", &p(d, "train.oodf"), "--aux-ood", &p(d, "aux/features.oodf")].map(|s| s.to_string());
    let mut args: Vec<String> = vec!["search-p".into()];
    args.extend(common.iter().cloned());
    args.extend(["--grid", "1.1:3.0:0.1", "--metric", "fpr95", "--out", &p(d, "sweep.csv")].map(String::from));
    let out = oodkit(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(p(d, "sweep.csv")).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 21);
    assert!(text.lines().last().unwrap().starts_with("# best_p="));

    let mut args: Vec<String> = vec!["sweep-q".into(), "--p".into(), "2.5".into()];
    args.extend(common.iter().cloned());
    args.extend(["--grid", "1.5:2.0:0.0833333333333333", "--out", &p(d, "q.csv")].map(String::from));
    let out = oodkit(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(p(d, "q.csv")).unwrap();
    let marked: Vec<&str> = text.lines().filter(|l| l.ends_with(",true")).collect();
    assert_eq!(marked.len(), 1, "{text}");
    assert!(marked[0].starts_with("1.66666666666"), "{text}");
    assert!(text.contains("# conjugate_q=1.6666666666666667"));
}

#[test]
fn logit_baselines_and_csv_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("logits.csv"), "f0,f1,f2\n2.0,0.0,0.0\n0.0,0.0,0.0\n").unwrap();
    let out = oodkit(&["score", "--method", "msp", "--logits", &p(d, "logits.csv"), "--out", &p(d, "msp.csv")]);
    assert_eq!(out.status.code(), Some(0));
    let s = read_scores(&d.join("msp.csv")).unwrap();
    let e2 = 2f64.exp();
    assert!((s[0] - e2 / (e2 + 2.0)).abs() < 1e-15 && (s[1] - 1.0 / 3.0).abs() < 1e-15);
    let out = oodkit(&["score", "--method", "energy", "--T", "1", "--logits", &p(d, "logits.csv"), "--out", &p(d, "energy.csv")]);
    assert_eq!(out.status.code(), Some(0));
    let s = read_scores(&d.join("energy.csv")).unwrap();
    assert!((s[1] - 3f64.ln()).abs() < 1e-15);
    let out = oodkit(&["score", "--method", "msp", "--features", &p(d, "logits.csv"), "--out", &p(d, "x.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_line(&out).contains("--logits"));
}
