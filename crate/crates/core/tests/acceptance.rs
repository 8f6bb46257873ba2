//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails or exceeds its time budget.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use oodkit::baselines::{gem_score, SharedCovariance};
use oodkit::data::FeatureMatrix;
use oodkit::density::{estimate_partition_is, fit_prototypes, ConjNormScorer, PartitionEstimate};
use oodkit::io::{decode_features, decode_labels, encode_features, encode_labels, write_features, Dtype};
use oodkit::math::{bregman_divergence, conjugate_exponent, phi_gradient, NormCoefficient};
use oodkit::metrics::{auroc, fpr_at_tpr, spearman, EvalReport};
use oodkit::search::{sweep_p, EstimatorConfig, Grid, SelectionMetric, SweepData};
use oodkit::synth::{
    sample_synthetic, sample_uniform_box, verify_is_unbiasedness, verify_t2_bound, BoundVerdict,
    SynthCase, SynthSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_vec(r: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| r.random_range(-scale..scale)).collect()
}

fn conjugacy_and_reduction() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 1..=900 {
        let p = 1.0 + i as f64 * 0.01;
        let q = conjugate_exponent(p).map_err(|e| e.to_string())?;
        worst = worst.max((1.0 / p + 1.0 / q - 1.0).abs());
    }
    ensure(worst <= 1e-12, || format!("|1/p + 1/q - 1| reached {worst:e}"))?;
    let mut r = rng(1);
    let mut worst_d: f64 = 0.0;
    for _ in 0..10_000 {
        let d = r.random_range(1..=16);
        let z = random_vec(&mut r, d, 5.0);
        let mu = random_vec(&mut r, d, 5.0);
        let exact = 0.5 * z.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        let got = bregman_divergence(&z, &mu, 2.0).map_err(|e| e.to_string())?;
        worst_d = worst_d.max((got - exact).abs());
    }
    ensure(worst_d <= 1e-10, || format!("q=2 divergence off by {worst_d:e}"))?;
    Ok(format!("max conjugacy error {worst:.1e}, max q=2 error {worst_d:.1e}"))
}

/// `0.5 * (sum |v_i|^q)^(2/q)`, written independently of the library.
fn phi_oracle(v: &[f64], q: f64) -> f64 {
    0.5 * v.iter().map(|x| x.abs().powf(q)).sum::<f64>().powf(2.0 / q)
}

fn gradient_check() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for q in [1.2, 1.5, 2.0, 3.0] {
        for _ in 0..1000 {
            let d = r.random_range(1..=8);
            let z = random_vec(&mut r, d, 3.0);
            let grad = phi_gradient(&z, q).map_err(|e| e.to_string())?;
            let mut num = vec![0.0; d];
            for i in 0..d {
                let h = 1e-6 * z[i].abs().max(1e-2);
                let (mut up, mut down) = (z.clone(), z.clone());
                up[i] += h;
                down[i] -= h;
                num[i] = (phi_oracle(&up, q) - phi_oracle(&down, q)) / (2.0 * h);
            }
            let diff = num.iter().zip(&grad).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let size = grad.iter().map(|g| g.abs()).fold(0.0, f64::max);
            worst = worst.max(diff / size.max(1e-300));
        }
    }
    ensure(worst < 1e-5, || format!("relative gradient error {worst:e}"))?;
    Ok(format!("max relative error {worst:.1e} over 4000 points"))
}

fn bregman_nonnegativity() -> Outcome {
    let mut r = rng(3);
    let mut min: f64 = f64::INFINITY;
    let mut self_max: f64 = 0.0;
    for _ in 0..10_000 {
        let q = r.random_range(1.05..6.0);
        let d = r.random_range(1..=16);
        let z = random_vec(&mut r, d, 10.0);
        let mu = random_vec(&mut r, d, 10.0);
        min = min.min(bregman_divergence(&z, &mu, q).map_err(|e| e.to_string())?);
        self_max = self_max.max(bregman_divergence(&z, &z, q).map_err(|e| e.to_string())?.abs());
    }
    ensure(min >= -1e-9, || format!("divergence dipped to {min:e}"))?;
    ensure(self_max <= 1e-12, || format!("d(z, z) reached {self_max:e}"))?;
    Ok(format!("min divergence {min:.3e}, max d(z,z) {self_max:.1e}"))
}

fn gem_equivalence() -> Outcome {
    let mut r = rng(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = r.random_range(1..=16);
        let n = r.random_range(20..=400);
        let shift = r.random_range(0.0..3.0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let k = (i % 2) as i32;
            let mut row = random_vec(&mut r, d, 1.0);
            row[0] += shift * k as f64;
            rows.push(row);
            labels.push(k);
        }
        let train = FeatureMatrix::from_rows(&rows).map_err(|e| e.to_string())?;
        let model = fit_prototypes(&train, &labels, NormCoefficient::new(2.0).unwrap())
            .map_err(|e| e.to_string())?
            .with_partition(PartitionEstimate::SelfNormalized);
        let id: Vec<Vec<f64>> = (0..100).map(|_| random_vec(&mut r, d, 1.5)).collect();
        let ood: Vec<Vec<f64>> = (0..100)
            .map(|_| random_vec(&mut r, d, 4.0).iter().map(|x| x + 1.0).collect())
            .collect();
        let scorer = ConjNormScorer::new(&model, None).map_err(|e| e.to_string())?;
        let cov = SharedCovariance::identity(d);
        let cn = |set: &[Vec<f64>]| -> Vec<f64> { set.iter().map(|z| scorer.score(z).unwrap()).collect() };
        let gem = |set: &[Vec<f64>]| -> Vec<f64> {
            set.iter().map(|z| gem_score(z, model.means(), &cov).unwrap()).collect()
        };
        let a = auroc(&cn(&id), &cn(&ood)).map_err(|e| e.to_string())?;
        let b = auroc(&gem(&id), &gem(&ood)).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
    }
    ensure(worst <= 1e-12, || format!("AUROC gap {worst:e}"))?;
    Ok(format!("max AUROC gap {worst:.1e} over 100 datasets"))
}

fn is_unbiasedness() -> Outcome {
    let case = SynthCase::IsotropicBlobs {
        n_classes: 10,
        dim: 16,
        center_scale: 0.25,
        cluster_std: 0.25,
    };
    let spec = SynthSpec::new(case, 2000, 11);
    let r = verify_is_unbiasedness(&spec, 2.0, 0.1, 1000, 0.01).map_err(|e| e.to_string())?;
    let worst_se = r.classes.iter().map(|c| c.stderr).fold(0.0, f64::max);
    ensure(r.pass, || {
        format!("max deviation {:.4} > 1% (max stderr {worst_se:.4})", r.max_deviation)
    })?;
    let full = verify_is_unbiasedness(&spec, 2.0, 1.0, 100, 0.0).map_err(|e| e.to_string())?;
    ensure(full.max_deviation == 0.0, || {
        format!("alpha=1 deviation {:e}", full.max_deviation)
    })?;
    Ok(format!(
        "max deviation {:.4} (max stderr {worst_se:.4}); alpha=1 deviation exactly 0",
        r.max_deviation
    ))
}

/// `(2 * wins + ties) / (2 n m)` over all ID/OOD pairs.
fn auroc_oracle(id: &[f64], ood: &[f64]) -> f64 {
    let mut twice: u64 = 0;
    for &a in id {
        for &b in ood {
            twice += if a > b { 2 } else if a == b { 1 } else { 0 };
        }
    }
    twice as f64 / (2 * id.len() * ood.len()) as f64
}

/// Scans every candidate threshold from high to low and stops at the first
/// one whose TPR reaches 95%.
fn fpr95_oracle(id: &[f64], ood: &[f64]) -> f64 {
    let mut cands: Vec<f64> = id.iter().chain(ood).copied().collect();
    cands.sort_by(|a, b| b.total_cmp(a));
    cands.dedup();
    for t in cands {
        let tp = id.iter().filter(|&&s| s >= t).count();
        if 100 * tp >= 95 * id.len() {
            return ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64;
        }
    }
    unreachable!("the smallest score passes every ID sample")
}

fn metric_oracles() -> Outcome {
    let mut r = rng(6);
    let mut ties = 0;
    for inst in 0..1000 {
        let n = r.random_range(1..=60);
        let m = r.random_range(1..=60);
        let discrete = inst % 2 == 0;
        let mut draw = |shift: f64| -> f64 {
            if discrete {
                r.random_range(0..6) as f64 + shift.round()
            } else {
                r.random_range(-3.0..3.0) + shift
            }
        };
        let id: Vec<f64> = (0..n).map(|_| draw(0.5)).collect();
        let ood: Vec<f64> = (0..m).map(|_| draw(0.0)).collect();
        if id.iter().any(|a| ood.contains(a)) {
            ties += 1;
        }
        let a = auroc(&id, &ood).map_err(|e| e.to_string())?;
        let (f, _) = fpr_at_tpr(&id, &ood, 0.95).map_err(|e| e.to_string())?;
        ensure(a == auroc_oracle(&id, &ood), || format!("instance {inst}: AUROC {a} vs oracle"))?;
        ensure(f == fpr95_oracle(&id, &ood), || format!("instance {inst}: FPR95 {f} vs oracle"))?;
        let up = |s: &[f64]| -> Vec<f64> { s.iter().map(|x| x * x * x + 3.0 * x + 1.0).collect() };
        let t = EvalReport::compute(&up(&id), &up(&ood)).map_err(|e| e.to_string())?;
        ensure(t.auroc == a && t.fpr95 == f, || format!("instance {inst}: not transform invariant"))?;
    }
    Ok(format!("1000 instances exact ({ties} with cross-set ties)"))
}

fn gaussian_alignment() -> Outcome {
    let spec = SynthSpec::new(SynthCase::gaussian_mixture(), 2000, 42);
    let data = sample_synthetic(&spec).map_err(|e| e.to_string())?;
    let model = fit_prototypes(&data.features, &data.labels, NormCoefficient::new(2.0).unwrap())
        .map_err(|e| e.to_string())?
        .with_partition(PartitionEstimate::SelfNormalized);
    let scores = ConjNormScorer::new(&model, None)
        .and_then(|s| s.score_all(&data.features))
        .map_err(|e| e.to_string())?;
    let density: Vec<f64> = data.features.iter_rows().map(|z| data.density.pdf(z)).collect();
    let rho = spearman(&scores, &density).map_err(|e| e.to_string())?;
    ensure(rho >= 0.99, || format!("Spearman {rho:.5} < 0.99"))?;
    Ok(format!("Spearman {rho:.6} over 2000 points"))
}

fn sweep_correctness() -> Outcome {
    let blobs = SynthCase::IsotropicBlobs {
        n_classes: 4,
        dim: 8,
        center_scale: 2.0,
        cluster_std: 1.0,
    };
    let train = sample_synthetic(&SynthSpec::new(blobs.clone(), 2000, 81)).map_err(|e| e.to_string())?;
    // Blob centres are drawn from the seed, so hold out rows of one draw.
    let idx: Vec<usize> = (0..2000).collect();
    let (fit_idx, eval_idx) = idx.split_at(1500);
    let fit_x = train.features.select_rows(fit_idx);
    let fit_y: Vec<i32> = fit_idx.iter().map(|&i| train.labels[i]).collect();
    let id_eval = train.features.select_rows(eval_idx);
    let aux = sample_uniform_box(500, 8, -6.0, 6.0, 82).map_err(|e| e.to_string())?;
    let data = SweepData {
        train: &fit_x,
        train_labels: &fit_y,
        id_eval: &id_eval,
        aux_ood: &aux,
    };
    let grid = Grid::DEFAULT_P.values();
    let est = EstimatorConfig::ImportanceSampling { alpha: 0.1, seed: 5 };
    let first = sweep_p(&data, &grid, &est, SelectionMetric::Fpr95).map_err(|e| e.to_string())?;
    let second = sweep_p(&data, &grid, &est, SelectionMetric::Fpr95).map_err(|e| e.to_string())?;
    ensure(first == second, || "rerun differs".into())?;
    ensure(first.rows.len() == 20, || format!("{} grid rows", first.rows.len()))?;
    let mut recomputed = Vec::new();
    for &p in &grid {
        let model = fit_prototypes(&fit_x, &fit_y, NormCoefficient::new(p).unwrap()).map_err(|e| e.to_string())?;
        let part = estimate_partition_is(&model, &fit_x, 0.1, 5).map_err(|e| e.to_string())?;
        let model = model.with_partition(part);
        let s = ConjNormScorer::new(&model, None).map_err(|e| e.to_string())?;
        let id = s.score_all(&id_eval).map_err(|e| e.to_string())?;
        let ood = s.score_all(&aux).map_err(|e| e.to_string())?;
        recomputed.push(fpr_at_tpr(&id, &ood, 0.95).map_err(|e| e.to_string())?.0);
    }
    for (row, fpr) in first.rows.iter().zip(&recomputed) {
        ensure(row.report.fpr95 == *fpr, || format!("p={}: table {} vs recomputed {fpr}", row.value, row.report.fpr95))?;
    }
    let best = first.best_row().report.fpr95;
    ensure(recomputed.iter().all(|&f| best <= f), || format!("best FPR95 {best} is not minimal"))?;
    Ok(format!("best p={} with FPR95 {best:.4}; rerun identical", first.best_value))
}

fn t2_bound() -> Outcome {
    let mut r = rng(9);
    let mut worst_margin = f64::INFINITY;
    for cfg in 0..100 {
        let d = r.random_range(1..=8);
        let (mu_in, mu_out) = if cfg == 0 {
            let mu = random_vec(&mut r, d, 3.0);
            (vec![mu.clone()], mu)
        } else {
            let k = r.random_range(1..=4);
            let mu_in: Vec<Vec<f64>> = (0..k).map(|_| random_vec(&mut r, d, 3.0)).collect();
            (mu_in, random_vec(&mut r, d, 5.0))
        };
        let rep = verify_t2_bound(&mu_in, &mu_out, 2.0, 100_000, cfg).map_err(|e| e.to_string())?;
        if cfg == 0 {
            ensure(rep.bound == 0.0, || format!("zero case bound {}", rep.bound))?;
        }
        ensure(rep.verdict == BoundVerdict::Pass, || format!("config {cfg}: {rep:?}"))?;
        worst_margin = worst_margin.min(rep.bound + 3.0 * rep.stderr - rep.gap);
    }
    Ok(format!("100 configurations pass; smallest slack {worst_margin:.3e}"))
}

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_oodkit")
}

fn run_cli(args: &[String], threads: Option<usize>) -> Result<(), String> {
    let mut cmd = Command::new(exe());
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("OODKIT_THREADS", t.to_string()),
        None => cmd.env_remove("OODKIT_THREADS"),
    };
    let out = cmd.output().map_err(|e| e.to_string())?;
    if out.status.code() != Some(0) {
        return Err(format!(
            "{:?} exited {:?}: {}",
            args,
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(())
}

/// Runs every command into `dir` and returns the produced output files.
fn run_pipeline(inputs: &Path, dir: &Path, threads: Option<usize>) -> Result<Vec<PathBuf>, String> {
    let i = |name: &str| inputs.join(name).display().to_string();
    let o = |name: &str| dir.join(name).display().to_string();
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut outputs = Vec::new();
    let mut go = |args: Vec<String>, produced: &[&str]| -> Result<(), String> {
        run_cli(&args, threads)?;
        outputs.extend(produced.iter().map(|p| dir.join(p)));
        Ok(())
    };
    go(
        [s(&["synth", "--case", "gamma-gaussian", "--n", "1000", "--seed", "3", "--out"]), vec![o("synth")]].concat(),
        &["synth/features.oodf", "synth/labels.oodl", "synth/spec.json"],
    )?;
    go(
        [
            s(&["fit", "--train"]),
            vec![i("train.oodf")],
            s(&["--labels"]),
            vec![i("train.oodl")],
            s(&["--p", "2.5", "--estimator", "is", "--alpha", "0.2", "--seed", "7", "--out"]),
            vec![o("model")],
        ]
        .concat(),
        &["model/prototypes.oodf", "model/counts.oodl", "model/covariance.oodf", "model/partition.txt", "model/config.txt"],
    )?;
    for (method, extra) in [
        ("conjnorm", vec![]),
        ("maha", vec![]),
        ("gem", vec![]),
        ("knn", vec!["--train".to_string(), i("train.oodf"), "--knn-k".into(), "5".into()]),
    ] {
        for set in ["id", "ood"] {
            let out = format!("{method}-{set}.csv");
            go(
                [
                    s(&["score", "--model"]),
                    vec![o("model"), "--features".into(), i(&format!("{set}.oodf"))],
                    s(&["--method", method]),
                    extra.clone(),
                    vec!["--out".into(), o(&out)],
                ]
                .concat(),
                &[&out],
            )?;
        }
    }
    for method in ["msp", "energy"] {
        let out = format!("{method}.csv");
        go(
            [s(&["score", "--logits"]), vec![i("logits.oodf")], s(&["--method", method, "--T", "2", "--out"]), vec![o(&out)]].concat(),
            &[&out],
        )?;
    }
    go(
        [
            s(&["eval", "--id-scores"]),
            vec![o("conjnorm-id.csv"), "--ood-scores".into(), o("conjnorm-ood.csv"), "--out".into(), o("report.json")],
        ]
        .concat(),
        &["report.json"],
    )?;
    let sweep_inputs = vec![
        "--train".to_string(),
        i("train.oodf"),
        "--labels".into(),
        i("train.oodl"),
        "--id-eval".into(),
        i("id.oodf"),
        "--aux-ood".into(),
        i("ood.oodf"),
    ];
    go(
        [s(&["search-p"]), sweep_inputs.clone(), s(&["--grid", "1.1:3.0:0.1", "--metric", "fpr95", "--out"]), vec![o("sweep.csv")]].concat(),
        &["sweep.csv"],
    )?;
    go(
        [s(&["sweep-q", "--p", "2"]), sweep_inputs, s(&["--grid", "1.2:3.0:0.2", "--out"]), vec![o("sweep-q.csv")]].concat(),
        &["sweep-q.csv"],
    )?;
    go(
        [s(&["verify", "--property", "is-unbiased", "--n", "500", "--resamples", "200", "--tolerance", "0.05", "--seed", "2", "--out"]), vec![o("v-is.json")]].concat(),
        &["v-is.json"],
    )?;
    go(
        [s(&["verify", "--property", "t2-bound", "--mu-in", "0,0;1,2", "--mu-out", "3,-1", "--n-mc", "50000", "--seed", "4", "--out"]), vec![o("v-t2.json")]].concat(),
        &["v-t2.json"],
    )?;
    go(
        [s(&["verify", "--property", "grad-check", "--q", "1.5", "--out"]), vec![o("v-grad.json")]].concat(),
        &["v-grad.json"],
    )?;
    Ok(outputs)
}

/// Numbers inside text or binary outputs, in order.
fn numbers(path: &Path, bytes: &[u8]) -> Result<(Vec<f64>, String), String> {
    let name = path.display().to_string();
    if name.ends_with(".oodf") {
        let (m, _) = decode_features(bytes).map_err(|e| e.to_string())?;
        return Ok((m.into_vec(), String::new()));
    }
    if name.ends_with(".oodl") {
        let l = decode_labels(bytes).map_err(|e| e.to_string())?;
        return Ok((l.iter().map(|&x| x as f64).collect(), String::new()));
    }
    let text = String::from_utf8_lossy(bytes);
    let mut nums = Vec::new();
    let mut skeleton = String::new();
    for tok in text.split(|c: char| ",=:;[]{} \n\"".contains(c)) {
        match tok.parse::<f64>() {
            Ok(x) => nums.push(x),
            Err(_) => skeleton.push_str(tok),
        }
        skeleton.push('|');
    }
    Ok((nums, skeleton))
}

fn io_and_determinism() -> Outcome {
    let mut r = rng(10);
    for _ in 0..50 {
        let (rows, cols) = (r.random_range(0..20), r.random_range(1..10));
        let data: Vec<f64> = (0..rows * cols).map(|_| r.random_range(-1e3..1e3)).collect();
        let m = FeatureMatrix::new(rows, cols, data).map_err(|e| e.to_string())?;
        for dtype in [Dtype::F64, Dtype::F32] {
            let bytes = encode_features(&m, dtype);
            let (back, _) = decode_features(&bytes).map_err(|e| e.to_string())?;
            ensure(encode_features(&back, dtype) == bytes, || "OODF re-encode differs".into())?;
            if dtype == Dtype::F64 {
                let same = back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits());
                ensure(same, || "OODF f64 values differ".into())?;
            }
        }
        let labels: Vec<i32> = (0..rows).map(|_| r.random_range(-1..10)).collect();
        let bytes = encode_labels(&labels);
        ensure(decode_labels(&bytes).map_err(|e| e.to_string())? == labels, || "OODL differs".into())?;
    }

    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let inputs = root.path().join("inputs");
    std::fs::create_dir_all(&inputs).map_err(|e| e.to_string())?;
    let id = sample_synthetic(&SynthSpec::new(SynthCase::gaussian_mixture(), 1200, 1)).map_err(|e| e.to_string())?;
    let held = sample_synthetic(&SynthSpec::new(SynthCase::gaussian_mixture(), 400, 2)).map_err(|e| e.to_string())?;
    let ood = sample_uniform_box(400, 2, -2.0, 14.0, 3).map_err(|e| e.to_string())?;
    let logits = FeatureMatrix::new(300, 5, (0..1500).map(|_| r.random_range(-4.0..4.0)).collect()).map_err(|e| e.to_string())?;
    let w = |m: &FeatureMatrix, name: &str| write_features(m, &inputs.join(name), Dtype::F64).map_err(|e| e.to_string());
    w(&id.features, "train.oodf")?;
    w(&held.features, "id.oodf")?;
    w(&ood, "ood.oodf")?;
    w(&logits, "logits.oodf")?;
    oodkit::io::write_labels(&id.labels, &inputs.join("train.oodl")).map_err(|e| e.to_string())?;

    let serial_a = run_pipeline(&inputs, &root.path().join("a"), Some(1))?;
    let serial_b = run_pipeline(&inputs, &root.path().join("b"), Some(1))?;
    let parallel_threads = std::thread::available_parallelism().map_or(4, |n| n.get()).max(4);
    let par = run_pipeline(&inputs, &root.path().join("c"), Some(parallel_threads))?;
    let mut byte_identical_parallel = 0;
    for ((a, b), c) in serial_a.iter().zip(&serial_b).zip(&par) {
        let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
        let (ba, bb, bc) = (read(a)?, read(b)?, read(c)?);
        ensure(ba == bb, || format!("{} differs between serial runs", a.display()))?;
        if ba == bc {
            byte_identical_parallel += 1;
            continue;
        }
        let (na, sa) = numbers(a, &ba)?;
        let (nc, sc) = numbers(c, &bc)?;
        ensure(sa == sc && na.len() == nc.len(), || format!("{} changes structure in parallel", a.display()))?;
        let gap = na.iter().zip(&nc).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure(gap <= 1e-10, || format!("{} differs by {gap:e} in parallel", a.display()))?;
    }
    Ok(format!(
        "{} outputs byte-identical across serial reruns; {byte_identical_parallel} also byte-identical at {parallel_threads} threads",
        serial_a.len()
    ))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 10] = [
        ("1 conjugacy and q=2 reduction", Duration::from_secs(1), conjugacy_and_reduction),
        ("2 gradient check", Duration::from_secs(5), gradient_check),
        ("3 divergence nonnegativity and identity", Duration::from_secs(5), bregman_nonnegativity),
        ("4 GEM equivalence", Duration::from_secs(30), gem_equivalence),
        ("5 importance-sampling unbiasedness", Duration::from_secs(120), is_unbiasedness),
        ("6 metric oracles", Duration::from_secs(30), metric_oracles),
        ("7 Gaussian alignment", Duration::from_secs(10), gaussian_alignment),
        ("8 sweep correctness", Duration::from_secs(120), sweep_correctness),
        ("9 separation bound verifier", Duration::from_secs(180), t2_bound),
        ("10 I/O round trip and determinism", Duration::from_secs(30), io_and_determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("{detail}; took {elapsed:.2?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS  criterion {name} ({elapsed:.2?}): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name} ({elapsed:.2?}): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
