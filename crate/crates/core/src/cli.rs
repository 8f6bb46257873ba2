//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code: 0 on success or a passing check, 1 on
//! usage, parse or runtime errors, 2 on a failing check, 3 when a check's
//! precondition does not hold.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::baselines::{energy_score, gem_score, knn_score, maha_score, msp_score, SharedCovariance};
use crate::config::{Method, RunConfig};
use crate::data::{exclude_labels, FeatureMatrix, UNLABELED};
use crate::density::{fit_prototypes, ConjNormScorer, PrototypeModel};
use crate::error::{OodError, Result};
use crate::io::{
    format_g17, read_features, read_labeled_features, read_labels, read_scores, write_atomic,
    write_features, write_labels, write_scores, Dtype, Json,
};
use crate::math::NormCoefficient;
use crate::metrics::EvalReport;
use crate::model::{load_model, load_prototypes, save_model, save_partition, DirLock};
use crate::search::{sweep_p, sweep_q_fixed_p, SweepData, SweepResult};
use crate::synth::{
    sample_synthetic, verify_gradient, verify_is_unbiasedness, verify_t2_bound, BoundVerdict,
    SynthCase, SynthSpec,
};

#[derive(Debug, Parser)]
#[command(name = "oodkit", version, about = "Feature-space OOD scoring with conjugate-norm densities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit class prototypes, covariance and a partition estimate.
    Fit(FitArgs),
    /// Score rows with a fitted model or a logit baseline.
    Score(ScoreArgs),
    /// AUROC and FPR at a TPR target from two score files.
    Eval(EvalArgs),
    /// Grid search over p on held-out ID rows and auxiliary outliers.
    SearchP(SweepArgs),
    /// Hold p fixed and sweep the divergence exponent q.
    SweepQ(SweepArgs),
    /// Write a synthetic data set with a known density.
    Synth(SynthArgs),
    /// Run a Monte Carlo or numerical self-check.
    Verify(VerifyArgs),
}

/// Settings shared with `config.txt`. Flags override `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// key=value file applied before the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Named p default: cifar10, cifar100, imagenet-resnet50, imagenet-mobilenetv2.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long = "q-override")]
    pub q_override: Option<String>,
    /// sn, is or kde.
    #[arg(long)]
    pub estimator: Option<String>,
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Energy temperature.
    #[arg(long = "T", alias = "temperature")]
    pub temperature: Option<String>,
    #[arg(long = "knn-k")]
    pub knn_k: Option<String>,
    #[arg(long)]
    pub bandwidth: Option<String>,
    /// gaussian or laplace.
    #[arg(long)]
    pub kernel: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long = "normalize-features")]
    pub normalize_features: bool,
    /// fpr95 or auroc.
    #[arg(long)]
    pub metric: Option<String>,
    /// start:stop:step
    #[arg(long)]
    pub grid: Option<String>,
    #[arg(long)]
    pub threads: Option<String>,
}

impl ConfigArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if let Some(v) = &self.preset {
            out.push(("preset", v.clone()));
        }
        let fields: [(&'static str, &Option<String>); 14] = [
            ("method", &self.method),
            ("p", &self.p),
            ("q-override", &self.q_override),
            ("estimator", &self.estimator),
            ("alpha", &self.alpha),
            ("seed", &self.seed),
            ("T", &self.temperature),
            ("knn-k", &self.knn_k),
            ("bandwidth", &self.bandwidth),
            ("kernel", &self.kernel),
            ("epsilon", &self.epsilon),
            ("metric", &self.metric),
            ("grid", &self.grid),
            ("threads", &self.threads),
        ];
        out.extend(fields.iter().filter_map(|(k, v)| v.as_ref().map(|v| (*k, v.clone()))));
        if self.normalize_features {
            out.push(("normalize-features", "true".into()));
        }
        out
    }

    /// Applies the config file and then the flags on top of `base`.
    fn resolve(&self, mut base: RunConfig) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| OodError::from(e).in_file(path))?;
            base.apply_text(&text).map_err(|e| e.in_file(path))?;
        }
        base.apply_pairs(&self.pairs())?;
        base.validate()?;
        Ok(base)
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Training features (.oodf or .csv with an optional label column).
    #[arg(long)]
    pub train: PathBuf,
    /// Training labels; required unless the CSV carries them.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Model directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the stored prototypes and refit only the partition.
    #[arg(long = "refit-partition")]
    pub refit_partition: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Logits for msp and energy.
    #[arg(long)]
    pub logits: Option<PathBuf>,
    /// Training features for knn and for KDE partitions.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long = "id-scores")]
    pub id_scores: PathBuf,
    #[arg(long = "ood-scores")]
    pub ood_scores: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::metrics::DEFAULT_TPR)]
    pub tpr: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long = "id-eval")]
    pub id_eval: PathBuf,
    #[arg(long = "aux-ood")]
    pub aux_ood: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CaseName {
    GaussianMixture,
    GammaGaussian,
    Blobs,
    Expfam,
}

/// Synthetic case and its parameters; unset parameters take the case
/// defaults.
#[derive(Debug, Clone, Args)]
pub struct CaseArgs {
    #[arg(long, value_enum, default_value = "gaussian-mixture")]
    pub case: CaseName,
    #[arg(long)]
    pub mu1: Option<f64>,
    #[arg(long)]
    pub mu2: Option<f64>,
    #[arg(long)]
    pub sigma1: Option<f64>,
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long)]
    pub shape: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long = "gauss-mean")]
    pub gauss_mean: Option<f64>,
    #[arg(long = "gauss-sigma")]
    pub gauss_sigma: Option<f64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "center-scale")]
    pub center_scale: Option<f64>,
    #[arg(long = "cluster-std")]
    pub cluster_std: Option<f64>,
    /// Class means for expfam, e.g. "0,0;4,0".
    #[arg(long)]
    pub means: Option<String>,
    /// Exponent for expfam.
    #[arg(long = "case-q")]
    pub case_q: Option<f64>,
}

impl CaseArgs {
    pub fn to_case(&self) -> Result<SynthCase> {
        Ok(match self.case {
            CaseName::GaussianMixture => {
                let SynthCase::GaussianMixture2D { mu1, mu2, sigma1, sigma2 } = SynthCase::gaussian_mixture() else {
                    unreachable!()
                };
                SynthCase::GaussianMixture2D {
                    mu1: self.mu1.unwrap_or(mu1),
                    mu2: self.mu2.unwrap_or(mu2),
                    sigma1: self.sigma1.unwrap_or(sigma1),
                    sigma2: self.sigma2.unwrap_or(sigma2),
                }
            }
            CaseName::GammaGaussian => {
                let SynthCase::GammaGaussianMixture2D { shape, scale, gauss_mean, gauss_sigma } =
                    SynthCase::gamma_gaussian()
                else {
                    unreachable!()
                };
                SynthCase::GammaGaussianMixture2D {
                    shape: self.shape.unwrap_or(shape),
                    scale: self.scale.unwrap_or(scale),
                    gauss_mean: self.gauss_mean.unwrap_or(gauss_mean),
                    gauss_sigma: self.gauss_sigma.unwrap_or(gauss_sigma),
                }
            }
            CaseName::Blobs => {
                let SynthCase::IsotropicBlobs { n_classes, dim, center_scale, cluster_std } = SynthCase::blobs() else {
                    unreachable!()
                };
                SynthCase::IsotropicBlobs {
                    n_classes: self.classes.unwrap_or(n_classes),
                    dim: self.dim.unwrap_or(dim),
                    center_scale: self.center_scale.unwrap_or(center_scale),
                    cluster_std: self.cluster_std.unwrap_or(cluster_std),
                }
            }
            CaseName::Expfam => SynthCase::ExpFamilyKnownQ {
                means: parse_vectors(self.means.as_deref().unwrap_or("0,0;4,0"))?,
                q: self.case_q.unwrap_or(2.0),
            },
        })
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub case: CaseArgs,
    #[arg(long, default_value_t = 5000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Added to every coordinate, e.g. to build an OOD set.
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
    /// Write every label as -1.
    #[arg(long)]
    pub unlabeled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Property {
    IsUnbiased,
    T2Bound,
    GradCheck,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum)]
    pub property: Property,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// is-unbiased: synthetic case (defaults to blobs).
    #[arg(long, value_enum)]
    pub case: Option<CaseName>,
    #[command(flatten)]
    pub case_params: CaseParams,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    #[arg(long, default_value_t = 2.0)]
    pub p: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1000)]
    pub resamples: usize,
    /// Pass threshold: relative deviation for is-unbiased, relative
    /// gradient error for grad-check.
    #[arg(long)]
    pub tolerance: Option<f64>,

    /// t2-bound: ID means, e.g. "0,0;1,1".
    #[arg(long = "mu-in", default_value = "0,0")]
    pub mu_in: String,
    #[arg(long = "mu-out", default_value = "4,0")]
    pub mu_out: String,
    /// Exponent for t2-bound and grad-check.
    #[arg(long, default_value_t = 2.0)]
    pub q: f64,
    #[arg(long = "n-mc", default_value_t = 100_000)]
    pub n_mc: usize,

    /// grad-check dimension.
    #[arg(long = "grad-dim", default_value_t = 8)]
    pub grad_dim: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

/// Case parameters for `verify`, mirroring `synth`.
#[derive(Debug, Clone, Args)]
pub struct CaseParams {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "center-scale")]
    pub center_scale: Option<f64>,
    #[arg(long = "cluster-std")]
    pub cluster_std: Option<f64>,
}

/// Parses `"a,b;c,d"` into vectors.
pub fn parse_vectors(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';')
        .map(|v| {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| OodError::Usage(format!("bad number '{x}' in '{s}'")))
                })
                .collect()
        })
        .collect()
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Diagnostics go to standard error as a single line.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("usage error");
            eprintln!("{}", one_line(first));
            return 1;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            1
        }
    }
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| OodError::Config(format!("thread pool: {e}")))?;
    pool.install(f)
}

pub fn execute(command: Command) -> Result<i32> {
    let default_threads = RunConfig::default().resolved_threads()?;
    match command {
        Command::Fit(a) => fit(&a).map(|_| 0),
        Command::Score(a) => score(&a).map(|_| 0),
        Command::Eval(a) => eval(&a).map(|_| 0),
        Command::SearchP(a) => sweep(&a, false).map(|_| 0),
        Command::SweepQ(a) => sweep(&a, true).map(|_| 0),
        Command::Synth(a) => with_threads(default_threads, || synth(&a)).map(|_| 0),
        Command::Verify(a) => with_threads(default_threads, || verify(&a)),
    }
}

/// Features plus labels from `--labels` or the CSV label column.
fn read_training(train: &Path, labels: Option<&Path>) -> Result<(FeatureMatrix, Vec<i32>)> {
    let (features, inline) = read_labeled_features(train)?;
    let labels = match (labels, inline) {
        (Some(path), _) => read_labels(path)?,
        (None, Some(l)) => l,
        (None, None) => {
            return Err(OodError::Usage(format!(
                "{} has no label column; pass --labels",
                train.display()
            )))
        }
    };
    if labels.len() != features.rows() {
        return Err(OodError::shape(
            format!("{} labels", features.rows()),
            format!("{} labels", labels.len()),
        ));
    }
    exclude_labels(&features, &labels, &[UNLABELED])
}

fn preprocess(m: FeatureMatrix, config: &RunConfig) -> FeatureMatrix {
    if config.normalize_features {
        m.unit_normalized()
    } else {
        m
    }
}

fn with_q(model: PrototypeModel, config: &RunConfig) -> Result<PrototypeModel> {
    match config.q_override {
        Some(q) => model.with_q_override(q),
        None => Ok(model),
    }
}

fn fit(a: &FitArgs) -> Result<()> {
    if a.refit_partition {
        let (stored, stored_config) = load_prototypes(&a.out)?;
        let config = a.config.resolve(stored_config.clone())?;
        if config.normalize_features != stored_config.normalize_features {
            return Err(OodError::Usage(
                "normalize-features differs from the stored prototypes; refit the whole model".into(),
            ));
        }
        let (train, labels) = read_training(&a.train, a.labels.as_deref())?;
        let train = preprocess(train, &config);
        train.check_cols(stored.dim())?;
        let partition = with_threads(config.resolved_threads()?, || {
            let model = with_q(stored.with_coefficient(NormCoefficient::new(config.p)?), &config)?;
            config.estimator_config().estimate(&model, &train, &labels)
        })?;
        let _lock = DirLock::acquire(&a.out)?;
        return save_partition(&a.out, &partition, &config);
    }
    let config = a.config.resolve(RunConfig::default())?;
    let (train, labels) = read_training(&a.train, a.labels.as_deref())?;
    let train = preprocess(train, &config);
    let (model, cov) = with_threads(config.resolved_threads()?, || {
        let model = with_q(fit_prototypes(&train, &labels, NormCoefficient::new(config.p)?)?, &config)?;
        let partition = config.estimator_config().estimate(&model, &train, &labels)?;
        let cov = SharedCovariance::fit(&train, &labels, config.epsilon)?;
        Ok((model.with_partition(partition), cov))
    })?;
    let _lock = DirLock::acquire(&a.out)?;
    save_model(&a.out, &model, &cov, &config)
}

/// Keys fixed when a model is fit.
const FIT_KEYS: &[&str] = &[
    "p",
    "q-override",
    "estimator",
    "alpha",
    "seed",
    "bandwidth",
    "kernel",
    "epsilon",
    "normalize-features",
];

fn check_fit_keys(stored: &RunConfig, requested: &RunConfig) -> Result<()> {
    let (s, r) = (stored.entries(), requested.entries());
    for ((key, old), (_, new)) in s.iter().zip(&r) {
        if FIT_KEYS.contains(&key.as_str()) && old != new {
            return Err(OodError::Usage(format!(
                "{key}={new} differs from the model's {key}={old}; refit the model"
            )));
        }
    }
    Ok(())
}

fn require<'a>(path: &'a Option<PathBuf>, flag: &str, why: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| OodError::Usage(format!("{flag} is required {why}")))
}

fn score(a: &ScoreArgs) -> Result<()> {
    let stored = a.model.as_deref().map(load_model).transpose()?;
    let base = stored.as_ref().map_or_else(RunConfig::default, |s| s.config.clone());
    let config = a.config.resolve(base)?;
    if let Some(s) = &stored {
        check_fit_keys(&s.config, &config)?;
    }
    let method = config.method;
    let scores = with_threads(config.resolved_threads()?, || -> Result<Vec<f64>> {
        if method.uses_logits() {
            let logits = read_features(require(&a.logits, "--logits", "for msp and energy")?)?;
            return (0..logits.rows())
                .into_par_iter()
                .map(|i| match method {
                    Method::Msp => msp_score(logits.row(i)),
                    _ => energy_score(logits.row(i), config.temperature),
                })
                .collect();
        }
        let features = preprocess(
            read_features(require(&a.features, "--features", "for feature-space methods")?)?,
            &config,
        );
        let model_only = |what: &str| {
            stored
                .as_ref()
                .ok_or_else(|| OodError::Usage(format!("--model is required for {what}")))
        };
        match method {
            Method::ConjNorm => {
                let s = model_only("conjnorm")?;
                let training = if config.estimator_config().needs_training_data_at_score_time() {
                    let train = require(&a.train, "--train", "to score with a KDE partition")?;
                    let (t, l) = read_training(train, a.labels.as_deref())?;
                    Some((preprocess(t, &config), l))
                } else {
                    None
                };
                let scorer = ConjNormScorer::new(&s.model, training.as_ref().map(|(t, l)| (t, l.as_slice())))?;
                scorer.score_all(&features)
            }
            Method::Maha | Method::Gem => {
                let s = model_only(method.name())?;
                features.check_cols(s.model.dim())?;
                (0..features.rows())
                    .into_par_iter()
                    .map(|i| {
                        let z = features.row(i);
                        if method == Method::Maha {
                            maha_score(z, s.model.means(), &s.covariance)
                        } else {
                            gem_score(z, s.model.means(), &s.covariance)
                        }
                    })
                    .collect()
            }
            Method::Knn => {
                let train = read_features(require(&a.train, "--train", "for knn")?)?.unit_normalized();
                features.check_cols(train.cols())?;
                (0..features.rows())
                    .into_par_iter()
                    .map(|i| knn_score(features.row(i), &train, config.knn_k))
                    .collect()
            }
            Method::Msp | Method::Energy => unreachable!("handled above"),
        }
    })?;
    write_scores(&a.out, &scores, &config.entries())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let id = read_scores(&a.id_scores)?;
    let ood = read_scores(&a.ood_scores)?;
    let r = EvalReport::compute_at(&id, &ood, a.tpr)?;
    let json = Json::obj([
        ("auroc", Json::Num(r.auroc)),
        ("fpr95", Json::Num(r.fpr95)),
        ("threshold", Json::Num(r.threshold)),
        ("n_id", Json::Int(r.n_id as i64)),
        ("n_ood", Json::Int(r.n_ood as i64)),
        ("tpr", Json::Num(a.tpr)),
    ]);
    write_atomic(&a.out, json.render().as_bytes())
}

fn render_sweep(result: &SweepResult, config: &RunConfig, q_sweep: bool) -> String {
    let mut s = String::new();
    for (k, v) in config.entries() {
        s.push_str(&format!("# {k}={v}\n"));
    }
    if q_sweep {
        s.push_str("q,auroc,fpr95,threshold,conjugate\n");
    } else {
        s.push_str("p,auroc,fpr95,threshold\n");
    }
    for row in &result.rows {
        s.push_str(&format!(
            "{},{},{},{}",
            format_g17(row.value),
            format_g17(row.report.auroc),
            format_g17(row.report.fpr95),
            format_g17(row.report.threshold)
        ));
        if q_sweep {
            s.push_str(if row.conjugate { ",true" } else { ",false" });
        }
        s.push('\n');
    }
    if q_sweep {
        s.push_str(&format!("# best_q={}\n", format_g17(result.best_value)));
        if let Some(q) = result.conjugate_q {
            s.push_str(&format!("# conjugate_q={}\n", format_g17(q)));
        }
    } else {
        s.push_str(&format!("# best_p={}\n", format_g17(result.best_value)));
    }
    s
}

fn sweep(a: &SweepArgs, q_sweep: bool) -> Result<()> {
    let config = a.config.resolve(RunConfig::default())?;
    let (train, labels) = read_training(&a.train, a.labels.as_deref())?;
    let train = preprocess(train, &config);
    let id_eval = preprocess(read_features(&a.id_eval)?, &config);
    let aux_ood = preprocess(read_features(&a.aux_ood)?, &config);
    let data = SweepData {
        train: &train,
        train_labels: &labels,
        id_eval: &id_eval,
        aux_ood: &aux_ood,
    };
    let grid = config.grid.values();
    let result = with_threads(config.resolved_threads()?, || {
        if q_sweep {
            sweep_q_fixed_p(&data, config.p, &grid, &config.estimator_config(), config.metric)
        } else {
            sweep_p(&data, &grid, &config.estimator_config(), config.metric)
        }
    })?;
    write_atomic(&a.out, render_sweep(&result, &config, q_sweep).as_bytes())
}

fn case_json(case: &SynthCase) -> Json {
    let mut fields = vec![("case", Json::Str(case.name().into()))];
    match case {
        SynthCase::GaussianMixture2D { mu1, mu2, sigma1, sigma2 } => fields.extend([
            ("mu1", Json::Num(*mu1)),
            ("mu2", Json::Num(*mu2)),
            ("sigma1", Json::Num(*sigma1)),
            ("sigma2", Json::Num(*sigma2)),
        ]),
        SynthCase::GammaGaussianMixture2D { shape, scale, gauss_mean, gauss_sigma } => fields.extend([
            ("shape", Json::Num(*shape)),
            ("scale", Json::Num(*scale)),
            ("gauss_mean", Json::Num(*gauss_mean)),
            ("gauss_sigma", Json::Num(*gauss_sigma)),
        ]),
        SynthCase::IsotropicBlobs { n_classes, dim, center_scale, cluster_std } => fields.extend([
            ("classes", Json::Int(*n_classes as i64)),
            ("dim", Json::Int(*dim as i64)),
            ("center_scale", Json::Num(*center_scale)),
            ("cluster_std", Json::Num(*cluster_std)),
        ]),
        SynthCase::ExpFamilyKnownQ { means, q } => fields.extend([
            (
                "means",
                Json::Arr(
                    means
                        .iter()
                        .map(|m| Json::Arr(m.iter().map(|&x| Json::Num(x)).collect()))
                        .collect(),
                ),
            ),
            ("q", Json::Num(*q)),
        ]),
    }
    Json::obj(fields)
}

pub const SYNTH_FEATURES: &str = "features.oodf";
pub const SYNTH_LABELS: &str = "labels.oodl";
pub const SYNTH_SPEC: &str = "spec.json";

fn synth(a: &SynthArgs) -> Result<()> {
    if !a.shift.is_finite() {
        return Err(OodError::Usage("--shift must be finite".into()));
    }
    let spec = SynthSpec::new(a.case.to_case()?, a.n, a.seed);
    let data = sample_synthetic(&spec)?;
    let shifted: Vec<f64> = data.features.as_slice().iter().map(|x| x + a.shift).collect();
    let features = FeatureMatrix::new(data.features.rows(), data.features.cols(), shifted)?;
    let labels = if a.unlabeled {
        vec![UNLABELED; data.labels.len()]
    } else {
        data.labels
    };
    let echo = Json::obj([
        ("spec", case_json(&spec.case)),
        ("n", Json::Int(a.n as i64)),
        ("seed", Json::Int(a.seed as i64)),
        ("shift", Json::Num(a.shift)),
        ("unlabeled", Json::Bool(a.unlabeled)),
    ]);
    std::fs::create_dir_all(&a.out).map_err(|e| OodError::from(e).in_file(&a.out))?;
    write_features(&features, &a.out.join(SYNTH_FEATURES), Dtype::F64)?;
    write_labels(&labels, &a.out.join(SYNTH_LABELS))?;
    write_atomic(&a.out.join(SYNTH_SPEC), echo.render().as_bytes())
}

fn emit(report: &Json, out: Option<&Path>) -> Result<()> {
    let text = report.render();
    if let Some(path) = out {
        write_atomic(path, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn verify(a: &VerifyArgs) -> Result<i32> {
    let verdict_code = |pass: bool| if pass { 0 } else { 2 };
    match a.property {
        Property::IsUnbiased => {
            let case = CaseArgs {
                case: a.case.unwrap_or(CaseName::Blobs),
                mu1: None,
                mu2: None,
                sigma1: None,
                sigma2: None,
                shape: None,
                scale: None,
                gauss_mean: None,
                gauss_sigma: None,
                classes: a.case_params.classes,
                dim: a.case_params.dim,
                center_scale: a.case_params.center_scale,
                cluster_std: a.case_params.cluster_std,
                means: None,
                case_q: None,
            };
            let spec = SynthSpec::new(case.to_case()?, a.n, a.seed);
            let tolerance = a.tolerance.unwrap_or(0.01);
            let r = verify_is_unbiasedness(&spec, a.p, a.alpha, a.resamples, tolerance)?;
            let classes = r
                .classes
                .iter()
                .map(|c| {
                    Json::obj([
                        ("class", Json::Int(c.class as i64)),
                        ("relative_deviation", Json::Num(c.relative_deviation)),
                        ("stderr", Json::Num(c.stderr)),
                    ])
                })
                .collect();
            let report = Json::obj([
                ("property", Json::Str("is-unbiased".into())),
                ("pass", Json::Bool(r.pass)),
                ("max_deviation", Json::Num(r.max_deviation)),
                ("tolerance", Json::Num(tolerance)),
                ("alpha", Json::Num(r.alpha)),
                ("n_samples", Json::Int(r.n_samples as i64)),
                ("n_resamples", Json::Int(r.n_resamples as i64)),
                ("p", Json::Num(a.p)),
                ("n", Json::Int(a.n as i64)),
                ("seed", Json::Int(a.seed as i64)),
                ("spec", case_json(&spec.case)),
                ("classes", Json::Arr(classes)),
            ]);
            emit(&report, a.out.as_deref())?;
            Ok(verdict_code(r.pass))
        }
        Property::T2Bound => {
            let mu_in = parse_vectors(&a.mu_in)?;
            let mu_out = parse_vectors(&a.mu_out)?;
            let [mu_out] = mu_out.as_slice() else {
                return Err(OodError::Usage("--mu-out takes exactly one vector".into()));
            };
            let r = verify_t2_bound(&mu_in, mu_out, a.q, a.n_mc, a.seed)?;
            let vec_json = |v: &[f64]| Json::Arr(v.iter().map(|&x| Json::Num(x)).collect());
            let report = Json::obj([
                ("property", Json::Str("t2-bound".into())),
                ("verdict", Json::Str(r.verdict.name().into())),
                ("gap", Json::Num(r.gap)),
                ("stderr", Json::Num(r.stderr)),
                ("bound", Json::Num(r.bound)),
                ("max_density", Json::Num(r.max_density)),
                ("q", Json::Num(a.q)),
                ("n_mc", Json::Int(r.n_mc as i64)),
                ("seed", Json::Int(a.seed as i64)),
                ("mu_in", Json::Arr(mu_in.iter().map(|m| vec_json(m)).collect())),
                ("mu_out", vec_json(mu_out)),
            ]);
            emit(&report, a.out.as_deref())?;
            Ok(match r.verdict {
                BoundVerdict::Pass => 0,
                BoundVerdict::Fail => 2,
                BoundVerdict::PreconditionViolated => 3,
            })
        }
        Property::GradCheck => {
            let tolerance = a.tolerance.unwrap_or(1e-6);
            let r = verify_gradient(a.q, a.grad_dim, a.trials, a.seed, tolerance)?;
            let report = Json::obj([
                ("property", Json::Str("grad-check".into())),
                ("pass", Json::Bool(r.pass)),
                ("max_error", Json::Num(r.max_error)),
                ("tolerance", Json::Num(tolerance)),
                ("q", Json::Num(r.q)),
                ("dim", Json::Int(r.dim as i64)),
                ("trials", Json::Int(r.trials as i64)),
                ("seed", Json::Int(a.seed as i64)),
            ]);
            emit(&report, a.out.as_deref())?;
            Ok(verdict_code(r.pass))
        }
    }
}
