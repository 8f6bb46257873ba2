//! On-disk model directory: one small file per fitted piece, so the
//! partition estimate can be refit without touching the prototypes.
//!
//! | file              | contents                                  |
//! |-------------------|-------------------------------------------|
//! | `prototypes.oodf` | class means, `K x d`                      |
//! | `counts.oodl`     | training rows per class                   |
//! | `covariance.oodf` | shared covariance for Mahalanobis and GEM |
//! | `partition.txt`   | partition estimate, `key=value`           |
//! | `config.txt`      | effective run configuration               |

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::baselines::SharedCovariance;
use crate::config::RunConfig;
use crate::data::FeatureMatrix;
use crate::density::{Kernel, PartitionEstimate, PrototypeModel};
use crate::error::{OodError, Result};
use crate::io::{
    decode_features, decode_labels, encode_features, encode_labels, format_g17, write_atomic,
    Dtype,
};
use crate::math::NormCoefficient;

pub const PROTOTYPES_FILE: &str = "prototypes.oodf";
pub const COUNTS_FILE: &str = "counts.oodl";
pub const COVARIANCE_FILE: &str = "covariance.oodf";
pub const PARTITION_FILE: &str = "partition.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const LOCK_FILE: &str = ".lock";

/// Advisory writer lock, released on drop. A second writer fails fast.
#[derive(Debug)]
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| OodError::from(e).in_file(dir))?;
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(OodError::Usage(format!(
                "model directory {} is locked by another writer (remove {} if stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(OodError::from(e).in_file(&path)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Everything `score` needs from a fitted model.
#[derive(Debug, Clone)]
pub struct StoredModel {
    pub model: PrototypeModel,
    pub covariance: SharedCovariance,
    pub config: RunConfig,
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter().map(|&x| format_g17(x)).collect::<Vec<_>>().join(",")
}

pub fn render_partition(p: &PartitionEstimate) -> String {
    match p {
        PartitionEstimate::SelfNormalized => "kind=sn\n".into(),
        PartitionEstimate::ImportanceSampling {
            log_phi,
            alpha,
            seed,
            n_samples,
        } => format!(
            "kind=is\nalpha={}\nseed={seed}\nn_samples={n_samples}\nlog_phi={}\n",
            format_g17(*alpha),
            join_floats(log_phi)
        ),
        PartitionEstimate::Kde { bandwidths, kernel } => format!(
            "kind=kde\nkernel={}\nbandwidths={}\n",
            kernel.name(),
            join_floats(bandwidths)
        ),
    }
}

pub fn parse_partition(text: &str) -> Result<PartitionEstimate> {
    let mut fields = std::collections::BTreeMap::new();
    let mut offset = 0u64;
    for line in text.lines() {
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| OodError::parse(offset, format!("expected key=value, got '{t}'")))?;
            if fields.insert(k.trim().to_string(), (v.trim().to_string(), offset)).is_some() {
                return Err(OodError::parse(offset, format!("duplicate key '{}'", k.trim())));
            }
        }
        offset += line.len() as u64 + 1;
    }
    let mut take = |key: &str| {
        fields
            .remove(key)
            .ok_or_else(|| OodError::parse(offset, format!("missing key '{key}'")))
    };
    let floats = |(v, at): (String, u64)| -> Result<Vec<f64>> {
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| !x.is_nan())
                    .ok_or_else(|| OodError::parse(at, format!("invalid number '{s}'")))
            })
            .collect()
    };
    let parse_at = |(v, at): (String, u64)| -> Result<f64> {
        v.parse()
            .map_err(|_| OodError::parse(at, format!("invalid number '{v}'")))
    };
    let kind = take("kind")?.0;
    let estimate = match kind.as_str() {
        "sn" => PartitionEstimate::SelfNormalized,
        "is" => {
            let alpha = parse_at(take("alpha")?)?;
            let (seed, at) = take("seed")?;
            let seed = seed
                .parse()
                .map_err(|_| OodError::parse(at, format!("invalid seed '{seed}'")))?;
            let (n, at) = take("n_samples")?;
            let n_samples = n
                .parse()
                .map_err(|_| OodError::parse(at, format!("invalid sample count '{n}'")))?;
            PartitionEstimate::ImportanceSampling {
                log_phi: floats(take("log_phi")?)?,
                alpha,
                seed,
                n_samples,
            }
        }
        "kde" => PartitionEstimate::Kde {
            kernel: Kernel::from_name(&take("kernel")?.0)?,
            bandwidths: floats(take("bandwidths")?)?,
        },
        other => return Err(OodError::parse(0, format!("unknown partition kind '{other}'"))),
    };
    if let Some((k, (_, at))) = fields.into_iter().next() {
        return Err(OodError::parse(at, format!("unexpected key '{k}'")));
    }
    Ok(estimate)
}

fn counts_to_labels(counts: &[usize]) -> Result<Vec<i32>> {
    counts
        .iter()
        .map(|&c| i32::try_from(c).map_err(|_| OodError::Data(format!("class count {c} too large"))))
        .collect()
}

/// Writes all model files. The caller should hold a [`DirLock`].
pub fn save_model(dir: &Path, model: &PrototypeModel, cov: &SharedCovariance, config: &RunConfig) -> Result<()> {
    let partition = model
        .partition()
        .ok_or_else(|| OodError::Usage("model has no partition estimate".into()))?;
    let d = cov.dim();
    let sigma = FeatureMatrix::new(d, d, cov.matrix().transpose().as_slice().to_vec())?;
    let prototypes = encode_features(model.means(), Dtype::F64);
    let counts = encode_labels(&counts_to_labels(model.counts())?);
    write_atomic(&dir.join(PROTOTYPES_FILE), &prototypes)?;
    write_atomic(&dir.join(COUNTS_FILE), &counts)?;
    write_atomic(&dir.join(COVARIANCE_FILE), &encode_features(&sigma, Dtype::F64))?;
    save_partition(dir, partition, config)
}

/// Rewrites only the partition and the config echo.
pub fn save_partition(dir: &Path, partition: &PartitionEstimate, config: &RunConfig) -> Result<()> {
    write_atomic(&dir.join(PARTITION_FILE), render_partition(partition).as_bytes())?;
    write_atomic(&dir.join(CONFIG_FILE), config.to_string().as_bytes())
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let path = dir.join(name);
    fs::read(&path).map_err(|e| OodError::from(e).in_file(&path))
}

fn in_dir<T>(dir: &Path, name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_file(dir.join(name)))
}

/// Loads prototypes and configuration without the partition.
pub fn load_prototypes(dir: &Path) -> Result<(PrototypeModel, RunConfig)> {
    let mut config = RunConfig::default();
    let text = String::from_utf8_lossy(&read(dir, CONFIG_FILE)?).into_owned();
    in_dir(dir, CONFIG_FILE, config.apply_text(&text))?;
    let (means, _) = in_dir(dir, PROTOTYPES_FILE, decode_features(&read(dir, PROTOTYPES_FILE)?))?;
    let counts = in_dir(dir, COUNTS_FILE, decode_labels(&read(dir, COUNTS_FILE)?))?;
    let counts: Vec<usize> = in_dir(
        dir,
        COUNTS_FILE,
        counts
            .iter()
            .map(|&c| usize::try_from(c).map_err(|_| OodError::Data(format!("negative class count {c}"))))
            .collect(),
    )?;
    let model = PrototypeModel::from_parts(means, counts, NormCoefficient::new(config.p)?, config.q_override)?;
    Ok((model, config))
}

pub fn load_model(dir: &Path) -> Result<StoredModel> {
    let (model, config) = load_prototypes(dir)?;
    let text = String::from_utf8_lossy(&read(dir, PARTITION_FILE)?).into_owned();
    let partition = in_dir(dir, PARTITION_FILE, parse_partition(&text))?;
    let (sigma, _) = in_dir(dir, COVARIANCE_FILE, decode_features(&read(dir, COVARIANCE_FILE)?))?;
    if sigma.rows() != model.dim() || sigma.cols() != model.dim() {
        return Err(OodError::shape(
            format!("{0}x{0} covariance", model.dim()),
            format!("{}x{} covariance", sigma.rows(), sigma.cols()),
        )
        .in_file(dir.join(COVARIANCE_FILE)));
    }
    let covariance = in_dir(
        dir,
        COVARIANCE_FILE,
        SharedCovariance::from_matrix(DMatrix::from_row_slice(sigma.rows(), sigma.cols(), sigma.as_slice())),
    )?;
    Ok(StoredModel {
        model: model.with_partition(partition),
        covariance,
        config,
    })
}
