//! Run configuration as `key=value` lines. Later sources override earlier
//! ones: defaults, then a config file, then command-line flags. Unknown keys
//! are errors.

use std::fmt;
use std::str::FromStr;

use crate::baselines::{DEFAULT_EPSILON, DEFAULT_KNN_K, DEFAULT_TEMPERATURE};
use crate::density::Kernel;
use crate::error::{OodError, Result};
use crate::io::format_g17;
use crate::search::{EstimatorConfig, Grid, SelectionMetric};

pub const THREADS_ENV: &str = "OODKIT_THREADS";

/// Scoring rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Method {
    #[default]
    ConjNorm,
    Msp,
    Energy,
    Maha,
    Gem,
    Knn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ConjNorm => "conjnorm",
            Method::Msp => "msp",
            Method::Energy => "energy",
            Method::Maha => "maha",
            Method::Gem => "gem",
            Method::Knn => "knn",
        }
    }

    /// Methods that read logits instead of features.
    pub fn uses_logits(self) -> bool {
        matches!(self, Method::Msp | Method::Energy)
    }
}

impl FromStr for Method {
    type Err = OodError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "conjnorm" => Method::ConjNorm,
            "msp" => Method::Msp,
            "energy" => Method::Energy,
            "maha" => Method::Maha,
            "gem" => Method::Gem,
            "knn" => Method::Knn,
            other => return Err(OodError::Config(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorKind {
    Sn,
    #[default]
    Is,
    Kde,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Sn => "sn",
            EstimatorKind::Is => "is",
            EstimatorKind::Kde => "kde",
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = OodError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "sn" => EstimatorKind::Sn,
            "is" => EstimatorKind::Is,
            "kde" => EstimatorKind::Kde,
            other => return Err(OodError::Config(format!("unknown estimator '{other}'"))),
        })
    }
}

/// Named exponent defaults for common feature extractors.
pub const PRESETS: &[(&str, f64)] = &[
    ("cifar10", 2.2),
    ("cifar100", 2.5),
    ("imagenet-resnet50", 1.5),
    ("imagenet-mobilenetv2", 1.8),
];

pub fn preset_p(name: &str) -> Result<f64> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| *p)
        .ok_or_else(|| {
            let known: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            OodError::Config(format!("unknown preset '{name}' (known: {})", known.join(", ")))
        })
}

/// Every run setting.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub p: f64,
    pub q_override: Option<f64>,
    pub estimator: EstimatorKind,
    pub alpha: f64,
    pub seed: u64,
    pub temperature: f64,
    pub knn_k: usize,
    /// `None` picks Scott's rule per class.
    pub bandwidth: Option<f64>,
    pub kernel: Kernel,
    pub epsilon: f64,
    pub normalize_features: bool,
    pub metric: SelectionMetric,
    pub grid: Grid,
    /// `None` defers to `OODKIT_THREADS`, then to available parallelism.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::ConjNorm,
            p: 2.0,
            q_override: None,
            estimator: EstimatorKind::Is,
            alpha: 0.1,
            seed: 0,
            temperature: DEFAULT_TEMPERATURE,
            knn_k: DEFAULT_KNN_K,
            bandwidth: None,
            kernel: Kernel::Gaussian,
            epsilon: DEFAULT_EPSILON,
            normalize_features: false,
            metric: SelectionMetric::Fpr95,
            grid: Grid::DEFAULT_P,
            threads: None,
        }
    }
}

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| OodError::Config(format!("{key}: cannot parse '{value}'")))
}

fn optional(value: &str) -> bool {
    !matches!(value, "" | "none" | "auto")
}

fn flag(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(OodError::Config(format!("{key}: expected true or false, got '{other}'"))),
    }
}

impl RunConfig {
    /// Sets one key. `preset` is shorthand for the preset's `p`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "method" => self.method = value.parse()?,
            "p" => self.p = num(key, value)?,
            "preset" => self.p = preset_p(value)?,
            "q-override" => {
                self.q_override = optional(value).then(|| num(key, value)).transpose()?
            }
            "estimator" => self.estimator = value.parse()?,
            "alpha" => self.alpha = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "T" | "temperature" => self.temperature = num(key, value)?,
            "knn-k" => self.knn_k = num(key, value)?,
            "bandwidth" => {
                self.bandwidth = optional(value).then(|| num(key, value)).transpose()?
            }
            "kernel" => self.kernel = Kernel::from_name(value)?,
            "epsilon" => self.epsilon = num(key, value)?,
            "normalize-features" => self.normalize_features = flag(key, value)?,
            "metric" => self.metric = value.parse()?,
            "grid" => self.grid = value.parse()?,
            "threads" => {
                self.threads = optional(value).then(|| num(key, value)).transpose()?
            }
            other => return Err(OodError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let (k, v) = t.split_once('=').ok_or_else(|| {
                OodError::Config(format!("line {}: expected key=value, got '{t}'", n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| OodError::Config(format!("line {}: {}", n + 1, strip_prefix(&e))))?;
        }
        Ok(())
    }

    pub fn apply_pairs<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: &[(K, V)]) -> Result<()> {
        pairs
            .iter()
            .try_for_each(|(k, v)| self.set(k.as_ref(), v.as_ref()))
    }

    pub fn validate(&self) -> Result<()> {
        crate::math::conjugate_exponent(self.p)
            .map_err(|_| OodError::Config(format!("p must exceed 1, got {}", self.p)))?;
        if let Some(q) = self.q_override {
            if !(q > 1.0) || !q.is_finite() {
                return Err(OodError::Config(format!("q-override must exceed 1, got {q}")));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(OodError::Config(format!("alpha must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(OodError::Config("T must be finite and > 0".into()));
        }
        if self.knn_k == 0 {
            return Err(OodError::Config("knn-k must be >= 1".into()));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) || !h.is_finite() {
                return Err(OodError::Config(format!("bandwidth must be > 0, got {h}")));
            }
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(OodError::Config("epsilon must be finite and >= 0".into()));
        }
        if self.threads == Some(0) {
            return Err(OodError::Config("threads must be >= 1".into()));
        }
        Ok(())
    }

    pub fn estimator_config(&self) -> EstimatorConfig {
        match self.estimator {
            EstimatorKind::Sn => EstimatorConfig::SelfNormalized,
            EstimatorKind::Is => EstimatorConfig::ImportanceSampling {
                alpha: self.alpha,
                seed: self.seed,
            },
            EstimatorKind::Kde => EstimatorConfig::Kde {
                bandwidth: self.bandwidth,
                kernel: self.kernel,
            },
        }
    }

    /// Effective worker count: the `threads` key, else `OODKIT_THREADS`,
    /// else available parallelism.
    pub fn resolved_threads(&self) -> Result<usize> {
        if let Some(t) = self.threads {
            return Ok(t);
        }
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(t) if t >= 1 => Ok(t),
                _ => Err(OodError::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'"))),
            },
            Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
        }
    }

    /// Every key that affects results, in a fixed order. The thread count is
    /// left out because outputs do not depend on it.
    pub fn entries(&self) -> Vec<(String, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), format_g17);
        [
            ("method", self.method.name().to_string()),
            ("p", format_g17(self.p)),
            ("q-override", opt(self.q_override)),
            ("estimator", self.estimator.name().to_string()),
            ("alpha", format_g17(self.alpha)),
            ("seed", self.seed.to_string()),
            ("T", format_g17(self.temperature)),
            ("knn-k", self.knn_k.to_string()),
            ("bandwidth", opt(self.bandwidth)),
            ("kernel", self.kernel.name().to_string()),
            ("epsilon", format_g17(self.epsilon)),
            ("normalize-features", self.normalize_features.to_string()),
            ("metric", self.metric.name().to_string()),
            ("grid", self.grid.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }
}

fn strip_prefix(e: &OodError) -> String {
    let s = e.to_string();
    s.strip_prefix("config error: ").map(str::to_string).unwrap_or(s)
}

impl fmt::Display for RunConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.entries() {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("p=2.5\nestimator=kde\nbandwidth=0.3\nkernel=laplace\nq-override=1.7\nT=2\n")
            .unwrap();
        let mut back = RunConfig::default();
        back.apply_text(&c.to_string()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn later_sources_win() {
        let mut c = RunConfig::default();
        c.apply_text("# file\np=1.5\nseed=3\n").unwrap();
        c.apply_pairs(&[("p", "2.2")]).unwrap();
        assert_eq!((c.p, c.seed), (2.2, 3));
        c.apply_pairs(&[("preset", "cifar100")]).unwrap();
        assert_eq!(c.p, 2.5);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        let mut c = RunConfig::default();
        assert!(c.apply_text("colour=blue\n").is_err());
        assert!(c.apply_text("p\n").is_err());
        assert!(c.set("estimator", "mc").is_err());
        assert!(c.set("normalize-features", "maybe").is_err());
        assert!(c.set("preset", "mnist").is_err());
        c.set("p", "1").unwrap();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.set("alpha", "0").unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn presets() {
        assert_eq!(preset_p("cifar10").unwrap(), 2.2);
        assert_eq!(preset_p("cifar100").unwrap(), 2.5);
    }
}
