use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agents::{DenoiserSpec, DenoiserVariant, NoiseParams, DEFAULT_SIGMA_N};
use crate::mace::MaceConfig;

use super::PipelineError;

pub const SCHEMA_VERSION: u32 = 1;

/// Which backprojector the data agent uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ForwardKind {
    /// Exact adjoint (block replication).
    Standard,
    /// Bicubic upsampling.
    #[default]
    Rap,
}

impl FromStr for ForwardKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Self::Standard),
            "rap" => Ok(Self::Rap),
            other => Err(PipelineError::Config(format!("unknown forward kind {other:?} (expected standard or rap)"))),
        }
    }
}

impl fmt::Display for ForwardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Standard => "standard",
            Self::Rap => "rap",
        })
    }
}

fn default_rho() -> f64 {
    0.5
}
fn default_tol() -> f64 {
    0.05
}
fn default_max_iters() -> usize {
    20
}
fn default_sigma_n() -> f64 {
    DEFAULT_SIGMA_N
}
fn default_true() -> bool {
    true
}
fn default_peak() -> f64 {
    1.0
}

/// One reconstruction experiment.
///
/// With `hr_input` alone the low-resolution data are simulated from it;
/// with `lr_input` alone no reference metrics are computed; with both the
/// given measurements are compared against the given reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hr_input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_input: Option<PathBuf>,
    pub factor: usize,
    /// Weight of the data agent; the prior gets `1 - mu`.
    pub mu: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Measurement noise standard deviation; also the simulation noise.
    pub sigma_w: f64,
    /// Defaults to `sigma_w * factor`, which gives the data update gain 1/2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_lambda: Option<f64>,
    #[serde(default = "default_sigma_n")]
    pub sigma_n: f64,
    #[serde(default)]
    pub forward_kind: ForwardKind,
    pub prior: DenoiserVariant,
    #[serde(default)]
    pub noise_seed: u64,
    pub output_dir: PathBuf,
    /// When set, a run that does not converge is reported as a failure.
    #[serde(default = "default_true")]
    pub strict: bool,
    #[serde(default = "default_peak")]
    pub peak: f64,
    /// `[height, width]` of high-resolution training data, for the speed-up.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_shape: Option<[u64; 2]>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(s).map_err(|e| PipelineError::ConfigParse {
            path: PathBuf::from("<string>"),
            detail: e.to_string(),
        })?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths inside it are taken relative to the
    /// file's directory and made absolute, so snapshots can be reloaded from
    /// anywhere.
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| PipelineError::ConfigParse {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            let joined = base.join(&*p);
            *p = std::path::absolute(&joined).unwrap_or(joined);
        };
        cfg.hr_input.as_mut().map(resolve);
        cfg.lr_input.as_mut().map(resolve);
        resolve(&mut cfg.output_dir);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version));
        }
        if self.hr_input.is_none() && self.lr_input.is_none() {
            return bad("one of hr_input or lr_input is required".into());
        }
        if self.factor < 1 {
            return bad("factor must be at least 1".into());
        }
        if !(self.mu > 0.0 && self.mu < 1.0) {
            return bad(format!("mu must lie strictly between 0 and 1, got {}", self.mu));
        }
        if !(self.sigma_w.is_finite() && self.sigma_w >= 0.0) {
            return bad(format!("sigma_w must be non-negative, got {}", self.sigma_w));
        }
        if self.sigma_lambda.is_some() && self.sigma_w == 0.0 {
            return bad("sigma_lambda needs a positive sigma_w".into());
        }
        if !(self.peak.is_finite() && self.peak > 0.0) {
            return bad(format!("peak must be positive, got {}", self.peak));
        }
        self.mace_config().validate()?;
        self.noise_params()?;
        self.denoiser_spec()?;
        Ok(())
    }

    pub fn mace_config(&self) -> MaceConfig {
        MaceConfig {
            rho: self.rho,
            max_iters: self.max_iters,
            tol: self.tol,
            sigma_n: self.sigma_n,
        }
    }

    /// Noise parameters of the data agent. The update depends only on
    /// `sigma_lambda / sigma_w`, so noiseless data use the balanced ratio.
    pub fn noise_params(&self) -> Result<NoiseParams, PipelineError> {
        Ok(match self.sigma_lambda {
            Some(sl) => NoiseParams::new(self.sigma_w, sl)?,
            None if self.sigma_w > 0.0 => NoiseParams::balanced(self.sigma_w, self.factor)?,
            None => NoiseParams::balanced(1.0, self.factor)?,
        })
    }

    pub fn denoiser_spec(&self) -> Result<DenoiserSpec, PipelineError> {
        Ok(DenoiserSpec::new(self.prior.clone(), self.sigma_n)?)
    }
}

/// Values that replace config keys, typically from command-line flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigOverrides {
    pub hr_input: Option<PathBuf>,
    pub lr_input: Option<PathBuf>,
    pub factor: Option<usize>,
    pub mu: Option<f64>,
    pub rho: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub sigma_w: Option<f64>,
    pub sigma_lambda: Option<f64>,
    pub sigma_n: Option<f64>,
    pub forward_kind: Option<ForwardKind>,
    pub prior: Option<DenoiserVariant>,
    pub noise_seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub strict: Option<bool>,
    pub peak: Option<f64>,
}

impl ConfigOverrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        if self.hr_input.is_some() {
            cfg.hr_input = self.hr_input.clone();
        }
        if self.lr_input.is_some() {
            cfg.lr_input = self.lr_input.clone();
        }
        if self.sigma_lambda.is_some() {
            cfg.sigma_lambda = self.sigma_lambda;
        }
        set(&mut cfg.factor, &self.factor);
        set(&mut cfg.mu, &self.mu);
        set(&mut cfg.rho, &self.rho);
        set(&mut cfg.tol, &self.tol);
        set(&mut cfg.max_iters, &self.max_iters);
        set(&mut cfg.sigma_w, &self.sigma_w);
        set(&mut cfg.sigma_n, &self.sigma_n);
        set(&mut cfg.forward_kind, &self.forward_kind);
        set(&mut cfg.prior, &self.prior);
        set(&mut cfg.noise_seed, &self.noise_seed);
        set(&mut cfg.output_dir, &self.output_dir);
        set(&mut cfg.strict, &self.strict);
        set(&mut cfg.peak, &self.peak);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
hr_input = "hr.png"
factor = 4
mu = 0.5
sigma_w = 0.01
prior = "tv:0.05:40"
output_dir = "out"
"#;

    #[test]
    fn defaults_fill_in() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.rho, 0.5);
        assert_eq!(cfg.tol, 0.05);
        assert_eq!(cfg.max_iters, 20);
        assert_eq!(cfg.sigma_n, 0.1);
        assert_eq!(cfg.forward_kind, ForwardKind::Rap);
        assert!(cfg.strict);
        assert_eq!(cfg.prior, DenoiserVariant::Tv { weight: 0.05, inner_iters: 40 });
        cfg.validate().unwrap();
        assert!((cfg.noise_params().unwrap().gain(4) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn snapshot_round_trips() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.sigma_lambda = Some(0.03);
        cfg.training_shape = Some([64, 32]);
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_invalid_values() {
        let base = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let cases: Vec<Box<dyn Fn(&mut ExperimentConfig)>> = vec![
            Box::new(|c| c.mu = 1.0),
            Box::new(|c| c.mu = 0.0),
            Box::new(|c| c.schema_version = 2),
            Box::new(|c| c.rho = 1.5),
            Box::new(|c| c.sigma_w = -0.1),
            Box::new(|c| {
                c.sigma_w = 0.0;
                c.sigma_lambda = Some(0.1)
            }),
            Box::new(|c| c.hr_input = None),
            Box::new(|c| c.sigma_n = 0.0),
            Box::new(|c| c.prior = DenoiserVariant::Tv { weight: -1.0, inner_iters: 5 }),
        ];
        for (i, f) in cases.iter().enumerate() {
            let mut c = base.clone();
            f(&mut c);
            assert!(c.validate().is_err(), "case {i}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nlearning_rate = 3\n");
        assert!(ExperimentConfig::from_toml_str(&text).is_err());
    }

    #[test]
    fn overrides_replace_keys() {
        let mut cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let o = ConfigOverrides {
            mu: Some(0.8),
            forward_kind: Some(ForwardKind::Standard),
            lr_input: Some("lr.png".into()),
            ..Default::default()
        };
        o.apply(&mut cfg);
        assert_eq!(cfg.mu, 0.8);
        assert_eq!(cfg.forward_kind, ForwardKind::Standard);
        assert_eq!(cfg.lr_input, Some(PathBuf::from("lr.png")));
        assert_eq!(cfg.factor, 4);
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, MINIMAL).unwrap();
        let cfg = ExperimentConfig::load(&p).unwrap();
        assert_eq!(cfg.hr_input.unwrap(), dir.path().join("hr.png"));
        assert_eq!(cfg.output_dir, dir.path().join("out"));
    }
}
