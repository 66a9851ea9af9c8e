//! Layered run configuration: built-in defaults, then a JSON file, then
//! command-line flags. Every layer uses the same flat key set.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::harness::{HarnessConfig, SyntheticSpec, DEFAULT_WEIGHT_COLS};
use crate::pruner::PruneConfig;
use crate::quant::{QuantConfig, Rounding, Scheme};
use crate::sensitivity::MetricId;

/// Environment variable naming a default config file.
pub const CONFIG_ENV: &str = "QAPRUNE_CONFIG";

/// How many tokens to retain: a count, or `ratio:r` resolving to
/// `max(1, floor(r * N))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KeepSpec {
    Count(usize),
    Ratio(f64),
}

impl KeepSpec {
    pub fn resolve(self, n_tokens: usize) -> Result<usize> {
        match self {
            KeepSpec::Count(0) => Err(Error::config("keep must be at least 1")),
            KeepSpec::Count(k) => Ok(k),
            KeepSpec::Ratio(r) if r > 0.0 && r <= 1.0 => Ok(((r * n_tokens as f64).floor() as usize).max(1)),
            KeepSpec::Ratio(r) => Err(Error::config(format!("keep ratio must lie in (0, 1], got {r}"))),
        }
    }
}

impl std::str::FromStr for KeepSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("bad keep value `{s}` (expected N or ratio:R)"));
        let spec = match s.strip_prefix("ratio:") {
            Some(r) => KeepSpec::Ratio(r.parse().map_err(|_| bad())?),
            None => KeepSpec::Count(s.parse().map_err(|_| bad())?),
        };
        spec.resolve(1)?;
        Ok(spec)
    }
}

impl std::fmt::Display for KeepSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            KeepSpec::Count(k) => write!(f, "{k}"),
            KeepSpec::Ratio(r) => write!(f, "ratio:{r}"),
        }
    }
}

impl Serialize for KeepSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KeepSpec::Count(k) => s.serialize_u64(*k as u64),
            KeepSpec::Ratio(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for KeepSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(usize),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(k) => Ok(KeepSpec::Count(k)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// One configuration layer. Absent keys defer to the layer below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub bits: Option<u32>,
    pub group_size: Option<usize>,
    pub scheme: Option<Scheme>,
    pub epsilon: Option<f64>,
    pub rounding: Option<Rounding>,
    pub clip_percentile: Option<f64>,
    pub alpha: Option<f64>,
    pub keep: Option<KeepSpec>,
    pub metric: Option<MetricId>,
    pub n_tokens: Option<usize>,
    pub dim: Option<usize>,
    pub base_scale: Option<f64>,
    pub n_outlier_tokens: Option<usize>,
    pub outlier_magnitude: Option<f64>,
    pub outlier_channels_per_token: Option<usize>,
    pub seed: Option<u64>,
    pub weight_cols: Option<usize>,
}

impl RunConfigFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("config file: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `top` win.
    pub fn overlay(self, top: RunConfigFile) -> RunConfigFile {
        macro_rules! pick {
            ($($f:ident),*) => { RunConfigFile { $($f: top.$f.or(self.$f)),* } };
        }
        pick!(
            bits,
            group_size,
            scheme,
            epsilon,
            rounding,
            clip_percentile,
            alpha,
            keep,
            metric,
            n_tokens,
            dim,
            base_scale,
            n_outlier_tokens,
            outlier_magnitude,
            outlier_channels_per_token,
            seed,
            weight_cols
        )
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub quant: QuantConfig,
    pub alpha: f64,
    pub keep: KeepSpec,
    pub metric: MetricId,
    pub synthetic: SyntheticSpec,
    pub weight_cols: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            quant: QuantConfig::default(),
            alpha: 0.5,
            keep: KeepSpec::Ratio(0.125),
            metric: MetricId::Combine,
            synthetic: SyntheticSpec::default(),
            weight_cols: DEFAULT_WEIGHT_COLS,
        }
    }
}

impl RunConfig {
    /// Applies `layers` bottom to top over the built-in defaults.
    pub fn resolve<I: IntoIterator<Item = RunConfigFile>>(layers: I) -> Result<Self> {
        let merged = layers.into_iter().fold(RunConfigFile::default(), RunConfigFile::overlay);
        let d = RunConfig::default();
        let quant = QuantConfig {
            bits: merged.bits.unwrap_or(d.quant.bits),
            group_size: merged.group_size.unwrap_or(d.quant.group_size),
            scheme: merged.scheme.unwrap_or(d.quant.scheme),
            epsilon: merged.epsilon.unwrap_or(d.quant.epsilon),
            rounding: merged.rounding.unwrap_or(d.quant.rounding),
            clip_percentile: merged.clip_percentile.unwrap_or(d.quant.clip_percentile),
        };
        quant.validate()?;
        let s = d.synthetic;
        let synthetic = SyntheticSpec {
            n_tokens: merged.n_tokens.unwrap_or(s.n_tokens),
            dim: merged.dim.unwrap_or(s.dim),
            base_scale: merged.base_scale.unwrap_or(s.base_scale),
            n_outlier_tokens: merged.n_outlier_tokens.unwrap_or(s.n_outlier_tokens),
            outlier_magnitude: merged.outlier_magnitude.unwrap_or(s.outlier_magnitude),
            outlier_channels_per_token: merged.outlier_channels_per_token.unwrap_or(s.outlier_channels_per_token),
            seed: merged.seed.unwrap_or(s.seed),
        };
        let cfg = RunConfig {
            quant,
            alpha: merged.alpha.unwrap_or(d.alpha),
            keep: merged.keep.unwrap_or(d.keep),
            metric: merged.metric.unwrap_or(d.metric),
            synthetic,
            weight_cols: merged.weight_cols.unwrap_or(d.weight_cols),
        };
        if !(0.0..=1.0).contains(&cfg.alpha) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {}", cfg.alpha)));
        }
        cfg.keep.resolve(1)?;
        Ok(cfg)
    }

    pub fn prune_config(&self, n_tokens: usize) -> Result<PruneConfig> {
        let cfg = PruneConfig {
            alpha: self.alpha,
            keep: self.keep.resolve(n_tokens)?,
            metric: self.metric,
            quant: self.quant,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Errors are measured under an asymmetric quantizer with the same bit
    /// width and group size used for scoring.
    pub fn harness_config(&self, n_tokens: usize) -> Result<HarnessConfig> {
        Ok(HarnessConfig {
            prune: self.prune_config(n_tokens)?,
            deploy: QuantConfig {
                rounding: self.quant.rounding,
                ..QuantConfig::asymmetric(self.quant.bits, self.quant.group_size)
            },
        })
    }
}
