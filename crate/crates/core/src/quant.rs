//! Group-wise fake quantization.
//!
//! Two quantizers live here. The asymmetric min/max quantizer models the
//! deployment path (`Q(X)·Q(W)` for a linear layer); the symmetric absmax
//! simulation is what the sensitivity scores are built on. Both operate on
//! contiguous channel groups along the last axis, with a ragged final group
//! when the group size does not divide the channel count.
//!
//! Top grid points are pinned: a value whose rounded level is the largest
//! representable one reconstructs to the exact group extreme instead of
//! `levels * scale`, which can be off by an ulp. This keeps group extremes
//! exact and makes the asymmetric quantizer bit-exactly idempotent.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Asymmetric,
    Symmetric,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "asymmetric" => Ok(Scheme::Asymmetric),
            "symmetric" => Ok(Scheme::Symmetric),
            other => Err(Error::config(format!("unknown scheme `{other}` (expected asymmetric or symmetric)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    HalfAwayFromZero,
    HalfToEven,
}

impl Rounding {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Rounding::HalfAwayFromZero => x.round(),
            Rounding::HalfToEven => x.round_ties_even(),
        }
    }
}

impl std::str::FromStr for Rounding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half_away_from_zero" => Ok(Rounding::HalfAwayFromZero),
            "half_to_even" => Ok(Rounding::HalfToEven),
            other => {
                Err(Error::config(format!("unknown rounding `{other}` (expected half_away_from_zero or half_to_even)")))
            }
        }
    }
}

/// Quantizer settings shared by both schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub bits: u32,
    pub group_size: usize,
    pub scheme: Scheme,
    /// Added to the symmetric scale in the division only.
    pub epsilon: f64,
    pub rounding: Rounding,
    /// Percentile of `|v|` used by the clip-AbsMax metric.
    pub clip_percentile: f64,
}

impl Default for QuantConfig {
    fn default() -> Self {
        QuantConfig {
            bits: 4,
            group_size: 128,
            scheme: Scheme::Symmetric,
            epsilon: 1e-8,
            rounding: Rounding::HalfAwayFromZero,
            clip_percentile: 99.0,
        }
    }
}

impl QuantConfig {
    /// Deployment-style quantizer: asymmetric min/max with no epsilon.
    pub fn asymmetric(bits: u32, group_size: usize) -> Self {
        QuantConfig { bits, group_size, scheme: Scheme::Asymmetric, epsilon: 0.0, ..Default::default() }
    }

    pub fn symmetric(bits: u32, group_size: usize, epsilon: f64) -> Self {
        QuantConfig { bits, group_size, scheme: Scheme::Symmetric, epsilon, ..Default::default() }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_group_size(mut self, group_size: usize) -> Self {
        self.group_size = group_size;
        self
    }

    pub fn with_rounding(mut self, rounding: Rounding) -> Self {
        self.rounding = rounding;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=32).contains(&self.bits) {
            return Err(Error::config(format!("bits must be in 2..=32, got {}", self.bits)));
        }
        if self.group_size == 0 {
            return Err(Error::config("group_size must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config(format!("epsilon must be finite and non-negative, got {}", self.epsilon)));
        }
        if !(self.clip_percentile > 0.0 && self.clip_percentile <= 100.0) {
            return Err(Error::config(format!("clip_percentile must lie in (0, 100], got {}", self.clip_percentile)));
        }
        Ok(())
    }

    /// Largest unsigned level of the asymmetric grid, `2^b - 1`.
    pub fn asymmetric_levels(&self) -> f64 {
        ((1u64 << self.bits) - 1) as f64
    }

    /// Positive level count of the symmetric grid, `2^(b-1) - 1` (7 at 4 bits).
    pub fn symmetric_levels(&self) -> f64 {
        ((1u64 << (self.bits - 1)) - 1) as f64
    }
}

/// Contiguous channel groups along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GroupPartition {
    pub dim: usize,
    pub group_size: usize,
    pub num_groups: usize,
    pub last_group_size: usize,
}

impl GroupPartition {
    pub fn range(&self, group: usize) -> std::ops::Range<usize> {
        let start = group * self.group_size;
        start..(start + self.group_size).min(self.dim)
    }

    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        (0..self.num_groups).map(|g| self.range(g))
    }
}

pub fn partition_groups(dim: usize, group_size: usize) -> Result<GroupPartition> {
    if dim == 0 {
        return Err(Error::config("cannot partition zero channels"));
    }
    if group_size == 0 {
        return Err(Error::config("group_size must be at least 1"));
    }
    let num_groups = dim.div_ceil(group_size);
    Ok(GroupPartition { dim, group_size, num_groups, last_group_size: dim - (num_groups - 1) * group_size })
}

/// Dequantized values plus the per-group grid parameters.
///
/// `scales` (and `zero_points` for the asymmetric scheme) have one row per
/// input row and one column per group.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeQuantResult {
    pub reconstructed: Array2<f64>,
    pub scales: Array2<f64>,
    pub zero_points: Option<Array2<f64>>,
    pub partition: GroupPartition,
    pub scheme: Scheme,
}

pub(crate) fn ensure_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<()> {
    for (i, v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::data(format!("{what} contains non-finite value {v} at flat index {i}")));
        }
    }
    Ok(())
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// One asymmetric group. Returns `(scale, zero_point)`.
fn asymmetric_group(values: &[f64], levels: f64, rounding: Rounding, out: &mut [f64]) -> (f64, f64) {
    let (lo, hi) = min_max(values);
    let scale = (hi - lo) / levels;
    if scale == 0.0 {
        out.fill(lo);
        return (0.0, lo);
    }
    for (o, &v) in out.iter_mut().zip(values) {
        let q = rounding.apply((v - lo) / scale).clamp(0.0, levels);
        *o = if q == levels { hi } else { q * scale + lo };
    }
    (scale, lo)
}

/// One symmetric group. `clip` caps the absmax used for the scale; values
/// beyond it saturate at the outermost level.
pub(crate) fn symmetric_group(
    values: &[f64],
    levels: f64,
    epsilon: f64,
    rounding: Rounding,
    clip: Option<f64>,
    out: &mut [f64],
) -> f64 {
    let mut absmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(limit) = clip {
        absmax = absmax.min(limit);
    }
    let scale = absmax / levels;
    if scale == 0.0 {
        out.fill(0.0);
        return 0.0;
    }
    let denom = scale + epsilon;
    for (o, &v) in out.iter_mut().zip(values) {
        let k = rounding.apply(v / denom).clamp(-levels, levels);
        *o = if k == levels {
            absmax
        } else if k == -levels {
            -absmax
        } else {
            k * scale
        };
    }
    scale
}

fn check_scheme(cfg: &QuantConfig, expected: Scheme) -> Result<()> {
    cfg.validate()?;
    if cfg.scheme != expected {
        return Err(Error::config(format!("quantizer expects scheme {expected:?}, config has {:?}", cfg.scheme)));
    }
    Ok(())
}

/// Asymmetric uniform quantization, grouped along the last axis of every row.
pub fn quantize_asymmetric_groupwise(tensor: ArrayView2<'_, f64>, cfg: &QuantConfig) -> Result<FakeQuantResult> {
    check_scheme(cfg, Scheme::Asymmetric)?;
    ensure_finite(tensor.iter(), "tensor")?;
    let (rows, dim) = tensor.dim();
    let partition = partition_groups(dim, cfg.group_size)?;
    let levels = cfg.asymmetric_levels();

    let mut reconstructed = Array2::zeros((rows, dim));
    let mut scales = Array2::zeros((rows, partition.num_groups));
    let mut zero_points = Array2::zeros((rows, partition.num_groups));
    let mut row_buf = vec![0.0; dim];
    for r in 0..rows {
        let src = tensor.row(r);
        let src = src.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| src.to_vec());
        for (g, range) in partition.ranges().enumerate() {
            let (s, z) = asymmetric_group(&src[range.clone()], levels, cfg.rounding, &mut row_buf[range]);
            scales[[r, g]] = s;
            zero_points[[r, g]] = z;
        }
        reconstructed.row_mut(r).assign(&ndarray::ArrayView1::from(&row_buf[..]));
    }
    Ok(FakeQuantResult { reconstructed, scales, zero_points: Some(zero_points), partition, scheme: Scheme::Asymmetric })
}

/// Symmetric absmax simulation of a single token.
pub fn simulate_symmetric_groupwise(token: &[f64], cfg: &QuantConfig) -> Result<FakeQuantResult> {
    let view = ArrayView2::from_shape((1, token.len()), token).map_err(|e| Error::data(format!("token shape: {e}")))?;
    simulate_symmetric_rows(view, cfg)
}

/// Symmetric absmax simulation applied independently to every row.
pub fn simulate_symmetric_rows(tensor: ArrayView2<'_, f64>, cfg: &QuantConfig) -> Result<FakeQuantResult> {
    check_scheme(cfg, Scheme::Symmetric)?;
    ensure_finite(tensor.iter(), "token")?;
    let (rows, dim) = tensor.dim();
    let partition = partition_groups(dim, cfg.group_size)?;
    let levels = cfg.symmetric_levels();

    let mut reconstructed = Array2::zeros((rows, dim));
    let mut scales = Array2::zeros((rows, partition.num_groups));
    let mut row_buf = vec![0.0; dim];
    for r in 0..rows {
        let src = tensor.row(r).to_vec();
        for (g, range) in partition.ranges().enumerate() {
            scales[[r, g]] =
                symmetric_group(&src[range.clone()], levels, cfg.epsilon, cfg.rounding, None, &mut row_buf[range]);
        }
        reconstructed.row_mut(r).assign(&ndarray::ArrayView1::from(&row_buf[..]));
    }
    Ok(FakeQuantResult { reconstructed, scales, zero_points: None, partition, scheme: Scheme::Symmetric })
}

/// Row-wise fake quantization under whichever scheme `cfg` names.
pub fn fake_quantize(tensor: ArrayView2<'_, f64>, cfg: &QuantConfig) -> Result<FakeQuantResult> {
    match cfg.scheme {
        Scheme::Asymmetric => quantize_asymmetric_groupwise(tensor, cfg),
        Scheme::Symmetric => simulate_symmetric_rows(tensor, cfg),
    }
}

/// `Q(X)·Q(W)`: activations are grouped along their rows, weights along
/// their columns, so both operands are grouped over the reduction axis.
pub fn quantized_matmul_proxy(
    activations: ArrayView2<'_, f64>,
    weights: ArrayView2<'_, f64>,
    cfg: &QuantConfig,
) -> Result<Array2<f64>> {
    if activations.ncols() != weights.nrows() {
        return Err(Error::data(format!(
            "inner dimensions disagree: activations {:?} x weights {:?}",
            activations.dim(),
            weights.dim()
        )));
    }
    let qx = fake_quantize(activations, cfg)?.reconstructed;
    let qw_t = fake_quantize(weights.t(), cfg)?.reconstructed;
    Ok(qx.dot(&qw_t.t()))
}
