//! Per-token quantization sensitivity.
//!
//! The hybrid score combines two views of how badly a token suffers under
//! low-bit quantization: the local reconstruction error `E` of a simulated
//! group-wise symmetric quantizer, and the global spread `R = max - min`
//! of its channel values. Both are min-max normalized over the tokens of
//! one matrix and averaged with equal weight.
//!
//! [`metric_score`] exposes the full registry of alternative per-token
//! statistics used for ablation. Registry outputs are raw, except for
//! [`MetricId::Combine`] which is the already-normalized hybrid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{fake_quantize, symmetric_group, QuantConfig};
use crate::tokens::TokenMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKind {
    GroupErrorE,
    OutlierR,
    HybridSq,
    SemanticSp,
    FusedFinal,
    MetricVariant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Computed,
    BuiltinCosine,
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricId {
    LinfNorm,
    L1Norm,
    L2Norm,
    Variance,
    TokenwiseAbsmax,
    ClipAbsmax,
    GroupwiseAbsmax,
    OutlierIntensity,
    Combine,
}

impl MetricId {
    pub const ALL: [MetricId; 9] = [
        MetricId::LinfNorm,
        MetricId::L1Norm,
        MetricId::L2Norm,
        MetricId::Variance,
        MetricId::TokenwiseAbsmax,
        MetricId::ClipAbsmax,
        MetricId::GroupwiseAbsmax,
        MetricId::OutlierIntensity,
        MetricId::Combine,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricId::LinfNorm => "linf_norm",
            MetricId::L1Norm => "l1_norm",
            MetricId::L2Norm => "l2_norm",
            MetricId::Variance => "variance",
            MetricId::TokenwiseAbsmax => "tokenwise_absmax",
            MetricId::ClipAbsmax => "clip_absmax",
            MetricId::GroupwiseAbsmax => "groupwise_absmax",
            MetricId::OutlierIntensity => "outlier_intensity",
            MetricId::Combine => "combine",
        }
    }
}

impl std::fmt::Display for MetricId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MetricId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MetricId::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| {
            let known: Vec<_> = MetricId::ALL.iter().map(|m| m.as_str()).collect();
            Error::config(format!("unknown metric `{s}` (expected one of {})", known.join(", ")))
        })
    }
}

/// One score per token, tagged with what produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreVector {
    pub values: Vec<f64>,
    pub kind: ScoreKind,
    pub metric: Option<MetricId>,
    pub normalized: bool,
    pub provenance: Provenance,
}

impl ScoreVector {
    pub fn raw(values: Vec<f64>, kind: ScoreKind) -> Self {
        ScoreVector { values, kind, metric: None, normalized: false, provenance: Provenance::Computed }
    }

    pub fn with_metric(mut self, metric: MetricId) -> Self {
        self.metric = Some(metric);
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Normalizes unless the vector already is.
    pub fn into_normalized(self) -> Self {
        if self.normalized {
            self
        } else {
            minmax_normalize(&self)
        }
    }
}

pub(crate) fn l2(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `E_i = ||v_i - Q(v_i)||_2` under the configured scheme (symmetric by default).
pub fn group_quant_error(tokens: &TokenMatrix, cfg: &QuantConfig) -> Result<ScoreVector> {
    let q = fake_quantize(tokens.view(), cfg)?;
    let values = tokens
        .rows()
        .zip(q.reconstructed.rows())
        .map(|(v, vq)| l2(v.iter().zip(vq.iter()).map(|(a, b)| a - b)))
        .collect();
    Ok(ScoreVector::raw(values, ScoreKind::GroupErrorE))
}

/// `R_i = max_j v_ij - min_j v_ij`.
pub fn outlier_intensity(tokens: &TokenMatrix) -> ScoreVector {
    let values = tokens
        .rows()
        .map(|v| {
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
            hi - lo
        })
        .collect();
    ScoreVector::raw(values, ScoreKind::OutlierR)
}

/// Min-max to `[0, 1]`. A vector with no spread maps to 0.5 everywhere.
pub fn minmax_normalize(scores: &ScoreVector) -> ScoreVector {
    let (lo, hi) = scores.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let span = hi - lo;
    let values = if span > 0.0 {
        scores.values.iter().map(|&x| (x - lo) / span).collect()
    } else {
        vec![0.5; scores.values.len()]
    };
    ScoreVector { values, normalized: true, ..scores.clone() }
}

/// `S^Q_i = 0.5 * norm(E)_i + 0.5 * norm(R)_i`.
pub fn hybrid_sensitivity(tokens: &TokenMatrix, cfg: &QuantConfig) -> Result<ScoreVector> {
    let e = minmax_normalize(&group_quant_error(tokens, cfg)?);
    let r = minmax_normalize(&outlier_intensity(tokens));
    let values = e.values.iter().zip(&r.values).map(|(a, b)| 0.5 * a + 0.5 * b).collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::HybridSq,
        metric: Some(MetricId::Combine),
        normalized: true,
        provenance: Provenance::Computed,
    })
}

/// Linear-interpolation percentile of `values` (numpy's default method).
pub(crate) fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = pct / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

fn clip_absmax_error(tokens: &TokenMatrix, cfg: &QuantConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let levels = cfg.symmetric_levels();
    let mut out = vec![0.0; tokens.dim()];
    Ok(tokens
        .rows()
        .map(|v| {
            let v = v.to_vec();
            let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            let limit = percentile(&abs, cfg.clip_percentile);
            symmetric_group(&v, levels, cfg.epsilon, cfg.rounding, Some(limit), &mut out);
            l2(v.iter().zip(&out).map(|(a, b)| a - b))
        })
        .collect())
}

fn per_token(tokens: &TokenMatrix, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    tokens.rows().map(|v| f(&v.to_vec())).collect()
}

/// Any registry metric, raw except for `combine`.
pub fn metric_score(tokens: &TokenMatrix, metric: MetricId, cfg: &QuantConfig) -> Result<ScoreVector> {
    let values = match metric {
        MetricId::LinfNorm => per_token(tokens, |v| v.iter().fold(0.0, |m, x| m.max(x.abs()))),
        MetricId::L1Norm => per_token(tokens, |v| v.iter().map(|x| x.abs()).sum()),
        MetricId::L2Norm => per_token(tokens, |v| l2(v.iter().copied())),
        MetricId::Variance => per_token(tokens, |v| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
        }),
        MetricId::TokenwiseAbsmax => group_quant_error(tokens, &cfg.with_group_size(tokens.dim()))?.values,
        MetricId::ClipAbsmax => clip_absmax_error(tokens, cfg)?,
        MetricId::GroupwiseAbsmax => group_quant_error(tokens, cfg)?.values,
        MetricId::OutlierIntensity => outlier_intensity(tokens).values,
        MetricId::Combine => return hybrid_sensitivity(tokens, cfg),
    };
    Ok(ScoreVector::raw(values, ScoreKind::MetricVariant).with_metric(metric))
}
