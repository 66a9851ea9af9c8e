//! Score fusion and top-K token selection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::npy;
use crate::quant::{ensure_finite, QuantConfig};
use crate::sensitivity::{metric_score, minmax_normalize, MetricId, Provenance, ScoreKind, ScoreVector};
use crate::tokens::TokenMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneConfig {
    /// Weight of the semantic score; `1 - alpha` goes to sensitivity.
    pub alpha: f64,
    pub keep: usize,
    pub metric: MetricId,
    pub quant: QuantConfig,
}

impl PruneConfig {
    pub fn new(alpha: f64, keep: usize) -> Self {
        PruneConfig { alpha, keep, metric: MetricId::Combine, quant: QuantConfig::default() }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_metric(mut self, metric: MetricId) -> Self {
        self.metric = metric;
        self
    }

    pub fn with_quant(mut self, quant: QuantConfig) -> Self {
        self.quant = quant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.keep == 0 {
            return Err(Error::config("keep must be at least 1"));
        }
        self.quant.validate()
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// Ranked subset of tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Selection {
    /// Ascending, i.e. original sequence order.
    pub selected_indices: Vec<usize>,
    /// Descending by score, ties by lower index.
    pub rank_order: Vec<usize>,
    /// `k` exceeded the token count and was clamped to it.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TokenScore {
    pub semantic_raw: f64,
    pub semantic: f64,
    pub sensitivity: f64,
    pub fused: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruneResult {
    pub selected_indices: Vec<usize>,
    pub rank_order: Vec<usize>,
    pub clamped: bool,
    pub scores: Vec<TokenScore>,
    pub config: PruneConfig,
}

impl PruneResult {
    pub fn selection(&self) -> Selection {
        Selection {
            selected_indices: self.selected_indices.clone(),
            rank_order: self.rank_order.clone(),
            clamped: self.clamped,
        }
    }

    pub fn fused(&self) -> Vec<f64> {
        self.scores.iter().map(|s| s.fused).collect()
    }
}

/// `S^Final = alpha * S^P + (1 - alpha) * S^Q`.
///
/// The result is clamped into `[min(p, q), max(p, q)]`, which only ever
/// absorbs a final-ulp rounding excursion.
pub fn fuse_scores(sp: &ScoreVector, sq: &ScoreVector, alpha: f64) -> Result<ScoreVector> {
    check_alpha(alpha)?;
    if sp.len() != sq.len() {
        return Err(Error::data(format!("semantic scores have {} entries, sensitivity scores {}", sp.len(), sq.len())));
    }
    if !(sp.normalized && sq.normalized) {
        return Err(Error::data("fusion requires normalized score vectors"));
    }
    let values = sp
        .values
        .iter()
        .zip(&sq.values)
        .map(|(&p, &q)| (alpha * p + (1.0 - alpha) * q).clamp(p.min(q), p.max(q)))
        .collect();
    Ok(ScoreVector {
        values,
        kind: ScoreKind::FusedFinal,
        metric: sq.metric,
        normalized: true,
        provenance: Provenance::Computed,
    })
}

/// Keeps the `min(k, N)` best tokens; equal scores go to the lower index.
pub fn select_topk(scores: &[f64], k: usize) -> Result<Selection> {
    if k == 0 {
        return Err(Error::config("keep must be at least 1"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let m = k.min(scores.len());
    order.truncate(m);
    let mut selected = order.clone();
    selected.sort_unstable();
    Ok(Selection { selected_indices: selected, rank_order: order, clamped: k > scores.len() })
}

/// Raw cosine similarity of every token to `query`. Zero-norm tokens score 0.
pub fn cosine_similarities(tokens: &TokenMatrix, query: &[f64]) -> Result<Vec<f64>> {
    if query.len() != tokens.dim() {
        return Err(Error::data(format!("query has {} channels, tokens have {}", query.len(), tokens.dim())));
    }
    ensure_finite(query, "query")?;
    let qn = query.iter().map(|x| x * x).sum::<f64>().sqrt();
    if qn == 0.0 {
        return Err(Error::config("semantic query vector is all zeros"));
    }
    Ok(tokens
        .rows()
        .map(|v| {
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if vn == 0.0 {
                0.0
            } else {
                v.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / (vn * qn)
            }
        })
        .collect())
}

/// Built-in semantic score: normalized cosine similarity to a query vector.
pub fn semantic_score_cosine(tokens: &TokenMatrix, query: &[f64]) -> Result<ScoreVector> {
    let raw = ScoreVector::raw(cosine_similarities(tokens, query)?, ScoreKind::SemanticSp)
        .with_provenance(Provenance::BuiltinCosine);
    Ok(minmax_normalize(&raw))
}

/// Validates externally produced scores without normalizing them.
pub fn external_semantic_raw(values: Vec<f64>, n_tokens: usize) -> Result<ScoreVector> {
    if values.len() != n_tokens {
        return Err(Error::data(format!("semantic score vector has {} entries for {n_tokens} tokens", values.len())));
    }
    ensure_finite(&values, "semantic scores")?;
    Ok(ScoreVector::raw(values, ScoreKind::SemanticSp).with_provenance(Provenance::External))
}

/// Reads a 1-D NPY score file and normalizes it.
pub fn load_external_semantic_scores(path: impl AsRef<Path>, n_tokens: usize) -> Result<ScoreVector> {
    let values = npy::read_vector(path)?;
    Ok(minmax_normalize(&external_semantic_raw(values, n_tokens)?))
}

/// Full pipeline: sensitivity metric, normalization, fusion, selection.
pub fn prune(tokens: &TokenMatrix, sp: &ScoreVector, cfg: &PruneConfig) -> Result<PruneResult> {
    cfg.validate()?;
    if sp.len() != tokens.n_tokens() {
        return Err(Error::data(format!(
            "semantic score vector has {} entries for {} tokens",
            sp.len(),
            tokens.n_tokens()
        )));
    }
    let sp_norm = sp.clone().into_normalized();
    let sq = metric_score(tokens, cfg.metric, &cfg.quant)?.into_normalized();
    let fused = fuse_scores(&sp_norm, &sq, cfg.alpha)?;
    let selection = select_topk(&fused.values, cfg.keep)?;

    let scores = (0..tokens.n_tokens())
        .map(|i| TokenScore {
            semantic_raw: sp.values[i],
            semantic: sp_norm.values[i],
            sensitivity: sq.values[i],
            fused: fused.values[i],
        })
        .collect();
    Ok(PruneResult {
        selected_indices: selection.selected_indices,
        rank_order: selection.rank_order,
        clamped: selection.clamped,
        scores,
        config: *cfg,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn norm(values: Vec<f64>) -> ScoreVector {
        ScoreVector { normalized: true, ..ScoreVector::raw(values, ScoreKind::SemanticSp) }
    }

    #[test]
    fn fusion_identities() {
        let p = norm(vec![0.4, 0.9, 0.0]);
        let q = norm(vec![1.0, 0.05, 0.3]);
        assert_eq!(fuse_scores(&p, &q, 1.0).unwrap().values, p.values);
        assert_eq!(fuse_scores(&p, &q, 0.0).unwrap().values, q.values);
    }

    #[test]
    fn fusion_reverses_ranking() {
        let p = norm(vec![0.4, 0.9]);
        let q = norm(vec![1.0, 0.05]);
        let f = fuse_scores(&p, &q, 0.5).unwrap().values;
        assert!((f[0] - 0.7).abs() < 1e-15);
        assert!((f[1] - 0.475).abs() < 1e-15);
        assert!(f[0] > f[1]);
    }

    #[test]
    fn fusion_errors() {
        let p = norm(vec![0.4, 0.9]);
        let q = norm(vec![1.0]);
        assert!(matches!(fuse_scores(&p, &q, 0.5), Err(Error::Data(_))));
        assert!(matches!(fuse_scores(&p, &p, 1.5), Err(Error::Config(_))));
        assert!(matches!(fuse_scores(&p, &p, -0.1), Err(Error::Config(_))));
        let raw = ScoreVector::raw(vec![3.0, 4.0], ScoreKind::SemanticSp);
        assert!(fuse_scores(&raw, &p, 0.5).is_err());
    }

    #[test]
    fn topk_examples() {
        let s = select_topk(&[0.1, 0.9, 0.5], 2).unwrap();
        assert_eq!(s.selected_indices, vec![1, 2]);
        assert_eq!(s.rank_order, vec![1, 2]);

        let s = select_topk(&[0.3; 4], 2).unwrap();
        assert_eq!(s.selected_indices, vec![0, 1]);

        let s = select_topk(&[0.2, 0.1, 0.7], 3).unwrap();
        assert_eq!(s.selected_indices, vec![0, 1, 2]);
        assert_eq!(s.rank_order, vec![2, 0, 1]);
        assert!(!s.clamped);
    }

    #[test]
    fn topk_clamps_and_flags() {
        let s = select_topk(&[0.2, 0.1], 5).unwrap();
        assert_eq!(s.selected_indices, vec![0, 1]);
        assert!(s.clamped);
        assert!(select_topk(&[0.2], 0).is_err());
    }

    #[test]
    fn cosine_examples() {
        let t = TokenMatrix::from_rows(&[
            vec![1.0, 2.0, 0.0],
            vec![-2.0, 1.0, 0.0],
            vec![-1.0, -2.0, 0.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let q = [1.0, 2.0, 0.0];
        let raw = cosine_similarities(&t, &q).unwrap();
        assert!((raw[0] - 1.0).abs() < 1e-15);
        assert_eq!(raw[1], 0.0);
        assert!((raw[2] + 1.0).abs() < 1e-15);
        assert_eq!(raw[3], 0.0);
        let n = semantic_score_cosine(&t, &q).unwrap();
        assert_eq!(n.values[0], 1.0);
        assert_eq!(n.values[2], 0.0);
        assert_eq!(n.provenance, Provenance::BuiltinCosine);
        assert!(matches!(semantic_score_cosine(&t, &[0.0; 3]), Err(Error::Config(_))));
    }

    #[test]
    fn external_scores_validation() {
        let s = minmax_normalize(&external_semantic_raw(vec![3.0, 3.0, 3.0], 3).unwrap());
        assert_eq!(s.values, vec![0.5; 3]);
        assert!(matches!(external_semantic_raw(vec![1.0, 2.0], 3), Err(Error::Data(_))));
        assert!(matches!(external_semantic_raw(vec![1.0, f64::NAN], 2), Err(Error::Data(_))));
    }

    #[test]
    fn prune_alpha_one_is_semantic_only() {
        let t = TokenMatrix::from_rows(&[
            vec![0.1, 5.0, -0.2],
            vec![0.2, 0.1, 0.0],
            vec![-0.4, 0.3, 0.2],
            vec![0.0, 0.1, 0.1],
        ])
        .unwrap();
        let sp = ScoreVector::raw(vec![0.1, 0.8, 0.6, 0.3], ScoreKind::SemanticSp);
        let cfg = PruneConfig::new(1.0, 2).with_quant(QuantConfig::symmetric(4, 3, 1e-8));
        let r = prune(&t, &sp, &cfg).unwrap();
        assert_eq!(r.selected_indices, vec![1, 2]);

        let r = prune(&t, &sp, &cfg.with_alpha(0.0)).unwrap();
        assert_eq!(r.rank_order[0], 0);
        assert_eq!(r.scores[0].sensitivity, 1.0);
        assert_eq!(r.scores[1].semantic_raw, 0.8);
    }

    #[test]
    fn prune_rejects_length_mismatch() {
        let t = TokenMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let sp = ScoreVector::raw(vec![0.1], ScoreKind::SemanticSp);
        assert!(matches!(prune(&t, &sp, &PruneConfig::new(0.5, 1)), Err(Error::Data(_))));
    }
}
