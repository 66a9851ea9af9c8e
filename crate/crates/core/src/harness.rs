//! Synthetic instances and downstream-error evaluation.
//!
//! Randomness comes from ChaCha8 seeded through `SeedableRng::seed_from_u64`.
//! Uniform draws take the top 53 bits of a `u64`; background activations are
//! Irwin-Hall sums of twelve uniforms minus six (zero mean, unit variance),
//! which stays bit-reproducible across platforms because it needs no
//! transcendental functions.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruner::{prune, PruneConfig, PruneResult};
use crate::quant::{fake_quantize, quantized_matmul_proxy, QuantConfig, Scheme};
use crate::sensitivity::{hybrid_sensitivity, MetricId, ScoreKind, ScoreVector};
use crate::tokens::TokenMatrix;

/// Portable seeded generator used for every synthetic draw.
pub struct SeededRng(ChaCha8Rng);

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Zero-mean, unit-variance, bell-shaped on `[-6, 6]`.
    pub fn normal_like(&mut self) -> f64 {
        (0..12).map(|_| self.uniform()).sum::<f64>() - 6.0
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.0.gen_range(0..n)
    }

    /// `k` distinct indices from `0..n` in draw order (partial Fisher-Yates).
    pub fn distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }

    pub fn normal_matrix(&mut self, rows: usize, cols: usize, std: f64) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || std * self.normal_like())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_tokens: usize,
    pub dim: usize,
    pub base_scale: f64,
    pub n_outlier_tokens: usize,
    pub outlier_magnitude: f64,
    pub outlier_channels_per_token: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_tokens: 256,
            dim: 1024,
            base_scale: 1.0,
            n_outlier_tokens: 4,
            outlier_magnitude: 50.0,
            outlier_channels_per_token: 4,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tokens == 0 || self.dim == 0 {
            return Err(Error::config("synthetic spec needs at least one token and one channel"));
        }
        if !(self.base_scale.is_finite() && self.base_scale > 0.0) {
            return Err(Error::config("base_scale must be positive"));
        }
        if self.n_outlier_tokens > self.n_tokens {
            return Err(Error::config("n_outlier_tokens exceeds n_tokens"));
        }
        if self.outlier_channels_per_token > self.dim {
            return Err(Error::config("outlier_channels_per_token exceeds dim"));
        }
        if !(self.outlier_magnitude.is_finite() && self.outlier_magnitude > 1.0) {
            return Err(Error::config("outlier_magnitude must be greater than 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticTokens {
    pub tokens: TokenMatrix,
    /// Indices of the spiked tokens, ascending.
    pub outliers: Vec<usize>,
}

fn generate(spec: &SyntheticSpec, rng: &mut SeededRng) -> Result<SyntheticTokens> {
    spec.validate()?;
    let mut data = rng.normal_matrix(spec.n_tokens, spec.dim, spec.base_scale);
    let mut outliers = rng.distinct(spec.n_tokens, spec.n_outlier_tokens);
    let spike = spec.outlier_magnitude * spec.base_scale;
    for &t in &outliers {
        for c in rng.distinct(spec.dim, spec.outlier_channels_per_token) {
            let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            data[[t, c]] = sign * spike;
        }
    }
    outliers.sort_unstable();
    Ok(SyntheticTokens { tokens: TokenMatrix::new(data)?, outliers })
}

/// Background noise plus `n_outlier_tokens` tokens with spiked channels set
/// to `±outlier_magnitude * base_scale`.
pub fn gen_synthetic_tokens(spec: &SyntheticSpec) -> Result<SyntheticTokens> {
    generate(spec, &mut SeededRng::new(spec.seed))
}

/// Everything needed to compare strategies on one seed.
#[derive(Debug, Clone)]
pub struct SyntheticInstance {
    pub tokens: TokenMatrix,
    pub outliers: Vec<usize>,
    pub query: Vec<f64>,
    /// Raw cosine similarities to `query`.
    pub semantic: ScoreVector,
    pub weights: Array2<f64>,
}

pub const DEFAULT_WEIGHT_COLS: usize = 256;

/// Tokens, then query, then weights, all from one stream seeded by `spec.seed`.
pub fn synthetic_instance(spec: &SyntheticSpec, weight_cols: usize) -> Result<SyntheticInstance> {
    if weight_cols == 0 {
        return Err(Error::config("weight_cols must be at least 1"));
    }
    let mut rng = SeededRng::new(spec.seed);
    let SyntheticTokens { tokens, outliers } = generate(spec, &mut rng)?;
    let query: Vec<f64> = (0..spec.dim).map(|_| rng.normal_like()).collect();
    let weights = rng.normal_matrix(spec.dim, weight_cols, 1.0 / (spec.dim as f64).sqrt());
    let semantic = ScoreVector::raw(crate::pruner::cosine_similarities(&tokens, &query)?, ScoreKind::SemanticSp)
        .with_provenance(crate::sensitivity::Provenance::BuiltinCosine);
    Ok(SyntheticInstance { tokens, outliers, query, semantic, weights })
}

/// Query vector for `--query-seed`: `dim` draws from a fresh stream.
pub fn seeded_query(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = SeededRng::new(seed);
    (0..dim).map(|_| rng.normal_like()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorRecord {
    /// `||X_S - Q(X_S)||_F / ||X_S||_F`
    pub retained_quant_error: f64,
    /// `||X_S W - Q(X_S) Q(W)||_F / ||X_S W||_F`
    pub downstream_error: f64,
}

fn frobenius(a: ArrayView2<'_, f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn ratio(num: f64, den: f64) -> Result<f64> {
    if num == 0.0 {
        Ok(0.0)
    } else if den == 0.0 {
        Err(Error::data("relative error undefined: reference norm is zero"))
    } else {
        Ok(num / den)
    }
}

/// Relative quantization errors over the retained rows only.
pub fn eval_downstream_error(
    tokens: &TokenMatrix,
    selected: &[usize],
    weights: ArrayView2<'_, f64>,
    cfg: &QuantConfig,
) -> Result<ErrorRecord> {
    if weights.nrows() != tokens.dim() {
        return Err(Error::data(format!(
            "weights have {} rows, tokens have {} channels",
            weights.nrows(),
            tokens.dim()
        )));
    }
    if let Some(&bad) = selected.iter().find(|&&i| i >= tokens.n_tokens()) {
        return Err(Error::data(format!("selected index {bad} out of range")));
    }
    let xs = tokens.select(selected);
    let qx = fake_quantize(xs.view(), cfg)?.reconstructed;
    let retained_quant_error = ratio(frobenius((&xs - &qx).view()), frobenius(xs.view()))?;

    let exact = xs.dot(&weights);
    let approx = quantized_matmul_proxy(xs.view(), weights, cfg)?;
    let downstream_error = ratio(frobenius((&exact - &approx).view()), frobenius(exact.view()))?;
    Ok(ErrorRecord { retained_quant_error, downstream_error })
}

/// Sensitivity scoring (inside `prune`) plus the deployment quantizer the
/// errors are measured under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarnessConfig {
    pub prune: PruneConfig,
    pub deploy: QuantConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { prune: PruneConfig::new(0.5, 32), deploy: QuantConfig::asymmetric(4, 128) }
    }
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        self.prune.validate()?;
        self.deploy.validate()?;
        if self.deploy.scheme != Scheme::Asymmetric {
            return Err(Error::config("deployment quantizer must be asymmetric"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    SemanticOnly,
    QuantOnly,
    Fused,
}

impl Strategy {
    pub fn for_alpha(alpha: f64) -> Self {
        if alpha == 1.0 {
            Strategy::SemanticOnly
        } else if alpha == 0.0 {
            Strategy::QuantOnly
        } else {
            Strategy::Fused
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::SemanticOnly => "semantic_only",
            Strategy::QuantOnly => "quant_only",
            Strategy::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub strategy: Strategy,
    pub alpha: f64,
    pub selected_indices: Vec<usize>,
    pub retained_quant_error: f64,
    pub downstream_error: f64,
    pub outliers_retained: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub keep: usize,
    pub metric: MetricId,
    pub rows: Vec<StrategyRow>,
}

impl ComparisonReport {
    pub fn row(&self, alpha: f64) -> Option<&StrategyRow> {
        self.rows.iter().find(|r| r.alpha == alpha)
    }

    pub fn semantic_only(&self) -> &StrategyRow {
        self.row(1.0).expect("anchor row")
    }

    pub fn quant_only(&self) -> &StrategyRow {
        self.row(0.0).expect("anchor row")
    }
}

fn count_retained(selected: &[usize], outliers: Option<&[usize]>) -> Option<usize> {
    outliers.map(|o| selected.iter().filter(|i| o.contains(i)).count())
}

fn evaluate(
    tokens: &TokenMatrix,
    sp: &ScoreVector,
    weights: ArrayView2<'_, f64>,
    prune_cfg: &PruneConfig,
    deploy: &QuantConfig,
) -> Result<(PruneResult, ErrorRecord)> {
    let result = prune(tokens, sp, prune_cfg)?;
    let errors = eval_downstream_error(tokens, &result.selected_indices, weights, deploy)?;
    Ok((result, errors))
}

/// One row per distinct alpha in `alphas ∪ {0, 1}`, ordered by descending alpha.
pub fn compare_strategies(
    tokens: &TokenMatrix,
    sp: &ScoreVector,
    weights: ArrayView2<'_, f64>,
    alphas: &[f64],
    cfg: &HarnessConfig,
    outliers: Option<&[usize]>,
) -> Result<ComparisonReport> {
    cfg.validate()?;
    let mut all: Vec<f64> = alphas.iter().copied().chain([1.0, 0.0]).collect();
    for &a in &all {
        if !(0.0..=1.0).contains(&a) {
            return Err(Error::config(format!("alpha must lie in [0, 1], got {a}")));
        }
    }
    all.sort_by(|a, b| b.total_cmp(a));
    all.dedup();

    let rows = all
        .into_iter()
        .map(|alpha| {
            let (result, errors) = evaluate(tokens, sp, weights, &cfg.prune.with_alpha(alpha), &cfg.deploy)?;
            Ok(StrategyRow {
                strategy: Strategy::for_alpha(alpha),
                alpha,
                outliers_retained: count_retained(&result.selected_indices, outliers),
                selected_indices: result.selected_indices,
                retained_quant_error: errors.retained_quant_error,
                downstream_error: errors.downstream_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ComparisonReport { keep: cfg.prune.keep, metric: cfg.prune.metric, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: MetricId,
    pub selected_indices: Vec<usize>,
    pub retained_quant_error: f64,
    pub downstream_error: f64,
    pub outliers_retained: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub alpha: f64,
    pub keep: usize,
    /// Ascending downstream error; ties keep registry order.
    pub rows: Vec<MetricRow>,
}

impl AblationReport {
    pub fn ranking(&self) -> Vec<MetricId> {
        self.rows.iter().map(|r| r.metric).collect()
    }

    pub fn row(&self, metric: MetricId) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }
}

/// Every registry metric at `cfg.prune.alpha` and `cfg.prune.keep`.
pub fn run_ablation(
    tokens: &TokenMatrix,
    sp: &ScoreVector,
    weights: ArrayView2<'_, f64>,
    cfg: &HarnessConfig,
    outliers: Option<&[usize]>,
) -> Result<AblationReport> {
    cfg.validate()?;
    let mut rows = MetricId::ALL
        .into_iter()
        .map(|metric| {
            let (result, errors) = evaluate(tokens, sp, weights, &cfg.prune.with_metric(metric), &cfg.deploy)?;
            Ok(MetricRow {
                metric,
                outliers_retained: count_retained(&result.selected_indices, outliers),
                selected_indices: result.selected_indices,
                retained_quant_error: errors.retained_quant_error,
                downstream_error: errors.downstream_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.downstream_error.total_cmp(&b.downstream_error));
    Ok(AblationReport { alpha: cfg.prune.alpha, keep: cfg.prune.keep, rows })
}

/// A hand-built case where semantic-only pruning drops the strongest outlier.
#[derive(Debug, Clone)]
pub struct AdversarialInstance {
    pub tokens: TokenMatrix,
    /// Raw semantic scores; a ramp over `[0, 1]` in shuffled order.
    pub semantic: ScoreVector,
    /// The spiked token. It has the largest `E` and `R`, but only the
    /// `(keep + 1)`-th semantic score.
    pub expected: usize,
    pub keep: usize,
    pub weights: Array2<f64>,
}

impl AdversarialInstance {
    pub const N_TOKENS: usize = 256;
    pub const GRID: (usize, usize) = (16, 16);
    pub const DIM: usize = 256;
    pub const KEEP: usize = 32;

    pub fn outliers(&self) -> Vec<usize> {
        vec![self.expected]
    }

    pub fn prune_config(&self, alpha: f64) -> PruneConfig {
        PruneConfig::new(alpha, self.keep)
    }
}

/// Deterministic for a given seed. The construction is checked against the
/// default sensitivity config and the spike is enlarged until the fused
/// margin at `alpha = 0.5` is strict.
pub fn adversarial_instance(seed: u64) -> AdversarialInstance {
    let n = AdversarialInstance::N_TOKENS;
    let d = AdversarialInstance::DIM;
    let keep = AdversarialInstance::KEEP;
    let (rows, cols) = AdversarialInstance::GRID;

    let mut rng = SeededRng::new(seed);
    let background = rng.normal_matrix(n, d, 1.0);
    let expected = rng.index(n);
    let channels = rng.distinct(d, 2);
    let ranks = rng.distinct(n, n);
    let weights = rng.normal_matrix(d, DEFAULT_WEIGHT_COLS, 1.0 / (d as f64).sqrt());

    // ranks[r] is the token holding the r-th highest semantic score; the
    // designated token is moved to rank `keep`, just outside the cut.
    let mut order = ranks;
    let pos = order.iter().position(|&t| t == expected).expect("permutation");
    order.remove(pos);
    order.insert(keep, expected);
    let mut semantic = vec![0.0; n];
    for (rank, &token) in order.iter().enumerate() {
        semantic[token] = (n - 1 - rank) as f64 / (n - 1) as f64;
    }

    let cfg = PruneConfig::new(0.5, keep);
    let mut magnitude = 40.0;
    loop {
        let mut data = background.clone();
        for (k, &c) in channels.iter().enumerate() {
            data[[expected, c]] = if k % 2 == 0 { magnitude } else { -magnitude };
        }
        let tokens = TokenMatrix::new(data).and_then(|t| t.with_grid(rows, cols)).expect("finite by construction");
        let sq = hybrid_sensitivity(&tokens, &cfg.quant).expect("valid default config");
        let unique_max =
            sq.values[expected] == 1.0 && sq.values.iter().enumerate().all(|(i, &v)| i == expected || v < 1.0);
        let sp = ScoreVector::raw(semantic.clone(), ScoreKind::SemanticSp);
        let included = prune(&tokens, &sp, &cfg).map(|r| r.selected_indices.contains(&expected)).unwrap_or(false);
        if unique_max && included {
            return AdversarialInstance { tokens, semantic: sp, expected, keep, weights };
        }
        magnitude *= 2.0;
    }
}
