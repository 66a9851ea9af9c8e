//! Quantization-aware visual token pruning.
//!
//! Visual tokens are scored by how much they suffer under low-bit group-wise
//! quantization ([`sensitivity`]), the score is fused with a semantic
//! relevance score, and the top-K tokens are kept in their original order
//! ([`pruner`]). [`harness`] builds seeded synthetic instances and measures
//! the quantized linear-layer error that different selections leave behind.
//!
//! ```
//! use qaprune::{prune, PruneConfig, ScoreKind, ScoreVector, TokenMatrix};
//!
//! let tokens = TokenMatrix::from_rows(&[
//!     vec![0.1, 0.2, -0.1, 0.0],
//!     vec![0.0, 9.0, -0.3, 0.2],
//!     vec![0.3, -0.2, 0.1, 0.1],
//! ])?;
//! let semantic = ScoreVector::raw(vec![0.9, 0.1, 0.8], ScoreKind::SemanticSp);
//! let result = prune(&tokens, &semantic, &PruneConfig::new(0.5, 2))?;
//! assert!(result.selected_indices.contains(&1));
//! # Ok::<(), qaprune::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod harness;
pub mod io;
pub mod pruner;
pub mod quant;
pub mod sensitivity;
pub mod tokens;

pub use error::{Error, ErrorCategory, Result};
pub use harness::{
    adversarial_instance, compare_strategies, eval_downstream_error, gen_synthetic_tokens, run_ablation,
    synthetic_instance, AblationReport, AdversarialInstance, ComparisonReport, ErrorRecord, HarnessConfig,
    SyntheticInstance, SyntheticSpec,
};
pub use pruner::{
    fuse_scores, load_external_semantic_scores, prune, select_topk, semantic_score_cosine, PruneConfig, PruneResult,
    Selection,
};
pub use quant::{
    fake_quantize, partition_groups, quantize_asymmetric_groupwise, quantized_matmul_proxy,
    simulate_symmetric_groupwise, FakeQuantResult, GroupPartition, QuantConfig, Rounding, Scheme,
};
pub use sensitivity::{
    group_quant_error, hybrid_sensitivity, metric_score, minmax_normalize, outlier_intensity, MetricId, ScoreKind,
    ScoreVector,
};
pub use tokens::TokenMatrix;

/// Stamped into every report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
