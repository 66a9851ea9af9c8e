//! End-to-end pruning: cosine relevance against a query, fused with
//! quantization sensitivity, top-K kept in sequence order.
//!
//! `cargo run --example prune_pipeline`

use qaprune::harness::seeded_query;
use qaprune::{gen_synthetic_tokens, prune, semantic_score_cosine, PruneConfig, QuantConfig, SyntheticSpec};

fn main() -> qaprune::Result<()> {
    let spec = SyntheticSpec { n_tokens: 64, dim: 128, ..SyntheticSpec::default() }.with_seed(11);
    let synth = gen_synthetic_tokens(&spec)?;
    let query = seeded_query(99, spec.dim);
    let sp = semantic_score_cosine(&synth.tokens, &query)?;

    for alpha in [1.0, 0.5, 0.0] {
        let cfg = PruneConfig::new(alpha, 8).with_quant(QuantConfig::symmetric(4, 32, 1e-8));
        let result = prune(&synth.tokens, &sp, &cfg)?;
        let kept_outliers = synth.outliers.iter().filter(|o| result.selected_indices.contains(o)).count();
        println!(
            "alpha {alpha:.1}: keep {:?} ({kept_outliers}/{} outliers)",
            result.selected_indices,
            synth.outliers.len()
        );
    }
    Ok(())
}
