//! Downstream proxy error of semantic-only, sensitivity-only and fused
//! selections across one seeded synthetic instance.
//!
//! `cargo run --release --example strategy_sweep [seed]`

use qaprune::harness::DEFAULT_WEIGHT_COLS;
use qaprune::{compare_strategies, synthetic_instance, HarnessConfig, SyntheticSpec};

fn main() -> qaprune::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let inst = synthetic_instance(&SyntheticSpec::default().with_seed(seed), DEFAULT_WEIGHT_COLS)?;
    let cfg = HarnessConfig::default();
    let alphas = [0.9, 0.75, 0.5, 0.25, 0.1];
    let report =
        compare_strategies(&inst.tokens, &inst.semantic, inst.weights.view(), &alphas, &cfg, Some(&inst.outliers))?;

    println!("keep {} of {}, outliers {:?}", report.keep, inst.tokens.n_tokens(), inst.outliers);
    println!("{:<14} {:>5} {:>12} {:>12} {:>9}", "strategy", "alpha", "retained", "downstream", "outliers");
    for row in &report.rows {
        println!(
            "{:<14} {:>5.2} {:>12.5} {:>12.5} {:>9}",
            row.strategy.as_str(),
            row.alpha,
            row.retained_quant_error,
            row.downstream_error,
            row.outliers_retained.unwrap_or(0)
        );
    }
    Ok(())
}
