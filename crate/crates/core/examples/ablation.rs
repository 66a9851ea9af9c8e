//! Rank all nine sensitivity metrics by the downstream error of the
//! selection each one produces.
//!
//! `cargo run --release --example ablation [seeds]`

use std::collections::BTreeMap;

use qaprune::harness::DEFAULT_WEIGHT_COLS;
use qaprune::{run_ablation, synthetic_instance, HarnessConfig, SyntheticSpec};

fn main() -> qaprune::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let cfg = HarnessConfig::default();
    let mut totals: BTreeMap<&str, f64> = BTreeMap::new();
    for seed in 0..seeds {
        let inst = synthetic_instance(&SyntheticSpec::default().with_seed(seed), DEFAULT_WEIGHT_COLS)?;
        let report = run_ablation(&inst.tokens, &inst.semantic, inst.weights.view(), &cfg, Some(&inst.outliers))?;
        for row in report.rows {
            *totals.entry(row.metric.as_str()).or_default() += row.downstream_error;
        }
    }
    let mut ranked: Vec<(&str, f64)> = totals.into_iter().map(|(m, t)| (m, t / seeds as f64)).collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    println!("mean downstream error over {seeds} seeds, alpha {}", cfg.prune.alpha);
    for (m, e) in ranked {
        println!("{m:<18} {e:.5}");
    }
    Ok(())
}
