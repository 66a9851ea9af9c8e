//! A relevance-only pruner drops the strongest outlier token; fusing in
//! quantization sensitivity brings it back. Prints a 16x16 score grid.
//!
//! `cargo run --example missed_outlier [seed]`

use qaprune::io::report::heatmap_grid;
use qaprune::{adversarial_instance, hybrid_sensitivity, prune};

fn main() -> qaprune::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    let adv = adversarial_instance(seed);
    println!("designated token {} (keep {})", adv.expected, adv.keep);

    for alpha in [1.0, 0.5, 0.0] {
        let r = prune(&adv.tokens, &adv.semantic, &adv.prune_config(alpha))?;
        match r.rank_order.iter().position(|&i| i == adv.expected) {
            Some(rank) => println!("alpha {alpha:.1}: designated token kept at rank {rank}"),
            None => println!("alpha {alpha:.1}: designated token dropped"),
        }
    }

    let sq = hybrid_sensitivity(&adv.tokens, &adv.prune_config(0.5).quant)?;
    let (rows, cols) = adv.tokens.grid_shape().unwrap_or((16, 16));
    let rounded: Vec<f64> = sq.values.iter().map(|v| (v * 100.0).round() / 100.0).collect();
    print!("{}", heatmap_grid(&rounded, rows, cols)?);
    Ok(())
}
