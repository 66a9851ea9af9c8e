//! Per-token sensitivity: group-wise error, outlier spread, the hybrid score,
//! and every metric in the registry.
//!
//! `cargo run --example sensitivity_scores`

use qaprune::{
    gen_synthetic_tokens, group_quant_error, hybrid_sensitivity, metric_score, outlier_intensity, MetricId,
    QuantConfig, SyntheticSpec,
};

fn main() -> qaprune::Result<()> {
    let spec = SyntheticSpec { n_tokens: 12, dim: 256, n_outlier_tokens: 2, ..SyntheticSpec::default() }.with_seed(5);
    let synth = gen_synthetic_tokens(&spec)?;
    let cfg = QuantConfig::symmetric(4, 64, 1e-8);

    let e = group_quant_error(&synth.tokens, &cfg)?;
    let r = outlier_intensity(&synth.tokens);
    let sq = hybrid_sensitivity(&synth.tokens, &cfg)?;
    println!("injected outliers: {:?}", synth.outliers);
    println!("{:>5} {:>10} {:>10} {:>8}", "token", "E", "R", "S^Q");
    for i in 0..spec.n_tokens {
        println!("{i:>5} {:>10.4} {:>10.4} {:>8.4}", e.values[i], r.values[i], sq.values[i]);
    }

    println!();
    for id in MetricId::ALL {
        let s = metric_score(&synth.tokens, id, &cfg)?.into_normalized();
        let top = s.values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i);
        println!("{:<18} top token {:?}", id.as_str(), top.unwrap_or_default());
    }
    Ok(())
}
