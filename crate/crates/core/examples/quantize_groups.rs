//! Fake-quantize one token with an outlier channel under both schemes.
//!
//! `cargo run --example quantize_groups`

use ndarray::Array2;
use qaprune::{partition_groups, quantize_asymmetric_groupwise, simulate_symmetric_groupwise, QuantConfig};

fn main() -> qaprune::Result<()> {
    // Ten channels, groups of four: the last group holds only two.
    let token = vec![0.12, -0.40, 0.33, 0.05, 9.50, -0.21, 0.07, 0.18, -0.64, 0.29];
    let part = partition_groups(token.len(), 4)?;
    println!("{} groups, last group size {}", part.num_groups, part.last_group_size);

    let x = Array2::from_shape_vec((1, token.len()), token.clone()).expect("shape");
    let asym = quantize_asymmetric_groupwise(x.view(), &QuantConfig::asymmetric(4, 4))?;
    let sym = simulate_symmetric_groupwise(&token, &QuantConfig::symmetric(4, 4, 1e-8))?;

    println!("{:>8} {:>10} {:>10}", "value", "asym", "sym");
    for (j, v) in token.iter().enumerate() {
        println!("{v:>8.3} {:>10.4} {:>10.4}", asym.reconstructed[[0, j]], sym.reconstructed[[0, j]]);
    }
    println!("asymmetric scales {:?}", asym.scales.row(0).to_vec());
    println!("symmetric scales  {:?}", sym.scales.row(0).to_vec());
    Ok(())
}
