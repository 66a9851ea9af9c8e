//! Round-trip a token matrix through `.npy` and emit JSON and CSV reports.
//!
//! `cargo run --example npy_reports [out_dir]`

use std::path::PathBuf;

use qaprune::harness::seeded_query;
use qaprune::io::report::{emit_report, InputDigest, Payload, Report, ReportFormat};
use qaprune::io::{npy, read_bytes};
use qaprune::{gen_synthetic_tokens, prune, semantic_score_cosine, PruneConfig, SyntheticSpec, TokenMatrix};

fn main() -> qaprune::Result<()> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir);
    let spec = SyntheticSpec { n_tokens: 32, dim: 64, n_outlier_tokens: 2, ..SyntheticSpec::default() };
    let synth = gen_synthetic_tokens(&spec)?;

    let path = dir.join("tokens.npy");
    npy::write_matrix(&path, &synth.tokens.view().to_owned())?;
    let tokens = TokenMatrix::new(npy::read_matrix(&path)?)?;
    println!("read {} x {} from {}", tokens.n_tokens(), tokens.dim(), path.display());

    let sp = semantic_score_cosine(&tokens, &seeded_query(1, tokens.dim()))?;
    let result =
        prune(&tokens, &sp, &PruneConfig::new(0.5, 4).with_quant(qaprune::QuantConfig::symmetric(4, 16, 1e-8)))?;
    let digest = InputDigest::of_bytes("tokens", &path, &read_bytes(&path)?);
    let report = Report::new(serde_json::json!({ "alpha": 0.5, "keep": 4 }), vec![digest], Payload::Prune(result));

    for (name, format) in [("report.json", ReportFormat::Json), ("report.csv", ReportFormat::Csv)] {
        emit_report(&report, dir.join(name), format)?;
        println!("wrote {}", dir.join(name).display());
    }
    Ok(())
}
