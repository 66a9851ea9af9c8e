//! Command-line surface. `run` returns the process exit code: 0 on success,
//! otherwise the code of the failure category (2 configuration, 3 data,
//! 4 format, 5 I/O). Usage errors are configuration errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::harness::{compare_strategies, run_ablation, seeded_query, synthetic_instance};
use crate::io::config::{KeepSpec, RunConfig, RunConfigFile, CONFIG_ENV};
use crate::io::npy;
use crate::io::report::{
    emit_heatmap_grid, heatmap_grid, parse_grid, InputDigest, Payload, Report, ReportFormat, SimulationStats,
};
use crate::io::{read_bytes, write_atomic};
use crate::pruner::{external_semantic_raw, prune};
use crate::quant::{fake_quantize, Rounding, Scheme};
use crate::sensitivity::{metric_score, minmax_normalize, MetricId, Provenance, ScoreKind, ScoreVector};
use crate::tokens::TokenMatrix;

#[derive(Debug, Parser)]
#[command(name = "qaprune", version, about = "Quantization-aware visual token pruning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-token scores for one registry metric.
    Score {
        #[arg(long)]
        tokens: PathBuf,
        /// Min-max normalize before writing.
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Fuse semantic and sensitivity scores and keep the top K tokens.
    Prune {
        #[arg(long)]
        tokens: PathBuf,
        #[command(flatten)]
        semantic: SemanticSource,
        #[command(flatten)]
        common: Common,
    },
    /// Fake-quantize a token matrix and report reconstruction statistics.
    Simulate {
        #[arg(long)]
        tokens: PathBuf,
        /// Also write the dequantized matrix here.
        #[arg(long)]
        reconstructed: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic token matrix (and optionally weights and semantic scores).
    Synth {
        /// Write the weight matrix to this path.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Write the raw cosine semantic scores to this path.
        #[arg(long)]
        semantic: Option<PathBuf>,
        #[command(flatten)]
        synth: SynthFlags,
        #[command(flatten)]
        common: Common,
    },
    /// Strategy sweep over alpha: semantic-only, sensitivity-only and fused.
    Compare {
        #[command(flatten)]
        inputs: EvalInputs,
        /// Comma-separated fused alphas; the 0 and 1 anchors are always added.
        #[arg(long, value_delimiter = ',', default_value = "0.5")]
        alphas: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run every registry metric at a fixed alpha and keep.
    Ablate {
        #[command(flatten)]
        inputs: EvalInputs,
        #[command(flatten)]
        common: Common,
    },
    /// Lay a score vector out as a CSV grid.
    Heatmap {
        /// 1-D score file; otherwise scores are computed from --tokens and --metric.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// ROWSxCOLS; defaults to a square grid.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        normalize: bool,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metric: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Count, or ratio:R.
    #[arg(long)]
    keep: Option<String>,
    #[arg(long)]
    bits: Option<u32>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    scheme: Option<String>,
    #[arg(long)]
    rounding: Option<String>,
    #[arg(long)]
    clip_percentile: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// json or csv (score also accepts npy).
    #[arg(long, default_value = "json")]
    format: String,
}

#[derive(Debug, Args)]
struct SemanticSource {
    /// 1-D NPY file of external semantic scores.
    #[arg(long, conflicts_with = "query_seed")]
    semantic: Option<PathBuf>,
    /// Seed for a built-in random query; scores are cosine similarities to it.
    #[arg(long)]
    query_seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SynthFlags {
    #[arg(long)]
    n_tokens: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    base_scale: Option<f64>,
    #[arg(long)]
    n_outliers: Option<usize>,
    #[arg(long)]
    outlier_magnitude: Option<f64>,
    #[arg(long)]
    outlier_channels: Option<usize>,
    #[arg(long)]
    weight_cols: Option<usize>,
}

/// Either files, or a synthetic instance generated from `--seed`.
#[derive(Debug, Args)]
struct EvalInputs {
    #[arg(long, requires = "weights")]
    tokens: Option<PathBuf>,
    #[arg(long, requires = "tokens")]
    weights: Option<PathBuf>,
    #[command(flatten)]
    semantic: SemanticSource,
    #[command(flatten)]
    synth: SynthFlags,
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::ErrorCategory::Configuration.exit_code() } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("qaprune: {e}");
            e.exit_code()
        }
    }
}

fn parse_opt<T: std::str::FromStr<Err = Error>>(v: &Option<String>) -> Result<Option<T>> {
    v.as_deref().map(str::parse).transpose()
}

impl Common {
    fn layer(&self, synth: Option<&SynthFlags>) -> Result<RunConfigFile> {
        let mut layer = RunConfigFile {
            bits: self.bits,
            group_size: self.group_size,
            scheme: parse_opt::<Scheme>(&self.scheme)?,
            epsilon: self.epsilon,
            rounding: parse_opt::<Rounding>(&self.rounding)?,
            clip_percentile: self.clip_percentile,
            alpha: self.alpha,
            keep: parse_opt::<KeepSpec>(&self.keep)?,
            metric: parse_opt::<MetricId>(&self.metric)?,
            seed: self.seed,
            ..Default::default()
        };
        if let Some(s) = synth {
            layer.n_tokens = s.n_tokens;
            layer.dim = s.dim;
            layer.base_scale = s.base_scale;
            layer.n_outlier_tokens = s.n_outliers;
            layer.outlier_magnitude = s.outlier_magnitude;
            layer.outlier_channels_per_token = s.outlier_channels;
            layer.weight_cols = s.weight_cols;
        }
        Ok(layer)
    }

    fn resolve(&self, synth: Option<&SynthFlags>) -> Result<RunConfig> {
        let file_path = self.config.clone().or_else(|| std::env::var_os(CONFIG_ENV).map(PathBuf::from));
        let file = file_path.map(RunConfigFile::load).transpose()?;
        RunConfig::resolve(file.into_iter().chain([self.layer(synth)?]))
    }
}

fn report_format(s: &str) -> Result<ReportFormat> {
    s.parse()
}

fn config_echo(cfg: &RunConfig, extra: Value) -> Value {
    let mut v = serde_json::to_value(cfg).expect("serializable");
    let obj = v.as_object_mut().expect("struct");
    obj.insert(
        "assumptions".into(),
        json!({
            "semantic_scores": "min-max normalized over the tokens before fusion",
            "sensitivity_scores": "registry metrics min-max normalized before fusion; combine is already normalized",
        }),
    );
    if let Value::Object(extra) = extra {
        obj.extend(extra);
    }
    v
}

struct Loaded<T> {
    value: T,
    digest: InputDigest,
}

fn load_matrix(name: &str, path: &Path) -> Result<Loaded<Array2<f64>>> {
    let bytes = read_bytes(path)?;
    let value = npy::decode(&bytes)?.into_matrix()?;
    Ok(Loaded { value, digest: InputDigest::of_bytes(name, path, &bytes) })
}

fn load_vector(name: &str, path: &Path) -> Result<Loaded<Vec<f64>>> {
    let bytes = read_bytes(path)?;
    let value = npy::decode(&bytes)?.into_vector()?;
    Ok(Loaded { value, digest: InputDigest::of_bytes(name, path, &bytes) })
}

fn load_tokens(path: &Path) -> Result<Loaded<TokenMatrix>> {
    let m = load_matrix("tokens", path)?;
    Ok(Loaded { value: TokenMatrix::new(m.value)?, digest: m.digest })
}

fn semantic_scores(
    source: &SemanticSource,
    tokens: &TokenMatrix,
    inputs: &mut Vec<InputDigest>,
) -> Result<Option<ScoreVector>> {
    if let Some(path) = &source.semantic {
        let v = load_vector("semantic", path)?;
        inputs.push(v.digest);
        return external_semantic_raw(v.value, tokens.n_tokens()).map(Some);
    }
    if let Some(seed) = source.query_seed {
        let query = seeded_query(seed, tokens.dim());
        let raw = crate::pruner::cosine_similarities(tokens, &query)?;
        return Ok(Some(ScoreVector::raw(raw, ScoreKind::SemanticSp).with_provenance(Provenance::BuiltinCosine)));
    }
    Ok(None)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn emit(report: Report, common: &Common) -> Result<()> {
    let format = report_format(&common.format)?;
    write_output(common.out.as_deref(), &report.render(format))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Score { tokens, normalize, common } => {
            let cfg = common.resolve(None)?;
            let t = load_tokens(&tokens)?;
            let mut scores = metric_score(&t.value, cfg.metric, &cfg.quant)?;
            if normalize {
                scores = scores.into_normalized();
            }
            if common.format == "npy" {
                let out = common.out.as_ref().ok_or_else(|| Error::config("--format npy needs --out"))?;
                return npy::write_vector(out, &scores.values);
            }
            let echo = config_echo(&cfg, json!({ "normalize": normalize }));
            emit(Report::new(echo, vec![t.digest], Payload::Scores(scores)), &common)
        }
        Command::Prune { tokens, semantic, common } => {
            let cfg = common.resolve(None)?;
            let t = load_tokens(&tokens)?;
            let mut inputs = vec![t.digest];
            let sp = semantic_scores(&semantic, &t.value, &mut inputs)?
                .ok_or_else(|| Error::config("prune needs --semantic or --query-seed"))?;
            let prune_cfg = cfg.prune_config(t.value.n_tokens())?;
            let result = prune(&t.value, &sp, &prune_cfg)?;
            if result.clamped {
                eprintln!(
                    "qaprune: warning: keep {} exceeds {} tokens; keeping all",
                    prune_cfg.keep,
                    t.value.n_tokens()
                );
            }
            let echo = config_echo(
                &cfg,
                json!({ "resolved_keep": prune_cfg.keep, "semantic_source": sp.provenance, "query_seed": semantic.query_seed }),
            );
            emit(Report::new(echo, inputs, Payload::Prune(result)), &common)
        }
        Command::Simulate { tokens, reconstructed, common } => {
            let cfg = common.resolve(None)?;
            let t = load_tokens(&tokens)?;
            let q = fake_quantize(t.value.view(), &cfg.quant)?;
            let diff = t.value.view().to_owned() - &q.reconstructed;
            let frob = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let norm = t.value.view().iter().map(|v| v * v).sum::<f64>().sqrt();
            let token_errors = diff.rows().into_iter().map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
            let stats = SimulationStats {
                scheme: q.scheme,
                num_groups: q.partition.num_groups,
                last_group_size: q.partition.last_group_size,
                frobenius_error: frob,
                relative_error: if norm == 0.0 { 0.0 } else { frob / norm },
                max_scale: q.scales.iter().fold(0.0, |m: f64, &s| m.max(s)),
                mean_scale: q.scales.mean().unwrap_or(0.0),
                token_errors,
            };
            if let Some(path) = reconstructed {
                npy::write_matrix(path, &q.reconstructed)?;
            }
            emit(Report::new(config_echo(&cfg, json!({})), vec![t.digest], Payload::Simulation(stats)), &common)
        }
        Command::Synth { weights, semantic, synth, common } => {
            let cfg = common.resolve(Some(&synth))?;
            let out = common.out.as_ref().ok_or_else(|| Error::config("synth needs --out for the token file"))?;
            let inst = synthetic_instance(&cfg.synthetic, cfg.weight_cols)?;
            npy::write_matrix(out, &inst.tokens.view().to_owned())?;
            if let Some(p) = weights {
                npy::write_matrix(p, &inst.weights)?;
            }
            if let Some(p) = semantic {
                npy::write_vector(p, &inst.semantic.values)?;
            }
            let summary = json!({ "synthetic": cfg.synthetic, "outliers": inst.outliers });
            write_output(None, &format!("{summary}\n"))
        }
        Command::Compare { inputs, alphas, common } => {
            let cfg = common.resolve(Some(&inputs.synth))?;
            let ev = load_eval_inputs(&inputs, &cfg)?;
            let harness = cfg.harness_config(ev.tokens.n_tokens())?;
            let report = compare_strategies(
                &ev.tokens,
                &ev.semantic,
                ev.weights.view(),
                &alphas,
                &harness,
                ev.outliers.as_deref(),
            )?;
            let echo = config_echo(
                &cfg,
                json!({ "alphas": alphas, "deploy": harness.deploy, "resolved_keep": harness.prune.keep, "synthetic_input": ev.synthetic }),
            );
            emit(Report::new(echo, ev.digests, Payload::Comparison(report)), &common)
        }
        Command::Ablate { inputs, common } => {
            let cfg = common.resolve(Some(&inputs.synth))?;
            let ev = load_eval_inputs(&inputs, &cfg)?;
            let harness = cfg.harness_config(ev.tokens.n_tokens())?;
            let report = run_ablation(&ev.tokens, &ev.semantic, ev.weights.view(), &harness, ev.outliers.as_deref())?;
            let echo = config_echo(
                &cfg,
                json!({ "deploy": harness.deploy, "resolved_keep": harness.prune.keep, "synthetic_input": ev.synthetic }),
            );
            emit(Report::new(echo, ev.digests, Payload::Ablation(report)), &common)
        }
        Command::Heatmap { scores, tokens, grid, normalize, common } => {
            let cfg = common.resolve(None)?;
            let mut values = match (&scores, &tokens) {
                (Some(p), _) => load_vector("scores", p)?.value,
                (None, Some(p)) => metric_score(&load_tokens(p)?.value, cfg.metric, &cfg.quant)?.values,
                (None, None) => return Err(Error::config("heatmap needs --scores or --tokens")),
            };
            if normalize {
                values = minmax_normalize(&ScoreVector::raw(values, ScoreKind::MetricVariant)).values;
            }
            let (rows, cols) = match grid {
                Some(g) => parse_grid(&g)?,
                None => square_grid(values.len())?,
            };
            match &common.out {
                Some(p) => emit_heatmap_grid(&values, (rows, cols), p),
                None => write_output(None, &heatmap_grid(&values, rows, cols)?),
            }
        }
    }
}

fn square_grid(n: usize) -> Result<(usize, usize)> {
    let side = (n as f64).sqrt().round() as usize;
    if side * side == n {
        Ok((side, side))
    } else {
        Err(Error::config(format!("{n} scores do not form a square grid; pass --grid")))
    }
}

struct EvalData {
    tokens: TokenMatrix,
    weights: Array2<f64>,
    semantic: ScoreVector,
    outliers: Option<Vec<usize>>,
    digests: Vec<InputDigest>,
    synthetic: bool,
}

fn load_eval_inputs(inputs: &EvalInputs, cfg: &RunConfig) -> Result<EvalData> {
    match (&inputs.tokens, &inputs.weights) {
        (Some(tp), Some(wp)) => {
            let t = load_tokens(tp)?;
            let w = load_matrix("weights", wp)?;
            let mut digests = vec![t.digest, w.digest];
            let semantic = semantic_scores(&inputs.semantic, &t.value, &mut digests)?
                .ok_or_else(|| Error::config("file inputs need --semantic or --query-seed"))?;
            Ok(EvalData { tokens: t.value, weights: w.value, semantic, outliers: None, digests, synthetic: false })
        }
        _ => {
            let inst = synthetic_instance(&cfg.synthetic, cfg.weight_cols)?;
            let mut digests = Vec::new();
            let semantic = match semantic_scores(&inputs.semantic, &inst.tokens, &mut digests)? {
                Some(s) => s,
                None => inst.semantic,
            };
            Ok(EvalData {
                tokens: inst.tokens,
                weights: inst.weights,
                semantic,
                outliers: Some(inst.outliers),
                digests,
                synthetic: true,
            })
        }
    }
}
