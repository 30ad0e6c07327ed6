//! Command-line front end: lossless encode/decode, feedforward model
//! building and coding, and the experiment harness.

use std::io::{BufRead, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use num_bigint::BigUint;

use symdyn::exact::rat_from_str;
use symdyn::harness::run_experiment;
use symdyn::lossless::{decode_lossless, encode_lossless, RepresentativeGrid};
use symdyn::lossy::{
    build_pm_dual, decode_block, encode, functional_representation, CodecParams, JointPMF,
    ScanOrder,
};
use symdyn::serialize::{config_from_json, model_from_json, model_to_json};
use symdyn::lossy::StreamingDecoder;
use symdyn::source::{SourceModel, Symbol};

#[derive(Parser)]
#[command(name = "symdyn", about = "Source coding via interval dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-rate lossless coding by trajectory reversal.
    Lossless {
        #[command(subcommand)]
        action: LosslessAction,
    },
    /// Lossy coding with feedforward.
    Ffwd {
        #[command(subcommand)]
        action: FfwdAction,
    },
    /// Monte Carlo experiment harness.
    Harness {
        #[command(subcommand)]
        action: HarnessAction,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Path to a model JSON file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct SeqInput {
    /// Comma-separated symbol file; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum LosslessAction {
    /// Emit the model JSON for a memoryless pmf or the continued-fraction
    /// source.
    BuildModel {
        /// P_Y as comma-separated rational strings.
        #[arg(long, conflicts_with = "gauss")]
        p_y: Option<String>,
        #[arg(long)]
        gauss: bool,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Map a symbol block to its grid index.
    Encode {
        #[command(flatten)]
        model: ModelArg,
        /// Rate as a rational string "num/den".
        #[arg(long)]
        rate: String,
        #[command(flatten)]
        seq: SeqInput,
    },
    /// Recover the symbol block from a grid index.
    Decode {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        rate: String,
        /// Block length.
        #[arg(long)]
        n: usize,
        /// Grid index, 1-based decimal.
        #[arg(long)]
        m: String,
    },
}

#[derive(Subcommand)]
enum FfwdAction {
    /// Emit the model JSON for a joint pmf given as P_Y and P_{X|Y}.
    BuildModel {
        /// P_Y as comma-separated rational strings.
        #[arg(long)]
        p_y: String,
        /// P_{X|Y} rows (one per y) separated by ';', entries by ','.
        #[arg(long)]
        p_x_given_y: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Encode a source block to an index and companion sequence.
    Encode {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        params: ParamArgs,
        #[command(flatten)]
        seq: SeqInput,
    },
    /// Reconstruct from an index with feedforward.
    Decode {
        #[command(flatten)]
        model: ModelArg,
        #[command(flatten)]
        params: ParamArgs,
        /// Grid index, 1-based decimal.
        #[arg(long)]
        m: String,
        /// Feedforward symbols for batch mode; with --stream they arrive on
        /// stdin one per line, each read only after the estimate line for
        /// that step has been written.
        #[command(flatten)]
        seq: SeqInput,
        #[arg(long)]
        stream: bool,
    },
}

#[derive(Args)]
struct ParamArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    rate: String,
    #[arg(long, default_value = "1/20")]
    epsilon: String,
    #[arg(long, default_value = "1/20")]
    delta_typ: String,
    #[arg(long, default_value_t = 4096)]
    budget: usize,
}

#[derive(Subcommand)]
enum HarnessAction {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
}

fn read_symbols(input: &Option<PathBuf>) -> anyhow::Result<Vec<Symbol>> {
    let text = match input {
        Some(path) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Symbol>().with_context(|| format!("bad symbol {s:?}")))
        .collect()
}

fn load_model(path: &PathBuf) -> anyhow::Result<SourceModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(model_from_json(&text)?)
}

fn codec_params(p: &ParamArgs) -> anyhow::Result<CodecParams> {
    Ok(CodecParams {
        n: p.n,
        rate: rat_from_str(&p.rate)?,
        epsilon: rat_from_str(&p.epsilon)?,
        delta_typ: rat_from_str(&p.delta_typ)?,
        search_budget: p.budget,
        scan_order: ScanOrder::LeastIndex,
    })
}

fn parse_index(m: &str) -> anyhow::Result<BigUint> {
    m.parse::<BigUint>().with_context(|| format!("bad index {m:?}"))
}

fn run() -> anyhow::Result<ExitCode> {
    match Cli::parse().command {
        Command::Lossless { action } => match action {
            LosslessAction::BuildModel { p_y, gauss, output } => {
                let model = if gauss {
                    symdyn::lossless::build_gauss()
                } else {
                    let p_y = p_y.context("--p-y or --gauss required")?;
                    let p: symdyn::Result<Vec<_>> =
                        p_y.split(',').map(|s| rat_from_str(s.trim())).collect();
                    symdyn::lossless::build_memoryless(&p?)?
                };
                let text = model_to_json(&model);
                match output {
                    Some(path) => std::fs::write(&path, text + "\n")
                        .with_context(|| format!("writing {}", path.display()))?,
                    None => println!("{text}"),
                }
            }
            LosslessAction::Encode { model, rate, seq } => {
                let model = load_model(&model.model)?;
                let y = read_symbols(&seq.input)?;
                let grid = RepresentativeGrid::new(y.len(), &rat_from_str(&rate)?)?;
                let code = encode_lossless(&model, &y, &grid)?;
                println!(
                    "{}",
                    serde_json::json!({"m": code.m.to_string(), "success": code.success})
                );
            }
            LosslessAction::Decode { model, rate, n, m } => {
                let model = load_model(&model.model)?;
                let grid = RepresentativeGrid::new(n, &rat_from_str(&rate)?)?;
                let y = decode_lossless(&model, &parse_index(&m)?, &grid, n)?;
                println!("{}", serde_json::json!({ "y": y }));
            }
        },
        Command::Ffwd { action } => match action {
            FfwdAction::BuildModel {
                p_y,
                p_x_given_y,
                output,
            } => {
                let p_y: symdyn::Result<Vec<_>> =
                    p_y.split(',').map(|s| rat_from_str(s.trim())).collect();
                let rows: symdyn::Result<Vec<Vec<_>>> = p_x_given_y
                    .split(';')
                    .map(|row| row.split(',').map(|s| rat_from_str(s.trim())).collect())
                    .collect();
                let pmf = JointPMF::from_channel(&p_y?, &rows?)?;
                let fr = functional_representation(&pmf)?;
                let model = build_pm_dual(&pmf, &fr)?;
                let text = model_to_json(&model);
                match output {
                    Some(path) => std::fs::write(&path, text + "\n")
                        .with_context(|| format!("writing {}", path.display()))?,
                    None => println!("{text}"),
                }
            }
            FfwdAction::Encode { model, params, seq } => {
                let model = load_model(&model.model)?;
                let params = codec_params(&params)?;
                let y = read_symbols(&seq.input)?;
                let result = encode(&model, &y, &params)?;
                println!(
                    "{}",
                    serde_json::json!({
                        "m": result.m.to_string(),
                        "success": result.success,
                        "z": result.z,
                    })
                );
            }
            FfwdAction::Decode {
                model,
                params,
                m,
                seq,
                stream,
            } => {
                let model = load_model(&model.model)?;
                let params = codec_params(&params)?;
                let m = parse_index(&m)?;
                if stream {
                    let stdin = std::io::stdin();
                    let mut lines = stdin.lock().lines();
                    let mut out = std::io::stdout();
                    let mut dec = StreamingDecoder::new(&model, m, &params)?;
                    while !dec.is_done() {
                        // the estimate leaves before the true symbol arrives
                        writeln!(out, "{}", dec.emit()?)?;
                        out.flush()?;
                        let line = lines
                            .next()
                            .context("stream ended before the final feedforward symbol")??;
                        dec.feed(line.trim().parse::<Symbol>()?)?;
                    }
                } else {
                    let y = read_symbols(&seq.input)?;
                    let x_hat = decode_block(&model, &m, &y, &params)?;
                    println!("{}", serde_json::json!({ "x_hat": x_hat }));
                }
            }
        },
        Command::Harness { action } => match action {
            HarnessAction::Run { config } => {
                let text = std::fs::read_to_string(&config)
                    .with_context(|| format!("reading {}", config.display()))?;
                let mut cfg = config_from_json(&text)?;
                if let (None, Some(path)) = (&cfg.model, &cfg.model_file) {
                    let model_text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {path}"))?;
                    let model = model_from_json(&model_text)?;
                    cfg.model = Some(symdyn::serialize::model_to_dto(&model));
                }
                let report = run_experiment(&cfg)?;
                match &cfg.output {
                    Some(stem) => {
                        std::fs::write(format!("{stem}.json"), report.to_json() + "\n")?;
                        std::fs::write(format!("{stem}.csv"), report.records_to_csv())?;
                    }
                    None => println!("{}", report.to_json()),
                }
                for (stat, ok) in &report.assertion_results {
                    eprintln!("assert {stat}: {}", if *ok { "pass" } else { "FAIL" });
                }
                if !report.all_assertions_pass() {
                    return Ok(ExitCode::FAILURE);
                }
            }
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
