use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use specvid_network::{
    flops_cdpa, flops_window_attention_reference, instrumented_cdpa, AttentionConfig, FlopReport, Verdict,
};

use crate::error::{CliError, Result};
use crate::manifest::{sibling, write_json, ManifestBuilder};

#[derive(Debug, Clone, Args)]
pub struct FlopsArgs {
    /// Attention geometry (TOML); the flags below are ignored when given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, default_value_t = 256)]
    pub height: usize,
    #[arg(long, default_value_t = 256)]
    pub width: usize,
    #[arg(long, default_value_t = 30)]
    pub channels: usize,
    #[arg(long, default_value_t = AttentionConfig::DEFAULT_H_WIN)]
    pub h_win: usize,
    #[arg(long, default_value_t = AttentionConfig::DEFAULT_W_WIN)]
    pub w_win: usize,
    #[arg(long, default_value_t = AttentionConfig::DEFAULT_N_BRIDGED)]
    pub n_bridged: usize,
    #[arg(long, default_value_t = 1)]
    pub heads: usize,
    /// Skip running the kernel under the MAC counter.
    #[arg(long)]
    pub no_instrument: bool,
    /// Seed of the random inputs of the instrumented run.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file (JSON). Printed to stdout either way.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition {
    /// `2 N_B`
    pub lhs: usize,
    /// Tokens per window.
    pub rhs: usize,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlopsOutput {
    pub config: AttentionConfig,
    pub closed_form: FlopReport,
    pub instrumented: Option<FlopReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub reference: u64,
    pub condition: Condition,
    pub verdict: Verdict,
    /// Closed form and counter agree term by term; `None` when not counted.
    pub matches: Option<bool>,
}

pub fn report(config: &AttentionConfig, instrument: bool, seed: u64) -> Result<FlopsOutput> {
    config.validate_geometry()?;
    let closed_form = flops_cdpa(config);
    let (instrumented, note) = if !instrument {
        (None, Some("instrumentation skipped".to_string()))
    } else {
        match config.validate() {
            Ok(()) => (Some(instrumented_cdpa(config, seed)?), None),
            Err(e) => (None, Some(format!("kernel not runnable: {e}"))),
        }
    };
    let n = config.window_tokens();
    Ok(FlopsOutput {
        config: *config,
        closed_form,
        instrumented,
        note,
        reference: flops_window_attention_reference(config),
        condition: Condition {
            lhs: 2 * config.n_bridged,
            rhs: n,
            holds: config.reduces(),
        },
        verdict: Verdict::of(config),
        matches: instrumented.map(|r| r == closed_form),
    })
}

fn attention_config(args: &FlopsArgs) -> Result<AttentionConfig> {
    match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
        None => Ok(AttentionConfig {
            channels: args.channels,
            frames: args.frames,
            height: args.height,
            width: args.width,
            h_win: args.h_win,
            w_win: args.w_win,
            n_bridged: args.n_bridged,
            heads: args.heads,
        }),
    }
}

pub fn run(args: &FlopsArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("flops", argv);
    let config = attention_config(args)?;
    if let Some(p) = &args.config {
        manifest.input(p);
    }
    let out = report(&config, !args.no_instrument, args.seed)?;
    let text = serde_json::to_string_pretty(&out).expect("flop report serializes");
    println!("{text}");
    if let Some(p) = &args.out {
        write_json(p, &out)?;
        manifest.output(p).seed(args.seed).config(config);
        manifest.write(&sibling(p, "manifest.json"))?;
    }
    Ok(())
}
