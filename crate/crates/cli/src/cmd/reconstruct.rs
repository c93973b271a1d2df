use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use specvid_core::cube::default_wavelengths;
use specvid_core::io::{load_cube, load_measurement, save_cube};
use specvid_core::optics::SystemSpec;
use specvid_core::rgb::export_pseudo_rgb;
use specvid_core::solver::{back_project, gap_tv_traced, SolverConfig};
use specvid_core::{Cube, Measurement, System};
use specvid_network::{
    flops_cdpa, load_bundle, pgsvrt_forward, save_bundle, CdpaOrdering, FlopReport, MacCounter, MdffnVariant,
    Network, NetworkConfig,
};

use super::SystemArgs;
use crate::error::{CliError, Result};
use crate::manifest::{sibling, write_text, ManifestBuilder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GapTv,
    BackProjection,
    Pgsvrt,
}

#[derive(Debug, Clone, Args)]
pub struct ReconstructArgs {
    /// Measurement sequence (.smes).
    #[arg(long)]
    pub measurement: PathBuf,
    #[command(flatten)]
    pub system: SystemArgs,
    /// Channel count when neither the system file nor a ground truth gives
    /// a band plan.
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long, value_enum, default_value_t = Method::GapTv)]
    pub method: Method,
    /// Solver settings (TOML); the flags below override single fields.
    #[arg(long)]
    pub solver: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long)]
    pub temporal_tv: Option<bool>,
    /// Reference cube; adds a PSNR column to the trace.
    #[arg(long)]
    pub ground_truth: Option<PathBuf>,
    /// Network layout (TOML).
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// Weight bundle directory. Without it weights are drawn from `--seed`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Write the weights used to this bundle directory.
    #[arg(long)]
    pub save_weights: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub ordering: Option<CdpaOrdering>,
    #[arg(long)]
    pub mdffn: Option<MdffnVariant>,
    #[arg(long)]
    pub n_bridged: Option<usize>,
    /// Blocks per level as `E,B,D`.
    #[arg(long, value_parser = parse_depth)]
    pub depth: Option<[usize; 3]>,
    /// Pseudo-RGB preview of the first reconstructed frame.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    /// Reconstructed cube (.scub).
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_depth(s: &str) -> std::result::Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<std::result::Result<_, _>>()?;
    parts.try_into().map_err(|_| format!("expected three comma-separated counts, got {s:?}"))
}

#[derive(Serialize)]
struct Resolved<'a> {
    method: Method,
    system: &'a SystemSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<&'a SolverConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    network: Option<&'a NetworkConfig>,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
}

/// One line of the `.flops.jsonl` output.
#[derive(Serialize)]
struct FlopLine<'a> {
    scope: &'a str,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    #[serde(flatten)]
    report: FlopReport,
}

fn band_plan(spec: &SystemSpec, gt: Option<&Cube>, channels: Option<usize>) -> Result<Vec<f64>> {
    if let Some(w) = &spec.wavelengths {
        if let Some(c) = channels.filter(|&c| c != w.len()) {
            return Err(CliError::usage(format!(
                "--channels {c} disagrees with the {} bands of the system file",
                w.len()
            )));
        }
        return Ok(w.clone());
    }
    if let Some(gt) = gt {
        return Ok(gt.wavelengths().to_vec());
    }
    match channels {
        Some(c) if c > 0 => Ok(default_wavelengths(c)),
        _ => Err(CliError::usage(
            "the band plan is unknown: give --channels, --ground-truth or a system file with wavelengths",
        )),
    }
}

pub fn solver_config(args: &ReconstructArgs) -> Result<SolverConfig> {
    let mut cfg = match &args.solver {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            SolverConfig::parse(&text)?
        }
        None => SolverConfig::default(),
    };
    if let Some(n) = args.iterations {
        cfg.iterations = n;
    }
    if let Some(w) = args.tv_weight {
        cfg.tv_weight = w;
    }
    if let Some(t) = args.temporal_tv {
        cfg.temporal_tv = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn network_config(args: &ReconstructArgs, channels: usize) -> Result<NetworkConfig> {
    let mut cfg = match &args.network {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?
        }
        None => NetworkConfig::desk(channels),
    };
    if let Some(o) = args.ordering {
        cfg.ordering = o;
    }
    if let Some(m) = args.mdffn {
        cfg.mdffn = m;
    }
    if let Some(n) = args.n_bridged {
        cfg.n_bridged = n;
    }
    if let Some(d) = args.depth {
        cfg.depth = d;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn network_weights(args: &ReconstructArgs, channels: usize) -> Result<Network> {
    let overridden = args.network.is_some()
        || args.ordering.is_some()
        || args.mdffn.is_some()
        || args.n_bridged.is_some()
        || args.depth.is_some();
    match &args.weights {
        Some(dir) if overridden => Err(CliError::usage(format!(
            "{}: a weight bundle fixes the network layout; drop the layout flags",
            dir.display()
        ))),
        Some(dir) => Ok(load_bundle(dir)?),
        None => Ok(Network::init(&network_config(args, channels)?, args.seed)?),
    }
}

/// Closed-form attention cost of every block followed by the counted total.
fn flops_lines(net: &Network, frames: usize, height: usize, width: usize, counted: FlopReport) -> String {
    let cfg = &net.config;
    let c = cfg.channels;
    let levels = [
        ("encoder", cfg.depth[0], height, width, c),
        ("bottleneck", cfg.depth[1], height / 2, width / 2, 2 * c),
        ("decoder", cfg.depth[2], height, width, c),
    ];
    let mut out = String::new();
    let mut push = |line: &FlopLine| {
        let _ = writeln!(out, "{}", serde_json::to_string(line).expect("flop line serializes"));
    };
    for (name, blocks, h, w, ch) in levels {
        let report = flops_cdpa(&cfg.attention(frames, h, w, ch));
        for b in 0..blocks {
            push(&FlopLine {
                scope: &format!("{name}.{b}"),
                frames,
                height: h,
                width: w,
                channels: ch,
                report,
            });
        }
    }
    push(&FlopLine {
        scope: "instrumented",
        frames,
        height,
        width,
        channels: c,
        report: counted,
    });
    out
}

fn load_ground_truth(path: Option<&Path>) -> Result<Option<Cube>> {
    path.map(load_cube).transpose().map_err(Into::into)
}

pub fn run(args: &ReconstructArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("reconstruct", argv);
    let meas: Measurement = load_measurement(&args.measurement)?;
    manifest.input(&args.measurement);
    let spec = args.system.spec()?;
    if let Some(p) = &args.system.system {
        manifest.input(p);
    }
    let gt = load_ground_truth(args.ground_truth.as_deref())?;
    if let Some(p) = &args.ground_truth {
        manifest.input(p);
    }
    let wavelengths = band_plan(&spec, gt.as_ref(), args.channels)?;
    let c = wavelengths.len();
    let (t, h) = (meas.frames(), meas.height());
    let w = spec.scene_width(meas.width_prime(), c)?;
    let system: System = spec.resolve(h, w, wavelengths.clone())?;
    if let Some(p) = &spec.mask.path {
        manifest.input(p);
    }

    let mut resolved_spec = spec.clone();
    resolved_spec.wavelengths = Some(wavelengths);
    let mut solver = None;
    let mut network = None;
    let cube = match args.method {
        Method::BackProjection => back_project(&meas, &system)?,
        Method::GapTv => {
            let cfg = solver_config(args)?;
            let rec = gap_tv_traced(&meas, &system, &cfg, gt.as_ref())?;
            let trace = sibling(&args.out, "trace.csv");
            write_text(&trace, &rec.trace_csv())?;
            manifest.output(&trace);
            solver = Some(cfg);
            rec.cube
        }
        Method::Pgsvrt => {
            let net = network_weights(args, c)?;
            if let Some(dir) = &args.weights {
                manifest.input(dir);
            }
            let counter = MacCounter::new();
            let cube = pgsvrt_forward(&meas, &system, &net, Some(&counter))?;
            let flops = sibling(&args.out, "flops.jsonl");
            write_text(&flops, &flops_lines(&net, t, h, w, counter.report()))?;
            manifest.output(&flops);
            if let Some(dir) = &args.save_weights {
                save_bundle(&net, dir)?;
                manifest.output(dir);
            }
            network = Some(net.config);
            cube
        }
    };
    if !cube.values().all_finite() {
        return Err(specvid_core::Error::NonFinite(format!("{:?} produced a non-finite cube", args.method)).into());
    }
    save_cube(&cube, &args.out)?;
    manifest.output(&args.out).seed(args.seed);
    if let Some(p) = &args.preview {
        export_pseudo_rgb(&cube, 0, p)?;
        manifest.output(p);
    }
    manifest.config(Resolved {
        method: args.method,
        system: &resolved_spec,
        solver: solver.as_ref(),
        network: network.as_ref(),
        frames: t,
        height: h,
        width: w,
        channels: c,
    });
    manifest.write(&sibling(&args.out, "manifest.json"))?;
    println!("wrote {} ({t} x {h} x {w} x {c})", args.out.display());
    Ok(())
}
