use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use specvid_core::io::load_cube;
use specvid_core::metrics::{evaluate, MetricReport};
use specvid_core::Cube;

use crate::error::{CliError, Result};
use crate::manifest::{sibling, write_json, write_text, ManifestBuilder};

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    /// Reconstructed cube (.scub).
    #[arg(long, conflicts_with = "recon_dir", required_unless_present = "recon_dir")]
    pub recon: Option<PathBuf>,
    /// Reference cube (.scub).
    #[arg(long, requires = "recon")]
    pub gt: Option<PathBuf>,
    /// Directory of reconstructions; each `<name>.scub` is scored against
    /// the file of the same name in `--gt-dir`.
    #[arg(long, requires = "gt_dir")]
    pub recon_dir: Option<PathBuf>,
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Metric report (JSON) or, in batch mode, the table (CSV).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct SceneScore {
    pub scene: String,
    pub report: MetricReport,
}

pub fn score_files(recon: &Path, gt: &Path) -> Result<MetricReport> {
    let x: Cube = load_cube(recon)?;
    let y: Cube = load_cube(gt)?;
    Ok(evaluate(&x, &y)?)
}

fn scenes(dir: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut names = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e == "scub") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                names.push(stem.to_string());
            }
        }
    }
    names.sort();
    Ok(names)
}

/// Scores every scene of `recon_dir` against `gt_dir`, concurrently.
pub fn score_dirs(recon_dir: &Path, gt_dir: &Path) -> Result<Vec<SceneScore>> {
    let names = scenes(recon_dir)?;
    if names.is_empty() {
        return Err(CliError::usage(format!("{}: no .scub files", recon_dir.display())));
    }
    names
        .into_par_iter()
        .map(|scene| {
            let file = format!("{scene}.scub");
            let report = score_files(&recon_dir.join(&file), &gt_dir.join(&file))?;
            Ok(SceneScore { scene, report })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.6}")).unwrap_or_default()
}

pub fn scores_csv(rows: &[SceneScore]) -> String {
    let mut s = String::from("scene,psnr,ssim,sam,temporal\n");
    for r in rows {
        let m = &r.report;
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{:.6},{}",
            r.scene,
            m.psnr_db,
            m.ssim,
            m.sam_deg,
            fmt_opt(m.temporal_score)
        );
    }
    s
}

pub fn run(args: &EvaluateArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("evaluate", argv);
    match (&args.recon, &args.gt, &args.recon_dir, &args.gt_dir) {
        (Some(recon), Some(gt), None, None) => {
            let report = score_files(recon, gt)?;
            write_json(&args.out, &report)?;
            manifest.input(recon).input(gt);
            println!(
                "psnr {:.3} dB  ssim {:.4}  sam {:.3} deg  temporal {}",
                report.psnr_db,
                report.ssim,
                report.sam_deg,
                fmt_opt(report.temporal_score)
            );
        }
        (None, None, Some(recon_dir), Some(gt_dir)) => {
            let rows = score_dirs(recon_dir, gt_dir)?;
            write_text(&args.out, &scores_csv(&rows))?;
            manifest.input(recon_dir).input(gt_dir);
            println!("scored {} scenes", rows.len());
        }
        _ => return Err(CliError::usage("give --recon with --gt, or --recon-dir with --gt-dir")),
    }
    manifest.output(&args.out);
    manifest.write(&sibling(&args.out, "manifest.json"))?;
    Ok(())
}
