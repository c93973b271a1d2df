use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;
use image::{DynamicImage, GrayImage};
use serde::{Deserialize, Serialize};
use specvid_core::metrics::{evaluate, MetricReport};
use specvid_core::optics::{forward, Architecture, SystemSpec};
use specvid_core::rgb::{export_pseudo_rgb, render_gray, save_image};
use specvid_core::solver::{gap_tv, SolverConfig};
use specvid_core::{Cube, Measurement, System};

use crate::error::{CliError, Result};
use crate::inputs::{desk_scene, load_scene};
use crate::manifest::{write_text, ManifestBuilder};

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Scene cube (.scub) or description (TOML). Defaults to the built-in
    /// 3 x 128 x 128 x 16 desk scene.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Solver settings (TOML) shared by all architectures.
    #[arg(long)]
    pub solver: Option<PathBuf>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub tv_weight: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    #[arg(long, default_value_t = 0)]
    pub mask_seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    pub solver: SolverConfig,
    pub step: usize,
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub mask_seed: u64,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            solver: SolverConfig::default(),
            step: 1,
            noise_sigma: 0.0,
            noise_seed: 0,
            mask_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArchitectureRun {
    pub architecture: Architecture,
    pub measurement: Measurement,
    pub reconstruction: Cube,
    pub metrics: MetricReport,
}

impl ArchitectureRun {
    pub fn measurement_width(&self) -> usize {
        self.measurement.width_prime()
    }
}

fn system_for(arch: Architecture, cube: &Cube, opts: &CompareOptions) -> Result<System> {
    let mut spec = SystemSpec::new(arch);
    spec.step = opts.step;
    spec.noise_sigma = opts.noise_sigma;
    spec.mask.seed = opts.mask_seed;
    Ok(spec.resolve(cube.height(), cube.width(), cube.wavelengths().to_vec())?)
}

/// Simulates, reconstructs with GAP-TV and scores `cube` under every
/// architecture, in table order.
pub fn compare_systems(cube: &Cube, opts: &CompareOptions) -> Result<Vec<ArchitectureRun>> {
    opts.solver.validate()?;
    Architecture::ALL
        .iter()
        .map(|&architecture| {
            let system = system_for(architecture, cube, opts)?;
            let measurement = forward(cube, &system, opts.noise_seed)?;
            let reconstruction = gap_tv(&measurement, &system, &opts.solver)?;
            let metrics = evaluate(&reconstruction, cube)?;
            if !metrics.is_finite() {
                return Err(specvid_core::Error::NonFinite(format!("{architecture} metrics: {metrics:?}")).into());
            }
            Ok(ArchitectureRun {
                architecture,
                measurement,
                reconstruction,
                metrics,
            })
        })
        .collect()
}

pub fn comparison_csv(runs: &[ArchitectureRun]) -> String {
    let mut s = String::from("architecture,measurement_width,psnr,ssim,sam,temporal\n");
    for r in runs {
        let m = &r.metrics;
        let temporal = m.temporal_score.map(|v| format!("{v:.6}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{:.6},{:.6},{:.6},{}",
            r.architecture,
            r.measurement_width(),
            m.psnr_db,
            m.ssim,
            m.sam_deg,
            temporal
        );
    }
    s
}

/// First measurement frame of every run, stacked top to bottom on a shared
/// canvas as wide as the widest sensor.
fn measurement_montage(runs: &[ArchitectureRun]) -> GrayImage {
    let gap = 4;
    let width = runs.iter().map(|r| r.measurement_width()).max().unwrap_or(0);
    let height: usize = runs.iter().map(|r| r.measurement.height() + gap).sum::<usize>().saturating_sub(gap);
    let mut canvas = GrayImage::new(width as u32, height as u32);
    let mut top = 0;
    for r in runs {
        let m = &r.measurement;
        let frame = render_gray(m.frame(0), m.height(), m.width_prime());
        image::imageops::replace(&mut canvas, &frame, 0, top as i64);
        top += m.height() + gap;
    }
    canvas
}

fn write_previews(runs: &[ArchitectureRun], dir: &Path, manifest: &mut ManifestBuilder) -> Result<()> {
    for r in runs {
        let m = &r.measurement;
        let meas_png = dir.join(format!("{}.measurement.png", r.architecture));
        let img = render_gray(m.frame(0), m.height(), m.width_prime());
        save_image(&DynamicImage::ImageLuma8(img), &meas_png)?;
        manifest.output(&meas_png);
        if r.reconstruction.channels() >= 3 {
            let rec_png = dir.join(format!("{}.reconstruction.png", r.architecture));
            export_pseudo_rgb(&r.reconstruction, 0, &rec_png)?;
            manifest.output(&rec_png);
        }
    }
    let montage = dir.join("measurements.png");
    save_image(&DynamicImage::ImageLuma8(measurement_montage(runs)), &montage)?;
    manifest.output(&montage);
    Ok(())
}

pub fn options(args: &CompareArgs) -> Result<CompareOptions> {
    let mut solver = match &args.solver {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            SolverConfig::parse(&text)?
        }
        None => SolverConfig::default(),
    };
    if let Some(n) = args.iterations {
        solver.iterations = n;
    }
    if let Some(w) = args.tv_weight {
        solver.tv_weight = w;
    }
    Ok(CompareOptions {
        solver,
        step: args.step,
        noise_sigma: args.noise_sigma,
        noise_seed: args.noise_seed,
        mask_seed: args.mask_seed,
    })
}

#[derive(Serialize)]
struct Resolved<'a> {
    scene: Option<&'a Path>,
    options: &'a CompareOptions,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
}

pub fn run(args: &CompareArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("compare-systems", argv);
    let cube = match &args.scene {
        Some(p) => {
            manifest.input(p);
            load_scene(p)?
        }
        None => specvid_core::synth::synth_scene(&desk_scene())?,
    };
    let opts = options(args)?;
    let runs = compare_systems(&cube, &opts)?;
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let table = args.out.join("comparison.csv");
    write_text(&table, &comparison_csv(&runs))?;
    manifest.output(&table);
    write_previews(&runs, &args.out, &mut manifest)?;
    let (t, h, w, c) = cube.dims();
    manifest.seed(opts.noise_seed).config(Resolved {
        scene: args.scene.as_deref(),
        options: &opts,
        frames: t,
        height: h,
        width: w,
        channels: c,
    });
    manifest.write(&args.out.join("manifest.json"))?;
    print!("{}", comparison_csv(&runs));
    Ok(())
}
