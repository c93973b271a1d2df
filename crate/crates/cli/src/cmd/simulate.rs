use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use specvid_core::io::{save_mask, save_measurement};
use specvid_core::optics::{forward, SystemSpec};
use specvid_core::rgb::{render_gray, save_image};
use specvid_core::{Measurement, System};

use super::SystemArgs;
use crate::error::Result;
use crate::inputs::{file_name, load_scene};
use crate::manifest::{sibling, write_text, ManifestBuilder};

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scene cube (.scub) or scene description (TOML).
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub system: SystemArgs,
    /// Seed of the sensor noise.
    #[arg(long, default_value_t = 0)]
    pub noise_seed: u64,
    /// Grayscale preview of the first measurement frame.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    /// Measurement file (.smes). The mask, the resolved system and the
    /// manifest are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Resolved<'a> {
    system: &'a SystemSpec,
    noise_seed: u64,
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
    measurement_width: usize,
}

pub fn run(args: &SimulateArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("simulate", argv);
    let cube = load_scene(&args.scene)?;
    manifest.input(&args.scene);
    let spec = args.system.spec()?;
    if let Some(p) = &args.system.system {
        manifest.input(p);
    }
    let (t, h, w, c) = cube.dims();
    let system: System = spec.resolve(h, w, cube.wavelengths().to_vec())?;
    let meas: Measurement = forward(&cube, &system, args.noise_seed)?;

    save_measurement(&meas, &args.out)?;
    let mask_path = sibling(&args.out, "mask.scub");
    save_mask(&system.mask, &mask_path)?;
    let mut resolved = spec.clone();
    resolved.wavelengths = Some(cube.wavelengths().to_vec());
    resolved.mask.path = Some(file_name(&mask_path));
    let system_path = sibling(&args.out, "system.toml");
    write_text(&system_path, &resolved.to_toml())?;
    manifest.output(&args.out).output(&mask_path).output(&system_path);
    if let Some(p) = &args.preview {
        let img = render_gray(meas.frame(0), meas.height(), meas.width_prime());
        save_image(&img.into(), p)?;
        manifest.output(p);
    }
    manifest.seed(args.noise_seed).config(Resolved {
        system: &resolved,
        noise_seed: args.noise_seed,
        frames: t,
        height: h,
        width: w,
        channels: c,
        measurement_width: meas.width_prime(),
    });
    manifest.write(&sibling(&args.out, "manifest.json"))?;
    println!(
        "{}: {t} x {h} x {} measurement from a {t} x {h} x {w} x {c} scene",
        system.architecture,
        meas.width_prime()
    );
    Ok(())
}
