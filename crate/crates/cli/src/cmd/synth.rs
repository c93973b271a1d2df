use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use specvid_core::io::save_cube;
use specvid_core::rgb::export_pseudo_rgb;
use specvid_core::synth::{crop_video, synth_scene, CropMotion, SceneSpec};
use specvid_core::Cube;

use crate::error::Result;
use crate::manifest::{sibling, write_text, ManifestBuilder};

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scene description (TOML). Without it a random scene is drawn.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 16)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub objects: usize,
    /// Crop each frame to `HxW` with emulated camera motion.
    #[arg(long, value_parser = parse_size)]
    pub crop: Option<(usize, usize)>,
    /// Largest per-frame crop step; zero keeps the window fixed.
    #[arg(long, default_value_t = 2)]
    pub crop_max_step: i64,
    /// Also write the scene description used.
    #[arg(long)]
    pub emit_spec: Option<PathBuf>,
    /// Pseudo-RGB preview of the first frame.
    #[arg(long)]
    pub preview: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

#[derive(Serialize)]
struct Resolved<'a> {
    scene: &'a SceneSpec,
    crop: Option<(usize, usize)>,
    crop_max_step: i64,
    crop_origin: Option<(usize, usize)>,
    crop_step: Option<(i64, i64)>,
}

pub fn run(args: &SynthArgs, argv: &[String]) -> Result<()> {
    let mut manifest = ManifestBuilder::new("synth", argv);
    let spec = match &args.scene {
        Some(p) => {
            manifest.input(p);
            SceneSpec::load(p)?
        }
        None => SceneSpec::random(args.seed, args.frames, args.height, args.width, args.channels, args.objects),
    };
    let mut cube: Cube = synth_scene(&spec)?;
    let mut plan = None;
    if let Some((h, w)) = args.crop {
        let motion = CropMotion::Random {
            max_step: args.crop_max_step,
        };
        let (cropped, p) = crop_video(&cube, h, w, motion, spec.seed)?;
        cube = cropped;
        plan = Some(p);
    }
    save_cube(&cube, &args.out)?;
    manifest.output(&args.out).seed(spec.seed);
    if let Some(p) = &args.emit_spec {
        write_text(p, &spec.to_toml())?;
        manifest.output(p);
    }
    if let Some(p) = &args.preview {
        export_pseudo_rgb(&cube, 0, p)?;
        manifest.output(p);
    }
    manifest.config(Resolved {
        scene: &spec,
        crop: args.crop,
        crop_max_step: args.crop_max_step,
        crop_origin: plan.map(|p| p.origin),
        crop_step: plan.map(|p| p.step),
    });
    manifest.write(&sibling(&args.out, "manifest.json"))?;
    let (t, h, w, c) = cube.dims();
    println!("wrote {} ({t} x {h} x {w} x {c})", args.out.display());
    Ok(())
}
