use std::path::{Path, PathBuf};

use specvid_core::io::load_cube;
use specvid_core::optics::SystemSpec;
use specvid_core::synth::{synth_scene, SceneSpec};
use specvid_core::Cube;

use crate::error::{CliError, Result};

/// Seed of the built-in comparison scene.
pub const DESK_SCENE_SEED: u64 = 7;

/// Three frames of 128 x 128 x 16 with six moving objects.
pub fn desk_scene() -> SceneSpec {
    SceneSpec::random(DESK_SCENE_SEED, 3, 128, 128, 16, 6)
}

fn is_cube_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "scub")
}

/// A `.scub` cube, or a TOML scene description rendered on the fly.
pub fn load_scene(path: &Path) -> Result<Cube> {
    if is_cube_file(path) {
        return Ok(load_cube(path)?);
    }
    Ok(synth_scene(&SceneSpec::load(path)?)?)
}

/// Loads a system file; a relative mask path is taken relative to the file.
pub fn load_system(path: &Path) -> Result<SystemSpec> {
    let mut spec = SystemSpec::load(path)?;
    if let Some(mask) = spec.mask.path.as_mut() {
        if mask.is_relative() {
            if let Some(dir) = path.parent() {
                *mask = dir.join(&*mask);
            }
        }
    }
    Ok(spec)
}

pub fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| CliError::usage(format!("missing {what}")))
}

pub fn file_name(path: &Path) -> PathBuf {
    path.file_name().map(PathBuf::from).unwrap_or_else(|| path.to_path_buf())
}
