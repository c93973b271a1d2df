pub mod compare;
pub mod evaluate;
pub mod flops;
pub mod reconstruct;
pub mod simulate;
pub mod synth;

use clap::Args;
use specvid_core::optics::{Architecture, SystemSpec};

use crate::error::Result;
use crate::inputs::load_system;

/// System selection shared by the commands that encode or decode.
#[derive(Debug, Clone, Default, Args)]
pub struct SystemArgs {
    /// System description (TOML).
    #[arg(long)]
    pub system: Option<std::path::PathBuf>,
    /// Architecture, overriding the system file.
    #[arg(long)]
    pub architecture: Option<Architecture>,
    /// Dispersion step in pixels per band.
    #[arg(long)]
    pub step: Option<usize>,
    /// Standard deviation of additive sensor noise.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Mask file, overriding the system file.
    #[arg(long)]
    pub mask: Option<std::path::PathBuf>,
    #[arg(long)]
    pub mask_seed: Option<u64>,
    #[arg(long)]
    pub mask_density: Option<f64>,
}

impl SystemArgs {
    pub fn spec(&self) -> Result<SystemSpec> {
        let mut spec = match (&self.system, self.architecture) {
            (Some(path), _) => load_system(path)?,
            (None, Some(arch)) => SystemSpec::new(arch),
            (None, None) => {
                return Err(crate::error::CliError::usage(
                    "give a --system file or an --architecture",
                ))
            }
        };
        if let Some(a) = self.architecture {
            spec.architecture = a;
        }
        if let Some(s) = self.step {
            spec.step = s;
        }
        if let Some(n) = self.noise_sigma {
            spec.noise_sigma = n;
        }
        if let Some(m) = &self.mask {
            spec.mask.path = Some(m.clone());
        }
        if let Some(s) = self.mask_seed {
            spec.mask.seed = s;
        }
        if let Some(d) = self.mask_density {
            spec.mask.density = Some(d);
        }
        Ok(spec)
    }
}
