//! Coded-aperture snapshot spectral imaging optics.

mod dispersion;
mod mask;
mod operator;
mod system;

pub use dispersion::DispersionSpec;
pub use mask::{make_mask, shift_mask};
pub use operator::{adjoint, forward, forward_dd, forward_noiseless, forward_sd, mask_energy};
pub use system::{Architecture, MaskSpec, OpticalPath, SystemConfig, SystemSpec};
