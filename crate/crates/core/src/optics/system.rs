use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mask::make_mask;
use super::DispersionSpec;
use crate::cube::{CodedMask, MaskKind};
use crate::error::{Error, Result};
use crate::io::load_mask;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    SdCassi,
    DdCassi,
    Pmvis,
    Ndssi,
}

/// Which encoding equation an architecture follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpticalPath {
    /// Modulate, then shear onto a widened sensor.
    SingleDisperser,
    /// Shear, modulate, unshear.
    DualDisperser,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Pmvis,
        Architecture::SdCassi,
        Architecture::Ndssi,
        Architecture::DdCassi,
    ];

    pub fn path(self) -> OpticalPath {
        match self {
            Architecture::SdCassi | Architecture::Pmvis => OpticalPath::SingleDisperser,
            Architecture::DdCassi | Architecture::Ndssi => OpticalPath::DualDisperser,
        }
    }

    /// Mask family the architecture is built around.
    pub fn mask_kind(self) -> MaskKind {
        match self {
            Architecture::SdCassi | Architecture::DdCassi => MaskKind::RandomBinary,
            Architecture::Pmvis => MaskKind::SparseGrid,
            Architecture::Ndssi => MaskKind::Notch,
        }
    }

    /// Default open fraction for the architecture's mask family.
    pub fn default_density(self) -> f64 {
        match self.mask_kind() {
            MaskKind::RandomBinary => 0.5,
            MaskKind::SparseGrid => 0.25,
            MaskKind::Notch => 0.9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::SdCassi => "sd-cassi",
            Architecture::DdCassi => "dd-cassi",
            Architecture::Pmvis => "pmvis",
            Architecture::Ndssi => "ndssi",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "sd-cassi" | "sd" => Ok(Architecture::SdCassi),
            "dd-cassi" | "dd" => Ok(Architecture::DdCassi),
            "pmvis" => Ok(Architecture::Pmvis),
            "ndssi" => Ok(Architecture::Ndssi),
            other => Err(Error::Config(format!("unknown architecture '{other}'"))),
        }
    }
}

/// A fully resolved imaging system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig<F> {
    pub architecture: Architecture,
    pub mask: CodedMask<F>,
    pub dispersion: DispersionSpec,
    /// Standard deviation of the additive Gaussian sensor noise.
    pub noise_sigma: f64,
    /// Band plan of the instrument (nm). Its length is the channel count.
    pub wavelengths: Vec<f64>,
}

impl<F: Scalar> SystemConfig<F> {
    pub fn new(
        architecture: Architecture,
        mask: CodedMask<F>,
        dispersion: DispersionSpec,
        noise_sigma: f64,
        wavelengths: Vec<f64>,
    ) -> Result<Self> {
        if mask.kind() != architecture.mask_kind() {
            return Err(Error::Config(format!(
                "{architecture} expects a {} mask, got {}",
                architecture.mask_kind(),
                mask.kind()
            )));
        }
        if !(noise_sigma >= 0.0) || !noise_sigma.is_finite() {
            return Err(Error::Config(format!(
                "noise_sigma must be finite and >= 0, got {noise_sigma}"
            )));
        }
        if wavelengths.is_empty() || wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config(
                "wavelengths must be non-empty and strictly increasing".into(),
            ));
        }
        Ok(SystemConfig {
            architecture,
            mask,
            dispersion,
            noise_sigma,
            wavelengths,
        })
    }

    pub fn path(&self) -> OpticalPath {
        self.architecture.path()
    }

    pub fn channels(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn height(&self) -> usize {
        self.mask.height()
    }

    pub fn width(&self) -> usize {
        self.mask.width()
    }

    /// Sensor width `W'`.
    pub fn measurement_width(&self) -> usize {
        match self.path() {
            OpticalPath::SingleDisperser => {
                self.width() + self.dispersion.extra_width(self.channels())
            }
            OpticalPath::DualDisperser => self.width(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    /// Load the pattern from a mask file instead of generating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<f64>,
}

/// Text form of a [`SystemConfig`], independent of the scene geometry.
///
/// ```toml
/// architecture = "dd-cassi"
/// step = 1
/// direction = 1
/// noise_sigma = 0.0
///
/// [mask]
/// seed = 7
/// density = 0.5
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub architecture: Architecture,
    #[serde(default = "one")]
    pub step: usize,
    #[serde(default = "one_i8")]
    pub direction: i8,
    #[serde(default)]
    pub noise_sigma: f64,
    /// Band plan (nm). When absent the caller supplies one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wavelengths: Option<Vec<f64>>,
    #[serde(default = "default_mask")]
    pub mask: MaskSpec,
}

fn one() -> usize {
    1
}

fn one_i8() -> i8 {
    1
}

fn default_mask() -> MaskSpec {
    MaskSpec {
        path: None,
        kind: None,
        seed: 0,
        density: None,
    }
}

impl SystemSpec {
    pub fn new(architecture: Architecture) -> Self {
        SystemSpec {
            architecture,
            step: 1,
            direction: 1,
            noise_sigma: 0.0,
            wavelengths: None,
            mask: default_mask(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("system spec serializes")
    }

    pub fn mask_kind(&self) -> Result<MaskKind> {
        match &self.mask.kind {
            Some(k) => k.parse(),
            None => Ok(self.architecture.mask_kind()),
        }
    }

    /// Scene width behind a sensor `measurement_width` columns wide.
    pub fn scene_width(&self, measurement_width: usize, channels: usize) -> Result<usize> {
        match self.architecture.path() {
            OpticalPath::DualDisperser => Ok(measurement_width),
            OpticalPath::SingleDisperser => {
                let extra = DispersionSpec::new(self.step, self.direction)?.extra_width(channels);
                measurement_width.checked_sub(extra).filter(|&w| w > 0).ok_or_else(|| {
                    Error::Shape(format!(
                        "sensor width {measurement_width} is too narrow for {channels} sheared bands"
                    ))
                })
            }
        }
    }

    /// Resolves the mask (generated or loaded) for an `height x width` aperture.
    pub fn resolve<F: Scalar>(
        &self,
        height: usize,
        width: usize,
        wavelengths: Vec<f64>,
    ) -> Result<SystemConfig<F>> {
        let mask = match &self.mask.path {
            Some(p) => {
                let m: CodedMask<F> = load_mask(p)?;
                if (m.height(), m.width()) != (height, width) {
                    return Err(Error::Shape(format!(
                        "{}: mask is {} x {}, scene is {height} x {width}",
                        p.display(),
                        m.height(),
                        m.width()
                    )));
                }
                m
            }
            None => make_mask(
                self.mask_kind()?,
                height,
                width,
                self.mask.seed,
                self.mask
                    .density
                    .unwrap_or_else(|| self.architecture.default_density()),
            )?,
        };
        SystemConfig::new(
            self.architecture,
            mask,
            DispersionSpec::new(self.step, self.direction)?,
            self.noise_sigma,
            wavelengths,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths() {
        assert_eq!(Architecture::SdCassi.path(), OpticalPath::SingleDisperser);
        assert_eq!(Architecture::Pmvis.path(), OpticalPath::SingleDisperser);
        assert_eq!(Architecture::DdCassi.path(), OpticalPath::DualDisperser);
        assert_eq!(Architecture::Ndssi.path(), OpticalPath::DualDisperser);
    }

    #[test]
    fn incompatible_mask_rejected() {
        let mask = CodedMask::<f64>::ones(MaskKind::Notch, 4, 4);
        let r = SystemConfig::new(
            Architecture::SdCassi,
            mask,
            DispersionSpec::default(),
            0.0,
            vec![500.0, 510.0],
        );
        assert!(r.is_err());
    }

    #[test]
    fn spec_text_roundtrip() {
        let text = r#"
            architecture = "ndssi"
            step = 2
            noise_sigma = 0.01
            [mask]
            seed = 3
            density = 0.85
        "#;
        let spec = SystemSpec::parse(text).unwrap();
        assert_eq!(spec.architecture, Architecture::Ndssi);
        assert_eq!(spec.direction, 1);
        assert_eq!(SystemSpec::parse(&spec.to_toml()).unwrap(), spec);
        let sys: SystemConfig<f64> = spec.resolve(8, 9, vec![500.0, 600.0, 650.0]).unwrap();
        assert_eq!(sys.mask.kind(), MaskKind::Notch);
        assert_eq!(sys.measurement_width(), 9);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(SystemSpec::parse("architecture = \"sd-cassi\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn missing_mask_file_names_path() {
        let mut spec = SystemSpec::new(Architecture::DdCassi);
        spec.mask.path = Some("/nonexistent/mask.scub".into());
        let err = spec.resolve::<f64>(4, 4, vec![500.0]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/mask.scub"));
    }

    #[test]
    fn band_plan_and_mask_path_round_trip() {
        let mut spec = SystemSpec::new(Architecture::SdCassi);
        spec.wavelengths = Some(vec![500.0, 575.0, 650.0]);
        spec.mask.path = Some("run/out.mask.scub".into());
        assert_eq!(SystemSpec::parse(&spec.to_toml()).unwrap(), spec);
    }

    #[test]
    fn scene_width_inverts_sensor_width() {
        let sd = SystemSpec { step: 2, ..SystemSpec::new(Architecture::SdCassi) };
        assert_eq!(sd.scene_width(256 + 58, 30).unwrap(), 256);
        assert!(sd.scene_width(40, 30).is_err());
        assert_eq!(SystemSpec::new(Architecture::Ndssi).scene_width(64, 30).unwrap(), 64);
    }
}
