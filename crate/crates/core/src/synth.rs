//! Synthetic dynamic spectral scenes and the video cropping strategy.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{linspace_wavelengths, SpectralCube};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Probability that a stochastic crop keeps a fixed window.
pub const CROP_ZERO_STEP_PROBABILITY: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpectrum {
    pub center_nm: f64,
    pub width_nm: f64,
    pub amplitude: f64,
}

impl GaussianSpectrum {
    pub fn sample(&self, wavelengths: &[f64]) -> Vec<f64> {
        wavelengths
            .iter()
            .map(|&l| {
                self.amplitude * (-(l - self.center_nm).powi(2) / (2.0 * self.width_nm.powi(2))).exp()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObjectShape {
    Disk { radius: f64 },
    Rectangle { half_height: f64, half_width: f64 },
}

/// Per-frame integer translation and constant angular velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Center at frame 0 as (row, column).
    pub start: [i64; 2],
    /// Displacement per frame as (rows, columns).
    #[serde(default)]
    pub velocity: [i64; 2],
    /// Rotation per frame in degrees.
    #[serde(default)]
    pub rotation_deg: f64,
}

impl Trajectory {
    pub fn center(&self, t: usize) -> [i64; 2] {
        [
            self.start[0] + self.velocity[0] * t as i64,
            self.start[1] + self.velocity[1] * t as i64,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: ObjectShape,
    pub spectrum: GaussianSpectrum,
    pub trajectory: Trajectory,
}

impl SceneObject {
    /// Nearest-neighbour membership test of pixel `(row, col)` at frame `t`.
    fn covers(&self, row: usize, col: usize, t: usize) -> bool {
        let [cr, cc] = self.trajectory.center(t);
        let dy = row as f64 - cr as f64;
        let dx = col as f64 - cc as f64;
        match self.shape {
            ObjectShape::Disk { radius } => dy * dy + dx * dx <= radius * radius,
            ObjectShape::Rectangle {
                half_height,
                half_width,
            } => {
                let theta = (self.trajectory.rotation_deg * t as f64).to_radians();
                let (s, c) = theta.sin_cos();
                // rotate back into the object frame, then snap to the grid
                let ry = (c * dy + s * dx).round();
                let rx = (-s * dy + c * dx).round();
                ry.abs() <= half_height && rx.abs() <= half_width
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    #[serde(default = "default_lo")]
    pub wavelength_min: f64,
    #[serde(default = "default_hi")]
    pub wavelength_max: f64,
    pub background: GaussianSpectrum,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    /// Largest per-frame displacement (Chebyshev, pixels) any object may make.
    #[serde(default = "default_max_disp")]
    pub max_displacement: i64,
    #[serde(default)]
    pub seed: u64,
}

fn default_lo() -> f64 {
    500.0
}

fn default_hi() -> f64 {
    650.0
}

fn default_max_disp() -> i64 {
    4
}

impl SceneSpec {
    pub fn empty(frames: usize, height: usize, width: usize, channels: usize) -> Self {
        SceneSpec {
            frames,
            height,
            width,
            channels,
            wavelength_min: default_lo(),
            wavelength_max: default_hi(),
            background: GaussianSpectrum {
                center_nm: 575.0,
                width_nm: 120.0,
                amplitude: 0.15,
            },
            objects: Vec::new(),
            max_displacement: default_max_disp(),
            seed: 0,
        }
    }

    /// A seeded scene of `objects` moving disks and rotating rectangles.
    pub fn random(
        seed: u64,
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
        objects: usize,
    ) -> Self {
        let mut spec = Self::empty(frames, height, width, channels);
        spec.seed = seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_v = spec.max_displacement.min(2);
        let span = (spec.wavelength_max - spec.wavelength_min).max(1.0);
        let extent = height.min(width) as f64;
        for k in 0..objects {
            let velocity = [rng.random_range(-max_v..=max_v), rng.random_range(-max_v..=max_v)];
            let reach = |n: usize, v: i64| -> (i64, i64) {
                let travel = v * frames.saturating_sub(1) as i64;
                let lo = 0i64.max(-travel);
                let hi = (n as i64 - 1).min(n as i64 - 1 - travel);
                (lo, hi.max(lo))
            };
            let (r_lo, r_hi) = reach(height, velocity[0]);
            let (c_lo, c_hi) = reach(width, velocity[1]);
            let start = [rng.random_range(r_lo..=r_hi), rng.random_range(c_lo..=c_hi)];
            let size = extent * rng.random_range(0.08..0.22);
            let shape = if k % 2 == 0 {
                ObjectShape::Disk { radius: size }
            } else {
                ObjectShape::Rectangle {
                    half_height: size,
                    half_width: size * rng.random_range(0.5..1.5),
                }
            };
            let rotation_deg = if k % 2 == 1 { rng.random_range(-15.0..15.0) } else { 0.0 };
            spec.objects.push(SceneObject {
                shape,
                spectrum: GaussianSpectrum {
                    center_nm: spec.wavelength_min + span * rng.random_range(0.0..1.0),
                    width_nm: span * rng.random_range(0.08..0.3),
                    amplitude: rng.random_range(0.5..0.95),
                },
                trajectory: Trajectory {
                    start,
                    velocity,
                    rotation_deg,
                },
            });
        }
        spec
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
        toml::to_string(self).expect("scene spec serializes")
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        linspace_wavelengths(self.channels, self.wavelength_min, self.wavelength_max)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Config("scene extents must be positive".into()));
        }
        if self.channels > 1 && !(self.wavelength_max > self.wavelength_min) {
            return Err(Error::Config("wavelength_max must exceed wavelength_min".into()));
        }
        let spectra = std::iter::once(&self.background).chain(self.objects.iter().map(|o| &o.spectrum));
        for s in spectra {
            if !(0.0..=1.0).contains(&s.amplitude) || !(s.width_nm > 0.0) {
                return Err(Error::Config(format!(
                    "spectrum amplitude must lie in [0, 1] and width be positive: {s:?}"
                )));
            }
        }
        for (k, o) in self.objects.iter().enumerate() {
            let v = o.trajectory.velocity;
            if v[0].abs().max(v[1].abs()) > self.max_displacement {
                return Err(Error::Config(format!(
                    "object {k} moves {v:?} per frame, above max_displacement {}",
                    self.max_displacement
                )));
            }
            for t in 0..self.frames {
                let [r, c] = o.trajectory.center(t);
                if r < 0 || c < 0 || r >= self.height as i64 || c >= self.width as i64 {
                    return Err(Error::Config(format!(
                        "object {k} center ({r}, {c}) leaves the {} x {} frame at t = {t}",
                        self.height, self.width
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Renders the scene: background spectrum everywhere, objects composited in
/// list order (later objects occlude earlier ones).
pub fn synth_scene<F: Scalar>(spec: &SceneSpec) -> Result<SpectralCube<F>> {
    spec.validate()?;
    let wavelengths = spec.wavelengths();
    let background: Vec<F> = spec.background.sample(&wavelengths).into_iter().map(F::lit).collect();
    let spectra: Vec<Vec<F>> = spec
        .objects
        .iter()
        .map(|o| o.spectrum.sample(&wavelengths).into_iter().map(F::lit).collect())
        .collect();
    let (t, h, w, c) = (spec.frames, spec.height, spec.width, spec.channels);
    let mut cube = SpectralCube::zeros(t, h, w, wavelengths)?;
    for f in 0..t {
        let frame = cube.frame_mut(f);
        for row in 0..h {
            for col in 0..w {
                let px = &mut frame[(row * w + col) * c..(row * w + col + 1) * c];
                let top = spec.objects.iter().rposition(|o| o.covers(row, col, f));
                match top {
                    Some(k) => px.copy_from_slice(&spectra[k]),
                    None => px.copy_from_slice(&background),
                }
            }
        }
    }
    Ok(cube)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CropMotion {
    /// Window origin moves by `(rows, cols)` each frame.
    Fixed(i64, i64),
    /// Zero step with probability 0.7, otherwise a uniformly drawn non-zero
    /// step with each component in `[-max_step, max_step]`.
    Random { max_step: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropPlan {
    pub origin: (usize, usize),
    pub step: (i64, i64),
}

pub fn draw_crop_step(rng: &mut impl Rng, max_step: i64) -> (i64, i64) {
    if max_step <= 0 || rng.random::<f64>() < CROP_ZERO_STEP_PROBABILITY {
        return (0, 0);
    }
    loop {
        let s = (
            rng.random_range(-max_step..=max_step),
            rng.random_range(-max_step..=max_step),
        );
        if s != (0, 0) {
            return s;
        }
    }
}

fn origin_range(src: usize, out: usize, travel: i64) -> Option<(i64, i64)> {
    let lo = 0i64.max(-travel);
    let hi = src as i64 - out as i64 - 0i64.max(travel);
    (hi >= lo).then_some((lo, hi))
}

/// Extracts a moving `out_h x out_w` window from each frame, emulating
/// camera motion. The origin is drawn from `seed` among positions that keep
/// every frame's window inside the source.
pub fn crop_video<F: Scalar>(
    cube: &SpectralCube<F>,
    out_h: usize,
    out_w: usize,
    motion: CropMotion,
    seed: u64,
) -> Result<(SpectralCube<F>, CropPlan)> {
    let (t, h, w, c) = cube.dims();
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("crop extent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = match motion {
        CropMotion::Fixed(dy, dx) => (dy, dx),
        CropMotion::Random { max_step } => draw_crop_step(&mut rng, max_step),
    };
    let span = t.saturating_sub(1) as i64;
    let (rows, cols) = match (
        origin_range(h, out_h, step.0 * span),
        origin_range(w, out_w, step.1 * span),
    ) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{out_h} x {out_w} window moving {step:?} over {t} frames escapes the {h} x {w} source"
            )))
        }
    };
    let origin = (
        rng.random_range(rows.0..=rows.1) as usize,
        rng.random_range(cols.0..=cols.1) as usize,
    );
    let mut out = Tensor::zeros(&[t, out_h, out_w, c]);
    for f in 0..t {
        let r0 = (origin.0 as i64 + step.0 * f as i64) as usize;
        let c0 = (origin.1 as i64 + step.1 * f as i64) as usize;
        let src = cube.frame(f);
        let dst = &mut out.data_mut()[f * out_h * out_w * c..(f + 1) * out_h * out_w * c];
        for r in 0..out_h {
            let s = ((r0 + r) * w + c0) * c;
            dst[r * out_w * c..(r + 1) * out_w * c].copy_from_slice(&src[s..s + out_w * c]);
        }
    }
    Ok((
        SpectralCube::new(out, cube.wavelengths().to_vec())?,
        CropPlan { origin, step },
    ))
}
