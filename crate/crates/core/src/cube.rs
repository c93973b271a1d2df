//! Spectral-cube domain types.
//!
//! All volumes are stored row-major with axis order `T, H, W, C` (cubes) or
//! `T, H, W'` (measurements).

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `count` wavelengths evenly spaced over `[lo, hi]` nanometers.
pub fn linspace_wavelengths(count: usize, lo: f64, hi: f64) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        n => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Default band plan: 500-650 nm.
pub fn default_wavelengths(count: usize) -> Vec<f64> {
    linspace_wavelengths(count, 500.0, 650.0)
}

fn check_wavelengths(wavelengths: &[f64], channels: usize) -> Result<()> {
    if wavelengths.len() != channels {
        return Err(Error::Shape(format!(
            "{} wavelengths for {} channels",
            wavelengths.len(),
            channels
        )));
    }
    if wavelengths.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument(
            "wavelengths must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// A `T x H x W x C` reflectance video.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube<F> {
    values: Tensor<F>,
    wavelengths: Vec<f64>,
}

impl<F: Scalar> SpectralCube<F> {
    pub fn new(values: Tensor<F>, wavelengths: Vec<f64>) -> Result<Self> {
        if values.rank() != 4 {
            return Err(Error::Shape(format!(
                "cube needs rank 4 (T,H,W,C), got {:?}",
                values.shape()
            )));
        }
        check_wavelengths(&wavelengths, values.shape()[3])?;
        Ok(SpectralCube {
            values,
            wavelengths,
        })
    }

    pub fn zeros(frames: usize, height: usize, width: usize, wavelengths: Vec<f64>) -> Result<Self> {
        let c = wavelengths.len();
        Self::new(Tensor::zeros(&[frames, height, width, c]), wavelengths)
    }

    pub fn from_fn(
        dims: [usize; 4],
        wavelengths: Vec<f64>,
        f: impl FnMut(&[usize]) -> F,
    ) -> Result<Self> {
        Self::new(Tensor::from_fn(&dims, f), wavelengths)
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[3]
    }

    /// `(T, H, W, C)`
    pub fn dims(&self) -> (usize, usize, usize, usize) {
        (self.frames(), self.height(), self.width(), self.channels())
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor<F> {
        &mut self.values
    }

    pub fn into_values(self) -> Tensor<F> {
        self.values
    }

    #[inline]
    pub fn index(&self, t: usize, h: usize, w: usize, c: usize) -> usize {
        let (_, hh, ww, cc) = self.dims();
        ((t * hh + h) * ww + w) * cc + c
    }

    #[inline]
    pub fn at(&self, t: usize, h: usize, w: usize, c: usize) -> F {
        self.values.data()[self.index(t, h, w, c)]
    }

    #[inline]
    pub fn set(&mut self, t: usize, h: usize, w: usize, c: usize, v: F) {
        let i = self.index(t, h, w, c);
        self.values.data_mut()[i] = v;
    }

    /// Contiguous `H x W x C` slice of one frame.
    pub fn frame(&self, t: usize) -> &[F] {
        let n = self.height() * self.width() * self.channels();
        &self.values.data()[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [F] {
        let n = self.height() * self.width() * self.channels();
        &mut self.values.data_mut()[t * n..(t + 1) * n]
    }

    /// Replaces the payload with one of identical shape.
    pub fn with_values(&self, values: Tensor<F>) -> Result<Self> {
        if values.shape() != self.values.shape() {
            return Err(Error::Shape(format!(
                "expected {:?}, got {:?}",
                self.values.shape(),
                values.shape()
            )));
        }
        Ok(SpectralCube {
            values,
            wavelengths: self.wavelengths.clone(),
        })
    }

    pub fn clamped_unit(&self) -> Self {
        SpectralCube {
            values: self.values.map(|v| v.max(F::zero()).min(F::one())),
            wavelengths: self.wavelengths.clone(),
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.values
            .data()
            .iter()
            .all(|&v| v >= F::zero() && v <= F::one())
    }

    pub fn cast<G: Scalar>(&self) -> SpectralCube<G> {
        SpectralCube {
            values: self.values.cast(),
            wavelengths: self.wavelengths.clone(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.values.shape() != other.values.shape() {
            return Err(Error::Shape(format!(
                "cube shapes differ: {:?} vs {:?}",
                self.values.shape(),
                other.values.shape()
            )));
        }
        Ok(())
    }
}

/// A `T x H x W'` sequence of coded sensor frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSequence<F> {
    values: Tensor<F>,
}

impl<F: Scalar> MeasurementSequence<F> {
    pub fn new(values: Tensor<F>) -> Result<Self> {
        if values.rank() != 3 {
            return Err(Error::Shape(format!(
                "measurement needs rank 3 (T,H,W'), got {:?}",
                values.shape()
            )));
        }
        Ok(MeasurementSequence { values })
    }

    pub fn zeros(frames: usize, height: usize, width_prime: usize) -> Self {
        MeasurementSequence {
            values: Tensor::zeros(&[frames, height, width_prime]),
        }
    }

    pub fn frames(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn height(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn width_prime(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn values(&self) -> &Tensor<F> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Tensor<F> {
        &mut self.values
    }

    pub fn frame(&self, t: usize) -> &[F] {
        let n = self.height() * self.width_prime();
        &self.values.data()[t * n..(t + 1) * n]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [F] {
        let n = self.height() * self.width_prime();
        &mut self.values.data_mut()[t * n..(t + 1) * n]
    }

    pub fn cast<G: Scalar>(&self) -> MeasurementSequence<G> {
        MeasurementSequence {
            values: self.values.cast(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MaskKind {
    RandomBinary,
    Notch,
    SparseGrid,
}

impl MaskKind {
    pub fn name(self) -> &'static str {
        match self {
            MaskKind::RandomBinary => "random-binary",
            MaskKind::Notch => "notch",
            MaskKind::SparseGrid => "sparse-grid",
        }
    }
}

impl fmt::Display for MaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random-binary" | "random" | "binary" => Ok(MaskKind::RandomBinary),
            "notch" => Ok(MaskKind::Notch),
            "sparse-grid" | "sparse" => Ok(MaskKind::SparseGrid),
            other => Err(Error::Config(format!("unknown mask kind '{other}'"))),
        }
    }
}

/// An `H x W` coded-aperture transmission pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CodedMask<F> {
    kind: MaskKind,
    transmission: Tensor<F>,
}

impl<F: Scalar> CodedMask<F> {
    pub fn new(kind: MaskKind, transmission: Tensor<F>) -> Result<Self> {
        if transmission.rank() != 2 {
            return Err(Error::Shape(format!(
                "mask needs rank 2 (H,W), got {:?}",
                transmission.shape()
            )));
        }
        let data = transmission.data();
        if data.iter().any(|&v| !(v >= F::zero() && v <= F::one())) {
            return Err(Error::InvalidArgument(
                "mask transmission must lie in [0, 1]".into(),
            ));
        }
        if kind == MaskKind::RandomBinary
            && data.iter().any(|&v| v != F::zero() && v != F::one())
        {
            return Err(Error::InvalidArgument(
                "random-binary mask must be exactly {0, 1}".into(),
            ));
        }
        Ok(CodedMask { kind, transmission })
    }

    pub fn ones(kind: MaskKind, height: usize, width: usize) -> Self {
        CodedMask {
            kind,
            transmission: Tensor::filled(&[height, width], F::one()),
        }
    }

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn height(&self) -> usize {
        self.transmission.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.transmission.shape()[1]
    }

    pub fn transmission(&self) -> &Tensor<F> {
        &self.transmission
    }

    #[inline]
    pub fn at(&self, h: usize, w: usize) -> F {
        self.transmission.data()[h * self.width() + w]
    }

    /// Mean transmission (open fraction for binary masks).
    pub fn mean(&self) -> f64 {
        let n = self.transmission.len().max(1);
        self.transmission.sum().as_f64() / n as f64
    }

    pub fn cast<G: Scalar>(&self) -> CodedMask<G> {
        CodedMask {
            kind: self.kind,
            transmission: self.transmission.cast(),
        }
    }
}
