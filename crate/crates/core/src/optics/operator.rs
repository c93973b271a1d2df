//! Encoding operator `Psi` and its transpose for both disperser layouts.
//!
//! Single disperser (mask, then shear onto a widened sensor):
//! `Y(h, w + s(c)) += Phi(h, w) X(h, w, c)`.
//!
//! Dual disperser (shear, mask, unshear):
//! `Y(h, w) = sum_c Phi(h, w - s(c)) X(h, w, c)`.
//!
//! Dispersed coordinates that leave the aperture contribute nothing.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::system::{OpticalPath, SystemConfig};
use super::DispersionSpec;
use crate::cube::{CodedMask, MeasurementSequence, SpectralCube};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn sd_forward_frame<F: Scalar>(
    x: &[F],
    channels: usize,
    mask: &CodedMask<F>,
    disp: &DispersionSpec,
    y: &mut [F],
) {
    let (h, w) = (mask.height(), mask.width());
    let wp = w + disp.extra_width(channels);
    y.fill(F::zero());
    for row in 0..h {
        for col in 0..w {
            let m = mask.at(row, col);
            if m == F::zero() {
                continue;
            }
            let px = &x[(row * w + col) * channels..(row * w + col + 1) * channels];
            for (c, &v) in px.iter().enumerate() {
                y[row * wp + col + disp.sensor_offset(c, channels)] += m * v;
            }
        }
    }
}

fn sd_adjoint_frame<F: Scalar>(
    y: &[F],
    channels: usize,
    mask: &CodedMask<F>,
    disp: &DispersionSpec,
    x: &mut [F],
) {
    let (h, w) = (mask.height(), mask.width());
    let wp = w + disp.extra_width(channels);
    for row in 0..h {
        for col in 0..w {
            let m = mask.at(row, col);
            let px = &mut x[(row * w + col) * channels..(row * w + col + 1) * channels];
            for (c, v) in px.iter_mut().enumerate() {
                *v = m * y[row * wp + col + disp.sensor_offset(c, channels)];
            }
        }
    }
}

#[inline]
fn dd_mask<F: Scalar>(mask: &CodedMask<F>, row: usize, col: usize, shift: i64) -> F {
    let src = col as i64 - shift;
    if src >= 0 && (src as usize) < mask.width() {
        mask.at(row, src as usize)
    } else {
        F::zero()
    }
}

fn dd_forward_frame<F: Scalar>(
    x: &[F],
    channels: usize,
    mask: &CodedMask<F>,
    disp: &DispersionSpec,
    y: &mut [F],
) {
    let (h, w) = (mask.height(), mask.width());
    for row in 0..h {
        for col in 0..w {
            let px = &x[(row * w + col) * channels..(row * w + col + 1) * channels];
            let mut acc = F::zero();
            for (c, &v) in px.iter().enumerate() {
                acc += dd_mask(mask, row, col, disp.signed_shift(c)) * v;
            }
            y[row * w + col] = acc;
        }
    }
}

fn dd_adjoint_frame<F: Scalar>(
    y: &[F],
    channels: usize,
    mask: &CodedMask<F>,
    disp: &DispersionSpec,
    x: &mut [F],
) {
    let (h, w) = (mask.height(), mask.width());
    for row in 0..h {
        for col in 0..w {
            let v = y[row * w + col];
            let px = &mut x[(row * w + col) * channels..(row * w + col + 1) * channels];
            for (c, out) in px.iter_mut().enumerate() {
                *out = dd_mask(mask, row, col, disp.signed_shift(c)) * v;
            }
        }
    }
}

fn check_frame<F: Scalar>(frame: &Tensor<F>, mask: &CodedMask<F>) -> Result<usize> {
    let s = frame.shape();
    if s.len() != 3 || s[0] != mask.height() || s[1] != mask.width() {
        return Err(Error::Shape(format!(
            "frame {:?} does not match {} x {} mask",
            s,
            mask.height(),
            mask.width()
        )));
    }
    Ok(s[2])
}

/// Single-disperser encoding of one `H x W x C` frame into `H x (W + sigma(C-1))`.
pub fn forward_sd<F: Scalar>(
    frame: &Tensor<F>,
    mask: &CodedMask<F>,
    dispersion: &DispersionSpec,
) -> Result<Tensor<F>> {
    let c = check_frame(frame, mask)?;
    let wp = mask.width() + dispersion.extra_width(c);
    let mut y = Tensor::zeros(&[mask.height(), wp]);
    sd_forward_frame(frame.data(), c, mask, dispersion, y.data_mut());
    Ok(y)
}

/// Dual-disperser encoding of one `H x W x C` frame into `H x W`.
pub fn forward_dd<F: Scalar>(
    frame: &Tensor<F>,
    mask: &CodedMask<F>,
    dispersion: &DispersionSpec,
) -> Result<Tensor<F>> {
    let c = check_frame(frame, mask)?;
    let mut y = Tensor::zeros(&[mask.height(), mask.width()]);
    dd_forward_frame(frame.data(), c, mask, dispersion, y.data_mut());
    Ok(y)
}

fn check_cube<F: Scalar>(cube: &SpectralCube<F>, config: &SystemConfig<F>) -> Result<()> {
    let (_, h, w, c) = cube.dims();
    if (h, w, c) != (config.height(), config.width(), config.channels()) {
        return Err(Error::Shape(format!(
            "cube {h} x {w} x {c} does not match system {} x {} x {}",
            config.height(),
            config.width(),
            config.channels()
        )));
    }
    Ok(())
}

fn check_measurement<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
) -> Result<()> {
    if meas.height() != config.height() || meas.width_prime() != config.measurement_width() {
        return Err(Error::Shape(format!(
            "measurement {} x {} does not match system sensor {} x {}",
            meas.height(),
            meas.width_prime(),
            config.height(),
            config.measurement_width()
        )));
    }
    Ok(())
}

/// Applies `Psi` frame by frame without noise.
pub fn forward_noiseless<F: Scalar>(
    seq: &SpectralCube<F>,
    config: &SystemConfig<F>,
) -> Result<MeasurementSequence<F>> {
    check_cube(seq, config)?;
    let (t, h, _, c) = seq.dims();
    let wp = config.measurement_width();
    let mut meas = MeasurementSequence::zeros(t, h, wp);
    let frame_len = h * wp;
    if frame_len == 0 {
        return Ok(meas);
    }
    meas.values_mut()
        .data_mut()
        .par_chunks_mut(frame_len)
        .enumerate()
        .for_each(|(i, y)| match config.path() {
            OpticalPath::SingleDisperser => {
                sd_forward_frame(seq.frame(i), c, &config.mask, &config.dispersion, y)
            }
            OpticalPath::DualDisperser => {
                dd_forward_frame(seq.frame(i), c, &config.mask, &config.dispersion, y)
            }
        });
    Ok(meas)
}

/// `Y_i = Psi X_i + Theta` with the same mask for every frame and i.i.d.
/// Gaussian `Theta`. Frame `i` draws its noise from stream `i` of the seed,
/// so the result does not depend on thread scheduling.
pub fn forward<F: Scalar>(
    seq: &SpectralCube<F>,
    config: &SystemConfig<F>,
    seed: u64,
) -> Result<MeasurementSequence<F>> {
    let mut meas = forward_noiseless(seq, config)?;
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma)
            .map_err(|e| Error::Config(format!("noise distribution: {e}")))?;
        let frame_len = meas.height() * meas.width_prime();
        if frame_len > 0 {
            meas.values_mut()
                .data_mut()
                .par_chunks_mut(frame_len)
                .enumerate()
                .for_each(|(i, y)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    for v in y.iter_mut() {
                        *v += F::lit(normal.sample(&mut rng));
                    }
                });
        }
    }
    Ok(meas)
}

/// Exact transpose `Psi^T` of the noiseless encoder.
pub fn adjoint<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
) -> Result<SpectralCube<F>> {
    check_measurement(meas, config)?;
    let (t, h, w, c) = (meas.frames(), config.height(), config.width(), config.channels());
    let mut cube = SpectralCube::zeros(t, h, w, config.wavelengths.clone())?;
    let frame_len = h * w * c;
    if frame_len == 0 {
        return Ok(cube);
    }
    cube.values_mut()
        .data_mut()
        .par_chunks_mut(frame_len)
        .enumerate()
        .for_each(|(i, x)| match config.path() {
            OpticalPath::SingleDisperser => {
                sd_adjoint_frame(meas.frame(i), c, &config.mask, &config.dispersion, x)
            }
            OpticalPath::DualDisperser => {
                dd_adjoint_frame(meas.frame(i), c, &config.mask, &config.dispersion, x)
            }
        });
    Ok(cube)
}

/// Diagonal of `Psi Psi^T` on the sensor grid: the summed squared
/// transmission reaching each sensor pixel, `H x W'`.
pub fn mask_energy<F: Scalar>(config: &SystemConfig<F>) -> Tensor<F> {
    let (h, w, c) = (config.height(), config.width(), config.channels());
    let wp = config.measurement_width();
    let mut e = Tensor::zeros(&[h, wp]);
    let data = e.data_mut();
    let mask = &config.mask;
    let disp = &config.dispersion;
    match config.path() {
        OpticalPath::SingleDisperser => {
            for row in 0..h {
                for col in 0..w {
                    let m = mask.at(row, col);
                    for ch in 0..c {
                        data[row * wp + col + disp.sensor_offset(ch, c)] += m * m;
                    }
                }
            }
        }
        OpticalPath::DualDisperser => {
            for row in 0..h {
                for col in 0..w {
                    data[row * w + col] = (0..c)
                        .map(|ch| {
                            let m = dd_mask(mask, row, col, disp.signed_shift(ch));
                            m * m
                        })
                        .sum();
                }
            }
        }
    }
    e
}
