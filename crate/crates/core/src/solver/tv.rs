//! Anisotropic total-variation denoising by projected dual gradient
//! iteration, with forward differences and reflective (Neumann) boundaries.
//!
//! Solves `min_u 1/2 |u - x|^2 + weight * sum_axis |D_axis u|_1` where the
//! axes are H and W of every (frame, channel) plane, plus T when `temporal`.

use rayon::prelude::*;

use crate::cube::SpectralCube;
use crate::scalar::Scalar;

#[derive(Clone, Copy)]
struct Geometry {
    frames: usize,
    height: usize,
    width: usize,
    channels: usize,
}

impl Geometry {
    fn len(&self) -> usize {
        self.frames * self.height * self.width * self.channels
    }

    /// (stride, extent) of each active axis.
    fn axes(&self, temporal: bool) -> Vec<(usize, usize)> {
        let c = self.channels;
        let mut axes = vec![(self.width * c, self.height), (c, self.width)];
        if temporal {
            axes.push((self.height * self.width * c, self.frames));
        }
        axes
    }
}

/// Coordinate along an axis for flat index `i`.
#[inline]
fn coord(i: usize, stride: usize, extent: usize) -> usize {
    (i / stride) % extent
}

/// `u = x - weight * D^T p`
fn primal<F: Scalar>(x: &[F], p: &[Vec<F>], axes: &[(usize, usize)], weight: F, u: &mut [F]) {
    u.copy_from_slice(x);
    for (pa, &(stride, extent)) in p.iter().zip(axes) {
        for (i, ui) in u.iter_mut().enumerate() {
            let k = coord(i, stride, extent);
            // (D^T p)_i = p_{i-1} [k > 0] - p_i [k < n-1]
            let mut dt = F::zero();
            if k > 0 {
                dt += pa[i - stride];
            }
            if k + 1 < extent {
                dt -= pa[i];
            }
            *ui -= weight * dt;
        }
    }
}

fn denoise_block<F: Scalar>(
    x: &[F],
    geom: Geometry,
    weight: F,
    iterations: usize,
    temporal: bool,
    out: &mut [F],
) {
    let axes = geom.axes(temporal);
    let lipschitz = F::lit(4.0 * axes.len() as f64);
    let tau = F::one() / (weight * lipschitz);
    let mut p: Vec<Vec<F>> = axes.iter().map(|_| vec![F::zero(); x.len()]).collect();
    let (lo, hi) = (-F::one(), F::one());
    for _ in 0..iterations {
        primal(x, &p, &axes, weight, out);
        for (pa, &(stride, extent)) in p.iter_mut().zip(&axes) {
            for (i, pi) in pa.iter_mut().enumerate() {
                if coord(i, stride, extent) + 1 < extent {
                    let g = out[i + stride] - out[i];
                    *pi = (*pi + tau * g).max(lo).min(hi);
                }
            }
        }
    }
    primal(x, &p, &axes, weight, out);
}

/// Total-variation denoising of every frame and channel.
///
/// `weight == 0` returns the input unchanged. The output mean equals the
/// input mean up to rounding.
pub fn denoise_tv<F: Scalar>(
    cube: &SpectralCube<F>,
    weight: f64,
    inner_iterations: usize,
    temporal: bool,
) -> SpectralCube<F> {
    if weight <= 0.0 || inner_iterations == 0 || cube.values().is_empty() {
        return cube.clone();
    }
    let (t, h, w, c) = cube.dims();
    let weight = F::lit(weight);
    let mut out = cube.clone();
    let x = cube.values().data();
    if temporal && t > 1 {
        let geom = Geometry {
            frames: t,
            height: h,
            width: w,
            channels: c,
        };
        debug_assert_eq!(geom.len(), x.len());
        denoise_block(x, geom, weight, inner_iterations, true, out.values_mut().data_mut());
    } else {
        let geom = Geometry {
            frames: 1,
            height: h,
            width: w,
            channels: c,
        };
        let n = geom.len();
        out.values_mut()
            .data_mut()
            .par_chunks_mut(n)
            .zip(x.par_chunks(n))
            .for_each(|(o, xi)| denoise_block(xi, geom, weight, inner_iterations, false, o));
    }
    out
}

/// Anisotropic TV of a cube over the same axes `denoise_tv` regularizes.
pub fn total_variation<F: Scalar>(cube: &SpectralCube<F>, temporal: bool) -> f64 {
    let (t, h, w, c) = cube.dims();
    let geom = Geometry {
        frames: t,
        height: h,
        width: w,
        channels: c,
    };
    let x = cube.values().data();
    let mut axes = geom.axes(false);
    if temporal {
        axes.push((h * w * c, t));
    }
    let mut tv = 0.0;
    for &(stride, extent) in &axes {
        for i in 0..x.len() {
            if coord(i, stride, extent) + 1 < extent {
                tv += (x[i + stride] - x[i]).as_f64().abs();
            }
        }
    }
    tv
}
