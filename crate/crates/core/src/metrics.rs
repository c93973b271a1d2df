//! Image-quality, spectral-fidelity and temporal-consistency metrics.
//!
//! All metrics assume reflectance on `[0, 1]` and are averaged frame-wise.

use serde::{Deserialize, Serialize};

use crate::cube::SpectralCube;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const PSNR_CAP_DB: f64 = 100.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Block edge of the temporal-consistency index.
pub const TEMPORAL_BLOCK: usize = 8;
/// Noise variance regularizing the block log-energies (8-bit intensity scale).
pub const TEMPORAL_NOISE_VAR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr_db: f64,
    pub ssim: f64,
    pub sam_deg: f64,
    /// Temporal-inconsistency index (lower is better); `None` for single-frame
    /// videos. Not comparable in absolute value to ST-RRED.
    pub temporal_score: Option<f64>,
}

impl MetricReport {
    pub fn is_finite(&self) -> bool {
        self.psnr_db.is_finite()
            && self.ssim.is_finite()
            && self.sam_deg.is_finite()
            && self.temporal_score.is_none_or(f64::is_finite)
    }
}

/// Computes all four metrics of `x` against the reference `y`.
pub fn evaluate<F: Scalar>(x: &SpectralCube<F>, y: &SpectralCube<F>) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr_db: psnr(x, y)?,
        ssim: ssim(x, y)?,
        sam_deg: sam(x, y)?,
        temporal_score: if x.frames() >= 2 {
            Some(temporal_score(x, y)?)
        } else {
            None
        },
    })
}

/// Mean over frames of `10 log10(1 / MSE)`, each frame capped at 100 dB.
pub fn psnr<F: Scalar>(x: &SpectralCube<F>, y: &SpectralCube<F>) -> Result<f64> {
    x.same_shape(y)?;
    let t = x.frames();
    if t == 0 || x.frame(0).is_empty() {
        return Err(Error::Shape("empty cube".into()));
    }
    let mut total = 0.0;
    for i in 0..t {
        let (a, b) = (x.frame(i), y.frame(i));
        let mse = a
            .iter()
            .zip(b)
            .map(|(&p, &q)| (p.as_f64() - q.as_f64()).powi(2))
            .sum::<f64>()
            / a.len() as f64;
        total += if mse > 0.0 {
            (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
        } else {
            PSNR_CAP_DB
        };
    }
    Ok(total / t as f64)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let r = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - r).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..n).map(|j| k[j] * plane[r * w + c + j]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64]) -> f64 {
    let c1 = (SSIM_K1 * 1.0).powi(2);
    let c2 = (SSIM_K2 * 1.0).powi(2);
    let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
    let mu_a = filter_valid(a, h, w, k);
    let mu_b = filter_valid(b, h, w, k);
    let e_aa = filter_valid(&prod(a, a), h, w, k);
    let e_bb = filter_valid(&prod(b, b), h, w, k);
    let e_ab = filter_valid(&prod(a, b), h, w, k);
    let n = mu_a.len();
    let mut total = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / n as f64
}

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), dynamic range 1,
/// over every (frame, channel) plane.
pub fn ssim<F: Scalar>(x: &SpectralCube<F>, y: &SpectralCube<F>) -> Result<f64> {
    x.same_shape(y)?;
    let (t, h, w, c) = x.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs at least {SSIM_WINDOW} x {SSIM_WINDOW} frames, got {h} x {w}"
        )));
    }
    if t == 0 || c == 0 {
        return Err(Error::Shape("empty cube".into()));
    }
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let plane = |cube: &SpectralCube<F>, f: usize, ch: usize| -> Vec<f64> {
        cube.frame(f).iter().skip(ch).step_by(c).map(|v| v.as_f64()).collect()
    };
    let mut total = 0.0;
    for f in 0..t {
        let mut frame_total = 0.0;
        for ch in 0..c {
            frame_total += ssim_plane(&plane(x, f, ch), &plane(y, f, ch), h, w, &k);
        }
        total += frame_total / c as f64;
    }
    Ok(total / t as f64)
}

/// Angle between two spectra, in radians, via `atan2(|a x b|, a . b)`.
fn spectral_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    // Lagrange identity: |a|^2 |b|^2 - (a.b)^2 = sum_{i<j} (a_i b_j - a_j b_i)^2
    let mut cross = 0.0;
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            cross += (a[i] * b[j] - a[j] * b[i]).powi(2);
        }
    }
    cross.sqrt().atan2(dot)
}

/// Mean spectral angle in degrees; pixels with a zero spectrum are skipped.
pub fn sam<F: Scalar>(x: &SpectralCube<F>, y: &SpectralCube<F>) -> Result<f64> {
    x.same_shape(y)?;
    let c = x.channels();
    if c == 0 {
        return Err(Error::Shape("empty cube".into()));
    }
    let mut frame_means = Vec::with_capacity(x.frames());
    for f in 0..x.frames() {
        let (mut sum, mut count) = (0.0, 0usize);
        for (pa, pb) in x.frame(f).chunks_exact(c).zip(y.frame(f).chunks_exact(c)) {
            let a: Vec<f64> = pa.iter().map(|v| v.as_f64()).collect();
            let b: Vec<f64> = pb.iter().map(|v| v.as_f64()).collect();
            if a.iter().all(|&v| v == 0.0) || b.iter().all(|&v| v == 0.0) {
                continue;
            }
            sum += spectral_angle(&a, &b);
            count += 1;
        }
        if count > 0 {
            frame_means.push(sum / count as f64);
        }
    }
    if frame_means.is_empty() {
        return Err(Error::InvalidArgument(
            "SAM undefined: every pixel has a zero spectrum".into(),
        ));
    }
    Ok(frame_means.iter().sum::<f64>() / frame_means.len() as f64 * 180.0 / std::f64::consts::PI)
}

fn block_log_energy(delta: &[f64], w: usize, c: usize, ch: usize, r0: usize, c0: usize, bh: usize, bw: usize) -> f64 {
    let mut e = 0.0;
    for r in r0..r0 + bh {
        for col in c0..c0 + bw {
            let d = 255.0 * delta[(r * w + col) * c + ch];
            e += d * d;
        }
    }
    let energy = e / (bh * bw) as f64;
    (1.0 + energy / TEMPORAL_NOISE_VAR).log2()
}

/// Reduced temporal-inconsistency index.
///
/// For each consecutive frame pair the frame differences of both videos are
/// tiled into 8x8 blocks per channel; each block contributes the absolute
/// difference of the two log-energies. Identical videos score exactly 0.
pub fn temporal_score<F: Scalar>(x: &SpectralCube<F>, y: &SpectralCube<F>) -> Result<f64> {
    x.same_shape(y)?;
    let (t, h, w, c) = x.dims();
    if t < 2 {
        return Err(Error::InvalidArgument(format!(
            "temporal score needs at least 2 frames, got {t}"
        )));
    }
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::Shape("empty cube".into()));
    }
    let bh = TEMPORAL_BLOCK.min(h);
    let bw = TEMPORAL_BLOCK.min(w);
    let diff = |cube: &SpectralCube<F>, f: usize| -> Vec<f64> {
        cube.frame(f + 1)
            .iter()
            .zip(cube.frame(f))
            .map(|(a, b)| a.as_f64() - b.as_f64())
            .collect()
    };
    let (mut total, mut count) = (0.0, 0usize);
    for f in 0..t - 1 {
        let dx = diff(x, f);
        let dy = diff(y, f);
        for ch in 0..c {
            for br in 0..h / bh {
                for bc in 0..w / bw {
                    let ex = block_log_energy(&dx, w, c, ch, br * bh, bc * bw, bh, bw);
                    let ey = block_log_energy(&dy, w, c, ch, br * bh, bc * bw, bh, bw);
                    total += (ex - ey).abs();
                    count += 1;
                }
            }
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cube::default_wavelengths;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cube(dims: [usize; 4], seed: u64) -> SpectralCube<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SpectralCube::from_fn(dims, default_wavelengths(dims[3]), |_| rng.random::<f64>()).unwrap()
    }

    #[test]
    fn psnr_identity_and_offset() {
        let x = random_cube([2, 4, 4, 3], 1).values().map(|v| 0.9 * v);
        let x = SpectralCube::new(x, default_wavelengths(3)).unwrap();
        assert_eq!(psnr(&x, &x).unwrap(), 100.0);
        let y = x.with_values(x.values().map(|v| v + 0.1)).unwrap();
        assert!((psnr(&y, &x).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn psnr_naive_loop() {
        let x = random_cube([2, 4, 4, 3], 2);
        let y = random_cube([2, 4, 4, 3], 3);
        let mut acc = 0.0;
        for t in 0..2 {
            let mut se = 0.0;
            for h in 0..4 {
                for w in 0..4 {
                    for c in 0..3 {
                        se += (x.at(t, h, w, c) - y.at(t, h, w, c)).powi(2);
                    }
                }
            }
            acc += 10.0 * (48.0 / se).log10();
        }
        assert!((psnr(&x, &y).unwrap() - acc / 2.0).abs() < 1e-10);
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let x = random_cube([2, 16, 16, 4], 4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..x.values().len()).map(|_| rng.random::<f64>() - 0.5).collect();
        let mut last = f64::INFINITY;
        for sigma in [0.01, 0.05, 0.2] {
            let mut v = x.values().clone();
            for (a, n) in v.data_mut().iter_mut().zip(&noise) {
                *a += sigma * n;
            }
            let p = psnr(&x.with_values(v).unwrap(), &x).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    // direct 2-D window sums, no separability
    fn ssim_oracle(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
        let r = 5.0;
        let mut g = [[0.0; 11]; 11];
        let mut s = 0.0;
        for i in 0..11 {
            for j in 0..11 {
                let d2 = (i as f64 - r).powi(2) + (j as f64 - r).powi(2);
                g[i][j] = (-d2 / (2.0 * 1.5 * 1.5)).exp();
                s += g[i][j];
            }
        }
        let (c1, c2) = (0.0001, 0.0009);
        let mut total = 0.0;
        let mut n = 0.0;
        for r0 in 0..=h - 11 {
            for c0 in 0..=w - 11 {
                let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..11 {
                    for j in 0..11 {
                        let wgt = g[i][j] / s;
                        let p = a[(r0 + i) * w + c0 + j];
                        let q = b[(r0 + i) * w + c0 + j];
                        ma += wgt * p;
                        mb += wgt * q;
                        saa += wgt * p * p;
                        sbb += wgt * q * q;
                        sab += wgt * p * q;
                    }
                }
                let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
                total += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                n += 1.0;
            }
        }
        total / n
    }

    #[test]
    fn ssim_identity_inverse_and_oracle() {
        let x = random_cube([1, 16, 16, 1], 6);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let inv = x.with_values(x.values().map(|v| 1.0 - v)).unwrap();
        assert!(ssim(&x, &inv).unwrap() < 0.0);
        let y = random_cube([1, 16, 16, 1], 7);
        let oracle = ssim_oracle(x.values().data(), y.values().data(), 16, 16);
        assert!((ssim(&x, &y).unwrap() - oracle).abs() < 1e-8);
    }

    #[test]
    fn ssim_small_frames_rejected() {
        let x = random_cube([1, 10, 16, 1], 6);
        assert!(ssim(&x, &x).is_err());
    }

    #[test]
    fn sam_cases() {
        let x = random_cube([2, 4, 4, 8], 8);
        let y = x.with_values(x.values().map(|v| 2.5 * v)).unwrap();
        assert!(sam(&x, &y).unwrap().abs() < 1e-12);

        let e1 = SpectralCube::from_fn([1, 1, 1, 3], default_wavelengths(3), |i| (i[3] == 0) as u8 as f64).unwrap();
        let e2 = SpectralCube::from_fn([1, 1, 1, 3], default_wavelengths(3), |i| (i[3] == 1) as u8 as f64).unwrap();
        assert!((sam(&e1, &e2).unwrap() - 90.0).abs() < 1e-12);

        let zero = SpectralCube::<f64>::zeros(1, 2, 2, default_wavelengths(3)).unwrap();
        assert!(sam(&zero, &zero).is_err());
    }

    #[test]
    fn sam_naive_loop() {
        let x = random_cube([1, 4, 4, 8], 9);
        let y = random_cube([1, 4, 4, 8], 10);
        let mut acc = 0.0;
        for h in 0..4 {
            for w in 0..4 {
                let (mut d, mut na, mut nb) = (0.0, 0.0, 0.0);
                for c in 0..8 {
                    d += x.at(0, h, w, c) * y.at(0, h, w, c);
                    na += x.at(0, h, w, c).powi(2);
                    nb += y.at(0, h, w, c).powi(2);
                }
                acc += (d / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0).acos();
            }
        }
        let expect = acc / 16.0 * 180.0 / std::f64::consts::PI;
        assert!((sam(&x, &y).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn temporal_identity_and_shuffle() {
        let x = random_cube([4, 16, 16, 2], 11);
        assert_eq!(temporal_score(&x, &x).unwrap(), 0.0);
        let (t, h, w, c) = x.dims();
        let order = [2usize, 0, 3, 1];
        let shuffled = SpectralCube::from_fn([t, h, w, c], default_wavelengths(c), |i| {
            x.at(order[i[0]], i[1], i[2], i[3])
        })
        .unwrap();
        // smooth in time so that shuffling changes frame-difference energy
        let smooth = SpectralCube::from_fn([t, h, w, c], default_wavelengths(c), |i| {
            0.5 + 0.05 * i[0] as f64 * x.at(0, i[1], i[2], i[3])
        })
        .unwrap();
        let smooth_shuf = SpectralCube::from_fn([t, h, w, c], default_wavelengths(c), |i| {
            smooth.at(order[i[0]], i[1], i[2], i[3])
        })
        .unwrap();
        assert!(temporal_score(&smooth, &smooth_shuf).unwrap() > 0.0);
        assert!(temporal_score(&x, &shuffled).unwrap() > 0.0);
        let single = random_cube([1, 8, 8, 1], 1);
        assert!(temporal_score(&single, &single).is_err());
    }

    #[test]
    fn temporal_naive_loop() {
        let x = random_cube([3, 16, 8, 2], 12);
        let y = random_cube([3, 16, 8, 2], 13);
        let mut total = 0.0;
        let mut n = 0.0;
        for t in 0..2 {
            for c in 0..2 {
                for br in 0..2 {
                    for bc in 0..1 {
                        let mut ex = 0.0;
                        let mut ey = 0.0;
                        for r in 0..8 {
                            for col in 0..8 {
                                let (hh, ww) = (br * 8 + r, bc * 8 + col);
                                let dx = 255.0 * (x.at(t + 1, hh, ww, c) - x.at(t, hh, ww, c));
                                let dy = 255.0 * (y.at(t + 1, hh, ww, c) - y.at(t, hh, ww, c));
                                ex += dx * dx;
                                ey += dy * dy;
                            }
                        }
                        let lx = (1.0 + ex / 64.0 / 0.1).log2();
                        let ly = (1.0 + ey / 64.0 / 0.1).log2();
                        total += (lx - ly).abs();
                        n += 1.0;
                    }
                }
            }
        }
        assert!((temporal_score(&x, &y).unwrap() - total / n).abs() < 1e-10);
    }

    #[test]
    fn report_identity() {
        let x = random_cube([3, 12, 12, 4], 14);
        let r = evaluate(&x, &x).unwrap();
        assert_eq!(r.psnr_db, 100.0);
        assert_eq!(r.ssim, 1.0);
        assert!(r.sam_deg.abs() < 1e-12);
        assert_eq!(r.temporal_score, Some(0.0));
    }
}
