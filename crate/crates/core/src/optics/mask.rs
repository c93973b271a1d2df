//! Coded-aperture pattern families.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cube::{CodedMask, MaskKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Generates a deterministic mask of the given family.
///
/// * `RandomBinary`: i.i.d. Bernoulli(`density`) open pixels.
/// * `SparseGrid`: single open pixels on a square lattice of pitch
///   `ceil(1 / sqrt(density))`, lattice phase drawn from the seed.
/// * `Notch`: fully open except `round((1 - density) H W)` closed pixels,
///   spread evenly over rows at random positions within each row.
pub fn make_mask<F: Scalar>(
    kind: MaskKind,
    height: usize,
    width: usize,
    seed: u64,
    density: f64,
) -> Result<CodedMask<F>> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidDensity(density));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "mask extent {height} x {width} must be positive"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = F::one();
    let mut t = Tensor::<F>::zeros(&[height, width]);
    match kind {
        MaskKind::RandomBinary => {
            for v in t.data_mut() {
                if rng.random::<f64>() < density {
                    *v = one;
                }
            }
        }
        MaskKind::SparseGrid => {
            let pitch = (1.0 / density.sqrt()).ceil().max(1.0) as usize;
            let oh = rng.random_range(0..pitch.min(height).max(1));
            let ow = rng.random_range(0..pitch.min(width).max(1));
            for h in (oh..height).step_by(pitch) {
                for w in (ow..width).step_by(pitch) {
                    t.data_mut()[h * width + w] = one;
                }
            }
        }
        MaskKind::Notch => {
            t.data_mut().fill(one);
            let total = ((1.0 - density) * (height * width) as f64).round() as usize;
            let base = total / height;
            let extra = total % height;
            // rows receiving one extra notch are chosen at random
            let bonus: Vec<bool> = {
                let mut b = vec![false; height];
                for i in sample(&mut rng, height, extra) {
                    b[i] = true;
                }
                b
            };
            for (h, &more) in bonus.iter().enumerate() {
                let count = (base + more as usize).min(width);
                for w in sample(&mut rng, width, count) {
                    t.data_mut()[h * width + w] = F::zero();
                }
            }
        }
    }
    CodedMask::new(kind, t)
}

/// Per-channel sheared mask volume `H x W x C`: channel `c` holds
/// `mask(h, w - shift(c))`, zero where the source column leaves the aperture.
pub fn shift_mask<F: Scalar>(
    mask: &CodedMask<F>,
    dispersion: &super::DispersionSpec,
    channels: usize,
) -> Tensor<F> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Tensor::zeros(&[h, w, channels]);
    let data = out.data_mut();
    for c in 0..channels {
        let s = dispersion.signed_shift(c);
        for row in 0..h {
            for col in 0..w {
                let src = col as i64 - s;
                if src >= 0 && (src as usize) < w {
                    data[(row * w + col) * channels + c] = mask.at(row, src as usize);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::DispersionSpec;

    #[test]
    fn random_binary_density_law_of_large_numbers() {
        let mut means = 0.0;
        for seed in 0..8 {
            let m = make_mask::<f64>(MaskKind::RandomBinary, 256, 256, seed, 0.5).unwrap();
            assert!(m.transmission().data().iter().all(|&v| v == 0.0 || v == 1.0));
            means += m.mean();
        }
        let mean = means / 8.0;
        assert!((0.48..=0.52).contains(&mean), "{mean}");
    }

    #[test]
    fn sparse_grid_sixteenth() {
        for seed in 0..5 {
            let m = make_mask::<f64>(MaskKind::SparseGrid, 16, 16, seed, 1.0 / 16.0).unwrap();
            let ones: Vec<(i64, i64)> = (0..16)
                .flat_map(|h| (0..16).map(move |w| (h, w)))
                .filter(|&(h, w)| m.at(h as usize, w as usize) == 1.0)
                .collect();
            assert_eq!(ones.len(), 16);
            for (i, a) in ones.iter().enumerate() {
                for b in &ones[i + 1..] {
                    let d = (a.0 - b.0).abs().max((a.1 - b.1).abs());
                    assert!(d >= 4);
                }
            }
        }
    }

    #[test]
    fn notch_fraction_and_runs() {
        for &(h, w) in &[(16, 16), (64, 48), (7, 300), (200, 5)] {
            let m = make_mask::<f64>(MaskKind::Notch, h, w, 11, 0.9).unwrap();
            let frac = m.mean();
            assert!((0.88..=0.92).contains(&frac), "{h}x{w}: {frac}");
            let zeros_per_row: Vec<usize> = (0..h)
                .map(|r| (0..w).filter(|&c| m.at(r, c) == 0.0).count())
                .collect();
            let lo = *zeros_per_row.iter().min().unwrap();
            let hi = *zeros_per_row.iter().max().unwrap();
            assert!(hi - lo <= 1);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = make_mask::<f64>(MaskKind::RandomBinary, 32, 32, 5, 0.5).unwrap();
        let b = make_mask::<f64>(MaskKind::RandomBinary, 32, 32, 5, 0.5).unwrap();
        let c = make_mask::<f64>(MaskKind::RandomBinary, 32, 32, 6, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_density() {
        for d in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                make_mask::<f64>(MaskKind::Notch, 4, 4, 0, d),
                Err(Error::InvalidDensity(_))
            ));
        }
    }

    #[test]
    fn shift_zero_step_replicates() {
        let m = make_mask::<f64>(MaskKind::RandomBinary, 5, 6, 1, 0.5).unwrap();
        let v = shift_mask(&m, &DispersionSpec::none(), 4);
        for h in 0..5 {
            for w in 0..6 {
                for c in 0..4 {
                    assert_eq!(v.get(&[h, w, c]), m.at(h, w));
                }
            }
        }
    }

    #[test]
    fn shift_one_pixel() {
        let t = Tensor::from_vec(&[1, 3], vec![0.2, 0.5, 0.7]).unwrap();
        let m = CodedMask::<f64>::new(MaskKind::Notch, t).unwrap();
        let v = shift_mask(&m, &DispersionSpec::new(1, 1).unwrap(), 2);
        let ch1: Vec<f64> = (0..3).map(|w| v.get(&[0, w, 1])).collect();
        assert_eq!(ch1, vec![0.0, 0.2, 0.5]);
        let ch0: Vec<f64> = (0..3).map(|w| v.get(&[0, w, 0])).collect();
        assert_eq!(ch0, vec![0.2, 0.5, 0.7]);
    }

    #[test]
    fn shift_step_two_zero_prefix() {
        let m = CodedMask::<f64>::ones(MaskKind::RandomBinary, 4, 256);
        let v = shift_mask(&m, &DispersionSpec::new(2, 1).unwrap(), 30);
        for h in 0..4 {
            for w in 0..256 {
                let expect = if w < 58 { 0.0 } else { 1.0 };
                assert_eq!(v.get(&[h, w, 29]), expect);
            }
        }
    }
}
