//! Mask-guided degradation perception front end.
//!
//! `Phi` is the per-channel mask volume seen by the scene, `Phi_s` its
//! encoding on the sensor grid and `Phi_p` the sensor-grid volume brought
//! back to `H x W x C` (per-channel crop for single-disperser systems,
//! replication for dual-disperser ones). The measurement is expanded the
//! same way.

use specvid_core::optics::{shift_mask, OpticalPath, SystemConfig};
use specvid_core::{Error, MeasurementSequence, Result, Scalar, Tensor};

use crate::ops::{concat_channels, linear, sigmoid};
use crate::weights::MgdpWeights;

/// Column of sensor pixel feeding `(w, c)` in the expanded layout.
#[inline]
fn sensor_column<F: Scalar>(config: &SystemConfig<F>, w: usize, c: usize) -> usize {
    match config.path() {
        OpticalPath::SingleDisperser => w + config.dispersion.sensor_offset(c, config.channels()),
        OpticalPath::DualDisperser => w,
    }
}

/// `Phi`, `H x W x C`.
pub fn mask_volume<F: Scalar>(config: &SystemConfig<F>) -> Tensor<F> {
    let c = config.channels();
    match config.path() {
        OpticalPath::SingleDisperser => {
            Tensor::from_fn(&[config.height(), config.width(), c], |i| config.mask.at(i[0], i[1]))
        }
        OpticalPath::DualDisperser => shift_mask(&config.mask, &config.dispersion, c),
    }
}

/// `Phi_s`, `H x W'`: the sensor image of a unit scene.
pub fn compressed_mask<F: Scalar>(config: &SystemConfig<F>) -> Tensor<F> {
    let (h, w, c) = (config.height(), config.width(), config.channels());
    let wp = config.measurement_width();
    let phi = mask_volume(config);
    let mut out = Tensor::zeros(&[h, wp]);
    let data = out.data_mut();
    for row in 0..h {
        for col in 0..w {
            for ch in 0..c {
                data[row * wp + sensor_column(config, col, ch)] += phi.data()[(row * w + col) * c + ch];
            }
        }
    }
    out
}

/// Expands one `H x W'` sensor plane to `H x W x C`.
pub fn expand_plane<F: Scalar>(config: &SystemConfig<F>, plane: &[F]) -> Tensor<F> {
    let (h, w, c) = (config.height(), config.width(), config.channels());
    let wp = config.measurement_width();
    Tensor::from_fn(&[h, w, c], |i| plane[i[0] * wp + sensor_column(config, i[1], i[2])])
}

/// `Phi_p`, `H x W x C`.
pub fn projected_mask<F: Scalar>(config: &SystemConfig<F>) -> Tensor<F> {
    expand_plane(config, compressed_mask(config).data())
}

/// `F_m(Y)`, `T x H x W x C`.
pub fn expand_measurement<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
) -> Result<Tensor<F>> {
    if meas.height() != config.height() || meas.width_prime() != config.measurement_width() {
        return Err(Error::Shape(format!(
            "measurement {} x {} does not match sensor {} x {}",
            meas.height(),
            meas.width_prime(),
            config.height(),
            config.measurement_width()
        )));
    }
    let (h, w, c) = (config.height(), config.width(), config.channels());
    let mut data = Vec::with_capacity(meas.frames() * h * w * c);
    for t in 0..meas.frames() {
        data.extend_from_slice(expand_plane(config, meas.frame(t)).data());
    }
    Tensor::from_vec(&[meas.frames(), h, w, c], data)
}

/// `W_Phi = sigmoid(conv1x1(Phi - Phi_p))`, `H x W x C`.
pub fn degradation_weights<F: Scalar>(
    config: &SystemConfig<F>,
    weights: &MgdpWeights<F>,
) -> Result<Tensor<F>> {
    let diff = mask_volume(config).axpy(-F::one(), &projected_mask(config));
    let (z, _) = linear(&diff, &weights.diff_weight, Some(&weights.diff_bias))?;
    Ok(z.map(sigmoid))
}

/// `Concat(conv(W_Phi * F_m(Y)), F_m(Y))`, `T x H x W x 2C`.
pub fn mgdp<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
    weights: &MgdpWeights<F>,
) -> Result<Tensor<F>> {
    let c = config.channels();
    if weights.diff_weight.shape() != [c, c] || weights.feature_weight.shape() != [c, c] {
        return Err(Error::Shape(format!(
            "front-end weights are not sized for {c} channels"
        )));
    }
    let ym = expand_measurement(meas, config)?;
    let wphi = degradation_weights(config, weights)?;
    let plane = wphi.len();
    let mut weighted = ym.clone();
    for frame in weighted.data_mut().chunks_mut(plane.max(1)) {
        for (v, &g) in frame.iter_mut().zip(wphi.data()) {
            *v *= g;
        }
    }
    let (features, _) = linear(&weighted, &weights.feature_weight, Some(&weights.feature_bias))?;
    concat_channels(&features, &ym)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::Init;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use specvid_core::cube::default_wavelengths;
    use specvid_core::optics::{make_mask, Architecture, DispersionSpec};
    use specvid_core::CodedMask;

    fn system(arch: Architecture, h: usize, w: usize, c: usize, step: usize, ones: bool) -> SystemConfig<f64> {
        let mask = if ones {
            CodedMask::ones(arch.mask_kind(), h, w)
        } else {
            make_mask(arch.mask_kind(), h, w, 5, arch.default_density()).unwrap()
        };
        SystemConfig::new(arch, mask, DispersionSpec::new(step, 1).unwrap(), 0.0, default_wavelengths(c)).unwrap()
    }

    fn random_meas(t: usize, h: usize, wp: usize, seed: u64) -> MeasurementSequence<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        MeasurementSequence::new(Tensor::from_fn(&[t, h, wp], |_| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn open_mask_without_dispersion_weights_one_half() {
        for arch in Architecture::ALL {
            let cfg = system(arch, 6, 6, 4, 0, true);
            let w = MgdpWeights::init(4, &mut Init::new(1));
            assert!(degradation_weights(&cfg, &w).unwrap().data().iter().all(|&v| v == 0.5));
        }
    }

    #[test]
    fn output_has_twice_the_channels() {
        for arch in Architecture::ALL {
            let cfg = system(arch, 8, 8, 4, 1, false);
            let w = MgdpWeights::init(4, &mut Init::new(2));
            let y = random_meas(2, 8, cfg.measurement_width(), 3);
            let out = mgdp(&y, &cfg, &w).unwrap();
            assert_eq!(out.shape(), &[2, 8, 8, 8]);
        }
    }

    #[test]
    fn dual_disperser_projection_matches_loop() {
        let cfg = system(Architecture::DdCassi, 8, 8, 4, 1, false);
        let phi_p = projected_mask(&cfg);
        for h in 0..8 {
            for w in 0..8 {
                let mut s = 0.0;
                for c in 0..4i64 {
                    let src = w as i64 - c;
                    if src >= 0 {
                        s += cfg.mask.at(h, src as usize);
                    }
                }
                for c in 0..4 {
                    assert_eq!(phi_p.get(&[h, w, c]), s);
                }
            }
        }
    }

    #[test]
    fn single_disperser_crops_measurement_per_channel() {
        let cfg = system(Architecture::SdCassi, 4, 5, 3, 2, false);
        let y = random_meas(1, 4, cfg.measurement_width(), 4);
        let e = expand_measurement(&y, &cfg).unwrap();
        for h in 0..4 {
            for w in 0..5 {
                for c in 0..3 {
                    assert_eq!(e.get(&[0, h, w, c]), y.values().get(&[0, h, w + 2 * c]));
                }
            }
        }
    }

    #[test]
    fn compressed_mask_is_encoding_of_unit_scene() {
        for arch in Architecture::ALL {
            let cfg = system(arch, 6, 7, 3, 1, false);
            let ones = specvid_core::SpectralCube::from_fn([1, 6, 7, 3], default_wavelengths(3), |_| 1.0).unwrap();
            let y = specvid_core::optics::forward_noiseless(&ones, &cfg).unwrap();
            assert!(compressed_mask(&cfg).max_abs_diff(&y.values().clone().reshape(&[6, cfg.measurement_width()]).unwrap()) < 1e-14);
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let cfg = system(Architecture::SdCassi, 8, 8, 4, 1, false);
        let w = MgdpWeights::init(4, &mut Init::new(2));
        assert!(mgdp(&random_meas(1, 8, 8, 1), &cfg, &w).is_err());
    }
}
