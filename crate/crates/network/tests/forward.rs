use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specvid_core::cube::default_wavelengths;
use specvid_core::optics::{forward_noiseless, make_mask, Architecture, DispersionSpec, SystemConfig};
use specvid_core::synth::{synth_scene, SceneSpec};
use specvid_core::{MeasurementSequence, SpectralCube, Tensor};
use specvid_network::{pgsvrt_forward, CdpaOrdering, MdffnVariant, Network, NetworkConfig};

fn system(arch: Architecture, h: usize, w: usize, c: usize) -> SystemConfig<f64> {
    let mask = make_mask(arch.mask_kind(), h, w, 1, arch.default_density()).unwrap();
    SystemConfig::new(arch, mask, DispersionSpec::default(), 0.0, default_wavelengths(c)).unwrap()
}

fn scene_measurement(sys: &SystemConfig<f64>, t: usize, seed: u64) -> MeasurementSequence<f64> {
    let spec = SceneSpec::random(seed, t, sys.height(), sys.width(), sys.channels(), 3);
    let cube: SpectralCube<f64> = synth_scene(&spec).unwrap();
    forward_noiseless(&cube, sys).unwrap()
}

#[test]
fn full_scale_geometry_output_shape() {
    let sys = system(Architecture::DdCassi, 256, 256, 30);
    let y = scene_measurement(&sys, 3, 4);
    assert_eq!((y.frames(), y.height(), y.width_prime()), (3, 256, 256));
    let w = Network::init(&NetworkConfig::desk(30), 7).unwrap();
    let out = pgsvrt_forward(&y, &sys, &w, None).unwrap();
    assert_eq!(out.dims(), (3, 256, 256, 30));
    assert!(out.in_unit_range());
}

#[test]
fn full_scale_depth_on_small_geometry() {
    let sys = system(Architecture::SdCassi, 32, 32, 8);
    let y = scene_measurement(&sys, 3, 5);
    let w = Network::init(&NetworkConfig::full_scale(8), 3).unwrap();
    assert_eq!((w.encoder.len(), w.bottleneck.len(), w.decoder.len()), (4, 8, 8));
    let a = pgsvrt_forward(&y, &sys, &w, None).unwrap();
    assert_eq!(a.dims(), (3, 32, 32, 8));
    assert!(a.in_unit_range());
    assert_eq!(a, pgsvrt_forward(&y, &sys, &w, None).unwrap());
}

#[test]
fn desk_depth_is_deterministic_and_responsive() {
    let sys = system(Architecture::DdCassi, 32, 32, 8);
    let y = scene_measurement(&sys, 3, 6);
    let w = Network::init(&NetworkConfig::desk(8), 7).unwrap();
    let a = pgsvrt_forward(&y, &sys, &w, None).unwrap();
    assert!(a.values().all_finite() && a.in_unit_range());
    let again = pgsvrt_forward(&y, &sys, &Network::init(&NetworkConfig::desk(8), 7).unwrap(), None).unwrap();
    assert_eq!(a, again);

    let mut bumped = y.clone();
    let idx = bumped.values().offset(&[1, 16, 16]);
    bumped.values_mut().data_mut()[idx] += 1e-3;
    let b = pgsvrt_forward(&bumped, &sys, &w, None).unwrap();
    let diff = a.values().max_abs_diff(b.values());
    assert!(diff > 0.0, "network ignores its input");
    assert!(diff < 0.1, "response {diff} to a 1e-3 perturbation");
}

#[test]
fn every_ablation_switch_runs() {
    let sys = system(Architecture::Pmvis, 16, 16, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let y = MeasurementSequence::new(Tensor::from_fn(&[2, 16, sys.measurement_width()], |_| rng.random::<f64>())).unwrap();
    for ordering in CdpaOrdering::ALL {
        for mdffn in MdffnVariant::ALL {
            let cfg = NetworkConfig { ordering, mdffn, n_bridged: 16, ..NetworkConfig::desk(4) };
            let out = pgsvrt_forward(&y, &sys, &Network::init(&cfg, 2).unwrap(), None).unwrap();
            assert_eq!(out.dims(), (2, 16, 16, 4));
            assert!(out.in_unit_range());
        }
    }
}
