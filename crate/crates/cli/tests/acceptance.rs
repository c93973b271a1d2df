//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints exactly one PASS/FAIL line.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specvid_cli::cmd::compare::{compare_systems, comparison_csv, CompareOptions};
use specvid_cli::inputs::desk_scene;
use specvid_core::cube::default_wavelengths;
use specvid_core::metrics::{evaluate, psnr, sam};
use specvid_core::optics::{adjoint, forward_noiseless, make_mask, Architecture, DispersionSpec};
use specvid_core::solver::{back_project, gap_tv_traced, SolverConfig};
use specvid_core::synth::{draw_crop_step, synth_scene, SceneSpec};
use specvid_core::{Cube, Measurement, System, Tensor};
use specvid_network::weights::Init;
use specvid_network::{
    bridged_spatial_attention, cdpa, flops_cdpa, instrumented_cdpa, pgsvrt_forward, softmax_rows, temporal_attention,
    window_partition, window_reverse, AttentionConfig, AttentionWeights, CdpaOrdering, Network, NetworkConfig,
    Verdict,
};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn within(limit: Duration, started: Instant) -> Result<f64, String> {
    let s = started.elapsed().as_secs_f64();
    ensure!(started.elapsed() < limit, "took {s:.2} s, limit {} s", limit.as_secs());
    Ok(s)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

fn random_cube(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Cube {
    Cube::new(random_tensor(rng, &dims, 0.0, 1.0), default_wavelengths(dims[3])).unwrap()
}

fn system(arch: Architecture, h: usize, w: usize, c: usize, step: usize, seed: u64) -> System {
    let kind = arch.mask_kind();
    let mask = make_mask(kind, h, w, seed, arch.default_density()).unwrap();
    System::new(arch, mask, DispersionSpec::new(step, 1).unwrap(), 0.0, default_wavelengths(c)).unwrap()
}

/// Direct evaluation of both encoding sums, one frame at a time.
fn naive_forward(x: &Cube, sys: &System, step: usize) -> Vec<f64> {
    let (t, h, w, c) = x.dims();
    let wp = sys.measurement_width();
    let mut y = vec![0.0; t * h * wp];
    for f in 0..t {
        for row in 0..h {
            for col in 0..wp {
                let mut acc = 0.0;
                for ch in 0..c {
                    let s = step * ch;
                    match sys.architecture {
                        Architecture::SdCassi | Architecture::Pmvis => {
                            if col >= s && col - s < w {
                                acc += sys.mask.at(row, col - s) * x.at(f, row, col - s, ch);
                            }
                        }
                        Architecture::DdCassi | Architecture::Ndssi => {
                            if col >= s {
                                acc += sys.mask.at(row, col - s) * x.at(f, row, col, ch);
                            }
                        }
                    }
                }
                y[(f * h + row) * wp + col] = acc;
            }
        }
    }
    y
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_adj, mut worst_fwd) = (0.0f64, 0.0f64);
    for arch in [Architecture::SdCassi, Architecture::DdCassi] {
        for i in 0..100u64 {
            let step = 1 + (i % 2) as usize;
            let sys = system(arch, 8, 8, 4, step, i);
            let x = random_cube(&mut rng, [1, 8, 8, 4]);
            let y = Measurement::new(random_tensor(&mut rng, &[1, 8, sys.measurement_width()], -1.0, 1.0)).unwrap();
            let lhs = forward_noiseless(&x, &sys).unwrap().values().dot(y.values());
            let rhs = x.values().dot(adjoint(&y, &sys).unwrap().values());
            worst_adj = worst_adj.max((lhs - rhs).abs());
            let fwd = forward_noiseless(&x, &sys).unwrap();
            for (a, b) in fwd.values().data().iter().zip(naive_forward(&x, &sys, step)) {
                worst_fwd = worst_fwd.max((a - b).abs());
            }
        }
    }
    ensure!(worst_adj <= 1e-10, "adjoint identity error {worst_adj:e}");
    ensure!(worst_fwd <= 1e-12, "forward vs naive loop error {worst_fwd:e}");
    let s = within(Duration::from_secs(5), started)?;
    Ok(format!("200 instances, adjoint err {worst_adj:.1e}, naive err {worst_fwd:.1e}, {s:.2} s"))
}

fn criterion_2() -> Outcome {
    let mut checked = 0;
    let mut triples = vec![(256, 30, 1)];
    for w in [4, 17, 64] {
        for c in [1, 3, 16] {
            for step in [1, 2, 3] {
                triples.push((w, c, step));
            }
        }
    }
    for (w, c, step) in triples {
        let x = Cube::zeros(1, 2, w, default_wavelengths(c)).unwrap();
        for arch in Architecture::ALL {
            let sys = system(arch, 2, w, c, step, 0);
            let got = forward_noiseless(&x, &sys).unwrap().width_prime();
            let want = match arch {
                Architecture::SdCassi | Architecture::Pmvis => w + step * (c - 1),
                Architecture::DdCassi | Architecture::Ndssi => w,
            };
            ensure!(got == want, "{arch} (W={w}, C={c}, step={step}): width {got}, expected {want}");
            checked += 1;
        }
    }
    let sd = system(Architecture::SdCassi, 2, 256, 30, 1, 0).measurement_width();
    let dd = system(Architecture::DdCassi, 2, 256, 30, 1, 0).measurement_width();
    ensure!((sd, dd) == (285, 256), "(256, 30, 1): SD {sd}, DD {dd}");
    Ok(format!("{checked} layouts, (256, 30, 1) gives SD 285 / DD 256"))
}

fn criterion_3() -> Outcome {
    let configs = [
        AttentionConfig::full_scale(),
        AttentionConfig { channels: 8, frames: 2, height: 16, width: 64, h_win: 8, w_win: 32, n_bridged: 16, heads: 1 },
        AttentionConfig { channels: 12, frames: 4, height: 8, width: 32, h_win: 8, w_win: 32, n_bridged: 128, heads: 3 },
        AttentionConfig { channels: 6, frames: 1, height: 16, width: 16, h_win: 4, w_win: 8, n_bridged: 8, heads: 2 },
        AttentionConfig { channels: 16, frames: 3, height: 24, width: 64, h_win: 8, w_win: 32, n_bridged: 32, heads: 4 },
        AttentionConfig { channels: 4, frames: 5, height: 8, width: 8, h_win: 8, w_win: 8, n_bridged: 4, heads: 1 },
    ];
    for cfg in &configs {
        let (t, hw, c, nb) = (cfg.frames as u64, (cfg.height * cfg.width) as u64, cfg.channels as u64, cfg.n_bridged as u64);
        let closed = flops_cdpa(cfg);
        let want = (4 * t * hw * c * c, 4 * t * hw * nb * c, 2 * t * t * hw * c);
        let got = (closed.projection_macs, closed.bridged_attention_macs, closed.temporal_attention_macs);
        ensure!(got == want, "closed form {got:?} != {want:?} for {cfg:?}");
        let counted = instrumented_cdpa(cfg, 3).map_err(|e| e.to_string())?;
        ensure!(counted == closed, "instrumented {counted:?} != closed form {closed:?} for {cfg:?}");
    }
    let full = flops_cdpa(&AttentionConfig::full_scale());
    let terms = (full.projection_macs, full.bridged_attention_macs, full.temporal_attention_macs);
    ensure!(terms == (707_788_800, 1_509_949_440, 35_389_440), "full terms {terms:?}");

    let expect = [(16, Verdict::Reduces), (64, Verdict::Reduces), (128, Verdict::BreakEven), (144, Verdict::Exceeds)];
    for (nb, verdict) in expect {
        let cfg = AttentionConfig { n_bridged: nb, ..AttentionConfig::full_scale() };
        let got = Verdict::of(&cfg);
        ensure!(got == verdict, "N_B={nb}: {got}, expected {verdict}");
        ensure!(cfg.reduces() == (2 * nb < 256), "N_B={nb}: condition mismatch");
    }
    Ok(format!("{} configs exact, verdicts 16/64/128/144 = reduces/reduces/break-even/exceeds", configs.len()))
}

fn dense(q: &[Vec<f64>], k: &[Vec<f64>], v: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|qi| {
            let w: Vec<f64> = k.iter().map(|kj| (qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() / tau).exp()).collect();
            let z: f64 = w.iter().sum();
            (0..v[0].len()).map(|d| w.iter().zip(v).map(|(p, vj)| p / z * vj[d]).sum()).collect()
        })
        .collect()
}

/// Bridged tokens summarize keys and values, then every query attends to
/// them. Single head, windows 8 x 32, bridged grid 4 x 16 (2 x 2 pooling).
fn naive_bridged(q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>, tau: (f64, f64)) -> Tensor<f64> {
    let s = q.shape();
    let (t, h, w, c) = (s[0], s[1], s[2], s[3]);
    let mut out = Tensor::zeros(s);
    for f in 0..t {
        for wi in 0..h / 8 {
            for wj in 0..w / 32 {
                let gather = |x: &Tensor<f64>| -> Vec<Vec<f64>> {
                    (0..256).map(|n| (0..c).map(|ch| x.get(&[f, wi * 8 + n / 32, wj * 32 + n % 32, ch])).collect()).collect()
                };
                let (qw, kw, vw) = (gather(q), gather(k), gather(v));
                let bridged: Vec<Vec<f64>> = (0..64)
                    .map(|b| {
                        let (bi, bj) = (b / 16, b % 16);
                        (0..c)
                            .map(|ch| {
                                let cells = [(0, 0), (0, 1), (1, 0), (1, 1)];
                                cells.iter().map(|(di, dj)| qw[(2 * bi + di) * 32 + 2 * bj + dj][ch]).sum::<f64>() / 4.0
                            })
                            .collect()
                    })
                    .collect();
                let summary = dense(&bridged, &kw, &vw, tau.0);
                let res = dense(&qw, &bridged, &summary, tau.1);
                for (n, r) in res.iter().enumerate() {
                    for ch in 0..c {
                        out.set(&[f, wi * 8 + n / 32, wj * 32 + n % 32, ch], r[ch]);
                    }
                }
            }
        }
    }
    out
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_b = 0.0f64;
    for i in 0..20u64 {
        let (t, h, w, c) = (1 + (i % 3) as usize, 8 * (1 + (i % 2) as usize), 32 * (1 + (i / 2 % 2) as usize), [4, 6][(i % 2) as usize]);
        let cfg = AttentionConfig { channels: c, frames: t, height: h, width: w, h_win: 8, w_win: 32, n_bridged: 64, heads: 1 };
        let mut weights = AttentionWeights::init(c, 1, &mut Init::new(i));
        weights.temperatures = Tensor::from_vec(&[3], vec![rng.random_range(0.5..3.0), rng.random_range(0.5..3.0), 1.0]).unwrap();
        weights.gconv = Tensor::zeros(&[c, 3, 3]);
        for ch in 0..c {
            weights.gconv.set(&[ch, 1, 1], 1.0);
        }
        let shape = [t, h, w, c];
        let (q, k, v) = (random_tensor(&mut rng, &shape, -1.0, 1.0), random_tensor(&mut rng, &shape, -1.0, 1.0), random_tensor(&mut rng, &shape, -1.0, 1.0));
        let zero = Tensor::zeros(&shape);
        let got = bridged_spatial_attention(&q, &k, &v, &zero, &weights, &cfg, None).map_err(|e| e.to_string())?;
        worst_b = worst_b.max(got.max_abs_diff(&naive_bridged(&q, &k, &v, (weights.tau(0), weights.tau(1)))));
    }
    ensure!(worst_b <= 1e-10, "bridged spatial error {worst_b:e}");

    let mut worst_t = 0.0f64;
    for i in 0..20u64 {
        let (t, h, w, c) = (2 + (i % 3) as usize, 4, 3 + (i % 4) as usize, 5);
        let cfg = AttentionConfig { channels: c, frames: t, height: h, width: w, h_win: 8, w_win: 32, n_bridged: 64, heads: 1 };
        let mut weights = AttentionWeights::init(c, 1, &mut Init::new(100 + i));
        weights.temperatures = Tensor::from_vec(&[3], vec![1.0, 1.0, rng.random_range(0.3..3.0)]).unwrap();
        let shape = [t, h, w, c];
        let (q, k, y) = (random_tensor(&mut rng, &shape, -1.0, 1.0), random_tensor(&mut rng, &shape, -1.0, 1.0), random_tensor(&mut rng, &shape, -1.0, 1.0));
        let got = temporal_attention(&q, &k, &y, &weights, &cfg, None).map_err(|e| e.to_string())?;
        for row in 0..h {
            for col in 0..w {
                let pick = |x: &Tensor<f64>| -> Vec<Vec<f64>> { (0..t).map(|f| (0..c).map(|ch| x.get(&[f, row, col, ch])).collect()).collect() };
                let expect = dense(&pick(&q), &pick(&k), &pick(&y), weights.tau(2));
                for (f, e) in expect.iter().enumerate() {
                    for ch in 0..c {
                        worst_t = worst_t.max((got.get(&[f, row, col, ch]) - e[ch]).abs());
                    }
                }
            }
        }
    }
    ensure!(worst_t <= 1e-12, "temporal error {worst_t:e}");
    let s = within(Duration::from_secs(10), started)?;
    Ok(format!("20 + 20 instances, bridged err {worst_b:.1e}, temporal err {worst_t:.1e}, {s:.2} s"))
}

fn permute_frames(x: &Tensor<f64>, perm: &[usize]) -> Tensor<f64> {
    let frame = x.len() / x.shape()[0];
    let data: Vec<f64> = perm.iter().flat_map(|&p| x.data()[p * frame..(p + 1) * frame].iter().copied()).collect();
    Tensor::from_vec(x.shape(), data).unwrap()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let cols = rng.random_range(1..64);
        let mut s = random_tensor(&mut rng, &[4, cols], -300.0, 300.0).into_vec();
        softmax_rows(&mut s, cols);
        for row in s.chunks(cols) {
            let sum: f64 = row.iter().sum();
            ensure!((sum - 1.0).abs() <= 1e-12, "softmax row sums to {sum}");
        }
    }
    for (hw, ww) in [(8, 32), (4, 8), (1, 1), (2, 16)] {
        let x = random_tensor(&mut rng, &[2, hw * 2, ww * 3, 3], -1.0, 1.0);
        let win = window_partition(&x, hw, ww).map_err(|e| e.to_string())?;
        let back = window_reverse(&win, 2, hw * 2, ww * 3, hw, ww).map_err(|e| e.to_string())?;
        ensure!(back == x, "window round trip changed values for {hw} x {ww}");
    }

    let cfg = AttentionConfig { channels: 4, frames: 3, height: 8, width: 32, h_win: 8, w_win: 32, n_bridged: 16, heads: 2 };
    let weights = AttentionWeights::init(4, 2, &mut Init::new(5));
    let x = random_tensor(&mut rng, &[3, 8, 32, 4], -1.0, 1.0);
    for ordering in CdpaOrdering::ALL {
        let base = cdpa(&x, &weights, &cfg, ordering, None).map_err(|e| e.to_string())?;
        for perm in [[1, 2, 0], [2, 1, 0], [0, 2, 1]] {
            let moved = cdpa(&permute_frames(&x, &perm), &weights, &cfg, ordering, None).map_err(|e| e.to_string())?;
            let d = moved.max_abs_diff(&permute_frames(&base, &perm));
            ensure!(d <= 1e-12, "{ordering} not equivariant under {perm:?}: {d:e}");
        }
    }

    for (depth, dims) in [([1, 1, 1], [3, 16, 64, 8]), (NetworkConfig::FULL_DEPTH, [3, 16, 32, 8])] {
        let [t, h, w, c] = dims;
        let scene = random_cube(&mut rng, dims);
        let sys = system(Architecture::DdCassi, h, w, c, 1, 2);
        let meas = forward_noiseless(&scene, &sys).unwrap();
        let net_cfg = NetworkConfig { depth, ..NetworkConfig::desk(c) };
        let run = |seed| -> Result<Cube, String> {
            let net = Network::init(&net_cfg, seed).map_err(|e| e.to_string())?;
            pgsvrt_forward(&meas, &sys, &net, None).map_err(|e| e.to_string())
        };
        let (a, b) = (run(7)?, run(7)?);
        ensure!(a.dims() == (t, h, w, c), "depth {depth:?}: output {:?}", a.dims());
        ensure!(a.in_unit_range(), "depth {depth:?}: output leaves [0, 1]");
        ensure!(a == b, "depth {depth:?}: forward not deterministic");
    }
    Ok("softmax, window round trip, frame equivariance (5 orderings), forward at (1,1,1) and (4,8,8)".into())
}

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let cube: Cube = synth_scene(&SceneSpec::random(7, 3, 32, 32, 8, 4)).map_err(|e| e.to_string())?;
    let sys = system(Architecture::DdCassi, 32, 32, 8, 1, 0);
    let meas = forward_noiseless(&cube, &sys).unwrap();
    let bp = psnr(&back_project(&meas, &sys).unwrap(), &cube).unwrap();
    let rec = gap_tv_traced(&meas, &sys, &SolverConfig::default(), None).map_err(|e| e.to_string())?;
    let (first, last) = (rec.trace[0].residual, rec.trace.last().unwrap().residual);
    let gap = psnr(&rec.cube, &cube).unwrap();
    ensure!(rec.trace.len() == 101, "trace has {} rows", rec.trace.len());
    ensure!(last < first, "final residual {last:e} not below initial {first:e}");
    ensure!(gap - bp >= 3.0, "gap-tv {gap:.2} dB vs back-projection {bp:.2} dB");
    let s = within(Duration::from_secs(30), started)?;
    Ok(format!("residual {first:.3} -> {last:.3}, gap-tv {gap:.2} dB vs back-projection {bp:.2} dB, {s:.2} s"))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = Cube::new(random_tensor(&mut rng, &[3, 16, 16, 6], 0.0, 0.9), default_wavelengths(6)).unwrap();
    let id = evaluate(&x, &x).map_err(|e| e.to_string())?;
    ensure!(id.psnr_db == 100.0, "identity psnr {}", id.psnr_db);
    ensure!((id.ssim - 1.0).abs() <= 1e-12, "identity ssim {}", id.ssim);
    ensure!(id.sam_deg.abs() <= 1e-9, "identity sam {}", id.sam_deg);
    ensure!(id.temporal_score.is_some_and(|v| v.abs() <= 1e-12), "identity temporal {:?}", id.temporal_score);
    for alpha in [0.25, 1.0, 3.0] {
        let scaled = x.with_values(x.values().scale(alpha)).unwrap();
        let a = sam(&scaled, &x).unwrap();
        ensure!(a.abs() <= 1e-6, "sam(x, {alpha}x) = {a}");
    }
    let shifted = x.with_values(x.values().map(|v| v + 0.1)).unwrap();
    let p = psnr(&shifted, &x).unwrap();
    ensure!((p - 20.0).abs() <= 1e-9, "offset psnr {p}");

    let draws = 10_000;
    let mut crop_rng = ChaCha8Rng::seed_from_u64(2024);
    let zeros = (0..draws).filter(|_| draw_crop_step(&mut crop_rng, 2) == (0, 0)).count();
    let rate = zeros as f64 / draws as f64;
    ensure!((0.68..=0.72).contains(&rate), "zero-step rate {rate}");
    Ok(format!("identity (100, 1, 0, 0), offset psnr {p:.6} dB, zero-step rate {rate:.4}"))
}

fn baseline_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/baselines/desk_comparison.csv")
}

fn compare_tables(pinned: &str, fresh: &str) -> Result<(), String> {
    let rows = |s: &str| -> Vec<Vec<String>> { s.lines().map(|l| l.split(',').map(str::to_string).collect()).collect() };
    let (a, b) = (rows(pinned), rows(fresh));
    ensure!(a.len() == b.len(), "baseline has {} lines, run has {}", a.len(), b.len());
    for (ra, rb) in a.iter().zip(&b) {
        ensure!(ra.len() == rb.len() && ra[..2] == rb[..2], "row {ra:?} vs {rb:?}");
        for (va, vb) in ra[2..].iter().zip(&rb[2..]) {
            if let (Ok(x), Ok(y)) = (va.parse::<f64>(), vb.parse::<f64>()) {
                ensure!((x - y).abs() <= 1e-4, "{}: baseline {x} vs run {y}", ra[0]);
            } else {
                ensure!(va == vb, "{}: baseline {va} vs run {vb}", ra[0]);
            }
        }
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let started = Instant::now();
    let cube: Cube = synth_scene(&desk_scene()).map_err(|e| e.to_string())?;
    ensure!(cube.dims() == (3, 128, 128, 16), "desk scene is {:?}", cube.dims());
    let runs = compare_systems(&cube, &CompareOptions::default()).map_err(|e| e.to_string())?;
    ensure!(runs.len() == 4, "{} rows", runs.len());
    for r in &runs {
        ensure!(r.metrics.is_finite() && r.metrics.temporal_score.is_some(), "{}: {:?}", r.architecture, r.metrics);
    }
    let table = comparison_csv(&runs);
    let s = within(Duration::from_secs(300), started)?;
    let path = baseline_path();
    let note = if path.exists() {
        let pinned = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        compare_tables(&pinned, &table)?;
        "matches pinned baseline"
    } else {
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        std::fs::write(&path, &table).map_err(|e| e.to_string())?;
        "baseline recorded"
    };
    let dd = runs.iter().find(|r| r.architecture == Architecture::DdCassi).unwrap();
    Ok(format!("4 architectures finite, DD-CASSI {:.2} dB, {note}, {s:.1} s", dd.metrics.psnr_db))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("operator correctness", criterion_1),
        ("measurement geometry", criterion_2),
        ("attention cost exactness", criterion_3),
        ("attention oracle equivalence", criterion_4),
        ("structural invariants", criterion_5),
        ("solver behavior", criterion_6),
        ("metrics", criterion_7),
        ("end-to-end pipeline", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
