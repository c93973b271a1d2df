use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::tv::denoise_tv;
use crate::cube::{MeasurementSequence, SpectralCube};
use crate::error::{Error, Result};
use crate::metrics::psnr;
use crate::optics::{adjoint, forward_noiseless, mask_energy, SystemConfig};
use crate::scalar::Scalar;

/// Lower clamp on the per-pixel mask energy used as preconditioner.
pub const ENERGY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub iterations: usize,
    pub tv_weight: f64,
    pub tv_inner_iterations: usize,
    pub temporal_tv: bool,
    pub step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            iterations: 100,
            tv_weight: 0.01,
            tv_inner_iterations: 10,
            temporal_tv: false,
            step_size: 1.0,
        }
    }
}

impl SolverConfig {
    /// Video-level defaults: temporal TV on.
    pub fn video() -> Self {
        SolverConfig {
            temporal_tv: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be >= 1".into()));
        }
        if !(self.tv_weight >= 0.0) || !self.tv_weight.is_finite() {
            return Err(Error::Config(format!(
                "tv_weight must be finite and >= 0, got {}",
                self.tv_weight
            )));
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return Err(Error::Config(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: SolverConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `y ./ max(E, floor)` on the sensor grid.
fn precondition<F: Scalar>(
    residual: &mut MeasurementSequence<F>,
    energy: &[F],
) {
    let floor = F::lit(ENERGY_FLOOR);
    for frame in residual.values_mut().data_mut().chunks_mut(energy.len()) {
        for (v, &e) in frame.iter_mut().zip(energy) {
            *v /= e.max(floor);
        }
    }
}

/// Mask-energy normalized adjoint: `Psi^T (y ./ E)`.
pub fn back_project<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
) -> Result<SpectralCube<F>> {
    let energy = mask_energy(config);
    let mut y = meas.clone();
    precondition(&mut y, energy.data());
    adjoint(&y, config)
}

fn residual_norm<F: Scalar>(
    meas: &MeasurementSequence<F>,
    x: &SpectralCube<F>,
    config: &SystemConfig<F>,
) -> Result<(f64, MeasurementSequence<F>)> {
    let mut r = forward_noiseless(x, config)?;
    let mut norm = 0.0;
    for (ri, &yi) in r.values_mut().data_mut().iter_mut().zip(meas.values().data()) {
        *ri = yi - *ri;
        norm += ri.as_f64().powi(2);
    }
    Ok((norm.sqrt(), r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Reconstruction<F> {
    pub cube: SpectralCube<F>,
    /// Row 0 is the initializer, row `k` the iterate after step `k`.
    pub trace: Vec<TraceRow>,
}

impl<F> Reconstruction<F> {
    pub fn trace_csv(&self) -> String {
        let mut s = String::from("iteration,residual,psnr\n");
        for row in &self.trace {
            let p = row.psnr.map(|p| format!("{p:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.9e},{}", row.iteration, row.residual, p);
        }
        s
    }
}

fn clamp_unit<F: Scalar>(cube: &mut SpectralCube<F>) {
    for v in cube.values_mut().data_mut() {
        *v = v.max(F::zero()).min(F::one());
    }
}

/// Generalized alternating projection with a TV prior:
/// `x <- clip(denoise_tv(x + step * Psi^T ((y - Psi x) ./ E)))`, starting
/// from the plain adjoint `Psi^T y`.
pub fn gap_tv_traced<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
    solver: &SolverConfig,
    ground_truth: Option<&SpectralCube<F>>,
) -> Result<Reconstruction<F>> {
    solver.validate()?;
    if let Some(gt) = ground_truth {
        let (_, h, w, c) = gt.dims();
        if gt.frames() != meas.frames() || (h, w, c) != (config.height(), config.width(), config.channels()) {
            return Err(Error::Shape("ground truth does not match the system".into()));
        }
    }
    let energy = mask_energy(config);
    let step = F::lit(solver.step_size);
    let mut x = adjoint(meas, config)?;
    let mut trace = Vec::with_capacity(solver.iterations + 1);
    let record = |k: usize, x: &SpectralCube<F>, residual: f64| -> Result<TraceRow> {
        if !residual.is_finite() {
            return Err(Error::NonFinite(format!(
                "data residual is {residual} at iteration {k}"
            )));
        }
        let psnr = ground_truth.map(|gt| psnr(x, gt)).transpose()?;
        Ok(TraceRow {
            iteration: k,
            residual,
            psnr,
        })
    };
    let (r0, mut r) = residual_norm(meas, &x, config)?;
    trace.push(record(0, &x, r0)?);
    for k in 1..=solver.iterations {
        precondition(&mut r, energy.data());
        let correction = adjoint(&r, config)?;
        let stepped = x.values().axpy(step, correction.values());
        let mut next = denoise_tv(
            &x.with_values(stepped)?,
            solver.tv_weight,
            solver.tv_inner_iterations,
            solver.temporal_tv,
        );
        if !next.values().all_finite() {
            return Err(Error::NonFinite(format!("iterate became non-finite at iteration {k}")));
        }
        clamp_unit(&mut next);
        x = next;
        let (rk, rnext) = residual_norm(meas, &x, config)?;
        r = rnext;
        trace.push(record(k, &x, rk)?);
    }
    Ok(Reconstruction { cube: x, trace })
}

pub fn gap_tv<F: Scalar>(
    meas: &MeasurementSequence<F>,
    config: &SystemConfig<F>,
    solver: &SolverConfig,
) -> Result<SpectralCube<F>> {
    gap_tv_traced(meas, config, solver, None).map(|r| r.cube)
}
