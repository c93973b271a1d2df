//! U-shaped reconstruction network assembled from the front end and
//! attention/feed-forward blocks.

use serde::{Deserialize, Serialize};
use specvid_core::optics::SystemConfig;
use specvid_core::{Error, MeasurementSequence, Result, Scalar, SpectralCube, Tensor};

use crate::cdpa::{cdpa, CdpaOrdering};
use crate::config::AttentionConfig;
use crate::flops::MacCounter;
use crate::mdffn::{mdffn, MdffnVariant};
use crate::mgdp::{expand_measurement, mgdp, projected_mask};
use crate::ops::{add, concat_channels, dims4, downsample, layer_norm, linear, upsample};
use crate::weights::{BlockWeights, NetworkWeights};

/// Smallest `Phi_p` used when normalizing the expanded measurement.
pub const PROJECTION_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Spectral channels `C` of the reconstruction.
    pub channels: usize,
    /// Blocks per level: encoder, bottleneck, decoder.
    pub depth: [usize; 3],
    pub h_win: usize,
    pub w_win: usize,
    pub n_bridged: usize,
    pub heads: usize,
    #[serde(default)]
    pub ordering: CdpaOrdering,
    pub mdffn: MdffnVariant,
}

impl NetworkConfig {
    pub const FULL_DEPTH: [usize; 3] = [4, 8, 8];

    /// One block per level with 8 x 32 windows and 64 bridged tokens.
    pub fn desk(channels: usize) -> Self {
        NetworkConfig {
            channels,
            depth: [1, 1, 1],
            h_win: AttentionConfig::DEFAULT_H_WIN,
            w_win: AttentionConfig::DEFAULT_W_WIN,
            n_bridged: AttentionConfig::DEFAULT_N_BRIDGED,
            heads: 1,
            ordering: CdpaOrdering::default(),
            mdffn: MdffnVariant::Full,
        }
    }

    pub fn full_scale(channels: usize) -> Self {
        NetworkConfig {
            depth: Self::FULL_DEPTH,
            ..Self::desk(channels)
        }
    }

    /// Attention geometry of a level operating on `frames x height x width`
    /// maps with `channels` features.
    pub fn attention(&self, frames: usize, height: usize, width: usize, channels: usize) -> AttentionConfig {
        AttentionConfig {
            channels,
            frames,
            height,
            width,
            h_win: self.h_win,
            w_win: self.w_win,
            n_bridged: self.n_bridged,
            heads: self.heads,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("network needs at least one channel".into()));
        }
        if self.mdffn == MdffnVariant::Full && self.channels % 2 != 0 {
            return Err(Error::Config(format!(
                "the two-branch feed-forward needs even channels, got {}",
                self.channels
            )));
        }
        for c in [self.channels, 2 * self.channels] {
            self.attention(1, 1, 1, c).validate()?;
        }
        Ok(())
    }
}

fn run_block<F: Scalar>(
    x: &Tensor<F>,
    block: &BlockWeights<F>,
    config: &NetworkConfig,
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    let (t, h, w, c) = dims4(x)?;
    let att = config.attention(t, h, w, c);
    let normed = layer_norm(x, &block.norm_scale, &block.norm_shift)?;
    let y = add(x, &cdpa(&normed, &block.attention, &att, config.ordering, counter)?)?;
    mdffn(&y, &block.mdffn)
}

fn run_level<F: Scalar>(
    mut x: Tensor<F>,
    blocks: &[BlockWeights<F>],
    config: &NetworkConfig,
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    for b in blocks {
        x = run_block(&x, b, config, counter)?;
    }
    Ok(x)
}

fn check_weights<F: Scalar>(weights: &NetworkWeights<F>, channels: usize) -> Result<()> {
    let cfg = &weights.config;
    if cfg.channels != channels {
        return Err(Error::Config(format!(
            "network built for {} channels, system has {channels}",
            cfg.channels
        )));
    }
    let levels = [&weights.encoder, &weights.bottleneck, &weights.decoder];
    for (level, (blocks, &want)) in levels.iter().zip(&cfg.depth).enumerate() {
        if blocks.len() != want {
            return Err(Error::Config(format!(
                "level {level} has {} blocks, depth asks for {want}",
                blocks.len()
            )));
        }
    }
    Ok(())
}

/// Forward pass from a measurement sequence to a cube in `[0, 1]`.
///
/// The head predicts a correction to `F_m(Y) / Phi_p`.
pub fn pgsvrt_forward<F: Scalar>(
    meas: &MeasurementSequence<F>,
    system: &SystemConfig<F>,
    weights: &NetworkWeights<F>,
    counter: Option<&MacCounter>,
) -> Result<SpectralCube<F>> {
    check_weights(weights, system.channels())?;
    let cfg = &weights.config;
    let (h, w) = (system.height(), system.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "the network halves the resolution once, {h} x {w} is not even"
        )));
    }
    let features = mgdp(meas, system, &weights.mgdp)?;
    let x = linear(&features, &weights.embed, Some(&weights.embed_bias))?.0;
    let skip = run_level(x, &weights.encoder, cfg, counter)?;
    let low = downsample(&skip, &weights.down)?;
    let low = run_level(low, &weights.bottleneck, cfg, counter)?;
    let up = upsample(&low, &weights.up)?;
    let fused = linear(&concat_channels(&up, &skip)?, &weights.fuse, None)?.0;
    let dec = run_level(fused, &weights.decoder, cfg, counter)?;
    let residual = linear(&dec, &weights.head, Some(&weights.head_bias))?.0;

    let phi_p = projected_mask(system);
    let floor = F::lit(PROJECTION_FLOOR);
    let mut out = expand_measurement(meas, system)?;
    let plane = phi_p.len();
    for frame in out.data_mut().chunks_mut(plane.max(1)) {
        for (v, &p) in frame.iter_mut().zip(phi_p.data()) {
            *v /= p.max(floor);
        }
    }
    let out = add(&out, &residual)?.map(|v| v.max(F::zero()).min(F::one()));
    if !out.all_finite() {
        return Err(Error::NonFinite("network output".into()));
    }
    SpectralCube::new(out, system.wavelengths.clone())
}
