//! Multiply-accumulate accounting for cross-domain propagated attention.
//!
//! Counted: the four `C x C` channel maps (Q, K, V and the output map), the
//! `QK^T` and `AV` products of the bridged spatial stage and of the temporal
//! stage. Not counted: pooling, softmax, the depthwise positional conv.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use specvid_core::{Result, Tensor};

use crate::cdpa::{cdpa, CdpaOrdering};
use crate::config::AttentionConfig;
use crate::weights::{AttentionWeights, Init};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlopReport {
    pub projection_macs: u64,
    pub bridged_attention_macs: u64,
    pub temporal_attention_macs: u64,
    pub total_macs: u64,
}

impl FlopReport {
    pub fn new(projection: u64, bridged: u64, temporal: u64) -> Self {
        FlopReport {
            projection_macs: projection,
            bridged_attention_macs: bridged,
            temporal_attention_macs: temporal,
            total_macs: projection + bridged + temporal,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.total_macs == self.projection_macs + self.bridged_attention_macs + self.temporal_attention_macs
    }
}

impl std::ops::Add for FlopReport {
    type Output = FlopReport;

    fn add(self, o: FlopReport) -> FlopReport {
        FlopReport::new(
            self.projection_macs + o.projection_macs,
            self.bridged_attention_macs + o.bridged_attention_macs,
            self.temporal_attention_macs + o.temporal_attention_macs,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacKind {
    Projection,
    BridgedAttention,
    TemporalAttention,
}

/// Thread-safe tally. Kernels accumulate locally and add once per work item.
#[derive(Debug, Default)]
pub struct MacCounter {
    projection: AtomicU64,
    bridged: AtomicU64,
    temporal: AtomicU64,
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, kind: MacKind, macs: u64) {
        let slot = match kind {
            MacKind::Projection => &self.projection,
            MacKind::BridgedAttention => &self.bridged,
            MacKind::TemporalAttention => &self.temporal,
        };
        slot.fetch_add(macs, Ordering::Relaxed);
    }

    pub fn report(&self) -> FlopReport {
        FlopReport::new(
            self.projection.load(Ordering::Relaxed),
            self.bridged.load(Ordering::Relaxed),
            self.temporal.load(Ordering::Relaxed),
        )
    }
}

#[inline]
pub(crate) fn tally(counter: Option<&MacCounter>, kind: MacKind, macs: u64) {
    if let Some(c) = counter {
        c.add(kind, macs);
    }
}

fn thw(config: &AttentionConfig) -> u64 {
    (config.frames * config.height * config.width) as u64
}

/// Closed-form cost `4THWC^2 + 4THW N_B C + 2T^2 HWC`.
pub fn flops_cdpa(config: &AttentionConfig) -> FlopReport {
    let (t, c, nb) = (config.frames as u64, config.channels as u64, config.n_bridged as u64);
    let thw = thw(config);
    FlopReport::new(4 * thw * c * c, 4 * thw * nb * c, 2 * t * thw * c)
}

/// Same layer with plain window attention in place of the bridged stage.
pub fn window_attention_reference(config: &AttentionConfig) -> FlopReport {
    let (t, c, n) = (config.frames as u64, config.channels as u64, config.window_tokens() as u64);
    let thw = thw(config);
    FlopReport::new(4 * thw * c * c, 2 * thw * n * c, 2 * t * thw * c)
}

/// Total MACs of the plain window-attention layer.
pub fn flops_window_attention_reference(config: &AttentionConfig) -> u64 {
    window_attention_reference(config).total_macs
}

/// Runs the default-ordering layer once on seeded inputs with a counter
/// attached and returns what the kernels tallied.
pub fn instrumented_cdpa(config: &AttentionConfig, seed: u64) -> Result<FlopReport> {
    config.validate()?;
    let mut init = Init::new(seed);
    let weights: AttentionWeights<f64> = AttentionWeights::init(config.channels, config.heads, &mut init);
    let x: Tensor<f64> = init.uniform(&[config.frames, config.height, config.width, config.channels], 1);
    let counter = MacCounter::new();
    cdpa(&x, &weights, config, CdpaOrdering::SpatialTemporalPropagated, Some(&counter))?;
    Ok(counter.report())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Reduces,
    BreakEven,
    Exceeds,
}

impl Verdict {
    pub fn of(config: &AttentionConfig) -> Self {
        let (bridged, plain) = (flops_cdpa(config).total_macs, flops_window_attention_reference(config));
        match bridged.cmp(&plain) {
            std::cmp::Ordering::Less => Verdict::Reduces,
            std::cmp::Ordering::Equal => Verdict::BreakEven,
            std::cmp::Ordering::Greater => Verdict::Exceeds,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Verdict::Reduces => "reduces",
            Verdict::BreakEven => "break-even",
            Verdict::Exceeds => "exceeds",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
