//! Forward-pass kernels of a propagation-guided spectral video
//! reconstruction transformer: mask-guided front end, bridged-token
//! cross-domain attention, multi-domain feed-forward blocks, the U-shaped
//! assembly, and an exact multiply-accumulate accountant.
//!
//! Weights are seeded, never trained.

pub mod attention;
pub mod cdpa;
pub mod config;
pub mod flops;
pub mod mdffn;
pub mod mgdp;
pub mod model;
pub mod ops;
pub mod weights;
pub mod window;

pub use attention::{scaled_attention, softmax_rows};
pub use cdpa::{bridged_spatial_attention, bridged_window_attention, cdpa, temporal_attention, CdpaOrdering};
pub use config::AttentionConfig;
pub use flops::{flops_cdpa, flops_window_attention_reference, instrumented_cdpa, FlopReport, MacCounter, MacKind, Verdict};
pub use mdffn::{mdffn, MdffnVariant};
pub use mgdp::mgdp;
pub use model::{pgsvrt_forward, NetworkConfig};
pub use weights::{load_bundle, save_bundle, AttentionWeights, MdffnWeights, NetworkWeights};
pub use window::{pool_bridged_tokens, window_partition, window_reverse};

pub type Network = NetworkWeights<f64>;
