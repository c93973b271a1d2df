//! Multi-domain feed-forward stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use specvid_core::{Error, Result, Scalar, Tensor};

use crate::ops::{
    add, concat_channels, conv3d, depthwise_spatial, depthwise_temporal, layer_norm, linear, self_gate,
    split_channels,
};
use crate::weights::{MdffnBranches, MdffnWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MdffnVariant {
    /// Dense 3x3x3 convolution on the expanded features.
    RegularConv3d,
    /// Spatial branch only.
    SpatialOnly,
    /// Temporal branch only.
    TemporalOnly,
    /// Spatial and temporal branches on separate channel heads.
    Full,
}

impl MdffnVariant {
    pub const ALL: [MdffnVariant; 4] = [
        MdffnVariant::RegularConv3d,
        MdffnVariant::SpatialOnly,
        MdffnVariant::TemporalOnly,
        MdffnVariant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MdffnVariant::RegularConv3d => "regular-conv3d",
            MdffnVariant::SpatialOnly => "spatial-only",
            MdffnVariant::TemporalOnly => "temporal-only",
            MdffnVariant::Full => "full",
        }
    }
}

impl fmt::Display for MdffnVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MdffnVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MdffnVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown feed-forward variant {s:?}")))
    }
}

/// Branch computation before the output projection, `T x H x W x 2C`.
pub fn mdffn_branches<F: Scalar>(normed: &Tensor<F>, weights: &MdffnWeights<F>) -> Result<Tensor<F>> {
    let c = weights.channels();
    match &weights.branches {
        MdffnBranches::Full {
            expand_spatial,
            expand_temporal,
            spatial,
            temporal,
        } => {
            let (a, b) = split_channels(normed, c / 2)?;
            let a = linear(&a, expand_spatial, None)?.0;
            let b = linear(&b, expand_temporal, None)?.0;
            let a = self_gate(&depthwise_spatial(&a, spatial)?);
            let b = self_gate(&depthwise_temporal(&b, temporal)?);
            concat_channels(&a, &b)
        }
        MdffnBranches::SpatialOnly { expand, spatial } => {
            let e = linear(normed, expand, None)?.0;
            Ok(self_gate(&depthwise_spatial(&e, spatial)?))
        }
        MdffnBranches::TemporalOnly { expand, temporal } => {
            let e = linear(normed, expand, None)?.0;
            Ok(self_gate(&depthwise_temporal(&e, temporal)?))
        }
        MdffnBranches::Conv3d { expand, kernel } => {
            let e = linear(normed, expand, None)?.0;
            Ok(self_gate(&conv3d(&e, kernel)?))
        }
    }
}

/// `x + project(branches(norm(x)))`.
pub fn mdffn<F: Scalar>(x: &Tensor<F>, weights: &MdffnWeights<F>) -> Result<Tensor<F>> {
    let c = weights.channels();
    if x.shape().len() != 4 || x.shape()[3] != c {
        return Err(Error::Shape(format!(
            "feed-forward weights expect {c} channels, input is {:?}",
            x.shape()
        )));
    }
    if weights.variant() == MdffnVariant::Full && c % 2 != 0 {
        return Err(Error::Shape(format!("two-branch split needs even channels, got {c}")));
    }
    let normed = layer_norm(x, &weights.norm_scale, &weights.norm_shift)?;
    let mixed = mdffn_branches(&normed, weights)?;
    let (out, _) = linear(&mixed, &weights.project, Some(&weights.project_bias))?;
    add(x, &out)
}
