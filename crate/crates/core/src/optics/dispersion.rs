use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear integer dispersion `sigma(c) = step * c` along the width axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispersionSpec {
    pub step: usize,
    /// +1 shears toward increasing column index, -1 toward decreasing.
    pub direction: i8,
}

impl Default for DispersionSpec {
    fn default() -> Self {
        DispersionSpec {
            step: 1,
            direction: 1,
        }
    }
}

impl DispersionSpec {
    pub fn new(step: usize, direction: i8) -> Result<Self> {
        if direction != 1 && direction != -1 {
            return Err(Error::InvalidArgument(format!(
                "dispersion direction must be +1 or -1, got {direction}"
            )));
        }
        Ok(DispersionSpec { step, direction })
    }

    pub fn none() -> Self {
        DispersionSpec {
            step: 0,
            direction: 1,
        }
    }

    /// Magnitude of the shift of channel `c`.
    #[inline]
    pub fn sigma(&self, c: usize) -> usize {
        self.step * c
    }

    /// Signed column shift of channel `c`.
    #[inline]
    pub fn signed_shift(&self, c: usize) -> i64 {
        self.direction as i64 * self.sigma(c) as i64
    }

    /// Extra sensor columns produced by shearing `channels` bands.
    pub fn extra_width(&self, channels: usize) -> usize {
        self.sigma(channels.saturating_sub(1))
    }

    /// Non-negative column offset of channel `c` on a sheared sensor of
    /// width `W + extra_width(channels)`.
    #[inline]
    pub fn sensor_offset(&self, c: usize, channels: usize) -> usize {
        if self.direction >= 0 {
            self.sigma(c)
        } else {
            self.extra_width(channels) - self.sigma(c)
        }
    }
}
