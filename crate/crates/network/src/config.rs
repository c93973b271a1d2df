use serde::{Deserialize, Serialize};
use specvid_core::{Error, Result};

use crate::window::bridged_grid;

/// Geometry of one cross-domain attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionConfig {
    pub channels: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub h_win: usize,
    pub w_win: usize,
    /// Bridged token count `N_B`.
    pub n_bridged: usize,
    pub heads: usize,
}

impl AttentionConfig {
    pub const DEFAULT_H_WIN: usize = 8;
    pub const DEFAULT_W_WIN: usize = 32;
    pub const DEFAULT_N_BRIDGED: usize = 64;

    /// 3 frames of 256 x 256 x 30 with 8 x 32 windows and 64 bridged tokens.
    pub fn full_scale() -> Self {
        AttentionConfig {
            channels: 30,
            frames: 3,
            height: 256,
            width: 256,
            h_win: Self::DEFAULT_H_WIN,
            w_win: Self::DEFAULT_W_WIN,
            n_bridged: Self::DEFAULT_N_BRIDGED,
            heads: 1,
        }
    }

    pub fn window_tokens(&self) -> usize {
        self.h_win * self.w_win
    }

    /// True when bridged attention is cheaper than plain window attention.
    pub fn reduces(&self) -> bool {
        2 * self.n_bridged < self.window_tokens()
    }

    /// Height and width after reflective padding to window multiples.
    pub fn padded(&self) -> (usize, usize) {
        (
            self.height.div_ceil(self.h_win) * self.h_win,
            self.width.div_ceil(self.w_win) * self.w_win,
        )
    }

    /// Checks everything except whether `n_bridged` can be pooled.
    pub fn validate_geometry(&self) -> Result<()> {
        if self.h_win == 0 || self.w_win == 0 {
            return Err(Error::Config("window sides must be positive".into()));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(Error::Config(format!(
                "{} heads do not divide {} channels",
                self.heads, self.channels
            )));
        }
        if self.n_bridged == 0 || self.n_bridged > self.window_tokens() {
            return Err(Error::Config(format!(
                "bridged token count {} must lie in 1..={}",
                self.n_bridged,
                self.window_tokens()
            )));
        }
        Ok(())
    }

    /// Full check for running the attention kernels.
    pub fn validate(&self) -> Result<()> {
        self.validate_geometry()?;
        bridged_grid(self.h_win, self.w_win, self.n_bridged).map(|_| ())
    }

    /// Same window and token settings for another feature-map geometry.
    pub fn at(&self, frames: usize, height: usize, width: usize, channels: usize) -> Self {
        AttentionConfig {
            frames,
            height,
            width,
            channels,
            ..*self
        }
    }
}
