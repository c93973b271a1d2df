//! Model-based reconstruction: mask-energy back-projection and GAP-TV.

mod gap;
mod tv;

pub use gap::{
    back_project, gap_tv, gap_tv_traced, Reconstruction, SolverConfig, TraceRow, ENERGY_FLOOR,
};
pub use tv::{denoise_tv, total_variation};
