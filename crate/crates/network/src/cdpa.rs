//! Cross-domain propagated attention: bridged window attention over space
//! followed by per-pixel attention over time.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use specvid_core::{Error, Result, Scalar, Tensor};

use crate::attention::attend;
use crate::config::AttentionConfig;
use crate::flops::{tally, MacCounter, MacKind};
use crate::ops::{add, depthwise_spatial, dims4, linear};
use crate::weights::AttentionWeights;
use crate::window::{bridged_grid, crop, pad_reflect, pool_window, window_partition, window_reverse};

/// Order in which the two domains are visited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CdpaOrdering {
    Parallel,
    TemporalSpatial,
    TemporalSpatialPropagated,
    SpatialTemporal,
    #[default]
    SpatialTemporalPropagated,
}

impl CdpaOrdering {
    pub const ALL: [CdpaOrdering; 5] = [
        CdpaOrdering::Parallel,
        CdpaOrdering::TemporalSpatial,
        CdpaOrdering::TemporalSpatialPropagated,
        CdpaOrdering::SpatialTemporal,
        CdpaOrdering::SpatialTemporalPropagated,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CdpaOrdering::Parallel => "parallel",
            CdpaOrdering::TemporalSpatial => "t-s",
            CdpaOrdering::TemporalSpatialPropagated => "t-s-p",
            CdpaOrdering::SpatialTemporal => "s-t",
            CdpaOrdering::SpatialTemporalPropagated => "s-t-p",
        }
    }
}

impl fmt::Display for CdpaOrdering {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CdpaOrdering {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CdpaOrdering::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown attention ordering {s:?}")))
    }
}

fn same_shape<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "{what}: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn check_input<F: Scalar>(x: &Tensor<F>, config: &AttentionConfig) -> Result<()> {
    let (t, h, w, c) = dims4(x)?;
    if (t, h, w, c) != (config.frames, config.height, config.width, config.channels) {
        return Err(Error::Shape(format!(
            "input {:?} does not match attention geometry {} x {} x {} x {}",
            x.shape(),
            config.frames,
            config.height,
            config.width,
            config.channels
        )));
    }
    Ok(())
}

/// `A(Q_s, B_s, A(B_s, K_s, V_s, tau1), tau2)` on windowed tokens
/// `N_w x (h_win * w_win) x C`, with `B_s` pooled from `Q_s`.
#[allow(clippy::too_many_arguments)]
pub fn bridged_window_attention<F: Scalar>(
    q_s: &Tensor<F>,
    k_s: &Tensor<F>,
    v_s: &Tensor<F>,
    h_win: usize,
    w_win: usize,
    n_bridged: usize,
    heads: usize,
    (tau1, tau2): (F, F),
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    same_shape(q_s, k_s, "query/key windows")?;
    same_shape(q_s, v_s, "query/value windows")?;
    let (nw, n, c) = match *q_s.shape() {
        [a, b, c] if b == h_win * w_win => (a, b, c),
        ref s => {
            return Err(Error::Shape(format!(
                "windows {s:?} do not hold {h_win} x {w_win} tokens"
            )))
        }
    };
    if heads == 0 || c % heads != 0 {
        return Err(Error::Shape(format!("{heads} heads do not divide {c} channels")));
    }
    let (r, s) = bridged_grid(h_win, w_win, n_bridged)?;
    let mut out = Tensor::zeros(&[nw, n, c]);
    if out.is_empty() {
        return Ok(out);
    }
    let (qd, kd, vd) = (q_s.data(), k_s.data(), v_s.data());
    let macs: u64 = out
        .data_mut()
        .par_chunks_mut(n * c)
        .enumerate()
        .map(|(win, o)| {
            let range = win * n * c..(win + 1) * n * c;
            let (q, k, v) = (&qd[range.clone()], &kd[range.clone()], &vd[range]);
            let mut bridged = vec![F::zero(); n_bridged * c];
            pool_window(q, w_win, c, (h_win / r, w_win / s), (r, s), &mut bridged);
            let mut summary = vec![F::zero(); n_bridged * c];
            let inner = attend(&bridged, k, v, n_bridged, n, c, c, heads, tau1, &mut summary);
            let outer = attend(q, &bridged, &summary, n, n_bridged, c, c, heads, tau2, o);
            inner + outer
        })
        .sum();
    tally(counter, MacKind::BridgedAttention, macs);
    Ok(out)
}

/// Bridged window attention on full maps, then the depthwise positional
/// conv and the residual: `GConv(attn) + residual`.
pub fn bridged_spatial_attention<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    residual: &Tensor<F>,
    weights: &AttentionWeights<F>,
    config: &AttentionConfig,
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    config.validate()?;
    for x in [q, k, v, residual] {
        check_input(x, config)?;
    }
    let attn = spatial_attention_core(q, k, v, weights, config, counter)?;
    add(&depthwise_spatial(&attn, &weights.gconv)?, residual)
}

/// Attention path of [`bridged_spatial_attention`] without GConv or residual.
pub fn spatial_attention_core<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    weights: &AttentionWeights<F>,
    config: &AttentionConfig,
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    let (t, h, w, _) = dims4(q)?;
    let (hp, wp) = config.padded();
    let part = |x: &Tensor<F>| -> Result<Tensor<F>> {
        window_partition(&pad_reflect(x, hp, wp)?, config.h_win, config.w_win)
    };
    let windows = bridged_window_attention(
        &part(q)?,
        &part(k)?,
        &part(v)?,
        config.h_win,
        config.w_win,
        config.n_bridged,
        config.heads,
        (weights.tau(0), weights.tau(1)),
        counter,
    )?;
    crop(&window_reverse(&windows, t, hp, wp, config.h_win, config.w_win)?, h, w)
}

/// Per-pixel softmax attention across all frames,
/// `Y_t = A(Q_t, K_t, value_t, tau3)`.
pub fn temporal_attention<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    value: &Tensor<F>,
    weights: &AttentionWeights<F>,
    config: &AttentionConfig,
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    config.validate_geometry()?;
    for x in [q, k, value] {
        check_input(x, config)?;
    }
    let (t, h, w, c) = dims4(q)?;
    let hw = h * w;
    let tau = weights.tau(2);
    let (qd, kd, vd) = (q.data(), k.data(), value.data());
    let gather = |src: &[F], p: usize, buf: &mut Vec<F>| {
        buf.clear();
        for f in 0..t {
            buf.extend_from_slice(&src[(f * hw + p) * c..][..c]);
        }
    };
    let results: Vec<(Vec<F>, u64)> = (0..hw)
        .into_par_iter()
        .map(|p| {
            let (mut qp, mut kp, mut vp) = (Vec::new(), Vec::new(), Vec::new());
            gather(qd, p, &mut qp);
            gather(kd, p, &mut kp);
            gather(vd, p, &mut vp);
            let mut o = vec![F::zero(); t * c];
            let macs = attend(&qp, &kp, &vp, t, t, c, c, config.heads, tau, &mut o);
            (o, macs)
        })
        .collect();
    let mut out = Tensor::zeros(q.shape());
    let od = out.data_mut();
    let mut macs = 0;
    for (p, (o, m)) in results.into_iter().enumerate() {
        macs += m;
        for f in 0..t {
            od[(f * hw + p) * c..][..c].copy_from_slice(&o[f * c..(f + 1) * c]);
        }
    }
    tally(counter, MacKind::TemporalAttention, macs);
    Ok(out)
}

fn project<F: Scalar>(
    x: &Tensor<F>,
    maps: [&Tensor<F>; 3],
    counter: Option<&MacCounter>,
) -> Result<[Tensor<F>; 3]> {
    let run = |m: &Tensor<F>| -> Result<Tensor<F>> {
        let (y, macs) = linear(x, m, None)?;
        tally(counter, MacKind::Projection, macs);
        Ok(y)
    };
    Ok([run(maps[0])?, run(maps[1])?, run(maps[2])?])
}

/// One attention layer, ending with the output channel map `W_o`.
pub fn cdpa<F: Scalar>(
    x: &Tensor<F>,
    weights: &AttentionWeights<F>,
    config: &AttentionConfig,
    ordering: CdpaOrdering,
    counter: Option<&MacCounter>,
) -> Result<Tensor<F>> {
    config.validate()?;
    check_input(x, config)?;
    weights.validate(config.channels)?;
    let first = [&weights.w_q, &weights.w_k, &weights.w_v];
    let second = [&weights.w_q2, &weights.w_k2, &weights.w_v2];
    let [q, k, v] = project(x, first, counter)?;
    let spatial = |q: &Tensor<F>, k: &Tensor<F>, v: &Tensor<F>, res: &Tensor<F>| {
        bridged_spatial_attention(q, k, v, res, weights, config, counter)
    };
    let temporal =
        |q: &Tensor<F>, k: &Tensor<F>, v: &Tensor<F>| temporal_attention(q, k, v, weights, config, counter);
    let mixed = match ordering {
        CdpaOrdering::SpatialTemporalPropagated => {
            let ys = spatial(&q, &k, &v, x)?;
            temporal(&q, &k, &ys)?
        }
        CdpaOrdering::SpatialTemporal => {
            let ys = spatial(&q, &k, &v, x)?;
            let [q2, k2, v2] = project(&ys, second, counter)?;
            add(&temporal(&q2, &k2, &v2)?, &ys)?
        }
        CdpaOrdering::TemporalSpatialPropagated => {
            let yt = add(&temporal(&q, &k, &v)?, x)?;
            spatial(&q, &k, &yt, &yt)?
        }
        CdpaOrdering::TemporalSpatial => {
            let yt = add(&temporal(&q, &k, &v)?, x)?;
            let [q2, k2, v2] = project(&yt, second, counter)?;
            spatial(&q2, &k2, &v2, &yt)?
        }
        CdpaOrdering::Parallel => {
            let ys = spatial(&q, &k, &v, x)?;
            let [q2, k2, v2] = project(x, second, counter)?;
            add(&ys, &temporal(&q2, &k2, &v2)?)?
        }
    };
    let (out, macs) = linear(&mixed, &weights.w_o, None)?;
    tally(counter, MacKind::Projection, macs);
    Ok(out)
}
