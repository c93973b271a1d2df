//! Dense feature-map kernels on `T x H x W x C` tensors.
//!
//! Channel maps use the row-vector convention `y = x W (+ b)` with `W`
//! stored `[c_in, c_out]`. Depthwise and dense convolutions replicate the
//! nearest edge sample outside the map.

use rayon::prelude::*;
use specvid_core::{Error, Result, Scalar, Tensor};

/// Shape of a rank-4 feature map.
pub fn dims4<F: Scalar>(x: &Tensor<F>) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [t, h, w, c] => Ok((t, h, w, c)),
        ref s => Err(Error::Shape(format!("expected a T x H x W x C map, got {s:?}"))),
    }
}

fn expect_shape<F: Scalar>(x: &Tensor<F>, shape: &[usize], what: &str) -> Result<()> {
    if x.shape() != shape {
        return Err(Error::Shape(format!(
            "{what}: expected {shape:?}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

#[inline]
fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

/// Applies a channel map to every position of a tensor whose last axis is
/// `c_in`. Returns the result and the number of multiply-accumulates.
pub fn linear<F: Scalar>(
    x: &Tensor<F>,
    w: &Tensor<F>,
    bias: Option<&Tensor<F>>,
) -> Result<(Tensor<F>, u64)> {
    let (cin, cout) = match *w.shape() {
        [a, b] => (a, b),
        ref s => return Err(Error::Shape(format!("channel map must be rank 2, got {s:?}"))),
    };
    let shape = x.shape();
    if shape.last() != Some(&cin) {
        return Err(Error::Shape(format!(
            "channel map expects {cin} input channels, tensor has shape {shape:?}"
        )));
    }
    if let Some(b) = bias {
        expect_shape(b, &[cout], "bias")?;
    }
    let rows = x.len() / cin.max(1);
    let mut out_shape = shape.to_vec();
    *out_shape.last_mut().unwrap() = cout;
    let mut out = Tensor::zeros(&out_shape);
    if rows == 0 || cout == 0 {
        return Ok((out, 0));
    }
    let wd = w.data();
    out.data_mut()
        .par_chunks_mut(cout)
        .zip(x.data().par_chunks(cin))
        .for_each(|(o, xi)| {
            if let Some(b) = bias {
                o.copy_from_slice(b.data());
            }
            for (i, &xv) in xi.iter().enumerate() {
                let row = &wd[i * cout..(i + 1) * cout];
                for (oj, &wj) in o.iter_mut().zip(row) {
                    *oj += xv * wj;
                }
            }
        });
    Ok((out, (rows * cin * cout) as u64))
}

/// Normalizes each position over channels, then applies `scale`/`shift`.
pub fn layer_norm<F: Scalar>(x: &Tensor<F>, scale: &Tensor<F>, shift: &Tensor<F>) -> Result<Tensor<F>> {
    let c = *x.shape().last().unwrap_or(&0);
    expect_shape(scale, &[c], "norm scale")?;
    expect_shape(shift, &[c], "norm shift")?;
    let mut out = x.clone();
    if c == 0 {
        return Ok(out);
    }
    let eps = F::lit(1e-5);
    let n = F::lit(c as f64);
    out.data_mut().par_chunks_mut(c).for_each(|v| {
        let mean = v.iter().copied().sum::<F>() / n;
        let var = v.iter().map(|&a| (a - mean) * (a - mean)).sum::<F>() / n;
        let inv = F::one() / (var + eps).sqrt();
        for ((a, &g), &b) in v.iter_mut().zip(scale.data()).zip(shift.data()) {
            *a = (*a - mean) * inv * g + b;
        }
    });
    Ok(out)
}

#[inline]
pub fn sigmoid<F: Scalar>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

/// `x * sigmoid(x)` elementwise.
pub fn self_gate<F: Scalar>(x: &Tensor<F>) -> Tensor<F> {
    x.map(|v| v * sigmoid(v))
}

/// Depthwise 3x3 convolution over H and W; `kernel` is `[C, 3, 3]`.
pub fn depthwise_spatial<F: Scalar>(x: &Tensor<F>, kernel: &Tensor<F>) -> Result<Tensor<F>> {
    let (_, h, w, c) = dims4(x)?;
    expect_shape(kernel, &[c, 3, 3], "spatial depthwise kernel")?;
    let mut out = Tensor::zeros(x.shape());
    let plane = h * w * c;
    if plane == 0 {
        return Ok(out);
    }
    let k = kernel.data();
    out.data_mut()
        .par_chunks_mut(plane)
        .zip(x.data().par_chunks(plane))
        .for_each(|(o, xf)| {
            for i in 0..h {
                for j in 0..w {
                    let dst = &mut o[(i * w + j) * c..(i * w + j + 1) * c];
                    for di in 0..3 {
                        let si = clamp_index(i as i64 + di as i64 - 1, h);
                        for dj in 0..3 {
                            let sj = clamp_index(j as i64 + dj as i64 - 1, w);
                            let src = &xf[(si * w + sj) * c..(si * w + sj + 1) * c];
                            for ch in 0..c {
                                dst[ch] += k[ch * 9 + di * 3 + dj] * src[ch];
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Depthwise 3-tap convolution along T; `kernel` is `[C, 3]`.
pub fn depthwise_temporal<F: Scalar>(x: &Tensor<F>, kernel: &Tensor<F>) -> Result<Tensor<F>> {
    let (t, h, w, c) = dims4(x)?;
    expect_shape(kernel, &[c, 3], "temporal depthwise kernel")?;
    let mut out = Tensor::zeros(x.shape());
    let plane = h * w * c;
    if plane == 0 {
        return Ok(out);
    }
    let k = kernel.data();
    let xd = x.data();
    out.data_mut()
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(f, o)| {
            for dt in 0..3 {
                let src = clamp_index(f as i64 + dt as i64 - 1, t);
                let xs = &xd[src * plane..(src + 1) * plane];
                for (p, (ov, &xv)) in o.iter_mut().zip(xs).enumerate() {
                    *ov += k[(p % c) * 3 + dt] * xv;
                }
            }
        });
    Ok(out)
}

/// Dense 3x3x3 convolution over (T, H, W); `kernel` is
/// `[c_out, c_in, 27]` with taps ordered (dt, dh, dw).
pub fn conv3d<F: Scalar>(x: &Tensor<F>, kernel: &Tensor<F>) -> Result<Tensor<F>> {
    let (t, h, w, cin) = dims4(x)?;
    let cout = match *kernel.shape() {
        [o, i, 27] if i == cin => o,
        ref s => {
            return Err(Error::Shape(format!(
                "conv3d kernel must be [c_out, {cin}, 27], got {s:?}"
            )))
        }
    };
    let mut out = Tensor::zeros(&[t, h, w, cout]);
    if out.is_empty() {
        return Ok(out);
    }
    let k = kernel.data();
    let xd = x.data();
    out.data_mut()
        .par_chunks_mut(cout)
        .enumerate()
        .for_each(|(pos, o)| {
            let (f, rem) = (pos / (h * w), pos % (h * w));
            let (i, j) = (rem / w, rem % w);
            for dt in 0..3 {
                let sf = clamp_index(f as i64 + dt as i64 - 1, t);
                for di in 0..3 {
                    let si = clamp_index(i as i64 + di as i64 - 1, h);
                    for dj in 0..3 {
                        let sj = clamp_index(j as i64 + dj as i64 - 1, w);
                        let tap = dt * 9 + di * 3 + dj;
                        let src = &xd[((sf * h + si) * w + sj) * cin..][..cin];
                        for (oc, ov) in o.iter_mut().enumerate() {
                            let base = (oc * cin) * 27 + tap;
                            for (ic, &xv) in src.iter().enumerate() {
                                *ov += k[base + ic * 27] * xv;
                            }
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Stride-2 2x2 convolution halving H and W; `kernel` is `[2, 2, c_in, c_out]`.
pub fn downsample<F: Scalar>(x: &Tensor<F>, kernel: &Tensor<F>) -> Result<Tensor<F>> {
    let (t, h, w, cin) = dims4(x)?;
    let cout = match *kernel.shape() {
        [2, 2, i, o] if i == cin => o,
        ref s => {
            return Err(Error::Shape(format!(
                "downsample kernel must be [2, 2, {cin}, c_out], got {s:?}"
            )))
        }
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "downsampling needs even height and width, got {h} x {w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Tensor::zeros(&[t, ho, wo, cout]);
    if out.is_empty() {
        return Ok(out);
    }
    let k = kernel.data();
    let xd = x.data();
    out.data_mut()
        .par_chunks_mut(cout)
        .enumerate()
        .for_each(|(pos, o)| {
            let (f, rem) = (pos / (ho * wo), pos % (ho * wo));
            let (i, j) = (rem / wo, rem % wo);
            for di in 0..2 {
                for dj in 0..2 {
                    let src = &xd[((f * h + 2 * i + di) * w + 2 * j + dj) * cin..][..cin];
                    let kk = &k[(di * 2 + dj) * cin * cout..][..cin * cout];
                    for (ic, &xv) in src.iter().enumerate() {
                        for (ov, &kv) in o.iter_mut().zip(&kk[ic * cout..(ic + 1) * cout]) {
                            *ov += xv * kv;
                        }
                    }
                }
            }
        });
    Ok(out)
}

/// Stride-2 2x2 transposed convolution doubling H and W; `kernel` is
/// `[2, 2, c_in, c_out]`.
pub fn upsample<F: Scalar>(x: &Tensor<F>, kernel: &Tensor<F>) -> Result<Tensor<F>> {
    let (t, h, w, cin) = dims4(x)?;
    let cout = match *kernel.shape() {
        [2, 2, i, o] if i == cin => o,
        ref s => {
            return Err(Error::Shape(format!(
                "upsample kernel must be [2, 2, {cin}, c_out], got {s:?}"
            )))
        }
    };
    let (ho, wo) = (2 * h, 2 * w);
    let mut out = Tensor::zeros(&[t, ho, wo, cout]);
    if out.is_empty() {
        return Ok(out);
    }
    let k = kernel.data();
    let xd = x.data();
    out.data_mut()
        .par_chunks_mut(cout)
        .enumerate()
        .for_each(|(pos, o)| {
            let (f, rem) = (pos / (ho * wo), pos % (ho * wo));
            let (i, j) = (rem / wo, rem % wo);
            let (di, dj) = (i % 2, j % 2);
            let src = &xd[((f * h + i / 2) * w + j / 2) * cin..][..cin];
            let kk = &k[(di * 2 + dj) * cin * cout..][..cin * cout];
            for (ic, &xv) in src.iter().enumerate() {
                for (ov, &kv) in o.iter_mut().zip(&kk[ic * cout..(ic + 1) * cout]) {
                    *ov += xv * kv;
                }
            }
        });
    Ok(out)
}

/// Concatenates two maps along channels.
pub fn concat_channels<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    let (t, h, w, ca) = dims4(a)?;
    let (tb, hb, wb, cb) = dims4(b)?;
    if (t, h, w) != (tb, hb, wb) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} with {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    for p in 0..t * h * w {
        data.extend_from_slice(&a.data()[p * ca..(p + 1) * ca]);
        data.extend_from_slice(&b.data()[p * cb..(p + 1) * cb]);
    }
    Tensor::from_vec(&[t, h, w, ca + cb], data)
}

/// Splits channels at `at` into `[.., at]` and `[at, ..]`.
pub fn split_channels<F: Scalar>(x: &Tensor<F>, at: usize) -> Result<(Tensor<F>, Tensor<F>)> {
    let (t, h, w, c) = dims4(x)?;
    if at > c {
        return Err(Error::Shape(format!("split point {at} beyond {c} channels")));
    }
    let (mut a, mut b) = (Vec::with_capacity(t * h * w * at), Vec::with_capacity(t * h * w * (c - at)));
    for chunk in x.data().chunks(c.max(1)) {
        a.extend_from_slice(&chunk[..at]);
        b.extend_from_slice(&chunk[at..]);
    }
    Ok((
        Tensor::from_vec(&[t, h, w, at], a)?,
        Tensor::from_vec(&[t, h, w, c - at], b)?,
    ))
}

/// Elementwise sum of equally shaped tensors.
pub fn add<F: Scalar>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "cannot add {:?} and {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(a.axpy(F::one(), b))
}
