//! Non-overlapping window layout and bridged-token pooling.

use specvid_core::{Error, Result, Scalar, Tensor};

use crate::ops::dims4;

/// `(window, token)` position of pixel `(t, h, w)` in a `H x W` map.
#[inline]
pub fn window_index(
    t: usize,
    h: usize,
    w: usize,
    height: usize,
    width: usize,
    h_win: usize,
    w_win: usize,
) -> (usize, usize) {
    let (nh, nw) = (height / h_win, width / w_win);
    let window = (t * nh + h / h_win) * nw + w / w_win;
    let token = (h % h_win) * w_win + w % w_win;
    (window, token)
}

/// `T x H x W x C` into `(T * H/h_win * W/w_win) x (h_win * w_win) x C`.
pub fn window_partition<F: Scalar>(x: &Tensor<F>, h_win: usize, w_win: usize) -> Result<Tensor<F>> {
    let (t, h, w, c) = dims4(x)?;
    if h_win == 0 || w_win == 0 || h % h_win != 0 || w % w_win != 0 {
        return Err(Error::Shape(format!(
            "{h} x {w} map is not a multiple of the {h_win} x {w_win} window"
        )));
    }
    let n = h_win * w_win;
    let nw = t * (h / h_win) * (w / w_win);
    let mut out = vec![F::zero(); x.len()];
    let xd = x.data();
    for f in 0..t {
        for i in 0..h {
            for j in (0..w).step_by(w_win) {
                let (win, tok) = window_index(f, i, j, h, w, h_win, w_win);
                let src = ((f * h + i) * w + j) * c;
                let dst = (win * n + tok) * c;
                out[dst..dst + w_win * c].copy_from_slice(&xd[src..src + w_win * c]);
            }
        }
    }
    Tensor::from_vec(&[nw, n, c], out)
}

/// Inverse of [`window_partition`].
pub fn window_reverse<F: Scalar>(
    windows: &Tensor<F>,
    frames: usize,
    height: usize,
    width: usize,
    h_win: usize,
    w_win: usize,
) -> Result<Tensor<F>> {
    let c = match *windows.shape() {
        [nw, n, c]
            if h_win > 0
                && w_win > 0
                && height % h_win == 0
                && width % w_win == 0
                && n == h_win * w_win
                && nw == frames * (height / h_win) * (width / w_win) =>
        {
            c
        }
        ref s => {
            return Err(Error::Shape(format!(
                "windows {s:?} do not tile {frames} x {height} x {width} with {h_win} x {w_win}"
            )))
        }
    };
    let n = h_win * w_win;
    let mut out = vec![F::zero(); windows.len()];
    let wd = windows.data();
    for f in 0..frames {
        for i in 0..height {
            for j in (0..width).step_by(w_win) {
                let (win, tok) = window_index(f, i, j, height, width, h_win, w_win);
                let dst = ((f * height + i) * width + j) * c;
                let src = (win * n + tok) * c;
                out[dst..dst + w_win * c].copy_from_slice(&wd[src..src + w_win * c]);
            }
        }
    }
    Tensor::from_vec(&[frames, height, width, c], out)
}

/// Mirror index without edge repetition, periodic so any pad length works.
#[inline]
fn mirror(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let r = i % period;
    if r < n {
        r
    } else {
        period - r
    }
}

/// Extends H and W to `height x width` by mirror reflection at the far edges.
pub fn pad_reflect<F: Scalar>(x: &Tensor<F>, height: usize, width: usize) -> Result<Tensor<F>> {
    let (t, h, w, c) = dims4(x)?;
    if height < h || width < w || (h == 0 || w == 0) && (height > h || width > w) {
        return Err(Error::Shape(format!(
            "cannot pad {h} x {w} to {height} x {width}"
        )));
    }
    if (height, width) == (h, w) {
        return Ok(x.clone());
    }
    let xd = x.data();
    let mut out = Vec::with_capacity(t * height * width * c);
    for f in 0..t {
        for i in 0..height {
            let si = mirror(i, h);
            for j in 0..width {
                let sj = mirror(j, w);
                let src = ((f * h + si) * w + sj) * c;
                out.extend_from_slice(&xd[src..src + c]);
            }
        }
    }
    Tensor::from_vec(&[t, height, width, c], out)
}

/// Keeps the top-left `height x width` region.
pub fn crop<F: Scalar>(x: &Tensor<F>, height: usize, width: usize) -> Result<Tensor<F>> {
    let (t, h, w, c) = dims4(x)?;
    if height > h || width > w {
        return Err(Error::Shape(format!("cannot crop {h} x {w} to {height} x {width}")));
    }
    if (height, width) == (h, w) {
        return Ok(x.clone());
    }
    let xd = x.data();
    let mut out = Vec::with_capacity(t * height * width * c);
    for f in 0..t {
        for i in 0..height {
            let src = ((f * h + i) * w) * c;
            out.extend_from_slice(&xd[src..src + width * c]);
        }
    }
    Tensor::from_vec(&[t, height, width, c], out)
}

/// Pooled grid `r x s` with `r | h_win`, `s | w_win`, `r * s == n_bridged`,
/// choosing the factorization whose aspect is closest to the window's.
pub fn bridged_grid(h_win: usize, w_win: usize, n_bridged: usize) -> Result<(usize, usize)> {
    let target = (h_win as f64 / w_win as f64).ln();
    let mut best: Option<(f64, usize, usize)> = None;
    for r in (1..=h_win).rev().filter(|r| h_win % r == 0) {
        if n_bridged % r != 0 {
            continue;
        }
        let s = n_bridged / r;
        if s == 0 || w_win % s != 0 {
            continue;
        }
        let gap = ((r as f64 / s as f64).ln() - target).abs();
        if best.is_none_or(|(g, _, _)| gap < g - 1e-12) {
            best = Some((gap, r, s));
        }
    }
    best.map(|(_, r, s)| (r, s)).ok_or_else(|| {
        Error::Config(format!(
            "{n_bridged} bridged tokens cannot be pooled from a {h_win} x {w_win} window"
        ))
    })
}

/// Adaptive average pooling of every window's token grid to `N_B` tokens.
pub fn pool_bridged_tokens<F: Scalar>(
    q_windows: &Tensor<F>,
    h_win: usize,
    w_win: usize,
    n_bridged: usize,
) -> Result<Tensor<F>> {
    let (nw, n, c) = match *q_windows.shape() {
        [a, b, c] if b == h_win * w_win => (a, b, c),
        ref s => {
            return Err(Error::Shape(format!(
                "windows {s:?} do not hold {h_win} x {w_win} tokens"
            )))
        }
    };
    let (r, s) = bridged_grid(h_win, w_win, n_bridged)?;
    let mut out = Tensor::zeros(&[nw, n_bridged, c]);
    for (win, dst) in out.data_mut().chunks_mut(n_bridged * c.max(1)).enumerate().take(nw) {
        pool_window(&q_windows.data()[win * n * c..(win + 1) * n * c], w_win, c, (h_win / r, w_win / s), (r, s), dst);
    }
    Ok(out)
}

pub(crate) fn pool_window<F: Scalar>(
    tokens: &[F],
    w_win: usize,
    c: usize,
    (ph, pw): (usize, usize),
    (r, s): (usize, usize),
    dst: &mut [F],
) {
    let norm = F::one() / F::lit((ph * pw) as f64);
    for bi in 0..r {
        for bj in 0..s {
            let o = &mut dst[(bi * s + bj) * c..][..c];
            o.iter_mut().for_each(|v| *v = F::zero());
            for i in bi * ph..(bi + 1) * ph {
                for j in bj * pw..(bj + 1) * pw {
                    for (ov, &tv) in o.iter_mut().zip(&tokens[(i * w_win + j) * c..][..c]) {
                        *ov += tv;
                    }
                }
            }
            o.iter_mut().for_each(|v| *v *= norm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn single_window() {
        let x = random(&[1, 8, 32, 4], 1);
        let w = window_partition(&x, 8, 32).unwrap();
        assert_eq!(w.shape(), &[1, 256, 4]);
        assert_eq!(w.data(), x.data());
    }

    #[test]
    fn round_trip() {
        let x = random(&[3, 16, 64, 8], 2);
        let w = window_partition(&x, 8, 32).unwrap();
        assert_eq!(w.shape(), &[3 * 2 * 2, 256, 8]);
        assert_eq!(window_reverse(&w, 3, 16, 64, 8, 32).unwrap(), x);
    }

    #[test]
    fn closed_form_index_matches_enumeration() {
        let (t, h, w, hw, ww) = (2, 8, 8, 4, 2);
        let x = Tensor::from_fn(&[t, h, w, 1], |i| ((i[0] * h + i[1]) * w + i[2]) as f64);
        let win = window_partition(&x, hw, ww).unwrap();
        let mut seen = vec![false; t * h * w];
        for (flat, v) in win.data().iter().enumerate() {
            let (widx, tok) = (flat / (hw * ww), flat % (hw * ww));
            let id = *v as usize;
            let (f, i, j) = (id / (h * w), (id / w) % h, id % w);
            assert_eq!(window_index(f, i, j, h, w, hw, ww), (widx, tok));
            seen[id] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn non_divisible_rejected() {
        assert!(window_partition(&random(&[1, 6, 32, 1], 3), 8, 32).is_err());
    }

    #[test]
    fn reflect_then_crop() {
        let x = random(&[2, 5, 3, 2], 4);
        let p = pad_reflect(&x, 8, 32).unwrap();
        assert_eq!(p.shape(), &[2, 8, 32, 2]);
        assert_eq!(p.get(&[1, 5, 0, 1]), x.get(&[1, 3, 0, 1]));
        assert_eq!(p.get(&[0, 0, 3, 0]), x.get(&[0, 0, 1, 0]));
        assert_eq!(crop(&p, 5, 3).unwrap(), x);
        let one = random(&[1, 1, 1, 1], 5);
        assert!(pad_reflect(&one, 8, 8).unwrap().data().iter().all(|&v| v == one.data()[0]));
    }

    #[test]
    fn grid_choices() {
        assert_eq!(bridged_grid(8, 32, 64).unwrap(), (4, 16));
        assert_eq!(bridged_grid(8, 32, 16).unwrap(), (2, 8));
        assert_eq!(bridged_grid(8, 32, 128).unwrap(), (8, 16));
        assert_eq!(bridged_grid(8, 32, 256).unwrap(), (8, 32));
        assert_eq!(bridged_grid(8, 32, 8).unwrap(), (2, 4));
        assert!(bridged_grid(8, 32, 144).is_err());
    }

    #[test]
    fn pooling_constant_and_identity() {
        let c = Tensor::filled(&[3, 256, 2], 0.25);
        let p = pool_bridged_tokens(&c, 8, 32, 64).unwrap();
        assert!(p.data().iter().all(|&v| v == 0.25));
        let x = random(&[2, 256, 3], 6);
        assert_eq!(pool_bridged_tokens(&x, 8, 32, 256).unwrap(), x);
    }

    #[test]
    fn pooling_is_patch_mean() {
        let x = random(&[2, 256, 3], 7);
        let p = pool_bridged_tokens(&x, 8, 32, 64).unwrap();
        for win in 0..2 {
            for i in 0..4 {
                for j in 0..16 {
                    for ch in 0..3 {
                        let mut s = 0.0;
                        for (di, dj) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            s += x.get(&[win, (2 * i + di) * 32 + 2 * j + dj, ch]);
                        }
                        assert!((p.get(&[win, i * 16 + j, ch]) - s / 4.0).abs() < 1e-15);
                    }
                }
            }
        }
    }
}
