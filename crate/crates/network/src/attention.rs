//! Softmax attention `A(Q, K, V, tau) = softmax(Q K^T / tau) V`.

use specvid_core::{Error, Result, Scalar, Tensor};

/// In-place numerically stable softmax of each `cols`-wide row.
pub fn softmax_rows<F: Scalar>(scores: &mut [F], cols: usize) {
    if cols == 0 {
        return;
    }
    for row in scores.chunks_mut(cols) {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        let mut total = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        let inv = F::one() / total;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

/// Multi-head attention on flat row-major token blocks.
///
/// `q` is `n x c`, `k` is `m x c`, `v` is `m x e`; `c` and `e` are split
/// into `heads` equal slices and head `i` of the output only reads head `i`
/// of the inputs. Writes `n x e` into `out` and returns the MAC count of
/// the two matrix products.
#[allow(clippy::too_many_arguments)]
pub(crate) fn attend<F: Scalar>(
    q: &[F],
    k: &[F],
    v: &[F],
    n: usize,
    m: usize,
    c: usize,
    e: usize,
    heads: usize,
    tau: F,
    out: &mut [F],
) -> u64 {
    let (dq, dv) = (c / heads, e / heads);
    let inv_tau = F::one() / tau;
    let mut scores = vec![F::zero(); n * m];
    out.iter_mut().for_each(|o| *o = F::zero());
    for hd in 0..heads {
        for i in 0..n {
            let qi = &q[i * c + hd * dq..][..dq];
            for j in 0..m {
                let kj = &k[j * c + hd * dq..][..dq];
                let mut s = F::zero();
                for (a, b) in qi.iter().zip(kj) {
                    s += *a * *b;
                }
                scores[i * m + j] = s * inv_tau;
            }
        }
        softmax_rows(&mut scores, m);
        for i in 0..n {
            let oi = &mut out[i * e + hd * dv..][..dv];
            for j in 0..m {
                let p = scores[i * m + j];
                for (o, &vv) in oi.iter_mut().zip(&v[j * e + hd * dv..][..dv]) {
                    *o += p * vv;
                }
            }
        }
    }
    (n * m * c + n * m * e) as u64
}

fn rows_cols<F: Scalar>(x: &Tensor<F>, what: &str) -> Result<(usize, usize)> {
    match *x.shape() {
        [r, c] => Ok((r, c)),
        ref s => Err(Error::Shape(format!("{what} must be rank 2, got {s:?}"))),
    }
}

/// Single-head `softmax(q k^T / tau) v` for `q: n x d`, `k: m x d`, `v: m x e`.
pub fn scaled_attention<F: Scalar>(
    q: &Tensor<F>,
    k: &Tensor<F>,
    v: &Tensor<F>,
    tau: F,
) -> Result<Tensor<F>> {
    let (n, d) = rows_cols(q, "query")?;
    let (m, dk) = rows_cols(k, "key")?;
    let (mv, e) = rows_cols(v, "value")?;
    if d != dk || m != mv {
        return Err(Error::Shape(format!(
            "attention shapes q {:?}, k {:?}, v {:?} are inconsistent",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    if m == 0 {
        return Err(Error::Shape("attention needs at least one key".into()));
    }
    if !(tau > F::zero()) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {tau}")));
    }
    if !(q.all_finite() && k.all_finite() && v.all_finite()) {
        return Err(Error::NonFinite("attention input".into()));
    }
    let mut out = Tensor::zeros(&[n, e]);
    attend(q.data(), k.data(), v.data(), n, m, d, e, 1, tau, out.data_mut());
    Ok(out)
}
