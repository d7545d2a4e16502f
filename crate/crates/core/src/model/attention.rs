//! Scaled dot-product self-attention over a small set of tokens,
//! `softmax(Q K^T / sqrt(d)) V`, followed by an output projection and a
//! residual connection.

use super::ops::{matmul, matmul_nt, matmul_tn, softmax_rows, Real};
use super::params::Attn;
use crate::error::{Error, Result};

/// Borrowed `d x d` projection matrices (row-major, applied as `X W`).
#[derive(Clone, Copy, Debug)]
pub struct AttentionWeights<'a, T> {
    pub query: &'a [T],
    pub key: &'a [T],
    pub value: &'a [T],
    pub out: &'a [T],
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionOutput<T> {
    /// Row-stochastic `n x n` attention matrix.
    pub weights: Vec<T>,
    /// `weights * V`, `n x d`.
    pub attended: Vec<T>,
    /// `features + attended * W_out`, `n x d`.
    pub output: Vec<T>,
}

pub(crate) struct AttnCache<T> {
    p: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    a: Vec<T>,
    o: Vec<T>,
    n: usize,
}

/// Returns the residual branch `softmax(QK^T/sqrt(d)) V W_out` for token
/// matrix `p` (`n x d`).
pub(crate) fn attn_forward<T: Real>(p: Vec<T>, n: usize, w: &AttentionWeights<'_, T>) -> (Vec<T>, AttnCache<T>) {
    let d = w.dim;
    let mut q = vec![T::zero(); n * d];
    let mut k = vec![T::zero(); n * d];
    let mut v = vec![T::zero(); n * d];
    matmul(n, d, d, &p, w.query, &mut q, false);
    matmul(n, d, d, &p, w.key, &mut k, false);
    matmul(n, d, d, &p, w.value, &mut v, false);
    let mut a = vec![T::zero(); n * n];
    matmul_nt(n, d, n, &q, &k, &mut a, false);
    let scale = T::one() / T::from_f64(d as f64).sqrt();
    for x in &mut a {
        *x *= scale;
    }
    softmax_rows(&mut a, n);
    let mut o = vec![T::zero(); n * d];
    matmul(n, n, d, &a, &v, &mut o, false);
    let mut r = vec![T::zero(); n * d];
    matmul(n, d, d, &o, w.out, &mut r, false);
    (r, AttnCache { p, q, k, v, a, o, n })
}

/// Backward of [`attn_forward`]: accumulates weight gradients into `grads`
/// (at the offsets of `at`) and `d(loss)/d(p)` into `dp`.
pub(crate) fn attn_backward<T: Real>(
    cache: &AttnCache<T>,
    dr: &[T],
    params: &[T],
    at: &Attn,
    grads: &mut [T],
    dp: &mut [T],
) {
    let (n, d) = (cache.n, at.dim);
    let dd = d * d;
    matmul_tn(d, n, d, &cache.o, dr, &mut grads[at.wo..at.wo + dd], true);
    let mut d_o = vec![T::zero(); n * d];
    matmul_nt(n, d, d, dr, &params[at.wo..at.wo + dd], &mut d_o, false);

    let mut da = vec![T::zero(); n * n];
    matmul_nt(n, d, n, &d_o, &cache.v, &mut da, false);
    let mut dv = vec![T::zero(); n * d];
    matmul_tn(n, n, d, &cache.a, &d_o, &mut dv, false);

    let scale = T::one() / T::from_f64(d as f64).sqrt();
    let mut ds = da;
    for (ds_row, a_row) in ds.chunks_mut(n).zip(cache.a.chunks(n)) {
        let dot: T = ds_row.iter().zip(a_row).map(|(&g, &a)| g * a).sum();
        for (g, &a) in ds_row.iter_mut().zip(a_row) {
            *g = a * (*g - dot) * scale;
        }
    }
    let mut dq = vec![T::zero(); n * d];
    matmul(n, n, d, &ds, &cache.k, &mut dq, false);
    let mut dk = vec![T::zero(); n * d];
    matmul_tn(n, n, d, &ds, &cache.q, &mut dk, false);

    for (grad, w, off) in [(&dq, at.wq, at.wq), (&dk, at.wk, at.wk), (&dv, at.wv, at.wv)] {
        matmul_tn(d, n, d, &cache.p, grad, &mut grads[off..off + dd], true);
        matmul_nt(n, d, d, grad, &params[w..w + dd], dp, true);
    }
}

/// Self-attention over `n_tokens` rows of `features` (`n_tokens x dim`).
pub fn temporal_attention<T: Real>(
    features: &[T],
    n_tokens: usize,
    weights: &AttentionWeights<'_, T>,
) -> Result<AttentionOutput<T>> {
    let d = weights.dim;
    let dd = d * d;
    if features.len() != n_tokens * d || n_tokens == 0 {
        return Err(Error::Shape(format!(
            "{} feature values for {n_tokens} tokens of width {d}",
            features.len()
        )));
    }
    for m in [weights.query, weights.key, weights.value, weights.out] {
        if m.len() != dd {
            return Err(Error::Shape(format!("projection has {} entries, expected {dd}", m.len())));
        }
    }
    let (r, cache) = attn_forward(features.to_vec(), n_tokens, weights);
    let output = features.iter().zip(&r).map(|(&x, &y)| x + y).collect();
    Ok(AttentionOutput {
        weights: cache.a,
        attended: cache.o,
        output,
    })
}
