//! Temporal conditioning: sinusoidal time-id features and the two small MLPs
//! whose outputs are concatenated into `u(t)`.

use super::ops::{gelu_backward, gelu_forward, matmul, matmul_tn, Real};
use super::params::{Dense, Plan};
use crate::error::{Error, Result};

/// Interleaved `[sin(t w_0), cos(t w_0), sin(t w_1), cos(t w_1), ...]` with
/// `w_i = 10000^(-i / d_t)`.
pub fn sinusoidal_embedding(t: i64, d_t: usize) -> Result<Vec<f64>> {
    if d_t == 0 || d_t % 2 != 0 {
        return Err(Error::Config(format!("sinusoidal width must be even and positive, got {d_t}")));
    }
    if t < 0 {
        return Err(Error::Domain(format!("time id {t} is negative")));
    }
    let mut out = Vec::with_capacity(d_t);
    for i in 0..d_t / 2 {
        let arg = t as f64 / 10000f64.powf(i as f64 / d_t as f64);
        out.push(arg.sin());
        out.push(arg.cos());
    }
    Ok(out)
}

pub(crate) fn dense_forward<T: Real>(p: &[T], l: &Dense, x: &[T]) -> Vec<T> {
    let mut y = p[l.b..l.b + l.out].to_vec();
    matmul(l.out, l.inp, 1, &p[l.w..], x, &mut y, true);
    y
}

/// Accumulates weight/bias gradients and returns `dx`.
pub(crate) fn dense_backward<T: Real>(p: &[T], l: &Dense, x: &[T], dy: &[T], grads: &mut [T]) -> Vec<T> {
    for (o, &g) in dy.iter().enumerate() {
        grads[l.b + o] += g;
        let row = &mut grads[l.w + o * l.inp..l.w + (o + 1) * l.inp];
        for (w, &xi) in row.iter_mut().zip(x) {
            *w += g * xi;
        }
    }
    let mut dx = vec![T::zero(); l.inp];
    matmul_tn(l.inp, l.out, 1, &p[l.w..l.w + l.out * l.inp], dy, &mut dx, false);
    dx
}

struct MlpCache<T> {
    x: Vec<T>,
    h: Vec<T>,
    t: Vec<T>,
    a: Vec<T>,
}

fn mlp_forward<T: Real>(p: &[T], l1: &Dense, l2: &Dense, x: Vec<T>) -> (Vec<T>, MlpCache<T>) {
    let h = dense_forward(p, l1, &x);
    let (a, t) = gelu_forward(&h);
    let y = dense_forward(p, l2, &a);
    (y, MlpCache { x, h, t, a })
}

fn mlp_backward<T: Real>(p: &[T], l1: &Dense, l2: &Dense, c: &MlpCache<T>, dy: &[T], grads: &mut [T]) {
    let da = dense_backward(p, l2, &c.a, dy, grads);
    let dh = gelu_backward(&c.h, &c.t, &da);
    dense_backward(p, l1, &c.x, &dh, grads);
}

pub(crate) struct EmbeddingCache<T> {
    time: MlpCache<T>,
    var: Option<MlpCache<T>>,
    time_width: usize,
}

/// `u(t) = FNN_emb(sinusoids(time ids)) || FNN_var(forcing)`.
pub(crate) fn embedding_forward<T: Real>(
    p: &[T],
    plan: &Plan,
    d_t: usize,
    time_ids: &[i64],
    forcing: &[f64],
) -> Result<(Vec<T>, EmbeddingCache<T>)> {
    let mut s = Vec::with_capacity(time_ids.len() * d_t);
    for &t in time_ids {
        s.extend(sinusoidal_embedding(t, d_t)?.into_iter().map(T::from_f64));
    }
    let (mut u, time) = mlp_forward(p, &plan.time1, &plan.time2, s);
    let time_width = u.len();
    let var = match &plan.var {
        Some((l1, l2)) => {
            let x = forcing.iter().map(|&v| T::from_f64(v)).collect();
            let (e, c) = mlp_forward(p, l1, l2, x);
            u.extend(e);
            Some(c)
        }
        None => None,
    };
    Ok((u, EmbeddingCache { time, var, time_width }))
}

pub(crate) fn embedding_backward<T: Real>(p: &[T], plan: &Plan, cache: &EmbeddingCache<T>, du: &[T], grads: &mut [T]) {
    let (dt, dv) = du.split_at(cache.time_width);
    mlp_backward(p, &plan.time1, &plan.time2, &cache.time, dt, grads);
    if let (Some((l1, l2)), Some(c)) = (&plan.var, &cache.var) {
        mlp_backward(p, l1, l2, c, dv, grads);
    }
}
