//! The conditioned UNet one-step predictor.
//!
//! ```text
//! L history frames ─ 1x1 proj ─ down0 ─ pool ─ down1 ─ ... ─ down(D-1)
//!                                 │               │              │
//!                                up0 ─────────── up1 ─ ... ◄─ upsample
//!                                 └─ GeLU ─ 1x1 proj ─ next frame
//! ```
//!
//! Every block is `ResNet(conv3-GeLU-conv3 + skip)`, then a per-channel
//! multiplicative conditioning `x * (1 + W u(t) + b)`, then attention whose
//! tokens are the block's channels (each described by an
//! `attn_grid x attn_grid` block average; the attended residual is broadcast
//! back over the blocks).

use std::sync::Arc;

use super::attention::{attn_backward, attn_forward, AttentionWeights, AttnCache};
use super::config::ModelConfig;
use super::embedding::{dense_backward, dense_forward, embedding_backward, embedding_forward, EmbeddingCache};
use super::ops::{
    block_broadcast_add, block_mean, col2im3, conv3x3_backward_data, conv3x3_backward_weights, conv3x3_forward,
    gelu_backward, gelu_forward, im2col3, matmul, matmul_nt, matmul_tn, Real,
};
use super::params::{build_plan, init_params, BlockPlan, Conv3, Dense, Plan, PredictorParams};
use crate::error::{Error, Result};
use crate::field::{GridField, TemporalInput};

/// A predictor: architecture plus one parameter set.
#[derive(Clone, Debug)]
pub struct Surrogate<T: Real> {
    config: ModelConfig,
    plan: Arc<Plan>,
    params: PredictorParams<T>,
}

impl<T: Real> PartialEq for Surrogate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

/// Below this many output channels the GEMM micro-kernel runs masked and the
/// direct row-wise convolution is faster.
const GEMM_MIN_OUT: usize = 8;

enum ConvCache<T> {
    Direct { x: Vec<T> },
    Gemm { col: Vec<T> },
}

fn conv3_forward<T: Real>(p: &[T], l: &Conv3, x: &[T], h: usize, w: usize) -> (Vec<T>, ConvCache<T>) {
    let hw = h * w;
    let wt = &p[l.w..l.w + l.out * l.inp * 9];
    let mut y = vec![T::zero(); l.out * hw];
    for (o, row) in y.chunks_mut(hw).enumerate() {
        row.fill(p[l.b + o]);
    }
    let cache = if l.out < GEMM_MIN_OUT {
        conv3x3_forward(x, l.inp, l.out, h, w, wt, &mut y);
        ConvCache::Direct { x: x.to_vec() }
    } else {
        let mut col = vec![T::zero(); l.inp * 9 * hw];
        im2col3(x, l.inp, h, w, &mut col);
        matmul(l.out, l.inp * 9, hw, wt, &col, &mut y, true);
        ConvCache::Gemm { col }
    };
    (y, cache)
}

fn conv3_backward<T: Real>(
    p: &[T],
    l: &Conv3,
    cache: &ConvCache<T>,
    dy: &[T],
    h: usize,
    w: usize,
    grads: &mut [T],
) -> Vec<T> {
    let hw = h * w;
    let k = l.inp * 9;
    let (wt, dwt) = (&p[l.w..l.w + l.out * k], &mut grads[l.w..l.w + l.out * k]);
    let mut dx = vec![T::zero(); l.inp * hw];
    match cache {
        ConvCache::Direct { x } => {
            conv3x3_backward_weights(dy, x, l.inp, l.out, h, w, dwt);
            conv3x3_backward_data(dy, l.inp, l.out, h, w, wt, &mut dx);
        }
        ConvCache::Gemm { col } => {
            matmul_nt(l.out, hw, k, dy, col, dwt, true);
            let mut dcol = vec![T::zero(); k * hw];
            matmul_tn(k, l.out, hw, wt, dy, &mut dcol, false);
            col2im3(&dcol, l.inp, h, w, &mut dx);
        }
    }
    for (o, row) in dy.chunks(hw).enumerate() {
        grads[l.b + o] += row.iter().copied().sum::<T>();
    }
    dx
}

/// 1x1 convolution over a `[inp][hw]` map.
fn pointwise_forward<T: Real>(p: &[T], l: &Dense, x: &[T], hw: usize) -> Vec<T> {
    let mut y = vec![T::zero(); l.out * hw];
    for (o, row) in y.chunks_mut(hw).enumerate() {
        row.fill(p[l.b + o]);
    }
    matmul(l.out, l.inp, hw, &p[l.w..], x, &mut y, true);
    y
}

fn pointwise_backward<T: Real>(p: &[T], l: &Dense, x: &[T], dy: &[T], hw: usize, grads: &mut [T]) -> Vec<T> {
    matmul_nt(l.out, hw, l.inp, dy, x, &mut grads[l.w..l.w + l.out * l.inp], true);
    for (o, row) in dy.chunks(hw).enumerate() {
        grads[l.b + o] += row.iter().copied().sum::<T>();
    }
    let mut dx = vec![T::zero(); l.inp * hw];
    matmul_tn(l.inp, l.out, hw, &p[l.w..l.w + l.out * l.inp], dy, &mut dx, false);
    dx
}

fn attention_weights<'a, T: Real>(p: &'a [T], plan: &BlockPlan) -> AttentionWeights<'a, T> {
    let a = &plan.attn;
    let dd = a.dim * a.dim;
    AttentionWeights {
        query: &p[a.wq..a.wq + dd],
        key: &p[a.wk..a.wk + dd],
        value: &p[a.wv..a.wv + dd],
        out: &p[a.wo..a.wo + dd],
        dim: a.dim,
    }
}

struct BlockCache<T> {
    x: Vec<T>,
    c1: ConvCache<T>,
    h1: Vec<T>,
    t1: Vec<T>,
    c2: ConvCache<T>,
    r: Vec<T>,
    scale: Vec<T>,
    attn: AttnCache<T>,
    h: usize,
    w: usize,
}

fn block_forward<T: Real>(
    p: &[T],
    plan: &BlockPlan,
    x: Vec<T>,
    u: &[T],
    h: usize,
    w: usize,
    grid: usize,
) -> (Vec<T>, BlockCache<T>) {
    let hw = h * w;
    let c = plan.conv1.out;
    let (h1, c1) = conv3_forward(p, &plan.conv1, &x, h, w);
    let (a1, t1) = gelu_forward(&h1);
    let (mut r, c2) = conv3_forward(p, &plan.conv2, &a1, h, w);
    match &plan.skip {
        Some(s) => {
            let sk = pointwise_forward(p, s, &x, hw);
            for (ri, si) in r.iter_mut().zip(&sk) {
                *ri += *si;
            }
        }
        None => {
            for (ri, xi) in r.iter_mut().zip(&x) {
                *ri += *xi;
            }
        }
    }

    let scale = dense_forward(p, &plan.cond, u);
    let mut z = r.clone();
    for (row, &s) in z.chunks_mut(hw).zip(&scale) {
        let g = T::one() + s;
        for v in row {
            *v *= g;
        }
    }

    let (fy, fx) = (h / grid, w / grid);
    let pooled = block_mean(&z, c, h, w, fy, fx);
    let (res, attn) = attn_forward(pooled, c, &attention_weights(p, plan));
    block_broadcast_add(&res, c, h, w, fy, fx, T::one(), &mut z);

    (
        z,
        BlockCache {
            x,
            c1,
            h1,
            t1,
            c2,
            r,
            scale,
            attn,
            h,
            w,
        },
    )
}

/// Returns `dx`; accumulates `du` and parameter gradients.
fn block_backward<T: Real>(
    p: &[T],
    plan: &BlockPlan,
    cache: &BlockCache<T>,
    dy: Vec<T>,
    u: &[T],
    du: &mut [T],
    grid: usize,
    grads: &mut [T],
) -> Vec<T> {
    let (h, w) = (cache.h, cache.w);
    let hw = h * w;
    let c = plan.conv1.out;
    let (fy, fx) = (h / grid, w / grid);

    let mut dz = dy;
    let dres = block_mean(&dz, c, h, w, fy, fx)
        .into_iter()
        .map(|v| v * T::from_f64((fy * fx) as f64))
        .collect::<Vec<_>>();
    let mut dpooled = vec![T::zero(); c * plan.attn.dim];
    attn_backward(&cache.attn, &dres, p, &plan.attn, grads, &mut dpooled);
    block_broadcast_add(&dpooled, c, h, w, fy, fx, T::from_f64(1.0 / (fy * fx) as f64), &mut dz);

    let mut dscale = vec![T::zero(); c];
    let mut dr = dz;
    for ((row, r_row), (&s, ds)) in dr
        .chunks_mut(hw)
        .zip(cache.r.chunks(hw))
        .zip(cache.scale.iter().zip(dscale.iter_mut()))
    {
        let g = T::one() + s;
        let mut acc = T::zero();
        for (d, &rv) in row.iter_mut().zip(r_row) {
            acc += *d * rv;
            *d *= g;
        }
        *ds = acc;
    }
    let du_block = dense_backward(p, &plan.cond, u, &dscale, grads);
    for (a, b) in du.iter_mut().zip(&du_block) {
        *a += *b;
    }

    let da1 = conv3_backward(p, &plan.conv2, &cache.c2, &dr, h, w, grads);
    let dh1 = gelu_backward(&cache.h1, &cache.t1, &da1);
    let mut dx = conv3_backward(p, &plan.conv1, &cache.c1, &dh1, h, w, grads);
    match &plan.skip {
        Some(s) => {
            let dxs = pointwise_backward(p, s, &cache.x, &dr, hw, grads);
            for (a, b) in dx.iter_mut().zip(&dxs) {
                *a += *b;
            }
        }
        None => {
            for (a, b) in dx.iter_mut().zip(&dr) {
                *a += *b;
            }
        }
    }
    dx
}

/// Everything the backward pass needs from one forward pass.
pub struct Tape<T> {
    emb: EmbeddingCache<T>,
    u: Vec<T>,
    input: Vec<T>,
    encoder: Vec<BlockCache<T>>,
    decoder: Vec<BlockCache<T>>,
    top: Vec<T>,
    top_tanh: Vec<T>,
    top_act: Vec<T>,
}

impl<T: Real> Surrogate<T> {
    pub fn new(config: ModelConfig, params: PredictorParams<T>) -> Result<Self> {
        config.validate()?;
        let (layout, plan) = build_plan(&config);
        if *params.layout() != layout {
            return Err(Error::Shape("parameter layout does not match the model config".into()));
        }
        Ok(Self {
            config,
            plan: Arc::new(plan),
            params,
        })
    }

    /// Freshly initialized predictor (see [`init_params`]).
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &PredictorParams<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut PredictorParams<T> {
        &mut self.params
    }

    pub fn into_params(self) -> PredictorParams<T> {
        self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn cast<U: Real>(&self) -> Surrogate<U> {
        Surrogate {
            config: self.config.clone(),
            plan: self.plan.clone(),
            params: self.params.cast(),
        }
    }

    /// `u(t)` for one temporal input.
    pub fn temporal_embedding(&self, ti: &TemporalInput) -> Result<Vec<T>> {
        self.config.check_temporal(ti)?;
        let (u, _) = embedding_forward(self.params.values(), &self.plan, self.config.d_t, &ti.time_ids, &ti.forcing)?;
        Ok(u)
    }

    /// Forward pass on a `[L][ny][nx]` input, keeping what backward needs.
    pub fn forward_tape(&self, input: &[T], ti: &TemporalInput) -> Result<(Vec<T>, Tape<T>)> {
        let cfg = &self.config;
        let (nx, ny) = (cfg.nx, cfg.ny);
        if input.len() != cfg.history * nx * ny {
            return Err(Error::Shape(format!(
                "input has {} values, expected {} frames of {nx}x{ny}",
                input.len(),
                cfg.history
            )));
        }
        cfg.check_temporal(ti)?;
        let p = self.params.values();
        let plan = &*self.plan;
        let grid = cfg.attn_grid;

        let (u, emb) = embedding_forward(p, plan, cfg.d_t, &ti.time_ids, &ti.forcing)?;
        let mut x = pointwise_forward(p, &plan.input, input, nx * ny);

        let depth = cfg.depth;
        let (mut h, mut w) = (ny, nx);
        let mut encoder = Vec::with_capacity(depth);
        let mut skips = Vec::with_capacity(depth);
        for (l, block) in plan.encoder.iter().enumerate() {
            let (y, cache) = block_forward(p, block, x, &u, h, w, grid);
            encoder.push(cache);
            if l + 1 < depth {
                x = block_mean(&y, block.conv1.out, h, w, 2, 2);
                skips.push(y);
                h /= 2;
                w /= 2;
            } else {
                x = y;
            }
        }

        let mut decoder: Vec<Option<BlockCache<T>>> = (0..depth - 1).map(|_| None).collect();
        for l in (0..depth - 1).rev() {
            let c_low = cfg.channels(l + 1);
            let (h2, w2) = (h * 2, w * 2);
            let skip = skips.pop().expect("one skip per level");
            let mut cat = vec![T::zero(); c_low * h2 * w2];
            block_broadcast_add(&x, c_low, h2, w2, 2, 2, T::one(), &mut cat);
            cat.extend_from_slice(&skip);
            let (y, cache) = block_forward(p, &plan.decoder[l], cat, &u, h2, w2, grid);
            decoder[l] = Some(cache);
            x = y;
            h = h2;
            w = w2;
        }

        let (top_act, top_tanh) = gelu_forward(&x);
        let out = pointwise_forward(p, &plan.output, &top_act, nx * ny);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictor output (check input scaling and parameters)".into()));
        }
        Ok((
            out,
            Tape {
                emb,
                u,
                input: input.to_vec(),
                encoder,
                decoder: decoder.into_iter().map(|c| c.expect("decoder cache")).collect(),
                top: x,
                top_tanh,
                top_act,
            },
        ))
    }

    pub fn forward(&self, input: &[T], ti: &TemporalInput) -> Result<Vec<T>> {
        self.forward_tape(input, ti).map(|(out, _)| out)
    }

    /// Accumulates `d(loss)/d(params)` into `grads` given `d(loss)/d(output)`.
    pub fn backward(&self, tape: &Tape<T>, d_out: &[T], grads: &mut [T]) {
        let cfg = &self.config;
        let p = self.params.values();
        let plan = &*self.plan;
        let grid = cfg.attn_grid;
        let hw = cfg.nx * cfg.ny;
        let depth = cfg.depth;
        debug_assert_eq!(grads.len(), p.len());

        let dact = pointwise_backward(p, &plan.output, &tape.top_act, d_out, hw, grads);
        let mut dx = gelu_backward(&tape.top, &tape.top_tanh, &dact);
        let mut du = vec![T::zero(); tape.u.len()];

        // Gradients flowing into encoder outputs through skip connections.
        let mut dskips: Vec<Vec<T>> = vec![Vec::new(); depth - 1];
        for l in 0..depth - 1 {
            let cache = &tape.decoder[l];
            let (h2, w2) = (cache.h, cache.w);
            let dcat = block_backward(p, &plan.decoder[l], cache, dx, &tape.u, &mut du, grid, grads);
            let c_low = cfg.channels(l + 1);
            let split = c_low * h2 * w2;
            dskips[l] = dcat[split..].to_vec();
            // Adjoint of nearest upsampling: sum over each 2x2 block.
            dx = block_mean(&dcat[..split], c_low, h2, w2, 2, 2)
                .into_iter()
                .map(|v| v * T::from_f64(4.0))
                .collect();
        }

        for l in (0..depth).rev() {
            let cache = &tape.encoder[l];
            let dy = if l + 1 < depth {
                // Output y fed both the pooling (-> level l+1) and the skip.
                let (h, w) = (cache.h, cache.w);
                let c = plan.encoder[l].conv1.out;
                let mut dy = std::mem::take(&mut dskips[l]);
                block_broadcast_add(&dx, c, h, w, 2, 2, T::from_f64(0.25), &mut dy);
                dy
            } else {
                dx
            };
            dx = block_backward(p, &plan.encoder[l], cache, dy, &tape.u, &mut du, grid, grads);
        }

        pointwise_backward(p, &plan.input, &tape.input, &dx, hw, grads);
        embedding_backward(p, plan, &tape.emb, &du, grads);
    }

    /// Mean squared error against `target`; accumulates `weight * d(mse)`
    /// into `grads`.
    pub fn loss_and_grad(&self, input: &[T], ti: &TemporalInput, target: &[T], weight: T, grads: &mut [T]) -> Result<T> {
        let (out, tape) = self.forward_tape(input, ti)?;
        if target.len() != out.len() {
            return Err(Error::Shape(format!("target has {} values, expected {}", target.len(), out.len())));
        }
        let n = T::from_f64(out.len() as f64);
        let mut loss = T::zero();
        let mut d_out = Vec::with_capacity(out.len());
        let two = T::from_f64(2.0);
        for (&o, &t) in out.iter().zip(target) {
            let e = o - t;
            loss += e * e;
            d_out.push(two * e / n * weight);
        }
        self.backward(&tape, &d_out, grads);
        Ok(loss / n)
    }

    /// Stacks history frames as input channels.
    pub fn stack_history(&self, history: &[GridField]) -> Result<Vec<T>> {
        let cfg = &self.config;
        if history.len() != cfg.history {
            return Err(Error::Shape(format!("{} history frames, expected {}", history.len(), cfg.history)));
        }
        let mut input = Vec::with_capacity(cfg.history * cfg.nx * cfg.ny);
        for f in history {
            if f.shape() != (cfg.nx, cfg.ny) {
                return Err(Error::Shape(format!(
                    "history frame is {:?}, model expects {}x{}",
                    f.shape(),
                    cfg.nx,
                    cfg.ny
                )));
            }
            input.extend(f.values().iter().map(|&v| T::from_f64(v)));
        }
        Ok(input)
    }

    /// One forward pass in standardized units.
    pub fn predict_next(&self, history: &[GridField], ti: &TemporalInput) -> Result<GridField> {
        let input = self.stack_history(history)?;
        let out = self.forward(&input, ti)?;
        GridField::new(self.config.nx, self.config.ny, out.into_iter().map(T::as_f64).collect())
    }
}

/// Mean of squared elementwise differences.
pub fn mse_loss(pred: &GridField, target: &GridField) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    let s: f64 = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ForcingKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny(kind: ForcingKind, dim: usize, depth: usize) -> ModelConfig {
        ModelConfig {
            base_channels: 4,
            depth,
            d_t: 8,
            emb_out: 6,
            attn_grid: 2,
            ..ModelConfig::new(2, 16, 8, kind, dim)
        }
    }

    fn temporal(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> TemporalInput {
        TemporalInput {
            time_ids: (0..=cfg.history as i64).map(|t| t + 3).collect(),
            forcing: (0..cfg.forcing_width()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    /// Conv, dense, attention and bias counts written out by hand.
    fn expected_params(cfg: &ModelConfig) -> usize {
        let dense = |o: usize, i: usize| o * i + o;
        let conv = |o: usize, i: usize| o * i * 9 + o;
        let d = cfg.attn_grid * cfg.attn_grid;
        let u = cfg.embedding_width();
        let block = |i: usize, o: usize| {
            conv(o, i) + conv(o, o) + if i != o { dense(o, i) } else { 0 } + dense(o, u) + 4 * d * d
        };
        let e = cfg.emb_out;
        let mut n = dense(e, (cfg.history + 1) * cfg.d_t) + dense(e, e);
        if cfg.forcing_kind != ForcingKind::None {
            n += dense(e, cfg.forcing_width()) + dense(e, e);
        }
        let c = |l: usize| cfg.base_channels * (1 << l);
        n += dense(c(0), cfg.history);
        for l in 0..cfg.depth {
            n += block(if l == 0 { c(0) } else { c(l - 1) }, c(l));
        }
        for l in 0..cfg.depth - 1 {
            n += block(c(l + 1) + c(l), c(l));
        }
        n + dense(1, c(0))
    }

    #[test]
    fn parameter_count_matches_hand_count() {
        for (kind, dim) in [(ForcingKind::None, 0), (ForcingKind::TimeVarying, 1), (ForcingKind::ConstantParams, 2)] {
            for depth in 1..=3 {
                let cfg = tiny(kind, dim, depth);
                let s = Surrogate::<f32>::init(cfg.clone(), 0).unwrap();
                assert_eq!(s.param_count(), expected_params(&cfg), "{kind:?} depth {depth}");
            }
        }
        let full = ModelConfig::new(4, 64, 64, ForcingKind::ConstantParams, 2);
        assert_eq!(Surrogate::<f32>::init(full.clone(), 0).unwrap().param_count(), expected_params(&full));
    }

    fn gradient_check(kind: ForcingKind, dim: usize, depth: usize) {
        let cfg = tiny(kind, dim, depth);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = Surrogate::<f64>::init(cfg.clone(), 5).unwrap();
        // Non-trivial attention/conditioning so every path carries gradient.
        for v in model.params_mut().values_mut() {
            *v *= 1.5;
        }
        let hw = cfg.nx * cfg.ny;
        let input: Vec<f64> = (0..cfg.history * hw).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let target: Vec<f64> = (0..hw).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ti = temporal(&cfg, &mut rng);

        let mut grads = vec![0.0; model.param_count()];
        model.loss_and_grad(&input, &ti, &target, 1.0, &mut grads).unwrap();

        let layout = model.params().layout().clone();
        let mut checked = 0;
        for entry in layout.entries() {
            for _ in 0..3 {
                let i = entry.offset + rng.gen_range(0..entry.len());
                let h = 1e-5;
                let orig = model.params().values()[i];
                let mut eval = |v: f64| {
                    model.params_mut().values_mut()[i] = v;
                    let mut scratch = vec![0.0; layout.total()];
                    model.loss_and_grad(&input, &ti, &target, 1.0, &mut scratch).unwrap()
                };
                let fd = (eval(orig + h) - eval(orig - h)) / (2.0 * h);
                model.params_mut().values_mut()[i] = orig;
                let err = (fd - grads[i]).abs() / (fd.abs().max(grads[i].abs()).max(1e-6));
                assert!(err < 1e-4, "{} [{i}]: analytic {} vs fd {fd}", entry.name, grads[i]);
                checked += 1;
            }
        }
        assert!(checked >= 3 * layout.entries().len());
    }

    #[test]
    fn gradients_match_finite_differences_constant_params() {
        gradient_check(ForcingKind::ConstantParams, 2, 2);
    }

    #[test]
    fn gradients_match_finite_differences_time_varying_depth3() {
        gradient_check(ForcingKind::TimeVarying, 1, 3);
    }

    #[test]
    fn gradients_match_finite_differences_unforced_single_level() {
        gradient_check(ForcingKind::None, 0, 1);
    }

    #[test]
    fn predict_next_rejects_bad_shapes() {
        let cfg = tiny(ForcingKind::None, 0, 2);
        let m = Surrogate::<f32>::init(cfg.clone(), 1).unwrap();
        let ti = TemporalInput {
            time_ids: vec![0, 1, 2],
            forcing: vec![],
        };
        let frame = GridField::zeros(cfg.nx, cfg.ny);
        assert!(m.predict_next(&[frame.clone(), frame.clone()], &ti).is_ok());
        assert!(m.predict_next(&[frame.clone()], &ti).is_err());
        assert!(m.predict_next(&[GridField::zeros(8, 8), frame], &ti).is_err());
    }

    #[test]
    fn same_seed_same_output_different_seed_differs() {
        let cfg = tiny(ForcingKind::ConstantParams, 2, 2);
        let frame = GridField::from_fn(cfg.nx, cfg.ny, |x, y| (x as f64 * 0.3).sin() + y as f64 * 0.1).unwrap();
        let ti = TemporalInput {
            time_ids: vec![0, 1, 2],
            forcing: vec![0.1, 0.2],
        };
        let h = [frame.clone(), frame];
        let a = Surrogate::<f32>::init(cfg.clone(), 7).unwrap().predict_next(&h, &ti).unwrap();
        let b = Surrogate::<f32>::init(cfg.clone(), 7).unwrap().predict_next(&h, &ti).unwrap();
        let c = Surrogate::<f32>::init(cfg, 8).unwrap().predict_next(&h, &ti).unwrap();
        assert_eq!(a, b);
        assert!(a.max_abs_diff(&c) > 1e-6);
    }

    fn varied_history(cfg: &ModelConfig) -> Vec<GridField> {
        (0..cfg.history)
            .map(|t| {
                GridField::from_fn(cfg.nx, cfg.ny, |x, y| ((x + 2 * t) as f64 * 0.7).sin() * (y as f64 * 0.4 + t as f64).cos())
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn zeroed_embedding_heads_give_zero_embedding() {
        let cfg = tiny(ForcingKind::ConstantParams, 2, 2);
        let mut m = Surrogate::<f64>::init(cfg.clone(), 3).unwrap();
        let layout = m.params().layout().clone();
        for e in layout.entries().iter().filter(|e| e.name.contains("emb.fc2")) {
            m.params_mut().values_mut()[e.range()].fill(0.0);
        }
        let ti = TemporalInput {
            time_ids: vec![4, 5, 6],
            forcing: vec![0.3, -0.8],
        };
        let u = m.temporal_embedding(&ti).unwrap();
        assert_eq!(u.len(), cfg.embedding_width());
        assert!(u.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn time_half_of_embedding_ignores_forcing() {
        let cfg = tiny(ForcingKind::ConstantParams, 2, 2);
        let m = Surrogate::<f64>::init(cfg.clone(), 3).unwrap();
        let a = TemporalInput {
            time_ids: vec![4, 5, 6],
            forcing: vec![0.3, -0.8],
        };
        let b = TemporalInput {
            forcing: vec![-1.1, 0.2],
            ..a.clone()
        };
        let (ua, ub) = (m.temporal_embedding(&a).unwrap(), m.temporal_embedding(&b).unwrap());
        let e = cfg.emb_out;
        assert_eq!(ua[..e], ub[..e]);
        assert_ne!(ua[e..], ub[e..]);
    }

    #[test]
    fn forcing_reaches_the_output() {
        let cfg = tiny(ForcingKind::ConstantParams, 2, 3);
        let m = Surrogate::<f64>::init(cfg.clone(), 9).unwrap();
        let h = varied_history(&cfg);
        let a = TemporalInput {
            time_ids: vec![0, 1, 2],
            forcing: vec![0.5, 0.5],
        };
        let b = TemporalInput {
            forcing: vec![-0.5, 1.5],
            ..a.clone()
        };
        let pa = m.predict_next(&h, &a).unwrap();
        assert!(pa.max_abs_diff(&m.predict_next(&h, &b).unwrap()) > 1e-9);
        let later = TemporalInput {
            time_ids: vec![10, 11, 12],
            ..a
        };
        assert!(pa.max_abs_diff(&m.predict_next(&h, &later).unwrap()) > 1e-9);
    }

    #[test]
    fn history_order_matters() {
        let cfg = tiny(ForcingKind::None, 0, 2);
        let m = Surrogate::<f64>::init(cfg.clone(), 2).unwrap();
        let h = varied_history(&cfg);
        let rev: Vec<GridField> = h.iter().rev().cloned().collect();
        let ti = TemporalInput {
            time_ids: vec![0, 1, 2],
            forcing: vec![],
        };
        let a = m.predict_next(&h, &ti).unwrap();
        assert!(a.max_abs_diff(&m.predict_next(&rev, &ti).unwrap()) > 1e-9);
    }

    #[test]
    fn mse_loss_examples() {
        let t = GridField::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
        let p = GridField::new(2, 2, vec![2.0, 2.0, 1.0, 4.0]).unwrap();
        assert_eq!(mse_loss(&p, &t).unwrap(), (1.0 + 4.0) / 4.0);
        assert!(mse_loss(&GridField::zeros(4, 1), &t).is_err());
    }
}
