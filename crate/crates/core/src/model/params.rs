use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::ops::Real;
use crate::error::{Error, Result};
use crate::field::ForcingKind;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    /// Fan-in used for initialization.
    pub fan_in: usize,
    /// Weight tensors get L2 regularization; biases do not.
    pub decay: bool,
}

impl ParamEntry {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors packed into one flat parameter vector.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ParamLayout {
    entries: Vec<ParamEntry>,
    total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, shape: Vec<usize>, fan_in: usize, decay: bool) -> usize {
        let offset = self.total;
        let e = ParamEntry {
            name,
            shape,
            offset,
            fan_in,
            decay,
        };
        self.total += e.len();
        self.entries.push(e);
        offset
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn get(&self, name: &str) -> Option<&ParamEntry> {
        self.entries.iter().find(|e| e.name == name)
    }
}

/// Dense layer `y = W x + b`, `W: [out][inp]`. Also used for 1x1 convolutions.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dense {
    pub w: usize,
    pub b: usize,
    pub out: usize,
    pub inp: usize,
}

/// 3x3 convolution, `W: [out][inp][3][3]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Conv3 {
    pub w: usize,
    pub b: usize,
    pub out: usize,
    pub inp: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Attn {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub dim: usize,
}

#[derive(Clone, Debug)]
pub(crate) struct BlockPlan {
    pub conv1: Conv3,
    pub conv2: Conv3,
    pub skip: Option<Dense>,
    pub cond: Dense,
    pub attn: Attn,
}

/// Offsets of every layer inside the flat parameter vector.
#[derive(Clone, Debug)]
pub(crate) struct Plan {
    pub time1: Dense,
    pub time2: Dense,
    pub var: Option<(Dense, Dense)>,
    pub input: Dense,
    pub encoder: Vec<BlockPlan>,
    /// `decoder[l]` runs at level `l`, for `l` in `0..depth-1`.
    pub decoder: Vec<BlockPlan>,
    pub output: Dense,
}

struct Builder {
    layout: ParamLayout,
}

impl Builder {
    fn dense(&mut self, name: &str, out: usize, inp: usize) -> Dense {
        let w = self.layout.push(format!("{name}.weight"), vec![out, inp], inp, true);
        let b = self.layout.push(format!("{name}.bias"), vec![out], inp, false);
        Dense { w, b, out, inp }
    }

    fn conv3(&mut self, name: &str, out: usize, inp: usize) -> Conv3 {
        let w = self.layout.push(format!("{name}.weight"), vec![out, inp, 3, 3], inp * 9, true);
        let b = self.layout.push(format!("{name}.bias"), vec![out], inp * 9, false);
        Conv3 { w, b, out, inp }
    }

    fn attn(&mut self, name: &str, dim: usize) -> Attn {
        let mut m = |p: &str| self.layout.push(format!("{name}.{p}"), vec![dim, dim], dim, true);
        Attn {
            wq: m("query"),
            wk: m("key"),
            wv: m("value"),
            wo: m("out"),
            dim,
        }
    }

    fn block(&mut self, name: &str, inp: usize, out: usize, emb: usize, attn_dim: usize) -> BlockPlan {
        BlockPlan {
            conv1: self.conv3(&format!("{name}.res.conv1"), out, inp),
            conv2: self.conv3(&format!("{name}.res.conv2"), out, out),
            skip: (inp != out).then(|| self.dense(&format!("{name}.res.skip"), out, inp)),
            cond: self.dense(&format!("{name}.cond"), out, emb),
            attn: self.attn(&format!("{name}.attn"), attn_dim),
        }
    }
}

pub(crate) fn build_plan(cfg: &ModelConfig) -> (ParamLayout, Plan) {
    let mut b = Builder {
        layout: ParamLayout::default(),
    };
    let e = cfg.emb_out;
    let time1 = b.dense("time_emb.fc1", e, (cfg.history + 1) * cfg.d_t);
    let time2 = b.dense("time_emb.fc2", e, e);
    let var = match cfg.forcing_kind {
        ForcingKind::None => None,
        _ => Some((b.dense("var_emb.fc1", e, cfg.forcing_width()), b.dense("var_emb.fc2", e, e))),
    };
    let u = cfg.embedding_width();
    let d = cfg.attn_dim();
    let input = b.dense("input_proj", cfg.base_channels, cfg.history);
    let mut encoder = Vec::with_capacity(cfg.depth);
    for l in 0..cfg.depth {
        let inp = if l == 0 { cfg.base_channels } else { cfg.channels(l - 1) };
        encoder.push(b.block(&format!("down{l}"), inp, cfg.channels(l), u, d));
    }
    let mut decoder = Vec::with_capacity(cfg.depth.saturating_sub(1));
    for l in 0..cfg.depth.saturating_sub(1) {
        let inp = cfg.channels(l + 1) + cfg.channels(l);
        decoder.push(b.block(&format!("up{l}"), inp, cfg.channels(l), u, d));
    }
    let output = b.dense("output_proj", 1, cfg.base_channels);
    (
        b.layout,
        Plan {
            time1,
            time2,
            var,
            input,
            encoder,
            decoder,
            output,
        },
    )
}

/// Flat parameter vector plus the layout naming its tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorParams<T> {
    layout: Arc<ParamLayout>,
    values: Vec<T>,
}

impl<T: Real> PredictorParams<T> {
    pub(crate) fn from_parts(layout: Arc<ParamLayout>, values: Vec<T>) -> Result<Self> {
        if values.len() != layout.total() {
            return Err(Error::Shape(format!(
                "{} parameter values for a layout of {}",
                values.len(),
                layout.total()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter value".into()));
        }
        Ok(Self { layout, values })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }


    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, name: &str) -> Option<&[T]> {
        self.layout.get(name).map(|e| &self.values[e.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [T]> {
        let range = self.layout.get(name)?.range();
        Some(&mut self.values[range])
    }

    /// Converts to another scalar type (e.g. `f32` -> `f64` for checks).
    pub fn cast<U: Real>(&self) -> PredictorParams<U> {
        PredictorParams {
            layout: self.layout.clone(),
            values: self.values.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

/// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` for every tensor, drawn from
/// a ChaCha stream seeded by `seed`.
pub fn init_params<T: Real>(cfg: &ModelConfig, seed: u64) -> Result<PredictorParams<T>> {
    cfg.validate()?;
    let (layout, _) = build_plan(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![T::zero(); layout.total()];
    for e in layout.entries() {
        let bound = 1.0 / (e.fan_in.max(1) as f64).sqrt();
        for v in &mut values[e.range()] {
            *v = T::from_f64(rng.gen_range(-bound..bound));
        }
    }
    PredictorParams::from_parts(Arc::new(layout), values)
}
