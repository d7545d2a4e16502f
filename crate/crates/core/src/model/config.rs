use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{DatasetBundle, ForcingKind, TemporalInput};

/// Architecture of the conditioned UNet predictor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// History length L (input channels).
    pub history: usize,
    pub nx: usize,
    pub ny: usize,
    pub base_channels: usize,
    /// UNet levels; level `l` has `base_channels * 2^l` channels.
    pub depth: usize,
    /// Sinusoidal embedding width per time id (even).
    pub d_t: usize,
    /// Output width of each embedding branch.
    pub emb_out: usize,
    pub forcing_kind: ForcingKind,
    /// Forcing parameter dimension: P for constant parameters, 1 for a
    /// time-varying scalar, 0 without forcing.
    pub forcing_dim: usize,
    pub weight_decay: f64,
    /// Attention tokens are channels described by a `attn_grid x attn_grid`
    /// block average, so the attention width is `attn_grid^2`.
    pub attn_grid: usize,
}

impl ModelConfig {
    /// Full-size defaults: depth 4, 32 base channels, d_t = 64, 32-wide
    /// embeddings.
    pub fn new(history: usize, nx: usize, ny: usize, forcing_kind: ForcingKind, forcing_dim: usize) -> Self {
        Self {
            history,
            nx,
            ny,
            base_channels: 32,
            depth: 4,
            d_t: 64,
            emb_out: 32,
            forcing_kind,
            forcing_dim,
            weight_decay: 1e-5,
            attn_grid: 4,
        }
    }

    /// Config matching the grid and forcing layout of `bundle`.
    pub fn for_dataset(bundle: &DatasetBundle, history: usize) -> Result<Self> {
        let (nx, ny) = bundle.grid_shape().ok_or(Error::EmptyDataset)?;
        let kind = bundle.forcing_kind().unwrap_or(ForcingKind::None);
        Ok(Self::new(history, nx, ny, kind, bundle.param_dim()))
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    pub fn attn_dim(&self) -> usize {
        self.attn_grid * self.attn_grid
    }

    /// Width of the forcing branch input.
    pub fn forcing_width(&self) -> usize {
        self.forcing_kind.input_width(self.history, self.forcing_dim)
    }

    /// Width of the concatenated temporal embedding u(t).
    pub fn embedding_width(&self) -> usize {
        match self.forcing_kind {
            ForcingKind::None => self.emb_out,
            _ => 2 * self.emb_out,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.history == 0 || self.base_channels == 0 || self.depth == 0 || self.emb_out == 0 || self.attn_grid == 0 {
            return bad("history, base_channels, depth, emb_out and attn_grid must be positive".into());
        }
        if self.d_t == 0 || self.d_t % 2 != 0 {
            return bad(format!("sinusoidal width d_t = {} must be even and positive", self.d_t));
        }
        let div = 1usize << (self.depth - 1);
        if self.nx % div != 0 || self.ny % div != 0 {
            return bad(format!("grid {}x{} not divisible by 2^(depth-1) = {div}", self.nx, self.ny));
        }
        let (bx, by) = (self.nx / div, self.ny / div);
        if bx % self.attn_grid != 0 || by % self.attn_grid != 0 {
            return bad(format!(
                "coarsest level {bx}x{by} is not divisible by attn_grid = {}",
                self.attn_grid
            ));
        }
        match (self.forcing_kind, self.forcing_dim) {
            (ForcingKind::None, 0) | (ForcingKind::TimeVarying, 1) => {}
            (ForcingKind::ConstantParams, p) if p > 0 => {}
            (k, p) => return bad(format!("forcing dim {p} does not fit forcing kind {k:?}")),
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative".into());
        }
        Ok(())
    }

    pub fn check_temporal(&self, ti: &TemporalInput) -> Result<()> {
        if ti.time_ids.len() != self.history + 1 || ti.forcing.len() != self.forcing_width() {
            return Err(Error::Shape(format!(
                "temporal input has {} time ids and {} forcing values, expected {} and {}",
                ti.time_ids.len(),
                ti.forcing.len(),
                self.history + 1,
                self.forcing_width()
            )));
        }
        if ti.time_ids.iter().any(|&t| t < 0) {
            return Err(Error::Domain("time ids must be non-negative".into()));
        }
        Ok(())
    }
}
