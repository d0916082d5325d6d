//! TSMixer and its two KAN variants.
//!
//! All three share the same trunk of [`MixerBlock`]s and differ after it:
//!
//! - `tsmixer`: dense temporal projection `L -> H`
//! - `tskanmixer_v01`: the temporal projection is a two-depth KAN `[L, kan_dim, H]`
//! - `tskanmixer_v02`: a residual KAN time-mixing layer `[L, kan_dim, L]`
//!   followed by the dense projection
//!
//! Temporal maps act on each feature's length-`L` column and are shared
//! across features.

mod block;
mod config;
mod layers;

pub use block::{BlockCache, FeatureMixCache, MixerBlock, TimeMixCache};
pub use config::{KanSettings, LossKind, ModelConfig, Variant};
pub use layers::{BatchNorm, BatchNormCache, Dense, Mode};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::TwoDepthKan;
use crate::params::{join, Parameters};
use crate::tensor::Tensor;

use block::{dims3, from_time_rows, to_time_rows};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Projection {
    Dense(Dense),
    Kan(TwoDepthKan),
}

impl Projection {
    fn zeros_like(&self) -> Self {
        match self {
            Projection::Dense(d) => Projection::Dense(d.zeros_like()),
            Projection::Kan(k) => Projection::Kan(k.zeros_like()),
        }
    }

    fn as_map(&self) -> TemporalMap<'_> {
        match self {
            Projection::Dense(d) => TemporalMap::Dense(d),
            Projection::Kan(k) => TemporalMap::Kan(k),
        }
    }

    fn as_grads(&mut self) -> TemporalGrads<'_> {
        match self {
            Projection::Dense(d) => TemporalGrads::Dense(d),
            Projection::Kan(k) => TemporalGrads::Kan(k),
        }
    }
}

/// A map applied to every feature's time column.
#[derive(Clone, Copy)]
enum TemporalMap<'a> {
    Dense(&'a Dense),
    Kan(&'a TwoDepthKan),
}

enum TemporalGrads<'a> {
    Dense(&'a mut Dense),
    Kan(&'a mut TwoDepthKan),
}

impl TemporalMap<'_> {
    fn dims(self) -> (usize, usize) {
        match self {
            TemporalMap::Dense(d) => (d.n_in(), d.n_out()),
            TemporalMap::Kan(k) => (k.n_in(), k.n_out()),
        }
    }
}

/// Intermediate values of a temporal map over time rows `[B·C, L]`.
pub struct TemporalCache {
    rows: Tensor,
    hidden: Option<Tensor>,
}

fn temporal_forward(map: TemporalMap, x: &Tensor) -> Result<(Tensor, TemporalCache)> {
    let (b, l, c) = dims3(x)?;
    let (n_in, _) = map.dims();
    if n_in != l {
        return Err(Error::Shape {
            op: "temporal_projection",
            left: vec![n_in],
            right: x.shape().to_vec(),
        });
    }
    let rows = to_time_rows(x)?;
    let (out, hidden) = match map {
        TemporalMap::Dense(d) => (d.forward(&rows)?, None),
        TemporalMap::Kan(k) => {
            let (out, hidden) = k.forward_with_hidden(&rows)?;
            (out, Some(hidden))
        }
    };
    Ok((from_time_rows(out, b, c)?, TemporalCache { rows, hidden }))
}

fn temporal_backward(
    map: TemporalMap,
    cache: &TemporalCache,
    upstream: &Tensor,
    grads: TemporalGrads,
) -> Result<Tensor> {
    let (b, _, c) = dims3(upstream)?;
    let g = to_time_rows(upstream)?;
    let g_rows = match (map, grads) {
        (TemporalMap::Dense(d), TemporalGrads::Dense(gd)) => d.backward(&cache.rows, &g, gd)?,
        (TemporalMap::Kan(k), TemporalGrads::Kan(gk)) => {
            let hidden = cache
                .hidden
                .as_ref()
                .expect("KAN cache holds hidden activations");
            let (g_rows, kan_grads) = k.backward(&cache.rows, hidden, &g)?;
            *gk = kan_grads;
            g_rows
        }
        _ => return Err(Error::Config("gradient buffer does not match projection".into())),
    };
    from_time_rows(g_rows, b, c)
}

/// Dense map along time, `[B, L, C] -> [B, H, C]`.
pub fn temporal_projection_fc(dense: &Dense, x: &Tensor) -> Result<Tensor> {
    Ok(temporal_forward(TemporalMap::Dense(dense), x)?.0)
}

/// Two-depth KAN along time, `[B, L, C] -> [B, H, C]`.
pub fn temporal_projection_kan(kan: &TwoDepthKan, x: &Tensor) -> Result<Tensor> {
    Ok(temporal_forward(TemporalMap::Kan(kan), x)?.0)
}

/// KAN `[L, kan_dim, L]` along time plus a residual connection.
pub fn kan_time_mixing_forward(kan: &TwoDepthKan, x: &Tensor) -> Result<Tensor> {
    if kan.n_out() != kan.n_in() {
        return Err(Error::Shape {
            op: "kan_time_mixing",
            left: vec![kan.n_in()],
            right: vec![kan.n_out()],
        });
    }
    temporal_projection_kan(kan, x)?.add(x)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    config: ModelConfig,
    blocks: Vec<MixerBlock>,
    kan_time_mixing: Option<TwoDepthKan>,
    projection: Projection,
}

pub struct ModelCache {
    batch: usize,
    blocks: Vec<BlockCache>,
    kan_mixing: Option<TemporalCache>,
    projection: TemporalCache,
}

impl ForecastModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut seeds = ChaCha8Rng::seed_from_u64(config.seed);
        let (l, h, c) = (config.input_len, config.horizon, config.features);
        let blocks = (0..config.blocks)
            .map(|_| {
                let s = [seeds.next_u64(), seeds.next_u64(), seeds.next_u64()];
                MixerBlock::new(l, c, config.hidden_size, config.dropout, s)
            })
            .collect();
        let kan_seed = seeds.next_u64();
        let proj_seed = seeds.next_u64();
        let kan_time_mixing = match (&config.kan, config.variant) {
            (Some(kan), Variant::TskanmixerV02) => Some(TwoDepthKan::new(
                l,
                kan.dim,
                l,
                kan.knot_grid()?,
                kan_seed,
            )?),
            _ => None,
        };
        let projection = match (&config.kan, config.variant) {
            (Some(kan), Variant::TskanmixerV01) => Projection::Kan(TwoDepthKan::new(
                l,
                kan.dim,
                h,
                kan.knot_grid()?,
                proj_seed,
            )?),
            _ => Projection::Dense(Dense::init(l, h, proj_seed)),
        };
        Ok(Self {
            config,
            blocks,
            kan_time_mixing,
            projection,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn blocks(&self) -> &[MixerBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [MixerBlock] {
        &mut self.blocks
    }

    pub fn projection(&self) -> &Projection {
        &self.projection
    }

    pub fn projection_mut(&mut self) -> &mut Projection {
        &mut self.projection
    }

    pub fn kan_time_mixing(&self) -> Option<&TwoDepthKan> {
        self.kan_time_mixing.as_ref()
    }

    pub fn kan_time_mixing_mut(&mut self) -> Option<&mut TwoDepthKan> {
        self.kan_time_mixing.as_mut()
    }

    /// Checks that the parameters agree with the config and the variant's
    /// structure. Run after deserializing a checkpoint.
    pub fn validate(&self) -> Result<()> {
        let cfg = &self.config;
        cfg.validate()?;
        let (l, h, c) = (cfg.input_len, cfg.horizon, cfg.features);
        if self.blocks.len() != cfg.blocks {
            return Err(Error::Checkpoint(format!(
                "expected {} blocks, found {}",
                cfg.blocks,
                self.blocks.len()
            )));
        }
        for block in &self.blocks {
            block.validate()?;
            if block.time_norm.gamma.shape() != [l, c]
                || block.feature_dense_1.n_out() != cfg.hidden_size
            {
                return Err(Error::Checkpoint("mixer block does not match config".into()));
            }
        }
        let structure_ok = match cfg.variant {
            Variant::Tsmixer => {
                self.kan_time_mixing.is_none() && matches!(self.projection, Projection::Dense(_))
            }
            Variant::TskanmixerV01 => {
                self.kan_time_mixing.is_none() && matches!(self.projection, Projection::Kan(_))
            }
            Variant::TskanmixerV02 => {
                self.kan_time_mixing.is_some() && matches!(self.projection, Projection::Dense(_))
            }
        };
        if !structure_ok {
            return Err(Error::Checkpoint(format!(
                "layers do not match variant {}",
                cfg.variant
            )));
        }
        if let Some(kan) = &self.kan_time_mixing {
            kan.validate()?;
            if (kan.n_in(), kan.n_out()) != (l, l) {
                return Err(Error::Checkpoint("KAN time mixing must map L -> L".into()));
            }
        }
        match &self.projection {
            Projection::Dense(d) => d.validate()?,
            Projection::Kan(k) => k.validate()?,
        }
        if self.projection.as_map().dims() != (l, h) {
            return Err(Error::Checkpoint("temporal projection must map L -> H".into()));
        }
        Ok(())
    }

    /// Zero-valued copy used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            blocks: self.blocks.iter().map(MixerBlock::zeros_like).collect(),
            kan_time_mixing: self.kan_time_mixing.as_ref().map(TwoDepthKan::zeros_like),
            projection: self.projection.zeros_like(),
        }
    }

    /// `[B, L, C] -> [B, H, C]`
    pub fn forward(&self, x: &Tensor, mode: &mut Mode) -> Result<(Tensor, ModelCache)> {
        let (batch, l, c) = dims3(x)?;
        if (l, c) != (self.config.input_len, self.config.features) {
            return Err(Error::Shape {
                op: "model_forward",
                left: vec![batch, self.config.input_len, self.config.features],
                right: x.shape().to_vec(),
            });
        }
        let mut h = x.clone();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (next, cache) = block.forward(&h, mode)?;
            caches.push(cache);
            h = next;
        }
        let kan_mixing = match &self.kan_time_mixing {
            Some(kan) => {
                let (delta, cache) = temporal_forward(TemporalMap::Kan(kan), &h)?;
                h = delta.add(&h)?;
                Some(cache)
            }
            None => None,
        };
        let (out, projection) = temporal_forward(self.projection.as_map(), &h)?;
        Ok((
            out,
            ModelCache {
                batch,
                blocks: caches,
                kan_mixing,
                projection,
            },
        ))
    }

    /// Eval-mode forecast.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x, &mut Mode::Eval)?.0)
    }

    /// Gradients of `Σ upstream ⊙ output` for the pass recorded in `cache`.
    /// Returns the input gradient and a model-shaped parameter gradient.
    pub fn backward(&self, cache: &ModelCache, upstream: &Tensor) -> Result<(Tensor, ForecastModel)> {
        let want = [cache.batch, self.config.horizon, self.config.features];
        if upstream.shape() != want {
            return Err(Error::Shape {
                op: "model_backward",
                left: want.to_vec(),
                right: upstream.shape().to_vec(),
            });
        }
        let mut grads = self.zeros_like();
        let mut g = temporal_backward(
            self.projection.as_map(),
            &cache.projection,
            upstream,
            grads.projection.as_grads(),
        )?;
        if let (Some(kan), Some(kc), Some(gk)) = (
            &self.kan_time_mixing,
            &cache.kan_mixing,
            grads.kan_time_mixing.as_mut(),
        ) {
            let g_kan = temporal_backward(TemporalMap::Kan(kan), kc, &g, TemporalGrads::Kan(gk))?;
            g = g_kan.add(&g)?;
        }
        for ((block, bc), bg) in self
            .blocks
            .iter()
            .zip(&cache.blocks)
            .zip(grads.blocks.iter_mut())
            .rev()
        {
            g = block.backward(bc, &g, bg)?;
        }
        Ok((g, grads))
    }

    /// Updates batch-norm running statistics from a training-mode pass.
    pub fn absorb_batch_stats(&mut self, cache: &ModelCache) {
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks) {
            block.absorb(bc);
        }
    }
}

impl Parameters for ForecastModel {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        for (i, block) in self.blocks.iter().enumerate() {
            block.collect(&join(prefix, &format!("block{i}")), out);
        }
        if let Some(kan) = &self.kan_time_mixing {
            kan.collect(&join(prefix, "kan_time_mixing"), out);
        }
        let name = join(prefix, "projection");
        match &self.projection {
            Projection::Dense(d) => d.collect(&name, out),
            Projection::Kan(k) => k.collect(&name, out),
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for block in &mut self.blocks {
            block.collect_mut(out);
        }
        if let Some(kan) = &mut self.kan_time_mixing {
            kan.collect_mut(out);
        }
        match &mut self.projection {
            Projection::Dense(d) => d.collect_mut(out),
            Projection::Kan(k) => k.collect_mut(out),
        }
    }
}
