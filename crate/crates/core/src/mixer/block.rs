use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::{elementwise, relu, relu_grad, transpose_time_feature, Mapped, Tensor};

use super::layers::{dropout, dropout_backward, BatchNorm, BatchNormCache, Dense, Mode};

/// `[B, L, C] -> [B·C, L]`: one row per (sample, feature) time column.
pub(crate) fn to_time_rows(x: &Tensor) -> Result<Tensor> {
    let (b, l, c) = dims3(x)?;
    transpose_time_feature(x)?.reshape(&[b * c, l])
}

/// Inverse of [`to_time_rows`] for rows of any length `n`: `[B·C, n] -> [B, n, C]`.
pub(crate) fn from_time_rows(rows: Tensor, batch: usize, features: usize) -> Result<Tensor> {
    let n = rows.shape()[1];
    transpose_time_feature(&rows.reshape(&[batch, features, n])?)
}

pub(crate) fn dims3(x: &Tensor) -> Result<(usize, usize, usize)> {
    match *x.shape() {
        [b, l, c] => Ok((b, l, c)),
        _ => Err(Error::Rank {
            op: "mixer",
            expected: 3,
            shape: x.shape().to_vec(),
        }),
    }
}

/// One TSMixer block: a time-mixing MLP followed by a feature-mixing MLP,
/// each wrapped with batch norm, dropout and a residual connection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixerBlock {
    pub time_norm: BatchNorm,
    /// `L -> L`
    pub time_dense: Dense,
    pub feature_norm: BatchNorm,
    /// `C -> hidden`
    pub feature_dense_1: Dense,
    /// `hidden -> C`
    pub feature_dense_2: Dense,
    pub dropout: f64,
}

pub struct TimeMixCache {
    norm: BatchNormCache,
    rows: Tensor,
    act: Mapped,
    mask: Option<Vec<f64>>,
}

pub struct FeatureMixCache {
    norm: BatchNormCache,
    rows: Tensor,
    act: Mapped,
    hidden: Tensor,
    mask_1: Option<Vec<f64>>,
    mask_2: Option<Vec<f64>>,
}

pub struct BlockCache {
    time: TimeMixCache,
    mid: Tensor,
    feature: FeatureMixCache,
}

impl MixerBlock {
    pub fn new(
        input_len: usize,
        features: usize,
        hidden: usize,
        dropout: f64,
        seeds: [u64; 3],
    ) -> Self {
        Self {
            time_norm: BatchNorm::new(input_len, features),
            time_dense: Dense::init(input_len, input_len, seeds[0]),
            feature_norm: BatchNorm::new(input_len, features),
            feature_dense_1: Dense::init(features, hidden, seeds[1]),
            feature_dense_2: Dense::init(hidden, features, seeds[2]),
            dropout,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.time_norm.validate()?;
        self.feature_norm.validate()?;
        for d in [&self.time_dense, &self.feature_dense_1, &self.feature_dense_2] {
            d.validate()?;
        }
        let (l, c) = (self.time_norm.gamma.shape()[0], self.time_norm.gamma.shape()[1]);
        let consistent = self.time_dense.n_in() == l
            && self.time_dense.n_out() == l
            && self.feature_norm.gamma.shape() == [l, c]
            && self.feature_dense_1.n_in() == c
            && self.feature_dense_2.n_in() == self.feature_dense_1.n_out()
            && self.feature_dense_2.n_out() == c;
        if !consistent {
            return Err(Error::Config(
                "mixer block layer shapes are inconsistent".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidValue {
                key: "dropout".into(),
                reason: format!("{} not in [0, 1)", self.dropout),
            });
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            time_norm: self.time_norm.zeros_like(),
            time_dense: self.time_dense.zeros_like(),
            feature_norm: self.feature_norm.zeros_like(),
            feature_dense_1: self.feature_dense_1.zeros_like(),
            feature_dense_2: self.feature_dense_2.zeros_like(),
            dropout: self.dropout,
        }
    }

    /// norm → time rows → dense L→L → ReLU → dropout → back → + x
    pub fn time_mixing_forward(&self, x: &Tensor, mode: &mut Mode) -> Result<(Tensor, TimeMixCache)> {
        let (b, _, c) = dims3(x)?;
        let (normed, norm) = self.time_norm.forward(x, mode.is_train())?;
        let rows = to_time_rows(&normed)?;
        let act = elementwise(&self.time_dense.forward(&rows)?, relu, relu_grad)?;
        let (dropped, mask) = dropout(act.output.clone(), self.dropout, mode);
        let out = from_time_rows(dropped, b, c)?.add(x)?;
        Ok((
            out,
            TimeMixCache {
                norm,
                rows,
                act,
                mask,
            },
        ))
    }

    pub fn time_mixing_backward(
        &self,
        cache: &TimeMixCache,
        upstream: &Tensor,
        grads: &mut MixerBlock,
    ) -> Result<Tensor> {
        let (b, _, c) = dims3(upstream)?;
        let g = dropout_backward(to_time_rows(upstream)?, &cache.mask);
        let g = cache.act.backward(&g)?;
        let g = self
            .time_dense
            .backward(&cache.rows, &g, &mut grads.time_dense)?;
        let g = from_time_rows(g, b, c)?;
        let g = self
            .time_norm
            .backward(&cache.norm, &g, &mut grads.time_norm)?;
        g.add(upstream)
    }

    /// norm → dense C→hidden → ReLU → dropout → dense hidden→C → dropout → + x
    pub fn feature_mixing_forward(
        &self,
        x: &Tensor,
        mode: &mut Mode,
    ) -> Result<(Tensor, FeatureMixCache)> {
        let (b, l, c) = dims3(x)?;
        let (normed, norm) = self.feature_norm.forward(x, mode.is_train())?;
        let rows = normed.reshape(&[b * l, c])?;
        let act = elementwise(&self.feature_dense_1.forward(&rows)?, relu, relu_grad)?;
        let (dropped, mask_1) = dropout(act.output.clone(), self.dropout, mode);
        let h = self.feature_dense_2.forward(&dropped)?;
        let hidden = dropped;
        let (h, mask_2) = dropout(h, self.dropout, mode);
        let out = h.reshape(&[b, l, c])?.add(x)?;
        Ok((
            out,
            FeatureMixCache {
                norm,
                rows,
                act,
                hidden,
                mask_1,
                mask_2,
            },
        ))
    }

    pub fn feature_mixing_backward(
        &self,
        cache: &FeatureMixCache,
        upstream: &Tensor,
        grads: &mut MixerBlock,
    ) -> Result<Tensor> {
        let (b, l, c) = dims3(upstream)?;
        let g = dropout_backward(upstream.clone().reshape(&[b * l, c])?, &cache.mask_2);
        let g = self
            .feature_dense_2
            .backward(&cache.hidden, &g, &mut grads.feature_dense_2)?;
        let g = dropout_backward(g, &cache.mask_1);
        let g = cache.act.backward(&g)?;
        let g = self
            .feature_dense_1
            .backward(&cache.rows, &g, &mut grads.feature_dense_1)?;
        let g = g.reshape(&[b, l, c])?;
        let g = self
            .feature_norm
            .backward(&cache.norm, &g, &mut grads.feature_norm)?;
        g.add(upstream)
    }

    pub fn forward(&self, x: &Tensor, mode: &mut Mode) -> Result<(Tensor, BlockCache)> {
        let (mid, time) = self.time_mixing_forward(x, mode)?;
        let (out, feature) = self.feature_mixing_forward(&mid, mode)?;
        Ok((out, BlockCache { time, mid, feature }))
    }

    pub fn backward(
        &self,
        cache: &BlockCache,
        upstream: &Tensor,
        grads: &mut MixerBlock,
    ) -> Result<Tensor> {
        debug_assert_eq!(cache.mid.shape(), upstream.shape());
        let g = self.feature_mixing_backward(&cache.feature, upstream, grads)?;
        self.time_mixing_backward(&cache.time, &g, grads)
    }

    pub fn absorb(&mut self, cache: &BlockCache) {
        self.time_norm.absorb(&cache.time.norm);
        self.feature_norm.absorb(&cache.feature.norm);
    }
}

impl Parameters for MixerBlock {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.time_norm.collect(&join(prefix, "time_norm"), out);
        self.time_dense.collect(&join(prefix, "time_dense"), out);
        self.feature_norm.collect(&join(prefix, "feature_norm"), out);
        self.feature_dense_1.collect(&join(prefix, "feature_dense_1"), out);
        self.feature_dense_2.collect(&join(prefix, "feature_dense_2"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.time_norm.collect_mut(out);
        self.time_dense.collect_mut(out);
        self.feature_norm.collect_mut(out);
        self.feature_dense_1.collect_mut(out);
        self.feature_dense_2.collect_mut(out);
    }
}
