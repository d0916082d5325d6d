use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::tensor::{check_finite, matmul, matmul_backward, Tensor};

/// Forward-pass mode. Training mode carries the RNG that draws dropout
/// masks and makes batch norm use batch statistics.
pub enum Mode<'a> {
    Eval,
    Train(&'a mut ChaCha8Rng),
}

impl Mode<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Affine map on the last axis: `[N, in] -> [N, out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `[in, out]`
    pub weight: Tensor,
    /// `[1, out]`
    pub bias: Tensor,
}

impl Dense {
    /// Uniform `±1/√in` initialization for weights and bias.
    pub fn init(n_in: usize, n_out: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (n_in as f64).sqrt();
        let weight = Tensor::from_fn(&[n_in, n_out], |_| rng.random_range(-bound..bound));
        let bias = Tensor::from_fn(&[1, n_out], |_| rng.random_range(-bound..bound));
        Self { weight, bias }
    }

    pub fn n_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn n_out(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.weight.rank() != 2 || self.bias.shape() != [1, self.weight.shape()[1]] {
            return Err(Error::Shape {
                op: "Dense",
                left: self.weight.shape().to_vec(),
                right: self.bias.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: self.weight.zeros_like(),
            bias: self.bias.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut y = matmul(x, &self.weight)?;
        let n_out = self.n_out();
        let bias = self.bias.data();
        for row in y.data_mut().chunks_mut(n_out) {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += b;
            }
        }
        check_finite(y.data(), "dense")?;
        Ok(y)
    }

    /// Returns the input gradient and accumulates parameter gradients into `grads`.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor, grads: &mut Dense) -> Result<Tensor> {
        let (gx, gw) = matmul_backward(x, &self.weight, upstream)?;
        grads.weight.add_assign(&gw)?;
        let n_out = self.n_out();
        let gb = grads.bias.data_mut();
        for row in upstream.data().chunks(n_out) {
            for (g, u) in gb.iter_mut().zip(row) {
                *g += u;
            }
        }
        Ok(gx)
    }
}

impl Parameters for Dense {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "weight"), &self.weight));
        out.push((join(prefix, "bias"), &self.bias));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.weight);
        out.push(&mut self.bias);
    }
}

/// Batch normalization with separate statistics for every `(time, feature)`
/// position of a `[B, L, C]` input, reduced over the batch axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    /// `[L, C]`
    pub gamma: Tensor,
    /// `[L, C]`
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    batch_mean: Vec<f64>,
    batch_var: Vec<f64>,
    batch: usize,
    training: bool,
}

impl BatchNorm {
    pub fn new(len: usize, features: usize) -> Self {
        let n = len * features;
        Self {
            gamma: Tensor::full(&[len, features], 1.0),
            beta: Tensor::zeros(&[len, features]),
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.gamma.len();
        if self.gamma.rank() != 2
            || self.beta.shape() != self.gamma.shape()
            || self.running_mean.len() != n
            || self.running_var.len() != n
        {
            return Err(Error::Shape {
                op: "BatchNorm",
                left: self.gamma.shape().to_vec(),
                right: self.beta.shape().to_vec(),
            });
        }
        if self.running_var.iter().any(|v| !(v.is_finite() && *v >= 0.0))
            || self.running_mean.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite { op: "BatchNorm" });
        }
        Ok(())
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            gamma: self.gamma.zeros_like(),
            beta: self.beta.zeros_like(),
            ..self.clone()
        }
    }

    pub fn forward(&self, x: &Tensor, training: bool) -> Result<(Tensor, BatchNormCache)> {
        let positions = self.gamma.len();
        if x.rank() != 3 || x.shape()[1..] != *self.gamma.shape() {
            return Err(Error::Shape {
                op: "batch_norm",
                left: self.gamma.shape().to_vec(),
                right: x.shape().to_vec(),
            });
        }
        let batch = x.shape()[0];
        let data = x.data();
        let (mean, var) = if training {
            let mut mean = vec![0.0; positions];
            for row in data.chunks(positions) {
                for (m, v) in mean.iter_mut().zip(row) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= batch as f64);
            let mut var = vec![0.0; positions];
            for row in data.chunks(positions) {
                for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
            var.iter_mut().for_each(|s| *s /= batch as f64);
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut xhat = vec![0.0; data.len()];
        let mut out = vec![0.0; data.len()];
        let (gamma, beta) = (self.gamma.data(), self.beta.data());
        for (b, row) in data.chunks(positions).enumerate() {
            for p in 0..positions {
                let idx = b * positions + p;
                xhat[idx] = (row[p] - mean[p]) * inv_std[p];
                out[idx] = gamma[p] * xhat[idx] + beta[p];
            }
        }
        check_finite(&out, "batch_norm")?;
        let y = Tensor::new(x.shape().to_vec(), out)?;
        Ok((
            y,
            BatchNormCache {
                xhat,
                inv_std,
                batch_mean: mean,
                batch_var: var,
                batch,
                training,
            },
        ))
    }

    pub fn backward(
        &self,
        cache: &BatchNormCache,
        upstream: &Tensor,
        grads: &mut BatchNorm,
    ) -> Result<Tensor> {
        let positions = self.gamma.len();
        let batch = cache.batch;
        let g = upstream.data();
        if g.len() != batch * positions {
            return Err(Error::Shape {
                op: "batch_norm_backward",
                left: vec![batch, positions],
                right: upstream.shape().to_vec(),
            });
        }
        let gamma = self.gamma.data();
        let mut sum_g = vec![0.0; positions];
        let mut sum_gx = vec![0.0; positions];
        for b in 0..batch {
            for p in 0..positions {
                let idx = b * positions + p;
                sum_g[p] += g[idx];
                sum_gx[p] += g[idx] * cache.xhat[idx];
            }
        }
        for (d, s) in grads.gamma.data_mut().iter_mut().zip(&sum_gx) {
            *d += s;
        }
        for (d, s) in grads.beta.data_mut().iter_mut().zip(&sum_g) {
            *d += s;
        }
        let mut gx = vec![0.0; g.len()];
        let n = batch as f64;
        for b in 0..batch {
            for p in 0..positions {
                let idx = b * positions + p;
                gx[idx] = if cache.training {
                    gamma[p] * cache.inv_std[p] / n
                        * (n * g[idx] - sum_g[p] - cache.xhat[idx] * sum_gx[p])
                } else {
                    gamma[p] * cache.inv_std[p] * g[idx]
                };
            }
        }
        check_finite(&gx, "batch_norm_backward")?;
        Tensor::new(upstream.shape().to_vec(), gx)
    }

    /// Folds the batch statistics of a training-mode pass into the running
    /// estimates used in eval mode. Variance uses the unbiased estimator.
    pub fn absorb(&mut self, cache: &BatchNormCache) {
        if !cache.training {
            return;
        }
        let m = self.momentum;
        let n = cache.batch as f64;
        let correction = if cache.batch > 1 { n / (n - 1.0) } else { 1.0 };
        for (r, b) in self.running_mean.iter_mut().zip(&cache.batch_mean) {
            *r = (1.0 - m) * *r + m * b;
        }
        for (r, b) in self.running_var.iter_mut().zip(&cache.batch_var) {
            *r = (1.0 - m) * *r + m * b * correction;
        }
    }
}

impl Parameters for BatchNorm {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "gamma"), &self.gamma));
        out.push((join(prefix, "beta"), &self.beta));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.gamma);
        out.push(&mut self.beta);
    }
}

/// Inverted dropout: kept units are scaled by `1/(1-p)` at train time so
/// eval mode is a plain identity.
pub(crate) fn dropout(x: Tensor, rate: f64, mode: &mut Mode) -> (Tensor, Option<Vec<f64>>) {
    let rng = match mode {
        Mode::Train(rng) if rate > 0.0 => rng,
        _ => return (x, None),
    };
    let scale = 1.0 / (1.0 - rate);
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect();
    let mut y = x;
    for (v, m) in y.data_mut().iter_mut().zip(&mask) {
        *v *= m;
    }
    (y, Some(mask))
}

pub(crate) fn dropout_backward(mut g: Tensor, mask: &Option<Vec<f64>>) -> Tensor {
    if let Some(mask) = mask {
        for (v, m) in g.data_mut().iter_mut().zip(mask) {
            *v *= m;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_shapes_and_bias() {
        let mut d = Dense::init(3, 2, 0);
        d.weight.data_mut().fill(0.0);
        d.bias.data_mut().copy_from_slice(&[1.0, -2.0]);
        let y = d.forward(&Tensor::full(&[4, 3], 5.0)).unwrap();
        assert_eq!(y.shape(), &[4, 2]);
        assert!(y.data().chunks(2).all(|r| r == [1.0, -2.0]));
    }

    #[test]
    fn batch_norm_train_normalizes_each_position() {
        let bn = BatchNorm::new(2, 3);
        let x = Tensor::from_fn(&[5, 2, 3], |i| ((i * 7) % 11) as f64 - 4.0);
        let (y, _) = bn.forward(&x, true).unwrap();
        for p in 0..6 {
            let col: Vec<f64> = (0..5).map(|b| y.data()[b * 6 + p]).collect();
            let mean = col.iter().sum::<f64>() / 5.0;
            assert!(mean.abs() < 1e-12);
        }
    }

    #[test]
    fn batch_norm_running_stats() {
        let mut bn = BatchNorm::new(1, 1);
        let x = Tensor::new(vec![2, 1, 1], vec![1.0, 3.0]).unwrap();
        let (_, cache) = bn.forward(&x, true).unwrap();
        bn.absorb(&cache);
        assert!((bn.running_mean[0] - 0.2).abs() < 1e-15);
        // unbiased batch var = 2
        assert!((bn.running_var[0] - (0.9 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_scales() {
        let x = Tensor::full(&[1000], 1.0);
        let (y, mask) = dropout(x.clone(), 0.5, &mut Mode::Eval);
        assert_eq!(y, x);
        assert!(mask.is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, mask) = dropout(x, 0.5, &mut Mode::Train(&mut rng));
        assert!(mask.is_some());
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = y.data().iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept));
    }
}
