//! Kolmogorov-Arnold layers.
//!
//! A layer maps `n_in` inputs to `n_out` outputs through one learnable
//! univariate function per edge, summed at each output:
//!
//! ```text
//! y[j] = Σ_i φ_{j,i}(x[i])
//! φ_{j,i}(t) = w_b[j,i] · silu(t) + w_s[j,i] · Σ_m c[j,i,m] · B_m(t)
//! ```
//!
//! All edges of a layer share one [`KnotGrid`]. [`TwoDepthKan`] stacks two
//! layers as `[n_in, hidden, n_out]`, with `hidden = 2·n_in + 1` unless set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{join, Parameters};
use crate::spline::KnotGrid;
use crate::tensor::{check_finite, silu, silu_grad, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KanLayer {
    n_in: usize,
    n_out: usize,
    grid: KnotGrid,
    /// `[n_out, n_in, G + k]`
    coeffs: Tensor,
    /// `[n_out, n_in]`
    base_weight: Tensor,
    /// `[n_out, n_in]`
    spline_weight: Tensor,
}

// Per-sample scratch for the active basis window of every input.
struct BasisScratch {
    width: usize,
    starts: Vec<usize>,
    values: Vec<f64>,
    derivs: Vec<f64>,
    tmp: Vec<f64>,
}

impl BasisScratch {
    fn new(grid: &KnotGrid, n_in: usize) -> Self {
        let width = grid.degree() + 1;
        Self {
            width,
            starts: vec![0; n_in],
            values: vec![0.0; n_in * width],
            derivs: vec![0.0; n_in * width],
            tmp: vec![0.0; width],
        }
    }

    fn fill(&mut self, grid: &KnotGrid, row: &[f64], with_derivs: bool) {
        let w = self.width;
        for (i, &x) in row.iter().enumerate() {
            let vals = &mut self.values[i * w..(i + 1) * w];
            self.starts[i] = if with_derivs {
                let ders = &mut self.derivs[i * w..(i + 1) * w];
                grid.active_basis_with_derivatives(x, vals, ders, &mut self.tmp)
            } else {
                grid.active_basis(x, vals)
            };
        }
    }
}

impl KanLayer {
    /// Random initialization: coefficients drawn from `N(0, 0.1/√(G+k))`,
    /// base weights `1/√n_in`, spline weights 1. Deterministic in `seed`.
    pub fn init(n_in: usize, n_out: usize, grid: KnotGrid, seed: u64) -> Result<Self> {
        if n_in == 0 || n_out == 0 {
            return Err(Error::Config(format!(
                "KAN layer dims must be positive, got {n_in} -> {n_out}"
            )));
        }
        let nb = grid.basis_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 0.1 / (nb as f64).sqrt()).expect("positive std");
        let coeffs = Tensor::from_fn(&[n_out, n_in, nb], |_| normal.sample(&mut rng));
        Ok(Self {
            n_in,
            n_out,
            grid,
            coeffs,
            base_weight: Tensor::full(&[n_out, n_in], 1.0 / (n_in as f64).sqrt()),
            spline_weight: Tensor::full(&[n_out, n_in], 1.0),
        })
    }

    pub fn from_parts(
        grid: KnotGrid,
        coeffs: Tensor,
        base_weight: Tensor,
        spline_weight: Tensor,
    ) -> Result<Self> {
        if base_weight.rank() != 2 {
            return Err(Error::Rank {
                op: "KanLayer",
                expected: 2,
                shape: base_weight.shape().to_vec(),
            });
        }
        let (n_out, n_in) = (base_weight.shape()[0], base_weight.shape()[1]);
        let layer = Self {
            n_in,
            n_out,
            grid,
            coeffs,
            base_weight,
            spline_weight,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn validate(&self) -> Result<()> {
        let want = [self.n_out, self.n_in, self.grid.basis_count()];
        if self.coeffs.shape() != want {
            return Err(Error::Shape {
                op: "KanLayer coeffs",
                left: want.to_vec(),
                right: self.coeffs.shape().to_vec(),
            });
        }
        for w in [&self.base_weight, &self.spline_weight] {
            if w.shape() != [self.n_out, self.n_in] {
                return Err(Error::Shape {
                    op: "KanLayer weights",
                    left: vec![self.n_out, self.n_in],
                    right: w.shape().to_vec(),
                });
            }
        }
        Ok(())
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn grid(&self) -> &KnotGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &Tensor {
        &self.coeffs
    }

    pub fn base_weight(&self) -> &Tensor {
        &self.base_weight
    }

    pub fn spline_weight(&self) -> &Tensor {
        &self.spline_weight
    }

    pub fn coeffs_mut(&mut self) -> &mut Tensor {
        &mut self.coeffs
    }

    pub fn base_weight_mut(&mut self) -> &mut Tensor {
        &mut self.base_weight
    }

    pub fn spline_weight_mut(&mut self) -> &mut Tensor {
        &mut self.spline_weight
    }

    /// Same shapes and grid, all parameters zero. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self {
            n_in: self.n_in,
            n_out: self.n_out,
            grid: self.grid.clone(),
            coeffs: self.coeffs.zeros_like(),
            base_weight: self.base_weight.zeros_like(),
            spline_weight: self.spline_weight.zeros_like(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        if x.rank() != 2 || x.shape()[1] != self.n_in {
            return Err(Error::Shape {
                op: "kan_layer_forward",
                left: vec![0, self.n_in],
                right: x.shape().to_vec(),
            });
        }
        Ok(x.shape()[0])
    }

    /// `[B, n_in] -> [B, n_out]`
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let batch = self.check_input(x)?;
        let (n_in, n_out, nb) = (self.n_in, self.n_out, self.grid.basis_count());
        let (coeffs, bw, sw) = (
            self.coeffs.data(),
            self.base_weight.data(),
            self.spline_weight.data(),
        );
        let mut scratch = BasisScratch::new(&self.grid, n_in);
        let w = scratch.width;
        let mut silu_x = vec![0.0; n_in];
        let mut out = vec![0.0; batch * n_out];
        for b in 0..batch {
            let row = &x.data()[b * n_in..(b + 1) * n_in];
            scratch.fill(&self.grid, row, false);
            for (s, &v) in silu_x.iter_mut().zip(row) {
                *s = silu(v);
            }
            for j in 0..n_out {
                let mut acc = 0.0;
                for i in 0..n_in {
                    let e = j * n_in + i;
                    let c = &coeffs[e * nb + scratch.starts[i]..][..w];
                    let spline: f64 = c
                        .iter()
                        .zip(&scratch.values[i * w..(i + 1) * w])
                        .map(|(c, b)| c * b)
                        .sum();
                    acc += bw[e] * silu_x[i] + sw[e] * spline;
                }
                out[b * n_out + j] = acc;
            }
        }
        check_finite(&out, "kan_layer_forward")?;
        Tensor::new(vec![batch, n_out], out)
    }

    /// Exact gradients of `Σ upstream ⊙ forward(x)` with respect to the
    /// input and every parameter. Outside the grid domain the spline term is
    /// constant (clamped), so it contributes nothing to the input gradient.
    pub fn backward(&self, x: &Tensor, upstream: &Tensor) -> Result<(Tensor, KanLayer)> {
        let batch = self.check_input(x)?;
        if upstream.shape() != [batch, self.n_out] {
            return Err(Error::Shape {
                op: "kan_layer_backward",
                left: vec![batch, self.n_out],
                right: upstream.shape().to_vec(),
            });
        }
        if self.grid.degree() == 0 {
            return Err(Error::DerivativeUndefined);
        }
        let (n_in, n_out, nb) = (self.n_in, self.n_out, self.grid.basis_count());
        let (coeffs, bw, sw) = (
            self.coeffs.data(),
            self.base_weight.data(),
            self.spline_weight.data(),
        );
        let mut grads = self.zeros_like();
        let mut g_coeffs = vec![0.0; coeffs.len()];
        let mut g_bw = vec![0.0; bw.len()];
        let mut g_sw = vec![0.0; sw.len()];
        let mut g_x = vec![0.0; batch * n_in];

        let mut scratch = BasisScratch::new(&self.grid, n_in);
        let w = scratch.width;
        let mut silu_x = vec![0.0; n_in];
        let mut dsilu_x = vec![0.0; n_in];
        let mut inside = vec![true; n_in];
        for b in 0..batch {
            let row = &x.data()[b * n_in..(b + 1) * n_in];
            scratch.fill(&self.grid, row, true);
            for i in 0..n_in {
                silu_x[i] = silu(row[i]);
                dsilu_x[i] = silu_grad(row[i]);
                inside[i] = self.grid.contains(row[i]);
            }
            let gx_row = &mut g_x[b * n_in..(b + 1) * n_in];
            for j in 0..n_out {
                let g = upstream.data()[b * n_out + j];
                if g == 0.0 {
                    continue;
                }
                for i in 0..n_in {
                    let e = j * n_in + i;
                    let off = e * nb + scratch.starts[i];
                    let c = &coeffs[off..off + w];
                    let vals = &scratch.values[i * w..(i + 1) * w];
                    let spline: f64 = c.iter().zip(vals).map(|(c, b)| c * b).sum();
                    g_bw[e] += g * silu_x[i];
                    g_sw[e] += g * spline;
                    let gs = g * sw[e];
                    for (gc, v) in g_coeffs[off..off + w].iter_mut().zip(vals) {
                        *gc += gs * v;
                    }
                    let mut dx = bw[e] * dsilu_x[i];
                    if inside[i] {
                        let ders = &scratch.derivs[i * w..(i + 1) * w];
                        let dspline: f64 = c.iter().zip(ders).map(|(c, d)| c * d).sum();
                        dx += sw[e] * dspline;
                    }
                    gx_row[i] += g * dx;
                }
            }
        }
        grads.coeffs = Tensor::new(self.coeffs.shape().to_vec(), g_coeffs)?;
        grads.base_weight = Tensor::new(vec![n_out, n_in], g_bw)?;
        grads.spline_weight = Tensor::new(vec![n_out, n_in], g_sw)?;
        Ok((Tensor::new(vec![batch, n_in], g_x)?, grads))
    }
}

impl Parameters for KanLayer {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        out.push((join(prefix, "coeffs"), &self.coeffs));
        out.push((join(prefix, "base_weight"), &self.base_weight));
        out.push((join(prefix, "spline_weight"), &self.spline_weight));
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.coeffs);
        out.push(&mut self.base_weight);
        out.push(&mut self.spline_weight);
    }
}

/// Two stacked KAN layers, `[n_in, hidden, n_out]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoDepthKan {
    pub inner: KanLayer,
    pub outer: KanLayer,
}

impl TwoDepthKan {
    /// Builds both layers on the same grid geometry. `hidden` defaults to
    /// `2·n_in + 1`. The outer layer is seeded with `seed + 1`.
    pub fn new(
        n_in: usize,
        hidden: Option<usize>,
        n_out: usize,
        grid: KnotGrid,
        seed: u64,
    ) -> Result<Self> {
        if grid.degree() == 0 {
            return Err(Error::InvalidGrid(
                "trainable KAN layers need spline degree k >= 1".into(),
            ));
        }
        let hidden = hidden.unwrap_or(2 * n_in + 1);
        Self::from_layers(
            KanLayer::init(n_in, hidden, grid.clone(), seed)?,
            KanLayer::init(hidden, n_out, grid, seed.wrapping_add(1))?,
        )
    }

    pub fn from_layers(inner: KanLayer, outer: KanLayer) -> Result<Self> {
        let kan = Self { inner, outer };
        kan.validate()?;
        Ok(kan)
    }

    pub fn validate(&self) -> Result<()> {
        self.inner.validate()?;
        self.outer.validate()?;
        if self.inner.n_out != self.outer.n_in {
            return Err(Error::Shape {
                op: "two_depth_kan",
                left: vec![self.inner.n_in, self.inner.n_out],
                right: vec![self.outer.n_in, self.outer.n_out],
            });
        }
        Ok(())
    }

    pub fn n_in(&self) -> usize {
        self.inner.n_in
    }

    pub fn hidden(&self) -> usize {
        self.inner.n_out
    }

    pub fn n_out(&self) -> usize {
        self.outer.n_out
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            inner: self.inner.zeros_like(),
            outer: self.outer.zeros_like(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with_hidden(x)?.0)
    }

    /// Output plus the hidden activations needed by [`backward`](Self::backward).
    pub fn forward_with_hidden(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let hidden = self.inner.forward(x)?;
        let out = self.outer.forward(&hidden)?;
        Ok((out, hidden))
    }

    pub fn backward(
        &self,
        x: &Tensor,
        hidden: &Tensor,
        upstream: &Tensor,
    ) -> Result<(Tensor, TwoDepthKan)> {
        let (g_hidden, g_outer) = self.outer.backward(hidden, upstream)?;
        let (g_x, g_inner) = self.inner.backward(x, &g_hidden)?;
        Ok((
            g_x,
            TwoDepthKan {
                inner: g_inner,
                outer: g_outer,
            },
        ))
    }
}

impl Parameters for TwoDepthKan {
    fn collect<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Tensor)>) {
        self.inner.collect(&join(prefix, "inner"), out);
        self.outer.collect(&join(prefix, "outer"), out);
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        self.inner.collect_mut(out);
        self.outer.collect_mut(out);
    }
}
