//! Dense row-major `f64` tensors and the differentiable primitives the
//! model layers are assembled from.
//!
//! Tensors own their storage; there are no views. Every primitive checks
//! its output for non-finite values and reports them as an error instead of
//! letting NaN/Inf flow into later layers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTensor")]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Deserialize)]
struct RawTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl TryFrom<RawTensor> for Tensor {
    type Error = Error;

    fn try_from(raw: RawTensor) -> Result<Self> {
        Tensor::new(raw.shape, raw.data)
    }
}

impl Tensor {
    /// Builds a tensor, validating that `shape` is non-empty with positive
    /// dimensions, matches the data length, and that every value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::InvalidTensor(format!(
                "dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "Tensor::new" });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        assert!(
            !shape.is_empty() && shape.iter().all(|&d| d > 0),
            "dimensions must be positive, got {shape:?}"
        );
        let len = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Fills a tensor from a function of the flat row-major index.
    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let len: usize = shape.iter().product();
        let mut t = Self::zeros(shape);
        t.data = (0..len).map(f).collect();
        t
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.shape)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access for optimizers and test fixtures. Callers are
    /// responsible for keeping the values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Reinterprets the flat buffer under a new shape with the same length.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() || shape.contains(&0) {
            return Err(Error::Shape {
                op: "reshape",
                left: self.shape,
                right: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op: "add",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        check_finite(&self.data, "add")
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    fn expect_rank(&self, op: &'static str, expected: usize) -> Result<()> {
        if self.rank() != expected {
            return Err(Error::Rank {
                op,
                expected,
                shape: self.shape.clone(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_finite(data: &[f64], op: &'static str) -> Result<()> {
    if data.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

fn finished(shape: Vec<usize>, data: Vec<f64>, op: &'static str) -> Result<Tensor> {
    check_finite(&data, op)?;
    Ok(Tensor { shape, data })
}

// c[m,n] += a[m,p] * b[p,n], all row-major slices.
fn gemm_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, p: usize, n: usize) {
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for k in 0..p {
            let aik = a[i * p + k];
            if aik == 0.0 {
                continue;
            }
            let brow = &b[k * n..(k + 1) * n];
            for (cj, bj) in row.iter_mut().zip(brow) {
                *cj += aik * bj;
            }
        }
    }
}

fn transpose_2d(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = x[r * cols + c];
        }
    }
    out
}

/// Matrix product `[m,p] x [p,n] -> [m,n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.expect_rank("matmul", 2)?;
    b.expect_rank("matmul", 2)?;
    let (m, p) = (a.shape[0], a.shape[1]);
    let (p2, n) = (b.shape[0], b.shape[1]);
    if p != p2 {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape.clone(),
            right: b.shape.clone(),
        });
    }
    let mut out = vec![0.0; m * n];
    gemm_acc(&a.data, &b.data, &mut out, m, p, n);
    finished(vec![m, n], out, "matmul")
}

/// Gradients of `matmul(a, b)` given the upstream gradient `[m,n]`:
/// `(grad @ bᵀ, aᵀ @ grad)`.
pub fn matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    a.expect_rank("matmul_backward", 2)?;
    b.expect_rank("matmul_backward", 2)?;
    let (m, p) = (a.shape[0], a.shape[1]);
    let n = b.shape[1];
    if b.shape[0] != p || grad.shape != [m, n] {
        return Err(Error::Shape {
            op: "matmul_backward",
            left: a.shape.clone(),
            right: grad.shape.clone(),
        });
    }
    let bt = transpose_2d(&b.data, p, n);
    let mut ga = vec![0.0; m * p];
    gemm_acc(&grad.data, &bt, &mut ga, m, n, p);
    let at = transpose_2d(&a.data, m, p);
    let mut gb = vec![0.0; p * n];
    gemm_acc(&at, &grad.data, &mut gb, p, m, n);
    Ok((
        finished(vec![m, p], ga, "matmul_backward")?,
        finished(vec![p, n], gb, "matmul_backward")?,
    ))
}

/// Batched product `[..., m, p] x [..., p, n]`. `b` may also be a plain
/// `[p, n]` matrix, in which case it is shared by every batch entry.
pub fn batched_matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (batch, m, p, n, shared) = batched_dims(a, b)?;
    let mut out = vec![0.0; batch * m * n];
    for t in 0..batch {
        let b_off = if shared { 0 } else { t * p * n };
        gemm_acc(
            &a.data[t * m * p..(t + 1) * m * p],
            &b.data[b_off..b_off + p * n],
            &mut out[t * m * n..(t + 1) * m * n],
            m,
            p,
            n,
        );
    }
    let mut shape = a.shape[..a.rank() - 1].to_vec();
    shape.push(n);
    finished(shape, out, "batched_matmul")
}

/// Gradients of [`batched_matmul`]. When `b` is shared, its gradient is
/// summed over the batch in index order.
pub fn batched_matmul_backward(a: &Tensor, b: &Tensor, grad: &Tensor) -> Result<(Tensor, Tensor)> {
    let (batch, m, p, n, shared) = batched_dims(a, b)?;
    let mut out_shape = a.shape[..a.rank() - 1].to_vec();
    out_shape.push(n);
    if grad.shape != out_shape {
        return Err(Error::Shape {
            op: "batched_matmul_backward",
            left: out_shape,
            right: grad.shape.clone(),
        });
    }
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    for t in 0..batch {
        let b_off = if shared { 0 } else { t * p * n };
        let a_t = &a.data[t * m * p..(t + 1) * m * p];
        let b_t = &b.data[b_off..b_off + p * n];
        let g_t = &grad.data[t * m * n..(t + 1) * m * n];
        let bt = transpose_2d(b_t, p, n);
        gemm_acc(g_t, &bt, &mut ga[t * m * p..(t + 1) * m * p], m, n, p);
        let at = transpose_2d(a_t, m, p);
        gemm_acc(&at, g_t, &mut gb[b_off..b_off + p * n], p, m, n);
    }
    Ok((
        finished(a.shape.clone(), ga, "batched_matmul_backward")?,
        finished(b.shape.clone(), gb, "batched_matmul_backward")?,
    ))
}

fn batched_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, bool)> {
    let mismatch = || Error::Shape {
        op: "batched_matmul",
        left: a.shape.clone(),
        right: b.shape.clone(),
    };
    if a.rank() < 2 || b.rank() < 2 {
        return Err(mismatch());
    }
    let (m, p) = (a.shape[a.rank() - 2], a.shape[a.rank() - 1]);
    let (p2, n) = (b.shape[b.rank() - 2], b.shape[b.rank() - 1]);
    if p != p2 {
        return Err(mismatch());
    }
    let lead_a = &a.shape[..a.rank() - 2];
    let lead_b = &b.shape[..b.rank() - 2];
    let shared = lead_b.is_empty();
    if !shared && lead_a != lead_b {
        return Err(mismatch());
    }
    Ok((lead_a.iter().product(), m, p, n, shared))
}

/// Swaps the time and feature axes: `[B, L, C] -> [B, C, L]`.
pub fn transpose_time_feature(x: &Tensor) -> Result<Tensor> {
    x.expect_rank("transpose_time_feature", 3)?;
    let (b, l, c) = (x.shape[0], x.shape[1], x.shape[2]);
    let mut out = Vec::with_capacity(x.len());
    for s in 0..b {
        out.extend(transpose_2d(&x.data[s * l * c..(s + 1) * l * c], l, c));
    }
    Ok(Tensor {
        shape: vec![b, c, l],
        data: out,
    })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn relu_grad(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Output of a pointwise map together with the local derivative at each
/// input, which is all the backward pass needs.
#[derive(Clone, Debug)]
pub struct Mapped {
    pub output: Tensor,
    pub derivative: Tensor,
}

impl Mapped {
    pub fn backward(&self, upstream: &Tensor) -> Result<Tensor> {
        if upstream.shape != self.derivative.shape {
            return Err(Error::Shape {
                op: "elementwise_backward",
                left: self.derivative.shape.clone(),
                right: upstream.shape.clone(),
            });
        }
        let data = upstream
            .data
            .iter()
            .zip(&self.derivative.data)
            .map(|(g, d)| g * d)
            .collect();
        finished(upstream.shape.clone(), data, "elementwise_backward")
    }
}

pub fn elementwise(x: &Tensor, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Result<Mapped> {
    let out = x.data.iter().map(|&v| f(v)).collect();
    let der = x.data.iter().map(|&v| df(v)).collect();
    Ok(Mapped {
        output: finished(x.shape.clone(), out, "elementwise")?,
        derivative: finished(x.shape.clone(), der, "elementwise")?,
    })
}
