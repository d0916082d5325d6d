use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{ForecastModel, LossKind};
use crate::tensor::Tensor;

use super::data::Windows;

/// Test-set errors in standardized units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub mae: f64,
}

fn same_shape(pred: &Tensor, target: &Tensor, op: &'static str) -> Result<()> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape {
            op,
            left: pred.shape().to_vec(),
            right: target.shape().to_vec(),
        });
    }
    Ok(())
}

/// Mean loss over every element and its gradient with respect to `pred`.
pub fn loss_and_grad(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<(f64, Tensor)> {
    same_shape(pred, target, "loss")?;
    let n = pred.len() as f64;
    let mut total = 0.0;
    let grad: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            match kind {
                LossKind::Mse => {
                    total += d * d;
                    2.0 * d / n
                }
                LossKind::Mae => {
                    total += d.abs();
                    // subgradient 0 at d = 0
                    if d > 0.0 {
                        1.0 / n
                    } else if d < 0.0 {
                        -1.0 / n
                    } else {
                        0.0
                    }
                }
            }
        })
        .collect();
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite { op: "loss" });
    }
    Ok((loss, Tensor::new(pred.shape().to_vec(), grad)?))
}

pub fn loss(pred: &Tensor, target: &Tensor, kind: LossKind) -> Result<f64> {
    Ok(loss_and_grad(pred, target, kind)?.0)
}

/// Running sums so that metrics over many batches equal metrics over one.
#[derive(Clone, Copy, Debug, Default)]
struct Accumulator {
    sq: f64,
    abs: f64,
    count: usize,
}

impl Accumulator {
    fn add(&mut self, pred: &[f64], target: &[f64]) {
        for (p, t) in pred.iter().zip(target) {
            let d = p - t;
            self.sq += d * d;
            self.abs += d.abs();
        }
        self.count += pred.len();
    }

    fn finish(self) -> Result<Metrics> {
        let n = self.count as f64;
        let m = Metrics {
            mse: self.sq / n,
            mae: self.abs / n,
        };
        if !(m.mse.is_finite() && m.mae.is_finite()) {
            return Err(Error::NonFinite { op: "evaluate" });
        }
        Ok(m)
    }
}

pub fn metrics(pred: &Tensor, target: &Tensor) -> Result<Metrics> {
    same_shape(pred, target, "metrics")?;
    let mut acc = Accumulator::default();
    acc.add(pred.data(), target.data());
    acc.finish()
}

pub const EVAL_BATCH: usize = 256;

/// Eval-mode MSE and MAE averaged over all samples, horizon steps and
/// features of `windows`.
pub fn evaluate(model: &ForecastModel, windows: &Windows) -> Result<Metrics> {
    evaluate_batched(model, windows, EVAL_BATCH)
}

/// As [`evaluate`], running the model on chunks of `batch` samples. The
/// result does not depend on `batch`.
pub fn evaluate_batched(model: &ForecastModel, windows: &Windows, batch: usize) -> Result<Metrics> {
    if windows.is_empty() || batch == 0 {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    let mut acc = Accumulator::default();
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(batch) {
        let (x, y) = windows.batch(chunk)?;
        let pred = model.predict(&x)?;
        acc.add(pred.data(), y.data());
    }
    acc.finish()
}

/// Errors of repeating the last observed row over the whole horizon.
pub fn persistence_metrics(windows: &Windows) -> Result<Metrics> {
    if windows.is_empty() {
        return Err(Error::Config("nothing to evaluate".into()));
    }
    let (l, h, c) = (windows.input_len(), windows.horizon(), windows.features());
    let mut acc = Accumulator::default();
    let idx: Vec<usize> = (0..windows.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, y) = windows.batch(chunk)?;
        for (s, target) in y.data().chunks(h * c).enumerate() {
            let last = &x.data()[(s * l + l - 1) * c..(s * l + l) * c];
            for step in target.chunks(c) {
                acc.add(last, step);
            }
        }
    }
    acc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_unit_errors() {
        let y = Tensor::from_fn(&[2, 3, 2], |i| i as f64 * 0.1);
        assert_eq!(metrics(&y, &y).unwrap(), Metrics { mse: 0.0, mae: 0.0 });
        let zero = Tensor::zeros(&[2, 3, 2]);
        let one = Tensor::full(&[2, 3, 2], 1.0);
        assert_eq!(metrics(&one, &zero).unwrap(), Metrics { mse: 1.0, mae: 1.0 });
    }

    #[test]
    fn loss_gradients() {
        let p = Tensor::new(vec![2], vec![1.0, -2.0]).unwrap();
        let t = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let (l, g) = loss_and_grad(&p, &t, LossKind::Mse).unwrap();
        assert_eq!(l, 2.5);
        assert_eq!(g.data(), &[1.0, -2.0]);
        let (l, g) = loss_and_grad(&p, &t, LossKind::Mae).unwrap();
        assert_eq!(l, 1.5);
        assert_eq!(g.data(), &[0.5, -0.5]);
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[4]);
        assert!(loss(&a, &b, LossKind::Mse).is_err());
        assert!(metrics(&a, &b).is_err());
    }
}
