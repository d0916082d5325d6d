use std::ops::Range;

use crate::data_io::{SplitRanges, WindowContext};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A series rescaled to zero mean and unit variance per feature.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardized {
    pub values: Tensor,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Standardizes every feature of `series` (`[T, C]`) using the mean and
/// population standard deviation of the rows in `train_range` only.
pub fn standardize(series: &Tensor, train_range: Range<usize>) -> Result<Standardized> {
    let (t, c) = match *series.shape() {
        [t, c] => (t, c),
        _ => {
            return Err(Error::Rank {
                op: "standardize",
                expected: 2,
                shape: series.shape().to_vec(),
            })
        }
    };
    if train_range.is_empty() || train_range.end > t {
        return Err(Error::Config(format!(
            "training range {train_range:?} is empty or exceeds {t} rows"
        )));
    }
    let data = series.data();
    let n = train_range.len() as f64;
    let rows = || data[train_range.start * c..train_range.end * c].chunks(c);
    let mut means = vec![0.0; c];
    for row in rows() {
        for (m, v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; c];
    for row in rows() {
        for ((s, v), m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for (feature, s) in stds.iter_mut().enumerate() {
        *s = (*s / n).sqrt();
        if *s <= f64::EPSILON * means[feature].abs().max(1.0) {
            return Err(Error::ZeroVariance { feature });
        }
    }
    let values = data
        .chunks(c)
        .flat_map(|row| {
            row.iter()
                .zip(means.iter().zip(&stds))
                .map(|(v, (m, s))| (v - m) / s)
        })
        .collect();
    Ok(Standardized {
        values: Tensor::new(vec![t, c], values)?,
        means,
        stds,
    })
}

/// Sliding windows over one contiguous block of rows.
///
/// Sample `i` pairs input rows `[i, i+L)` with target rows `[i+L, i+L+H)`,
/// relative to the block, at stride 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Windows {
    rows: Tensor,
    offset: usize,
    split_start: usize,
    input_len: usize,
    horizon: usize,
}

/// Builds windows over a whole `[T, C]` series.
pub fn window(series: &Tensor, input_len: usize, horizon: usize) -> Result<Windows> {
    Windows::over(series, 0..series.shape()[0], input_len, horizon)
}

impl Windows {
    /// Windows restricted to `range` of `series`; no window reaches outside it.
    pub fn over(
        series: &Tensor,
        range: Range<usize>,
        input_len: usize,
        horizon: usize,
    ) -> Result<Self> {
        Self::with_context(series, range, 0, input_len, horizon)
    }

    /// Windows whose targets lie in `range` and whose inputs may start up to
    /// `context` rows before it (`context <= input_len`).
    pub fn with_context(
        series: &Tensor,
        range: Range<usize>,
        context: usize,
        input_len: usize,
        horizon: usize,
    ) -> Result<Self> {
        if series.rank() != 2 {
            return Err(Error::Rank {
                op: "window",
                expected: 2,
                shape: series.shape().to_vec(),
            });
        }
        if input_len == 0 || horizon == 0 {
            return Err(Error::Config("window lengths must be positive".into()));
        }
        if context > input_len || context > range.start {
            return Err(Error::Config(format!(
                "context of {context} rows not available before row {}",
                range.start
            )));
        }
        let c = series.shape()[1];
        let block = range.start - context..range.end;
        if range.end > series.shape()[0] || block.len() < input_len + horizon {
            return Err(Error::SeriesTooShort {
                len: block.len(),
                input_len,
                horizon,
            });
        }
        let rows = Tensor::new(
            vec![block.len(), c],
            series.data()[block.start * c..block.end * c].to_vec(),
        )?;
        Ok(Self {
            rows,
            offset: block.start,
            split_start: range.start,
            input_len,
            horizon,
        })
    }

    pub fn len(&self) -> usize {
        self.rows.shape()[0] - self.input_len - self.horizon + 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn features(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Absolute series rows touched by sample `i` (input and target).
    pub fn absolute_span(&self, i: usize) -> Range<usize> {
        let start = self.offset + i;
        start..start + self.input_len + self.horizon
    }

    /// Absolute target rows of sample `i`.
    pub fn target_span(&self, i: usize) -> Range<usize> {
        let start = self.offset + i + self.input_len;
        start..start + self.horizon
    }

    /// Absolute rows of the split whose targets these windows cover.
    pub fn split(&self) -> Range<usize> {
        self.split_start..self.offset + self.rows.shape()[0]
    }

    /// Stacks the selected samples into `([B, L, C], [B, H, C])`.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor, Tensor)> {
        let c = self.features();
        let (l, h) = (self.input_len, self.horizon);
        let data = self.rows.data();
        let mut x = Vec::with_capacity(indices.len() * l * c);
        let mut y = Vec::with_capacity(indices.len() * h * c);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Config(format!(
                    "window index {i} out of range ({} samples)",
                    self.len()
                )));
            }
            x.extend_from_slice(&data[i * c..(i + l) * c]);
            y.extend_from_slice(&data[(i + l) * c..(i + l + h) * c]);
        }
        Ok((
            Tensor::new(vec![indices.len(), l, c], x)?,
            Tensor::new(vec![indices.len(), h, c], y)?,
        ))
    }
}

/// Train / valid / test windows, each generated inside its own split.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub train: Windows,
    pub valid: Windows,
    pub test: Windows,
}

impl WindowedDataset {
    pub fn new(
        series: &Tensor,
        splits: &SplitRanges,
        input_len: usize,
        horizon: usize,
        context: WindowContext,
    ) -> Result<Self> {
        let part = |range: &Range<usize>| {
            let rows = match context {
                WindowContext::Isolated => 0,
                WindowContext::Preceding => input_len.min(range.start),
            };
            Windows::with_context(series, range.clone(), rows, input_len, horizon)
        };
        Ok(Self {
            train: part(&splits.train)?,
            valid: part(&splits.valid)?,
            test: part(&splits.test)?,
        })
    }
}
