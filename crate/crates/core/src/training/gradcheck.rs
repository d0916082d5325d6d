use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixer::{ForecastModel, LossKind, Mode};
use crate::params::Parameters;
use crate::tensor::Tensor;

use super::metrics::loss_and_grad;

/// Above this many parameters only a seeded random subset is perturbed.
pub const FULL_CHECK_LIMIT: usize = 10_000;

/// Relative errors use `max(|analytic|, |numeric|, FLOOR)` as denominator.
pub const RELATIVE_FLOOR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_parameter: String,
    pub worst_index: usize,
    pub checked: usize,
    pub total: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

fn loss_at(model: &ForecastModel, x: &Tensor, y: &Tensor, kind: LossKind, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pred, _) = model.forward(x, &mut Mode::Train(&mut rng))?;
    Ok(loss_and_grad(&pred, y, kind)?.0)
}

/// Compares analytic parameter gradients of the training-mode loss on
/// `(x, y)` with central differences of step `eps`. Dropout masks are
/// fixed by `seed` so every evaluation sees the same network.
pub fn gradient_check(
    model: &ForecastModel,
    x: &Tensor,
    y: &Tensor,
    kind: LossKind,
    eps: f64,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::InvalidValue {
            key: "eps".into(),
            reason: format!("{eps} must be positive"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (pred, cache) = model.forward(x, &mut Mode::Train(&mut rng))?;
    let (_, upstream) = loss_and_grad(&pred, y, kind)?;
    let (_, grads) = model.backward(&cache, &upstream)?;

    let named: Vec<(String, Vec<f64>)> = grads
        .parameters()
        .into_iter()
        .map(|(name, t)| (name, t.data().to_vec()))
        .collect();
    let sizes: Vec<usize> = named.iter().map(|(_, g)| g.len()).collect();
    let total: usize = sizes.iter().sum();

    let mut flat: Vec<usize> = if total > FULL_CHECK_LIMIT {
        let mut pick = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        index::sample(&mut pick, total, FULL_CHECK_LIMIT).into_vec()
    } else {
        (0..total).collect()
    };
    flat.sort_unstable();

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        worst_index: 0,
        checked: flat.len(),
        total,
    };
    let (mut tensor, mut base) = (0, 0);
    for f in flat {
        while f >= base + sizes[tensor] {
            base += sizes[tensor];
            tensor += 1;
        }
        let i = f - base;
        let original = probe.parameters_mut()[tensor].data()[i];
        probe.parameters_mut()[tensor].data_mut()[i] = original + eps;
        let plus = loss_at(&probe, x, y, kind, seed)?;
        probe.parameters_mut()[tensor].data_mut()[i] = original - eps;
        let minus = loss_at(&probe, x, y, kind, seed)?;
        probe.parameters_mut()[tensor].data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * eps);
        let err = relative_error(named[tensor].1[i], numeric);
        if !err.is_finite() {
            return Err(Error::NonFinite { op: "gradient_check" });
        }
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_parameter = named[tensor].0.clone();
            report.worst_index = i;
        }
    }
    Ok(report)
}
