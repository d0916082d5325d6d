//! Uniform extended knot grids and B-spline basis evaluation.
//!
//! A grid over `[domain_min, domain_max]` with `G` intervals and degree `k`
//! carries `G + 2k + 1` equally spaced knots: the `G + 1` domain knots plus
//! `k` extra knots on each side. It supports `G + k` basis functions, and at
//! any point at most `k + 1` consecutive ones are nonzero.
//!
//! Inputs outside the domain are clamped onto it before evaluation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct KnotGrid {
    domain_min: f64,
    domain_max: f64,
    intervals: usize,
    degree: usize,
    knots: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct GridSpec {
    domain_min: f64,
    domain_max: f64,
    intervals: usize,
    degree: usize,
}

impl TryFrom<GridSpec> for KnotGrid {
    type Error = Error;

    fn try_from(s: GridSpec) -> Result<Self> {
        KnotGrid::new(s.domain_min, s.domain_max, s.intervals, s.degree)
    }
}

impl From<KnotGrid> for GridSpec {
    fn from(g: KnotGrid) -> Self {
        GridSpec {
            domain_min: g.domain_min,
            domain_max: g.domain_max,
            intervals: g.intervals,
            degree: g.degree,
        }
    }
}

impl KnotGrid {
    pub const DEFAULT_DOMAIN: (f64, f64) = (-3.0, 3.0);

    pub fn new(domain_min: f64, domain_max: f64, intervals: usize, degree: usize) -> Result<Self> {
        if !(domain_min.is_finite() && domain_max.is_finite()) || domain_min >= domain_max {
            return Err(Error::InvalidGrid(format!(
                "domain [{domain_min}, {domain_max}] is not an ordered finite interval"
            )));
        }
        if intervals == 0 {
            return Err(Error::InvalidGrid("interval count must be at least 1".into()));
        }
        let h = (domain_max - domain_min) / intervals as f64;
        let knots = (0..intervals + 2 * degree + 1)
            .map(|i| domain_min + (i as f64 - degree as f64) * h)
            .collect();
        Ok(Self {
            domain_min,
            domain_max,
            intervals,
            degree,
            knots,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.domain_min, self.domain_max)
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn step(&self) -> f64 {
        (self.domain_max - self.domain_min) / self.intervals as f64
    }

    pub fn basis_count(&self) -> usize {
        self.intervals + self.degree
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.domain_min, self.domain_max)
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.domain_min..=self.domain_max).contains(&x)
    }

    /// Index `s` of the knot interval `[t_s, t_{s+1})` holding the clamped
    /// input; the right domain end belongs to the last interval.
    fn span(&self, x: f64) -> usize {
        let rel = ((x - self.domain_min) / self.step()).floor();
        let cell = if rel <= 0.0 {
            0
        } else {
            (rel as usize).min(self.intervals - 1)
        };
        cell + self.degree
    }

    // de Boor's triangular scheme up to `degree`; fills `out[0..=degree]`
    // with B_{span-degree..=span, degree}(x).
    fn triangle(&self, x: f64, span: usize, degree: usize, out: &mut [f64]) {
        let t = &self.knots;
        out[0] = 1.0;
        for j in 1..=degree {
            let mut saved = 0.0;
            for r in 0..j {
                let right = t[span + r + 1] - x;
                let left = x - t[span + 1 + r - j];
                let temp = out[r] / (right + left);
                out[r] = saved + right * temp;
                saved = left * temp;
            }
            out[j] = saved;
        }
    }

    /// Writes the `k + 1` possibly-nonzero basis values at `x` into
    /// `values` and returns the global index of the first one.
    pub fn active_basis(&self, x: f64, values: &mut [f64]) -> usize {
        let x = self.clamp(x);
        let span = self.span(x);
        self.triangle(x, span, self.degree, values);
        span - self.degree
    }

    /// Like [`active_basis`](Self::active_basis), also writing the basis
    /// derivatives at the clamped point into `derivs`. Degree 0 yields zero
    /// derivatives. `scratch` must hold at least `k` values.
    pub fn active_basis_with_derivatives(
        &self,
        x: f64,
        values: &mut [f64],
        derivs: &mut [f64],
        scratch: &mut [f64],
    ) -> usize {
        let x = self.clamp(x);
        let span = self.span(x);
        let k = self.degree;
        self.triangle(x, span, k, values);
        if k == 0 {
            derivs[0] = 0.0;
            return span;
        }
        // B'_{i,k} = (B_{i,k-1} - B_{i+1,k-1}) / h on a uniform grid.
        self.triangle(x, span, k - 1, scratch);
        let inv_h = 1.0 / self.step();
        for r in 0..=k {
            let lo = if r == 0 { 0.0 } else { scratch[r - 1] };
            let hi = if r == k { 0.0 } else { scratch[r] };
            derivs[r] = (lo - hi) * inv_h;
        }
        span - k
    }

    /// All `G + k` basis values at `x` (clamped into the domain).
    pub fn basis_values(&self, x: f64) -> Vec<f64> {
        let mut active = vec![0.0; self.degree + 1];
        let start = self.active_basis(x, &mut active);
        let mut out = vec![0.0; self.basis_count()];
        out[start..start + active.len()].copy_from_slice(&active);
        out
    }

    /// All `G + k` basis derivatives at the clamped point.
    pub fn basis_derivatives(&self, x: f64) -> Result<Vec<f64>> {
        if self.degree == 0 {
            return Err(Error::DerivativeUndefined);
        }
        let k = self.degree;
        let (mut vals, mut ders, mut scratch) = (vec![0.0; k + 1], vec![0.0; k + 1], vec![0.0; k]);
        let start = self.active_basis_with_derivatives(x, &mut vals, &mut ders, &mut scratch);
        let mut out = vec![0.0; self.basis_count()];
        out[start..start + k + 1].copy_from_slice(&ders);
        Ok(out)
    }
}
