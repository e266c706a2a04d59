//! Fast evaluation of mollified drifts inside the time-stepping loop.

use std::f64::consts::PI;

use super::{DriftKind, MollifiedDrift};
use crate::error::Result;

/// Target for the worst interpolation error of a tabulated drift.
pub const INTERPOLATION_BUDGET: f64 = 1e-8;
const INITIAL_INTERVALS: usize = 1 << 14;
const MAX_INTERVALS: usize = 1 << 18;
const CHECK_POINTS: usize = 512;

/// Cubic Hermite table of a quadrature-backed drift on `[lo, hi]`, stored
/// as per-interval polynomial coefficients so a lookup touches one cache line.
#[derive(Debug, Clone)]
pub struct DriftTable {
    lo: f64,
    hi: f64,
    inv_step: f64,
    cubics: Vec<Cubic>,
    max_error: f64,
}

/// `a + b s + c s^2 + d s^3` on the unit interval.
#[derive(Debug, Clone, Copy)]
#[repr(align(32))]
struct Cubic([f64; 4]);

impl Cubic {
    fn hermite(y0: f64, y1: f64, m0: f64, m1: f64) -> Self {
        Cubic([
            y0,
            m0,
            -3.0 * y0 - 2.0 * m0 + 3.0 * y1 - m1,
            2.0 * y0 + m0 - 2.0 * y1 + m1,
        ])
    }
}

impl DriftTable {
    /// Tabulates `bk` on `[lo, hi]`, doubling the resolution until the
    /// measured midpoint error meets [`INTERPOLATION_BUDGET`] or the size cap
    /// is reached.
    pub fn build(bk: &MollifiedDrift, lo: f64, hi: f64) -> Result<Self> {
        let mut intervals = INITIAL_INTERVALS;
        loop {
            let table = Self::with_intervals(bk, lo, hi, intervals)?;
            if table.max_error <= INTERPOLATION_BUDGET || intervals >= MAX_INTERVALS {
                return Ok(table);
            }
            intervals *= 2;
        }
    }

    fn with_intervals(bk: &MollifiedDrift, lo: f64, hi: f64, intervals: usize) -> Result<Self> {
        let step = (hi - lo) / intervals as f64;
        let mut values = Vec::with_capacity(intervals + 1);
        let mut slopes = Vec::with_capacity(intervals + 1);
        for i in 0..=intervals {
            let x = lo + i as f64 * step;
            values.push(bk.try_evaluate(x)?);
            slopes.push(bk.derivative(x)?);
        }
        let cubics = (0..intervals)
            .map(|i| Cubic::hermite(values[i], values[i + 1], slopes[i] * step, slopes[i + 1] * step))
            .collect();
        let mut table = DriftTable {
            lo,
            hi,
            inv_step: 1.0 / step,
            cubics,
            max_error: 0.0,
        };
        let stride = (intervals / CHECK_POINTS).max(1);
        let mut worst: f64 = 0.0;
        for i in (0..intervals).step_by(stride) {
            let x = lo + (i as f64 + 0.5) * step;
            worst = worst.max((table.eval(x) - bk.try_evaluate(x)?).abs());
        }
        table.max_error = worst;
        Ok(table)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.lo) * self.inv_step;
        let i = (u as usize).min(self.cubics.len() - 1);
        let s = u - i as f64;
        let [a, b, c, d] = self.cubics[i].0;
        a + s * (b + s * (c + s * d))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn intervals(&self) -> usize {
        self.cubics.len()
    }

    /// Largest interpolation error observed at the check midpoints.
    pub fn max_error(&self) -> f64 {
        self.max_error
    }
}

/// Drift evaluation strategy used by the stepper.
#[derive(Debug, Clone)]
pub enum DriftEvaluator {
    Zero,
    /// Closed-form Gaussian mixture.
    Atoms {
        locations: Vec<f64>,
        weights: Vec<f64>,
        inv_two_t: f64,
    },
    /// Table inside its range, exact quadrature outside.
    Table { table: DriftTable, exact: MollifiedDrift },
    Exact(MollifiedDrift),
}

impl DriftEvaluator {
    /// Builds the evaluator for `bk`, tabulated on `range` when one is given.
    /// Without a range, measures use their closed form and other drifts
    /// quadrature.
    pub fn new(bk: &MollifiedDrift, range: Option<(f64, f64)>) -> Result<Self> {
        if bk.base().is_zero() {
            return Ok(DriftEvaluator::Zero);
        }
        if let (DriftKind::SignedMeasure { atoms }, None) = (bk.base().kind(), range) {
            let atoms: Vec<_> = atoms.iter().filter(|a| a.weight != 0.0).collect();
            if atoms.is_empty() {
                return Ok(DriftEvaluator::Zero);
            }
            let t = bk.variance();
            let norm = 1.0 / (2.0 * PI * t).sqrt();
            return Ok(DriftEvaluator::Atoms {
                locations: atoms.iter().map(|a| a.location + bk.base().shift()).collect(),
                weights: atoms.iter().map(|a| a.weight * norm).collect(),
                inv_two_t: 1.0 / (2.0 * t),
            });
        }
        match range {
            Some((lo, hi)) if hi > lo => Ok(DriftEvaluator::Table {
                table: DriftTable::build(bk, lo, hi)?,
                exact: bk.clone(),
            }),
            _ => Ok(DriftEvaluator::Exact(bk.clone())),
        }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            DriftEvaluator::Zero => 0.0,
            DriftEvaluator::Atoms {
                locations,
                weights,
                inv_two_t,
            } => locations
                .iter()
                .zip(weights)
                .map(|(a, w)| {
                    let u = x - a;
                    w * (-u * u * inv_two_t).exp()
                })
                .sum(),
            DriftEvaluator::Table { table, exact } => {
                if table.contains(x) {
                    table.eval(x)
                } else {
                    exact.evaluate(x)
                }
            }
            DriftEvaluator::Exact(m) => m.evaluate(x),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, DriftEvaluator::Zero)
    }

    /// Interpolation error bound recorded for reports (0 for exact paths).
    pub fn interpolation_error(&self) -> f64 {
        match self {
            DriftEvaluator::Table { table, .. } => table.max_error(),
            _ => 0.0,
        }
    }
}

impl From<DriftEvaluator> for std::borrow::Cow<'_, DriftEvaluator> {
    fn from(d: DriftEvaluator) -> Self {
        std::borrow::Cow::Owned(d)
    }
}

impl<'a> From<&'a DriftEvaluator> for std::borrow::Cow<'a, DriftEvaluator> {
    fn from(d: &'a DriftEvaluator) -> Self {
        std::borrow::Cow::Borrowed(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::{mollify, Drift};

    #[test]
    fn tables_meet_budget() {
        for (d, k) in [(Drift::sign(), 256u32), (Drift::sin(), 256), (Drift::power_singular(-0.5).unwrap(), 40)] {
            let m = mollify(&d, k).unwrap();
            let ev = DriftEvaluator::new(&m, Some((-4.0, 4.0))).unwrap();
            assert!(ev.interpolation_error() <= INTERPOLATION_BUDGET, "{}: {}", d.label(), ev.interpolation_error());
            for i in 0..97 {
                let x = -5.0 + i as f64 * 0.1037;
                assert!((ev.eval(x) - m.evaluate(x)).abs() <= 2.0 * INTERPOLATION_BUDGET, "x = {x}");
            }
        }
    }

    #[test]
    fn atoms_match_closed_form() {
        let m = mollify(&Drift::dirac(0.25, 2.0).shifted(0.1), 9).unwrap();
        let ev = DriftEvaluator::new(&m, Some((-1.0, 1.0))).unwrap();
        for x in [-0.2, 0.35, 0.7] {
            assert!((ev.eval(x) - m.evaluate(x)).abs() < 1e-14);
        }
        assert!(DriftEvaluator::new(&mollify(&Drift::zero(), 3).unwrap(), None).unwrap().is_zero());
    }
}

