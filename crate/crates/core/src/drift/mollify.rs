//! Heat-semigroup mollification `b^k = G_{1/k} b` on the real line.
//!
//! Measures are smoothed in closed form as Gaussian mixtures. Functions are
//! convolved numerically over `x +- 8 sqrt(t)`; the power singularity at the
//! origin is removed by the substitution `y = s^(1/(1+exponent))`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::{Callable, Drift, DriftKind};
use crate::error::{Error, Result};
use crate::quadrature::{breakpoints, integrate};

/// Convolutions are truncated at `QUADRATURE_RADIUS * sqrt(t)`.
pub const QUADRATURE_RADIUS: f64 = 8.0;
const MAX_PIECES: usize = 4000;
const REL_TOL: f64 = 1e-10;
const DEFAULT_SAMPLES: usize = 20_001;

/// Centered Gaussian density with variance `t`.
#[inline]
pub(crate) fn gauss(t: f64, u: f64) -> f64 {
    (-u * u / (2.0 * t)).exp() / (2.0 * PI * t).sqrt()
}

#[inline]
fn gauss_prime(t: f64, u: f64) -> f64 {
    -u / t * gauss(t, u)
}

#[inline]
fn std_normal(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

fn callable_scale(kind: &DriftKind, f: &Callable, y: f64, sigma: f64) -> f64 {
    match kind {
        DriftKind::Smooth { lipschitz, .. } => f.eval(y).abs() + lipschitz * QUADRATURE_RADIUS * sigma,
        DriftKind::BoundedMeasurable { sup, .. } => *sup,
        _ => 1.0,
    }
}

/// `(G_t b)(x)`, or its derivative when `derivative` is set.
pub(crate) fn smooth_eval(b: &Drift, t: f64, x: f64, derivative: bool) -> Result<f64> {
    let y = x - b.shift();
    let sigma = t.sqrt();
    match b.kind() {
        DriftKind::SignedMeasure { atoms } => Ok(atoms
            .iter()
            .map(|a| {
                let u = y - a.location;
                a.weight * if derivative { gauss_prime(t, u) } else { gauss(t, u) }
            })
            .sum()),
        kind @ (DriftKind::Smooth { f, .. } | DriftKind::BoundedMeasurable { f, .. }) => {
            let r = QUADRATURE_RADIUS;
            let pts = breakpoints(-r, r, f.breakpoints().into_iter().map(|bp| (y - bp) / sigma));
            let scale = callable_scale(kind, f, y, sigma);
            if derivative {
                let tol = REL_TOL * (1.0 + scale) / sigma;
                let v = integrate(|z| z * std_normal(z) * f.eval(y - sigma * z), &pts, tol * sigma, MAX_PIECES)?;
                Ok(-v.value / sigma)
            } else {
                let tol = REL_TOL * (1.0 + scale);
                Ok(integrate(|z| std_normal(z) * f.eval(y - sigma * z), &pts, tol, MAX_PIECES)?.value)
            }
        }
        DriftKind::PowerSingular { exponent } => {
            let lo = (y - QUADRATURE_RADIUS * sigma).max(0.0);
            let hi = (y + QUADRATURE_RADIUS * sigma).min(1.0);
            if lo >= hi {
                return Ok(0.0);
            }
            let e = 1.0 + exponent;
            let a = 1.0 / e;
            let marks = [-4.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 4.0]
                .iter()
                .map(|m| y + m * sigma)
                .filter(|v| *v > lo && *v < hi)
                .map(|v| v.powf(e));
            let pts = breakpoints(lo.powf(e), hi.powf(e), marks);
            let scale = 1.0 + sigma.powf(*exponent);
            if derivative {
                let tol = REL_TOL * scale / sigma;
                Ok(integrate(|s| a * gauss_prime(t, y - s.powf(a)), &pts, tol, MAX_PIECES)?.value)
            } else {
                let tol = REL_TOL * scale;
                Ok(integrate(|s| a * gauss(t, y - s.powf(a)), &pts, tol, MAX_PIECES)?.value)
            }
        }
    }
}

/// Sup and Lipschitz seminorm of a mollified drift, with the sampling used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftNorms {
    pub sup_norm: f64,
    pub lip_norm: f64,
    pub window: (f64, f64),
    pub samples: usize,
    /// Whether `sup_norm` comes from a closed form rather than sampling.
    pub sup_closed_form: bool,
}

/// The evaluable function `G_t b` with `t = 1/k`.
#[derive(Debug, Clone)]
pub struct MollifiedDrift {
    base: Drift,
    k: Option<u32>,
    variance: f64,
    norms: OnceLock<DriftNorms>,
}

/// `b^k = G_{1/k} b`.
pub fn mollify(b: &Drift, k: u32) -> Result<MollifiedDrift> {
    if k == 0 {
        return Err(Error::Config("taming parameter k must be at least 1".into()));
    }
    let mut m = mollify_variance(b, 1.0 / k as f64)?;
    m.k = Some(k);
    Ok(m)
}

/// `G_t b` for an arbitrary variance `t > 0`.
pub fn mollify_variance(b: &Drift, t: f64) -> Result<MollifiedDrift> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Config(format!("mollification variance {t} must be positive")));
    }
    Ok(MollifiedDrift {
        base: b.clone(),
        k: None,
        variance: t,
        norms: OnceLock::new(),
    })
}

impl MollifiedDrift {
    pub fn base(&self) -> &Drift {
        &self.base
    }

    pub fn k(&self) -> Option<u32> {
        self.k
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Closed-form evaluation (measure bases).
    pub fn is_exact(&self) -> bool {
        matches!(self.base.kind(), DriftKind::SignedMeasure { .. })
    }

    pub fn try_evaluate(&self, x: f64) -> Result<f64> {
        smooth_eval(&self.base, self.variance, x, false)
    }

    /// Like [`Self::try_evaluate`]; a quadrature failure yields NaN, which the
    /// scheme's divergence guard reports.
    pub fn evaluate(&self, x: f64) -> f64 {
        self.try_evaluate(x).unwrap_or(f64::NAN)
    }

    pub fn derivative(&self, x: f64) -> Result<f64> {
        smooth_eval(&self.base, self.variance, x, true)
    }

    /// Window covering the effective support plus an `8 sqrt(t)` margin.
    pub fn default_window(&self) -> (f64, f64) {
        let pad = QUADRATURE_RADIUS * self.variance.sqrt();
        let s = self.base.shift();
        let (lo, hi) = match self.base.kind() {
            DriftKind::SignedMeasure { atoms } if !atoms.is_empty() => {
                let lo = atoms.iter().map(|a| a.location).fold(f64::INFINITY, f64::min);
                let hi = atoms.iter().map(|a| a.location).fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            }
            DriftKind::SignedMeasure { .. } => (-1.0, 1.0),
            DriftKind::PowerSingular { .. } => (-0.5, 1.5),
            _ => (-2.0, 2.0),
        };
        (lo - pad + s, hi + pad + s)
    }

    /// Norms on the default window, computed once.
    pub fn norms(&self) -> &DriftNorms {
        self.norms.get_or_init(|| drift_norms(self, DEFAULT_SAMPLES))
    }

    pub fn sup_norm(&self) -> f64 {
        self.norms().sup_norm
    }

    pub fn lip_norm(&self) -> f64 {
        self.norms().lip_norm
    }

    /// `||b^k||_{C^1} = ||b^k||_inf + Lip(b^k)`.
    pub fn c1_norm(&self) -> f64 {
        self.sup_norm() + self.lip_norm()
    }
}

/// Norms sampled on the default window.
pub fn drift_norms(bk: &MollifiedDrift, sample_count: usize) -> DriftNorms {
    drift_norms_on(bk, bk.default_window(), sample_count)
}

/// Sup over `sample_count` equispaced points of `window` and the largest
/// divided difference between neighbours. Measure bases use the closed-form
/// peak `sum |w_i| g_t(0)`, exact for a single atom.
pub fn drift_norms_on(bk: &MollifiedDrift, window: (f64, f64), sample_count: usize) -> DriftNorms {
    let count = sample_count.max(2);
    let (lo, hi) = window;
    let dx = (hi - lo) / (count - 1) as f64;
    let values: Vec<f64> = (0..count).map(|i| bk.evaluate(lo + i as f64 * dx)).collect();
    let lip = values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs() / dx)
        .fold(0.0, f64::max);
    let (sup, closed) = match bk.base.kind() {
        DriftKind::SignedMeasure { atoms } => {
            let mass: f64 = atoms.iter().map(|a| a.weight.abs()).sum();
            (mass * gauss(bk.variance, 0.0), true)
        }
        _ => (values.iter().map(|v| v.abs()).fold(0.0, f64::max), false),
    };
    DriftNorms {
        sup_norm: sup,
        lip_norm: lip,
        window,
        samples: count,
        sup_closed_form: closed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drift::Atom;
    use std::sync::Arc;

    #[test]
    fn constant_is_preserved() {
        for k in [1, 5, 100] {
            let m = mollify(&Drift::constant(3.0), k).unwrap();
            for x in [-2.0, 0.0, 0.3, 10.0] {
                assert!((m.evaluate(x) - 3.0).abs() < 1e-9);
            }
        }
        let n = drift_norms(&mollify(&Drift::constant(3.0), 4).unwrap(), 1000);
        assert!((n.sup_norm - 3.0).abs() < 1e-9);
        assert!(n.lip_norm < 1e-6);
    }

    #[test]
    fn k_zero_rejected() {
        assert!(mollify(&Drift::sin(), 0).is_err());
        assert!(mollify_variance(&Drift::sin(), 0.0).is_err());
    }

    #[test]
    fn dirac_peak() {
        let d = Drift::dirac(0.0, 1.0);
        let m = mollify_variance(&d, 1.0 / (2.0 * PI)).unwrap();
        assert!((m.evaluate(0.0) - 1.0).abs() < 1e-15);
        assert_eq!(m.sup_norm(), 1.0);
        for k in [1u32, 7, 100] {
            let m = mollify(&d, k).unwrap();
            let peak = (k as f64 / (2.0 * PI)).sqrt();
            assert!((m.evaluate(0.0) - peak).abs() < 1e-13 * peak);
        }
    }

    #[test]
    fn dirac_lipschitz() {
        for k in [4u32, 64, 1024] {
            let m = mollify(&Drift::dirac(0.0, 1.0), k).unwrap();
            let n = drift_norms(&m, 10_000);
            let kf = k as f64;
            let expected = kf * (-0.5f64).exp() / (2.0 * PI).sqrt();
            assert!((n.lip_norm / expected - 1.0).abs() < 0.01, "k={k}: {} vs {expected}", n.lip_norm);
        }
    }

    #[test]
    fn sine_is_damped_by_fourier_multiplier() {
        for k in [1u32, 3, 50, 400] {
            let m = mollify(&Drift::sin(), k).unwrap();
            let damp = (-2.0 * PI * PI / k as f64).exp();
            for x in [-0.7, 0.0, 0.1, 0.33, 1.9] {
                let want = damp * (2.0 * PI * x).sin();
                assert!((m.evaluate(x) - want).abs() < 1e-9, "k={k} x={x}");
                let dwant = damp * 2.0 * PI * (2.0 * PI * x).cos();
                assert!((m.derivative(x).unwrap() - dwant).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn sign_matches_erf_shape() {
        // G_t sign at x: P(|N| < x/sigma) = 2 Phi(x/sigma) - 1; check symmetry and limits.
        let m = mollify(&Drift::sign(), 16).unwrap();
        assert!(m.evaluate(0.0).abs() < 1e-10);
        assert!((m.evaluate(5.0) - 1.0).abs() < 1e-10);
        assert!((m.evaluate(0.1) + m.evaluate(-0.1)).abs() < 1e-10);
        // slope at 0: 2 g_t(0)
        let slope = m.derivative(0.0).unwrap();
        assert!((slope - 2.0 * gauss(1.0 / 16.0, 0.0)).abs() < 1e-8);
    }

    #[test]
    fn power_singular_against_direct_series() {
        // Oracle: integrate y^-1/2 g_t(x - y) over (0,1) by splitting y = u^2
        // with a fine composite Simpson rule.
        let d = Drift::power_singular(-0.5).unwrap();
        let t = 1.0 / 64.0;
        let m = mollify_variance(&d, t).unwrap();
        for x in [-0.2, 0.0, 0.05, 0.5, 0.99, 1.3] {
            let n = 200_000;
            let h = 1.0 / n as f64;
            let f = |u: f64| 2.0 * gauss(t, x - u * u);
            let mut s = f(0.0) + f(1.0);
            for i in 1..n {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
            }
            let oracle = s * h / 3.0;
            assert!((m.evaluate(x) - oracle).abs() < 1e-9, "x={x}: {} vs {oracle}", m.evaluate(x));
        }
    }

    #[test]
    fn linearity_of_mollification() {
        let f1 = |x: f64| (3.0 * x).cos();
        let f2 = |x: f64| if x > 0.2 { 1.0 } else { 0.0 };
        let (alpha, beta) = (1.5, -0.75);
        let mix = Drift::bounded(
            Callable::Custom {
                f: Arc::new(move |x| alpha * f1(x) + beta * f2(x)),
                breakpoints: vec![0.2],
                label: "mix".into(),
            },
            3.0,
        );
        let b1 = Drift::smooth(Callable::Custom { f: Arc::new(f1), breakpoints: vec![], label: "cos".into() }, 3.0);
        let b2 = Drift::bounded(Callable::Custom { f: Arc::new(f2), breakpoints: vec![0.2], label: "step".into() }, 1.0);
        let (m, m1, m2) = (mollify(&mix, 9).unwrap(), mollify(&b1, 9).unwrap(), mollify(&b2, 9).unwrap());
        for x in [-1.0, 0.0, 0.2, 0.41, 2.0] {
            let lhs = m.evaluate(x);
            let rhs = alpha * m1.evaluate(x) + beta * m2.evaluate(x);
            assert!((lhs - rhs).abs() < 1e-9);
        }
        // two atoms versus the sum of single atoms
        let two = Drift::measure(vec![Atom { location: 0.0, weight: 2.0 }, Atom { location: 0.5, weight: -1.0 }]);
        let a = mollify(&Drift::dirac(0.0, 2.0), 5).unwrap();
        let b = mollify(&Drift::dirac(0.5, -1.0), 5).unwrap();
        let m = mollify(&two, 5).unwrap();
        for x in [-0.3, 0.1, 0.5] {
            assert!((m.evaluate(x) - (a.evaluate(x) + b.evaluate(x))).abs() < 1e-14);
        }
    }

    #[test]
    fn shift_equivariance() {
        let a = 0.37;
        let d = Drift::dirac(0.0, 1.0);
        let (m, ms) = (mollify(&d, 10).unwrap(), mollify(&d.clone().shifted(a), 10).unwrap());
        for x in [-0.5, 0.1, 0.37, 0.9] {
            assert_eq!(ms.evaluate(x), m.evaluate(x - a));
        }
        let p = Drift::power_singular(-0.5).unwrap();
        let (m, ms) = (mollify(&p, 10).unwrap(), mollify(&p.clone().shifted(a), 10).unwrap());
        for x in [-0.5, 0.1, 0.37, 0.9] {
            assert!((ms.evaluate(x) - m.evaluate(x - a)).abs() < 1e-10);
        }
    }

    #[test]
    fn norms_bound_samples() {
        let m = mollify(&Drift::power_singular(-0.5).unwrap(), 64).unwrap();
        let n = m.norms();
        let (lo, hi) = n.window;
        for i in 0..500 {
            let x = lo + (hi - lo) * (i as f64 + 0.37) / 500.0;
            assert!(m.evaluate(x).abs() <= n.sup_norm + 1e-6);
        }
        for i in 0..499 {
            let x0 = lo + (hi - lo) * i as f64 / 500.0;
            let x1 = x0 + 1e-4;
            let slope = (m.evaluate(x1) - m.evaluate(x0)).abs() / 1e-4;
            assert!(slope <= n.lip_norm * (1.0 + 1e-3) + 1e-6);
        }
    }
}
