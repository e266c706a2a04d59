//! Periodic heat kernel, the explicit scheme's discrete semigroup, and the
//! pointwise variances `Q` and `Q^n` of the continuous and discrete
//! Ornstein-Uhlenbeck processes.
//!
//! The kernel convention is the Fourier one,
//! `p_t(x, y) = sum_k exp(-4 pi^2 k^2 t) exp(2 pi i k (x - y))`, i.e. the
//! semigroup of `d/dt = d^2/dx^2` on the unit torus.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridConfig;

const FOUR_PI_SQ: f64 = 4.0 * PI * PI;
const TAIL_REL: f64 = 1e-14;
/// Below this time the kernel is summed over Gaussian images instead.
const IMAGE_SUM_BELOW: f64 = 1e-3;

/// `p_t(x, y)` on the torus, accurate to `tol`.
pub fn heat_kernel(t: f64, x: f64, y: f64, tol: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("heat kernel needs t > 0, got {t}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let d = (x - y).rem_euclid(1.0);
    let d = if d > 0.5 { d - 1.0 } else { d };
    if t < IMAGE_SUM_BELOW {
        let norm = 1.0 / (4.0 * PI * t).sqrt();
        return Ok((-3..=3)
            .map(|m| {
                let u = d + m as f64;
                norm * (-u * u / (4.0 * t)).exp()
            })
            .sum());
    }
    let decay = (-FOUR_PI_SQ * t).exp();
    let mut sum = 1.0;
    let mut k = 1u32;
    loop {
        let kf = k as f64;
        let a = (-FOUR_PI_SQ * kf * kf * t).exp();
        // remaining terms are dominated by a geometric series in `decay`
        if 2.0 * a / (1.0 - decay) < tol {
            break;
        }
        sum += 2.0 * a * (2.0 * PI * kf * d).cos();
        k += 1;
    }
    Ok(sum)
}

/// Signed wavenumber of DFT bin `j` out of `len`.
fn wavenumber(j: usize, len: usize) -> f64 {
    if j <= len / 2 {
        j as f64
    } else {
        j as f64 - len as f64
    }
}

/// Multiplies the DFT of `f` by `mult(j)` and transforms back.
fn spectral_multiply(f: &[f64], mult: impl Fn(usize) -> f64) -> Vec<f64> {
    let len = f.len();
    if len == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut buf: Vec<Complex<f64>> = f.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (j, z) in buf.iter_mut().enumerate() {
        *z *= mult(j);
    }
    inv.process(&mut buf);
    let scale = 1.0 / len as f64;
    buf.iter().map(|z| z.re * scale).collect()
}

/// `P_t f` for `f` sampled at `len` equispaced points of the torus,
/// by Fourier-mode damping `exp(-4 pi^2 k^2 t)`.
pub fn semigroup_apply(t: f64, f: &[f64]) -> Vec<f64> {
    if t == 0.0 {
        return f.to_vec();
    }
    let len = f.len();
    spectral_multiply(f, |j| {
        let k = wavenumber(j, len);
        (-FOUR_PI_SQ * k * k * t).exp()
    })
}

/// `P_t f` for a callable `f`, sampled at `points` equispaced points.
pub fn semigroup_apply_fn(t: f64, f: impl Fn(f64) -> f64, points: usize) -> Vec<f64> {
    let samples: Vec<f64> = (0..points).map(|j| f(j as f64 / points as f64)).collect();
    semigroup_apply(t, &samples)
}

/// Spectrum of the one-step operator `Id + h Delta_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub n: u32,
    pub c: f64,
    /// `1 - 4c sin^2(pi j / 2n)`
    pub multipliers: Vec<f64>,
    /// `-4 (2n)^2 sin^2(pi j / 2n)`
    pub eigenvalues: Vec<f64>,
}

pub fn discrete_spectrum(grid: &GridConfig) -> SpectrumTable {
    let len = grid.num_space();
    let c = grid.c_f64();
    let two_n_sq = (len * len) as f64;
    let mut multipliers = Vec::with_capacity(len);
    let mut eigenvalues = Vec::with_capacity(len);
    for j in 0..len {
        let s = (PI * j as f64 / len as f64).sin();
        let s2 = s * s;
        multipliers.push(1.0 - 4.0 * c * s2);
        eigenvalues.push(-4.0 * two_n_sq * s2);
    }
    SpectrumTable {
        n: grid.n(),
        c,
        multipliers,
        eigenvalues,
    }
}

/// One application of `Id + h Delta_n` with periodic wrap.
pub fn stencil_step(grid: &GridConfig, f: &[f64]) -> Vec<f64> {
    let c = grid.c_f64();
    let len = f.len();
    (0..len)
        .map(|j| {
            let left = f[(j + len - 1) % len];
            let right = f[(j + 1) % len];
            f[j] + c * (right - 2.0 * f[j] + left)
        })
        .collect()
}

/// `(Id + h Delta_n)^steps f`, computed spectrally.
pub fn discrete_semigroup_apply(grid: &GridConfig, steps: usize, f: &[f64]) -> Vec<f64> {
    if steps == 0 {
        return f.to_vec();
    }
    let spec = discrete_spectrum(grid);
    spectral_multiply(f, |j| powu(spec.multipliers[j], steps))
}

fn powu(x: f64, e: usize) -> f64 {
    if e <= i32::MAX as usize {
        x.powi(e as i32)
    } else {
        x.powf(e as f64)
    }
}

/// `Q(t) = t + sum_{k>=1} (1 - exp(-8 pi^2 k^2 t)) / (4 pi^2 k^2)`, evaluated
/// as `t + 1/24 - sum_k exp(-8 pi^2 k^2 t) / (4 pi^2 k^2)`.
pub fn variance_q(t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Q(t) needs t > 0, got {t}")));
    }
    let mut tail = 0.0;
    let mut k = 1u64;
    loop {
        let kf = k as f64;
        let term = (-2.0 * FOUR_PI_SQ * kf * kf * t).exp() / (FOUR_PI_SQ * kf * kf);
        tail += term;
        if term < TAIL_REL * (tail + 1e-300) {
            break;
        }
        k += 1;
    }
    // sum_{k>=1} 1/(4 pi^2 k^2) = 1/24
    Ok(t + (1.0 / 24.0 - tail))
}

/// `sum_{l=0}^{m-1} r^l` for `r = mult^2`, with `one_minus_mult = 1 - mult`
/// supplied separately to avoid cancellation near `mult = 1`.
fn geometric_sum(mult: f64, one_minus_mult: f64, m: usize) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let r = mult * mult;
    if one_minus_mult == 0.0 {
        return m as f64;
    }
    if r == 0.0 {
        return 1.0;
    }
    let one_minus_r = one_minus_mult * (1.0 + mult);
    -(m as f64 * r.ln()).exp_m1() / one_minus_r
}

/// Variance of the discrete Ornstein-Uhlenbeck process at time `t`.
///
/// At grid times `mh` it is `h sum_q sum_{l<m} m_q^{2l}`; in between it is
/// linear with slope `sum_q m_q^{2m}`, so `Q^n(t) = 2nt` on `[0, h)`.
pub fn variance_qn(grid: &GridConfig, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("Q^n(t) needs t > 0, got {t}")));
    }
    if t > 1.0 {
        return Err(Error::Domain(format!("Q^n(t) needs t <= 1, got {t}")));
    }
    let m = grid.time_index(t)?;
    let h = grid.h();
    let len = grid.num_space();
    let c = grid.c_f64();
    let frac = (t - m as f64 * h).max(0.0);
    let mut at_grid = 0.0;
    let mut slope = 0.0;
    for q in 0..len {
        let s = (PI * q as f64 / len as f64).sin();
        let one_minus = 4.0 * c * s * s;
        let mult = 1.0 - one_minus;
        at_grid += geometric_sum(mult, one_minus, m);
        slope += powu(mult * mult, m);
    }
    Ok(h * at_grid + frac * slope)
}

/// `|Q^n(t) - Q(t)|` together with the reference shape
/// `n^{-alpha/2} t^{1/2 - alpha/4}` of its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceGap {
    pub t: f64,
    pub q: f64,
    pub qn: f64,
    pub gap: f64,
    pub bound_shape: f64,
}

pub fn variance_gap(grid: &GridConfig, t: f64, alpha: f64) -> Result<VarianceGap> {
    if !(0.0..2.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha must lie in [0, 2), got {alpha}")));
    }
    let q = variance_q(t)?;
    let qn = variance_qn(grid, t)?;
    Ok(VarianceGap {
        t,
        q,
        qn,
        gap: (qn - q).abs(),
        bound_shape: (grid.n() as f64).powf(-alpha / 2.0) * t.powf(0.5 - alpha / 4.0),
    })
}
