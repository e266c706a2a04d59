//! Coupled space-time grids on the torus.
//!
//! A grid of resolution `n` has `2n` spatial points `j/(2n)` and time step
//! `h = c (2n)^-2`, where `c` is the CFL ratio. Gridpoints are addressed by
//! integer indices; real coordinates are derived from them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive rational number `num/den`, kept in lowest terms. Serialized
/// as the string `"num/den"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let r = a % b;
        a = b;
        b = r;
    }
    a
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 {
            return Err(Error::Config("rational with zero denominator".into()));
        }
        let g = gcd(num, den).max(1);
        Ok(Ratio {
            num: num / g,
            den: den / g,
        })
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Recovers a rational from a float: the smallest-denominator continued
    /// fraction convergent that rounds back to `x`, or the exact dyadic value.
    pub fn from_f64(x: f64) -> Result<Self> {
        if !x.is_finite() || x < 0.0 {
            return Err(Error::Config(format!("cannot represent {x} as a ratio")));
        }
        let (mut p0, mut q0, mut p1, mut q1) = (0u64, 1u64, 1u64, 0u64);
        let mut v = x;
        for _ in 0..40 {
            let a = v.floor();
            if a > 1e12 {
                break;
            }
            let a = a as u64;
            let (p2, q2) = match (a.checked_mul(p1).and_then(|t| t.checked_add(p0)), a.checked_mul(q1).and_then(|t| t.checked_add(q0))) {
                (Some(p), Some(q)) if q <= 1_000_000_000 => (p, q),
                _ => break,
            };
            if p2 as f64 / q2 as f64 == x {
                return Ratio::new(p2, q2);
            }
            (p0, q0, p1, q1) = (p1, q1, p2, q2);
            let frac = v - a as f64;
            if frac == 0.0 {
                break;
            }
            v = 1.0 / frac;
        }
        // Exact dyadic fallback.
        let mut num = x;
        let mut den = 1u64;
        while num.fract() != 0.0 && den < (1u64 << 62) {
            num *= 2.0;
            den <<= 1;
        }
        if num.fract() != 0.0 || num > u64::MAX as f64 {
            return Err(Error::Config(format!("cannot represent {x} as a ratio")));
        }
        Ratio::new(num as u64, den)
    }
}

impl Serialize for Ratio {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Ratio {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ratio::from_f64(v).map_err(serde::de::Error::custom),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = Error;

    /// Accepts `p/q`, an integer, or a decimal literal.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((p, q)) = s.split_once('/') {
            let p: u64 = p
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad rational numerator in '{s}'")))?;
            let q: u64 = q
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad rational denominator in '{s}'")))?;
            Ratio::new(p, q)
        } else {
            let x: f64 = s
                .parse()
                .map_err(|_| Error::Config(format!("bad rational '{s}'")))?;
            Ratio::from_f64(x)
        }
    }
}

/// The coupled discretization at resolution `n` with CFL ratio `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    n: u32,
    c: Ratio,
    h: f64,
    num_time: usize,
}

/// Builds a grid, rejecting `n < 1` and `c` outside `(0, 1/2)`.
pub fn make_grid(n: u32, c: f64) -> Result<GridConfig> {
    if !(c > 0.0 && c < 0.5) {
        return Err(Error::Cfl { c });
    }
    GridConfig::new(n, Ratio::from_f64(c)?)
}

impl GridConfig {
    pub fn new(n: u32, c: Ratio) -> Result<Self> {
        if n < 1 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        // c < 1/2  <=>  2 num < den
        if c.num == 0 || 2 * (c.num as u128) >= c.den as u128 {
            return Err(Error::Cfl { c: c.to_f64() });
        }
        Ok(Self::build(n, c))
    }

    /// Builds a grid without checking the CFL condition. Only meant for
    /// stability experiments that deliberately violate it.
    #[doc(hidden)]
    pub fn new_unchecked(n: u32, c: Ratio) -> Self {
        Self::build(n.max(1), c)
    }

    fn build(n: u32, c: Ratio) -> Self {
        let two_n_sq = 4 * (n as u128) * (n as u128);
        let h = c.num as f64 / (c.den as f64 * two_n_sq as f64);
        // floor(1/h) = floor(den (2n)^2 / num), exactly
        let num_time = ((c.den as u128 * two_n_sq) / c.num as u128) as usize;
        GridConfig { n, c, h, num_time }
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn c(&self) -> Ratio {
        self.c
    }

    pub fn c_f64(&self) -> f64 {
        self.c.to_f64()
    }

    /// Time step `c (2n)^-2`.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Number of spatial points, `2n`.
    pub fn num_space(&self) -> usize {
        2 * self.n as usize
    }

    /// Index of the last time gridpoint, `floor(1/h)`.
    pub fn num_time(&self) -> usize {
        self.num_time
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.num_space() as f64
    }

    pub fn space_point(&self, j: usize) -> f64 {
        j as f64 / self.num_space() as f64
    }

    pub fn time_point(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn space_points(&self) -> Vec<f64> {
        (0..self.num_space()).map(|j| self.space_point(j)).collect()
    }

    pub fn time_points(&self) -> Vec<f64> {
        (0..=self.num_time).map(|i| self.time_point(i)).collect()
    }

    /// Index of the leftmost time gridpoint at or before `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, 1]")));
        }
        let scale = (self.c.den as f64) * 4.0 * (self.n as f64).powi(2) / self.c.num as f64;
        let i = guarded_floor(t * scale);
        Ok((i as usize).min(self.num_time))
    }

    /// Index of the leftmost spatial gridpoint at or before `y mod 1`.
    pub fn space_index(&self, y: f64) -> usize {
        let w = y.rem_euclid(1.0);
        let j = guarded_floor(w * self.num_space() as f64) as usize;
        if j >= self.num_space() {
            0
        } else {
            j
        }
    }
}

/// Floor that snaps to the nearest integer when within a few ulps of it.
fn guarded_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// `t_h = h floor(t/h)`.
pub fn project_time(grid: &GridConfig, t: f64) -> Result<f64> {
    Ok(grid.time_point(grid.time_index(t)?))
}

/// `y_n = (2n)^-1 floor((y mod 1) 2n)`.
pub fn project_space(grid: &GridConfig, y: f64) -> f64 {
    grid.space_point(grid.space_index(y))
}

/// Returns `j` when `fine.n = 2^j coarse.n`, `None` when the resolutions are
/// not dyadically nested. Grids with different CFL ratios are an error.
pub fn nesting_factor(coarse: &GridConfig, fine: &GridConfig) -> Result<Option<u32>> {
    if coarse.c != fine.c {
        return Err(Error::Nesting(format!(
            "CFL ratios differ ({} vs {})",
            coarse.c, fine.c
        )));
    }
    if fine.n % coarse.n != 0 {
        return Ok(None);
    }
    let ratio = fine.n / coarse.n;
    if ratio.is_power_of_two() {
        Ok(Some(ratio.trailing_zeros()))
    } else {
        Ok(None)
    }
}
