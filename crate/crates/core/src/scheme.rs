//! The tamed explicit Euler finite-difference scheme
//!
//! `u_{t+h}(x) = u_t(x) + h Delta_n u_t(x) + h b^k(u_t(x)) + h xi_n(x, t)`
//!
//! on the periodic grid, and its drift-free special case, the discrete
//! Ornstein-Uhlenbeck process.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::drift::{mollify, Drift, DriftEvaluator, MollifiedDrift};
use crate::error::{Error, Result};
use crate::grid::GridConfig;
use crate::noise::{coarsen_noise, fill_row, read_header, write_header, NoiseField};

/// Values beyond this magnitude are treated as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

/// Initial condition presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Psi0 {
    Zero,
    Sin,
    /// `sum_{i=0}^{2} 2^{-i/2} sin(2 pi 2^i x)`, a truncated Weierstrass sum
    /// of Hölder exponent 1/2.
    Weierstrass,
}

impl Psi0 {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Psi0::Zero => 0.0,
            Psi0::Sin => (2.0 * PI * x).sin(),
            Psi0::Weierstrass => (0..3)
                .map(|i| {
                    let f = (1u32 << i) as f64;
                    f.powf(-0.5) * (2.0 * PI * f * x).sin()
                })
                .sum(),
        }
    }

    pub fn sample(self, grid: &GridConfig) -> Vec<f64> {
        grid.space_points().into_iter().map(|x| self.eval(x)).collect()
    }
}

impl fmt::Display for Psi0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Psi0::Zero => "zero",
            Psi0::Sin => "sin",
            Psi0::Weierstrass => "weierstrass",
        })
    }
}

impl FromStr for Psi0 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "zero" | "0" => Ok(Psi0::Zero),
            "sin" => Ok(Psi0::Sin),
            "weierstrass" => Ok(Psi0::Weierstrass),
            other => Err(Error::Config(format!("unknown psi0 preset '{other}'"))),
        }
    }
}

/// The scheme's state at one grid time.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    grid: GridConfig,
    time_index: usize,
    values: Vec<f64>,
}

impl FieldState {
    pub fn new(grid: &GridConfig, time_index: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.num_space() {
            return Err(Error::Config(format!(
                "state needs {} values, got {}",
                grid.num_space(),
                values.len()
            )));
        }
        if time_index > grid.num_time() {
            return Err(Error::Index {
                i: time_index,
                j: 0,
                rows: grid.num_time() + 1,
                cols: values.len(),
            });
        }
        Ok(FieldState {
            grid: *grid,
            time_index,
            values,
        })
    }

    pub fn initial(grid: &GridConfig, psi0: Psi0) -> Self {
        FieldState {
            grid: *grid,
            time_index: 0,
            values: psi0.sample(grid),
        }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn time_index(&self) -> usize {
        self.time_index
    }

    pub fn time(&self) -> f64 {
        self.grid.time_point(self.time_index)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// One step of the scheme, evaluating the drift through `bk` directly.
pub fn step(state: &FieldState, bk: &MollifiedDrift, field: &NoiseField) -> Result<FieldState> {
    if field.grid() != &state.grid {
        return Err(Error::Config(format!(
            "noise is on n = {}, state on n = {}",
            field.grid().n(),
            state.grid.n()
        )));
    }
    let i = state.time_index;
    if i >= state.grid.num_time() {
        return Err(Error::Domain(format!("time index {i} is already the last one")));
    }
    let mut stepper = Stepper::new(&state.grid, DriftEvaluator::Exact(bk.clone()), state.values.clone());
    stepper.step = i;
    stepper.advance(field.row(i))?;
    Ok(FieldState {
        grid: state.grid,
        time_index: i + 1,
        values: stepper.into_values(),
    })
}

/// In-place stepper with a double buffer.
#[derive(Debug, Clone)]
pub struct Stepper<'a> {
    grid: GridConfig,
    drift: Cow<'a, DriftEvaluator>,
    c: f64,
    h: f64,
    noise_scale: f64,
    step: usize,
    cur: Vec<f64>,
    next: Vec<f64>,
    drift_buf: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(grid: &GridConfig, drift: impl Into<Cow<'a, DriftEvaluator>>, initial: Vec<f64>) -> Self {
        assert_eq!(initial.len(), grid.num_space());
        let len = initial.len();
        Stepper {
            grid: *grid,
            drift: drift.into(),
            c: grid.c_f64(),
            h: grid.h(),
            noise_scale: len as f64,
            step: 0,
            cur: initial,
            next: vec![0.0; len],
            drift_buf: vec![0.0; len],
        }
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    /// Number of steps taken so far.
    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.cur
    }

    pub fn into_values(self) -> Vec<f64> {
        self.cur
    }

    pub fn drift(&self) -> &DriftEvaluator {
        &self.drift
    }

    /// Advances one step driven by one row of cell increments.
    pub fn advance(&mut self, noise: &[f64]) -> Result<()> {
        debug_assert_eq!(noise.len(), self.cur.len());
        let h = self.h;
        let with_drift = match self.drift.as_ref() {
            DriftEvaluator::Zero => false,
            DriftEvaluator::Table { table, exact } => {
                for (d, &u) in self.drift_buf.iter_mut().zip(&self.cur) {
                    *d = h * if table.contains(u) { table.eval(u) } else { outside_table(exact, u) };
                }
                true
            }
            other => {
                for (d, &u) in self.drift_buf.iter_mut().zip(&self.cur) {
                    *d = h * other.eval(u);
                }
                true
            }
        };
        if with_drift {
            stencil(&self.cur, &mut self.next, noise, Some(&self.drift_buf), self.c, self.noise_scale);
        } else {
            stencil(&self.cur, &mut self.next, noise, None, self.c, self.noise_scale);
        }
        std::mem::swap(&mut self.cur, &mut self.next);
        self.step += 1;
        let ok = self.cur.iter().fold(true, |ok, v| ok & (v.abs() <= DIVERGENCE_LIMIT));
        if !ok {
            let value = self
                .cur
                .iter()
                .copied()
                .find(|v| !(v.abs() <= DIVERGENCE_LIMIT))
                .unwrap_or(f64::NAN);
            return Err(Error::Divergence {
                n: self.grid.n(),
                step: self.step,
                value,
            });
        }
        Ok(())
    }
}

#[cold]
#[inline(never)]
fn outside_table(exact: &MollifiedDrift, x: f64) -> f64 {
    exact.evaluate(x)
}

/// `next = cur + c (right - 2 cur + left) + drift + scale * noise`, where
/// `drift` already holds `h b(cur)`.
#[inline(always)]
fn stencil(cur: &[f64], next: &mut [f64], noise: &[f64], drift: Option<&[f64]>, c: f64, scale: f64) {
    let len = cur.len();
    let d = |j: usize| drift.map_or(0.0, |d| d[j]);
    if len == 1 {
        next[0] = cur[0] + d(0) + scale * noise[0];
        return;
    }
    next[0] = cur[0] + c * (cur[1] - 2.0 * cur[0] + cur[len - 1]) + d(0) + scale * noise[0];
    next[len - 1] = cur[len - 1] + c * (cur[0] - 2.0 * cur[len - 1] + cur[len - 2]) + d(len - 1) + scale * noise[len - 1];
    let inner = len - 2;
    let (left, mid, right) = (&cur[..inner], &cur[1..=inner], &cur[2..]);
    let out = &mut next[1..=inner];
    let z = &noise[1..=inner];
    match drift {
        Some(dr) => {
            let dr = &dr[1..=inner];
            for j in 0..inner {
                out[j] = mid[j] + c * (right[j] - 2.0 * mid[j] + left[j]) + dr[j] + scale * z[j];
            }
        }
        None => {
            for j in 0..inner {
                out[j] = mid[j] + c * (right[j] - 2.0 * mid[j] + left[j]) + scale * z[j];
            }
        }
    }
}

/// Snapshots of one simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: GridConfig,
    pub snapshots: BTreeMap<usize, Vec<f64>>,
    pub k: Option<u32>,
    pub drift: String,
    pub seed: u64,
}

impl Trajectory {
    /// CSV rows `replica,time,x,value`.
    pub fn write_csv<W: Write>(&self, mut w: W, replica: usize) -> Result<()> {
        for (&i, values) in &self.snapshots {
            let t = self.grid.time_point(i);
            for (j, v) in values.iter().enumerate() {
                writeln!(w, "{replica},{t},{},{v}", self.grid.space_point(j))?;
            }
        }
        Ok(())
    }

    /// Same header as the noise dump, then the snapshot count and, per
    /// snapshot, its time index followed by `2n` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, &self.grid, self.seed)?;
        w.write_all(&(self.snapshots.len() as u64).to_le_bytes())?;
        for (&i, values) in &self.snapshots {
            w.write_all(&(i as u64).to_le_bytes())?;
            for v in values {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let (grid, seed) = read_header(&mut r)?;
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let count = u64::from_le_bytes(word) as usize;
        let mut snapshots = BTreeMap::new();
        for _ in 0..count {
            r.read_exact(&mut word)?;
            let i = u64::from_le_bytes(word) as usize;
            let mut values = Vec::with_capacity(grid.num_space());
            for _ in 0..grid.num_space() {
                r.read_exact(&mut word)?;
                values.push(f64::from_le_bytes(word));
            }
            snapshots.insert(i, values);
        }
        Ok(Trajectory {
            grid,
            snapshots,
            k: None,
            drift: String::new(),
            seed,
        })
    }
}

fn check_record(grid: &GridConfig, record: &[usize]) -> Result<()> {
    if let Some(&bad) = record.iter().find(|&&i| i > grid.num_time()) {
        return Err(Error::Config(format!(
            "record index {bad} exceeds the horizon {} of n = {}",
            grid.num_time(),
            grid.n()
        )));
    }
    Ok(())
}

fn matched_field<'a>(grid: &GridConfig, field: &'a NoiseField) -> Result<Cow<'a, NoiseField>> {
    if field.grid() == grid {
        Ok(Cow::Borrowed(field))
    } else {
        Ok(Cow::Owned(coarsen_noise(field, grid)?))
    }
}

/// Value range the solution is expected to stay in, used to size drift
/// tables: the initial data plus a generous allowance for the noise and the
/// drift's displacement over unit time. Values outside fall back to exact
/// evaluation, so this only affects speed.
pub fn expected_range(bk: &MollifiedDrift, psi0: &[f64]) -> (f64, f64) {
    let lo = psi0.iter().copied().fold(0.0f64, f64::min);
    let hi = psi0.iter().copied().fold(0.0f64, f64::max);
    let pad = 8.0 + bk.sup_norm().min(1e3);
    (lo - pad, hi + pad)
}

/// Drift evaluator for running the scheme with `bk` from initial data `psi0`.
pub fn evaluator_for(bk: &MollifiedDrift, psi0: &[f64]) -> Result<DriftEvaluator> {
    if bk.base().is_zero() {
        return Ok(DriftEvaluator::Zero);
    }
    DriftEvaluator::new(bk, Some(expected_range(bk, psi0)))
}

/// Steps up to the last requested index, recording snapshots. `row(i, buf)`
/// supplies the noise of time row `i`.
fn run(
    stepper: &mut Stepper,
    mut row: impl FnMut(usize, &mut Vec<f64>),
    record: &[usize],
) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut snapshots = BTreeMap::new();
    let last = record.iter().copied().max().unwrap_or(0);
    if record.contains(&0) {
        snapshots.insert(0, stepper.values().to_vec());
    }
    let mut buf = Vec::new();
    while stepper.step_index() < last {
        let i = stepper.step_index();
        row(i, &mut buf);
        stepper.advance(&buf)?;
        if record.contains(&(i + 1)) {
            snapshots.insert(i + 1, stepper.values().to_vec());
        }
    }
    Ok(snapshots)
}

/// Simulates the scheme with drift `b` mollified at level `k`.
///
/// A field on a finer nested grid is coarsened first.
pub fn simulate(grid: &GridConfig, b: &Drift, k: u32, field: &NoiseField, psi0: Psi0, record: &[usize]) -> Result<Trajectory> {
    check_record(grid, record)?;
    let field = matched_field(grid, field)?;
    let bk = mollify(b, k)?;
    let initial = psi0.sample(grid);
    let evaluator = evaluator_for(&bk, &initial)?;
    simulate_with(grid, evaluator, &field, initial, record, Some(k), b.label())
}

/// Simulation core with a prepared evaluator and explicit initial values.
pub fn simulate_with(
    grid: &GridConfig,
    drift: DriftEvaluator,
    field: &NoiseField,
    initial: Vec<f64>,
    record: &[usize],
    k: Option<u32>,
    label: String,
) -> Result<Trajectory> {
    check_record(grid, record)?;
    if field.grid() != grid {
        return Err(Error::Config(format!(
            "noise is on n = {}, grid is n = {}",
            field.grid().n(),
            grid.n()
        )));
    }
    if initial.len() != grid.num_space() {
        return Err(Error::Config(format!(
            "initial data needs {} values, got {}",
            grid.num_space(),
            initial.len()
        )));
    }
    let mut stepper = Stepper::new(grid, drift, initial);
    let snapshots = run(
        &mut stepper,
        |i, buf| {
            buf.clear();
            buf.extend_from_slice(field.row(i));
        },
        record,
    )?;
    Ok(Trajectory {
        grid: *grid,
        snapshots,
        k,
        drift: label,
        seed: field.seed(),
    })
}

/// Same as [`simulate`] on `sample_noise(grid, seed)`, but generates noise
/// one time row at a time so memory stays at a few rows.
pub fn simulate_seeded(grid: &GridConfig, b: &Drift, k: u32, seed: u64, psi0: Psi0, record: &[usize]) -> Result<Trajectory> {
    check_record(grid, record)?;
    let bk = mollify(b, k)?;
    let initial = psi0.sample(grid);
    let evaluator = evaluator_for(&bk, &initial)?;
    let mut stepper = Stepper::new(grid, evaluator, initial);
    let snapshots = run(
        &mut stepper,
        |i, buf| {
            buf.resize(grid.num_space(), 0.0);
            fill_row(grid, seed, i, buf);
        },
        record,
    )?;
    Ok(Trajectory {
        grid: *grid,
        snapshots,
        k: Some(k),
        drift: b.label(),
        seed,
    })
}

/// The drift-free scheme from zero initial data.
pub fn simulate_ou_discrete(grid: &GridConfig, field: &NoiseField, record: &[usize]) -> Result<Trajectory> {
    let field = matched_field(grid, field)?;
    simulate_with(
        grid,
        DriftEvaluator::Zero,
        &field,
        vec![0.0; grid.num_space()],
        record,
        None,
        "zero".into(),
    )
}
