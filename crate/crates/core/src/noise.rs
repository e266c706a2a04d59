//! Space-time white noise realized as independent Gaussian cell increments.
//!
//! Cell `(i, j)` of a field on grid `n` carries `xi([x_j, x_j + 1/(2n)] x [t_i, t_i + h])`,
//! a centered Gaussian with variance `h / (2n)`. Coarser fields of the same
//! realization are obtained by summing the fine cells that tile each coarse
//! cell, always in the same balanced order so that materialized and
//! streamed coarsening agree bit for bit.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{nesting_factor, GridConfig, Ratio};
use crate::rng::CounterRng;

/// One realization of the noise at a fixed resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField {
    grid: GridConfig,
    increments: Vec<f64>,
    seed: u64,
}

/// Standard deviation of one cell increment, `sqrt(h / (2n))`.
pub fn cell_std(grid: &GridConfig) -> f64 {
    (grid.h() / grid.num_space() as f64).sqrt()
}

/// Fills time row `i` of the field keyed by `seed`.
pub fn fill_row(grid: &GridConfig, seed: u64, i: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), grid.num_space());
    let sigma = cell_std(grid);
    let mut rng = CounterRng::for_row(seed, i as u64);
    for v in out.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v = sigma * z;
    }
}

/// Samples a full field: `num_time` rows of `2n` increments.
pub fn sample_noise(grid: &GridConfig, seed: u64) -> NoiseField {
    let cols = grid.num_space();
    let rows = grid.num_time();
    let mut increments = vec![0.0; rows * cols];
    for (i, row) in increments.chunks_mut(cols).enumerate() {
        fill_row(grid, seed, i, row);
    }
    NoiseField {
        grid: *grid,
        increments,
        seed,
    }
}

#[inline]
fn pair_sum(row: &[f64], out: &mut [f64]) {
    for (o, p) in out.iter_mut().zip(row.chunks_exact(2)) {
        *o = p[0] + p[1];
    }
}

/// Sums a block of four fine rows into one coarse row of half the width:
/// `((r0 + r1) + (r2 + r3))` after pairing neighbours in space.
pub fn coarsen_block(rows: [&[f64]; 4], out: &mut [f64]) {
    let half = out.len();
    let mut a = vec![0.0; half];
    let mut b = vec![0.0; half];
    pair_sum(rows[0], &mut a);
    pair_sum(rows[1], &mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x += y;
    }
    let mut c = vec![0.0; half];
    pair_sum(rows[2], &mut b);
    pair_sum(rows[3], &mut c);
    for ((o, x), (y, z)) in out.iter_mut().zip(&a).zip(b.iter().zip(&c)) {
        *o = x + (y + z);
    }
}

/// Coarsens a fine field to a dyadically nested coarser grid.
pub fn coarsen_noise(fine: &NoiseField, coarse_grid: &GridConfig) -> Result<NoiseField> {
    let j = nesting_factor(coarse_grid, &fine.grid)?.ok_or_else(|| {
        Error::Nesting(format!(
            "n = {} does not divide n = {} by a power of two",
            coarse_grid.n(),
            fine.grid.n()
        ))
    })?;
    let mut grid = fine.grid;
    let mut data = fine.increments.clone();
    for _ in 0..j {
        let cols = grid.num_space();
        let rows = data.len() / cols;
        let next = GridConfig::new_unchecked(grid.n() / 2, grid.c());
        let out_cols = cols / 2;
        let out_rows = rows / 4;
        let mut out = vec![0.0; out_rows * out_cols];
        for (r, o) in out.chunks_mut(out_cols).enumerate() {
            let base = 4 * r * cols;
            let row = |k: usize| &data[base + k * cols..base + (k + 1) * cols];
            coarsen_block([row(0), row(1), row(2), row(3)], o);
        }
        grid = next;
        data = out;
    }
    data.truncate(coarse_grid.num_time() * coarse_grid.num_space());
    Ok(NoiseField {
        grid: *coarse_grid,
        increments: data,
        seed: fine.seed,
    })
}

impl NoiseField {
    /// Wraps externally supplied increments (row-major, `num_time x 2n`).
    pub fn from_increments(grid: &GridConfig, increments: Vec<f64>, seed: u64) -> Result<Self> {
        let expected = grid.num_time() * grid.num_space();
        if increments.len() != expected {
            return Err(Error::Config(format!(
                "noise field needs {expected} increments, got {}",
                increments.len()
            )));
        }
        Ok(NoiseField {
            grid: *grid,
            increments,
            seed,
        })
    }

    pub fn grid(&self) -> &GridConfig {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rows(&self) -> usize {
        self.grid.num_time()
    }

    pub fn cols(&self) -> usize {
        self.grid.num_space()
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let cols = self.cols();
        &self.increments[i * cols..(i + 1) * cols]
    }

    pub fn increment(&self, i: usize, j: usize) -> Result<f64> {
        if i >= self.rows() || j >= self.cols() {
            return Err(Error::Index {
                i,
                j,
                rows: self.rows(),
                cols: self.cols(),
            });
        }
        Ok(self.increments[i * self.cols() + j])
    }

    /// The same realization multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> NoiseField {
        NoiseField {
            grid: self.grid,
            increments: self.increments.iter().map(|v| alpha * v).collect(),
            seed: self.seed,
        }
    }

    /// Binary dump: `n, c.num, c.den, seed` as little-endian u64, then the
    /// increments row-major as little-endian f64.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, &self.grid, self.seed)?;
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let (grid, seed) = read_header(&mut r)?;
        let count = grid.num_time() * grid.num_space();
        let mut increments = Vec::with_capacity(count);
        let mut buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut buf)?;
            increments.push(f64::from_le_bytes(buf));
        }
        Ok(NoiseField {
            grid,
            increments,
            seed,
        })
    }
}

pub(crate) fn write_header<W: Write>(w: &mut W, grid: &GridConfig, seed: u64) -> Result<()> {
    for v in [grid.n() as u64, grid.c().num, grid.c().den, seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_header<R: Read>(r: &mut R) -> Result<(GridConfig, u64)> {
    let mut vals = [0u64; 4];
    let mut buf = [0u8; 8];
    for v in vals.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = u64::from_le_bytes(buf);
    }
    let n = u32::try_from(vals[0]).map_err(|_| Error::Config("n out of range in header".into()))?;
    let grid = GridConfig::new(n, Ratio::new(vals[1], vals[2])?)?;
    Ok((grid, vals[3]))
}

/// `xi_n(x_j, t_i) = (2n) h^-1 xi(cell)`.
pub fn discrete_noise(field: &NoiseField, i: usize, j: usize) -> Result<f64> {
    let g = field.grid();
    Ok(g.num_space() as f64 / g.h() * field.increment(i, j)?)
}

/// Streams the coarsened rows of one realization, fine row by fine row.
///
/// Stage `d` receives rows of width `w / 2^d` and emits one row of half that
/// width for every four rows received.
#[derive(Debug, Clone)]
pub struct NoiseCoarsener {
    stages: Vec<Stage>,
}

#[derive(Debug, Clone)]
struct Stage {
    phase: u8,
    first: Vec<f64>,
    paired: Vec<f64>,
    held: Vec<f64>,
    out: Vec<f64>,
}

impl NoiseCoarsener {
    /// `fine_cols` is the width of the rows fed in; `depth` the number of
    /// halvings produced.
    pub fn new(fine_cols: usize, depth: usize) -> Self {
        let stages = (1..=depth)
            .map(|d| {
                let w = fine_cols >> d;
                Stage {
                    phase: 0,
                    first: vec![0.0; w],
                    paired: vec![0.0; w],
                    held: vec![0.0; w],
                    out: vec![0.0; w],
                }
            })
            .collect();
        NoiseCoarsener { stages }
    }

    pub fn depth(&self) -> usize {
        self.stages.len()
    }

    /// Feeds one fine row. Returns how many coarse stages completed a row;
    /// stages `1..=returned` then expose fresh rows through [`Self::row`].
    pub fn feed(&mut self, fine_row: &[f64]) -> usize {
        let mut completed = 0;
        for d in 0..self.stages.len() {
            let (before, rest) = self.stages.split_at_mut(d);
            let input: &[f64] = if d == 0 { fine_row } else { &before[d - 1].out };
            let st = &mut rest[0];
            match st.phase {
                0 => pair_sum(input, &mut st.first),
                1 => {
                    pair_sum(input, &mut st.paired);
                    for (a, b) in st.first.iter_mut().zip(&st.paired) {
                        *a += b;
                    }
                }
                2 => pair_sum(input, &mut st.held),
                _ => {
                    pair_sum(input, &mut st.paired);
                    for ((o, a), (b, c)) in st.out.iter_mut().zip(&st.first).zip(st.held.iter().zip(&st.paired)) {
                        *o = a + (b + c);
                    }
                }
            }
            st.phase = (st.phase + 1) % 4;
            if st.phase != 0 {
                break;
            }
            completed = d + 1;
        }
        completed
    }

    /// Latest completed row of stage `d` (1-based).
    pub fn row(&self, d: usize) -> &[f64] {
        &self.stages[d - 1].out
    }
}
