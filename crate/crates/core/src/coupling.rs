//! Several resolutions of the scheme driven by one noise realization.
//!
//! The finest (reference) noise is generated row by row and coarsened on the
//! fly, so memory stays proportional to the grid width rather than to the
//! whole space-time field. Every level is stepped as soon as its next noise
//! row is complete, and values are recorded at a comparison set of grid
//! points shared by all levels.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::DriftEvaluator;
use crate::error::{Error, Result};
use crate::grid::{nesting_factor, GridConfig};
use crate::noise::{fill_row, NoiseCoarsener};
use crate::rng::replica_seed;
use crate::scheme::{Psi0, Stepper};
use crate::stats::pairwise_sum;

/// Density of the comparison set, relative to the coarsest level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonSpec {
    /// Number of equispaced coarse times (the final time is always added).
    pub time_count: usize,
    /// Use every `space_stride`-th coarse space point.
    pub space_stride: usize,
}

impl Default for ComparisonSpec {
    fn default() -> Self {
        ComparisonSpec {
            time_count: 16,
            space_stride: 1,
        }
    }
}

/// Shared grid points, as indices on the coarsest grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSet {
    pub coarse_n: u32,
    pub times: Vec<usize>,
    pub space: Vec<usize>,
}

impl ComparisonSet {
    pub fn new(coarse: &GridConfig, spec: &ComparisonSpec) -> Result<Self> {
        if spec.time_count == 0 || spec.space_stride == 0 {
            return Err(Error::Config("comparison set needs positive time count and space stride".into()));
        }
        let last = coarse.num_time();
        let mut times: Vec<usize> = (1..=spec.time_count).map(|q| q * last / spec.time_count).collect();
        times.push(last);
        times.retain(|&i| i > 0);
        times.sort_unstable();
        times.dedup();
        if times.is_empty() {
            return Err(Error::Config(format!("grid n = {} has no time step", coarse.n())));
        }
        let space = (0..coarse.num_space()).step_by(spec.space_stride).collect();
        Ok(ComparisonSet {
            coarse_n: coarse.n(),
            times,
            space,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len() * self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(t, x)` of every point, time-major.
    pub fn points(&self, coarse: &GridConfig) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &i in &self.times {
            for &j in &self.space {
                out.push((coarse.time_point(i), coarse.space_point(j)));
            }
        }
        out
    }
}

/// One resolution taking part in a coupled run.
#[derive(Debug, Clone)]
pub struct Level {
    pub grid: GridConfig,
    pub drift: DriftEvaluator,
}

/// Recorded values of one stepper at the comparison set.
struct Recorder {
    /// Target time indices on this stepper's own grid.
    targets: Vec<usize>,
    /// Space index multiplier relative to the coarsest grid.
    ratio: usize,
    next: usize,
    values: Vec<f64>,
}

impl Recorder {
    fn new(set: &ComparisonSet, ratio: usize) -> Self {
        Recorder {
            targets: set.times.iter().map(|&i| i * ratio * ratio).collect(),
            ratio,
            next: 0,
            values: Vec::with_capacity(set.len()),
        }
    }

    fn last(&self) -> usize {
        *self.targets.last().unwrap()
    }

    fn done(&self) -> bool {
        self.next == self.targets.len()
    }

    fn observe(&mut self, set: &ComparisonSet, stepper: &Stepper<'_>) {
        if !self.done() && stepper.step_index() == self.targets[self.next] {
            let u = stepper.values();
            self.values.extend(set.space.iter().map(|&j| u[j * self.ratio]));
            self.next += 1;
        }
    }
}

/// A reference resolution plus coarser (or equal) levels on nested grids,
/// all started from the same initial data.
#[derive(Debug, Clone)]
pub struct Group {
    pub reference: Level,
    pub levels: Vec<Level>,
    pub psi0: Psi0,
}

/// One or more groups sharing the reference grid and the comparison set, so
/// a single noise stream drives all of them. Results for a group are the
/// same whether it runs alone or alongside others.
#[derive(Debug, Clone)]
pub struct CoupledEngine {
    groups: Vec<Group>,
    depths: Vec<Vec<usize>>,
    set: ComparisonSet,
}

impl CoupledEngine {
    pub fn new(reference: Level, levels: Vec<Level>, psi0: Psi0, spec: &ComparisonSpec) -> Result<Self> {
        Self::batch(
            vec![Group {
                reference,
                levels,
                psi0,
            }],
            spec,
        )
    }

    pub fn batch(groups: Vec<Group>, spec: &ComparisonSpec) -> Result<Self> {
        let Some(first) = groups.first() else {
            return Err(Error::Config("no groups to run".into()));
        };
        let rg = first.reference.grid;
        let mut coarsest: Option<GridConfig> = None;
        let mut depths = Vec::with_capacity(groups.len());
        for g in &groups {
            if g.reference.grid != rg {
                return Err(Error::Config("batched groups must share the reference grid".into()));
            }
            if g.levels.is_empty() {
                return Err(Error::Config("no levels to compare".into()));
            }
            let mut ds = Vec::with_capacity(g.levels.len());
            for l in &g.levels {
                let d = nesting_factor(&l.grid, &rg)?.ok_or_else(|| {
                    Error::Nesting(format!(
                        "level n = {} is not nested in reference n = {}",
                        l.grid.n(),
                        rg.n()
                    ))
                })?;
                ds.push(d as usize);
            }
            depths.push(ds);
            let c = g.levels.iter().min_by_key(|l| l.grid.n()).unwrap().grid;
            match coarsest {
                None => coarsest = Some(c),
                Some(prev) if prev != c => {
                    return Err(Error::Config("batched groups must share their coarsest level".into()));
                }
                _ => {}
            }
        }
        let set = ComparisonSet::new(&coarsest.unwrap(), spec)?;
        Ok(CoupledEngine { groups, depths, set })
    }

    pub fn comparison(&self) -> &ComparisonSet {
        &self.set
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    fn ratio(&self, grid: &GridConfig) -> usize {
        (grid.n() / self.set.coarse_n) as usize
    }

    /// Runs one realization; returns, per group and level, `u_ref - u_level`
    /// at the comparison points (time-major).
    pub fn run_replica(&self, seed: u64) -> Result<Vec<Vec<Vec<f64>>>> {
        let rg = self.groups[0].reference.grid;
        let mut refs: Vec<(Stepper<'_>, Recorder)> = self
            .groups
            .iter()
            .map(|g| {
                (
                    Stepper::new(&rg, &g.reference.drift, g.psi0.sample(&rg)),
                    Recorder::new(&self.set, self.ratio(&rg)),
                )
            })
            .collect();
        let mut levels: Vec<(Stepper<'_>, Recorder, usize)> = self
            .groups
            .iter()
            .zip(&self.depths)
            .flat_map(|(g, ds)| {
                g.levels.iter().zip(ds).map(|(l, &d)| {
                    (
                        Stepper::new(&l.grid, &l.drift, g.psi0.sample(&l.grid)),
                        Recorder::new(&self.set, self.ratio(&l.grid)),
                        d,
                    )
                })
            })
            .collect();
        let depth = self.depths.iter().flatten().copied().max().unwrap_or(0);
        let mut coarsener = NoiseCoarsener::new(rg.num_space(), depth);
        let mut row = vec![0.0; rg.num_space()];
        let rows = refs[0].1.last();
        for i in 0..rows {
            fill_row(&rg, seed, i, &mut row);
            for (s, rec) in refs.iter_mut() {
                s.advance(&row)?;
                rec.observe(&self.set, s);
            }
            let completed = if depth > 0 { coarsener.feed(&row) } else { 0 };
            for (s, rec, d) in levels.iter_mut() {
                if rec.done() {
                    continue;
                }
                if *d == 0 {
                    s.advance(&row)?;
                } else if *d <= completed {
                    s.advance(coarsener.row(*d))?;
                } else {
                    continue;
                }
                rec.observe(&self.set, s);
            }
        }
        let mut levels = levels.into_iter();
        Ok(self
            .groups
            .iter()
            .zip(refs)
            .map(|(g, (_, ref_rec))| {
                levels
                    .by_ref()
                    .take(g.levels.len())
                    .map(|(_, rec, _)| ref_rec.values.iter().zip(&rec.values).map(|(a, b)| a - b).collect())
                    .collect()
            })
            .collect())
    }

    /// Runs `replicas` realizations in parallel; result is indexed
    /// `[group][level][replica][point]`, independent of scheduling.
    pub fn run(&self, master_seed: u64, replicas: usize) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
        let per_replica: Vec<Vec<Vec<Vec<f64>>>> = (0..replicas)
            .into_par_iter()
            .map(|r| self.run_replica(replica_seed(master_seed, r as u64)))
            .collect::<Result<_>>()?;
        let mut out: Vec<Vec<Vec<Vec<f64>>>> = self
            .groups
            .iter()
            .map(|g| vec![Vec::with_capacity(replicas); g.levels.len()])
            .collect();
        for rep in per_replica {
            for (g, levels) in rep.into_iter().enumerate() {
                for (l, d) in levels.into_iter().enumerate() {
                    out[g][l].push(d);
                }
            }
        }
        Ok(out)
    }
}

/// `(mean_r |d_r(p)|^m)^{1/m}` for every point `p`; `diffs` is indexed
/// `[replica][point]`.
pub fn pointwise_moments(diffs: &[Vec<f64>], m: f64) -> Vec<f64> {
    let Some(first) = diffs.first() else {
        return Vec::new();
    };
    let count = diffs.len() as f64;
    let mut col = vec![0.0; diffs.len()];
    (0..first.len())
        .map(|p| {
            for (c, d) in col.iter_mut().zip(diffs) {
                *c = d[p].abs().powf(m);
            }
            (pairwise_sum(&col) / count).powf(1.0 / m)
        })
        .collect()
}

/// Sup over points of [`pointwise_moments`].
pub fn sup_moment_error(diffs: &[Vec<f64>], m: f64) -> f64 {
    pointwise_moments(diffs, m).into_iter().fold(0.0, f64::max)
}

/// Standard error of [`sup_moment_error`] from contiguous replica batches.
pub fn batch_standard_error(diffs: &[Vec<f64>], m: f64, batches: usize) -> f64 {
    let b = batches.min(diffs.len());
    if b < 2 {
        return f64::NAN;
    }
    let r = diffs.len();
    let est: Vec<f64> = (0..b)
        .map(|i| sup_moment_error(&diffs[i * r / b..(i + 1) * r / b], m))
        .collect();
    let mean = est.iter().sum::<f64>() / b as f64;
    let var = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (b - 1) as f64;
    (var / b as f64).sqrt()
}

/// Empirical `sup_x,t ||O_fine - O_coarse||_{L^2}` over the comparison set,
/// for every coarse grid, with the drift-free scheme from zero initial data.
/// The fine level stands in for the continuous process.
pub fn ou_discretization_gap(
    fine: &GridConfig,
    coarse: &[GridConfig],
    master_seed: u64,
    replicas: usize,
    spec: &ComparisonSpec,
) -> Result<Vec<f64>> {
    let engine = CoupledEngine::new(
        Level {
            grid: *fine,
            drift: DriftEvaluator::Zero,
        },
        coarse
            .iter()
            .map(|g| Level {
                grid: *g,
                drift: DriftEvaluator::Zero,
            })
            .collect(),
        Psi0::Zero,
        spec,
    )?;
    let diffs = engine.run(master_seed, replicas)?.swap_remove(0);
    Ok(diffs.iter().map(|d| sup_moment_error(d, 2.0)).collect())
}
