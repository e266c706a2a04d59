//! Monte Carlo strong-error campaigns.
//!
//! Each replica draws one noise realization at the reference resolution,
//! runs the reference scheme and every coarser level on the coarsened noise,
//! and records `u_ref - u_n` at a comparison set of shared gridpoints. The
//! per-level error is the sup over that set of the empirical `L^m` norm.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::besov::{default_t_grid, thermic_norm, DriftCombination};
use crate::coupling::{batch_standard_error, sup_moment_error, ComparisonSpec, CoupledEngine, Group, Level};
use crate::drift::{
    mollify, parse_drift, parse_p, select_k, theoretical_rate, Drift, MollifiedDrift, Regime, TheoreticalRate,
    INTERPOLATION_BUDGET,
};
use crate::error::{Error, Result};
use crate::grid::{nesting_factor, GridConfig, Ratio};
use crate::scheme::{evaluator_for, Psi0};
use crate::stats::{fit_line, loglog_slope};

pub const SCHEMA_VERSION: u32 = 1;
/// Number of replica batches used for standard errors.
pub const BATCHES: usize = 10;
/// A coarsest-level residual this many times the others' mean is dropped
/// from the fit.
const OUTLIER_FACTOR: f64 = 3.0;
/// Log residuals below this are rounding noise, never outliers.
const RESIDUAL_FLOOR: f64 = 1e-6;

fn default_name() -> String {
    "experiment".into()
}

fn default_moment() -> f64 {
    2.0
}

fn default_epsilon() -> f64 {
    0.05
}

/// One strong-error campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Drift spec, e.g. `sin`, `sign`, `power:-0.5`, `dirac`.
    pub drift: String,
    /// Overrides the declared regularity `gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Overrides the declared integrability index (`"inf"` allowed).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<String>,
    /// Defaults to the regime implied by the drift's regularity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    /// Uses this `k` at every level (and the reference) instead of `k_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_k: Option<u32>,
    #[serde(default = "default_moment")]
    pub moment: f64,
    pub levels: Vec<u32>,
    pub n_ref: u32,
    pub c: Ratio,
    pub replicas: usize,
    pub seed: u64,
    #[serde(default = "default_psi0")]
    pub psi0: Psi0,
    #[serde(default)]
    pub comparison: ComparisonSpec,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_psi0() -> Psi0 {
    Psi0::Sin
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub drift: Drift,
    pub regime: Regime,
    pub reference: GridConfig,
    pub levels: Vec<GridConfig>,
    pub k_ref: u32,
    pub ks: Vec<u32>,
}

impl ExperimentConfig {
    /// A campaign with the default options for the remaining fields.
    pub fn new(drift: &str, levels: Vec<u32>, n_ref: u32, c: Ratio, replicas: usize, seed: u64) -> Self {
        ExperimentConfig {
            name: default_name(),
            drift: drift.into(),
            gamma: None,
            p: None,
            regime: None,
            fixed_k: None,
            moment: default_moment(),
            levels,
            n_ref,
            c,
            replicas,
            seed,
            psi0: default_psi0(),
            comparison: ComparisonSpec::default(),
            epsilon: default_epsilon(),
        }
    }

    pub fn drift(&self) -> Result<Drift> {
        let b = parse_drift(&self.drift)?;
        match (self.gamma, &self.p) {
            (None, None) => Ok(b),
            (g, p) => {
                let gamma = g.unwrap_or(b.gamma());
                let p = match p {
                    Some(s) => parse_p(s)?,
                    None => b.p(),
                };
                b.with_regularity(gamma, p)
            }
        }
    }

    /// Checks every invariant and derives grids and taming parameters.
    pub fn resolve(&self) -> Result<Resolved> {
        if self.levels.is_empty() {
            return Err(Error::Config("levels: the level list is empty".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("levels: must be strictly increasing".into()));
        }
        if self.replicas < 2 {
            return Err(Error::Config(format!("replicas: need at least 2, got {}", self.replicas)));
        }
        if !(self.moment >= 2.0 && self.moment.is_finite()) {
            return Err(Error::Config(format!("moment: need m >= 2, got {}", self.moment)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return Err(Error::Config(format!("epsilon: must lie in (0, 1/2), got {}", self.epsilon)));
        }
        if self.fixed_k == Some(0) {
            return Err(Error::Config("fixed_k: must be at least 1".into()));
        }
        let max = *self.levels.last().unwrap();
        if self.n_ref < max {
            return Err(Error::Config(format!(
                "n_ref: {} is below the finest level {max}",
                self.n_ref
            )));
        }
        let reference = GridConfig::new(self.n_ref, self.c)?;
        let mut levels = Vec::with_capacity(self.levels.len());
        for &n in &self.levels {
            let g = GridConfig::new(n, self.c)?;
            if nesting_factor(&g, &reference)?.is_none() {
                return Err(Error::Nesting(format!(
                    "levels: n = {n} does not divide n_ref = {} by a power of two",
                    self.n_ref
                )));
            }
            levels.push(g);
        }
        let drift = self.drift()?;
        let regime = self.regime.unwrap_or_else(|| drift.natural_regime());
        let k_of = |n: u32| match self.fixed_k {
            Some(k) => Ok(k),
            None => select_k(n, drift.gamma(), drift.p(), regime),
        };
        // also validates the regime against the regularity
        theoretical_rate(drift.gamma(), drift.p(), regime)?;
        let k_ref = k_of(self.n_ref)?;
        let ks = self.levels.iter().map(|&n| k_of(n)).collect::<Result<Vec<_>>>()?;
        Ok(Resolved {
            drift,
            regime,
            reference,
            levels,
            k_ref,
            ks,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.resolve().map(|_| ())
    }

    /// Campaigns that can share one noise stream.
    fn batch_key(&self) -> (u32, Ratio, u32, usize, u64, ComparisonSpec) {
        (
            self.n_ref,
            self.c,
            self.levels.first().copied().unwrap_or(0),
            self.replicas,
            self.seed,
            self.comparison,
        )
    }
}

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 4] = ["smooth", "bounded", "power", "dirac"];

/// Desk-scale campaigns for the four drift classes: levels 8 to 64 against
/// `n_ref = 256` with 100 replicas at `c = 1/4`.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let drift = match name {
        "smooth" => "sin",
        "bounded" => "sign",
        "power" => "power:-0.5",
        "dirac" => "dirac",
        _ => return None,
    };
    let mut c = ExperimentConfig::new(drift, vec![8, 16, 32, 64], 256, Ratio::new(1, 4).unwrap(), 100, 20260101);
    c.name = name.into();
    Some(c)
}

/// Result of [`fit_rate`]. The rate is minus the log-log slope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    /// Half-width of the two-sided 90% interval.
    pub halfwidth: f64,
    pub slope_se: f64,
    pub intercept: f64,
    pub levels_used: Vec<u32>,
    pub dropped_coarsest: bool,
}

/// Least-squares rate from `(n, error)` pairs.
pub fn fit_rate(points: &[(u32, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 levels, got {}", points.len())));
    }
    if let Some(&(n, e)) = points.iter().find(|(_, e)| !(*e > 0.0 && e.is_finite())) {
        return Err(Error::Fit(format!("error at n = {n} is {e}; rates need positive errors")));
    }
    let mut pts = points.to_vec();
    pts.sort_by_key(|&(n, _)| n);
    let fit = |pts: &[(u32, f64)]| {
        let x: Vec<f64> = pts.iter().map(|&(n, _)| (n as f64).ln()).collect();
        let y: Vec<f64> = pts.iter().map(|&(_, e)| e.ln()).collect();
        let f = fit_line(&x, &y).ok_or_else(|| Error::Fit("degenerate level set".into()))?;
        let residuals: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - f.intercept - f.slope * a).collect();
        Ok::<_, Error>((f, residuals))
    };
    let (mut line, residuals) = fit(&pts)?;
    let mut dropped = false;
    if pts.len() > 3 {
        let others = residuals[1..].iter().map(|r| r.abs()).sum::<f64>() / (residuals.len() - 1) as f64;
        if residuals[0].abs() > OUTLIER_FACTOR * others && residuals[0].abs() > RESIDUAL_FLOOR {
            pts.remove(0);
            line = fit(&pts)?.0;
            dropped = true;
        }
    }
    let dof = (pts.len() - 2) as f64;
    let t = StudentsT::new(0.0, 1.0, dof)
        .map_err(|e| Error::Fit(e.to_string()))?
        .inverse_cdf(0.95);
    Ok(RateFit {
        rate: -line.slope,
        halfwidth: t * line.slope_se,
        slope_se: line.slope_se,
        intercept: line.intercept,
        levels_used: pts.iter().map(|&(n, _)| n).collect(),
        dropped_coarsest: dropped,
    })
}

/// Per-level results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub n: u32,
    pub k: u32,
    pub error: f64,
    pub std_error: f64,
    pub sup_norm: f64,
    pub lip_norm: f64,
    /// `||b^k||_inf n^{-1/2 + eps}`
    pub sup_product: f64,
    /// `||b^k||_{C^1} n^{-1}`
    pub c1_product: f64,
    pub interpolation_error: f64,
}

/// The three terms bounding the strong error at one level (constants unknown).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRow {
    pub n: u32,
    pub k: u32,
    pub measured: Option<f64>,
    /// Thermic estimate of `||b - b^k||_{B^{gamma-1}_p}`.
    pub stability: f64,
    /// `(1 + ||b^k||_inf) n^{-1/2 + eps}`
    pub noise_term: f64,
    /// `(1 + ||b^k||_inf) ||b^k||_Lip n^{-1 + eps}`
    pub lipschitz_term: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub rows: Vec<DecompositionRow>,
    /// Log-log slopes in `n`; `None` when a column is not positive throughout.
    pub measured_slope: Option<f64>,
    pub stability_slope: Option<f64>,
    pub noise_slope: Option<f64>,
    pub lipschitz_slope: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Consistent => "consistent",
            Verdict::Inconsistent => "inconsistent",
            Verdict::Inconclusive => "inconclusive",
        })
    }
}

/// Slack added to the fit's interval before calling a known rate inconsistent.
pub const VERDICT_SLACK: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub schema: u32,
    pub name: String,
    pub config: ExperimentConfig,
    pub drift_label: String,
    pub gamma: f64,
    #[serde(with = "crate::drift::p_serde")]
    pub p: f64,
    pub regime: Regime,
    pub k_ref: u32,
    pub comparison_times: Vec<f64>,
    pub comparison_space_points: usize,
    pub levels: Vec<LevelRow>,
    pub fit: Option<RateFit>,
    /// Why no fit is present, if so.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_note: Option<String>,
    pub theoretical_rate: TheoreticalRate,
    pub verdict: Verdict,
    pub decomposition: Decomposition,
    pub interpolation_budget: f64,
    pub engine: String,
}

impl ErrorReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("bad report: {e}")))
    }

    /// Per-level CSV preceded by `# ` metadata lines carrying the resolved
    /// configuration.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# schema: {}\n", self.schema));
        out.push_str(&format!(
            "# config: {}\n",
            serde_json::to_string(&self.config).expect("config serializes")
        ));
        out.push_str(&format!("# seed: {}\n", self.config.seed));
        out.push_str(&format!("# theoretical_rate: {}\n", self.theoretical_rate));
        match &self.fit {
            Some(f) => out.push_str(&format!("# fitted_rate: {} +- {}\n", f.rate, f.halfwidth)),
            None => out.push_str(&format!("# fitted_rate: none ({})\n", self.fit_note.as_deref().unwrap_or(""))),
        }
        out.push_str("n,k,error,std_error,sup_norm,lip_norm,sup_product,c1_product,stability,noise_term,lipschitz_term\n");
        for (l, d) in self.levels.iter().zip(&self.decomposition.rows) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                l.n,
                l.k,
                l.error,
                l.std_error,
                l.sup_norm,
                l.lip_norm,
                l.sup_product,
                l.c1_product,
                d.stability,
                d.noise_term,
                d.lipschitz_term
            ));
        }
        out
    }

    /// One line: measured rate, theoretical rate, verdict.
    pub fn summary(&self) -> String {
        let measured = match &self.fit {
            Some(f) => format!("{:.3} +- {:.3}", f.rate, f.halfwidth),
            None => "n/a".into(),
        };
        format!(
            "{}: measured rate {measured}, theoretical rate {}, verdict {}",
            self.name, self.theoretical_rate, self.verdict
        )
    }
}

fn verdict(fit: Option<&RateFit>, theory: TheoreticalRate) -> Verdict {
    let Some(f) = fit else {
        return Verdict::Inconclusive;
    };
    match theory {
        TheoreticalRate::Known(a) => {
            if (f.rate - a).abs() <= f.halfwidth + VERDICT_SLACK {
                Verdict::Consistent
            } else {
                Verdict::Inconsistent
            }
        }
        TheoreticalRate::UnknownPositive => {
            if f.rate - f.halfwidth > 0.0 {
                Verdict::Consistent
            } else if f.rate > 0.0 {
                Verdict::Inconclusive
            } else {
                Verdict::Inconsistent
            }
        }
    }
}

/// The three bound components for `(n, k_n)` pairs.
pub fn decomposition_components(
    b: &Drift,
    levels: &[(u32, u32)],
    epsilon: f64,
    measured: Option<&[f64]>,
) -> Result<Decomposition> {
    let t_grid = default_t_grid();
    let mut gaps: BTreeMap<u32, f64> = BTreeMap::new();
    let mut rows = Vec::with_capacity(levels.len());
    for (i, &(n, k)) in levels.iter().enumerate() {
        let stability = match gaps.get(&k) {
            Some(&g) => g,
            None => {
                let g = if b.is_zero() {
                    0.0
                } else {
                    thermic_norm(&DriftCombination::mollification_gap(b, k)?, b.gamma() - 1.0, b.p(), &t_grid)?.estimate
                };
                gaps.insert(k, g);
                g
            }
        };
        let bk = mollify(b, k)?;
        let nf = n as f64;
        let sup = bk.sup_norm();
        rows.push(DecompositionRow {
            n,
            k,
            measured: measured.map(|m| m[i]),
            stability,
            noise_term: (1.0 + sup) * nf.powf(-0.5 + epsilon),
            lipschitz_term: (1.0 + sup) * bk.lip_norm() * nf.powf(-1.0 + epsilon),
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let slope = |v: Vec<f64>| if ns.len() >= 2 { loglog_slope(&ns, &v) } else { None };
    Ok(Decomposition {
        measured_slope: measured.and_then(|m| slope(m.to_vec())),
        stability_slope: slope(rows.iter().map(|r| r.stability).collect()),
        noise_slope: slope(rows.iter().map(|r| r.noise_term).collect()),
        lipschitz_slope: slope(rows.iter().map(|r| r.lipschitz_term).collect()),
        rows,
    })
}

/// Bound components for a finished campaign, next to its measured errors.
pub fn error_decomposition(config: &ExperimentConfig, report: &ErrorReport) -> Result<Decomposition> {
    let r = config.resolve()?;
    let pairs: Vec<(u32, u32)> = report.levels.iter().map(|l| (l.n, l.k)).collect();
    let measured: Vec<f64> = report.levels.iter().map(|l| l.error).collect();
    decomposition_components(&r.drift, &pairs, config.epsilon, Some(&measured))
}

/// A finished campaign with the raw per-replica differences kept, indexed
/// `[level][replica][point]`.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ErrorReport,
    pub diffs: Vec<Vec<Vec<f64>>>,
}

struct Prepared {
    resolved: Resolved,
    group: Group,
    mollified: BTreeMap<u32, MollifiedDrift>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let resolved = config.resolve()?;
    let b = &resolved.drift;
    let mut mollified = BTreeMap::new();
    for &k in resolved.ks.iter().chain([&resolved.k_ref]) {
        if let std::collections::btree_map::Entry::Vacant(e) = mollified.entry(k) {
            e.insert(mollify(b, k)?);
        }
    }
    // every level samples psi0 on a subgrid of the reference, so the
    // reference samples bound the initial range for all of them
    let psi_ref = config.psi0.sample(&resolved.reference);
    let mut evaluators = BTreeMap::new();
    for (&k, bk) in &mollified {
        evaluators.insert(k, evaluator_for(bk, &psi_ref)?);
    }
    let group = Group {
        reference: Level {
            grid: resolved.reference,
            drift: evaluators[&resolved.k_ref].clone(),
        },
        levels: resolved
            .levels
            .iter()
            .zip(&resolved.ks)
            .map(|(g, k)| Level {
                grid: *g,
                drift: evaluators[k].clone(),
            })
            .collect(),
        psi0: config.psi0,
    };
    Ok(Prepared {
        resolved,
        group,
        mollified,
    })
}

fn finish(config: &ExperimentConfig, prep: Prepared, diffs: Vec<Vec<Vec<f64>>>, engine: &CoupledEngine) -> Result<ExperimentRun> {
    let r = &prep.resolved;
    let m = config.moment;
    let mut rows = Vec::with_capacity(r.levels.len());
    for (((g, &k), d), level) in r.levels.iter().zip(&r.ks).zip(&diffs).zip(&prep.group.levels) {
        let bk = &prep.mollified[&k];
        let nf = g.n() as f64;
        rows.push(LevelRow {
            n: g.n(),
            k,
            error: sup_moment_error(d, m),
            std_error: batch_standard_error(d, m, BATCHES),
            sup_norm: bk.sup_norm(),
            lip_norm: bk.lip_norm(),
            sup_product: bk.sup_norm() * nf.powf(-0.5 + config.epsilon),
            c1_product: bk.c1_norm() / nf,
            interpolation_error: level.drift.interpolation_error(),
        });
    }
    let points: Vec<(u32, f64)> = rows.iter().map(|l| (l.n, l.error)).collect();
    let (fit, fit_note) = match fit_rate(&points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let theory = theoretical_rate(r.drift.gamma(), r.drift.p(), r.regime)?;
    let pairs: Vec<(u32, u32)> = rows.iter().map(|l| (l.n, l.k)).collect();
    let measured: Vec<f64> = rows.iter().map(|l| l.error).collect();
    let decomposition = decomposition_components(&r.drift, &pairs, config.epsilon, Some(&measured))?;
    let set = engine.comparison();
    let coarse = r.levels[0];
    let report = ErrorReport {
        schema: SCHEMA_VERSION,
        name: config.name.clone(),
        config: config.clone(),
        drift_label: r.drift.label(),
        gamma: r.drift.gamma(),
        p: r.drift.p(),
        regime: r.regime,
        k_ref: r.k_ref,
        comparison_times: set.times.iter().map(|&i| coarse.time_point(i)).collect(),
        comparison_space_points: set.space.len(),
        verdict: verdict(fit.as_ref(), theory),
        levels: rows,
        fit,
        fit_note,
        theoretical_rate: theory,
        decomposition,
        interpolation_budget: INTERPOLATION_BUDGET,
        engine: format!("stochheat {}", env!("CARGO_PKG_VERSION")),
    };
    Ok(ExperimentRun { report, diffs })
}

/// Runs a campaign and keeps the raw differences.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    run_batch(std::slice::from_ref(config)).map(|mut v| v.swap_remove(0))
}

pub fn strong_error(config: &ExperimentConfig) -> Result<ErrorReport> {
    run_experiment(config).map(|r| r.report)
}

/// Runs several campaigns, letting those with the same reference grid,
/// coarsest level, seed, replica count and comparison set share one noise
/// stream. Each result equals what [`run_experiment`] gives on its own.
pub fn run_batch(configs: &[ExperimentConfig]) -> Result<Vec<ExperimentRun>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, c) in configs.iter().enumerate() {
        match clusters.iter_mut().find(|cl| configs[cl[0]].batch_key() == c.batch_key()) {
            Some(cl) => cl.push(i),
            None => clusters.push(vec![i]),
        }
    }
    let mut out: Vec<Option<ExperimentRun>> = (0..configs.len()).map(|_| None).collect();
    for cl in clusters {
        let preps = cl.iter().map(|&i| prepare(&configs[i])).collect::<Result<Vec<_>>>()?;
        let first = &configs[cl[0]];
        let engine = CoupledEngine::batch(preps.iter().map(|p| p.group.clone()).collect(), &first.comparison)?;
        let diffs = engine.run(first.seed, first.replicas)?;
        for ((&i, prep), d) in cl.iter().zip(preps).zip(diffs) {
            out[i] = Some(finish(&configs[i], prep, d, &engine)?);
        }
    }
    Ok(out.into_iter().map(|r| r.expect("every config runs")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{ou_discretization_gap, pointwise_moments};

    fn quarter() -> Ratio {
        Ratio::new(1, 4).unwrap()
    }

    fn small(drift: &str) -> ExperimentConfig {
        ExperimentConfig::new(drift, vec![2, 4, 8], 16, quarter(), 6, 11)
    }

    #[test]
    fn presets_resolve() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            assert!(c.validate().is_ok(), "{name}");
        }
        assert!(preset("nope").is_none());
        let r = preset("dirac").unwrap().resolve().unwrap();
        assert_eq!(r.ks, vec![2, 4, 5, 8]);
        assert_eq!(preset("bounded").unwrap().resolve().unwrap().ks, vec![8, 16, 32, 64]);
    }

    #[test]
    fn validation() {
        assert!(small("sin").validate().is_ok());
        let mut c = small("sin");
        c.levels.clear();
        assert!(c.validate().unwrap_err().to_string().contains("levels"));
        let mut c = small("sin");
        c.levels = vec![4, 2];
        assert!(c.validate().is_err());
        let mut c = small("sin");
        c.levels = vec![3, 4];
        assert!(matches!(c.validate(), Err(Error::Nesting(_))));
        let mut c = small("sin");
        c.replicas = 1;
        assert!(c.validate().is_err());
        let mut c = small("sin");
        c.moment = 1.5;
        assert!(c.validate().is_err());
        let mut c = small("sin");
        c.c = Ratio::new(1, 2).unwrap();
        assert!(matches!(c.validate(), Err(Error::Cfl { .. })));
        let mut c = small("dirac");
        c.regime = Some(Regime::Bounded);
        assert!(matches!(c.validate(), Err(Error::Regime(_))));
        let mut c = small("sin");
        c.n_ref = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn ks_follow_regime() {
        let c = ExperimentConfig::new("dirac", vec![16, 64], 256, quarter(), 2, 0);
        let r = c.resolve().unwrap();
        assert_eq!((r.ks.clone(), r.k_ref), (vec![4, 8], 16));
        let c = ExperimentConfig::new("power:-0.5", vec![64], 256, quarter(), 2, 0);
        assert_eq!(c.resolve().unwrap().ks, vec![16]);
        let mut c = ExperimentConfig::new("sign", vec![8], 16, quarter(), 2, 0);
        c.fixed_k = Some(5);
        let r = c.resolve().unwrap();
        assert_eq!((r.ks.clone(), r.k_ref), (vec![5], 5));
    }

    #[test]
    fn config_roundtrips_through_toml_and_json() {
        let mut c = small("power:-0.5");
        c.p = Some("inf".into());
        c.psi0 = Psi0::Weierstrass;
        let text = toml::to_string(&c).unwrap();
        assert!(text.contains("c = \"1/4\""));
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ExperimentConfig>(&json).unwrap(), c);
    }

    #[test]
    fn reference_level_has_zero_error() {
        let mut c = small("sign");
        c.levels = vec![4, 16];
        let run = run_experiment(&c).unwrap();
        assert_eq!(run.report.levels[1].error, 0.0);
        assert!(run.report.levels[0].error > 0.0);
        assert!(run.report.fit.is_none());
        assert!(run.report.fit_note.is_some());
    }

    #[test]
    fn zero_drift_matches_ou_gap() {
        let mut c = ExperimentConfig::new("zero", vec![4, 8], 32, quarter(), 5, 3);
        c.psi0 = Psi0::Zero;
        let report = strong_error(&c).unwrap();
        let fine = GridConfig::new(32, quarter()).unwrap();
        let coarse: Vec<GridConfig> = [4, 8].iter().map(|&n| GridConfig::new(n, quarter()).unwrap()).collect();
        let gaps = ou_discretization_gap(&fine, &coarse, 3, 5, &c.comparison).unwrap();
        for (l, g) in report.levels.iter().zip(gaps) {
            assert!((l.error - g).abs() <= 1e-12 * g);
        }
    }

    #[test]
    fn deterministic_report() {
        let c = small("dirac");
        let a = strong_error(&c).unwrap();
        let b = strong_error(&c).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(ErrorReport::from_json(&a.to_json()).unwrap(), a);
        assert!(a.to_json().contains("\"unknown-positive\""));
        assert!(a.to_csv().starts_with("# schema: 1\n# config: {"));
    }

    #[test]
    fn batch_equals_individual_runs() {
        let configs = vec![small("sin"), small("dirac"), {
            let mut c = small("sign");
            c.seed = 12;
            c
        }];
        let batch = run_batch(&configs).unwrap();
        for (c, r) in configs.iter().zip(&batch) {
            let alone = run_experiment(c).unwrap();
            assert_eq!(alone.report, r.report);
            assert_eq!(alone.diffs, r.diffs);
        }
    }

    #[test]
    fn replica_exchangeability_and_moments() {
        let run = run_experiment(&small("sin")).unwrap();
        for (l, d) in run.diffs.iter().enumerate() {
            let mut rev = d.clone();
            rev.reverse();
            rev.swap(0, 3);
            let a = sup_moment_error(d, 2.0);
            let b = sup_moment_error(&rev, 2.0);
            assert!((a - b).abs() <= 1e-12 * a, "level {l}");
            let m2 = pointwise_moments(d, 2.0);
            let m4 = pointwise_moments(d, 4.0);
            assert!(m2.iter().zip(&m4).all(|(x, y)| x <= y));
        }
    }

    #[test]
    fn larger_comparison_set_never_lowers_error() {
        let mut sparse = small("sign");
        sparse.comparison = ComparisonSpec {
            time_count: 4,
            space_stride: 2,
        };
        let mut dense = sparse.clone();
        dense.comparison = ComparisonSpec {
            time_count: 8,
            space_stride: 1,
        };
        let a = strong_error(&sparse).unwrap();
        let b = strong_error(&dense).unwrap();
        for (x, y) in a.levels.iter().zip(&b.levels) {
            assert!(y.error >= x.error);
        }
    }

    #[test]
    fn divergence_reports_level() {
        let c = ExperimentConfig::new("const:1e200", vec![2, 4, 8], 16, quarter(), 2, 1);
        match strong_error(&c) {
            Err(Error::Divergence { n, step, .. }) => assert_eq!((n, step), (16, 1)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rate_fits() {
        let exact: Vec<(u32, f64)> = [8u32, 16, 32, 64].iter().map(|&n| (n, 3.0 * (n as f64).powf(-0.5))).collect();
        let f = fit_rate(&exact).unwrap();
        assert!((f.rate - 0.5).abs() < 1e-12);
        assert!(f.halfwidth < 1e-10);
        let wiggle = [0.7, -1.0, 0.4, 0.9, -0.3];
        let noisy: Vec<(u32, f64)> = [8u32, 16, 32, 64, 128]
            .iter()
            .zip(wiggle)
            .map(|(&n, w)| (n, 2.0 * (n as f64).powf(-1.0 / 3.0) * (1.0 + 0.05 * w)))
            .collect();
        let f = fit_rate(&noisy).unwrap();
        assert!(f.rate > 0.28 && f.rate < 0.38, "{}", f.rate);
        assert!(fit_rate(&exact[..2]).is_err());
        let mut bad = exact.clone();
        bad[1].1 = 0.0;
        assert!(fit_rate(&bad).is_err());
    }

    #[test]
    fn outlying_coarsest_level_is_dropped() {
        let mut pts: Vec<(u32, f64)> = (0..8).map(|i| 4u32 << i).map(|n| (n, (n as f64).powf(-0.5))).collect();
        pts[1].1 *= 1.01;
        pts[0].1 *= 3.0;
        let f = fit_rate(&pts).unwrap();
        assert!(f.dropped_coarsest);
        assert_eq!(f.levels_used, (1..8).map(|i| 4u32 << i).collect::<Vec<_>>());
        assert!((f.rate - 0.5).abs() < 0.01);
        // smooth curvature is not an outlier
        let curved: Vec<(u32, f64)> = [8u32, 16, 32, 64]
            .iter()
            .map(|&n| (n, (n as f64).powf(-1.0 / 3.0) - 256f64.powf(-1.0 / 3.0)))
            .collect();
        assert!(!fit_rate(&curved).unwrap().dropped_coarsest);
    }

    #[test]
    fn dirac_decomposition_slopes() {
        let b = Drift::dirac(0.0, 1.0);
        // n = 4^j keeps k = sqrt(n) exact
        let pairs: Vec<(u32, u32)> = [16u32, 64, 256, 1024].iter().map(|&n| (n, (n as f64).sqrt() as u32)).collect();
        let eps = 0.05;
        let d = decomposition_components(&b, &pairs, eps, None).unwrap();
        assert!((d.stability_slope.unwrap() + 0.25).abs() < 0.03, "{:?}", d.stability_slope);
        // Gaussian of variance 1/k: sup sqrt(k / 2 pi), Lipschitz k e^{-1/2}/sqrt(2 pi)
        let r2pi = (2.0 * std::f64::consts::PI).sqrt();
        for row in &d.rows {
            let (n, k) = (row.n as f64, row.k as f64);
            let sup = k.sqrt() / r2pi;
            let lip = k * (-0.5f64).exp() / r2pi;
            let noise = (1.0 + sup) * n.powf(-0.5 + eps);
            let lipschitz = (1.0 + sup) * lip * n.powf(-1.0 + eps);
            assert!((row.noise_term - noise).abs() <= 1e-9 * noise);
            assert!((row.lipschitz_term - lipschitz).abs() <= 1e-6 * lipschitz, "{} {}", row.lipschitz_term, lipschitz);
        }
    }

    #[test]
    fn smooth_fixed_k_decomposition() {
        let b = Drift::sin();
        let pairs: Vec<(u32, u32)> = [8u32, 16, 32, 64].iter().map(|&n| (n, 256)).collect();
        let eps = 0.05;
        let d = decomposition_components(&b, &pairs, eps, None).unwrap();
        assert!(d.stability_slope.unwrap().abs() < 1e-9);
        assert!((d.noise_slope.unwrap() - (-0.5 + eps)).abs() < 1e-9);
    }

    #[test]
    fn bounded_decomposition_slope() {
        let b = Drift::sign();
        let pairs: Vec<(u32, u32)> = [8u32, 16, 32, 64].iter().map(|&n| (n, n)).collect();
        let eps = 0.05;
        let d = decomposition_components(&b, &pairs, eps, None).unwrap();
        assert!((d.noise_slope.unwrap() - (-0.5 + eps)).abs() < 1e-9);
        assert!((d.stability_slope.unwrap() + 0.5).abs() < 0.05, "{:?}", d.stability_slope);
    }
}
