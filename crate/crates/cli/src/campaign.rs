use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::Args;
use serde::Deserialize;
use stochheat::coupling::ComparisonSpec;
use stochheat::experiment::{preset, run_batch, run_experiment, ExperimentConfig, ExperimentRun, PRESETS};
use stochheat::Error;

use crate::output::{self, Failure, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_PARTIAL};

#[derive(Args)]
pub struct ConvergenceArgs {
    /// Campaign file (TOML) with one `[[experiment]]` table per campaign.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Start from a preset: smooth, bounded, power or dirac.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    drift: Option<String>,
    /// Comma-separated coarse levels n.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    n_ref: Option<u32>,
    #[arg(long)]
    c: Option<String>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    moment: Option<f64>,
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    fixed_k: Option<u32>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    psi0: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Number of coarse comparison times.
    #[arg(long)]
    time_count: Option<usize>,
    /// Stride through the coarse space points.
    #[arg(long)]
    space_stride: Option<usize>,
    /// Directory for reports; overrides the file and the environment.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// 0 silences the summary lines, 2 adds per-level rows.
    #[arg(long)]
    verbosity: Option<u8>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CampaignFile {
    output_dir: Option<PathBuf>,
    parallelism: Option<usize>,
    verbosity: Option<u8>,
    #[serde(default)]
    experiment: Vec<toml::Table>,
}

/// An experiment table, optionally layered over a preset.
fn resolve_entry(mut table: toml::Table, index: usize) -> Result<ExperimentConfig, Failure> {
    let at = |msg: String| Failure::config(format!("experiment {}: {msg}", index + 1));
    let mut base = match table.remove("preset") {
        Some(toml::Value::String(name)) => {
            let cfg = preset(&name).ok_or_else(|| at(format!("unknown preset '{name}' (known: {})", PRESETS.join(", "))))?;
            toml::Table::try_from(cfg).map_err(|e| at(e.to_string()))?
        }
        Some(other) => return Err(at(format!("preset must be a string, got {other}"))),
        None => toml::Table::new(),
    };
    base.extend(table);
    base.try_into::<ExperimentConfig>().map_err(|e| at(e.message().to_string()))
}

fn load_file(path: &PathBuf) -> Result<(CampaignFile, Vec<ExperimentConfig>), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::config(format!("--config: {}: {e}", path.display())))?;
    let mut file: CampaignFile =
        toml::from_str(&text).map_err(|e| Failure::config(format!("--config: {}: {}", path.display(), e.message())))?;
    let tables = std::mem::take(&mut file.experiment);
    let configs = tables
        .into_iter()
        .enumerate()
        .map(|(i, t)| resolve_entry(t, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((file, configs))
}

fn inline_config(a: &ConvergenceArgs) -> Result<ExperimentConfig, Failure> {
    let mut c = match &a.preset {
        Some(name) => preset(name).ok_or_else(|| {
            Failure::config(format!("--preset: unknown preset '{name}' (known: {})", PRESETS.join(", ")))
        })?,
        None => {
            let missing = |flag: &str| Failure::config(format!("{flag}: required without --preset or --config"));
            let mut c = ExperimentConfig::new(
                a.drift.as_deref().ok_or_else(|| missing("--drift"))?,
                Vec::new(),
                a.n_ref.ok_or_else(|| missing("--n-ref"))?,
                stochheat::Ratio::new(1, 4).unwrap(),
                a.replicas.ok_or_else(|| missing("--replicas"))?,
                0,
            );
            if a.levels.is_none() {
                return Err(missing("--levels"));
            }
            c.name = a.drift.clone().unwrap_or_default().replace(':', "_");
            c
        }
    };
    if let Some(v) = &a.name {
        c.name = v.clone();
    }
    if let Some(v) = &a.drift {
        c.drift = v.clone();
    }
    if let Some(v) = &a.levels {
        c.levels = crate::parse_list("--levels", v)?;
    }
    if let Some(v) = a.n_ref {
        c.n_ref = v;
    }
    if let Some(v) = &a.c {
        c.c = crate::parse_c(v)?;
    }
    if let Some(v) = a.replicas {
        c.replicas = v;
    }
    if let Some(v) = a.seed {
        c.seed = v;
    }
    if let Some(v) = a.moment {
        c.moment = v;
    }
    if let Some(v) = &a.regime {
        c.regime = crate::parse_regime(Some(v))?;
    }
    if a.fixed_k.is_some() {
        c.fixed_k = a.fixed_k;
    }
    if a.gamma.is_some() {
        c.gamma = a.gamma;
    }
    if a.p.is_some() {
        c.p = a.p.clone();
    }
    if let Some(v) = &a.psi0 {
        c.psi0 = v.parse().map_err(|e| Failure::flag("--psi0", &e))?;
    }
    if let Some(v) = a.epsilon {
        c.epsilon = v;
    }
    let spec = ComparisonSpec {
        time_count: a.time_count.unwrap_or(c.comparison.time_count),
        space_stride: a.space_stride.unwrap_or(c.comparison.space_stride),
    };
    c.comparison = spec;
    Ok(c)
}

fn write_reports(dir: &std::path::Path, run: &ExperimentRun) -> Result<(), Failure> {
    let r = &run.report;
    output::write_file(&dir.join(format!("{}.json", r.name)), &format!("{}\n", r.to_json()))?;
    output::write_file(&dir.join(format!("{}.csv", r.name)), &r.to_csv())
}

/// Runs compatible campaigns together; when a shared run fails, reruns its
/// members alone so one bad campaign does not sink the rest.
fn run_all(configs: &[ExperimentConfig]) -> Vec<Result<ExperimentRun, Error>> {
    match run_batch(configs) {
        Ok(runs) => runs.into_iter().map(Ok).collect(),
        Err(_) if configs.len() > 1 => configs.iter().map(run_experiment).collect(),
        Err(e) => vec![Err(e)],
    }
}

pub fn cmd_convergence(a: ConvergenceArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let (file, configs) = match &a.config {
        Some(path) => load_file(path)?,
        None => (
            CampaignFile {
                output_dir: None,
                parallelism: None,
                verbosity: None,
                experiment: Vec::new(),
            },
            vec![inline_config(&a)?],
        ),
    };
    if configs.is_empty() {
        return Err(Failure::config("--config: the campaign lists no experiments".into()));
    }
    let mut names = BTreeSet::new();
    for c in &configs {
        if !names.insert(c.name.clone()) {
            return Err(Failure::config(format!("experiment name '{}' is used twice", c.name)));
        }
        if c.name.is_empty() || c.name.contains(['/', '\\']) {
            return Err(Failure::config(format!("experiment name '{}' is not a valid file stem", c.name)));
        }
        c.validate()
            .map_err(|e| Failure::config(format!("experiment '{}': {e}", c.name)))?;
    }
    let verbosity = a.verbosity.or(file.verbosity).unwrap_or(1);
    let dir = output::out_dir(a.out_dir.clone(), file.output_dir);
    let results = output::with_pool(jobs.or(file.parallelism), || Ok(run_all(&configs)))?;

    let mut failures = Vec::new();
    for (c, res) in configs.iter().zip(results) {
        match res {
            Ok(run) => {
                write_reports(&dir, &run)?;
                if verbosity >= 1 {
                    println!("{}", run.report.summary());
                }
                if verbosity >= 2 {
                    for l in &run.report.levels {
                        println!("  n = {:4}  k = {:5}  error = {:.6e} +- {:.2e}", l.n, l.k, l.error, l.std_error);
                    }
                }
            }
            Err(e) => {
                eprintln!("{}: failed: {e}", c.name);
                failures.push(e);
            }
        }
    }
    if failures.is_empty() {
        return Ok(());
    }
    let code = if failures.len() < configs.len() {
        EXIT_PARTIAL
    } else if failures.iter().all(|e| matches!(e, Error::Divergence { .. })) {
        EXIT_DIVERGENCE
    } else if failures.iter().all(|e| Failure::from(e.clone()).code == EXIT_CONFIG) {
        EXIT_CONFIG
    } else {
        EXIT_PARTIAL
    };
    Err(Failure {
        code,
        message: format!("{} of {} experiments failed", failures.len(), configs.len()),
    })
}
