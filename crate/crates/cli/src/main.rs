//! Command-line front end: single trajectories, convergence campaigns and
//! diagnostic tables.

mod campaign;
mod diagnostics;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochheat::drift::{parse_drift, select_k, Regime};
use stochheat::grid::{GridConfig, Ratio};
use stochheat::scheme::{simulate_seeded, Psi0};
use stochheat::Error;

use crate::output::{Failure, Header};

#[derive(Parser)]
#[command(name = "stochheat", version, about = "Tamed Euler scheme for the stochastic heat equation with singular drift")]
struct Cli {
    /// Worker threads; defaults to all cores. Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trajectory and write the recorded snapshots as CSV.
    Simulate(SimulateArgs),
    /// Measure strong convergence rates for one or more campaigns.
    Convergence(campaign::ConvergenceArgs),
    /// Emit diagnostic tables.
    #[command(subcommand)]
    Diagnostics(diagnostics::Diagnostics),
}

#[derive(Args)]
struct SimulateArgs {
    /// Half the number of space points.
    #[arg(long)]
    n: u32,
    /// CFL ratio h (2n)^2 as p/q or a decimal.
    #[arg(long)]
    c: String,
    /// Drift spec, e.g. zero, sin, sign, indicator, const:2, dirac, power:-0.5.
    #[arg(long)]
    drift: String,
    /// Mollification level.
    #[arg(long, conflicts_with = "auto_k")]
    k: Option<u32>,
    /// Pick k from n and the regime (the default when --k is absent).
    #[arg(long)]
    auto_k: bool,
    /// Regime used by --auto-k; defaults to the drift's own.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated times in [0, 1], projected down onto the time grid.
    #[arg(long, default_value = "1")]
    record: String,
    /// Initial condition: zero, sin or weierstrass.
    #[arg(long, default_value = "sin")]
    psi0: String,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_c(s: &str) -> Result<Ratio, Failure> {
    s.parse::<Ratio>().map_err(|e| Failure::flag("--c", &e))
}

/// Grid errors blame `--c` for CFL violations and `--n` otherwise.
fn grid_for(n: u32, c: Ratio, n_flag: &str) -> Result<GridConfig, Failure> {
    GridConfig::new(n, c).map_err(|e| match e {
        Error::Cfl { .. } => Failure::flag("--c", &e),
        _ => Failure::flag(n_flag, &e),
    })
}

fn parse_regime(s: Option<&str>) -> Result<Option<Regime>, Failure> {
    s.map(|s| s.parse::<Regime>().map_err(|e| Failure::flag("--regime", &e))).transpose()
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>, Failure>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|e| Failure::config(format!("{flag}: cannot parse '{t}': {e}"))))
        .collect()
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let c = parse_c(&a.c)?;
    let grid = grid_for(a.n, c, "--n")?;
    let b = parse_drift(&a.drift).map_err(|e| Failure::flag("--drift", &e))?;
    let psi0: Psi0 = a.psi0.parse().map_err(|e| Failure::flag("--psi0", &e))?;
    let k = match a.k {
        Some(0) => return Err(Failure::config("--k: must be at least 1".into())),
        Some(k) => k,
        None => {
            let regime = parse_regime(a.regime.as_deref())?.unwrap_or_else(|| b.natural_regime());
            select_k(a.n, b.gamma(), b.p(), regime).map_err(|e| Failure::flag("--regime", &e))?
        }
    };
    let times: Vec<f64> = parse_list("--record", &a.record)?;
    if times.is_empty() {
        return Err(Failure::config("--record: no times given".into()));
    }
    let mut record = Vec::with_capacity(times.len());
    for t in times {
        record.push(grid.time_index(t).map_err(|e| Failure::flag("--record", &e))?);
    }
    let traj = simulate_seeded(&grid, &b, k, a.seed, psi0, &record).map_err(Failure::from)?;

    let mut header = Header::new("simulate");
    header
        .field("n", grid.n())
        .field("c", grid.c())
        .field("h", grid.h())
        .field("drift", b.label())
        .field("k", k)
        .field("psi0", psi0)
        .field("seed", a.seed)
        .field("record", format!("{record:?}"));
    let mut body = Vec::new();
    body.extend_from_slice(b"replica,time,x,value\n");
    traj.write_csv(&mut body, 0).map_err(Failure::from)?;
    output::emit(a.out.as_deref(), &header, &String::from_utf8(body).expect("csv is utf-8"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => output::with_pool(cli.jobs, || cmd_simulate(a)),
        Command::Convergence(a) => campaign::cmd_convergence(a, cli.jobs),
        Command::Diagnostics(d) => output::with_pool(cli.jobs, || diagnostics::cmd_diagnostics(d)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}
