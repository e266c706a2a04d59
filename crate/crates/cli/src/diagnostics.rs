use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use stochheat::besov::{default_t_grid, verify_mollification_scalings};
use stochheat::coupling::{ou_discretization_gap, ComparisonSpec};
use stochheat::drift::{check_taming_hypothesis, mollify, parse_drift, select_k};
use stochheat::heat::variance_gap;
use stochheat::stats::{geomspace, loglog_slope};

use crate::output::{emit, Failure, Header};
use crate::{grid_for, parse_c, parse_list, parse_regime};

#[derive(Subcommand)]
pub enum Diagnostics {
    /// Q, Q^n and their gap on a time grid.
    Variances(VariancesArgs),
    /// Strong gap between coarse and fine drift-free schemes.
    OuGap(OuGapArgs),
    /// Growth of the mollified drift and of the mollification error in k.
    Mollify(MollifyArgs),
    /// The products bounded by a taming schedule.
    Taming(TamingArgs),
}

#[derive(Args)]
pub struct Common {
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VariancesArgs {
    #[arg(long)]
    n: u32,
    #[arg(long, default_value = "1/4")]
    c: String,
    /// Exponent of the reference shape n^{-alpha/2} t^{-1/2 - ...}.
    #[arg(long, default_value_t = 1.9)]
    alpha: f64,
    /// Comma-separated times; defaults to points below h, then a geometric grid up to 1.
    #[arg(long)]
    times: Option<String>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
pub struct OuGapArgs {
    #[arg(long, default_value_t = 128)]
    fine: u32,
    #[arg(long, default_value = "4,8,16,32")]
    levels: String,
    #[arg(long, default_value = "1/4")]
    c: String,
    #[arg(long, default_value_t = 200)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 16)]
    time_count: usize,
    #[arg(long, default_value_t = 1)]
    space_stride: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
pub struct MollifyArgs {
    #[arg(long, default_value = "dirac")]
    drift: String,
    #[arg(long, default_value = "4,16,64,256,1024,4096")]
    k_list: String,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
pub struct TamingArgs {
    #[arg(long, default_value = "dirac")]
    drift: String,
    #[arg(long, default_value = "16,64,256,1024,4096")]
    levels: String,
    /// Defaults to the drift's own regime.
    #[arg(long)]
    regime: Option<String>,
    /// Uses this k at every level instead of k_n.
    #[arg(long)]
    fixed_k: Option<u32>,
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
    #[command(flatten)]
    common: Common,
}

fn variances(a: VariancesArgs) -> Result<(), Failure> {
    let grid = grid_for(a.n, parse_c(&a.c)?, "--n")?;
    let h = grid.h();
    let times: Vec<f64> = match &a.times {
        Some(s) => parse_list("--times", s)?,
        None => {
            let mut t: Vec<f64> = [0.25, 0.5, 0.75].iter().map(|f| f * h).collect();
            t.extend(geomspace(h, 1.0, 25));
            t
        }
    };
    let mut body = String::from("t,q,qn,gap,bound_shape,two_n_t\n");
    for t in times {
        let g = variance_gap(&grid, t, a.alpha).map_err(|e| Failure::flag("--times", &e))?;
        let two_n_t = 2.0 * grid.n() as f64 * t;
        writeln!(body, "{},{},{},{},{},{}", g.t, g.q, g.qn, g.gap, g.bound_shape, two_n_t).unwrap();
    }
    let mut header = Header::new("diagnostics variances");
    header.field("n", grid.n()).field("c", grid.c()).field("h", h).field("alpha", a.alpha);
    emit(a.common.out.as_deref(), &header, &body)
}

fn ou_gap(a: OuGapArgs) -> Result<(), Failure> {
    let c = parse_c(&a.c)?;
    let fine = grid_for(a.fine, c, "--fine")?;
    let levels: Vec<u32> = parse_list("--levels", &a.levels)?;
    if levels.is_empty() {
        return Err(Failure::config("--levels: no levels given".into()));
    }
    let coarse = levels
        .iter()
        .map(|&n| grid_for(n, c, "--levels"))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = ComparisonSpec {
        time_count: a.time_count,
        space_stride: a.space_stride,
    };
    let gaps = ou_discretization_gap(&fine, &coarse, a.seed, a.replicas, &spec).map_err(|e| Failure::flag("--levels", &e))?;
    let mut body = String::from("n,gap\n");
    for (n, g) in levels.iter().zip(&gaps) {
        writeln!(body, "{n},{g}").unwrap();
    }
    let ns: Vec<f64> = levels.iter().map(|&n| n as f64).collect();
    let mut header = Header::new("diagnostics ou-gap");
    header
        .field("fine", a.fine)
        .field("c", c)
        .field("replicas", a.replicas)
        .field("seed", a.seed)
        .field("moment", 2)
        .field("time_count", a.time_count)
        .field("space_stride", a.space_stride);
    if let Some(s) = loglog_slope(&ns, &gaps) {
        header.field("slope", s);
    }
    emit(a.common.out.as_deref(), &header, &body)
}

fn mollify_scalings(a: MollifyArgs) -> Result<(), Failure> {
    let b = parse_drift(&a.drift).map_err(|e| Failure::flag("--drift", &e))?;
    let ks: Vec<u32> = parse_list("--k-list", &a.k_list)?;
    let report = verify_mollification_scalings(&b, &ks, &default_t_grid()).map_err(|e| Failure::flag("--k-list", &e))?;
    let mut header = Header::new("diagnostics mollify");
    header.field("drift", b.label()).field("gamma", b.gamma()).field("p", b.p());
    emit(a.common.out.as_deref(), &header, &report.to_csv())
}

fn taming(a: TamingArgs) -> Result<(), Failure> {
    let b = parse_drift(&a.drift).map_err(|e| Failure::flag("--drift", &e))?;
    let levels: Vec<u32> = parse_list("--levels", &a.levels)?;
    let regime = parse_regime(a.regime.as_deref())?.unwrap_or_else(|| b.natural_regime());
    let mut drifts = Vec::with_capacity(levels.len());
    for &n in &levels {
        let k = match a.fixed_k {
            Some(k) => k,
            None => select_k(n, b.gamma(), b.p(), regime).map_err(|e| Failure::flag("--regime", &e))?,
        };
        drifts.push((n, mollify(&b, k).map_err(|e| Failure::flag("--fixed-k", &e))?));
    }
    let entries: Vec<(u32, &_)> = drifts.iter().map(|(n, bk)| (*n, bk)).collect();
    let report = check_taming_hypothesis(&entries, a.epsilon);
    let mut body = String::from("n,k,sup_norm,c1_norm,sup_product,c1_product\n");
    for r in &report.rows {
        let k = r.k.map(|k| k.to_string()).unwrap_or_default();
        writeln!(body, "{},{k},{},{},{},{}", r.n, r.sup_norm, r.c1_norm, r.sup_product, r.c1_product).unwrap();
    }
    let mut header = Header::new("diagnostics taming");
    header
        .field("drift", b.label())
        .field("regime", regime)
        .field("epsilon", a.epsilon)
        .field("max_sup_product", report.max_sup_product)
        .field("max_c1_product", report.max_c1_product)
        .field("sup_trend", format!("{:?}", report.sup_trend))
        .field("c1_trend", format!("{:?}", report.c1_trend));
    emit(a.common.out.as_deref(), &header, &body)
}

pub fn cmd_diagnostics(d: Diagnostics) -> Result<(), Failure> {
    match d {
        Diagnostics::Variances(a) => variances(a),
        Diagnostics::OuGap(a) => ou_gap(a),
        Diagnostics::Mollify(a) => mollify_scalings(a),
        Diagnostics::Taming(a) => taming(a),
    }
}
