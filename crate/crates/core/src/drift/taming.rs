//! Growth diagnostics for a taming schedule `n -> b^{k_n}`.

use serde::{Deserialize, Serialize};

use super::MollifiedDrift;
use crate::stats::loglog_slope;

/// Qualitative behaviour of a product sequence across levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Decaying,
    BorderlineBounded,
    Growing,
    /// Monotone growth by more than a factor 10 over the levels.
    Diverging,
}

impl Trend {
    pub fn is_bounded(self) -> bool {
        matches!(self, Trend::Decaying | Trend::BorderlineBounded)
    }

    fn classify(n: &[f64], v: &[f64]) -> Trend {
        if v.len() < 2 {
            return Trend::BorderlineBounded;
        }
        let increasing = v.windows(2).all(|w| w[1] > w[0]);
        if increasing && v[v.len() - 1] > 10.0 * v[0] {
            return Trend::Diverging;
        }
        match loglog_slope(n, v) {
            Some(s) if s > 0.1 => Trend::Growing,
            Some(s) if s < -0.1 => Trend::Decaying,
            Some(_) => Trend::BorderlineBounded,
            None => Trend::Decaying,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TamingRow {
    pub n: u32,
    pub k: Option<u32>,
    pub sup_norm: f64,
    pub c1_norm: f64,
    /// `||b^k||_inf n^{-1/2 + eps}`
    pub sup_product: f64,
    /// `||b^k||_{C^1} n^{-1}`
    pub c1_product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TamingReport {
    pub epsilon: f64,
    pub rows: Vec<TamingRow>,
    pub max_sup_product: f64,
    pub max_c1_product: f64,
    pub sup_trend: Trend,
    pub c1_trend: Trend,
}

/// Evaluates the two products controlled by the taming hypothesis for each
/// `(n, b^k)` pair, sorted by `n`.
pub fn check_taming_hypothesis(entries: &[(u32, &MollifiedDrift)], epsilon: f64) -> TamingReport {
    let mut rows: Vec<TamingRow> = entries
        .iter()
        .map(|(n, bk)| {
            let nf = *n as f64;
            let sup = bk.sup_norm();
            let c1 = bk.c1_norm();
            TamingRow {
                n: *n,
                k: bk.k(),
                sup_norm: sup,
                c1_norm: c1,
                sup_product: sup * nf.powf(-0.5 + epsilon),
                c1_product: c1 / nf,
            }
        })
        .collect();
    rows.sort_by_key(|r| r.n);
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let sups: Vec<f64> = rows.iter().map(|r| r.sup_product).collect();
    let c1s: Vec<f64> = rows.iter().map(|r| r.c1_product).collect();
    TamingReport {
        epsilon,
        max_sup_product: sups.iter().cloned().fold(0.0, f64::max),
        max_c1_product: c1s.iter().cloned().fold(0.0, f64::max),
        sup_trend: Trend::classify(&ns, &sups),
        c1_trend: Trend::classify(&ns, &c1s),
        rows,
    }
}
