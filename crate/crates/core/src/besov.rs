//! Negative-order Besov norms estimated through the heat semigroup,
//! `||f||_{B^beta_p} ~ sup_t t^{-beta/2} ||G_t f||_{L^p}` for `beta < 0`,
//! and the mollification scalings checked with it.

use serde::{Deserialize, Serialize};

use crate::drift::{mollify, mollify_variance, Drift, DriftKind, MollifiedDrift, QUADRATURE_RADIUS};
use crate::error::{Error, Result};
use crate::quadrature::integrate;
use crate::stats::{geomspace, loglog_slope};

const DENSE_SAMPLES: usize = 4001;
const FOCUS_SAMPLES: usize = 120;
const LP_REL_TOL: f64 = 1e-9;
const LP_MAX_PIECES: usize = 4000;

/// The default `t` grid: 40 geometric points in `[1e-6, 1]`.
pub fn default_t_grid() -> Vec<f64> {
    geomspace(1e-6, 1.0, 40)
}

/// `scale * sum_i coef_i G_{s_i} b_i`, closed under further smoothing.
#[derive(Debug, Clone)]
pub struct DriftCombination {
    pub scale: f64,
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone)]
pub struct Term {
    pub coef: f64,
    pub drift: Drift,
    /// Gaussian variance already applied to `drift`.
    pub variance: f64,
}

impl DriftCombination {
    pub fn drift(b: &Drift) -> Self {
        DriftCombination {
            scale: 1.0,
            terms: vec![Term {
                coef: 1.0,
                drift: b.clone(),
                variance: 0.0,
            }],
        }
    }

    pub fn mollified(bk: &MollifiedDrift) -> Self {
        DriftCombination {
            scale: 1.0,
            terms: vec![Term {
                coef: 1.0,
                drift: bk.base().clone(),
                variance: bk.variance(),
            }],
        }
    }

    /// `b - G_{1/k} b`.
    pub fn mollification_gap(b: &Drift, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(DriftCombination {
            scale: 1.0,
            terms: vec![
                Term {
                    coef: 1.0,
                    drift: b.clone(),
                    variance: 0.0,
                },
                Term {
                    coef: -1.0,
                    drift: b.clone(),
                    variance: 1.0 / k as f64,
                },
            ],
        })
    }

    pub fn scaled(mut self, alpha: f64) -> Self {
        self.scale *= alpha;
        self
    }

    /// `x -> f(x - a)`.
    pub fn shifted(mut self, a: f64) -> Self {
        for t in &mut self.terms {
            t.drift = t.drift.clone().shifted(a);
        }
        self
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0 || self.terms.iter().all(|t| t.coef == 0.0 || t.drift.is_zero())
    }

    /// `G_t` of the unscaled combination as evaluable pieces.
    fn smoothed(&self, t: f64) -> Result<Vec<(f64, MollifiedDrift)>> {
        self.terms
            .iter()
            .filter(|term| term.coef != 0.0 && !term.drift.is_zero())
            .map(|term| Ok((term.coef, mollify_variance(&term.drift, t + term.variance)?)))
            .collect()
    }

    /// Points where the smoothed combination concentrates: atoms, jumps and
    /// the singularity of power drifts.
    fn focus_points(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        for term in &self.terms {
            let s = term.drift.shift();
            match term.drift.kind() {
                DriftKind::SignedMeasure { atoms } => pts.extend(atoms.iter().map(|a| a.location + s)),
                DriftKind::PowerSingular { .. } => pts.extend([s, 1.0 + s]),
                DriftKind::Smooth { f, .. } | DriftKind::BoundedMeasurable { f, .. } => {
                    pts.extend(f.breakpoints().into_iter().map(|b| b + s))
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

fn evaluate(pieces: &[(f64, MollifiedDrift)], x: f64) -> Result<f64> {
    let mut acc = 0.0;
    for (c, m) in pieces {
        acc += c * m.try_evaluate(x)?;
    }
    Ok(acc)
}

fn window(pieces: &[(f64, MollifiedDrift)]) -> (f64, f64) {
    pieces.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, m)| {
        let (a, b) = m.default_window();
        (lo.min(a), hi.max(b))
    })
}

/// Sample points for the sup: a uniform grid of the window plus geometric
/// clusters around each focus point at the scale of the smallest variance.
fn sup_samples(win: (f64, f64), focus: &[f64], sigma: f64) -> Vec<f64> {
    let (lo, hi) = win;
    let mut xs: Vec<f64> = (0..DENSE_SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (DENSE_SAMPLES - 1) as f64)
        .collect();
    let offsets = geomspace(1e-3 * sigma, QUADRATURE_RADIUS * sigma, FOCUS_SAMPLES);
    for &p in focus {
        xs.push(p);
        for &o in &offsets {
            xs.push(p - o);
            xs.push(p + o);
        }
    }
    xs
}

/// `||G_t f||_{L^p}` over the evaluation window (unscaled).
fn smoothed_lp(f: &DriftCombination, t: f64, p: f64) -> Result<f64> {
    let pieces = f.smoothed(t)?;
    if pieces.is_empty() {
        return Ok(0.0);
    }
    let win = window(&pieces);
    let min_var = pieces.iter().map(|(_, m)| m.variance()).fold(f64::INFINITY, f64::min);
    let sigma = min_var.sqrt();
    let focus = f.focus_points();
    if p.is_infinite() {
        let mut sup: f64 = 0.0;
        for x in sup_samples(win, &focus, sigma) {
            sup = sup.max(evaluate(&pieces, x)?.abs());
        }
        return Ok(sup);
    }
    let mut marks = vec![win.0, win.1];
    for &c in &focus {
        for m in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
            for (_, piece) in &pieces {
                let x = c + m * piece.variance().sqrt();
                if x > win.0 && x < win.1 {
                    marks.push(x);
                }
            }
        }
    }
    marks.sort_by(f64::total_cmp);
    marks.dedup();
    // a coarse pass sets the scale for the absolute tolerance
    let mut scale: f64 = 0.0;
    for w in marks.windows(2) {
        scale = scale.max(evaluate(&pieces, 0.5 * (w[0] + w[1]))?.abs());
    }
    for &c in &focus {
        if c > win.0 && c < win.1 {
            scale = scale.max(evaluate(&pieces, c)?.abs());
        }
    }
    if scale == 0.0 {
        return Ok(0.0);
    }
    let tol = LP_REL_TOL * scale.powf(p) * (win.1 - win.0);
    let failure = std::cell::RefCell::new(None);
    let integral = integrate(
        |x| match evaluate(&pieces, x) {
            Ok(v) => v.abs().powf(p),
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        &marks,
        tol,
        LP_MAX_PIECES,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(integral.value.powf(1.0 / p))
}

/// The estimator together with the profile it maximizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermicProfile {
    pub t_grid: Vec<f64>,
    /// `||G_t f||_{L^p}` per grid time.
    pub lp_values: Vec<f64>,
    pub beta: f64,
    #[serde(with = "crate::drift::p_serde")]
    pub p: f64,
    /// `max_t t^{-beta/2} ||G_t f||_{L^p}`.
    pub estimate: f64,
}

impl ThermicProfile {
    /// CSV rows `t,lp,weighted`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,lp,weighted\n");
        for (t, v) in self.t_grid.iter().zip(&self.lp_values) {
            out.push_str(&format!("{t},{v},{}\n", t.powf(-self.beta / 2.0) * v));
        }
        out
    }
}

/// `max over t_grid of t^{-beta/2} ||G_t f||_{L^p}`.
pub fn thermic_norm(f: &DriftCombination, beta: f64, p: f64, t_grid: &[f64]) -> Result<ThermicProfile> {
    if !(beta < 0.0) {
        return Err(Error::Domain(format!("thermic estimator needs beta < 0, got {beta}")));
    }
    if !(p >= 1.0) {
        return Err(Error::Domain(format!("p must be at least 1, got {p}")));
    }
    if t_grid.is_empty() || t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("t grid must be strictly increasing in (0, 1]".into()));
    }
    let lp_values = if f.is_zero() {
        vec![0.0; t_grid.len()]
    } else {
        let scale = f.scale.abs();
        t_grid
            .iter()
            .map(|&t| smoothed_lp(f, t, p).map(|v| scale * v))
            .collect::<Result<Vec<_>>>()?
    };
    let estimate = t_grid
        .iter()
        .zip(&lp_values)
        .map(|(t, v)| t.powf(-beta / 2.0) * v)
        .fold(0.0, f64::max);
    Ok(ThermicProfile {
        t_grid: t_grid.to_vec(),
        lp_values,
        beta,
        p,
        estimate,
    })
}

/// One row of [`verify_mollification_scalings`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub k: u32,
    /// Thermic estimate of `||b - b^k||` at order `gamma - 1`.
    pub gap: f64,
    pub sup_norm: f64,
    pub lip_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub drift: String,
    pub gamma: f64,
    #[serde(with = "crate::drift::p_serde")]
    pub p: f64,
    pub rows: Vec<ScalingRow>,
    /// Fitted log-log slopes against `k`: gap, sup, Lipschitz.
    pub fitted: [f64; 3],
    /// `(-1/2, -(gamma - 1/p)/2, 1/2 - (gamma - 1/p)/2)`.
    pub theoretical: [f64; 3],
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,gap,sup_norm,lip_norm\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{},{}\n", r.k, r.gap, r.sup_norm, r.lip_norm));
        }
        out.push_str(&format!(
            "# fitted,{},{},{}\n# theoretical,{},{},{}\n",
            self.fitted[0], self.fitted[1], self.fitted[2], self.theoretical[0], self.theoretical[1], self.theoretical[2]
        ));
        out
    }
}

/// Fits the growth of `||b - b^k||_{B^{gamma-1}_p}`, `||b^k||_inf` and
/// `Lip(b^k)` in `k`.
pub fn verify_mollification_scalings(b: &Drift, k_list: &[u32], t_grid: &[f64]) -> Result<ScalingReport> {
    if k_list.len() < 4 {
        return Err(Error::Config("need at least four values of k".into()));
    }
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let gap = thermic_norm(&DriftCombination::mollification_gap(b, k)?, b.gamma() - 1.0, b.p(), t_grid)?.estimate;
        let bk = mollify(b, k)?;
        rows.push(ScalingRow {
            k,
            gap,
            sup_norm: bk.sup_norm(),
            lip_norm: bk.lip_norm(),
        });
    }
    let ks: Vec<f64> = rows.iter().map(|r| r.k as f64).collect();
    let slope = |v: Vec<f64>| loglog_slope(&ks, &v).unwrap_or(f64::NAN);
    let fitted = [
        slope(rows.iter().map(|r| r.gap).collect()),
        slope(rows.iter().map(|r| r.sup_norm).collect()),
        slope(rows.iter().map(|r| r.lip_norm).collect()),
    ];
    let d = b.gamma() - 1.0 / b.p();
    Ok(ScalingReport {
        drift: b.label(),
        gamma: b.gamma(),
        p: b.p(),
        rows,
        fitted,
        theoretical: [-0.5, -d / 2.0, 0.5 - d / 2.0],
    })
}
