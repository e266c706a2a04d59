//! Reaction terms, their regularity metadata and Gaussian mollification.

mod mollify;
mod table;
mod taming;

pub use mollify::{drift_norms, drift_norms_on, mollify, mollify_variance, DriftNorms, MollifiedDrift, QUADRATURE_RADIUS};
pub use table::{DriftEvaluator, DriftTable, INTERPOLATION_BUDGET};
pub use taming::{check_taming_hypothesis, TamingReport, TamingRow, Trend};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when matching `gamma - 1/p` against regime boundaries.
const REGIME_TOL: f64 = 1e-12;

/// A real-valued function of the state variable.
pub type DriftFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Named functions available from configuration files.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Builtin {
    /// `sin(2 pi x)`
    Sin,
    /// `1_{x > 0} - 1_{x <= 0}`
    Sign,
    /// `1_{(0, 1)}(x)`
    Indicator,
    Constant(f64),
}

impl Builtin {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Builtin::Sin => (2.0 * std::f64::consts::PI * x).sin(),
            Builtin::Sign => {
                if x > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            Builtin::Indicator => {
                if x > 0.0 && x < 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Builtin::Constant(v) => v,
        }
    }

    fn breakpoints(self) -> &'static [f64] {
        match self {
            Builtin::Sign => &[0.0],
            Builtin::Indicator => &[0.0, 1.0],
            _ => &[],
        }
    }
}

/// A drift function: a builtin or a user closure with its jump locations.
#[derive(Clone)]
pub enum Callable {
    Builtin(Builtin),
    Custom {
        f: DriftFn,
        breakpoints: Vec<f64>,
        label: String,
    },
}

impl Callable {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Callable::Builtin(b) => b.eval(x),
            Callable::Custom { f, .. } => f(x),
        }
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Callable::Builtin(b) => b.breakpoints().to_vec(),
            Callable::Custom { breakpoints, .. } => breakpoints.clone(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Callable::Builtin(Builtin::Sin) => "sin".into(),
            Callable::Builtin(Builtin::Sign) => "sign".into(),
            Callable::Builtin(Builtin::Indicator) => "indicator".into(),
            Callable::Builtin(Builtin::Constant(v)) => format!("const:{v}"),
            Callable::Custom { label, .. } => label.clone(),
        }
    }
}

impl fmt::Debug for Callable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Callable({})", self.label())
    }
}

/// A point mass `weight * delta_location`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
pub enum DriftKind {
    Smooth { f: Callable, lipschitz: f64 },
    BoundedMeasurable { f: Callable, sup: f64 },
    /// `x^exponent 1_{(0,1)}(x)` with `exponent` in `(-1, 0)`.
    PowerSingular { exponent: f64 },
    SignedMeasure { atoms: Vec<Atom> },
}

/// Growth regime of the drift, deciding the taming schedule `k_n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `0 > gamma - 1/p > -1`
    SubCritical,
    /// `gamma - 1/p = -1`, `p < inf`
    Limit,
    /// `gamma = 0`, `p = inf`
    Bounded,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::SubCritical => "sub-critical",
            Regime::Limit => "limit",
            Regime::Bounded => "bounded",
        })
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sub-critical" | "subcritical" => Ok(Regime::SubCritical),
            "limit" | "critical" => Ok(Regime::Limit),
            "bounded" => Ok(Regime::Bounded),
            other => Err(Error::Config(format!("unknown regime '{other}'"))),
        }
    }
}

/// The reaction term together with its Besov regularity `(gamma, p)`.
#[derive(Debug, Clone)]
pub struct Drift {
    kind: DriftKind,
    gamma: f64,
    p: f64,
    shift: f64,
}

/// Checks `0 > gamma - 1/p >= -1, gamma > -1`, or the bounded pair `(0, inf)`.
pub fn satisfies_h1(gamma: f64, p: f64) -> bool {
    if !(p >= 1.0) {
        return false;
    }
    if gamma == 0.0 && p == f64::INFINITY {
        return true;
    }
    let s = gamma - 1.0 / p;
    s < 0.0 && s >= -1.0 - REGIME_TOL && gamma > -1.0
}

impl Drift {
    fn build(kind: DriftKind, gamma: f64, p: f64) -> Result<Self> {
        if !satisfies_h1(gamma, p) {
            return Err(Error::Config(format!(
                "regularity (gamma = {gamma}, p = {p}) violates 0 > gamma - 1/p >= -1, gamma > -1"
            )));
        }
        Ok(Drift {
            kind,
            gamma,
            p,
            shift: 0.0,
        })
    }

    pub fn smooth(f: Callable, lipschitz: f64) -> Self {
        Drift::build(DriftKind::Smooth { f, lipschitz }, 0.0, f64::INFINITY).unwrap()
    }

    pub fn bounded(f: Callable, sup: f64) -> Self {
        Drift::build(DriftKind::BoundedMeasurable { f, sup }, 0.0, f64::INFINITY).unwrap()
    }

    pub fn sin() -> Self {
        Drift::smooth(Callable::Builtin(Builtin::Sin), 2.0 * std::f64::consts::PI)
    }

    pub fn constant(v: f64) -> Self {
        Drift::smooth(Callable::Builtin(Builtin::Constant(v)), 0.0)
    }

    pub fn sign() -> Self {
        Drift::bounded(Callable::Builtin(Builtin::Sign), 1.0)
    }

    pub fn indicator() -> Self {
        Drift::bounded(Callable::Builtin(Builtin::Indicator), 1.0)
    }

    pub fn power_singular(exponent: f64) -> Result<Self> {
        if !(exponent > -1.0 && exponent < 0.0) {
            return Err(Error::Config(format!("power exponent {exponent} outside (-1, 0)")));
        }
        Drift::build(DriftKind::PowerSingular { exponent }, exponent, f64::INFINITY)
    }

    pub fn measure(atoms: Vec<Atom>) -> Self {
        Drift::build(DriftKind::SignedMeasure { atoms }, 0.0, 1.0).unwrap()
    }

    pub fn dirac(location: f64, weight: f64) -> Self {
        Drift::measure(vec![Atom { location, weight }])
    }

    /// The zero drift, an empty measure.
    pub fn zero() -> Self {
        Drift::measure(Vec::new())
    }

    /// Overrides the declared regularity.
    pub fn with_regularity(mut self, gamma: f64, p: f64) -> Result<Self> {
        if !satisfies_h1(gamma, p) {
            return Err(Error::Config(format!(
                "regularity (gamma = {gamma}, p = {p}) violates 0 > gamma - 1/p >= -1, gamma > -1"
            )));
        }
        self.gamma = gamma;
        self.p = p;
        Ok(self)
    }

    /// `x -> b(x - a)`.
    pub fn shifted(mut self, a: f64) -> Self {
        self.shift += a;
        self
    }

    pub fn kind(&self) -> &DriftKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn is_zero(&self) -> bool {
        matches!(&self.kind, DriftKind::SignedMeasure { atoms } if atoms.iter().all(|a| a.weight == 0.0))
    }

    /// Evaluates `b` pointwise; measures have no pointwise value.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let y = x - self.shift;
        match &self.kind {
            DriftKind::Smooth { f, .. } | DriftKind::BoundedMeasurable { f, .. } => Some(f.eval(y)),
            DriftKind::PowerSingular { exponent } => Some(if y > 0.0 && y < 1.0 { y.powf(*exponent) } else { 0.0 }),
            DriftKind::SignedMeasure { .. } => None,
        }
    }

    /// Short identifier used in reports.
    pub fn label(&self) -> String {
        let base = match &self.kind {
            DriftKind::Smooth { f, .. } | DriftKind::BoundedMeasurable { f, .. } => f.label(),
            DriftKind::PowerSingular { exponent } => format!("power:{exponent}"),
            DriftKind::SignedMeasure { atoms } if atoms.is_empty() => "zero".into(),
            DriftKind::SignedMeasure { atoms } => {
                let parts: Vec<String> = atoms.iter().map(|a| format!("{}@{}", a.location, a.weight)).collect();
                format!("measure:{}", parts.join(","))
            }
        };
        if self.shift != 0.0 {
            format!("{base}>>{}", self.shift)
        } else {
            base
        }
    }

    /// The regime implied by the declared regularity.
    pub fn natural_regime(&self) -> Regime {
        natural_regime(self.gamma, self.p)
    }
}

pub fn natural_regime(gamma: f64, p: f64) -> Regime {
    if gamma == 0.0 && p == f64::INFINITY {
        Regime::Bounded
    } else if (gamma - 1.0 / p + 1.0).abs() <= REGIME_TOL {
        Regime::Limit
    } else {
        Regime::SubCritical
    }
}

fn check_regime(gamma: f64, p: f64, regime: Regime) -> Result<()> {
    let s = gamma - 1.0 / p;
    let ok = match regime {
        Regime::Bounded => gamma == 0.0 && p == f64::INFINITY,
        Regime::Limit => (s + 1.0).abs() <= REGIME_TOL && p < f64::INFINITY && p >= 1.0,
        Regime::SubCritical => s < 0.0 && s > -1.0 + REGIME_TOL && gamma > -1.0 && p >= 1.0,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Regime(format!(
            "(gamma = {gamma}, p = {p}) is not in the {regime} regime"
        )))
    }
}

/// Floor that tolerates values a few ulps below an integer.
fn robust_floor(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// Taming parameter `k_n` for resolution `n`, clamped to at least 1.
pub fn select_k(n: u32, gamma: f64, p: f64, regime: Regime) -> Result<u32> {
    check_regime(gamma, p, regime)?;
    if n == 0 {
        return Err(Error::Config("n must be positive".into()));
    }
    let nf = n as f64;
    let k = match regime {
        Regime::Bounded => nf,
        Regime::Limit => robust_floor(nf.sqrt()),
        Regime::SubCritical => robust_floor(nf.powf(1.0 / (1.0 - gamma + 1.0 / p))),
    };
    Ok((k as u32).max(1))
}

/// Strong rate predicted for `k = k_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TheoreticalRate {
    Known(f64),
    /// Positive but depending on a constant with no explicit value.
    UnknownPositive,
}

impl TheoreticalRate {
    pub fn value(&self) -> Option<f64> {
        match self {
            TheoreticalRate::Known(v) => Some(*v),
            TheoreticalRate::UnknownPositive => None,
        }
    }
}

impl fmt::Display for TheoreticalRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TheoreticalRate::Known(v) => write!(f, "{v}"),
            TheoreticalRate::UnknownPositive => f.write_str("unknown-positive"),
        }
    }
}

impl Serialize for TheoreticalRate {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            TheoreticalRate::Known(v) => s.serialize_f64(*v),
            TheoreticalRate::UnknownPositive => s.serialize_str("unknown-positive"),
        }
    }
}

impl<'de> Deserialize<'de> for TheoreticalRate {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(TheoreticalRate::Known(v)),
            Raw::Str(s) if s == "unknown-positive" => Ok(TheoreticalRate::UnknownPositive),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("bad rate '{s}'"))),
        }
    }
}

/// `alpha = 1 / (2 (1 - gamma + 1/p))` in the sub-critical regime, `1/2`
/// for bounded drifts, unknown in the limit regime.
pub fn theoretical_rate(gamma: f64, p: f64, regime: Regime) -> Result<TheoreticalRate> {
    check_regime(gamma, p, regime)?;
    Ok(match regime {
        Regime::SubCritical => TheoreticalRate::Known(1.0 / (2.0 * (1.0 - gamma + 1.0 / p))),
        Regime::Bounded => TheoreticalRate::Known(0.5),
        Regime::Limit => TheoreticalRate::UnknownPositive,
    })
}

/// Parses drift specs such as `zero`, `sin`, `sign`, `indicator`,
/// `const:3`, `dirac`, `dirac:0.5`, `measure:0@1,0.5@-2` (location@weight)
/// and `power:-0.5`.
pub fn parse_drift(spec: &str) -> Result<Drift> {
    let spec = spec.trim();
    let (head, arg) = match spec.split_once(':') {
        Some((h, a)) => (h.trim(), Some(a.trim())),
        None => (spec, None),
    };
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bad number '{s}' in drift spec '{spec}'")))
    };
    match (head, arg) {
        ("zero", None) => Ok(Drift::zero()),
        ("sin", None) => Ok(Drift::sin()),
        ("sign", None) => Ok(Drift::sign()),
        ("indicator", None) => Ok(Drift::indicator()),
        ("const", Some(a)) => Ok(Drift::constant(num(a)?)),
        ("dirac", None) => Ok(Drift::dirac(0.0, 1.0)),
        ("dirac", Some(a)) => Ok(Drift::dirac(num(a)?, 1.0)),
        ("power", Some(a)) => Drift::power_singular(num(a)?),
        ("measure", Some(a)) => {
            let atoms = a
                .split(',')
                .map(|part| {
                    let (loc, w) = part
                        .split_once('@')
                        .ok_or_else(|| Error::Config(format!("atom '{part}' must be location@weight")))?;
                    Ok(Atom {
                        location: num(loc)?,
                        weight: num(w)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Drift::measure(atoms))
        }
        _ => Err(Error::Config(format!("unknown drift spec '{spec}'"))),
    }
}

/// Parses an integrability index: a number `>= 1` or `inf`.
pub fn parse_p(s: &str) -> Result<f64> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
        return Ok(f64::INFINITY);
    }
    let p: f64 = s.parse().map_err(|_| Error::Config(format!("bad integrability index '{s}'")))?;
    if p < 1.0 {
        return Err(Error::Config(format!("integrability index {p} below 1")));
    }
    Ok(p)
}

/// Serde adapter writing an integrability index as a number, or `"inf"`.
pub mod p_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => super::parse_p(&s).map_err(serde::de::Error::custom),
        }
    }
}
