//! Discrete measure spaces, function families and the mixed norms
//! `|| (sum_k |f_k|^r)^(1/r) ||_{L^q(mu)}` that appear on both sides of a
//! Marcinkiewicz-Zygmund inequality.
//!
//! Exponents are tagged values: `Exponent::Infinite` is never represented by a
//! large float, so sup norms are exact maxima.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{MzError, Result};
use crate::numeric::{max_abs, weighted_power_norm};

/// Exponents at or above this use compensated accumulation.
pub const COMPENSATED_FROM: f64 = 8.0;

/// A Lebesgue exponent in `[1, inf]`, or a quasi-norm exponent in `(0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Exponent {
    Finite(f64),
    Infinite,
}

impl Exponent {
    /// A Banach-range exponent: finite `v >= 1` or `+inf`.
    pub fn new(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(Exponent::Infinite)
        } else if v.is_finite() && v >= 1.0 {
            Ok(Exponent::Finite(v))
        } else {
            Err(MzError::InvalidExponent(format!("{v} is not in [1, inf]")))
        }
    }

    /// Any exponent in `(0, inf]`; values below 1 give quasi-norms.
    pub fn quasi(v: f64) -> Result<Self> {
        if v == f64::INFINITY {
            Ok(Exponent::Infinite)
        } else if v.is_finite() && v > 0.0 {
            Ok(Exponent::Finite(v))
        } else {
            Err(MzError::InvalidExponent(format!("{v} is not in (0, inf]")))
        }
    }

    pub const ONE: Exponent = Exponent::Finite(1.0);
    pub const TWO: Exponent = Exponent::Finite(2.0);

    pub fn is_infinite(self) -> bool {
        matches!(self, Exponent::Infinite)
    }

    pub fn is_banach(self) -> bool {
        match self {
            Exponent::Infinite => true,
            Exponent::Finite(v) => v >= 1.0,
        }
    }

    /// The exponent as an `f64`, with `inf` mapped to `f64::INFINITY`.
    pub fn value(self) -> f64 {
        match self {
            Exponent::Finite(v) => v,
            Exponent::Infinite => f64::INFINITY,
        }
    }

    /// `1/p`, exactly zero for `p = inf`.
    pub fn recip(self) -> f64 {
        match self {
            Exponent::Finite(v) => 1.0 / v,
            Exponent::Infinite => 0.0,
        }
    }

    /// Conjugate exponent `p' = p/(p-1)`, with `1 <-> inf` exact.
    pub fn dual(self) -> Result<Self> {
        match self {
            Exponent::Infinite => Ok(Exponent::ONE),
            Exponent::Finite(v) if v == 1.0 => Ok(Exponent::Infinite),
            Exponent::Finite(v) if v > 1.0 => Ok(Exponent::Finite(v / (v - 1.0))),
            Exponent::Finite(v) => Err(MzError::InvalidExponent(format!("{v} has no conjugate"))),
        }
    }

    fn require_banach(self, what: &str) -> Result<()> {
        if self.is_banach() {
            Ok(())
        } else {
            Err(MzError::InvalidExponent(format!("{what} requires an exponent >= 1, got {self}")))
        }
    }
}

impl PartialOrd for Exponent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.value().partial_cmp(&other.value())
    }
}

impl fmt::Display for Exponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exponent::Finite(v) => write!(f, "{v}"),
            Exponent::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for Exponent {
    type Err = MzError;

    /// Accepts decimals, `a/b` fractions and `inf`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        if matches!(t.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") {
            return Ok(Exponent::Infinite);
        }
        let v = if let Some((a, b)) = t.split_once('/') {
            let a: f64 = a.trim().parse().map_err(|_| MzError::InvalidExponent(s.to_string()))?;
            let b: f64 = b.trim().parse().map_err(|_| MzError::InvalidExponent(s.to_string()))?;
            a / b
        } else {
            t.parse().map_err(|_| MzError::InvalidExponent(s.to_string()))?
        };
        Exponent::quasi(v)
    }
}

impl Serialize for Exponent {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Exponent::Finite(v) => serializer.serialize_f64(*v),
            Exponent::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Exponent {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(v) => Exponent::quasi(v).map_err(de::Error::custom),
            Raw::Str(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

/// Finite atomic measure with strictly positive weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure")]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawMeasure {
    weights: Vec<f64>,
}

impl TryFrom<RawMeasure> for DiscreteMeasure {
    type Error = MzError;

    fn try_from(raw: RawMeasure) -> Result<Self> {
        DiscreteMeasure::new(raw.weights)
    }
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(MzError::InvalidMeasure("a measure needs at least one atom".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(MzError::InvalidMeasure(format!("weight {i} is {w}, expected finite and > 0")));
        }
        Ok(Self { weights })
    }

    pub fn counting(n: usize) -> Self {
        assert!(n > 0, "counting measure needs at least one atom");
        Self { weights: vec![1.0; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_counting(&self) -> bool {
        self.weights.iter().all(|&w| w == 1.0)
    }

    /// Product measure; atoms are ordered row-major with `self` as the slow index.
    pub fn product(&self, other: &DiscreteMeasure) -> DiscreteMeasure {
        let weights = self
            .weights
            .iter()
            .flat_map(|a| other.weights.iter().map(move |b| a * b))
            .collect();
        DiscreteMeasure { weights }
    }
}

/// A finite family `{f_k}` of functions on the atoms of one measure. Rows of
/// `values` are the functions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFamily")]
pub struct FunctionFamily {
    values: Vec<Vec<f64>>,
    measure: DiscreteMeasure,
}

#[derive(Deserialize)]
struct RawFamily {
    values: Vec<Vec<f64>>,
    measure: DiscreteMeasure,
}

impl TryFrom<RawFamily> for FunctionFamily {
    type Error = MzError;

    fn try_from(raw: RawFamily) -> Result<Self> {
        FunctionFamily::new(raw.values, raw.measure)
    }
}

impl FunctionFamily {
    pub fn new(values: Vec<Vec<f64>>, measure: DiscreteMeasure) -> Result<Self> {
        if values.is_empty() {
            return Err(MzError::Shape("a function family needs at least one function".into()));
        }
        for (k, f) in values.iter().enumerate() {
            if f.len() != measure.len() {
                return Err(MzError::Shape(format!(
                    "function {k} has {} values but the measure has {} atoms",
                    f.len(),
                    measure.len()
                )));
            }
        }
        Ok(Self { values, measure })
    }

    /// The standard basis `{e_1, ..., e_n}` on the given measure.
    pub fn basis(measure: DiscreteMeasure) -> Self {
        let n = measure.len();
        let values = (0..n)
            .map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
            .collect();
        Self { values, measure }
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_atoms(&self) -> usize {
        self.measure.len()
    }

    /// Pointwise `(sum_k |f_k(j)|^r)^(1/r)`, or the pointwise max when `r = inf`.
    pub fn pointwise_ell(&self, r: Exponent) -> Vec<f64> {
        let mut column = vec![0.0; self.values.len()];
        (0..self.n_atoms())
            .map(|j| {
                for (c, f) in column.iter_mut().zip(&self.values) {
                    *c = f[j];
                }
                ell_norm(&column, r)
            })
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let values = self.values.iter().map(|f| f.iter().map(|v| c * v).collect()).collect();
        Self { values, measure: self.measure.clone() }
    }
}

/// Counting-measure `l^r` norm of a finite sequence.
pub fn ell_norm(values: &[f64], r: Exponent) -> f64 {
    match r {
        Exponent::Infinite => max_abs(values),
        Exponent::Finite(p) => weighted_power_norm(values, None, p, p >= COMPENSATED_FROM),
    }
}

fn check_shape(f: &[f64], mu: &DiscreteMeasure) -> Result<()> {
    if f.len() != mu.len() {
        return Err(MzError::Shape(format!(
            "function has {} values but the measure has {} atoms",
            f.len(),
            mu.len()
        )));
    }
    Ok(())
}

/// `||f||_{L^p(mu)}`; quasi-norm exponents below 1 are accepted.
pub fn lp_norm(f: &[f64], p: Exponent, mu: &DiscreteMeasure) -> Result<f64> {
    check_shape(f, mu)?;
    Ok(match p {
        Exponent::Infinite => max_abs(f),
        Exponent::Finite(v) => weighted_power_norm(f, Some(mu.weights()), v, v >= COMPENSATED_FROM),
    })
}

/// `|| (sum_k |f_k|^r)^(1/r) ||_{L^q(mu)}` over the family's measure.
pub fn mixed_norm(family: &FunctionFamily, r: Exponent, q: Exponent) -> Result<f64> {
    lp_norm(&family.pointwise_ell(r), q, family.measure())
}

/// Distinct levels of `|f|` in decreasing order, each with `mu(|f| >= level)`.
fn super_levels(f: &[f64], mu: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, f64)> = f.iter().map(|v| v.abs()).zip(mu.weights().iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut levels: Vec<(f64, f64)> = Vec::new();
    let mut mass = 0.0;
    for (i, (v, w)) in pairs.iter().enumerate() {
        mass += w;
        let last_of_level = pairs.get(i + 1).map_or(true, |next| next.0 != *v);
        if last_of_level && *v > 0.0 {
            levels.push((*v, mass));
        }
    }
    levels
}

/// The weak `L^{p,inf}` quasinorm `sup_{t>0} t mu(|f| > t)^(1/p)`.
///
/// On a finite atomic space the supremum is approached as `t` rises to each
/// distinct level `v`, where it equals `v * mu(|f| >= v)^(1/p)`.
pub fn weak_lp_quasinorm(f: &[f64], p: Exponent, mu: &DiscreteMeasure) -> Result<f64> {
    check_shape(f, mu)?;
    let p = match p {
        Exponent::Finite(v) => v,
        Exponent::Infinite => {
            return Err(MzError::InvalidExponent("weak L^p needs a finite exponent".into()))
        }
    };
    Ok(super_levels(f, mu)
        .into_iter()
        .map(|(v, mass)| v * mass.powf(1.0 / p))
        .fold(0.0, f64::max))
}

/// `sup_E mu(E)^(1/p - 1/s) (int_E |f|^s)^(1/s)` with `E` ranging over the
/// super-level sets `{|f| >= v}`.
pub fn level_set_supremum(f: &[f64], p: f64, s: f64, mu: &DiscreteMeasure) -> Result<f64> {
    check_shape(f, mu)?;
    if !(s > 0.0 && s < p && p.is_finite()) {
        return Err(MzError::InvalidArgument(format!("need 0 < s < p < inf, got s = {s}, p = {p}")));
    }
    let mut pairs: Vec<(f64, f64)> = f.iter().map(|v| v.abs()).zip(mu.weights().iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let scale = pairs.first().map_or(0.0, |x| x.0);
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut best: f64 = 0.0;
    let mut mass = 0.0;
    let mut integral = 0.0;
    for (i, (v, w)) in pairs.iter().enumerate() {
        mass += w;
        integral += w * (v / scale).powf(s);
        let last_of_level = pairs.get(i + 1).map_or(true, |next| next.0 != *v);
        if last_of_level && *v > 0.0 {
            let value = mass.powf(1.0 / p - 1.0 / s) * scale * integral.powf(1.0 / s);
            best = best.max(value);
        }
    }
    Ok(best)
}

/// Validates that `p` is usable where the triangle inequality is needed.
pub fn require_banach(p: Exponent, what: &str) -> Result<()> {
    p.require_banach(what)
}
