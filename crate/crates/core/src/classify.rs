//! Finiteness and closed-form values of the constants `k_{q,p}(r)` and
//! `k_{q_1..q_m,p}(r)`.
//!
//! Values are kept symbolic as products of stable-moment ratios and evaluated
//! lazily through a process-wide memo of `c_{r,s}`.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{MzError, Result};
use crate::stablelaw::{stable_moment, MomentMethod, StableLaw};
use crate::tensorspace::{require_banach, Exponent};

/// Quadrature tolerance for memoised moments.
pub const MOMENT_TOL: f64 = 1e-11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KStatus {
    Finite,
    Infinite,
    Undetermined,
}

/// `c_{r,num} / c_{r,den}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRatio {
    pub r: f64,
    pub num: f64,
    pub den: f64,
}

/// Product of moment ratios; the empty product is 1.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClosedForm(pub Vec<MomentRatio>);

impl ClosedForm {
    pub fn one() -> Self {
        Self(vec![])
    }

    pub fn ratio(r: f64, num: f64, den: f64) -> Self {
        if num == den {
            return Self::one();
        }
        Self(vec![MomentRatio { r, num, den }])
    }

    pub fn is_one(&self) -> bool {
        self.0.is_empty()
    }

    pub fn times(mut self, other: &ClosedForm) -> Self {
        self.0.extend_from_slice(&other.0);
        self
    }

    pub fn evaluate(&self) -> Result<f64> {
        let mut v = 1.0;
        for f in &self.0 {
            v *= moment(f.r, f.num)? / moment(f.r, f.den)?;
        }
        Ok(v)
    }
}

impl fmt::Display for ClosedForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self.0.iter().map(|m| format!("c({},{})/c({},{})", m.r, m.num, m.r, m.den)).collect();
        write!(f, "{}", parts.join(" * "))
    }
}

fn memo() -> &'static Mutex<HashMap<(i64, i64), f64>> {
    static CACHE: OnceLock<Mutex<HashMap<(i64, i64), f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn key(x: f64) -> i64 {
    (x * 1e12).round() as i64
}

/// Memoised `c_{r,s}` (quadrature).
pub fn moment(r: f64, s: f64) -> Result<f64> {
    let k = (key(r), key(s));
    if let Some(v) = memo().lock().expect("moment memo poisoned").get(&k) {
        return Ok(*v);
    }
    let v = stable_moment(StableLaw::new(r)?, s, MomentMethod::Quadrature, MOMENT_TOL, 0)?.value;
    memo().lock().expect("moment memo poisoned").insert(k, v);
    Ok(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KClassification {
    pub status: KStatus,
    /// Present only for `Finite` with a known value.
    pub value: Option<ClosedForm>,
    pub provenance: String,
}

impl KClassification {
    fn finite(value: ClosedForm, provenance: &str) -> Self {
        Self { status: KStatus::Finite, value: Some(value), provenance: provenance.into() }
    }

    fn one(provenance: &str) -> Self {
        Self::finite(ClosedForm::one(), provenance)
    }

    fn unknown(provenance: &str) -> Self {
        Self { status: KStatus::Finite, value: None, provenance: provenance.into() }
    }

    fn infinite(provenance: &str) -> Self {
        Self { status: KStatus::Infinite, value: None, provenance: provenance.into() }
    }

    fn undetermined(provenance: &str) -> Self {
        Self { status: KStatus::Undetermined, value: None, provenance: provenance.into() }
    }

    pub fn is_known(&self) -> bool {
        self.value.is_some()
    }

    /// Numeric value when finite and known.
    pub fn numeric(&self) -> Result<Option<f64>> {
        self.value.as_ref().map(ClosedForm::evaluate).transpose()
    }
}

fn conj(x: f64) -> f64 {
    if x == 1.0 {
        f64::INFINITY
    } else if x == f64::INFINITY {
        1.0
    } else {
        x / (x - 1.0)
    }
}

fn check(xs: &[Exponent]) -> Result<()> {
    for x in xs {
        require_banach(*x, "classification")?;
    }
    Ok(())
}

const GROTHENDIECK: &str =
    "linear r = 2 with p < 2 < q: finite, value open; at (q, p) = (inf, 1) it is the real Grothendieck constant";

/// `k_{q,p}(r)` by nested case analysis.
pub fn linear_k(q: Exponent, p: Exponent, r: Exponent) -> Result<KClassification> {
    check(&[q, p, r])?;
    let (q, p, r) = (q.value(), p.value(), r.value());
    if q == 1.0 || p == f64::INFINITY {
        return Ok(KClassification::one("linear: q = 1 or p = inf gives k = 1"));
    }
    if q <= p {
        return Ok(if q.min(2.0) <= r && r <= p.max(2.0) {
            KClassification::one("linear 1 < q <= p < inf: k = 1 for min(q,2) <= r <= max(p,2)")
        } else {
            KClassification::infinite("linear 1 < q <= p < inf: infinite outside min(q,2) <= r <= max(p,2)")
        });
    }
    // p < q from here on.
    if q <= 2.0 && q < r && r <= 2.0 {
        return Ok(KClassification::finite(
            ClosedForm::ratio(r, q, p),
            "linear p <= q <= 2, q < r <= 2: k = c(r,q)/c(r,p)",
        ));
    }
    if p >= 2.0 && 2.0 <= r && r < p {
        let rd = conj(r);
        return Ok(KClassification::finite(
            ClosedForm::ratio(rd, conj(p), conj(q)),
            "linear 2 <= p <= q, 2 <= r < p: k = c(r',p')/c(r',q')",
        ));
    }
    if p <= 2.0 && 2.0 <= q && r == 2.0 {
        if q == 2.0 {
            return Ok(KClassification::finite(
                ClosedForm::ratio(2.0, 2.0, p),
                "linear p < q = 2, r = 2: k = c(2,2)/c(2,p)",
            ));
        }
        if p == 2.0 {
            return Ok(KClassification::finite(
                ClosedForm::ratio(2.0, 2.0, conj(q)),
                "linear p = 2 < q, r = 2: k = c(2,2)/c(2,q') by duality",
            ));
        }
        return Ok(KClassification::unknown(GROTHENDIECK));
    }
    Ok(KClassification::infinite("linear p < q: infinite outside the finite cases"))
}

type Predicate = fn(f64, f64, f64) -> bool;
type Outcome = fn(f64, f64, f64) -> KClassification;

/// Disjoint rows covering `[1, inf]^3`; `linear_k_by_table` checks that
/// exactly one row fires.
const LINEAR_TABLE: &[(Predicate, Outcome)] = &[
    (|q, p, _| q == 1.0 || p == f64::INFINITY, |_, _, _| KClassification::one("linear: q = 1 or p = inf gives k = 1")),
    (
        |q, p, r| q > 1.0 && q <= p && p < f64::INFINITY && r >= q.min(2.0) && r <= p.max(2.0),
        |_, _, _| KClassification::one("linear 1 < q <= p < inf: k = 1 for min(q,2) <= r <= max(p,2)"),
    ),
    (
        |q, p, r| q > 1.0 && q <= p && p < f64::INFINITY && (r < q.min(2.0) || r > p.max(2.0)),
        |_, _, _| KClassification::infinite("linear 1 < q <= p < inf: infinite outside min(q,2) <= r <= max(p,2)"),
    ),
    (
        |q, p, r| q > 1.0 && p < q && q <= 2.0 && r > q && r <= 2.0,
        |q, p, r| {
            KClassification::finite(ClosedForm::ratio(r, q, p), "linear p <= q <= 2, q < r <= 2: k = c(r,q)/c(r,p)")
        },
    ),
    (
        |q, p, r| p < q && p >= 2.0 && p < f64::INFINITY && r >= 2.0 && r < p,
        |q, p, r| {
            KClassification::finite(
                ClosedForm::ratio(conj(r), conj(p), conj(q)),
                "linear 2 <= p <= q, 2 <= r < p: k = c(r',p')/c(r',q')",
            )
        },
    ),
    (
        |q, p, r| q == 2.0 && p < 2.0 && r == 2.0,
        |_, p, _| KClassification::finite(ClosedForm::ratio(2.0, 2.0, p), "linear p < q = 2, r = 2: k = c(2,2)/c(2,p)"),
    ),
    (
        |q, p, r| p == 2.0 && q > 2.0 && r == 2.0,
        |q, _, _| {
            KClassification::finite(
                ClosedForm::ratio(2.0, 2.0, conj(q)),
                "linear p = 2 < q, r = 2: k = c(2,2)/c(2,q') by duality",
            )
        },
    ),
    (|q, p, r| p < 2.0 && q > 2.0 && r == 2.0, |_, _, _| KClassification::unknown(GROTHENDIECK)),
    (
        |q, p, r| {
            let base = q > 1.0 && p < q && p < f64::INFINITY;
            let finite_case = (q <= 2.0 && r > q && r <= 2.0)
                || (p >= 2.0 && r >= 2.0 && r < p)
                || (p <= 2.0 && q >= 2.0 && r == 2.0);
            base && !finite_case
        },
        |_, _, _| KClassification::infinite("linear p < q: infinite outside the finite cases"),
    ),
];

/// Independent decision-table implementation of [`linear_k`].
pub fn linear_k_by_table(q: Exponent, p: Exponent, r: Exponent) -> Result<KClassification> {
    check(&[q, p, r])?;
    let (q, p, r) = (q.value(), p.value(), r.value());
    let hits: Vec<&(Predicate, Outcome)> = LINEAR_TABLE.iter().filter(|(pred, _)| pred(q, p, r)).collect();
    match hits.as_slice() {
        [(_, outcome)] => Ok(outcome(q, p, r)),
        _ => Err(MzError::InvalidArgument(format!(
            "decision table matched {} rows at (q, p, r) = ({q}, {p}, {r})",
            hits.len()
        ))),
    }
}

/// Product of the linear constants `k_{q_i,p}(r)`.
pub fn product_lower_bound(q: &[Exponent], p: Exponent, r: Exponent) -> Result<KClassification> {
    if q.is_empty() {
        return Err(MzError::InvalidArgument("no input exponents".into()));
    }
    let mut value = Some(ClosedForm::one());
    for qi in q {
        let k = linear_k(*qi, p, r)?;
        match k.status {
            KStatus::Infinite => return Ok(KClassification::infinite("product of linear constants: a factor is infinite")),
            KStatus::Undetermined => value = None,
            KStatus::Finite => {
                value = match (value, &k.value) {
                    (Some(acc), Some(v)) => Some(acc.times(v)),
                    _ => None,
                }
            }
        }
    }
    Ok(match value {
        Some(v) => KClassification::finite(v, "product of linear constants"),
        None => KClassification::unknown("product of linear constants: a factor has no known value"),
    })
}

/// Finite value from the product of linear constants, or unknown if a factor is.
fn product_value(q: &[Exponent], p: Exponent, r: Exponent, provenance: &str) -> Result<KClassification> {
    let prod = product_lower_bound(q, p, r)?;
    Ok(match prod.value {
        Some(v) if prod.status == KStatus::Finite => KClassification::finite(v, provenance),
        _ => KClassification::unknown(provenance),
    })
}

/// `m (1/max(q_max', 2) + sum 1/min(q_i, 2))^(-1)`: below it `k_{q,inf}(r)` is infinite.
pub fn divergence_threshold(q: &[Exponent]) -> f64 {
    let bq = q.iter().map(|x| x.value()).fold(1.0, f64::max);
    let denom = 1.0 / conj(bq).max(2.0) + q.iter().map(|x| 1.0 / x.value().min(2.0)).sum::<f64>();
    q.len() as f64 / denom
}

/// `k_{q_1..q_m,p}(r)`.
pub fn multilinear_k(q: &[Exponent], p: Exponent, r: Exponent) -> Result<KClassification> {
    if q.is_empty() {
        return Err(MzError::InvalidArgument("no input exponents".into()));
    }
    check(q)?;
    check(&[p, r])?;
    if q.len() == 1 {
        return linear_k(q[0], p, r);
    }
    if q.iter().all(|x| *x == Exponent::ONE) {
        return Ok(KClassification::one("multilinear: all q_i = 1 gives k = 1 for every p, r"));
    }
    let rv = r.value();
    let bq = q.iter().map(|x| x.value()).fold(1.0, f64::max);
    if p.is_infinite() {
        if bq <= rv {
            return Ok(KClassification::one("multilinear p = inf with every q_i <= r: k = 1"));
        }
        if rv < divergence_threshold(q) {
            return Ok(KClassification::infinite(
                "multilinear p = inf: r below m (1/max(q_max',2) + sum 1/min(q_i,2))^-1 gives k = inf",
            ));
        }
        if bq.min(2.0) <= rv {
            return Ok(KClassification::unknown("multilinear p = inf with min(q_max,2) <= r: finite by interpolation"));
        }
        return Ok(KClassification::undetermined("multilinear p = inf: r between the divergence threshold and min(q_max,2)"));
    }
    let pv = p.value();
    if bq <= pv {
        if bq <= 2.0 && pv <= 2.0 {
            return if bq <= rv && rv <= 2.0 {
                product_value(q, p, r, "multilinear q_max <= p <= 2, q_max <= r <= 2: k is the product of linear constants")
            } else {
                Ok(KClassification::infinite("multilinear q_max <= p <= 2: infinite outside q_max <= r <= 2"))
            };
        }
        if bq >= 2.0 {
            if !(2.0 <= rv && rv <= pv) {
                return Ok(KClassification::infinite("multilinear 2 <= q_max <= p: infinite outside 2 <= r <= p"));
            }
            return if bq <= rv {
                product_value(q, p, r, "multilinear q_max <= r <= p: k is the product of linear constants")
            } else {
                Ok(KClassification::unknown("multilinear 2 <= r < q_max <= p: finite by interpolation, value open"))
            };
        }
        // q_max < 2 < p
        return if bq <= rv && rv <= pv {
            product_value(q, p, r, "multilinear q_max <= 2 <= p, q_max <= r <= p: k is the product of linear constants")
        } else {
            Ok(KClassification::infinite("multilinear q_max <= 2 <= p: infinite outside q_max <= r <= p"))
        };
    }
    // p < q_max
    if bq <= 2.0 {
        return if (bq < rv && rv <= 2.0) || (bq == 2.0 && rv == 2.0) {
            product_value(q, p, r, "multilinear p < q_max <= 2, q_max < r <= 2: k is the product of linear constants")
        } else {
            Ok(KClassification::infinite("multilinear p < q_max <= 2: infinite outside q_max < r <= 2"))
        };
    }
    if pv > 2.0 {
        return Ok(if rv == 2.0 {
            KClassification::unknown("multilinear 2 < p < q_max, r = 2: finite, value open")
        } else if 2.0 < rv && rv < pv {
            KClassification::undetermined("multilinear 2 < p < q_max, 2 < r < p: only a necessary condition is known")
        } else {
            KClassification::infinite("multilinear 2 < p < q_max: infinite outside 2 <= r < p")
        });
    }
    Ok(if rv == 2.0 {
        KClassification::unknown("multilinear p <= 2 < q_max, r = 2: finite, value open")
    } else {
        KClassification::infinite("multilinear p <= 2 < q_max: infinite unless r = 2")
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn e(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    const INF: f64 = f64::INFINITY;

    #[test]
    fn linear_examples() {
        let k = linear_k(e(1.0), e(3.0), e(7.0)).unwrap();
        assert_eq!((k.status, k.numeric().unwrap()), (KStatus::Finite, Some(1.0)));

        let k = linear_k(e(1.5), e(1.2), e(1.8)).unwrap();
        assert_eq!(k.value, Some(ClosedForm::ratio(1.8, 1.5, 1.2)));
        let direct = moment(1.8, 1.5).unwrap() / moment(1.8, 1.2).unwrap();
        assert!((k.numeric().unwrap().unwrap() - direct).abs() < 1e-14);
        assert!(direct > 1.0);

        let k = linear_k(e(3.0), e(1.5), e(2.0)).unwrap();
        assert_eq!((k.status, k.is_known()), (KStatus::Finite, false));

        let k = linear_k(e(2.0), e(1.5), e(1.3)).unwrap();
        assert_eq!(k.status, KStatus::Infinite);
    }

    #[test]
    fn grothendieck_point_has_no_value() {
        let k = linear_k(Exponent::Infinite, e(1.0), e(2.0)).unwrap();
        assert_eq!(k.status, KStatus::Finite);
        assert!(k.value.is_none());
        assert!(k.provenance.contains("Grothendieck"));
    }

    #[test]
    fn known_values_are_at_least_one() {
        let grid = [1.0, 1.2, 1.5, 2.0, 2.5, 4.0, INF];
        for q in grid {
            for p in grid {
                for r in grid {
                    let k = linear_k(e(q), e(p), e(r)).unwrap();
                    if let Some(v) = k.numeric().unwrap() {
                        assert!(v >= 1.0 - 1e-12, "k_({q},{p})({r}) = {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn multilinear_examples() {
        for (p, r) in [(1.0, 1.0), (3.0, 7.0), (INF, 1.5), (2.0, INF)] {
            let k = multilinear_k(&[e(1.0), e(1.0)], e(p), e(r)).unwrap();
            assert_eq!(k.numeric().unwrap(), Some(1.0));
        }
        let k = multilinear_k(&[e(1.5), e(1.3)], e(2.0), e(1.7)).unwrap();
        let expected = linear_k(e(1.5), e(2.0), e(1.7)).unwrap().numeric().unwrap().unwrap()
            * linear_k(e(1.3), e(2.0), e(1.7)).unwrap().numeric().unwrap().unwrap();
        assert!((k.numeric().unwrap().unwrap() - expected).abs() < 1e-12);

        assert_eq!(multilinear_k(&[e(2.0), e(2.0)], Exponent::Infinite, e(1.0)).unwrap().status, KStatus::Infinite);
        let inf2 = [Exponent::Infinite, Exponent::Infinite];
        assert_eq!(multilinear_k(&inf2, Exponent::Infinite, e(1.2)).unwrap().status, KStatus::Infinite);
    }

    #[test]
    fn littlewood_threshold() {
        let inf2 = [Exponent::Infinite, Exponent::Infinite];
        assert!((divergence_threshold(&inf2) - 4.0 / 3.0).abs() < 1e-15);
        assert!((divergence_threshold(&[e(2.0), e(2.0)]) - 4.0 / 3.0).abs() < 1e-15);
        let k = multilinear_k(&inf2, Exponent::Infinite, e(1.5)).unwrap();
        assert_eq!(k.status, KStatus::Undetermined);
        let k = multilinear_k(&inf2, Exponent::Infinite, e(2.0)).unwrap();
        assert_eq!((k.status, k.is_known()), (KStatus::Finite, false));
    }

    #[test]
    fn open_regions() {
        let k = multilinear_k(&[e(4.0), e(2.0)], e(3.0), e(2.5)).unwrap();
        assert_eq!(k.status, KStatus::Undetermined);
        let k = multilinear_k(&[e(4.0), e(2.0)], e(3.0), e(2.0)).unwrap();
        assert_eq!((k.status, k.is_known()), (KStatus::Finite, false));
        let k = multilinear_k(&[e(4.0), e(2.0)], e(3.0), e(3.0)).unwrap();
        assert_eq!(k.status, KStatus::Infinite);
    }

    #[test]
    fn product_lower_bound_examples() {
        assert_eq!(product_lower_bound(&[e(1.0); 3], e(2.0), e(3.0)).unwrap().numeric().unwrap(), Some(1.0));
        let k = product_lower_bound(&[e(1.5), e(1.2)], e(1.0), e(2.0)).unwrap();
        let want = moment(2.0, 1.5).unwrap() * moment(2.0, 1.2).unwrap() / moment(2.0, 1.0).unwrap().powi(2);
        assert!((k.numeric().unwrap().unwrap() - want).abs() < 1e-12);
        let k = product_lower_bound(&[e(1.5), e(2.0)], e(1.5), e(1.3)).unwrap();
        assert_eq!(k.status, KStatus::Infinite);
    }

    #[test]
    fn table_agrees_on_boundaries() {
        let grid = [1.0, 1.1, 4.0 / 3.0, 1.5, 2.0, 2.5, 3.0, 4.0, INF];
        for q in grid {
            for p in grid {
                for r in grid {
                    let a = linear_k(e(q), e(p), e(r)).unwrap();
                    let b = linear_k_by_table(e(q), e(p), e(r)).unwrap();
                    assert_eq!(a, b, "({q}, {p}, {r})");
                }
            }
        }
    }

    #[test]
    fn rejects_sub_one_exponents() {
        assert!(linear_k(Exponent::Finite(0.5), e(1.0), e(1.0)).is_err());
        assert!(multilinear_k(&[], e(1.0), e(1.0)).is_err());
    }

    fn exponent() -> impl Strategy<Value = f64> {
        prop_oneof![
            Just(1.0),
            Just(2.0),
            Just(INF),
            (1.0f64..6.0),
            prop::sample::select(vec![1.5, 4.0 / 3.0, 3.0, 4.0]),
        ]
    }

    proptest! {
        #[test]
        fn m1_multilinear_is_linear(q in exponent(), p in exponent(), r in exponent()) {
            prop_assert_eq!(multilinear_k(&[e(q)], e(p), e(r)).unwrap(), linear_k(e(q), e(p), e(r)).unwrap());
        }

        #[test]
        fn both_engines_agree(q in exponent(), p in exponent(), r in exponent()) {
            prop_assert_eq!(linear_k(e(q), e(p), e(r)).unwrap(), linear_k_by_table(e(q), e(p), e(r)).unwrap());
        }

        #[test]
        fn known_multilinear_equals_product(q1 in exponent(), q2 in exponent(), p in exponent(), r in exponent()) {
            let q = [e(q1), e(q2)];
            let k = multilinear_k(&q, e(p), e(r)).unwrap();
            let prod = product_lower_bound(&q, e(p), e(r)).unwrap();
            if k.status == KStatus::Finite {
                prop_assert_ne!(prod.status, KStatus::Infinite);
            }
            if let (Some(v), Some(w)) = (&k.value, &prod.value) {
                prop_assert_eq!(v, w);
            }
        }
    }
}
