//! Explicit operators that witness lower bounds or positivity: Sylvester
//! Hadamard forms, random sign tensors, cyclic convolution, and the pointwise
//! and weak-type checks run on them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MzError, Result};
use crate::multiop::MultilinearOperator;
use crate::normsolver::{has_exact_mode, norm_upper_bound, operator_norm, Budget, NormBracket, NormMode};
use crate::numeric::ls_slope;
use crate::rng;
use crate::tensorspace::{level_set_supremum, lp_norm, mixed_norm, weak_lp_quasinorm, DiscreteMeasure, Exponent, FunctionFamily};

/// Largest Hadamard size whose `l^inf x l^inf` norm is enumerated.
pub const MAX_LITTLEWOOD_N: usize = 16;

/// Row-major Sylvester matrix: `H_1 = [1]`, `H_2n = [[H, H], [H, -H]]`.
pub fn sylvester(n: usize) -> Result<Vec<f64>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(MzError::InvalidArgument(format!("Hadamard size {n} is not a power of two")));
    }
    let mut h = vec![1.0];
    let mut size = 1;
    while size < n {
        let w = 2 * size;
        let mut next = vec![0.0; w * w];
        for i in 0..size {
            for j in 0..size {
                let v = h[i * size + j];
                next[i * w + j] = v;
                next[i * w + j + size] = v;
                next[(i + size) * w + j] = v;
                next[(i + size) * w + j + size] = -v;
            }
        }
        h = next;
        size = w;
    }
    Ok(h)
}

/// `H_n` as a scalar bilinear form on `l^inf_n x l^inf_n`.
pub fn littlewood_witness(n: usize) -> Result<MultilinearOperator> {
    if n > MAX_LITTLEWOOD_N {
        return Err(MzError::EnumerationTooLarge { bits: n as u32 });
    }
    MultilinearOperator::form(sylvester(n)?, &[n, n])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignTensor {
    pub m: usize,
    pub n: usize,
    /// Row-major over `(j_1, ..., j_{m+1})`, the first index being the output.
    pub entries: Vec<i8>,
    pub seed: u64,
}

impl SignTensor {
    pub fn random(m: usize, n: usize, seed: u64, stream: u64) -> Self {
        let mut r = rng::stream(seed, stream);
        let entries = (0..n.pow(m as u32 + 1)).map(|_| if r.gen::<bool>() { 1 } else { -1 }).collect();
        Self { m, n, entries, seed }
    }

    /// Operator `l^{q_1}_n x ... x l^{q_m}_n -> l^p_n`.
    pub fn to_operator(&self) -> Result<MultilinearOperator> {
        MultilinearOperator::with_counting(
            self.entries.iter().map(|&e| f64::from(e)).collect(),
            self.n,
            &vec![self.n; self.m],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KszWitness {
    pub tensor: SignTensor,
    pub operator: MultilinearOperator,
    pub bracket: NormBracket,
    /// Index of the chosen attempt.
    pub attempt: usize,
}

/// Best of `attempts` random sign tensors by the upper end of the norm
/// bracket; ties go to the lowest attempt index.
pub fn ksz_witness(m: usize, n: usize, q: &[Exponent], p: Exponent, seed: u64, attempts: usize) -> Result<KszWitness> {
    if m == 0 || n == 0 || attempts == 0 {
        return Err(MzError::InvalidArgument("m, n and attempts must be positive".into()));
    }
    if q.len() != m {
        return Err(MzError::Shape(format!("{} exponents for m = {m}", q.len())));
    }
    let probe = SignTensor::random(m, n, seed, 0).to_operator()?;
    if !has_exact_mode(&probe, q, p)? {
        let pattern: Vec<String> = q.iter().map(ToString::to_string).collect();
        return Err(MzError::UnsupportedRegime(format!(
            "no exact norm for q = ({}), p = {p}; use all q = inf or m = 2 with q = (2, 2), with p = inf",
            pattern.join(", ")
        )));
    }
    let mut best: Option<(f64, usize, SignTensor)> = None;
    for a in 0..attempts {
        let tensor = SignTensor::random(m, n, seed, a as u64);
        let (upper, _) = norm_upper_bound(&tensor.to_operator()?, q, p)?;
        if best.as_ref().map_or(true, |b| upper < b.0) {
            best = Some((upper, a, tensor));
        }
    }
    let (_, attempt, tensor) = best.expect("attempts >= 1");
    let operator = tensor.to_operator()?;
    let bracket = operator_norm(&operator, q, p, NormMode::Auto, Budget::default(), seed)?;
    Ok(KszWitness { tensor, operator, bracket, attempt })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProbeKind {
    /// Sylvester forms on `l^inf x l^inf` (m = 2).
    Hadamard,
    /// Best-of-`attempts` sign tensors into `l^inf_n`.
    Ksz { attempts: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub n: usize,
    pub lhs: f64,
    pub norm_upper: f64,
    pub rhs_product: f64,
    /// `lhs / (norm_upper * rhs_product)`.
    pub ratio: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// Least-squares slope of `log ratio` against `log n`.
    pub fitted_exponent: f64,
    pub nondecreasing: bool,
}

/// Certified lower bounds on `k^{(n)}_{q,inf}(r)` from basis families,
/// one row per `n`.
pub fn divergence_probe(kind: ProbeKind, m: usize, ns: &[usize], q: &[Exponent], r: Exponent, seed: u64) -> Result<ProbeReport> {
    if ns.is_empty() {
        return Err(MzError::InvalidArgument("empty n list".into()));
    }
    let p = Exponent::Infinite;
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let t = match kind {
            ProbeKind::Hadamard => {
                if m != 2 || q.len() != 2 {
                    return Err(MzError::InvalidArgument("Hadamard probes are bilinear".into()));
                }
                littlewood_witness(n)?
            }
            ProbeKind::Ksz { attempts } => ksz_witness(m, n, q, p, seed, attempts)?.operator,
        };
        let families: Vec<FunctionFamily> =
            t.input_measures().iter().map(|mu| FunctionFamily::basis(mu.clone())).collect();
        let lhs = t.extension_lhs(&families, r, p)?;
        let mut rhs_product = 1.0;
        for (f, qs) in families.iter().zip(q) {
            rhs_product *= mixed_norm(f, r, *qs)?;
        }
        let (norm_upper, _) = norm_upper_bound(&t, q, p)?;
        rows.push(ProbeRow { n, lhs, norm_upper, rhs_product, ratio: lhs / (norm_upper * rhs_product), seed });
    }
    let xs: Vec<f64> = rows.iter().map(|row| (row.n as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|row| row.ratio.ln()).collect();
    let fitted_exponent = if rows.len() > 1 { ls_slope(&xs, &ys) } else { 0.0 };
    let nondecreasing = rows.windows(2).all(|w| w[1].ratio >= w[0].ratio * (1.0 - 1e-12));
    Ok(ProbeReport { rows, fitted_exponent, nondecreasing })
}

/// Cyclic convolution on `Z_N`: `T(f, g)(x) = sum_y f(x - y) g(y)`.
pub fn convolution_operator(n: usize) -> Result<MultilinearOperator> {
    if n == 0 {
        return Err(MzError::InvalidArgument("N must be at least 1".into()));
    }
    let mut coeffs = vec![0.0; n * n * n];
    for x in 0..n {
        for y in 0..n {
            let a = (x + n - y) % n;
            coeffs[(x * n + a) * n + y] = 1.0;
        }
    }
    MultilinearOperator::with_counting(coeffs, n, &[n, n])
}

fn require_positive(t: &MultilinearOperator) -> Result<()> {
    match t.coeffs().iter().position(|&c| c < 0.0) {
        Some(index) => Err(MzError::NotPositive { index, value: t.coeffs()[index] }),
        None => Ok(()),
    }
}

/// `min_j [ T((sum |f^1_k|^r)^(1/r), ...)(j) - (sum_k |T(f_k...)(j)|^r)^(1/r) ]`
/// for an operator with nonnegative coefficients.
pub fn check_positive_domination(t: &MultilinearOperator, families: &[FunctionFamily], r: Exponent) -> Result<f64> {
    require_positive(t)?;
    let lhs = t.extension_function(families, r)?;
    let envelopes: Vec<Vec<f64>> = families.iter().map(|f| f.pointwise_ell(r)).collect();
    let refs: Vec<&[f64]> = envelopes.iter().map(Vec::as_slice).collect();
    let rhs = t.apply(&refs)?;
    Ok(rhs.iter().zip(&lhs).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub s: f64,
    pub weak: f64,
    pub level_sup: f64,
    /// `(p / (p - s))^(1/s)`.
    pub factor: f64,
    /// `min(level_sup - weak, factor * weak - level_sup)`, relative to `weak`.
    pub margin: f64,
    pub holds: bool,
}

/// Checks `||f||_{p,inf} <= sup_E nu(E)^(1/p - 1/s) (int_E |f|^s)^(1/s)
/// <= (p/(p-s))^(1/s) ||f||_{p,inf}`, the supremum taken over super-level
/// sets, to relative tolerance `tol`.
pub fn weak_sandwich(f: &[f64], p: f64, s: f64, mu: &DiscreteMeasure, tol: f64) -> Result<Sandwich> {
    let level_sup = level_set_supremum(f, p, s, mu)?;
    let weak = weak_lp_quasinorm(f, Exponent::quasi(p)?, mu)?;
    let factor = (p / (p - s)).powf(1.0 / s);
    let scale = if weak > 0.0 { weak } else { 1.0 };
    let margin = (level_sup - weak).min(factor * weak - level_sup) / scale;
    Ok(Sandwich { s, weak, level_sup, factor, margin, holds: margin >= -tol })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakReport {
    pub sandwich: Vec<Sandwich>,
    pub all_hold: bool,
    /// Weak `L^{p,inf}` norm of the extension.
    pub weak_lhs: f64,
    pub rhs_product: f64,
    /// Upper bound on `||T||` when every exponent is at least 1.
    pub norm_upper: Option<f64>,
    /// `weak_lhs / (norm_upper * rhs_product)`, or `weak_lhs / rhs_product` without a norm.
    pub ratio: f64,
}

/// Level-set sandwich on the extension `(sum |T(f...)|^r)^(1/r)` for every
/// `s` in the grid, plus the weak-type ratio (reported, not asserted).
pub fn weak_extension_check(
    t: &MultilinearOperator,
    q: &[Exponent],
    p: Exponent,
    families: &[FunctionFamily],
    r: Exponent,
    s_grid: &[f64],
) -> Result<WeakReport> {
    let Exponent::Finite(pv) = p else {
        return Err(MzError::InvalidExponent("weak L^p needs a finite exponent".into()));
    };
    if q.len() != t.arity() {
        return Err(MzError::Shape(format!("{} exponents for arity {}", q.len(), t.arity())));
    }
    let g = t.extension_function(families, r)?;
    let mut sandwich = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        if !(s > 0.0 && s < pv) {
            return Err(MzError::InvalidArgument(format!("need 0 < s < p, got s = {s}, p = {pv}")));
        }
        sandwich.push(weak_sandwich(&g, pv, s, t.output_measure(), 1e-10)?);
    }
    let weak_lhs = weak_lp_quasinorm(&g, p, t.output_measure())?;
    let mut rhs_product = 1.0;
    for (f, qs) in families.iter().zip(q) {
        rhs_product *= mixed_norm(f, r, *qs)?;
    }
    let banach = p.is_banach() && q.iter().all(|x| x.is_banach());
    let norm_upper = if banach { Some(norm_upper_bound(t, q, p)?.0) } else { None };
    let ratio = weak_lhs / (rhs_product * norm_upper.unwrap_or(1.0));
    let all_hold = sandwich.iter().all(|s| s.holds);
    Ok(WeakReport { sandwich, all_hold, weak_lhs, rhs_product, norm_upper, ratio })
}

/// `||f * g||_p / (||f||_{q1} ||g||_{q2})` for the cyclic convolution.
pub fn young_ratio(n: usize, f: &[f64], g: &[f64], q1: Exponent, q2: Exponent, p: Exponent) -> Result<f64> {
    let t = convolution_operator(n)?;
    let mu = DiscreteMeasure::counting(n);
    let out = t.apply(&[f, g])?;
    Ok(lp_norm(&out, p, &mu)? / (lp_norm(f, q1, &mu)? * lp_norm(g, q2, &mu)?))
}
