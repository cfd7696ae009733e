//! Structural checks: monotonicity in `p`, log-convexity in `1/r`, duality.

use serde::{Deserialize, Serialize};

use crate::classify::{linear_k, multilinear_k, KClassification, KStatus};
use crate::error::{MzError, Result};
use crate::estimate::{estimate_kn, EstimateBudget};
use crate::multiop::MultilinearOperator;
use crate::normsolver::norm_upper_bound;
use crate::tensorspace::{mixed_norm, Exponent, FunctionFamily};

/// Absolute slack for comparisons of closed-form values.
pub const CLOSED_FORM_TOL: f64 = 1e-6;
/// Absolute slack for estimator comparisons.
pub const SOLVER_TOL: f64 = 1e-6;
pub const DUALITY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Signed slack; negative means violated.
    pub margin: f64,
}

impl Check {
    /// Passes when `margin >= -tol`.
    pub fn new(name: impl Into<String>, margin: f64, tol: f64) -> Self {
        Self { name: name.into(), pass: margin >= -tol, margin }
    }
}

pub(crate) fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub p: Exponent,
    pub status: KStatus,
    pub value: Option<f64>,
    pub lower: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub q: Vec<Exponent>,
    pub r: Exponent,
    pub n: usize,
    pub points: Vec<GridPoint>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

fn known(c: &KClassification) -> Result<Option<f64>> {
    c.numeric()
}

fn family_rhs(families: &[FunctionFamily], q: &[Exponent], r: Exponent) -> Result<f64> {
    let mut rhs = 1.0;
    for (f, qi) in families.iter().zip(q) {
        rhs *= mixed_norm(f, r, *qi)?;
    }
    Ok(rhs)
}

/// Pointwise weight `g` with `||g||_s = 1` for `1/s = 1/p_small - 1/p_large`
/// such that `||g G||_{p_small} = ||G||_{p_large}`.
fn transfer_weight(gv: &[f64], weights: &[f64], p_large: Exponent, p_small: f64) -> Vec<f64> {
    match p_large {
        Exponent::Infinite => {
            let (j, _) = gv
                .iter()
                .enumerate()
                .fold((0, -1.0), |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc });
            let mut g = vec![0.0; gv.len()];
            g[j] = weights[j].powf(-1.0 / p_small);
            g
        }
        Exponent::Finite(pl) => {
            let s = 1.0 / (1.0 / p_small - 1.0 / pl);
            let norm = gv.iter().zip(weights).map(|(v, w)| w * v.abs().powf(pl)).sum::<f64>().powf(1.0 / pl);
            if norm == 0.0 {
                return vec![0.0; gv.len()];
            }
            gv.iter().map(|v| (v.abs() / norm).powf(pl / s)).collect()
        }
    }
}

/// Certified ratio of `(t, families)` at output exponent `p`, using the
/// smaller of `extra_upper` and the solver's own upper bound.
fn certified_ratio(
    t: &MultilinearOperator,
    families: &[FunctionFamily],
    q: &[Exponent],
    p: Exponent,
    r: Exponent,
    extra_upper: Option<f64>,
) -> Result<f64> {
    let lhs = t.extension_lhs(families, r, p)?;
    let (mut upper, _) = norm_upper_bound(t, q, p)?;
    if let Some(u) = extra_upper {
        upper = upper.min(u);
    }
    let rhs = family_rhs(families, q, r)?;
    Ok(if upper > 0.0 && rhs > 0.0 { lhs / (upper * rhs) } else { 0.0 })
}

/// Checks that `k^{(n)}_{q,p}(r)` does not increase with `p`.
///
/// Closed-form values on consecutive grid points must be nonincreasing.
/// For every consecutive pair `p_a < p_b` the best witness found at `p_b`
/// is transported to `p_a` by a Hölder weight on the output; its certified
/// ratio there must be at least the one at `p_b`. Certified lower bounds at
/// `p_b` may not exceed a known closed form at `p_a`.
pub fn verify_monotonicity_p(
    q: &[Exponent],
    r: Exponent,
    p_grid: &[Exponent],
    n: usize,
    budget: EstimateBudget,
    seed: u64,
) -> Result<MonotonicityReport> {
    if p_grid.len() < 2 {
        return Err(MzError::InvalidArgument("p-grid needs at least two points".into()));
    }
    let mut grid = p_grid.to_vec();
    grid.sort_by(|a, b| a.value().total_cmp(&b.value()));
    let dims: Vec<usize> = std::iter::once(2).chain(q.iter().map(|_| 2)).collect();

    let mut points = Vec::with_capacity(grid.len());
    let mut estimates = Vec::with_capacity(grid.len());
    for (k, &p) in grid.iter().enumerate() {
        let class = multilinear_k(q, p, r)?;
        let est = if n > 0 { Some(estimate_kn(q, p, r, n, &dims, budget, seed.wrapping_add(k as u64))?) } else { None };
        points.push(GridPoint { p, status: class.status, value: known(&class)?, lower: est.as_ref().map(|e| e.lower) });
        estimates.push(est);
    }

    let mut checks = vec![];
    for k in 1..grid.len() {
        let (a, b) = (&points[k - 1], &points[k]);
        if let (Some(va), Some(vb)) = (a.value, b.value) {
            checks.push(Check::new(format!("closed_form p={} -> p={}", a.p, b.p), va - vb, CLOSED_FORM_TOL));
        }
        if let (Some(va), Some(lb)) = (a.value, b.lower) {
            checks.push(Check::new(format!("lower at p={} vs value at p={}", b.p, a.p), va - lb, SOLVER_TOL));
        }
        if let (Some(est), Exponent::Finite(pa)) = (&estimates[k], a.p) {
            let t = &est.operator;
            let g = transfer_weight(&t.extension_function(&est.families, r)?, t.output_measure().weights(), b.p, pa);
            let scaled: Vec<f64> = t
                .coeffs()
                .chunks(t.coeffs().len() / t.output_dim())
                .zip(&g)
                .flat_map(|(row, gj)| row.iter().map(move |c| c * gj))
                .collect();
            let tg = t.with_coeffs(scaled)?;
            let ratio_b = est.lower;
            let ratio_a = certified_ratio(&tg, &est.families, q, a.p, r, Some(est.bracket.upper))?;
            checks.push(Check::new(format!("shared witness p={} -> p={}", b.p, a.p), ratio_a - ratio_b, SOLVER_TOL));
        }
    }
    let pass = all_pass(&checks);
    Ok(MonotonicityReport { q: q.to_vec(), r, n, points, checks, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpolationReport {
    pub q: Vec<Exponent>,
    pub p: Exponent,
    pub r1: Exponent,
    pub r2: Exponent,
    /// Checks on closed-form values; these decide `pass`.
    pub checks: Vec<Check>,
    /// Checks on a fixed witness; reported only.
    pub witness_checks: Vec<Check>,
    pub witness_violations: usize,
    pub pass: bool,
}

/// `r_theta` with `1/r_theta = (1 - theta)/r1 + theta/r2`.
pub fn interpolate_r(r1: Exponent, r2: Exponent, theta: f64) -> Result<Exponent> {
    let inv = (1.0 - theta) * r1.recip() + theta * r2.recip();
    if inv == 0.0 {
        Ok(Exponent::Infinite)
    } else {
        Exponent::new(1.0 / inv)
    }
}

/// Checks `k(r_theta) <= k(r1)^{1-theta} k(r2)^theta` on the closed forms and,
/// if a witness is given, on its certified ratios.
pub fn verify_interpolation_r(
    q: &[Exponent],
    p: Exponent,
    r1: Exponent,
    r2: Exponent,
    thetas: &[f64],
    witness: Option<(&MultilinearOperator, &[FunctionFamily])>,
) -> Result<InterpolationReport> {
    if thetas.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(MzError::InvalidArgument("theta must lie in [0, 1]".into()));
    }
    let k1 = known(&multilinear_k(q, p, r1)?)?;
    let k2 = known(&multilinear_k(q, p, r2)?)?;
    let mut checks = vec![];
    let mut witness_checks = vec![];
    let w_ends = match witness {
        Some((t, f)) => Some((certified_ratio(t, f, q, p, r1, None)?, certified_ratio(t, f, q, p, r2, None)?)),
        None => None,
    };
    for &theta in thetas {
        let r = interpolate_r(r1, r2, theta)?;
        if let (Some(a), Some(b), Some(k)) = (k1, k2, known(&multilinear_k(q, p, r)?)?) {
            let bound = (1.0 - theta) * a.ln() + theta * b.ln();
            checks.push(Check::new(format!("closed_form theta={theta}"), bound - k.ln(), CLOSED_FORM_TOL));
        }
        if let (Some((t, f)), Some((a, b))) = (witness, w_ends) {
            let mid = certified_ratio(t, f, q, p, r, None)?;
            let bound = a.powf(1.0 - theta) * b.powf(theta);
            witness_checks.push(Check::new(format!("witness theta={theta}"), bound - mid, SOLVER_TOL));
        }
    }
    let witness_violations = witness_checks.iter().filter(|c| !c.pass).count();
    let pass = all_pass(&checks);
    Ok(InterpolationReport { q: q.to_vec(), p, r1, r2, checks, witness_checks, witness_violations, pass })
}

/// Discrete convexity of `log k(r)` as a function of `1/r`: every interior
/// grid point lies below the chord of its neighbours. Points without a
/// known closed form are skipped.
pub fn log_convexity_in_inverse_r(q: &[Exponent], p: Exponent, r_grid: &[Exponent]) -> Result<Vec<Check>> {
    let mut pts = vec![];
    for &r in r_grid {
        if let Some(v) = known(&multilinear_k(q, p, r)?)? {
            pts.push((r.recip(), v.ln(), r));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut checks = vec![];
    for w in pts.windows(3) {
        let (x0, y0, _) = w[0];
        let (x1, y1, r) = w[1];
        let (x2, y2, _) = w[2];
        let theta = (x1 - x0) / (x2 - x0);
        let chord = (1.0 - theta) * y0 + theta * y2;
        checks.push(Check::new(format!("log-convexity at r={r}"), chord - y1, CLOSED_FORM_TOL));
    }
    Ok(checks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualityReport {
    pub triple: [Exponent; 3],
    pub dual_triple: [Exponent; 3],
    pub original: KClassification,
    pub dual: KClassification,
    pub status_match: bool,
    pub value_diff: Option<f64>,
    pub pass: bool,
}

/// Compares `k_{q,p}(r)` with `k_{p',q'}(r')`.
pub fn verify_duality(q: Exponent, p: Exponent, r: Exponent) -> Result<DualityReport> {
    let dual_triple = [p.dual()?, q.dual()?, r.dual()?];
    let original = linear_k(q, p, r)?;
    let dual = linear_k(dual_triple[0], dual_triple[1], dual_triple[2])?;
    let status_match = original.status == dual.status;
    let value_diff = match (original.numeric()?, dual.numeric()?) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    };
    let pass = status_match && value_diff.map_or(true, |d| d <= DUALITY_TOL);
    Ok(DualityReport { triple: [q, p, r], dual_triple, original, dual, status_match, value_diff, pass })
}
