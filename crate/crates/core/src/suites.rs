//! Named verification suites with aggregated pass/fail and margins.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{linear_k, linear_k_by_table, multilinear_k};
use crate::error::{MzError, Result};
use crate::estimate::EstimateBudget;
use crate::rng;
use crate::tensorspace::{mixed_norm, DiscreteMeasure, Exponent, FunctionFamily};
use crate::verify::{
    all_pass, log_convexity_in_inverse_r, verify_duality, verify_interpolation_r, verify_monotonicity_p, Check,
};
use crate::witnesses::{check_positive_domination, convolution_operator, littlewood_witness, weak_sandwich};

pub const POSITIVITY_TOL: f64 = 1e-12;
pub const SANDWICH_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Classifier,
    Positivity,
    Weak,
    Monotonicity,
    Interpolation,
    Duality,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Classifier, Suite::Positivity, Suite::Weak, Suite::Monotonicity, Suite::Interpolation, Suite::Duality];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Classifier => "classifier",
            Suite::Positivity => "positivity",
            Suite::Weak => "weak",
            Suite::Monotonicity => "monotonicity",
            Suite::Interpolation => "interpolation",
            Suite::Duality => "duality",
        }
    }
}

impl std::str::FromStr for Suite {
    type Err = MzError;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| MzError::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub trials: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    /// Smallest margin over all checks.
    pub min_margin: f64,
    pub pass: bool,
}

fn finish(suite: Suite, trials: usize, seed: u64, checks: Vec<Check>) -> SuiteReport {
    let min_margin = checks.iter().map(|c| c.margin).fold(f64::INFINITY, f64::min);
    let pass = all_pass(&checks);
    SuiteReport { suite, trials, seed, checks, min_margin, pass }
}

pub fn run_suite(suite: Suite, trials: usize, seed: u64) -> Result<SuiteReport> {
    match suite {
        Suite::Classifier => classifier_suite(trials),
        Suite::Positivity => positivity_suite(trials, seed),
        Suite::Weak => weak_suite(trials, seed),
        Suite::Monotonicity => monotonicity_suite(seed),
        Suite::Interpolation => interpolation_suite(),
        Suite::Duality => duality_suite(),
    }
}

/// Deterministic exponent grid of `side` values in `[1, inf]`: the usual
/// breakpoints plus an even spread in `1/q`.
pub fn exponent_grid(side: usize) -> Vec<Exponent> {
    let mut v: Vec<f64> = vec![1.0, 1.2, 4.0 / 3.0, 1.5, 1.8, 2.0, 2.25, 2.5, 3.0, 4.0, 6.0, f64::INFINITY];
    let extra = side.saturating_sub(v.len());
    for k in 0..extra {
        let x = 1.0 / ((k as f64 + 0.5) / extra as f64);
        if v.iter().all(|y| (x - y).abs() > 1e-12) {
            v.push(x);
        } else {
            v.push(1.0 / ((k as f64 + 0.25) / extra as f64));
        }
    }
    v.sort_by(f64::total_cmp);
    v.into_iter().map(|x| Exponent::new(x).expect("grid values are >= 1")).collect()
}

/// Both linear engines agree, and `multilinear_k` with one input matches,
/// on `side^3` triples. `trials` is the requested minimum number of triples.
pub fn classifier_suite(trials: usize) -> Result<SuiteReport> {
    let side = (trials.max(1) as f64).cbrt().ceil() as usize;
    let grid = exponent_grid(side.max(12));
    let mut engine = 0usize;
    let mut single = 0usize;
    let mut total = 0usize;
    for &q in &grid {
        for &p in &grid {
            for &r in &grid {
                total += 1;
                let a = linear_k(q, p, r)?;
                if linear_k_by_table(q, p, r)? != a {
                    engine += 1;
                }
                if multilinear_k(&[q], p, r)? != a {
                    single += 1;
                }
            }
        }
    }
    let checks = vec![
        Check::new(format!("engines agree on {total} triples"), -(engine as f64), 0.0),
        Check::new(format!("single-input multilinear on {total} triples"), -(single as f64), 0.0),
    ];
    Ok(finish(Suite::Classifier, total, 0, checks))
}

fn random_family(g: &mut impl Rng, n_funcs: usize, atoms: usize) -> Result<FunctionFamily> {
    let values = (0..n_funcs).map(|_| (0..atoms).map(|_| g.gen::<f64>()).collect()).collect();
    FunctionFamily::new(values, DiscreteMeasure::counting(atoms))
}

/// Exponent triples `(q1, q2, p)` with `1 + 1/p = 1/q1 + 1/q2`, where the
/// cyclic convolution has norm at most 1.
pub const YOUNG_TRIPLES: [(f64, f64, f64); 3] = [(1.0, 2.0, 2.0), (1.5, 1.5, 3.0), (4.0 / 3.0, 4.0 / 3.0, 2.0)];

/// Positive domination on the `N = 16` cyclic convolution for
/// `r in {1, 1.7, 3, inf}`, and the extension inequality with constant 1 at
/// Young exponents.
pub fn positivity_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    const N: usize = 16;
    const FUNCS: usize = 4;
    let t = convolution_operator(N)?;
    let rs = [Exponent::ONE, Exponent::Finite(1.7), Exponent::Finite(3.0), Exponent::Infinite];
    let mut dom = [f64::INFINITY; 4];
    let mut young = [f64::INFINITY; 4];
    let mut g = rng::stream(seed, 0);
    for _ in 0..trials {
        let fams = [random_family(&mut g, FUNCS, N)?, random_family(&mut g, FUNCS, N)?];
        for (k, &r) in rs.iter().enumerate() {
            dom[k] = dom[k].min(check_positive_domination(&t, &fams, r)?);
            for (q1, q2, p) in YOUNG_TRIPLES {
                let lhs = t.extension_lhs(&fams, r, Exponent::new(p)?)?;
                let rhs = mixed_norm(&fams[0], r, Exponent::new(q1)?)? * mixed_norm(&fams[1], r, Exponent::new(q2)?)?;
                young[k] = young[k].min((rhs - lhs) / rhs);
            }
        }
    }
    let mut checks = vec![];
    for (k, r) in rs.iter().enumerate() {
        checks.push(Check::new(format!("domination r={r}"), dom[k], POSITIVITY_TOL));
        checks.push(Check::new(format!("constant one at Young exponents r={r}"), young[k], POSITIVITY_TOL));
    }
    Ok(finish(Suite::Positivity, trials, seed, checks))
}

/// Level-set sandwich for random functions on 32 atoms with random weights
/// and random `0 < s < p`.
pub fn weak_suite(trials: usize, seed: u64) -> Result<SuiteReport> {
    const ATOMS: usize = 32;
    let mut g = rng::stream(seed, 0);
    let mut worst = f64::INFINITY;
    let mut failures = 0usize;
    for _ in 0..trials {
        let w: Vec<f64> = (0..ATOMS).map(|_| g.gen_range(0.1..2.0)).collect();
        let mu = DiscreteMeasure::new(w)?;
        // a few repeated magnitudes so ties between levels get exercised
        let palette: Vec<f64> = (0..8).map(|_| g.gen_range(-3.0..3.0)).collect();
        let f: Vec<f64> = (0..ATOMS)
            .map(|_| if g.gen_bool(0.3) { palette[g.gen_range(0..palette.len())] } else { g.gen_range(-3.0..3.0) })
            .collect();
        let p = g.gen_range(1.0..5.0);
        let s = g.gen_range(0.05..0.95) * p;
        let sw = weak_sandwich(&f, p, s, &mu, SANDWICH_TOL)?;
        worst = worst.min(sw.margin);
        failures += usize::from(!sw.holds);
    }
    let checks = vec![
        Check::new("worst relative sandwich margin", worst, SANDWICH_TOL),
        Check::new("trials outside the sandwich", -(failures as f64), 0.0),
    ];
    Ok(finish(Suite::Weak, trials, seed, checks))
}

/// Closed-form monotonicity for `q = 1.5, r = 1.8` over `p in [1, 1.5]`,
/// `q = (1, 1)` across `p`, and shared-witness transfers for
/// `q = (2, 2), r = 1.5`.
pub fn monotonicity_suite(seed: u64) -> Result<SuiteReport> {
    let grid: Vec<Exponent> = (0..=5).map(|k| Exponent::Finite(1.0 + 0.1 * k as f64)).collect();
    let budget = EstimateBudget { iterations: 60, restarts: 1, perturbations: 3, random_candidates: 1 };
    let mut checks = verify_monotonicity_p(&[Exponent::Finite(1.5)], Exponent::Finite(1.8), &grid, 0, budget, seed)?.checks;
    let ones = [Exponent::ONE, Exponent::TWO, Exponent::Finite(4.0), Exponent::Infinite];
    checks.extend(verify_monotonicity_p(&[Exponent::ONE; 2], Exponent::Finite(3.0), &ones, 0, budget, seed)?.checks);
    let p_grid = [Exponent::Finite(1.5), Exponent::Finite(3.0), Exponent::Infinite];
    checks.extend(verify_monotonicity_p(&[Exponent::TWO; 2], Exponent::Finite(1.5), &p_grid, 2, budget, seed)?.checks);
    Ok(finish(Suite::Monotonicity, 0, seed, checks))
}

/// Log-convexity of `k_{1.5,1}(r)` in `1/r` over `r in (1.5, 2]`, the
/// constant region of `q = p = 1.5`, and a Hadamard witness across
/// `r in [4/3, 2]` (witness violations are counted as failures here since
/// for basis families both sides are exact).
pub fn interpolation_suite() -> Result<SuiteReport> {
    let r_grid: Vec<Exponent> = (1..=10).map(|k| Exponent::Finite(1.5 + 0.05 * k as f64)).collect();
    let mut checks = log_convexity_in_inverse_r(&[Exponent::Finite(1.5)], Exponent::ONE, &r_grid)?;
    let thetas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let rep = verify_interpolation_r(&[Exponent::Finite(1.5)], Exponent::Finite(1.5), Exponent::Finite(1.5), Exponent::TWO, &thetas, None)?;
    checks.extend(rep.checks);
    let t = littlewood_witness(4)?;
    let fams: Vec<FunctionFamily> = t.input_measures().iter().map(|m| FunctionFamily::basis(m.clone())).collect();
    let q = [Exponent::Infinite; 2];
    let rep = verify_interpolation_r(&q, Exponent::Infinite, Exponent::Finite(4.0 / 3.0), Exponent::TWO, &[0.0, 1.0 / 3.0, 1.0], Some((&t, &fams)))?;
    checks.extend(rep.witness_checks);
    Ok(finish(Suite::Interpolation, 0, 0, checks))
}

/// `k_{q,p}(r) = k_{p',q'}(r')` over the breakpoint grid.
pub fn duality_suite() -> Result<SuiteReport> {
    let grid = exponent_grid(12);
    let mut status = 0usize;
    let mut worst = 0.0f64;
    let mut total = 0usize;
    for &q in &grid {
        for &p in &grid {
            for &r in &grid {
                let rep = verify_duality(q, p, r)?;
                total += 1;
                status += usize::from(!rep.status_match);
                worst = worst.max(rep.value_diff.unwrap_or(0.0));
            }
        }
    }
    let checks = vec![
        Check::new(format!("status agrees on {total} triples"), -(status as f64), 0.0),
        Check::new("largest value difference", -worst, crate::verify::DUALITY_TOL),
    ];
    Ok(finish(Suite::Duality, total, 0, checks))
}
