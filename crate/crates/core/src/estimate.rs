//! Certified lower bounds on `k^{(n)}_{q,p}(r)`.
//!
//! For any operator `T` and families `F^i`,
//! `lhs(T, F) / (U(T) prod ||F^i||) <= k^{(n)}` as soon as `U(T) >= ||T||`,
//! so every value reported here divides by a sound upper bound on the norm.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MzError, Result};
use crate::multiop::{ExponentTriple, MultilinearOperator};
use crate::normsolver::{family_ascent, norm_upper_bound, operator_norm, Budget, NormBracket, NormMode};
use crate::rng;
use crate::tensorspace::{mixed_norm, DiscreteMeasure, Exponent, FunctionFamily};
use crate::witnesses::sylvester;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimateBudget {
    /// Ascent sweeps per family optimisation.
    pub iterations: usize,
    /// Random family restarts per candidate operator.
    pub restarts: usize,
    /// Coefficient perturbation rounds per candidate.
    pub perturbations: usize,
    /// Random coefficient tensors tried besides the structured candidates.
    pub random_candidates: usize,
}

impl Default for EstimateBudget {
    fn default() -> Self {
        Self { iterations: 200, restarts: 2, perturbations: 20, random_candidates: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub name: String,
    pub lower: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KEstimate {
    pub triple: ExponentTriple,
    pub n: usize,
    /// `lhs / (bracket.upper * rhs_product)`.
    pub lower: f64,
    pub lhs: f64,
    pub rhs_product: f64,
    pub operator: MultilinearOperator,
    pub families: Vec<FunctionFamily>,
    pub bracket: NormBracket,
    /// Name of the candidate that produced `lower`.
    pub candidate: String,
    pub candidates: Vec<CandidateResult>,
    pub converged: bool,
    pub seed: u64,
    pub budget: EstimateBudget,
}

fn tensor_identity(dims: &[usize]) -> Option<Vec<f64>> {
    let inputs: usize = dims[1..].iter().product();
    if dims[0] != inputs {
        return None;
    }
    let mut c = vec![0.0; inputs * inputs];
    for i in 0..inputs {
        c[i * inputs + i] = 1.0;
    }
    Some(c)
}

fn hadamard_candidate(dims: &[usize]) -> Option<Vec<f64>> {
    if dims.len() != 3 || dims[1] != dims[2] || !dims[1].is_power_of_two() {
        return None;
    }
    let n = dims[1];
    let mut c = vec![0.0; dims[0] * n * n];
    c[..n * n].copy_from_slice(&sylvester(n).ok()?);
    Some(c)
}

/// First `n` basis vectors, padded with zero functions.
fn basis_start(measures: &[DiscreteMeasure], n: usize) -> Result<Vec<FunctionFamily>> {
    measures
        .iter()
        .map(|mu| {
            let d = mu.len();
            let values = (0..n)
                .map(|k| (0..d).map(|i| if i == k { 1.0 } else { 0.0 }).collect())
                .collect();
            FunctionFamily::new(values, mu.clone())
        })
        .collect()
}

struct Scored {
    lower: f64,
    lhs: f64,
    rhs: f64,
    operator: MultilinearOperator,
    families: Vec<FunctionFamily>,
    converged: bool,
}

fn score(t: &MultilinearOperator, triple: &ExponentTriple, n: usize, budget: &EstimateBudget, seed: u64, init: &[FunctionFamily]) -> Result<Scored> {
    let ascent_budget = Budget { iterations: budget.iterations, restarts: budget.restarts };
    let fa = family_ascent(t, &triple.q, triple.p, triple.r, n, ascent_budget, seed, Some(init))?;
    let mut rhs = 1.0;
    for (f, q) in fa.families.iter().zip(&triple.q) {
        rhs *= mixed_norm(f, triple.r, *q)?;
    }
    let (upper, _) = norm_upper_bound(t, &triple.q, triple.p)?;
    let lower = if upper > 0.0 && rhs > 0.0 { fa.lhs / (upper * rhs) } else { 0.0 };
    Ok(Scored { lower, lhs: fa.lhs, rhs, operator: t.clone(), families: fa.families, converged: fa.converged })
}

/// Best certified lower bound on `k^{(n)}` found by alternating family ascent
/// with random perturbation of the coefficient tensor.
///
/// `dims` is the coefficient shape `(output, d_1, ..., d_m)`; all measures
/// are counting measures.
pub fn estimate_kn(
    q: &[Exponent],
    p: Exponent,
    r: Exponent,
    n: usize,
    dims: &[usize],
    budget: EstimateBudget,
    seed: u64,
) -> Result<KEstimate> {
    if n == 0 {
        return Err(MzError::InvalidArgument("n must be at least 1".into()));
    }
    if dims.len() != q.len() + 1 || dims.iter().any(|&d| d == 0) {
        return Err(MzError::Shape(format!("dims {dims:?} do not fit {} input exponents", q.len())));
    }
    let triple = ExponentTriple::new(q.to_vec(), p, r)?;
    let total: usize = dims.iter().product();

    let mut candidates: Vec<(String, Vec<f64>)> = vec![];
    if let Some(c) = tensor_identity(dims) {
        candidates.push(("tensor_identity".into(), c));
    }
    if let Some(c) = hadamard_candidate(dims) {
        candidates.push(("hadamard".into(), c));
    }
    for k in 0..budget.random_candidates {
        let mut g = rng::stream(seed, 1000 + k as u64);
        candidates.push((format!("random_{k}"), (0..total).map(|_| g.gen_range(-1.0..1.0)).collect()));
    }
    if candidates.is_empty() {
        return Err(MzError::InvalidArgument("no candidate operators: raise random_candidates".into()));
    }

    let mut results = Vec::with_capacity(candidates.len());
    let mut best: Option<(String, Scored)> = None;
    for (ci, (name, coeffs)) in candidates.into_iter().enumerate() {
        let t = MultilinearOperator::with_counting(coeffs, dims[0], &dims[1..])?;
        let init = basis_start(t.input_measures(), n)?;
        let cseed = rng::derive_seed(seed, ci as u64);
        let mut current = score(&t, &triple, n, &budget, cseed, &init)?;
        let mut g = rng::stream(cseed, 7);
        let mut sigma = 0.3;
        for round in 0..budget.perturbations {
            let rms = (current.operator.coeffs().iter().map(|c| c * c).sum::<f64>() / total as f64).sqrt().max(1e-300);
            let perturbed: Vec<f64> =
                current.operator.coeffs().iter().map(|c| c + sigma * rms * g.gen_range(-1.0..1.0)).collect();
            let t2 = current.operator.with_coeffs(perturbed)?;
            let no_restarts = EstimateBudget { restarts: 0, ..budget };
            let next = score(&t2, &triple, n, &no_restarts, rng::derive_seed(cseed, 100 + round as u64), &current.families)?;
            if next.lower > current.lower {
                current = next;
                sigma *= 1.5;
            } else {
                sigma *= 0.5;
            }
        }
        results.push(CandidateResult { name: name.clone(), lower: current.lower });
        if best.as_ref().map_or(true, |b| current.lower > b.1.lower) {
            best = Some((name, current));
        }
    }
    let (candidate, best) = best.expect("at least one candidate");
    let ascent_budget = Budget { iterations: budget.iterations, restarts: budget.restarts };
    let bracket = operator_norm(&best.operator, q, p, NormMode::Auto, ascent_budget, seed)?;
    let lower = if bracket.upper > 0.0 && best.rhs > 0.0 { best.lhs / (bracket.upper * best.rhs) } else { 0.0 };
    Ok(KEstimate {
        triple,
        n,
        lower,
        lhs: best.lhs,
        rhs_product: best.rhs,
        operator: best.operator,
        families: best.families,
        bracket: bracket.clone(),
        candidate,
        candidates: results,
        converged: best.converged && bracket.converged,
        seed,
        budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::multilinear_k;

    fn e(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn small() -> EstimateBudget {
        EstimateBudget { iterations: 100, restarts: 1, perturbations: 5, random_candidates: 1 }
    }

    #[test]
    fn tensor_identity_attains_one() {
        let q = [e(2.0), e(2.0)];
        let est = estimate_kn(&q, e(2.0), e(2.0), 3, &[9, 3, 3], small(), 1).unwrap();
        assert!(est.lower <= 1.0 + 1e-6 && est.lower >= 0.9, "{}", est.lower);
        let id = est.candidates.iter().find(|c| c.name == "tensor_identity").unwrap();
        assert!(id.lower >= 0.999);
    }

    #[test]
    fn hadamard_at_four_thirds() {
        let q = [Exponent::Infinite, Exponent::Infinite];
        let est = estimate_kn(&q, Exponent::Infinite, e(4.0 / 3.0), 2, &[1, 2, 2], small(), 0).unwrap();
        assert!(est.lower >= 2f64.sqrt() - 1e-9, "{}", est.lower);
    }

    #[test]
    fn linear_diagonal_never_exceeds_one() {
        for (qv, n) in [(1.5, 2), (2.0, 3), (3.0, 4)] {
            let est = estimate_kn(&[e(qv)], e(qv), e(2.0), n, &[3, 3], small(), 4).unwrap();
            assert!(est.lower <= 1.0 + 1e-6, "q = {qv}: {}", est.lower);
        }
    }

    #[test]
    fn estimates_respect_known_values() {
        for (q, p, r) in [([1.5, 1.2], 2.0, 1.7), ([1.0, 1.0], 3.0, 1.5), ([2.0, 2.0], 2.0, 2.0)] {
            let q = [e(q[0]), e(q[1])];
            let k = multilinear_k(&q, e(p), e(r)).unwrap().numeric().unwrap().unwrap();
            let est = estimate_kn(&q, e(p), e(r), 2, &[2, 2, 2], small(), 9).unwrap();
            assert!(est.lower <= k + 1e-6, "{} > {k}", est.lower);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let q = [e(2.0), e(3.0)];
        let a = estimate_kn(&q, e(2.0), e(2.0), 2, &[2, 2, 2], small(), 3).unwrap();
        let b = estimate_kn(&q, e(2.0), e(2.0), 2, &[2, 2, 2], small(), 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(estimate_kn(&[e(2.0)], e(2.0), e(2.0), 2, &[2, 2, 2], small(), 0).is_err());
        assert!(estimate_kn(&[e(2.0)], e(2.0), e(2.0), 0, &[2, 2], small(), 0).is_err());
    }
}
