//! Symmetric `r`-stable laws normalised by the characteristic function
//! `exp(-|t|^r)`: density by cosine inversion, absolute moments
//! `c_{r,s} = (E|X|^s)^(1/s)`, Chambers-Mallows-Stuck sampling and Monte Carlo
//! checks of the stable identities.
//!
//! Under this normalisation `r = 2` is the centred Gaussian with variance 2
//! and `r = 1` is the standard Cauchy law. Tables from sources that use the
//! `exp(-|t|^r / 2)` or unit-variance conventions differ by a scale factor.

use std::f64::consts::PI;

use rand::distributions::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{MzError, Result};
use crate::quadrature::{integrate_panels, Integral};
use crate::rng::{self, StreamRng};

/// Moments this close to the stability exponent are rejected.
pub const MOMENT_GUARD: f64 = 1e-6;

const MAX_SEGMENTS: usize = 400;
const MAX_PANELS: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StableLaw {
    r: f64,
}

impl StableLaw {
    pub fn new(r: f64) -> Result<Self> {
        if r > 0.0 && r <= 2.0 {
            Ok(Self { r })
        } else {
            Err(MzError::InvalidArgument(format!("stability exponent {r} is not in (0, 2]")))
        }
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn is_gaussian(&self) -> bool {
        self.r == 2.0
    }

    /// Whether `E|X|^s` is finite.
    pub fn moment_exists(&self, s: f64) -> bool {
        s > 0.0 && (self.is_gaussian() || s < self.r - MOMENT_GUARD)
    }

    fn check_moment(&self, s: f64) -> Result<()> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(MzError::InvalidArgument(format!("moment order {s} must be positive and finite")));
        }
        if !self.moment_exists(s) {
            return Err(MzError::MomentDiverges { r: self.r, s });
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMethod {
    Quadrature,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentValue {
    pub r: f64,
    pub s: f64,
    /// `c_{r,s}`.
    pub value: f64,
    pub method: MomentMethod,
    /// Absolute error bound (quadrature) or three standard errors (Monte Carlo).
    pub error_estimate: f64,
    /// One standard error, Monte Carlo only.
    pub standard_error: Option<f64>,
}

/// Asymptotic expansion of the density for large `|x|`:
/// `w(x) = (1/pi) sum_k (-1)^(k+1) Gamma(kr+1)/k! sin(k pi r/2) x^-(kr+1)`.
/// Returns `None` unless the terms fall below `tol / 20` before they start to
/// grow.
fn density_series(r: f64, x: f64, tol: f64) -> Option<f64> {
    let lx = x.ln();
    series_sum(r, tol, |k| {
        let kr = k as f64 * r;
        let log_mag = ln_gamma(kr + 1.0) - ln_gamma(k as f64 + 1.0) - (kr + 1.0) * lx;
        (log_mag.exp() / PI, 1.0)
    })
}

/// `2 int_A^inf x^s w(x) dx` from the same expansion, term by term.
fn moment_tail_series(r: f64, s: f64, a: f64, tol: f64) -> Option<f64> {
    let la = a.ln();
    series_sum(r, tol, |k| {
        let kr = k as f64 * r;
        let log_mag = ln_gamma(kr + 1.0) - ln_gamma(k as f64 + 1.0) + (s - kr) * la;
        (2.0 * log_mag.exp() / PI, 1.0 / (kr - s))
    })
}

/// Sums `(-1)^(k+1) sin(k pi r/2) * mag_k * extra_k` while the magnitudes decrease.
fn series_sum<F: Fn(usize) -> (f64, f64)>(r: f64, tol: f64, term: F) -> Option<f64> {
    let mut sum = 0.0;
    let mut previous = f64::INFINITY;
    for k in 1..=600usize {
        let (mag, extra) = term(k);
        let bound = mag * extra.abs();
        if !bound.is_finite() || (k > 2 && bound > previous) {
            return None;
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sum += sign * (k as f64 * PI * r / 2.0).sin() * mag * extra;
        if bound < tol / 20.0 {
            return Some(sum);
        }
        previous = bound;
    }
    None
}

/// Truncation point where the neglected part of `int e^{-t^r}` is below `tol / 10`.
fn inversion_cutoff(r: f64, tol: f64) -> f64 {
    let mut t = (10.0 / tol).ln().max(1.0).powf(1.0 / r);
    while (-t.powf(r)).exp() * t.powf(1.0 - r).max(1.0) * 2.0 / r > tol / 10.0 {
        t *= 1.2;
    }
    t
}

fn density_by_inversion(r: f64, x: f64, tol: f64) -> Result<f64> {
    let cutoff = inversion_cutoff(r, tol);
    let width = if x > 1.0 { PI / x } else { 1.0 };
    let panels = (cutoff / width).ceil() as usize;
    if panels > MAX_PANELS {
        return Err(MzError::QuadratureFailure { achieved: f64::NAN });
    }
    let mut breaks: Vec<f64> = (0..panels).map(|i| i as f64 * width).collect();
    breaks.push(cutoff);
    let Integral { value, error, converged } =
        integrate_panels(|t| (-t.powf(r)).exp() * (x * t).cos(), &breaks, 0.9 * PI * tol, MAX_SEGMENTS);
    if !converged {
        return Err(MzError::QuadratureFailure { achieved: error / PI });
    }
    Ok(value / PI)
}

/// `w(x) = (1/pi) int_0^inf e^{-t^r} cos(xt) dt` to absolute error `tol`.
///
/// Symmetric by construction: only `|x|` is used.
pub fn stable_density(law: StableLaw, x: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(MzError::InvalidArgument(format!("tolerance {tol} must be positive")));
    }
    let x = x.abs();
    if !law.is_gaussian() && x >= 1.0 {
        if let Some(v) = density_series(law.r, x, tol) {
            return Ok(v);
        }
    }
    density_by_inversion(law.r, x, tol)
}

/// `E|X|^s` by quadrature of `2 int_0^inf x^s w(x) dx`, with the heavy tail
/// beyond the switch point integrated analytically from the expansion.
fn absolute_moment_quadrature(law: StableLaw, s: f64, tol: f64) -> Result<(f64, f64)> {
    let r = law.r;
    let mut a: f64 = 2.0;
    let tail;
    if law.is_gaussian() {
        while a.powf(s + 1.0) * (-a * a / 4.0).exp() > 1e-4 * tol {
            a *= 2.0;
        }
        tail = (0.0, a.powf(s + 1.0) * (-a * a / 4.0).exp());
    } else {
        loop {
            if density_series(r, a, 1e-15).is_some() {
                if let Some(t) = moment_tail_series(r, s, a, 1e-4 * tol) {
                    tail = (t, 1e-4 * tol);
                    break;
                }
            }
            a *= 2.0;
            if a > 1e6 {
                return Err(MzError::QuadratureFailure { achieved: f64::NAN });
            }
        }
    }
    let density_tol = (1e-3 * tol / a.powf(s + 1.0)).max(1e-16);
    let mut breaks = vec![0.0, 0.5, 1.0];
    while *breaks.last().unwrap() < a {
        let next = (breaks.last().unwrap() * 2.0).min(a);
        breaks.push(next);
    }
    let mut failure = None;
    let head = integrate_panels(
        |x| {
            if x == 0.0 {
                return 0.0;
            }
            match stable_density(law, x, density_tol) {
                Ok(w) => 2.0 * x.powf(s) * w,
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::NAN
                }
            }
        },
        &breaks,
        0.5 * tol,
        MAX_SEGMENTS,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let density_error = 2.0 * density_tol * a.powf(s + 1.0) / (s + 1.0);
    let error = head.error + density_error + tail.1;
    if !head.converged || !error.is_finite() {
        return Err(MzError::QuadratureFailure { achieved: error });
    }
    Ok((head.value + tail.0, error))
}

/// Welford accumulator for a sample mean and its standard error.
#[derive(Default, Clone, Copy, Debug)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn standard_error(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt()
    }
}

/// `(mean, se)` of a sample moment mapped through `m -> m^(1/s)` by the delta method.
fn root_of_mean(acc: &Welford, s: f64) -> (f64, f64) {
    let value = acc.mean.powf(1.0 / s);
    let se = if acc.mean > 0.0 { value * acc.standard_error() / (s * acc.mean) } else { 0.0 };
    (value, se)
}

/// `c_{r,s}` by quadrature (error bound `<= tol`) or Monte Carlo.
pub fn stable_moment(law: StableLaw, s: f64, method: MomentMethod, tol: f64, seed: u64) -> Result<MomentValue> {
    law.check_moment(s)?;
    match method {
        MomentMethod::Quadrature => {
            if !(tol > 0.0) {
                return Err(MzError::InvalidArgument(format!("tolerance {tol} must be positive")));
            }
            // Aim well inside the requested band on the s-th power.
            let (moment, err) = absolute_moment_quadrature(law, s, 1e-2 * tol)?;
            let value = moment.powf(1.0 / s);
            let error_estimate = value * err / (s * moment);
            if error_estimate > tol {
                return Err(MzError::QuadratureFailure { achieved: error_estimate });
            }
            Ok(MomentValue { r: law.r, s, value, method, error_estimate, standard_error: None })
        }
        MomentMethod::MonteCarlo { samples } => {
            if samples < 2 {
                return Err(MzError::InvalidArgument("Monte Carlo needs at least 2 samples".into()));
            }
            let mut sampler = StableSampler::new(law, seed, 0);
            let mut acc = Welford::default();
            for _ in 0..samples {
                acc.push(sampler.draw().abs().powf(s));
            }
            let (value, se) = root_of_mean(&acc, s);
            Ok(MomentValue { r: law.r, s, value, method, error_estimate: 3.0 * se, standard_error: Some(se) })
        }
    }
}

/// Chambers-Mallows-Stuck transform for the symmetric law with
/// characteristic function `exp(-|t|^r)`.
fn cms(r: f64, v: f64, w: f64) -> f64 {
    if r == 1.0 {
        return v.tan();
    }
    let a = (r * v).sin() / v.cos().powf(1.0 / r);
    let b = (((1.0 - r) * v).cos() / w).powf((1.0 - r) / r);
    a * b
}

/// Stream of i.i.d. draws from a stable law.
pub struct StableSampler {
    r: f64,
    rng: StreamRng,
}

impl StableSampler {
    pub fn new(law: StableLaw, seed: u64, stream: u64) -> Self {
        Self { r: law.r, rng: rng::stream(seed, stream) }
    }

    pub fn draw(&mut self) -> f64 {
        let u: f64 = self.rng.sample(Open01);
        let e: f64 = self.rng.sample(Open01);
        cms(self.r, PI * (u - 0.5), -e.ln())
    }

    pub fn fill(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.draw();
        }
    }
}

pub fn sample_stable(law: StableLaw, count: usize, seed: u64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(MzError::InvalidArgument("count must be at least 1".into()));
    }
    let mut sampler = StableSampler::new(law, seed, 0);
    let mut out = vec![0.0; count];
    sampler.fill(&mut out);
    Ok(out)
}

/// Quadrature tolerance used when a check needs `c_{r,s}` as ground truth.
const REFERENCE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `(mean |sum a_k w_k|^s)^(1/s)`.
    pub empirical: f64,
    /// `c_{r,s} (sum |a_k|^r)^(1/r)`.
    pub exact: f64,
    pub standard_error: f64,
    pub relative_error: f64,
}

/// Monte Carlo check of `(E|sum a_k w_k|^s)^(1/s) = c_{r,s} (sum |a_k|^r)^(1/r)`.
pub fn check_stable_identity(
    law: StableLaw,
    s: f64,
    coeffs: &[f64],
    sample_count: usize,
    seed: u64,
) -> Result<IdentityCheck> {
    law.check_moment(s)?;
    if coeffs.is_empty() {
        return Err(MzError::InvalidArgument("coefficient list is empty".into()));
    }
    if sample_count < 2 {
        return Err(MzError::InvalidArgument("need at least 2 samples".into()));
    }
    let ell_r: f64 = coeffs.iter().map(|a| a.abs().powf(law.r)).sum::<f64>().powf(1.0 / law.r);
    if ell_r == 0.0 {
        return Ok(IdentityCheck { empirical: 0.0, exact: 0.0, standard_error: 0.0, relative_error: 0.0 });
    }
    let c = stable_moment(law, s, MomentMethod::Quadrature, REFERENCE_TOL, seed)?.value;
    let exact = c * ell_r;
    let mut sampler = StableSampler::new(law, seed, 1);
    let mut acc = Welford::default();
    for _ in 0..sample_count {
        let x: f64 = coeffs.iter().map(|a| a * sampler.draw()).sum();
        acc.push(x.abs().powf(s));
    }
    let (empirical, standard_error) = root_of_mean(&acc, s);
    Ok(IdentityCheck { empirical, exact, standard_error, relative_error: (empirical - exact).abs() / exact })
}

/// Which constant the multilinear stable embedding uses for `(r, p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingRegime {
    /// `0 < p < r < 2` or `0 < p <= r = 2`: `C = c_{r,p}^m`.
    MomentBelowR,
    /// `r = 2 < p`: `C = c_{2,2}^m`.
    GaussianAboveTwo,
    /// `r < 2 <= ...`, `r <= p`: `C = c_{r,s}^m` for the recorded `s < r`.
    HeavyTailed { s: f64 },
}

pub fn embedding_regime(law: StableLaw, p: f64) -> Result<EmbeddingRegime> {
    let r = law.r;
    if !(p > 0.0 && p.is_finite()) {
        return Err(MzError::UnsupportedRegime(format!("p = {p} is outside every embedding case")));
    }
    Ok(if (p < r && r < 2.0) || (p <= r && r == 2.0) {
        EmbeddingRegime::MomentBelowR
    } else if r == 2.0 {
        EmbeddingRegime::GaussianAboveTwo
    } else {
        EmbeddingRegime::HeavyTailed { s: r / 2.0 }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    pub regime: EmbeddingRegime,
    /// `C` in `C (sum |a|^r)^(1/r) <= (E|sum a w...w|^p)^(1/p)`.
    pub constant: f64,
    pub empirical: f64,
    pub standard_error: f64,
    /// `empirical - C (sum |a|^r)^(1/r)`.
    pub margin: f64,
    /// `|X|^p` has finite variance (`r = 2` or `2p < r`); otherwise the
    /// standard error is not meaningful and the sample mean is biased low.
    pub variance_finite: bool,
}

/// Contracts a row-major tensor with one vector per axis, last axis first.
fn full_contraction(coeffs: &[f64], dims: &[usize], vectors: &[Vec<f64>], scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(coeffs);
    for (axis, v) in vectors.iter().enumerate().rev() {
        let d = dims[axis];
        let len = scratch.len() / d;
        for i in 0..len {
            let chunk = &scratch[i * d..(i + 1) * d];
            scratch[i] = chunk.iter().zip(v).map(|(a, b)| a * b).sum();
        }
        scratch.truncate(len);
    }
    scratch[0]
}

/// Monte Carlo margin of the multilinear stable embedding
/// `C (sum |a|^r)^(1/r) <= (E |sum a_{k_1..k_m} w_{k_1} ... w_{k_m}|^p)^(1/p)`
/// with mutually independent stable sequences, one per axis.
pub fn check_embedding_inequality(
    law: StableLaw,
    p: f64,
    coeffs: &[f64],
    dims: &[usize],
    sample_count: usize,
    seed: u64,
) -> Result<EmbeddingCheck> {
    let regime = embedding_regime(law, p)?;
    if dims.is_empty() || dims.iter().product::<usize>() != coeffs.len() {
        return Err(MzError::Shape(format!("{} coefficients do not fill dims {dims:?}", coeffs.len())));
    }
    if sample_count < 2 {
        return Err(MzError::InvalidArgument("need at least 2 samples".into()));
    }
    let m = dims.len() as i32;
    let base = match regime {
        EmbeddingRegime::MomentBelowR => stable_moment(law, p, MomentMethod::Quadrature, REFERENCE_TOL, seed)?,
        EmbeddingRegime::GaussianAboveTwo => stable_moment(law, 2.0, MomentMethod::Quadrature, REFERENCE_TOL, seed)?,
        EmbeddingRegime::HeavyTailed { s } => stable_moment(law, s, MomentMethod::Quadrature, REFERENCE_TOL, seed)?,
    };
    let constant = base.value.powi(m);
    let ell_r: f64 = coeffs.iter().map(|a| a.abs().powf(law.r)).sum::<f64>().powf(1.0 / law.r);

    let mut samplers: Vec<StableSampler> =
        (0..dims.len()).map(|axis| StableSampler::new(law, seed, 1 + axis as u64)).collect();
    let mut vectors: Vec<Vec<f64>> = dims.iter().map(|&d| vec![0.0; d]).collect();
    let mut scratch = Vec::with_capacity(coeffs.len());
    let mut acc = Welford::default();
    for _ in 0..sample_count {
        for (sampler, v) in samplers.iter_mut().zip(vectors.iter_mut()) {
            sampler.fill(v);
        }
        let x = full_contraction(coeffs, dims, &vectors, &mut scratch);
        acc.push(x.abs().powf(p));
    }
    let (empirical, standard_error) = root_of_mean(&acc, p);
    let variance_finite = law.is_gaussian() || 2.0 * p < law.r;
    Ok(EmbeddingCheck { regime, constant, empirical, standard_error, margin: empirical - constant * ell_r, variance_finite })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(r: f64) -> StableLaw {
        StableLaw::new(r).unwrap()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StableLaw::new(0.0).is_err());
        assert!(StableLaw::new(2.5).is_err());
        assert!(stable_density(law(1.0), 0.0, 0.0).is_err());
        assert!(matches!(
            stable_moment(law(1.5), 1.5, MomentMethod::Quadrature, 1e-8, 0),
            Err(MzError::MomentDiverges { .. })
        ));
        assert!(matches!(
            stable_moment(law(1.5), 1.5 - 1e-7, MomentMethod::Quadrature, 1e-8, 0),
            Err(MzError::MomentDiverges { .. })
        ));
        assert!(sample_stable(law(1.0), 0, 1).is_err());
    }

    #[test]
    fn density_closed_forms() {
        let gauss0 = 1.0 / (2.0 * PI.sqrt());
        assert!((stable_density(law(2.0), 0.0, 1e-12).unwrap() - gauss0).abs() < 1e-12);
        assert!((stable_density(law(1.0), 0.0, 1e-12).unwrap() - 1.0 / PI).abs() < 1e-12);
        assert!((stable_density(law(1.0), 1.0, 1e-12).unwrap() - 0.5 / PI).abs() < 1e-12);
    }

    #[test]
    fn density_matches_cauchy_and_gauss_on_a_grid() {
        for i in 0..60 {
            let x = -15.0 + 0.5 * i as f64;
            let cauchy = 1.0 / (PI * (1.0 + x * x));
            let gauss = (-x * x / 4.0).exp() / (2.0 * PI.sqrt());
            assert!((stable_density(law(1.0), x, 1e-12).unwrap() - cauchy).abs() < 1e-12, "x = {x}");
            assert!((stable_density(law(2.0), x, 1e-12).unwrap() - gauss).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn density_is_even() {
        for r in [0.7, 1.3, 1.9] {
            for x in [0.3, 2.0, 7.5] {
                let a = stable_density(law(r), x, 1e-10).unwrap();
                let b = stable_density(law(r), -x, 1e-10).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn series_and_inversion_agree_where_both_apply() {
        for (r, x) in [(1.5, 6.0), (0.8, 3.0), (1.2, 5.0)] {
            let series = density_series(r, x, 1e-13).expect("series converges here");
            let inversion = density_by_inversion(r, x, 1e-13).unwrap();
            assert!((series - inversion).abs() < 1e-12, "r={r} x={x}: {series} vs {inversion}");
        }
    }

    #[test]
    fn gaussian_and_cauchy_moments() {
        let c22 = stable_moment(law(2.0), 2.0, MomentMethod::Quadrature, 1e-8, 0).unwrap();
        assert!((c22.value - 2f64.sqrt()).abs() < 1e-8);
        assert!(c22.error_estimate <= 1e-8);
        let c1 = stable_moment(law(1.0), 0.5, MomentMethod::Quadrature, 1e-8, 0).unwrap();
        assert!((c1.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn moments_increase_with_order() {
        let r = law(1.7);
        let mut last = 0.0;
        for s in [0.2, 0.5, 0.8, 1.1, 1.4, 1.6] {
            let c = stable_moment(r, s, MomentMethod::Quadrature, 1e-8, 0).unwrap().value;
            assert!(c > last, "c_(1.7,{s}) = {c} not above {last}");
            last = c;
        }
    }

    #[test]
    fn gaussian_sampler_variance() {
        let xs = sample_stable(law(2.0), 1_000_000, 1).unwrap();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((var - 2.0).abs() / 2.0 < 0.01, "variance {var}");
    }

    #[test]
    fn cauchy_sampler_median() {
        let mut xs: Vec<f64> = sample_stable(law(1.0), 1_000_000, 1).unwrap().iter().map(|x| x.abs()).collect();
        xs.sort_by(f64::total_cmp);
        let median = xs[xs.len() / 2];
        assert!((median - 1.0).abs() < 0.02, "median {median}");
    }

    #[test]
    fn sampler_is_deterministic() {
        assert_eq!(sample_stable(law(1.3), 100, 9).unwrap(), sample_stable(law(1.3), 100, 9).unwrap());
        assert_ne!(sample_stable(law(1.3), 100, 9).unwrap(), sample_stable(law(1.3), 100, 10).unwrap());
    }

    #[test]
    fn identity_with_zero_coefficients() {
        let c = check_stable_identity(law(1.5), 1.0, &[0.0, 0.0], 10, 1).unwrap();
        assert_eq!(c.relative_error, 0.0);
    }

    #[test]
    fn gaussian_identity_two_terms() {
        // Var(w_1 + w_2) = 4, so the s = 2 root moment is 2 = c_{2,2} * sqrt(2).
        let c = check_stable_identity(law(2.0), 2.0, &[1.0, 1.0], 200_000, 3).unwrap();
        assert!((c.exact - 2.0).abs() < 1e-8);
        assert!(c.relative_error < 0.01);
    }

    #[test]
    fn embedding_regimes() {
        assert_eq!(embedding_regime(law(1.5), 1.0).unwrap(), EmbeddingRegime::MomentBelowR);
        assert_eq!(embedding_regime(law(2.0), 2.0).unwrap(), EmbeddingRegime::MomentBelowR);
        assert_eq!(embedding_regime(law(2.0), 3.0).unwrap(), EmbeddingRegime::GaussianAboveTwo);
        assert_eq!(embedding_regime(law(1.5), 1.5).unwrap(), EmbeddingRegime::HeavyTailed { s: 0.75 });
        assert!(embedding_regime(law(1.5), 0.0).is_err());
        assert!(embedding_regime(law(1.5), f64::INFINITY).is_err());
    }

    #[test]
    fn embedding_single_axis_is_the_identity() {
        let a = [1.0, -2.0, 0.5];
        let e = check_embedding_inequality(law(1.5), 1.0, &a, &[3], 200_000, 5).unwrap();
        assert!(e.margin.abs() < 4.0 * e.standard_error + 1e-3, "margin {} se {}", e.margin, e.standard_error);
    }

    #[test]
    fn embedding_shape_errors() {
        assert!(matches!(
            check_embedding_inequality(law(1.5), 1.0, &[1.0; 3], &[2, 2], 10, 1),
            Err(MzError::Shape(_))
        ));
    }
}
