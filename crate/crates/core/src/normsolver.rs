//! Operator norms `||T|| = sup ||T(f^1, ..., f^m)||_{L^p}` over the unit balls of
//! `L^{q_i}`, exact where the structure allows it and bracketed otherwise, and
//! block-coordinate ascent of the extension left-hand side over families.
//!
//! Everything is reduced to counting measures first: with
//! `C'[j, i] = nu_j^(1/p) C[j, i] prod_s mu_{s,i_s}^(-1/q_s)` the map
//! `f -> mu^(1/q) f` is an isometry onto `l^q`, so `||T|| = ||C'||` on counting
//! measures. Witnesses are mapped back before they are returned.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MzError, Result};
use crate::multiop::{contract_axis, transform_axis, MultilinearOperator};
use crate::rng;
use crate::tensorspace::{ell_norm, lp_norm, mixed_norm, require_banach, DiscreteMeasure, Exponent, FunctionFamily};

/// Vertex enumeration refuses sign spaces larger than `2^MAX_SIGN_BITS`.
pub const MAX_SIGN_BITS: u32 = 25;
/// Relative gain below which ascent is considered converged.
pub const ASCENT_TOL: f64 = 1e-10;
/// Relative padding applied to exact values used as upper bounds.
pub const EXACT_PAD: f64 = 1e-12;
const MAX_FLATTEN_ENTRIES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMethod {
    Exact,
    VertexEnum,
    Spectral,
    Alternating,
    HolderBound,
}

/// Which bound produced `upper`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperMethod {
    Exact,
    Holder,
    Flattening,
    Schur,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormBracket {
    pub lower: f64,
    pub upper: f64,
    /// One input per slot, on the operator's own measures.
    pub lower_witness: Vec<Vec<f64>>,
    pub method: NormMethod,
    pub upper_method: UpperMethod,
    pub converged: bool,
}

impl NormBracket {
    pub fn is_exact(&self) -> bool {
        matches!(self.method, NormMethod::Exact | NormMethod::VertexEnum | NormMethod::Spectral)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Use an exact method when one applies.
    Auto,
    /// Always bracket by ascent and coefficient bounds.
    Bracket,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub iterations: usize,
    pub restarts: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { iterations: 500, restarts: 8 }
    }
}

fn sign(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// `argmax_{||x||_q <= 1} <v, x>` on counting measure.
///
/// `q = inf` gives the sign vector with `sign(0) = +1`; `q = 1` gives a signed
/// indicator at the first index of largest modulus.
pub fn dual_align(v: &[f64], q: Exponent) -> Result<Vec<f64>> {
    require_banach(q, "dual alignment")?;
    let scale = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(MzError::UndefinedAlignment);
    }
    Ok(match q {
        Exponent::Infinite => v.iter().map(|&x| sign(x)).collect(),
        Exponent::Finite(qv) if qv == 1.0 => {
            let k = v.iter().position(|x| x.abs() == scale).expect("max is attained");
            let mut out = vec![0.0; v.len()];
            out[k] = sign(v[k]);
            out
        }
        Exponent::Finite(qv) => {
            let qd = qv / (qv - 1.0);
            let y: Vec<f64> = v.iter().map(|&x| sign(x) * (x.abs() / scale).powf(qd - 1.0)).collect();
            let norm = ell_norm(&y, q);
            y.into_iter().map(|x| x / norm).collect()
        }
    })
}

/// Mixed alignment: `phi[k][i]` is maximised against `X` in the unit ball of
/// `l^outer_i(l^inner_k)`.
fn mixed_align(phi: &[Vec<f64>], outer: Exponent, inner: Exponent) -> Result<Vec<Vec<f64>>> {
    let n = phi.len();
    let d = phi[0].len();
    let inner_dual = inner.dual()?;
    let mut column = vec![0.0; n];
    let mut norms = vec![0.0; d];
    for (i, c) in norms.iter_mut().enumerate() {
        for (slot, row) in column.iter_mut().zip(phi) {
            *slot = row[i];
        }
        *c = ell_norm(&column, inner_dual);
    }
    let u = dual_align(&norms, outer)?;
    let mut out = vec![vec![0.0; d]; n];
    for i in 0..d {
        if u[i] == 0.0 || norms[i] == 0.0 {
            continue;
        }
        for (slot, row) in column.iter_mut().zip(phi) {
            *slot = row[i];
        }
        let x = dual_align(&column, inner)?;
        for (row, xk) in out.iter_mut().zip(x) {
            row[i] = u[i] * xk;
        }
    }
    Ok(out)
}

/// Coefficients in counting-measure coordinates.
struct Normalized {
    data: Vec<f64>,
    shape: Vec<usize>,
    /// `mu_s^(1/q_s)` per input slot: multiply to go to counting coordinates.
    to_counting: Vec<Vec<f64>>,
}

fn powers(mu: &DiscreteMeasure, e: f64) -> Vec<f64> {
    mu.weights().iter().map(|w| w.powf(e)).collect()
}

impl Normalized {
    fn new(t: &MultilinearOperator, q: &[Exponent], p: Exponent) -> Self {
        let shape = t.shape();
        let out_scale = powers(t.output_measure(), p.recip());
        let to_counting: Vec<Vec<f64>> =
            t.input_measures().iter().zip(q).map(|(mu, qs)| powers(mu, qs.recip())).collect();
        let mut data = t.coeffs().to_vec();
        let mut idx = vec![0usize; shape.len()];
        for c in data.iter_mut() {
            let mut factor = out_scale[idx[0]];
            for s in 1..shape.len() {
                factor /= to_counting[s - 1][idx[s]];
            }
            *c *= factor;
            for a in (0..shape.len()).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        Self { data, shape, to_counting }
    }

    fn arity(&self) -> usize {
        self.shape.len() - 1
    }

    fn out_dim(&self) -> usize {
        self.shape[0]
    }

    fn slice(&self, j: usize) -> &[f64] {
        let len = self.data.len() / self.out_dim();
        &self.data[j * len..(j + 1) * len]
    }

    fn to_original(&self, slot: usize, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.to_counting[slot]).map(|(v, s)| v / s).collect()
    }

    fn family_to_counting(&self, slot: usize, family: &FunctionFamily) -> Vec<Vec<f64>> {
        family
            .values()
            .iter()
            .map(|f| f.iter().zip(&self.to_counting[slot]).map(|(v, s)| v * s).collect())
            .collect()
    }

    /// Values tensor `(out, n_1, ..., n_m)` for families in counting coordinates.
    fn values(&self, families: &[Vec<Vec<f64>>]) -> (Vec<f64>, Vec<usize>) {
        self.values_except(families, None)
    }

    fn values_except(&self, families: &[Vec<Vec<f64>>], skip: Option<usize>) -> (Vec<f64>, Vec<usize>) {
        let mut shape = self.shape.clone();
        let mut data = self.data.clone();
        for (s, fam) in families.iter().enumerate() {
            if Some(s) == skip {
                continue;
            }
            data = transform_axis(&data, &shape, s + 1, fam);
            shape[s + 1] = fam.len();
        }
        (data, shape)
    }
}

/// `|| (||V[j, .]||_r)_j ||_p`.
fn lhs_of_values(values: &[f64], out_dim: usize, r: Exponent, p: Exponent) -> f64 {
    let block = values.len() / out_dim;
    let rows: Vec<f64> = values.chunks(block).map(|row| ell_norm(row, r)).collect();
    ell_norm(&rows, p)
}

/// Block-coordinate ascent of `|| (sum_k |T(x_k)|^r)^(1/r) ||_p` over families
/// with unit `l^{q_s}(l^r)` norm, in counting coordinates.
fn ascend(
    norm: &Normalized,
    q: &[Exponent],
    p: Exponent,
    r: Exponent,
    mut families: Vec<Vec<Vec<f64>>>,
    iterations: usize,
) -> (Vec<Vec<Vec<f64>>>, f64, bool) {
    for (fam, qs) in families.iter_mut().zip(q) {
        project(fam, *qs, r);
    }
    let out = norm.out_dim();
    let (mut values, mut vshape) = norm.values(&families);
    let mut value = lhs_of_values(&values, out, r, p);
    let mut converged = false;
    let (Ok(p_dual), Ok(r_dual)) = (p.dual(), r.dual()) else {
        return (families, value, false);
    };
    for _ in 0..iterations {
        let before = value;
        for s in 0..norm.arity() {
            // Align G with the current values (outer over outputs, inner over multi-indices).
            let block = values.len() / out;
            let phi_g: Vec<Vec<f64>> = (0..block).map(|k| (0..out).map(|j| values[j * block + k]).collect()).collect();
            let Ok(g_t) = mixed_align(&phi_g, p_dual, r_dual) else {
                return (families, value, converged);
            };
            let mut g = vec![0.0; values.len()];
            for (k, row) in g_t.iter().enumerate() {
                for (j, x) in row.iter().enumerate() {
                    g[j * block + k] = *x;
                }
            }
            let (partial, pshape) = norm.values_except(&families, Some(s));
            let phi = slot_functional(&g, &vshape, &partial, &pshape, s + 1);
            if let Ok(update) = mixed_align(&phi, q[s], r) {
                let previous = std::mem::replace(&mut families[s], update);
                let (v2, shape2) = norm.values(&families);
                let candidate = lhs_of_values(&v2, out, r, p);
                if candidate + 1e-15 * value.abs() >= value {
                    values = v2;
                    vshape = shape2;
                    value = candidate;
                } else {
                    families[s] = previous;
                }
            }
        }
        if value <= before * (1.0 + ASCENT_TOL) {
            converged = true;
            break;
        }
    }
    (families, value, converged)
}

/// `phi[k][i] = sum_{a,b} g[a, k, b] partial[a, i, b]` along `axis`.
fn slot_functional(g: &[f64], gshape: &[usize], partial: &[f64], pshape: &[usize], axis: usize) -> Vec<Vec<f64>> {
    let pre: usize = gshape[..axis].iter().product();
    let post: usize = gshape[axis + 1..].iter().product();
    let n = gshape[axis];
    let d = pshape[axis];
    let mut phi = vec![vec![0.0; d]; n];
    for a in 0..pre {
        for (k, row) in phi.iter_mut().enumerate() {
            let gk = &g[(a * n + k) * post..(a * n + k + 1) * post];
            for (i, slot) in row.iter_mut().enumerate() {
                let pi = &partial[(a * d + i) * post..(a * d + i + 1) * post];
                *slot += gk.iter().zip(pi).map(|(x, y)| x * y).sum::<f64>();
            }
        }
    }
    phi
}

fn project(family: &mut [Vec<f64>], q: Exponent, r: Exponent) {
    let d = family[0].len();
    let fam = FunctionFamily::new(family.to_vec(), DiscreteMeasure::counting(d)).expect("rectangular family");
    let norm = mixed_norm(&fam, r, q).unwrap_or(0.0);
    if norm > 0.0 && norm.is_finite() {
        for row in family.iter_mut() {
            for x in row.iter_mut() {
                *x /= norm;
            }
        }
    }
}

fn random_family(n: usize, d: usize, rng: &mut rng::StreamRng) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

fn check_exponents(t: &MultilinearOperator, q: &[Exponent], p: Exponent) -> Result<()> {
    if q.len() != t.arity() {
        return Err(MzError::Shape(format!("{} input exponents for arity {}", q.len(), t.arity())));
    }
    for qs in q {
        require_banach(*qs, "operator norm")?;
    }
    require_banach(p, "operator norm")
}

enum ExactMode {
    Vertex,
    Columns,
    Rows,
    Spectral,
    SliceSpectral,
}

fn exact_mode(norm: &Normalized, q: &[Exponent], p: Exponent) -> Option<ExactMode> {
    let m = norm.arity();
    let scalar_or_sup = norm.out_dim() == 1 || p.is_infinite();
    if m == 1 {
        if q[0] == Exponent::ONE {
            return Some(ExactMode::Columns);
        }
        if scalar_or_sup {
            return Some(ExactMode::Rows);
        }
        if q[0] == Exponent::TWO && p == Exponent::TWO {
            return Some(ExactMode::Spectral);
        }
        return None;
    }
    if scalar_or_sup && q.iter().all(|x| x.is_infinite()) {
        return Some(ExactMode::Vertex);
    }
    if m == 2 && scalar_or_sup && q.iter().all(|x| *x == Exponent::TWO) {
        return Some(ExactMode::SliceSpectral);
    }
    None
}

/// `max_{y in {+-1}^a} ||A^T y||_1` for a row-major `a x b` matrix, with the
/// maximising `y` (first entry fixed to `+1`). Gray-code order.
pub fn max_sign_l1(a: &[f64], rows: usize, cols: usize) -> Result<(f64, Vec<f64>)> {
    if rows as u32 > MAX_SIGN_BITS {
        return Err(MzError::EnumerationTooLarge { bits: rows as u32 });
    }
    let mut y = vec![1.0; rows];
    let mut v: Vec<f64> = (0..cols).map(|c| (0..rows).map(|r| a[r * cols + c]).sum()).collect();
    let mut best = v.iter().map(|x| x.abs()).sum::<f64>();
    let mut best_y = y.clone();
    let steps: u64 = 1 << rows.saturating_sub(1);
    for g in 1..steps {
        let bit = g.trailing_zeros() as usize + 1;
        y[bit] = -y[bit];
        let row = &a[bit * cols..(bit + 1) * cols];
        for (vc, x) in v.iter_mut().zip(row) {
            *vc += 2.0 * y[bit] * x;
        }
        let value: f64 = v.iter().map(|x| x.abs()).sum();
        if value > best {
            best = value;
            best_y.clone_from(&y);
        }
    }
    // Recompute at the optimum to shed incremental drift.
    let exact: f64 = (0..cols)
        .map(|c| (0..rows).map(|r| best_y[r] * a[r * cols + c]).sum::<f64>().abs())
        .sum();
    Ok((exact, best_y))
}

/// Norm of a scalar multilinear form on `l^inf x ... x l^inf` by enumerating
/// the signs of every slot but the largest one.
fn form_sup_norm(slice: &[f64], dims: &[usize]) -> Result<(f64, Vec<Vec<f64>>)> {
    let m = dims.len();
    let free = (0..m).max_by_key(|&s| (dims[s], s)).expect("at least one slot");
    let bits: usize = dims.iter().enumerate().filter(|(s, _)| *s != free).map(|(_, d)| d).sum();
    if bits as u32 > MAX_SIGN_BITS {
        return Err(MzError::EnumerationTooLarge { bits: bits as u32 });
    }
    // Move the free slot last.
    let mut perm: Vec<usize> = (0..m).filter(|&s| s != free).collect();
    perm.push(free);
    let data = permute(slice, dims, &perm);
    let pdims: Vec<usize> = perm.iter().map(|&s| dims[s]).collect();
    let last = pdims[m - 1];
    let mut witness_p: Vec<Vec<f64>>;
    let value;
    if m == 1 {
        value = data.iter().map(|x| x.abs()).sum();
        witness_p = vec![data.iter().map(|&x| sign(x)).collect()];
    } else if m == 2 {
        let (v, y) = max_sign_l1(&data, pdims[0], last)?;
        let contracted = contract_axis(&data, &pdims, 0, &y);
        value = v;
        witness_p = vec![y, contracted.iter().map(|&x| sign(x)).collect()];
    } else {
        let mut best = -1.0;
        let mut best_signs = vec![];
        let mut signs: Vec<Vec<f64>> = pdims[..m - 1].iter().map(|&d| vec![1.0; d]).collect();
        let total: u64 = 1 << bits.saturating_sub(1);
        for code in 0..total {
            let mut c = code;
            for (s, sv) in signs.iter_mut().enumerate() {
                for (i, x) in sv.iter_mut().enumerate() {
                    if s == 0 && i == 0 {
                        *x = 1.0;
                        continue;
                    }
                    *x = if c & 1 == 1 { -1.0 } else { 1.0 };
                    c >>= 1;
                }
            }
            let v = contract_all_but_last(&data, &pdims, &signs);
            let value: f64 = v.iter().map(|x| x.abs()).sum();
            if value > best {
                best = value;
                best_signs = signs.clone();
            }
        }
        let v = contract_all_but_last(&data, &pdims, &best_signs);
        value = v.iter().map(|x| x.abs()).sum();
        witness_p = best_signs;
        witness_p.push(v.iter().map(|&x| sign(x)).collect());
    }
    let mut witness = vec![vec![]; m];
    for (pos, &s) in perm.iter().enumerate() {
        witness[s] = std::mem::take(&mut witness_p[pos]);
    }
    Ok((value, witness))
}

fn contract_all_but_last(data: &[f64], dims: &[usize], vectors: &[Vec<f64>]) -> Vec<f64> {
    let mut cur = data.to_vec();
    let mut shape = dims.to_vec();
    for v in vectors {
        cur = contract_axis(&cur, &shape, 0, v);
        shape.remove(0);
    }
    cur
}

/// Row-major transpose: axis `perm[k]` of the input becomes axis `k`.
pub(crate) fn permute(data: &[f64], dims: &[usize], perm: &[usize]) -> Vec<f64> {
    let n = dims.len();
    let mut strides = vec![1usize; n];
    for a in (0..n.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * dims[a + 1];
    }
    let new_dims: Vec<usize> = perm.iter().map(|&a| dims[a]).collect();
    let mut out = Vec::with_capacity(data.len());
    let mut idx = vec![0usize; n];
    for _ in 0..data.len() {
        let offset: usize = (0..n).map(|k| idx[k] * strides[perm[k]]).sum();
        out.push(data[offset]);
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < new_dims[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

/// Largest singular value with left and right singular vectors.
fn top_singular(a: &[f64], rows: usize, cols: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let m = DMatrix::from_row_slice(rows, cols, a);
    let svd = m.svd(true, true);
    let (k, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &s)| if s > best.1 { (i, s) } else { best });
    let u = svd.u.expect("requested").column(k).iter().copied().collect();
    let v = svd.v_t.expect("requested").row(k).iter().copied().collect();
    (sigma, u, v)
}

fn spectral_norm(a: &[f64], rows: usize, cols: usize) -> f64 {
    DMatrix::from_row_slice(rows, cols, a).svd(false, false).singular_values.max()
}

fn exact_norm(norm: &Normalized, mode: &ExactMode, q: &[Exponent], p: Exponent) -> Result<(f64, Vec<Vec<f64>>, NormMethod)> {
    let out = norm.out_dim();
    let dims = &norm.shape[1..];
    match mode {
        ExactMode::Columns => {
            let d = dims[0];
            let (i, v) = (0..d)
                .map(|i| {
                    let col: Vec<f64> = (0..out).map(|j| norm.data[j * d + i]).collect();
                    (i, ell_norm(&col, p))
                })
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            let mut x = vec![0.0; d];
            x[i] = 1.0;
            Ok((v, vec![x], NormMethod::Exact))
        }
        ExactMode::Rows => {
            let qd = q[0].dual()?;
            let (j, v) = (0..out)
                .map(|j| (j, ell_norm(norm.slice(j), qd)))
                .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
            let x = if v > 0.0 { dual_align(norm.slice(j), q[0])? } else { unit(dims[0]) };
            Ok((v, vec![x], NormMethod::Exact))
        }
        ExactMode::Spectral => {
            let (s, _, v) = top_singular(&norm.data, out, dims[0]);
            Ok((s, vec![v], NormMethod::Spectral))
        }
        ExactMode::SliceSpectral => {
            let mut best = (-1.0, vec![]);
            for j in 0..out {
                let (s, u, v) = top_singular(norm.slice(j), dims[0], dims[1]);
                if s > best.0 {
                    best = (s, vec![u, v]);
                }
            }
            Ok((best.0, best.1, NormMethod::Spectral))
        }
        ExactMode::Vertex => {
            let mut best: (f64, Vec<Vec<f64>>) = (-1.0, vec![]);
            for j in 0..out {
                let (v, w) = form_sup_norm(norm.slice(j), dims)?;
                if v > best.0 {
                    best = (v, w);
                }
            }
            Ok((best.0, best.1, NormMethod::VertexEnum))
        }
    }
}

fn unit(d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    x[0] = 1.0;
    x
}

/// `sup_{||x||_e <= 1} ||x||_2` on `d` atoms.
fn l2_embedding(e: Exponent, d: usize) -> f64 {
    match e {
        Exponent::Infinite => (d as f64).sqrt(),
        Exponent::Finite(v) if v <= 2.0 => 1.0,
        Exponent::Finite(v) => (d as f64).powf(0.5 - 1.0 / v),
    }
}

/// `l^e` norm along `axis` of a nonnegative tensor.
fn reduce_axis(data: &[f64], shape: &[usize], axis: usize, e: Exponent) -> Vec<f64> {
    let pre: usize = shape[..axis].iter().product();
    let d = shape[axis];
    let post: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; pre * post];
    let mut column = vec![0.0; d];
    for a in 0..pre {
        for b in 0..post {
            for (i, c) in column.iter_mut().enumerate() {
                *c = data[(a * d + i) * post + b];
            }
            out[a * post + b] = ell_norm(&column, e);
        }
    }
    out
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = vec![];
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Iterated Hoelder bound: reduce `|C'|` one axis at a time with the dual
/// norm of that slot's ball, minimised over reduction orders.
fn holder_bound(norm: &Normalized, q: &[Exponent], p: Exponent) -> Result<f64> {
    let axes = norm.shape.len();
    let mut exps = vec![p];
    for qs in q {
        exps.push(qs.dual()?);
    }
    let abs: Vec<f64> = norm.data.iter().map(|x| x.abs()).collect();
    let orders = if axes <= 6 {
        permutations(axes)
    } else {
        vec![(0..axes).collect(), (0..axes).rev().collect()]
    };
    let mut best = f64::INFINITY;
    for order in orders {
        let mut data = abs.clone();
        let mut shape = norm.shape.clone();
        let mut alive: Vec<usize> = (0..axes).collect();
        for axis in order {
            let pos = alive.iter().position(|&a| a == axis).expect("axis still present");
            data = reduce_axis(&data, &shape, pos, exps[axis]);
            shape.remove(pos);
            alive.remove(pos);
        }
        best = best.min(data[0]);
    }
    Ok(best)
}

/// Flattening bound: for each split of the axes into two groups, the largest
/// singular value of the resulting matrix times the `l^2` embedding constants
/// of every slot's ball.
fn flattening_bound(norm: &Normalized, q: &[Exponent], p: Exponent) -> Result<f64> {
    let axes = norm.shape.len();
    let mut balls = vec![p.dual()?];
    balls.extend_from_slice(q);
    let embed: f64 = balls.iter().zip(&norm.shape).map(|(e, &d)| l2_embedding(*e, d)).product();
    if norm.data.len() > MAX_FLATTEN_ENTRIES {
        return Ok(f64::INFINITY);
    }
    let mut best = f64::INFINITY;
    // Axis 0 always on the row side; the column side must be nonempty.
    for mask in 1u32..(1 << (axes - 1)) {
        let cols_axes: Vec<usize> = (1..axes).filter(|a| mask & (1 << (a - 1)) != 0).collect();
        let rows_axes: Vec<usize> = (0..axes).filter(|a| !cols_axes.contains(a)).collect();
        let rows: usize = rows_axes.iter().map(|&a| norm.shape[a]).product();
        let cols: usize = cols_axes.iter().map(|&a| norm.shape[a]).product();
        let perm: Vec<usize> = rows_axes.iter().chain(&cols_axes).copied().collect();
        let data = permute(&norm.data, &norm.shape, &perm);
        best = best.min(spectral_norm(&data, rows, cols) * embed);
    }
    Ok(best)
}

/// Schur test for linear maps with `p = q`: `||A|| <= R^(1 - 1/p) C^(1/p)` from
/// the largest absolute row and column sums.
fn schur_bound(norm: &Normalized, q: &[Exponent], p: Exponent) -> Option<f64> {
    if norm.arity() != 1 || q[0] != p {
        return None;
    }
    let (out, d) = (norm.shape[0], norm.shape[1]);
    let row = (0..out).map(|j| norm.slice(j).iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
    let col = (0..d).map(|i| (0..out).map(|j| norm.data[j * d + i].abs()).sum::<f64>()).fold(0.0, f64::max);
    let a = p.recip();
    Some(row.powf(1.0 - a) * col.powf(a))
}

/// Best sound upper bound available without an exact method.
fn coefficient_upper(norm: &Normalized, q: &[Exponent], p: Exponent) -> Result<(f64, UpperMethod)> {
    let mut best = (holder_bound(norm, q, p)?, UpperMethod::Holder);
    let flat = flattening_bound(norm, q, p)?;
    if flat < best.0 {
        best = (flat, UpperMethod::Flattening);
    }
    if let Some(s) = schur_bound(norm, q, p) {
        if s < best.0 {
            best = (s, UpperMethod::Schur);
        }
    }
    Ok(best)
}

/// `||T(f)||_{L^p} / prod ||f_s||_{L^{q_s}}`.
pub fn evaluate_ratio(t: &MultilinearOperator, q: &[Exponent], p: Exponent, inputs: &[Vec<f64>]) -> Result<f64> {
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let num = lp_norm(&t.apply(&refs)?, p, t.output_measure())?;
    let mut den = 1.0;
    for ((f, mu), qs) in inputs.iter().zip(t.input_measures()).zip(q) {
        den *= lp_norm(f, *qs, mu)?;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

/// `||T||` from `L^{q_1} x ... x L^{q_m}` to `L^p`.
pub fn operator_norm(
    t: &MultilinearOperator,
    q: &[Exponent],
    p: Exponent,
    mode: NormMode,
    budget: Budget,
    seed: u64,
) -> Result<NormBracket> {
    check_exponents(t, q, p)?;
    let norm = Normalized::new(t, q, p);
    if mode == NormMode::Auto {
        if let Some(em) = exact_mode(&norm, q, p) {
            let (value, witness, method) = exact_norm(&norm, &em, q, p)?;
            let witness: Vec<Vec<f64>> = witness.iter().enumerate().map(|(s, x)| norm.to_original(s, x)).collect();
            let lower = evaluate_ratio(t, q, p, &witness)?;
            return Ok(NormBracket {
                lower,
                upper: value.max(lower) * (1.0 + EXACT_PAD),
                lower_witness: witness,
                method,
                upper_method: UpperMethod::Exact,
                converged: true,
            });
        }
    }
    let (upper, upper_method) = coefficient_upper(&norm, q, p)?;
    let dims = norm.shape[1..].to_vec();
    let mut best: Option<(f64, Vec<Vec<f64>>, bool)> = None;
    let mut starts: Vec<Vec<Vec<Vec<f64>>>> = vec![dims.iter().map(|&d| vec![vec![1.0; d]]).collect()];
    for restart in 0..budget.restarts {
        let mut r = rng::stream(seed, restart as u64);
        starts.push(dims.iter().map(|&d| random_family(1, d, &mut r)).collect());
    }
    for start in starts {
        let (fams, value, converged) = ascend(&norm, q, p, Exponent::TWO, start, budget.iterations);
        if best.as_ref().map_or(true, |b| value > b.0) {
            best = Some((value, fams.into_iter().map(|mut f| f.remove(0)).collect(), converged));
        }
    }
    let (_, witness, converged) = best.expect("at least one start");
    let witness: Vec<Vec<f64>> = witness.iter().enumerate().map(|(s, x)| norm.to_original(s, x)).collect();
    let lower = evaluate_ratio(t, q, p, &witness)?;
    Ok(NormBracket {
        lower,
        upper: upper.max(lower),
        lower_witness: witness,
        method: NormMethod::Alternating,
        upper_method,
        converged,
    })
}

/// Whether [`operator_norm`] has an exact method for these exponents.
pub fn has_exact_mode(t: &MultilinearOperator, q: &[Exponent], p: Exponent) -> Result<bool> {
    check_exponents(t, q, p)?;
    Ok(exact_mode(&Normalized::new(t, q, p), q, p).is_some())
}

/// A sound upper bound on `||T||` without running ascent: the padded exact
/// value when available, the best coefficient bound otherwise.
pub fn norm_upper_bound(t: &MultilinearOperator, q: &[Exponent], p: Exponent) -> Result<(f64, UpperMethod)> {
    check_exponents(t, q, p)?;
    let norm = Normalized::new(t, q, p);
    if let Some(em) = exact_mode(&norm, q, p) {
        let (value, _, _) = exact_norm(&norm, &em, q, p)?;
        return Ok((value * (1.0 + EXACT_PAD), UpperMethod::Exact));
    }
    coefficient_upper(&norm, q, p)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilyAscent {
    /// Families with unit `|| (sum_k |f_k|^r)^(1/r) ||_{L^{q_s}}`.
    pub families: Vec<FunctionFamily>,
    /// Extension left-hand side at `families`.
    pub lhs: f64,
    pub converged: bool,
}

/// Maximises the extension left-hand side over families of `n_funcs`
/// functions per slot with unit mixed norms. Starts from `init` (if given)
/// and from `budget.restarts` random families; the best result survives.
#[allow(clippy::too_many_arguments)]
pub fn family_ascent(
    t: &MultilinearOperator,
    q: &[Exponent],
    p: Exponent,
    r: Exponent,
    n_funcs: usize,
    budget: Budget,
    seed: u64,
    init: Option<&[FunctionFamily]>,
) -> Result<FamilyAscent> {
    check_exponents(t, q, p)?;
    require_banach(r, "family ascent")?;
    if n_funcs == 0 {
        return Err(MzError::InvalidArgument("n_funcs must be at least 1".into()));
    }
    let norm = Normalized::new(t, q, p);
    let dims = norm.shape[1..].to_vec();
    let mut starts: Vec<Vec<Vec<Vec<f64>>>> = vec![];
    if let Some(init) = init {
        if init.len() != t.arity() {
            return Err(MzError::Shape(format!("{} initial families for arity {}", init.len(), t.arity())));
        }
        starts.push(init.iter().enumerate().map(|(s, f)| norm.family_to_counting(s, f)).collect());
    }
    for restart in 0..budget.restarts {
        let mut r = rng::stream(seed, restart as u64);
        starts.push(dims.iter().map(|&d| random_family(n_funcs, d, &mut r)).collect());
    }
    if starts.is_empty() {
        return Err(MzError::InvalidArgument("no starting point: pass init or restarts >= 1".into()));
    }
    let mut best: Option<(f64, Vec<Vec<Vec<f64>>>, bool)> = None;
    for start in starts {
        let (fams, value, converged) = ascend(&norm, q, p, r, start, budget.iterations);
        if best.as_ref().map_or(true, |b| value > b.0) {
            best = Some((value, fams, converged));
        }
    }
    let (_, fams, converged) = best.expect("at least one start");
    let mut families = Vec::with_capacity(fams.len());
    for (s, fam) in fams.iter().enumerate() {
        let values = fam.iter().map(|row| norm.to_original(s, row)).collect();
        let f = FunctionFamily::new(values, t.input_measures()[s].clone())?;
        let mn = mixed_norm(&f, r, q[s])?;
        families.push(if mn > 0.0 { f.scaled(1.0 / mn) } else { f });
    }
    let lhs = t.extension_lhs(&families, r, p)?;
    Ok(FamilyAscent { families, lhs, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(v: f64) -> Exponent {
        Exponent::new(v).unwrap()
    }

    fn inf() -> Exponent {
        Exponent::Infinite
    }

    fn sylvester(n: usize) -> Vec<f64> {
        let mut h = vec![1.0];
        let mut size = 1;
        while size < n {
            let mut next = vec![0.0; 4 * size * size];
            for i in 0..size {
                for j in 0..size {
                    let v = h[i * size + j];
                    next[i * 2 * size + j] = v;
                    next[i * 2 * size + j + size] = v;
                    next[(i + size) * 2 * size + j] = v;
                    next[(i + size) * 2 * size + j + size] = -v;
                }
            }
            h = next;
            size *= 2;
        }
        h
    }

    #[test]
    fn dual_align_examples() {
        let x = dual_align(&[3.0, 4.0], e(2.0)).unwrap();
        assert!((x[0] - 0.6).abs() < 1e-15 && (x[1] - 0.8).abs() < 1e-15);
        assert_eq!(dual_align(&[1.0, -2.0], inf()).unwrap(), vec![1.0, -1.0]);
        assert_eq!(dual_align(&[1.0, -2.0], e(1.0)).unwrap(), vec![0.0, -1.0]);
        assert_eq!(dual_align(&[0.0, 2.0, -2.0], e(1.0)).unwrap(), vec![0.0, 1.0, 0.0]);
        assert_eq!(dual_align(&[0.0, -1.0], inf()).unwrap(), vec![1.0, -1.0]);
        assert_eq!(dual_align(&[0.0, 0.0], e(3.0)), Err(MzError::UndefinedAlignment));
    }

    #[test]
    fn dual_align_attains_the_dual_norm() {
        let v = [0.3, -1.2, 2.0, 0.0, -0.7];
        for q in [1.0, 1.3, 2.0, 3.5, 10.0] {
            let x = dual_align(&v, e(q)).unwrap();
            assert!((ell_norm(&x, e(q)) - 1.0).abs() < 1e-12);
            let pairing: f64 = v.iter().zip(&x).map(|(a, b)| a * b).sum();
            assert!((pairing - ell_norm(&v, e(q).dual().unwrap())).abs() < 1e-12);
        }
    }

    #[test]
    fn hadamard_vertex_norms() {
        let h2 = MultilinearOperator::form(sylvester(2), &[2, 2]).unwrap();
        let b = operator_norm(&h2, &[inf(), inf()], inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        assert_eq!(b.method, NormMethod::VertexEnum);
        assert!((b.lower - 2.0).abs() < 1e-12);
        let h4 = MultilinearOperator::form(sylvester(4), &[4, 4]).unwrap();
        let b = operator_norm(&h4, &[inf(), inf()], e(1.0), NormMode::Auto, Budget::default(), 0).unwrap();
        assert!((b.lower - 8.0).abs() < 1e-12);
        assert!(b.upper >= b.lower && b.upper - b.lower < 1e-10);
    }

    #[test]
    fn identity_norm_is_one() {
        let n = 4;
        let mut id = vec![0.0; n * n];
        for i in 0..n {
            id[i * n + i] = 1.0;
        }
        let t = MultilinearOperator::with_counting(id, n, &[n]).unwrap();
        for q in [1.0, 1.5, 2.0, 3.0, 7.0] {
            let b = operator_norm(&t, &[e(q)], e(q), NormMode::Auto, Budget::default(), 1).unwrap();
            assert!((b.lower - 1.0).abs() < 1e-9, "q = {q}: {b:?}");
            assert!((b.upper - 1.0).abs() < 1e-9, "q = {q}: {b:?}");
        }
        let b = operator_norm(&t, &[inf()], inf(), NormMode::Auto, Budget::default(), 1).unwrap();
        assert!((b.lower - 1.0).abs() < 1e-12 && (b.upper - 1.0).abs() < 1e-9);
    }

    fn random_coeffs(len: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::stream(seed, 99);
        (0..len).map(|_| r.gen_range(-1.0..1.0)).collect()
    }

    /// Independent reference: every `y in {+-1}^a`, no Gray code, no symmetry.
    fn brute_sign_l1(a: &[f64], rows: usize, cols: usize) -> f64 {
        let mut best: f64 = 0.0;
        for code in 0u32..(1 << rows) {
            let y: Vec<f64> = (0..rows).map(|i| if code >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let v: f64 = (0..cols).map(|c| (0..rows).map(|r| y[r] * a[r * cols + c]).sum::<f64>().abs()).sum();
            best = best.max(v);
        }
        best
    }

    #[test]
    fn gray_code_matches_brute_force() {
        for seed in 0..10 {
            let a = random_coeffs(7 * 5, seed);
            let (v, _) = max_sign_l1(&a, 7, 5).unwrap();
            assert!((v - brute_sign_l1(&a, 7, 5)).abs() < 1e-12);
            let t = MultilinearOperator::form(a.clone(), &[7, 5]).unwrap();
            let b = operator_norm(&t, &[inf(), inf()], e(2.0), NormMode::Auto, Budget::default(), 0).unwrap();
            assert!((b.lower - brute_sign_l1(&a, 7, 5)).abs() < 1e-12);
        }
    }

    #[test]
    fn trilinear_vertex_matches_brute_force() {
        let dims = [3, 2, 3];
        let a = random_coeffs(18, 4);
        let t = MultilinearOperator::form(a.clone(), &dims).unwrap();
        let b = operator_norm(&t, &[inf(); 3], inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        let mut best: f64 = 0.0;
        for code in 0u32..(1 << 8) {
            let s: Vec<f64> = (0..8).map(|i| if code >> i & 1 == 1 { -1.0 } else { 1.0 }).collect();
            let mut total = 0.0;
            for i in 0..3 {
                for j in 0..2 {
                    for k in 0..3 {
                        total += a[i * 6 + j * 3 + k] * s[i] * s[3 + j] * s[5 + k];
                    }
                }
            }
            best = best.max(total.abs());
        }
        assert!((b.lower - best).abs() < 1e-12);
    }

    #[test]
    fn enumeration_guard() {
        let t = MultilinearOperator::form(vec![1.0; 30 * 30], &[30, 30]).unwrap();
        assert!(matches!(
            operator_norm(&t, &[inf(), inf()], inf(), NormMode::Auto, Budget::default(), 0),
            Err(MzError::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn ascent_never_beats_exact_and_gets_close() {
        for seed in 0..5 {
            let a = random_coeffs(64, seed);
            let t = MultilinearOperator::form(a, &[8, 8]).unwrap();
            let q = [inf(), inf()];
            let exact = operator_norm(&t, &q, inf(), NormMode::Auto, Budget::default(), seed).unwrap();
            let budget = Budget { iterations: 200, restarts: 50 };
            let br = operator_norm(&t, &q, inf(), NormMode::Bracket, budget, seed).unwrap();
            assert!(br.lower <= exact.lower * (1.0 + 1e-12));
            assert!(br.lower >= 0.99 * exact.lower, "seed {seed}: {} vs {}", br.lower, exact.lower);
            assert!(br.upper >= exact.lower * (1.0 - 1e-12));
        }
    }

    #[test]
    fn spectral_modes_match_ascent() {
        let a = random_coeffs(3 * 4 * 5, 8);
        let t = MultilinearOperator::with_counting(a, 3, &[4, 5]).unwrap();
        let q = [e(2.0), e(2.0)];
        let exact = operator_norm(&t, &q, inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        assert_eq!(exact.method, NormMethod::Spectral);
        assert!((exact.lower - exact.upper).abs() < 1e-10);
        let br = operator_norm(&t, &q, inf(), NormMode::Bracket, Budget::default(), 0).unwrap();
        assert!((br.lower - exact.lower).abs() < 1e-6 * exact.lower);
    }

    #[test]
    fn linear_exact_modes() {
        let a = random_coeffs(4 * 6, 3);
        let t = MultilinearOperator::with_counting(a.clone(), 4, &[6]).unwrap();
        for (q, p) in [(1.0, 3.0), (1.0, 1.0), (2.0, 2.0)] {
            let b = operator_norm(&t, &[e(q)], e(p), NormMode::Auto, Budget::default(), 0).unwrap();
            let br = operator_norm(&t, &[e(q)], e(p), NormMode::Bracket, Budget { iterations: 500, restarts: 30 }, 0)
                .unwrap();
            assert!(b.is_exact());
            assert!(br.lower <= b.lower * (1.0 + 1e-9));
            assert!(br.lower >= b.lower * (1.0 - 1e-6), "({q},{p}): {} vs {}", br.lower, b.lower);
            assert!(br.upper >= b.lower * (1.0 - 1e-12));
        }
        let b = operator_norm(&t, &[e(3.0)], inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        let row_best = (0..4).map(|j| ell_norm(&a[j * 6..(j + 1) * 6], e(1.5))).fold(0.0, f64::max);
        assert!((b.lower - row_best).abs() < 1e-12);
    }

    #[test]
    fn witness_reproduces_lower_under_weights() {
        let a = random_coeffs(2 * 3 * 3, 5);
        let t = MultilinearOperator::new(
            a,
            DiscreteMeasure::new(vec![0.5, 2.0]).unwrap(),
            vec![DiscreteMeasure::new(vec![1.0, 0.2, 3.0]).unwrap(), DiscreteMeasure::new(vec![0.7, 0.7, 1.1]).unwrap()],
        )
        .unwrap();
        let q = [e(1.5), e(4.0)];
        let b = operator_norm(&t, &q, e(2.5), NormMode::Auto, Budget::default(), 2).unwrap();
        let again = evaluate_ratio(&t, &q, e(2.5), &b.lower_witness).unwrap();
        assert!((again - b.lower).abs() <= 1e-12 * b.lower);
        assert!(b.lower <= b.upper);
    }

    #[test]
    fn homogeneous_in_coefficients() {
        let a = random_coeffs(2 * 3 * 3, 6);
        let t = MultilinearOperator::with_counting(a, 2, &[3, 3]).unwrap();
        let q = [inf(), inf()];
        let b = operator_norm(&t, &q, inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        let b3 = operator_norm(&t.scaled(-3.0), &q, inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        assert!((b3.lower - 3.0 * b.lower).abs() < 1e-12 * b3.lower);
    }

    #[test]
    fn weighted_measures_reduce_to_counting() {
        // With weights everywhere the exact mode still applies after normalisation.
        let a = random_coeffs(3 * 4, 12);
        let mu = DiscreteMeasure::new(vec![0.5, 1.5, 2.0, 0.25]).unwrap();
        let nu = DiscreteMeasure::new(vec![3.0, 0.1, 1.0]).unwrap();
        let t = MultilinearOperator::new(a, nu, vec![mu]).unwrap();
        let exact = operator_norm(&t, &[e(2.0)], e(2.0), NormMode::Auto, Budget::default(), 0).unwrap();
        let br = operator_norm(&t, &[e(2.0)], e(2.0), NormMode::Bracket, Budget::default(), 0).unwrap();
        assert!((exact.lower - br.lower).abs() < 1e-8 * exact.lower);
    }

    #[test]
    fn hadamard_family_ascent_from_basis() {
        let h2 = MultilinearOperator::form(sylvester(2), &[2, 2]).unwrap();
        let r = e(4.0 / 3.0);
        let basis = FunctionFamily::basis(DiscreteMeasure::counting(2));
        let init = vec![basis.clone(), basis];
        let got = family_ascent(&h2, &[inf(), inf()], inf(), r, 2, Budget { iterations: 100, restarts: 0 }, 0, Some(&init))
            .unwrap();
        assert!((got.lhs - 2f64.powf(1.5)).abs() < 1e-12);
        for f in &got.families {
            assert!((mixed_norm(f, r, inf()).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn one_function_family_ascent_is_norm_ascent() {
        let a = random_coeffs(2 * 3 * 3, 17);
        let t = MultilinearOperator::with_counting(a, 2, &[3, 3]).unwrap();
        let q = [inf(), inf()];
        let exact = operator_norm(&t, &q, inf(), NormMode::Auto, Budget::default(), 0).unwrap();
        let got = family_ascent(&t, &q, inf(), e(1.5), 1, Budget { iterations: 200, restarts: 30 }, 0, None).unwrap();
        assert!(got.lhs <= exact.lower * (1.0 + 1e-12));
        assert!(got.lhs >= 0.99 * exact.lower);
    }

    #[test]
    fn rank_one_tensor_product_ascent_factorizes() {
        // T_i f = <a_i, f> b_i; on (q,p) = (2,2) the optimum is |a_i|_2 |b_i|_2 per slot.
        let a1 = [1.0, -2.0, 0.5];
        let b1 = [2.0, 1.0];
        let a2 = [0.3, 0.4];
        let b2 = [1.0, 1.0, -1.0];
        let outer = |b: &[f64], a: &[f64]| -> Vec<Vec<f64>> { b.iter().map(|x| a.iter().map(|y| x * y).collect()).collect() };
        let t1 = MultilinearOperator::linear(&outer(&b1, &a1), DiscreteMeasure::counting(2), DiscreteMeasure::counting(3))
            .unwrap();
        let t2 = MultilinearOperator::linear(&outer(&b2, &a2), DiscreteMeasure::counting(3), DiscreteMeasure::counting(2))
            .unwrap();
        let t = crate::multiop::tensor_product(&[t1, t2]).unwrap();
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let expected = norm2(&a1) * norm2(&b1) * norm2(&a2) * norm2(&b2);
        let got = family_ascent(&t, &[e(2.0), e(2.0)], e(2.0), e(2.0), 2, Budget { iterations: 300, restarts: 5 }, 3, None)
            .unwrap();
        assert!((got.lhs - expected).abs() < 1e-8 * expected, "{} vs {expected}", got.lhs);
    }

    #[test]
    fn permute_round_trip() {
        let dims = [2, 3, 4];
        let data: Vec<f64> = (0..24).map(|x| x as f64).collect();
        let p = permute(&data, &dims, &[2, 0, 1]);
        // new[k, i, j] = old[i, j, k]
        assert_eq!(p[1 * 6 + 1 * 3 + 2], data[1 * 12 + 2 * 4 + 1]);
        let back = permute(&p, &[4, 2, 3], &[1, 2, 0]);
        assert_eq!(back, data);
    }

    #[test]
    fn identity_bilinear_flattening_is_tight() {
        let n = 3;
        let mut c = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                c[(i * n + j) * n * n + i * n + j] = 1.0;
            }
        }
        let t = MultilinearOperator::with_counting(c, n * n, &[n, n]).unwrap();
        let b = operator_norm(&t, &[e(2.0), e(2.0)], e(2.0), NormMode::Auto, Budget::default(), 0).unwrap();
        assert!((b.upper - 1.0).abs() < 1e-12 && (b.lower - 1.0).abs() < 1e-9, "{b:?}");
    }
}
