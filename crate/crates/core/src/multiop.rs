//! Dense multilinear operators between finite atomic measure spaces.
//!
//! Coefficients are stored row-major with shape `(output, d_1, ..., d_m)`.
//! Multi-indices `(k_1, ..., k_m)` over function families are flattened
//! row-major as well, `k_1` slowest.

use serde::{Deserialize, Serialize};

use crate::error::{MzError, Result};
use crate::tensorspace::{ell_norm, lp_norm, weak_lp_quasinorm, DiscreteMeasure, Exponent, FunctionFamily};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "OperatorJson", into = "OperatorJson")]
pub struct MultilinearOperator {
    coeffs: Vec<f64>,
    output_measure: DiscreteMeasure,
    input_measures: Vec<DiscreteMeasure>,
}

#[derive(Serialize, Deserialize)]
struct OperatorJson {
    arity: usize,
    input_dims: Vec<usize>,
    coeffs: Vec<f64>,
    output_measure: DiscreteMeasure,
    input_measures: Vec<DiscreteMeasure>,
}

impl TryFrom<OperatorJson> for MultilinearOperator {
    type Error = MzError;

    fn try_from(raw: OperatorJson) -> Result<Self> {
        if raw.arity != raw.input_measures.len() {
            return Err(MzError::Shape(format!(
                "arity {} but {} input measures",
                raw.arity,
                raw.input_measures.len()
            )));
        }
        let dims: Vec<usize> = raw.input_measures.iter().map(DiscreteMeasure::len).collect();
        if dims != raw.input_dims {
            return Err(MzError::Shape(format!(
                "input_dims {:?} disagree with the input measures {dims:?}",
                raw.input_dims
            )));
        }
        MultilinearOperator::new(raw.coeffs, raw.output_measure, raw.input_measures)
    }
}

impl From<MultilinearOperator> for OperatorJson {
    fn from(t: MultilinearOperator) -> Self {
        OperatorJson {
            arity: t.arity(),
            input_dims: t.input_dims(),
            coeffs: t.coeffs,
            output_measure: t.output_measure,
            input_measures: t.input_measures,
        }
    }
}

/// `(q_1, ..., q_m; p; r)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentTriple {
    pub q: Vec<Exponent>,
    pub p: Exponent,
    pub r: Exponent,
}

impl ExponentTriple {
    pub fn new(q: Vec<Exponent>, p: Exponent, r: Exponent) -> Result<Self> {
        if q.is_empty() {
            return Err(MzError::InvalidArgument("at least one input exponent is required".into()));
        }
        Ok(Self { q, p, r })
    }

    pub fn arity(&self) -> usize {
        self.q.len()
    }

    pub fn check_arity(&self, t: &MultilinearOperator) -> Result<()> {
        if self.q.len() != t.arity() {
            return Err(MzError::Shape(format!(
                "{} input exponents for an operator of arity {}",
                self.q.len(),
                t.arity()
            )));
        }
        Ok(())
    }
}

/// Contracts axis `a` of a row-major tensor of `shape` with `v`, removing it.
pub(crate) fn contract_axis(data: &[f64], shape: &[usize], axis: usize, v: &[f64]) -> Vec<f64> {
    let pre: usize = shape[..axis].iter().product();
    let d = shape[axis];
    let post: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; pre * post];
    for a in 0..pre {
        let block = &data[a * d * post..(a + 1) * d * post];
        let target = &mut out[a * post..(a + 1) * post];
        for (i, &vi) in v.iter().enumerate() {
            if vi == 0.0 {
                continue;
            }
            for (t, x) in target.iter_mut().zip(&block[i * post..(i + 1) * post]) {
                *t += vi * x;
            }
        }
    }
    out
}

/// Replaces axis `a` (length `d`) by length `rows.len()`: `out[.., k, ..] = sum_i rows[k][i] data[.., i, ..]`.
pub(crate) fn transform_axis(data: &[f64], shape: &[usize], axis: usize, rows: &[Vec<f64>]) -> Vec<f64> {
    let pre: usize = shape[..axis].iter().product();
    let d = shape[axis];
    let post: usize = shape[axis + 1..].iter().product();
    let n = rows.len();
    let mut out = vec![0.0; pre * n * post];
    for a in 0..pre {
        let block = &data[a * d * post..(a + 1) * d * post];
        for (k, row) in rows.iter().enumerate() {
            let target = &mut out[(a * n + k) * post..(a * n + k + 1) * post];
            for (i, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                for (t, x) in target.iter_mut().zip(&block[i * post..(i + 1) * post]) {
                    *t += w * x;
                }
            }
        }
    }
    out
}

impl MultilinearOperator {
    pub fn new(coeffs: Vec<f64>, output_measure: DiscreteMeasure, input_measures: Vec<DiscreteMeasure>) -> Result<Self> {
        if input_measures.is_empty() {
            return Err(MzError::Shape("an operator needs at least one input".into()));
        }
        let expected = output_measure.len() * input_measures.iter().map(DiscreteMeasure::len).product::<usize>();
        if coeffs.len() != expected {
            return Err(MzError::Shape(format!("{} coefficients, expected {expected}", coeffs.len())));
        }
        if let Some(c) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(MzError::InvalidArgument(format!("coefficient {c} is not finite")));
        }
        Ok(Self { coeffs, output_measure, input_measures })
    }

    /// Counting measures everywhere.
    pub fn with_counting(coeffs: Vec<f64>, output_dim: usize, input_dims: &[usize]) -> Result<Self> {
        if output_dim == 0 || input_dims.iter().any(|&d| d == 0) {
            return Err(MzError::Shape("dimensions must be positive".into()));
        }
        Self::new(
            coeffs,
            DiscreteMeasure::counting(output_dim),
            input_dims.iter().map(|&d| DiscreteMeasure::counting(d)).collect(),
        )
    }

    /// Linear operator from an `output x input` matrix given by rows.
    pub fn linear(rows: &[Vec<f64>], output_measure: DiscreteMeasure, input_measure: DiscreteMeasure) -> Result<Self> {
        Self::new(rows.concat(), output_measure, vec![input_measure])
    }

    /// Scalar-valued form on counting measures.
    pub fn form(coeffs: Vec<f64>, input_dims: &[usize]) -> Result<Self> {
        Self::with_counting(coeffs, 1, input_dims)
    }

    pub fn arity(&self) -> usize {
        self.input_measures.len()
    }

    pub fn input_dims(&self) -> Vec<usize> {
        self.input_measures.iter().map(DiscreteMeasure::len).collect()
    }

    pub fn output_dim(&self) -> usize {
        self.output_measure.len()
    }

    /// `(output, d_1, ..., d_m)`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.output_dim()];
        s.extend(self.input_dims());
        s
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn output_measure(&self) -> &DiscreteMeasure {
        &self.output_measure
    }

    pub fn input_measures(&self) -> &[DiscreteMeasure] {
        &self.input_measures
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|x| c * x).collect(), ..self.clone() }
    }

    pub fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs, self.output_measure.clone(), self.input_measures.clone())
    }

    pub fn apply(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        if inputs.len() != self.arity() {
            return Err(MzError::Shape(format!("{} inputs for arity {}", inputs.len(), self.arity())));
        }
        for (i, (f, mu)) in inputs.iter().zip(&self.input_measures).enumerate() {
            if f.len() != mu.len() {
                return Err(MzError::Shape(format!("input {i} has length {}, expected {}", f.len(), mu.len())));
            }
        }
        let mut shape = self.shape();
        let mut data = self.coeffs.clone();
        for axis in (1..shape.len()).rev() {
            data = contract_axis(&data, &shape, axis, inputs[axis - 1]);
            shape.pop();
        }
        Ok(data)
    }

    fn check_families(&self, families: &[FunctionFamily]) -> Result<()> {
        if families.len() != self.arity() {
            return Err(MzError::Shape(format!("{} families for arity {}", families.len(), self.arity())));
        }
        for (i, (f, mu)) in families.iter().zip(&self.input_measures).enumerate() {
            if f.measure() != mu {
                return Err(MzError::Shape(format!("family {i} does not live on input measure {i}")));
            }
        }
        Ok(())
    }

    /// `T(f^1_{k_1}, ..., f^m_{k_m})` for every multi-index, as a row-major
    /// tensor of shape `(output, n_1, ..., n_m)`.
    pub fn family_values(&self, families: &[FunctionFamily]) -> Result<Vec<f64>> {
        self.check_families(families)?;
        let mut shape = self.shape();
        let mut data = self.coeffs.clone();
        for (axis, family) in families.iter().enumerate() {
            data = transform_axis(&data, &shape, axis + 1, family.values());
            shape[axis + 1] = family.len();
        }
        Ok(data)
    }

    /// Pointwise `(sum_k |T(f_{k_1}, ..., f_{k_m})|^r)^(1/r)` on the output atoms.
    pub fn extension_function(&self, families: &[FunctionFamily], r: Exponent) -> Result<Vec<f64>> {
        let values = self.family_values(families)?;
        let block = values.len() / self.output_dim();
        Ok(values.chunks(block).map(|row| ell_norm(row, r)).collect())
    }

    /// `|| (sum_k |T(f_{k_1}, ..., f_{k_m})|^r)^(1/r) ||_{L^p(nu)}`.
    pub fn extension_lhs(&self, families: &[FunctionFamily], r: Exponent, p: Exponent) -> Result<f64> {
        lp_norm(&self.extension_function(families, r)?, p, &self.output_measure)
    }

    /// As [`Self::extension_lhs`] with the weak `L^{p,inf}` quasinorm outside.
    pub fn extension_lhs_weak(&self, families: &[FunctionFamily], r: Exponent, p: Exponent) -> Result<f64> {
        if p.is_infinite() {
            return Err(MzError::InvalidExponent("weak L^p needs a finite exponent".into()));
        }
        weak_lp_quasinorm(&self.extension_function(families, r)?, p, &self.output_measure)
    }
}

/// `T_1 (x) ... (x) T_m`: `(f^1, ..., f^m) -> T_1 f^1 (w_1) ... T_m f^m (w_m)` on
/// the product of the output measures (first factor slowest).
pub fn tensor_product(factors: &[MultilinearOperator]) -> Result<MultilinearOperator> {
    if factors.is_empty() {
        return Err(MzError::InvalidArgument("tensor product of no operators".into()));
    }
    if let Some(i) = factors.iter().position(|t| t.arity() != 1) {
        return Err(MzError::InvalidArgument(format!("factor {i} is not linear")));
    }
    let outs: Vec<usize> = factors.iter().map(|t| t.output_dim()).collect();
    let ins: Vec<usize> = factors.iter().map(|t| t.input_dims()[0]).collect();
    let mut output_measure = factors[0].output_measure.clone();
    for t in &factors[1..] {
        output_measure = output_measure.product(&t.output_measure);
    }
    let input_measures: Vec<DiscreteMeasure> = factors.iter().map(|t| t.input_measures[0].clone()).collect();

    // Axis order (j_1..j_m, i_1..i_m).
    let m = factors.len();
    let mut dims = outs.clone();
    dims.extend(&ins);
    let total: usize = dims.iter().product();
    let mut coeffs = Vec::with_capacity(total);
    let mut idx = vec![0usize; 2 * m];
    for _ in 0..total {
        let c: f64 = (0..m).map(|s| factors[s].coeffs[idx[s] * ins[s] + idx[m + s]]).product();
        coeffs.push(c);
        for a in (0..2 * m).rev() {
            idx[a] += 1;
            if idx[a] < dims[a] {
                break;
            }
            idx[a] = 0;
        }
    }
    MultilinearOperator::new(coeffs, output_measure, input_measures)
}
