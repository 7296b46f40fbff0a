//! Dense tensors and the multilinear primitives built on them.
//!
//! Every tensor is stored in row-major order: the first index varies slowest
//! and the last index fastest. The mode-`m` flattening puts index `i_m` on the
//! rows; its columns enumerate the remaining indices in that same row-major
//! order, so column `c = l * right + r` where `l` ranges over the modes before
//! `m` and `r` over the modes after it.
//!
//! Modes are zero-based throughout the API.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Maximum absolute deviation of `MᵀM` from the identity tolerated by
/// [`FactorMatrix`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if dims.is_empty() {
            return Err(Error::shape("tensor must have at least one mode"));
        }
        if values.len() != expected {
            return Err(Error::shape(format!(
                "{} values supplied for dims {:?} ({} expected)",
                values.len(),
                dims,
                expected
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty(), "tensor must have at least one mode");
        let n = dims.iter().product();
        Self { dims, values: vec![0.0; n] }
    }

    /// Builds a tensor by evaluating `f` at every multi-index in layout order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dims);
        let mut idx = vec![0usize; t.dims.len()];
        for k in 0..t.values.len() {
            t.values[k] = f(&idx);
            advance(&mut idx, &t.dims);
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Linear offset of a multi-index in the canonical layout.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.values[self.offset(idx)]
    }

    /// Extent of the last mode (the sample mode for stacked sample sets).
    pub fn last_extent(&self) -> usize {
        *self.dims.last().expect("non-empty dims")
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm_sq().sqrt()
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn add(&self, other: &DenseTensor) -> Result<DenseTensor> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn scale(&self, factor: f64) -> DenseTensor {
        DenseTensor {
            dims: self.dims.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    fn zip_with(&self, other: &DenseTensor, f: impl Fn(f64, f64) -> f64) -> Result<DenseTensor> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "elementwise operation on dims {:?} and {:?}",
                self.dims, other.dims
            )));
        }
        Ok(DenseTensor {
            dims: self.dims.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Picks the listed slices of the last mode, in the given order.
    pub fn select_last(&self, indices: &[usize]) -> DenseTensor {
        let n = self.last_extent();
        let prefix = self.len() / n.max(1);
        let mut dims = self.dims.clone();
        *dims.last_mut().unwrap() = indices.len();
        let mut values = Vec::with_capacity(prefix * indices.len());
        if n > 0 {
            for p in 0..prefix {
                let row = &self.values[p * n..(p + 1) * n];
                values.extend(indices.iter().map(|&k| row[k]));
            }
        }
        DenseTensor { dims, values }
    }

    /// Slice `k` of the last mode as a tensor of one lower order.
    pub fn slice_last(&self, k: usize) -> DenseTensor {
        assert!(self.order() >= 2, "slice_last needs order >= 2");
        let n = self.last_extent();
        assert!(k < n, "slice index {k} out of range {n}");
        let dims = self.dims[..self.order() - 1].to_vec();
        let values = self.values.iter().skip(k).step_by(n).copied().collect();
        DenseTensor { dims, values }
    }

    /// Squared Frobenius norm of every slice of the last mode.
    pub fn last_mode_sq_norms(&self) -> Vec<f64> {
        let n = self.last_extent();
        let mut out = vec![0.0; n];
        for chunk in self.values.chunks_exact(n.max(1)) {
            for (o, v) in out.iter_mut().zip(chunk) {
                *o += v * v;
            }
        }
        out
    }

    /// Mean over the last mode, producing a tensor of one lower order.
    pub fn mean_last(&self) -> Result<DenseTensor> {
        let n = self.last_extent();
        if n == 0 {
            return Err(Error::shape("mean over an empty sample mode"));
        }
        let dims = self.dims[..self.order() - 1].to_vec();
        let values = self
            .values
            .chunks_exact(n)
            .map(|c| c.iter().sum::<f64>() / n as f64)
            .collect();
        Ok(DenseTensor { dims, values })
    }

    /// Subtracts `base` (of one lower order) from every last-mode slice.
    pub fn sub_broadcast_last(&self, base: &DenseTensor) -> Result<DenseTensor> {
        if base.dims[..] != self.dims[..self.order() - 1] {
            return Err(Error::shape(format!(
                "cannot broadcast dims {:?} over {:?}",
                base.dims, self.dims
            )));
        }
        let n = self.last_extent();
        let mut values = self.values.clone();
        if n > 0 {
            for (chunk, &b) in values.chunks_exact_mut(n).zip(&base.values) {
                chunk.iter_mut().for_each(|v| *v -= b);
            }
        }
        Ok(DenseTensor { dims: self.dims.clone(), values })
    }

    /// Appends a trailing mode of extent one.
    pub fn with_unit_last(&self) -> DenseTensor {
        let mut dims = self.dims.clone();
        dims.push(1);
        DenseTensor { dims, values: self.values.clone() }
    }
}

fn advance(idx: &mut [usize], dims: &[usize]) {
    for k in (0..dims.len()).rev() {
        idx[k] += 1;
        if idx[k] < dims[k] {
            return;
        }
        idx[k] = 0;
    }
}

fn check_mode(t: &DenseTensor, mode: usize) -> Result<()> {
    if mode >= t.order() {
        return Err(Error::ModeOutOfRange { mode, order: t.order() });
    }
    Ok(())
}

/// Splits the extents around `mode` into (product before, extent, product after).
fn split_at_mode(dims: &[usize], mode: usize) -> (usize, usize, usize) {
    let left = dims[..mode].iter().product();
    let right = dims[mode + 1..].iter().product();
    (left, dims[mode], right)
}

pub fn mode_flatten(t: &DenseTensor, mode: usize) -> Result<DMatrix<f64>> {
    check_mode(t, mode)?;
    let (left, extent, right) = split_at_mode(&t.dims, mode);
    let mut mat = DMatrix::zeros(extent, left * right);
    for l in 0..left {
        for i in 0..extent {
            let base = (l * extent + i) * right;
            for r in 0..right {
                mat[(i, l * right + r)] = t.values[base + r];
            }
        }
    }
    Ok(mat)
}

pub fn mode_unflatten(mat: &DMatrix<f64>, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange { mode, order: dims.len() });
    }
    let (left, extent, right) = split_at_mode(dims, mode);
    if mat.nrows() != extent || mat.ncols() != left * right {
        return Err(Error::shape(format!(
            "{}x{} matrix cannot unflatten to dims {:?} at mode {}",
            mat.nrows(),
            mat.ncols(),
            dims,
            mode
        )));
    }
    let mut values = vec![0.0; left * extent * right];
    for l in 0..left {
        for i in 0..extent {
            let base = (l * extent + i) * right;
            for r in 0..right {
                values[base + r] = mat[(i, l * right + r)];
            }
        }
    }
    DenseTensor::new(dims.to_vec(), values)
}

/// `t ×_mode u` for a `J × I_mode` matrix `u`.
pub fn mode_product(t: &DenseTensor, u: &DMatrix<f64>, mode: usize) -> Result<DenseTensor> {
    check_mode(t, mode)?;
    let (left, extent, right) = split_at_mode(&t.dims, mode);
    if u.ncols() != extent {
        return Err(Error::shape(format!(
            "mode-{} product with a {}x{} matrix needs {} columns",
            mode,
            u.nrows(),
            u.ncols(),
            extent
        )));
    }
    let out_extent = u.nrows();
    let mut dims = t.dims.clone();
    dims[mode] = out_extent;
    let mut values = vec![0.0; left * out_extent * right];
    for l in 0..left {
        for i in 0..extent {
            let src = &t.values[(l * extent + i) * right..(l * extent + i + 1) * right];
            for j in 0..out_extent {
                let w = u[(j, i)];
                if w == 0.0 {
                    continue;
                }
                let dst = &mut values[(l * out_extent + j) * right..(l * out_extent + j + 1) * right];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
    Ok(DenseTensor { dims, values })
}

/// Applies `factors[k]` on mode `k` for every `k` where a factor is present.
fn apply_modes<'a>(
    t: &DenseTensor,
    factors: impl IntoIterator<Item = (usize, &'a DMatrix<f64>)>,
) -> Result<DenseTensor> {
    let mut out: Option<DenseTensor> = None;
    for (mode, u) in factors {
        let cur = out.as_ref().unwrap_or(t);
        out = Some(mode_product(cur, u, mode)?);
    }
    Ok(out.unwrap_or_else(|| t.clone()))
}

fn check_factor_count(t: &DenseTensor, count: usize) -> Result<()> {
    if count != t.order() {
        return Err(Error::shape(format!(
            "{} factors supplied for an order-{} tensor",
            count,
            t.order()
        )));
    }
    Ok(())
}

/// `⟦t; U⟧`: one matrix per mode, applied in mode order.
pub fn multi_product(t: &DenseTensor, factors: &[DMatrix<f64>]) -> Result<DenseTensor> {
    check_factor_count(t, factors.len())?;
    apply_modes(t, factors.iter().enumerate())
}

/// As [`multi_product`] but mode `skip` is left untouched.
pub fn multi_product_skip(
    t: &DenseTensor,
    factors: &[DMatrix<f64>],
    skip: usize,
) -> Result<DenseTensor> {
    check_factor_count(t, factors.len())?;
    check_mode(t, skip)?;
    apply_modes(t, factors.iter().enumerate().filter(|(k, _)| *k != skip))
}

/// Applies one matrix per leading mode; trailing modes beyond `factors` are untouched.
pub fn multi_product_leading(t: &DenseTensor, factors: &[DMatrix<f64>]) -> Result<DenseTensor> {
    if factors.len() > t.order() {
        return Err(Error::shape(format!(
            "{} factors supplied for an order-{} tensor",
            factors.len(),
            t.order()
        )));
    }
    apply_modes(t, factors.iter().enumerate())
}

/// Leading-mode product that leaves mode `skip` (and any trailing modes) untouched.
pub(crate) fn multi_product_leading_skip(
    t: &DenseTensor,
    factors: &[DMatrix<f64>],
    skip: usize,
) -> Result<DenseTensor> {
    if factors.len() > t.order() {
        return Err(Error::shape(format!(
            "{} factors supplied for an order-{} tensor",
            factors.len(),
            t.order()
        )));
    }
    apply_modes(t, factors.iter().enumerate().filter(|(k, _)| *k != skip))
}

/// Tucker reconstruction `⟦core; U⟧`.
pub fn tucker_reconstruct(core: &DenseTensor, factors: &[FactorMatrix]) -> Result<DenseTensor> {
    check_factor_count(core, factors.len())?;
    apply_modes(core, factors.iter().map(FactorMatrix::matrix).enumerate())
}

/// Core tensor `⟦t; Uᵀ⟧`.
pub fn core_of(t: &DenseTensor, factors: &[FactorMatrix]) -> Result<DenseTensor> {
    check_factor_count(t, factors.len())?;
    let transposed: Vec<DMatrix<f64>> = factors.iter().map(FactorMatrix::transpose).collect();
    apply_modes(t, transposed.iter().enumerate())
}

/// Concatenates `a` and `b` along their last mode.
pub fn stack_last(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    let order = a.order();
    if order != b.order() || a.dims[..order - 1] != b.dims[..order - 1] {
        return Err(Error::shape(format!(
            "cannot stack dims {:?} and {:?} along the last mode",
            a.dims, b.dims
        )));
    }
    let (na, nb) = (a.last_extent(), b.last_extent());
    let prefix: usize = a.dims[..order - 1].iter().product();
    let mut dims = a.dims.clone();
    dims[order - 1] = na + nb;
    let mut values = Vec::with_capacity(prefix * (na + nb));
    for p in 0..prefix {
        values.extend_from_slice(&a.values[p * na..(p + 1) * na]);
        values.extend_from_slice(&b.values[p * nb..(p + 1) * nb]);
    }
    Ok(DenseTensor { dims, values })
}

/// Concatenates many tensors along their last mode.
pub fn stack_last_all(parts: &[DenseTensor]) -> Result<DenseTensor> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::shape("nothing to stack"))?;
    rest.iter().try_fold(first.clone(), |acc, p| stack_last(&acc, p))
}

pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    t.frobenius_norm()
}

/// Matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix(DMatrix<f64>);

impl FactorMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.ncols() > m.nrows() {
            return Err(Error::shape(format!(
                "factor matrix has more columns ({}) than rows ({})",
                m.ncols(),
                m.nrows()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let dev = orthonormality_error(&m);
        if dev > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(dev));
        }
        Ok(Self(m))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn transpose(&self) -> DMatrix<f64> {
        self.0.transpose()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }
}

/// Max-abs entry of `MᵀM − I`.
pub fn orthonormality_error(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    let n = gram.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

/// One factor matrix per data mode (`U_s`, `U_t` or a class dictionary `W_c`).
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDictionary {
    factors: Vec<FactorMatrix>,
}

impl TensorDictionary {
    pub fn new(factors: Vec<FactorMatrix>) -> Self {
        Self { factors }
    }

    pub fn factors(&self) -> &[FactorMatrix] {
        &self.factors
    }

    pub fn modes(&self) -> usize {
        self.factors.len()
    }

    /// Ranks `J_1..J_M`.
    pub fn ranks(&self) -> Vec<usize> {
        self.factors.iter().map(FactorMatrix::cols).collect()
    }

    /// Sample extents `I_1..I_M`.
    pub fn extents(&self) -> Vec<usize> {
        self.factors.iter().map(FactorMatrix::rows).collect()
    }

    /// Codes `⟦x; Uᵀ⟧` over the leading modes; any trailing sample mode is kept.
    pub fn encode(&self, x: &DenseTensor) -> Result<DenseTensor> {
        let transposed: Vec<DMatrix<f64>> = self.factors.iter().map(FactorMatrix::transpose).collect();
        multi_product_leading(x, &transposed)
    }

    /// Reconstruction `⟦codes; U⟧` over the leading modes.
    pub fn decode(&self, codes: &DenseTensor) -> Result<DenseTensor> {
        let mats: Vec<DMatrix<f64>> = self.factors.iter().map(|f| f.matrix().clone()).collect();
        multi_product_leading(codes, &mats)
    }

    pub fn max_orthonormality_error(&self) -> f64 {
        self.factors
            .iter()
            .map(FactorMatrix::orthonormality_error)
            .fold(0.0, f64::max)
    }
}
