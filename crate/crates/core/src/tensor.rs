//! Dense third-order tensors and the kernels shared by the solver and the
//! diagnostics.
//!
//! Storage layout: entry `(i, j, k)` of an `I x J x K` tensor lives at
//! `i + I * (j + J * k)`. Mode-1 fibers are contiguous and each frontal slice
//! `k` is a column-major `I x J` block, so a slice can be viewed directly as
//! an `nalgebra` matrix.
//!
//! Unfolding convention (all consumers rely on it):
//!
//! | mode | shape         | column of entry `(i, j, k)` |
//! |------|---------------|-----------------------------|
//! | 1    | `I x (J*K)`   | `j + J*k`                   |
//! | 2    | `J x (I*K)`   | `i + I*k`                   |
//! | 3    | `K x (I*J)`   | `i + I*j`                   |
//!
//! With this ordering `unfold(X, 1) = A1 * diag(w) * khatri_rao(A3, A2)^T` for
//! a CP tensor with factors `A1, A2, A3` and weights `w`.

use nalgebra::{DMatrix, DMatrixView};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor3 {
    dims: (usize, usize, usize),
    values: Vec<f64>,
}

impl DenseTensor3 {
    pub fn new(dims: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        let (i, j, k) = dims;
        if i == 0 || j == 0 || k == 0 {
            return Err(Error::InvalidTensor(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        if values.len() != i * j * k {
            return Err(Error::InvalidTensor(format!(
                "expected {} values for dims {dims:?}, got {}",
                i * j * k,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidTensor(format!(
                "non-finite value at linear index {pos}"
            )));
        }
        Ok(Self { dims, values })
    }

    pub fn zeros(dims: (usize, usize, usize)) -> Self {
        Self::from_fn(dims, |_, _, _| 0.0)
    }

    /// Builds a tensor by evaluating `f(i, j, k)` in storage order.
    pub fn from_fn(
        dims: (usize, usize, usize),
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let (ni, nj, nk) = dims;
        let mut values = Vec::with_capacity(ni * nj * nk);
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..ni {
                    values.push(f(i, j, k));
                }
            }
        }
        Self { dims, values }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
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

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims.0 * (j + self.dims.1 * k)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let idx = self.index(i, j, k);
        self.values[idx] = v;
    }

    /// Frontal slice `k` as a column-major `I x J` view.
    pub fn slice(&self, k: usize) -> DMatrixView<'_, f64> {
        let (ni, nj, _) = self.dims;
        let start = k * ni * nj;
        DMatrixView::from_slice(&self.values[start..start + ni * nj], ni, nj)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn count_negative(&self) -> usize {
        self.values.iter().filter(|v| **v < 0.0).count()
    }

    /// Largest `|x(i,j,k) - x(j,i,k)|` over all index pairs, with its location.
    /// Returns `None` when modes 1 and 2 have different sizes.
    pub fn max_asymmetry(&self) -> Option<(f64, (usize, usize, usize))> {
        let (ni, nj, nk) = self.dims;
        if ni != nj {
            return None;
        }
        let mut worst = (0.0, (0, 0, 0));
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..j {
                    let d = (self.get(i, j, k) - self.get(j, i, k)).abs();
                    if d > worst.0 {
                        worst = (d, (i, j, k));
                    }
                }
            }
        }
        Some(worst)
    }

    pub fn to_json(&self) -> TensorJson {
        TensorJson {
            dims: [self.dims.0, self.dims.1, self.dims.2],
            values: self.values.clone(),
        }
    }

    pub fn from_json(doc: TensorJson) -> Result<Self> {
        Self::new((doc.dims[0], doc.dims[1], doc.dims[2]), doc.values)
    }
}

/// On-disk tensor document: `{"dims":[I,J,K],"values":[...]}` in storage order.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TensorJson {
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

/// Observed/held-out flags for a tensor; `true` means observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskTensor {
    dims: (usize, usize, usize),
    flags: Vec<bool>,
}

impl MaskTensor {
    pub fn all_observed(dims: (usize, usize, usize)) -> Self {
        Self {
            dims,
            flags: vec![true; dims.0 * dims.1 * dims.2],
        }
    }

    /// Builds a mask and checks the mode 1-2 symmetry invariant.
    pub fn new(dims: (usize, usize, usize), flags: Vec<bool>) -> Result<Self> {
        if flags.len() != dims.0 * dims.1 * dims.2 {
            return Err(Error::DimensionMismatch(format!(
                "mask of dims {dims:?} needs {} flags, got {}",
                dims.0 * dims.1 * dims.2,
                flags.len()
            )));
        }
        let mask = Self { dims, flags };
        mask.check_symmetric()?;
        Ok(mask)
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize, k: usize) -> bool {
        self.flags[i + self.dims.0 * (j + self.dims.1 * k)]
    }

    /// Sets `(i, j, k)` and its mirror `(j, i, k)`.
    pub fn set_symmetric(&mut self, i: usize, j: usize, k: usize, observed: bool) {
        let (ni, nj, _) = self.dims;
        self.flags[i + ni * (j + nj * k)] = observed;
        self.flags[j + ni * (i + nj * k)] = observed;
    }

    pub fn observed_count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    pub fn hidden_count(&self) -> usize {
        self.flags.len() - self.observed_count()
    }

    /// Mask with every flag flipped: the held-out set as "observed".
    pub fn complement(&self) -> Self {
        Self {
            dims: self.dims,
            flags: self.flags.iter().map(|f| !f).collect(),
        }
    }

    /// Describes why fitting under this mask is underdetermined: a frontal
    /// slice with no observed entry, or a row hidden in every slice.
    pub fn underdetermined_reason(&self) -> Option<String> {
        let (ni, nj, nk) = self.dims;
        for k in 0..nk {
            if (0..nj).all(|j| (0..ni).all(|i| !self.is_observed(i, j, k))) {
                return Some(format!("slice {k} is entirely held out"));
            }
        }
        for i in 0..ni {
            if (0..nk).all(|k| (0..nj).all(|j| !self.is_observed(i, j, k))) {
                return Some(format!("row {i} is held out in every slice"));
            }
        }
        None
    }

    pub fn check_symmetric(&self) -> Result<()> {
        let (ni, nj, nk) = self.dims;
        if ni != nj {
            return Err(Error::DimensionMismatch(format!(
                "mask modes 1 and 2 differ: {ni} vs {nj}"
            )));
        }
        for k in 0..nk {
            for j in 0..nj {
                for i in 0..j {
                    if self.is_observed(i, j, k) != self.is_observed(j, i, k) {
                        return Err(Error::MaskNotSymmetric { i, j, k });
                    }
                }
            }
        }
        Ok(())
    }
}

/// Mode-`mode` matricization (1-based mode) using the column ordering in the
/// module docs.
pub fn unfold(t: &DenseTensor3, mode: usize) -> Result<Matrix> {
    let (ni, nj, nk) = t.dims();
    let m = match mode {
        1 => Matrix::from_fn(ni, nj * nk, |i, c| t.get(i, c % nj, c / nj)),
        2 => Matrix::from_fn(nj, ni * nk, |j, c| t.get(c % ni, j, c / ni)),
        3 => Matrix::from_fn(nk, ni * nj, |k, c| t.get(c % ni, c / ni, k)),
        other => return Err(Error::InvalidMode(other)),
    };
    Ok(m)
}

/// Inverse of [`unfold`].
pub fn refold(m: &Matrix, mode: usize, dims: (usize, usize, usize)) -> Result<DenseTensor3> {
    let (ni, nj, nk) = dims;
    let expected = match mode {
        1 => (ni, nj * nk),
        2 => (nj, ni * nk),
        3 => (nk, ni * nj),
        other => return Err(Error::InvalidMode(other)),
    };
    if m.shape() != expected {
        return Err(Error::DimensionMismatch(format!(
            "cannot refold {:?} matrix along mode {mode} into {dims:?}",
            m.shape()
        )));
    }
    let t = DenseTensor3::from_fn(dims, |i, j, k| match mode {
        1 => m[(i, j + nj * k)],
        2 => m[(j, i + ni * k)],
        _ => m[(k, i + ni * j)],
    });
    DenseTensor3::new(dims, t.into_values())
}

/// Column-wise Kronecker product. Row `ia * rows(b) + ib` of column `r` holds
/// `a[(ia, r)] * b[(ib, r)]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "khatri_rao needs equal column counts, got {} and {}",
            a.ncols(),
            b.ncols()
        )));
    }
    let rb = b.nrows();
    Ok(Matrix::from_fn(a.nrows() * rb, a.ncols(), |row, r| {
        a[(row / rb, r)] * b[(row % rb, r)]
    }))
}

/// Evaluates `sum_r w_r * a(p,r) * u(i,r) * u(j,r)` into an `N x N x P` tensor.
pub fn cp_reconstruct(weights: &[f64], phase: &Matrix, video: &Matrix) -> Result<DenseTensor3> {
    let rank = weights.len();
    if phase.ncols() != rank || video.ncols() != rank {
        return Err(Error::DimensionMismatch(format!(
            "rank {rank} weights with phase loadings {:?} and video loadings {:?}",
            phase.shape(),
            video.shape()
        )));
    }
    let n = video.nrows();
    let p = phase.nrows();
    if n == 0 || p == 0 {
        return Err(Error::DimensionMismatch("empty factor matrix".into()));
    }
    let mut values = vec![0.0; n * n * p];
    for k in 0..p {
        let base = k * n * n;
        for r in 0..rank {
            let scale = weights[r] * phase[(k, r)];
            if scale == 0.0 {
                continue;
            }
            let col = video.column(r);
            // Fill the upper triangle and mirror so the result is exactly symmetric.
            for j in 0..n {
                let sj = scale * col[j];
                for i in 0..=j {
                    values[base + i + n * j] += sj * col[i];
                }
            }
        }
        for j in 0..n {
            for i in 0..j {
                values[base + j + n * i] = values[base + i + n * j];
            }
        }
    }
    DenseTensor3::new((n, n, p), values)
}

/// Sum of squared differences over observed entries (all entries without a mask).
pub fn masked_sse(
    t: &DenseTensor3,
    approx: &DenseTensor3,
    mask: Option<&MaskTensor>,
) -> Result<f64> {
    if t.dims() != approx.dims() {
        return Err(Error::DimensionMismatch(format!(
            "tensor {:?} vs approximation {:?}",
            t.dims(),
            approx.dims()
        )));
    }
    match mask {
        None => Ok(t
            .values()
            .iter()
            .zip(approx.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum()),
        Some(m) => {
            if m.dims() != t.dims() {
                return Err(Error::DimensionMismatch(format!(
                    "mask {:?} vs tensor {:?}",
                    m.dims(),
                    t.dims()
                )));
            }
            Ok(t.values()
                .iter()
                .zip(approx.values())
                .zip(m.flags())
                .filter(|(_, f)| **f)
                .map(|((a, b), _)| (a - b) * (a - b))
                .sum())
        }
    }
}
