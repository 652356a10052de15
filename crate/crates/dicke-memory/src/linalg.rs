//! Dense complex matrices sized for desk-scale Hilbert spaces.
//!
//! Storage is row-major. Composite indices follow one global convention:
//! atoms first with atom 1 as the slowest index, cavity factors last, Fock
//! levels ascending, and level 0 of every atom is the excited state.
//! Eigenvalue and singular value decompositions are delegated to nalgebra;
//! everything else is implemented directly so the multiply kernel can skip
//! structural zeros of sparse operators.

use crate::{tol, Error, Result};
use num_complex::Complex64;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Row-major construction, mostly for tests and small fixed operators.
    pub fn from_rows(rows: &[&[C64]]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Self { rows: r, cols: c, data }
    }

    /// Column vector from amplitudes.
    pub fn column(v: &[C64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn trace(&self) -> C64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self.data[i * self.cols + i]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.data[j * self.cols + i])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.data[j * self.cols + i].conj())
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Self { rows: self.rows, cols: self.cols, data }
    }

    pub fn scale(&self, c: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    /// self += c * other, the integrator workhorse.
    pub fn scaled_add_assign(&mut self, c: C64, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += c * b;
        }
    }

    /// Matrix product with a skip on exact-zero left entries. Hamiltonians
    /// and jump operators are structurally sparse, so products with a sparse
    /// left factor cost O(nnz * cols) instead of O(n^3).
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "shape mismatch in mul");
        let mut out = Self::zeros(self.rows, other.cols);
        let oc = other.cols;
        for i in 0..self.rows {
            let out_row = &mut out.data[i * oc..(i + 1) * oc];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let rhs_row = &other.data[k * oc..(k + 1) * oc];
                for (o, b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self * other with a sparse right factor: (other^T * self^T)^T.
    pub fn mul_sparse_right(&self, other_t: &Self) -> Self {
        other_t.mul(&self.transpose()).transpose()
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: C64) {
        self.data[i * self.cols + j] = v;
    }

    /// Tr(op * self) without forming the product.
    pub fn trace_product(&self, op: &Self) -> C64 {
        assert_eq!((self.rows, self.cols), (op.cols, op.rows));
        let mut acc = ZERO;
        for i in 0..op.rows {
            for j in 0..op.cols {
                let o = op.data[i * op.cols + j];
                if o == ZERO {
                    continue;
                }
                acc += o * self.data[j * self.cols + i];
            }
        }
        acc
    }

    /// Sum_i w_i * self[i][i], for diagonal observables.
    pub fn weighted_diag(&self, w: &[f64]) -> C64 {
        debug_assert_eq!(w.len(), self.rows);
        let mut acc = ZERO;
        for (i, wi) in w.iter().enumerate() {
            if *wi != 0.0 {
                acc += self.data[i * self.cols + i] * wi;
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        debug_assert!(self.is_square());
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                let d = (self.data[i * self.cols + j] - self.data[j * self.cols + i].conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    fn to_nalgebra(&self) -> nalgebra::DMatrix<C64> {
        nalgebra::DMatrix::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }
}

/// Kronecker product, left factor slowest.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    if rows > tol::MAX_DENSE_DIM || cols > tol::MAX_DENSE_DIM {
        return Err(Error::Capacity(format!(
            "tensor product would be {rows}x{cols}, budget is {}x{}",
            tol::MAX_DENSE_DIM,
            tol::MAX_DENSE_DIM
        )));
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for ia in 0..a.rows {
        for ja in 0..a.cols {
            let f = a.get(ia, ja);
            if f == ZERO {
                continue;
            }
            for ib in 0..b.rows {
                for jb in 0..b.cols {
                    let v = b.get(ib, jb);
                    if v != ZERO {
                        out.set(ia * b.rows + ib, ja * b.cols + jb, f * v);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Kronecker product of several factors in order.
pub fn tensor_chain(factors: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = tensor_product(&acc, f)?;
    }
    Ok(acc)
}

fn offset_table(sel: &[(usize, usize)]) -> Vec<usize> {
    // sel: (dim, stride) per factor, slowest first. Entry k of the table is
    // the flat offset of the k-th mixed-radix tuple.
    let total: usize = sel.iter().map(|s| s.0).product::<usize>().max(1);
    let mut inner: Vec<usize> = vec![1; sel.len()];
    for f in (0..sel.len().saturating_sub(1)).rev() {
        inner[f] = inner[f + 1] * sel[f + 1].0;
    }
    let mut out = Vec::with_capacity(total);
    for k in 0..total {
        let mut off = 0;
        for (f, (dim, stride)) in sel.iter().enumerate() {
            off += ((k / inner[f]) % dim) * stride;
        }
        out.push(off);
    }
    out
}

/// Partial trace over the factors NOT listed in `keep`. `dims` are the
/// factor dimensions slowest-first; `keep` must be strictly increasing.
pub fn partial_trace_raw(
    m: &ComplexMatrix,
    dims: &[usize],
    keep: &[usize],
) -> Result<ComplexMatrix> {
    if !m.is_square() {
        return Err(Error::Usage("partial trace needs a square matrix".into()));
    }
    let total: usize = dims.iter().product();
    if total != m.rows {
        return Err(Error::Usage(format!(
            "layout {:?} does not match dimension {}",
            dims, m.rows
        )));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&f| f >= dims.len()) {
        return Err(Error::Usage("keep set must be strictly increasing factor indices".into()));
    }
    let mut strides = vec![1usize; dims.len()];
    for f in (0..dims.len().saturating_sub(1)).rev() {
        strides[f] = strides[f + 1] * dims[f + 1];
    }
    let kept: Vec<(usize, usize)> = keep.iter().map(|&f| (dims[f], strides[f])).collect();
    let traced: Vec<(usize, usize)> = (0..dims.len())
        .filter(|f| !keep.contains(f))
        .map(|f| (dims[f], strides[f]))
        .collect();
    let kept_off = offset_table(&kept);
    let traced_off = offset_table(&traced);
    let dk = kept_off.len();
    let mut out = ComplexMatrix::zeros(dk, dk);
    for (oi, &bi) in kept_off.iter().enumerate() {
        for (oj, &bj) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += m.get(bi + t, bj + t);
            }
            out.set(oi, oj, acc);
        }
    }
    Ok(out)
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Usage("eigenvalues need a square matrix".into()));
    }
    let scale = m.max_abs().max(1.0);
    if m.hermiticity_defect() > 1e-10 * scale {
        return Err(Error::Usage("matrix is not Hermitian".into()));
    }
    let mut eig: Vec<f64> = m.to_nalgebra().symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(eig)
}

/// Sum of singular values. Hermitian inputs take the eigenvalue route.
pub fn trace_norm(m: &ComplexMatrix) -> f64 {
    let scale = m.max_abs().max(1.0);
    if m.is_square() && m.hermiticity_defect() <= 1e-10 * scale {
        let eig = m.to_nalgebra().symmetric_eigenvalues();
        eig.iter().map(|l| l.abs()).sum()
    } else {
        let svd = nalgebra::SVD::new(m.to_nalgebra(), false, false);
        svd.singular_values.iter().sum()
    }
}

/// Half the trace norm of (a - b).
pub fn trace_distance_raw(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    0.5 * trace_norm(&a.sub(b))
}

/// A validated quantum state over an explicit tensor layout.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    mat: ComplexMatrix,
    dims: Vec<usize>,
}

impl DensityMatrix {
    /// Validates finiteness, Hermiticity, unit trace and positivity.
    pub fn new(mat: ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::Config("state matrix must be square".into()));
        }
        let total: usize = dims.iter().product();
        if total != mat.rows() || dims.is_empty() {
            return Err(Error::Config(format!(
                "layout {:?} does not match dimension {}",
                dims,
                mat.rows()
            )));
        }
        if !mat.is_finite() {
            return Err(Error::Config("state contains non-finite entries".into()));
        }
        if mat.hermiticity_defect() > tol::HERMITICITY {
            return Err(Error::Config(format!(
                "state is not Hermitian, defect {:.3e}",
                mat.hermiticity_defect()
            )));
        }
        let tr = mat.trace();
        if (tr.re - 1.0).abs() > tol::TRACE || tr.im.abs() > tol::TRACE {
            return Err(Error::Config(format!("state trace is {tr}, expected 1")));
        }
        let eig = hermitian_eigenvalues(&mat)?;
        if let Some(min) = eig.first() {
            if *min < tol::PSD_FLOOR {
                return Err(Error::Config(format!(
                    "state has negative eigenvalue {min:.3e}"
                )));
            }
        }
        Ok(Self { mat, dims })
    }

    /// Skips validation. For internal hot paths on matrices produced by
    /// trace-preserving arithmetic; public constructors validate.
    pub(crate) fn new_unchecked(mat: ComplexMatrix, dims: Vec<usize>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), mat.rows());
        Self { mat, dims }
    }

    pub fn pure(state: &ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        if state.cols() != 1 {
            return Err(Error::Config("pure state needs a column vector".into()));
        }
        let norm2: f64 = state.data().iter().map(|z| z.norm_sqr()).sum();
        if (norm2 - 1.0).abs() > tol::TRACE {
            return Err(Error::Config(format!("state vector norm^2 is {norm2}")));
        }
        Self::new(state.mul(&state.dagger()), dims)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.mat
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.mat.rows()
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.mat
    }

    /// Reduced state over the kept factors.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let reduced = partial_trace_raw(&self.mat, &self.dims, keep)?;
        let dims = keep.iter().map(|&f| self.dims[f]).collect();
        Ok(DensityMatrix::new_unchecked(reduced, dims))
    }

    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        self.mat.trace_product(op).re
    }

    /// Re-runs the full validation, for states produced by integration.
    pub fn validate(&self) -> Result<()> {
        DensityMatrix::new(self.mat.clone(), self.dims.clone()).map(|_| ())
    }
}

pub fn trace_distance(a: &DensityMatrix, b: &DensityMatrix) -> f64 {
    trace_distance_raw(a.matrix(), b.matrix())
}
