use crate::error::{invalid_arg, Result};

/// Dense row-major array of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        Self {
            dims: dims.to_vec(),
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(invalid_arg(format!(
                "shape {dims:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    /// Stacks equal-length rows into a `[rows, cols]` matrix.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(invalid_arg("ragged rows"));
        }
        Ok(Self {
            dims: vec![rows.len(), cols],
            data: rows.concat(),
        })
    }

    pub fn row_vector(data: Vec<f64>) -> Self {
        Self {
            dims: vec![1, data.len()],
            data,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Rows of a matrix; panics on tensors that are not rank 2.
    pub fn rows(&self) -> usize {
        assert_eq!(self.dims.len(), 2, "rows() on rank-{} tensor", self.dims.len());
        self.dims[0]
    }

    pub fn cols(&self) -> usize {
        assert_eq!(self.dims.len(), 2, "cols() on rank-{} tensor", self.dims.len());
        self.dims[1]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Tensor {
        self.map(|v| v * s)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor) -> Result<()> {
        if self.dims != other.dims {
            return Err(invalid_arg(format!(
                "shape mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Column slice `[.., start..end]` of a matrix.
    pub fn columns(&self, start: usize, end: usize) -> Tensor {
        let rows = self.rows();
        let mut data = Vec::with_capacity(rows * (end - start));
        for i in 0..rows {
            data.extend_from_slice(&self.row(i)[start..end]);
        }
        Tensor {
            dims: vec![rows, end - start],
            data,
        }
    }

    /// Concatenates two matrices with equal row counts along columns.
    pub fn hconcat(&self, other: &Tensor) -> Result<Tensor> {
        if self.rows() != other.rows() {
            return Err(invalid_arg("hconcat row mismatch"));
        }
        let mut data = Vec::with_capacity(self.len() + other.len());
        for i in 0..self.rows() {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(Tensor {
            dims: vec![self.rows(), self.cols() + other.cols()],
            data,
        })
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` on row-major matrices; `ta`/`tb`
/// transpose the corresponding operand.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    alpha: f64,
    a: &Tensor,
    ta: bool,
    b: &Tensor,
    tb: bool,
    beta: f64,
    c: &mut Tensor,
) {
    let (ar, ac) = (a.rows(), a.cols());
    let (br, bc) = (b.rows(), b.cols());
    let (m, k) = if ta { (ac, ar) } else { (ar, ac) };
    let (k2, n) = if tb { (bc, br) } else { (br, bc) };
    assert_eq!(k, k2, "inner dimension mismatch");
    assert_eq!(c.dims(), &[m, n], "output shape mismatch");
    let (rsa, csa) = if ta { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if tb { (1, bc as isize) } else { (bc as isize, 1) };
    // SAFETY: strides describe the exact row-major layouts checked above, and
    // `c` does not alias `a` or `b` (it is borrowed mutably).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Matrix product of two rank-2 tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims.len() != 2 || b.dims.len() != 2 || a.cols() != b.rows() {
        return Err(invalid_arg(format!(
            "cannot multiply {:?} by {:?}",
            a.dims, b.dims
        )));
    }
    let mut c = Tensor::zeros(&[a.rows(), b.cols()]);
    gemm(1.0, a, false, b, false, 0.0, &mut c);
    Ok(c)
}

/// A trainable tensor with its gradient accumulator and Adam moments.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    /// Rows (first axis) with an all-zero gradient are skipped by Adam,
    /// moments included. Used for embedding tables such as a codebook.
    pub sparse_rows: bool,
    pub(crate) m: Tensor,
    pub(crate) v: Tensor,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let dims = value.dims().to_vec();
        Self {
            name: name.into(),
            value,
            grad: Tensor::zeros(&dims),
            sparse_rows: false,
            m: Tensor::zeros(&dims),
            v: Tensor::zeros(&dims),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    /// Clears the optimizer moments of one row, e.g. after overwriting it.
    pub fn reset_row_moments(&mut self, row: usize) {
        self.m.row_mut(row).fill(0.0);
        self.v.row_mut(row).fill(0.0);
    }
}
