//! Dense row-major `f64` arrays of rank 0, 1 or 2 and the raw kernels the
//! tape operations are built from.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.len() > 2 {
            return Err(Error::dim("tensor", format!("rank {} unsupported", shape.len())));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, expected, data.len()),
            ));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("from_rows", "ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::matrix(rows.len(), cols, data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Tensor::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Row count of a matrix; 1 for vectors and scalars.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            2 => self.shape[0],
            _ => 1,
        }
    }

    /// Column count of a matrix, length of a vector, 1 for scalars.
    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let c = self.cols();
        &self.data[row * c..(row + 1) * c]
    }

    /// Value of a rank-0 (or single-element) tensor.
    pub fn item(&self) -> f64 {
        self.data[0]
    }

    pub fn is_finite(&self) -> bool {
        // x * 0 is NaN exactly for non-finite x; independent lanes vectorize.
        let mut acc = [0.0f64; 4];
        let chunks = self.data.chunks_exact(4);
        let tail = chunks.remainder();
        for c in chunks {
            for (a, &v) in acc.iter_mut().zip(c) {
                *a += v * 0.0;
            }
        }
        for &v in tail {
            acc[0] += v * 0.0;
        }
        acc.iter().all(|a| *a == 0.0)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    /// Stack selected rows of a matrix into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            shape: vec![indices.len(), c],
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn expect_matrix(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            s => Err(Error::dim(op, format!("expected a matrix, got shape {:?}", s))),
        }
    }

    fn expect_vector(&self, op: &'static str) -> Result<usize> {
        match self.shape.as_slice() {
            &[n] => Ok(n),
            s => Err(Error::dim(op, format!("expected a vector, got shape {:?}", s))),
        }
    }
}

// Matrix kernels. Zero entries of the left operand are skipped; ReLU outputs
// make that common.

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.expect_matrix("matmul")?;
    let (k2, n) = b.expect_matrix("matmul")?;
    if k != k2 {
        return Err(Error::dim("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a.data[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

/// `a · bᵀ`
pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.expect_matrix("matmul_nt")?;
    let (n, k2) = b.expect_matrix("matmul_nt")?;
    if k != k2 {
        return Err(Error::dim("matmul_nt", format!("[{m}, {k}] x [{n}, {k2}]ᵀ")));
    }
    let mut bt = vec![0.0; k * n];
    for j in 0..n {
        for p in 0..k {
            bt[p * n + j] = b.data[j * k + p];
        }
    }
    matmul(a, &Tensor::matrix(k, n, bt)?)
}

/// `aᵀ · b`
pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = a.expect_matrix("matmul_tn")?;
    let (k2, n) = b.expect_matrix("matmul_tn")?;
    if k != k2 {
        return Err(Error::dim("matmul_tn", format!("[{k}, {m}]ᵀ x [{k2}, {n}]")));
    }
    let mut out = vec![0.0; m * n];
    for p in 0..k {
        let brow = &b.data[p * n..(p + 1) * n];
        for i in 0..m {
            let api = a.data[p * m + i];
            if api == 0.0 {
                continue;
            }
            let row = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o += api * bv;
            }
        }
    }
    Tensor::matrix(m, n, out)
}

pub(crate) fn concat_cols(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, n1) = a.expect_matrix("concat")?;
    let (m2, n2) = b.expect_matrix("concat")?;
    if m != m2 {
        return Err(Error::dim("concat", format!("row counts {m} and {m2}")));
    }
    let mut out = Vec::with_capacity(m * (n1 + n2));
    for i in 0..m {
        out.extend_from_slice(a.row(i));
        out.extend_from_slice(b.row(i));
    }
    Tensor::matrix(m, n1 + n2, out)
}

pub(crate) fn slice_cols(a: &Tensor, start: usize, end: usize) -> Result<Tensor> {
    let (m, n) = a.expect_matrix("slice_cols")?;
    if start > end || end > n {
        return Err(Error::dim("slice_cols", format!("{start}..{end} of {n} columns")));
    }
    let mut out = Vec::with_capacity(m * (end - start));
    for i in 0..m {
        out.extend_from_slice(&a.row(i)[start..end]);
    }
    Tensor::matrix(m, end - start, out)
}

pub(crate) fn pad_cols(a: &Tensor, start: usize, total: usize) -> Result<Tensor> {
    let (m, n) = a.expect_matrix("pad_cols")?;
    if start + n > total {
        return Err(Error::dim("pad_cols", format!("{n} columns at {start} exceed {total}")));
    }
    let mut out = vec![0.0; m * total];
    for i in 0..m {
        out[i * total + start..i * total + start + n].copy_from_slice(a.row(i));
    }
    Tensor::matrix(m, total, out)
}

pub(crate) fn sum_axis1(a: &Tensor) -> Result<Tensor> {
    let (m, _) = a.expect_matrix("sum_axis1")?;
    Ok(Tensor::vector((0..m).map(|i| a.row(i).iter().sum()).collect()))
}

pub(crate) fn sum_axis0(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.expect_matrix("sum_axis0")?;
    let mut out = vec![0.0; n];
    for i in 0..m {
        for (o, v) in out.iter_mut().zip(a.row(i)) {
            *o += v;
        }
    }
    Ok(Tensor::vector(out))
}

/// `[m] -> [m, n]`, each entry repeated along its row.
pub(crate) fn broadcast_cols(v: &Tensor, n: usize) -> Result<Tensor> {
    let m = v.expect_vector("broadcast_cols")?;
    let mut out = Vec::with_capacity(m * n);
    for &x in &v.data {
        out.extend(std::iter::repeat_n(x, n));
    }
    Tensor::matrix(m, n, out)
}

/// `[n] -> [m, n]`, the vector repeated as every row.
pub(crate) fn broadcast_rows(v: &Tensor, m: usize) -> Result<Tensor> {
    let n = v.expect_vector("broadcast_rows")?;
    let mut out = Vec::with_capacity(m * n);
    for _ in 0..m {
        out.extend_from_slice(&v.data);
    }
    Tensor::matrix(m, n, out)
}

/// Row-wise `log Σ exp`, shifted by the row maximum.
pub(crate) fn logsumexp_rows(a: &Tensor) -> Result<Tensor> {
    let (m, n) = a.expect_matrix("logsumexp")?;
    if n == 0 {
        return Err(Error::dim("logsumexp", "zero columns"));
    }
    let out = (0..m)
        .map(|i| {
            let row = a.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        })
        .collect();
    Ok(Tensor::vector(out))
}
