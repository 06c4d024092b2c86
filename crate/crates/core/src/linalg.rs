//! Dense row-major matrices and the norms consumed by the covering bounds.
//!
//! Weight matrices are stored output-major: a weight slot mapping `in_dim`
//! features to `out_dim` features is an `out_dim × in_dim` matrix `W`, and a
//! batch of row-vector features `H` (`n × in_dim`) is mapped to `H · Wᵀ`.
//! With that layout [`Matrix::norm_2_1_of_transpose`] is exactly the group
//! norm that controls the single-matrix covering bound of `H · Wᵀ`.

use std::fmt;
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-10;
pub const DEFAULT_SPECTRAL_MAX_ITER: usize = 10_000;

const MATRIX_MAGIC: &[u8; 4] = b"SVM1";

#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Zero matrix. Panics on a zero dimension.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Dimension(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::Param(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equal-length rows. Panics on ragged or empty input.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        assert!(rows.iter().all(|r| r.as_ref().len() == cols), "ragged rows");
        let data = rows
            .iter()
            .flat_map(|r| r.as_ref().iter().copied())
            .collect();
        Self::from_vec(rows.len(), cols, data).expect("valid rows")
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m.set(i, i, d);
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0.0)
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> Matrix {
        self.map(|x| c * x)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip_with(other, "subtract", |a, b| a - b)
    }

    /// In-place `self += other`.
    pub fn add_assign(&mut self, other: &Matrix) -> Result<()> {
        self.check_same_shape(other, "add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn check_same_shape(&self, other: &Matrix, op: &str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "cannot {op} {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Matrix, op: &str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
        self.check_same_shape(other, op)?;
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Euclidean norm of each row.
    pub fn row_norms(&self) -> Vec<f64> {
        (0..self.rows).map(|r| l2(self.row(r))).collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        l2(&self.data)
    }

    /// Sum over rows of the row Euclidean norms, i.e. the (2,1) group norm
    /// of `selfᵀ` taken column-wise.
    pub fn norm_2_1_of_transpose(&self) -> f64 {
        (0..self.rows).map(|r| l2(self.row(r))).sum()
    }

    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Largest singular value with the default tolerance and iteration cap.
    pub fn spectral_norm(&self) -> Result<f64> {
        spectral_norm(self, DEFAULT_SPECTRAL_TOL, DEFAULT_SPECTRAL_MAX_ITER)
    }
}

#[inline]
fn l2(xs: &[f64]) -> f64 {
    // scaled accumulation keeps tiny and huge entries from under/overflowing
    let scale = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = xs.iter().map(|x| (x / scale) * (x / scale)).sum();
    scale * sum.sqrt()
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.rows {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.cols);
    for i in 0..a.rows {
        let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
        for (k, &aik) in a.row(i).iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                *o += aik * bkj;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ`, the layer map for output-major weights.
pub fn matmul_transposed(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols != b.cols {
        return Err(Error::Dimension(format!(
            "cannot multiply {}x{} by transpose of {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.rows, b.rows);
    for i in 0..a.rows {
        let ar = a.row(i);
        for j in 0..b.rows {
            out.data[i * b.rows + j] = ar.iter().zip(b.row(j)).map(|(x, y)| x * y).sum();
        }
    }
    Ok(out)
}

/// `aᵀ · b`, used for weight gradients.
pub fn transposed_matmul(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows != b.rows {
        return Err(Error::Dimension(format!(
            "cannot multiply transpose of {}x{} by {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    let mut out = Matrix::zeros(a.cols, b.cols);
    for k in 0..a.rows {
        let br = b.row(k);
        for (i, &aki) in a.row(k).iter().enumerate() {
            if aki == 0.0 {
                continue;
            }
            let out_row = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for (o, &bkj) in out_row.iter_mut().zip(br) {
                *o += aki * bkj;
            }
        }
    }
    Ok(out)
}

/// Largest singular value by power iteration on `mᵀm`.
///
/// The iteration starts from the normalized all-ones vector. Because that
/// vector can be exactly orthogonal to the dominant singular subspace (for
/// example `[[1, -1]]`), a second run starts from a fixed non-symmetric
/// vector and the larger Rayleigh estimate is returned. Both runs are
/// deterministic, so the result depends only on `m`.
///
/// Returns `σ` with `|σ − σ_max| ≤ tol · max(1, σ_max)` under the usual
/// linear-convergence model; the estimate never exceeds `σ_max` by more than
/// rounding error.
pub fn spectral_norm(m: &Matrix, tol: f64, max_iter: usize) -> Result<f64> {
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Param(format!("tol must lie in (0,1), got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Param("max_iter must be at least 1".into()));
    }
    if m.is_zero() {
        return Ok(0.0);
    }
    let n = m.cols;
    let ones = vec![1.0; n];
    // golden-ratio sequence: no sign or permutation symmetry
    let skewed: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_749_895).fract())
        .collect();
    let a = power_iterate(m, ones, tol, max_iter)?;
    let b = power_iterate(m, skewed, tol, max_iter)?;
    Ok(a.max(b))
}

fn power_iterate(m: &Matrix, start: Vec<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let mut v = start;
    let norm = l2(&v);
    v.iter_mut().for_each(|x| *x /= norm);

    let mut prev = f64::NAN;
    let mut prev_delta = f64::NAN;
    let mut mv = vec![0.0; m.rows];
    let mut w = vec![0.0; m.cols];
    for _ in 0..max_iter {
        // mv = m v, w = mᵀ (m v)
        for (r, out) in mv.iter_mut().enumerate() {
            *out = m.row(r).iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        let sigma = l2(&mv);
        if sigma == 0.0 {
            // start vector lies in the null space
            return Ok(0.0);
        }
        w.iter_mut().for_each(|x| *x = 0.0);
        for (r, &s) in mv.iter().enumerate() {
            for (o, &a) in w.iter_mut().zip(m.row(r)) {
                *o += a * s;
            }
        }
        let wn = l2(&w);
        v.iter_mut().zip(&w).for_each(|(x, y)| *x = y / wn);

        let delta = (sigma - prev).abs();
        let threshold = tol * sigma.max(1.0);
        if delta <= threshold {
            // geometric tail estimate from the observed contraction ratio
            let ratio = if prev_delta.is_finite() && prev_delta > 0.0 {
                delta / prev_delta
            } else {
                0.0
            };
            if ratio < 1.0 && delta * ratio / (1.0 - ratio) <= threshold {
                return Ok(sigma);
            }
            if delta == 0.0 {
                return Ok(sigma);
            }
        }
        prev_delta = delta;
        prev = sigma;
    }
    Err(Error::Convergence {
        iterations: max_iter,
        last: prev,
    })
}

/// Writes `m` in the `SVM1` binary layout.
pub fn write_matrix<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    w.write_all(MATRIX_MAGIC)?;
    w.write_all(&dim_to_u32(m.rows)?.to_le_bytes())?;
    w.write_all(&dim_to_u32(m.cols)?.to_le_bytes())?;
    for x in &m.data {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<Matrix> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if &magic != MATRIX_MAGIC {
        return Err(Error::Format(format!(
            "expected matrix magic SVM1, found {magic:?}"
        )));
    }
    let rows = read_u32(&mut r, "rows")? as usize;
    let cols = read_u32(&mut r, "cols")? as usize;
    let data = read_f64s(&mut r, rows * cols)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::Format("trailing bytes after matrix entries".into()));
    }
    Matrix::from_vec(rows, cols, data)
}

pub fn save_matrix(path: impl AsRef<std::path::Path>, m: &Matrix) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + 8 * m.data.len());
    write_matrix(&mut buf, m)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_matrix(path: impl AsRef<std::path::Path>) -> Result<Matrix> {
    let bytes = std::fs::read(path)?;
    read_matrix(bytes.as_slice())
}

pub(crate) fn dim_to_u32(d: usize) -> Result<u32> {
    u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => {
            Error::Format(format!("truncated while reading {what}"))
        }
        _ => Error::Io(e),
    })
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    let mut b = [0u8; 8];
    for _ in 0..count {
        read_exact(r, &mut b, "entries")?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}
