//! Minimal dense matrix type and a cyclic-Jacobi symmetric eigensolver.
//!
//! Matrices here never exceed 64x64 (Gram matrices of weight layers), so an
//! O(n^3)-per-sweep Jacobi iteration is entirely adequate and keeps the crate
//! free of external linear-algebra dependencies.

use crate::error::{Error, Result};

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("matrix needs at least one row"));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Ok(Mat {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, x.len(), "matvec shape mismatch");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps until the off-diagonal Frobenius norm drops below 1e-12 (relative
/// to the matrix norm). Returns (eigenvalues, eigenvectors); column k of the
/// eigenvector matrix pairs with eigenvalue k. Neither is sorted.
pub fn jacobi_eigh(a: &Mat) -> Result<(Vec<f64>, Mat)> {
    if a.rows() != a.cols() {
        return Err(Error::invalid("jacobi_eigh needs a square matrix"));
    }
    let n = a.rows();
    let mut m = a.clone();
    let mut v = Mat::identity(n);
    if n == 1 {
        return Ok((vec![m.get(0, 0)], v));
    }

    let scale = m.frobenius_norm().max(1e-300);
    const MAX_SWEEPS: usize = 100;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m.get(p, q) * m.get(p, q);
            }
        }
        if (2.0 * off).sqrt() < 1e-12 * scale {
            let eig = (0..n).map(|i| m.get(i, i)).collect();
            return Ok((eig, v));
        }

        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                // smaller-magnitude root keeps rotations stable
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    Err(Error::Internal(
        "jacobi_eigh failed to converge in 100 sweeps".into(),
    ))
}

/// Eigenvalues only.
pub fn jacobi_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    jacobi_eigh(a).map(|(e, _)| e)
}

/// Squared singular values of a rectangular matrix, sorted ascending.
///
/// Uses the Gram matrix on the smaller side, so an m x n matrix yields
/// min(m, n) values.
pub fn squared_singular_values(w: &Mat) -> Result<Vec<f64>> {
    let gram = if w.rows() <= w.cols() {
        w.matmul(&w.transpose())
    } else {
        w.transpose().matmul(w)
    };
    let mut eig = jacobi_eigenvalues(&gram)?;
    // Gram eigenvalues are nonnegative up to rounding.
    for e in eig.iter_mut() {
        if *e < 0.0 {
            *e = 0.0;
        }
    }
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}
