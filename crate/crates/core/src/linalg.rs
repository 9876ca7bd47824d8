//! Small symmetric positive-definite solves for the R x R normal equations.

use ndarray::{Array2, ArrayView1, ArrayViewMut1};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of an SPD matrix.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Factors `a + shift * I`. Returns the smallest pivot on failure.
    fn try_factor(a: &Array2<f64>, shift: f64) -> std::result::Result<Self, f64> {
        let n = a.nrows();
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[[j, j]] + shift;
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(d);
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// Factors `a + jitter * I`. On failure retries once with an extra
    /// `1e-10 * trace(a) / n` on the diagonal; a second failure is an error.
    pub fn factor(a: &Array2<f64>, jitter: f64) -> Result<Self> {
        assert_eq!(a.nrows(), a.ncols(), "cholesky needs a square matrix");
        match Self::try_factor(a, jitter) {
            Ok(c) => Ok(c),
            Err(_) => {
                let n = a.nrows().max(1) as f64;
                let trace = a.diag().sum();
                let extra = 1e-10 * trace.abs() / n;
                Self::try_factor(a, jitter + extra).map_err(|pivot| Error::Singular { trace, pivot })
            }
        }
    }

    /// Solves `L L^T x = b` in place.
    pub fn solve_in_place(&self, mut b: ArrayViewMut1<f64>) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    pub fn solve_vec(&self, b: ArrayView1<f64>) -> ndarray::Array1<f64> {
        let mut x = b.to_owned();
        self.solve_in_place(x.view_mut());
        x
    }

    /// Replaces every row `q` of `rows` by `q P^{-1}` (P symmetric).
    pub fn solve_rows(&self, rows: &mut Array2<f64>) {
        for row in rows.rows_mut() {
            self.solve_in_place(row);
        }
    }
}

/// `q P^{-1}` for a single row vector.
pub fn solve_row(p: &Array2<f64>, q: ArrayView1<f64>, jitter: f64) -> Result<ndarray::Array1<f64>> {
    Ok(Cholesky::factor(p, jitter)?.solve_vec(q))
}

/// `Q P^{-1}` for a block of rows.
pub fn solve_block(p: &Array2<f64>, q: &Array2<f64>, jitter: f64) -> Result<Array2<f64>> {
    let chol = Cholesky::factor(p, jitter)?;
    let mut out = q.clone();
    chol.solve_rows(&mut out);
    Ok(out)
}
