use ndarray::Array2;

use super::{DenseTensor, Shape};
use crate::error::{Error, Result};

/// Column-wise Kronecker product. Row `i * K + k` of the result is
/// `a[i] * b[k]` element-wise, which matches the column order of [`unfold`].
pub fn khatri_rao(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.ncols() != b.ncols() {
        return Err(Error::RankMismatch {
            left: a.ncols(),
            right: b.ncols(),
        });
    }
    let (i_rows, k_rows, rank) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = Array2::zeros((i_rows * k_rows, rank));
    for i in 0..i_rows {
        for k in 0..k_rows {
            let mut row = out.row_mut(i * k_rows + k);
            for r in 0..rank {
                row[r] = a[[i, r]] * b[[k, r]];
            }
        }
    }
    Ok(out)
}

/// Khatri–Rao product of all factors except `skip`, in ascending mode order.
pub fn khatri_rao_except(factors: &[Array2<f64>], skip: usize) -> Result<Array2<f64>> {
    let rank = factors
        .first()
        .map(|f| f.ncols())
        .ok_or_else(|| Error::InvalidArgument("no factors".into()))?;
    let mut acc = Array2::ones((1, rank));
    for (k, f) in factors.iter().enumerate() {
        if k != skip {
            acc = khatri_rao(&acc, f)?;
        }
    }
    Ok(acc)
}

pub fn kronecker(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let s = a[[i, j]];
            for k in 0..br {
                for l in 0..bc {
                    out[[i * br + k, j * bc + l]] = s * b[[k, l]];
                }
            }
        }
    }
    out
}

pub fn hadamard(a: &DenseTensor, b: &DenseTensor) -> Result<DenseTensor> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch(format!(
            "hadamard of {} and {}",
            a.shape(),
            b.shape()
        )));
    }
    let values = a.values().iter().zip(b.values()).map(|(x, y)| x * y).collect();
    DenseTensor::new(a.shape().clone(), values)
}

/// Column strides of the mode-`mode` unfolding, indexed by mode (zero for
/// `mode` itself).
fn unfold_strides(dims: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; dims.len()];
    let mut s = 1;
    for k in (0..dims.len()).rev() {
        if k != mode {
            strides[k] = s;
            s *= dims[k];
        }
    }
    strides
}

/// Mode-`mode` matricization. The column index is the row-major
/// linearization of the remaining modes in ascending order, so for an
/// order-3 tensor `X_0(i, j * I_2 + k) = X(i, j, k)`.
pub fn unfold(x: &DenseTensor, mode: usize) -> Result<Array2<f64>> {
    let shape = x.shape();
    shape.check_mode(mode)?;
    let dims = shape.dims();
    let cols = shape.num_cells() / dims[mode];
    let strides = unfold_strides(dims, mode);
    let mut out = Array2::zeros((dims[mode], cols));
    for (idx, &v) in shape.cells().zip(x.values()) {
        let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out[[idx[mode], col]] = v;
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Array2<f64>, mode: usize, shape: &Shape) -> Result<DenseTensor> {
    shape.check_mode(mode)?;
    let dims = shape.dims();
    let cols = shape.num_cells() / dims[mode];
    if m.dim() != (dims[mode], cols) {
        return Err(Error::ShapeMismatch(format!(
            "matrix {:?} cannot fold into {} along mode {}",
            m.dim(),
            shape,
            mode
        )));
    }
    let strides = unfold_strides(dims, mode);
    Ok(DenseTensor::from_fn(shape.clone(), |idx| {
        let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        m[[idx[mode], col]]
    }))
}
