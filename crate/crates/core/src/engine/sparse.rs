//! Row-wise updates over observed fibers.
//!
//! For row `i` of mode `n` the block objective is the quadratic
//! `a P a^T - 2 a q^T + const` with
//!
//! ```text
//! P = sum_{slice} kr kr^T + alpha * (*_{k != n} U_k^T U_k) + beta I
//! q = sum_{slice} x kr    + alpha * a_prev_i (*_{k != n} A_prev_k^T U_k)
//! ```
//!
//! where `kr` is the Khatri–Rao row of the other modes at the entry and
//! `U_k` is the leading (previously existing) rows of the current factor.
//! The alpha terms apply only to rows that already existed.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::Result;
use crate::linalg::Cholesky;
use crate::tensor::{gram, hadamard_of_grams, EntrySource, FactorMatrix, RowBuckets, Shape};

/// Observed entries in a flat layout with per-mode row buckets.
#[derive(Clone, Debug)]
pub struct SparseData {
    shape: Shape,
    coords: Vec<usize>,
    values: Vec<f64>,
    buckets: Vec<RowBuckets>,
}

impl SparseData {
    pub fn from_source(src: &dyn EntrySource) -> Self {
        let shape = src.shape().clone();
        let order = shape.order();
        let mut coords = Vec::with_capacity(src.nnz() * order);
        let mut values = Vec::with_capacity(src.nnz());
        src.for_each_entry(&mut |idx, v| {
            coords.extend_from_slice(idx);
            values.push(v);
        });
        let buckets = (0..order)
            .map(|n| RowBuckets::build(&coords, order, n, shape.dim(n)))
            .collect();
        SparseData {
            shape,
            coords,
            values,
            buckets,
        }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries whose mode-`mode` coordinate equals `row`.
    pub fn slice(&self, mode: usize, row: usize) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        let order = self.shape.order();
        self.buckets[mode]
            .row(row)
            .iter()
            .map(move |&k| (&self.coords[k * order..(k + 1) * order], self.values[k]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        let order = self.shape.order();
        self.coords.chunks_exact(order).zip(self.values.iter().copied())
    }
}

impl EntrySource for SparseData {
    fn shape(&self) -> &Shape {
        &self.shape
    }

    fn nnz(&self) -> usize {
        self.values.len()
    }

    fn for_each_entry(&self, f: &mut dyn FnMut(&[usize], f64)) {
        for (idx, v) in self.iter() {
            f(idx, v);
        }
    }
}

/// The data-independent parts of every row system of one mode.
#[derive(Clone, Debug)]
pub struct ModeTerms {
    pub mode: usize,
    /// Rows below this index existed at the previous step.
    pub old_rows: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `*_{k != n} U_k^T U_k`
    pub upper_gram: Array2<f64>,
    /// `*_{k != n} A_prev_k^T U_k`
    pub cross_gram: Array2<f64>,
}

impl ModeTerms {
    /// `prev` is the previous model; `None` (or `alpha == 0`) drops the
    /// alpha terms entirely.
    pub fn new(
        factors: &[FactorMatrix],
        prev: Option<&[FactorMatrix]>,
        mode: usize,
        alpha: f64,
        beta: f64,
    ) -> Self {
        let rank = factors[0].ncols();
        match prev {
            Some(prev) if alpha > 0.0 => {
                let uppers: Vec<_> = factors
                    .iter()
                    .zip(prev)
                    .map(|(a, p)| a.slice(s![..p.nrows(), ..]))
                    .collect();
                let upper: Vec<_> = uppers.iter().map(|u| u.t().dot(u)).collect();
                let cross: Vec<_> = prev.iter().zip(&uppers).map(|(p, u)| p.t().dot(u)).collect();
                ModeTerms {
                    mode,
                    old_rows: prev[mode].nrows(),
                    alpha,
                    beta,
                    upper_gram: hadamard_of_grams(&upper, mode),
                    cross_gram: hadamard_of_grams(&cross, mode),
                }
            }
            _ => ModeTerms {
                mode,
                old_rows: 0,
                alpha: 0.0,
                beta,
                upper_gram: Array2::zeros((rank, rank)),
                cross_gram: Array2::zeros((rank, rank)),
            },
        }
    }

    fn is_old(&self, row: usize) -> bool {
        row < self.old_rows
    }
}

/// Normal equations `a P = q` of one row.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSystem {
    pub gram: Array2<f64>,
    pub rhs: Array1<f64>,
}

/// Assembles the system of `row`. `prev_row` is that row of the previous
/// factor and is only read for rows that already existed.
pub fn build_row_system<'e>(
    terms: &ModeTerms,
    factors: &[FactorMatrix],
    prev_row: Option<ArrayView1<f64>>,
    row: usize,
    slice: impl IntoIterator<Item = (&'e [usize], f64)>,
) -> RowSystem {
    let rank = factors[0].ncols();
    let mut gram = Array2::eye(rank) * terms.beta;
    let mut rhs = Array1::zeros(rank);
    if terms.is_old(row) && terms.alpha > 0.0 {
        gram.scaled_add(terms.alpha, &terms.upper_gram);
        let a_prev = prev_row.expect("old rows need their previous values");
        rhs.scaled_add(terms.alpha, &a_prev.dot(&terms.cross_gram));
    }
    let mut kr = vec![0.0; rank];
    let mut g = vec![0.0; rank * rank];
    let mut q = vec![0.0; rank];
    for (idx, x) in slice {
        crate::tensor::row_product(factors, idx, terms.mode, &mut kr);
        for (r, &kr_r) in kr.iter().enumerate() {
            q[r] += x * kr_r;
            for (gc, &kr_c) in g[r * rank..(r + 1) * rank].iter_mut().zip(&kr) {
                *gc += kr_r * kr_c;
            }
        }
    }
    for (dst, src) in gram.iter_mut().zip(&g) {
        *dst += src;
    }
    for (dst, src) in rhs.iter_mut().zip(&q) {
        *dst += src;
    }
    RowSystem { gram, rhs }
}

/// `q P^{-1}`.
pub fn sparse_row_update(sys: &RowSystem, jitter: f64) -> Result<Array1<f64>> {
    Ok(Cholesky::factor(&sys.gram, jitter)?.solve_vec(sys.rhs.view()))
}

/// Solves every row of `mode` against the current factors and returns the
/// new factor. Rows with no observed entries keep their current value
/// unless they carry alpha information.
pub fn sparse_mode_update(
    data: &SparseData,
    factors: &[FactorMatrix],
    prev: Option<&[FactorMatrix]>,
    mode: usize,
    alpha: f64,
    beta: f64,
    jitter: f64,
) -> Result<FactorMatrix> {
    let terms = ModeTerms::new(factors, prev, mode, alpha, beta);
    let mut out = factors[mode].clone();
    // Every old row with an empty slice shares the same gram.
    let mut alpha_only: Option<Cholesky> = None;
    for row in 0..out.nrows() {
        let mut slice = data.slice(mode, row).peekable();
        let empty = slice.peek().is_none();
        if empty && !(terms.is_old(row) && terms.alpha > 0.0) {
            continue;
        }
        let prev_row = prev.filter(|_| terms.is_old(row)).map(|p| p[mode].row(row));
        let sys = build_row_system(&terms, factors, prev_row, row, slice);
        let solved = if empty {
            if alpha_only.is_none() {
                alpha_only = Some(Cholesky::factor(&sys.gram, jitter)?);
            }
            alpha_only.as_ref().expect("just set").solve_vec(sys.rhs.view())
        } else {
            sparse_row_update(&sys, jitter)?
        };
        out.row_mut(row).assign(&solved);
    }
    Ok(out)
}

/// One ascending sweep of row-wise updates over every mode.
pub fn sparse_sweep(
    data: &SparseData,
    factors: &mut [FactorMatrix],
    prev: Option<&[FactorMatrix]>,
    alpha: f64,
    beta: f64,
    jitter: f64,
) -> Result<()> {
    for mode in 0..factors.len() {
        factors[mode] = sparse_mode_update(data, factors, prev, mode, alpha, beta, jitter)?;
    }
    Ok(())
}

/// `*_{k != n} A_k^T A_k` for the current factors.
pub(crate) fn full_gram(factors: &[FactorMatrix], mode: usize) -> Array2<f64> {
    let grams: Vec<_> = factors.iter().map(gram).collect();
    hadamard_of_grams(&grams, mode)
}
