//! Naive reference implementations shared by the integration tests.
#![allow(dead_code)]

pub mod checks;

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gocpt::tensor::{CooTensor, DenseTensor, EntrySource, FactorMatrix, KruskalModel, Shape};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn shape(dims: &[usize]) -> Shape {
    Shape::new(dims.to_vec()).unwrap()
}

pub fn random_factors(dims: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> Vec<FactorMatrix> {
    KruskalModel::random_uniform(&shape(dims), rank, rng).unwrap().into_factors()
}

/// Appended rows are filled with fresh random values.
pub fn grow_factors(prev: &[FactorMatrix], dims: &[usize], rng: &mut ChaCha8Rng) -> Vec<FactorMatrix> {
    prev.iter()
        .zip(dims)
        .map(|(p, &d)| {
            let mut f = Array2::zeros((d, p.ncols()));
            for i in 0..d {
                for r in 0..p.ncols() {
                    f[[i, r]] = if i < p.nrows() { p[[i, r]] } else { rng.gen::<f64>() };
                }
            }
            f
        })
        .collect()
}

/// A random instance: current dims, previous dims (some modes grown) and
/// rank, bounded by 4x3x5 and rank 3.
pub fn random_dims(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>, usize) {
    let bounds = [4, 3, 5];
    let dims: Vec<usize> = bounds.iter().map(|&b| rng.gen_range(2..=b)).collect();
    let mut prev: Vec<usize> = dims.iter().map(|&d| if rng.gen_bool(0.5) { d - 1 } else { d }).collect();
    if prev == dims {
        let n = rng.gen_range(0..dims.len());
        prev[n] -= 1;
    }
    (dims, prev, rng.gen_range(1..=3))
}

pub fn all_cells(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &d in dims {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..d).map(move |i| {
                    let mut q = p.clone();
                    q.push(i);
                    q
                })
            })
            .collect();
    }
    out
}

/// Observes each cell with probability `density`, values in [0, 1).
pub fn random_entries(dims: &[usize], density: f64, rng: &mut ChaCha8Rng) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    for idx in all_cells(dims) {
        if rng.gen_bool(density) {
            out.push((idx, rng.gen::<f64>()));
        }
    }
    out
}

pub fn coo(dims: &[usize], entries: &[(Vec<usize>, f64)]) -> CooTensor {
    CooTensor::from_entries(shape(dims), entries.iter().cloned()).unwrap()
}

/// `prod_{k != skip} factors[k][idx[k], r]`, one loop per rank column.
pub fn naive_kr(factors: &[FactorMatrix], idx: &[usize], skip: usize) -> Vec<f64> {
    let rank = factors[0].ncols();
    (0..rank)
        .map(|r| {
            let mut p = 1.0;
            for (k, f) in factors.iter().enumerate() {
                if k != skip {
                    p *= f[[idx[k], r]];
                }
            }
            p
        })
        .collect()
}

pub fn naive_eval(factors: &[FactorMatrix], idx: &[usize]) -> f64 {
    let rank = factors[0].ncols();
    (0..rank)
        .map(|r| factors.iter().zip(idx).map(|(f, &i)| f[[i, r]]).product::<f64>())
        .sum()
}

pub fn naive_dense(factors: &[FactorMatrix]) -> DenseTensor {
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    DenseTensor::from_fn(shape(&dims), |idx| naive_eval(factors, idx))
}

/// Least squares for one factor row, built row by row from an explicit
/// design matrix and solved through its normal equations:
///
/// - one design row per data entry in the slice `mode == row`;
/// - when `prev` is given and `row` is an old row, one row per cell of the
///   previous box in that slice, weighted by sqrt(alpha), whose target is
///   the previous reconstruction;
/// - a ridge of beta on the diagonal.
pub fn brute_force_row(
    factors: &[FactorMatrix],
    prev: Option<&[FactorMatrix]>,
    mode: usize,
    row: usize,
    data: &[(Vec<usize>, f64)],
    alpha: f64,
    beta: f64,
) -> DVector<f64> {
    let rank = factors[0].ncols();
    let mut design: Vec<Vec<f64>> = Vec::new();
    let mut target: Vec<f64> = Vec::new();
    for (idx, x) in data.iter().filter(|(idx, _)| idx[mode] == row) {
        design.push(naive_kr(factors, idx, mode));
        target.push(*x);
    }
    if let Some(prev) = prev {
        if row < prev[mode].nrows() && alpha > 0.0 {
            let old: Vec<usize> = prev.iter().map(|p| p.nrows()).collect();
            let w = alpha.sqrt();
            for idx in all_cells(&old).into_iter().filter(|idx| idx[mode] == row) {
                design.push(naive_kr(factors, &idx, mode).into_iter().map(|v| w * v).collect());
                target.push(w * naive_eval(prev, &idx));
            }
        }
    }
    let d = DMatrix::from_fn(design.len(), rank, |i, j| design[i][j]);
    let y = DVector::from_vec(target);
    let lhs = d.transpose() * &d + DMatrix::identity(rank, rank) * beta;
    let rhs = d.transpose() * y;
    lhs.lu().solve(&rhs).expect("well-posed")
}

pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn flat(f: &FactorMatrix) -> Vec<f64> {
    f.iter().copied().collect()
}

/// Counts every entry handed out through `for_each_entry`.
pub struct CountingSource<'a> {
    pub inner: &'a dyn EntrySource,
    pub reads: Cell<usize>,
}

impl<'a> CountingSource<'a> {
    pub fn new(inner: &'a dyn EntrySource) -> Self {
        CountingSource {
            inner,
            reads: Cell::new(0),
        }
    }
}

impl EntrySource for CountingSource<'_> {
    fn shape(&self) -> &Shape {
        self.inner.shape()
    }

    fn nnz(&self) -> usize {
        self.inner.nnz()
    }

    fn for_each_entry(&self, f: &mut dyn FnMut(&[usize], f64)) {
        self.inner.for_each_entry(&mut |idx, v| {
            self.reads.set(self.reads.get() + 1);
            f(idx, v)
        });
    }
}
