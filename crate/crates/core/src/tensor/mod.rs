//! Dense and sparse tensor containers plus the CP tensor algebra.
//!
//! Indices are 0-based. Dense values are stored row-major with mode 0
//! varying slowest, so the linear offset of `(i_0, .., i_{N-1})` is
//! `sum_n i_n * stride_n` with `stride_{N-1} = 1`.

mod algebra;
mod coo;
pub mod io;
mod kruskal;
mod metrics;

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub use algebra::{fold, hadamard, khatri_rao, khatri_rao_except, kronecker, unfold};
pub use coo::{CooTensor, EntrySource, RowBuckets};
pub use kruskal::{
    gram, hadamard_of_grams, kruskal_at, kruskal_reconstruct, mttkrp, mttkrp_sparse, FactorMatrix,
    KruskalModel,
};
pub(crate) use kruskal::{eval_at, mttkrp_factors, row_product};
pub use metrics::{pof_completion, pof_factorization, pof_observed};

/// Mode sizes of a tensor. Every mode has at least one slice.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("a shape needs at least one mode".into()));
        }
        if let Some(n) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArgument(format!("mode {n} has size zero")));
        }
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.len()
    }

    pub fn dim(&self, mode: usize) -> usize {
        self.0[mode]
    }

    pub fn num_cells(&self) -> usize {
        self.0.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.0.len()];
        for n in (0..self.0.len().saturating_sub(1)).rev() {
            strides[n] = strides[n + 1] * self.0[n + 1];
        }
        strides
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        index.len() == self.0.len() && index.iter().zip(&self.0).all(|(&i, &d)| i < d)
    }

    pub fn check_index(&self, index: &[usize]) -> Result<()> {
        if self.contains(index) {
            Ok(())
        } else {
            Err(Error::IndexOutOfBounds {
                index: index.to_vec(),
                dims: self.0.clone(),
            })
        }
    }

    pub fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.order() {
            Ok(())
        } else {
            Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            })
        }
    }

    /// Row-major linear offset. The index must be in bounds.
    pub fn offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.0)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.0.len()];
        for n in (0..self.0.len()).rev() {
            index[n] = offset % self.0[n];
            offset /= self.0[n];
        }
        index
    }

    pub fn with_dim(&self, mode: usize, size: usize) -> Result<Shape> {
        self.check_mode(mode)?;
        let mut dims = self.0.clone();
        dims[mode] = size;
        Shape::new(dims)
    }

    /// True when `self` is at least as large as `other` in every mode.
    pub fn covers(&self, other: &Shape) -> bool {
        self.order() == other.order() && self.0.iter().zip(&other.0).all(|(a, b)| a >= b)
    }

    /// All indices in row-major order.
    pub fn cells(&self) -> CellIter {
        CellIter {
            dims: self.0.clone(),
            next: Some(vec![0; self.0.len()]),
        }
    }
}

impl TryFrom<Vec<usize>> for Shape {
    type Error = Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Shape::new(dims)
    }
}

impl From<Shape> for Vec<usize> {
    fn from(shape: Shape) -> Self {
        shape.0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join("x"))
    }
}

/// Odometer over the cells of a shape.
pub struct CellIter {
    dims: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl Iterator for CellIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut n = self.dims.len();
        while n > 0 {
            n -= 1;
            succ[n] += 1;
            if succ[n] < self.dims[n] {
                self.next = Some(succ);
                return Some(current);
            }
            succ[n] = 0;
        }
        Some(current)
    }
}

/// Advances `index` to the next cell in row-major order. Returns the
/// outermost mode that changed, or `None` once the odometer wraps.
pub(crate) fn advance(index: &mut [usize], dims: &[usize]) -> Option<usize> {
    let mut n = dims.len();
    while n > 0 {
        n -= 1;
        index[n] += 1;
        if index[n] < dims[n] {
            return Some(n);
        }
        index[n] = 0;
    }
    None
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    shape: Shape,
    values: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Shape, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.num_cells() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for shape {}",
                values.len(),
                shape
            )));
        }
        Ok(DenseTensor { shape, values })
    }

    pub fn zeros(shape: Shape) -> Self {
        let n = shape.num_cells();
        DenseTensor {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(&[usize]) -> f64) -> Self {
        let values = shape.cells().map(|idx| f(&idx)).collect();
        DenseTensor { shape, values }
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        self.shape.check_index(index)?;
        Ok(self.values[self.shape.offset(index)])
    }

    pub fn set(&mut self, index: &[usize], value: f64) -> Result<()> {
        self.shape.check_index(index)?;
        let off = self.shape.offset(index);
        self.values[off] = value;
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// The leading sub-box `[0, d_0) x .. x [0, d_{N-1})` of this tensor.
    pub fn leading(&self, shape: &Shape) -> Result<DenseTensor> {
        if !self.shape.covers(shape) {
            return Err(Error::ShapeMismatch(format!(
                "{} is not inside {}",
                shape, self.shape
            )));
        }
        if shape == &self.shape {
            return Ok(self.clone());
        }
        Ok(DenseTensor::from_fn(shape.clone(), |idx| {
            self.values[self.shape.offset(idx)]
        }))
    }
}

/// A set of cells of a tensor, used for observation masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexSet {
    shape: Shape,
    indices: BTreeSet<Vec<usize>>,
}

impl IndexSet {
    pub fn empty(shape: Shape) -> Self {
        IndexSet {
            shape,
            indices: BTreeSet::new(),
        }
    }

    pub fn full(shape: Shape) -> Self {
        let indices = shape.cells().collect();
        IndexSet { shape, indices }
    }

    pub fn from_indices<I>(shape: Shape, indices: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<usize>>,
    {
        let mut set = IndexSet::empty(shape);
        for idx in indices {
            set.insert(idx)?;
        }
        Ok(set)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Inserts an index; returns false when it was already present.
    pub fn insert(&mut self, index: Vec<usize>) -> Result<bool> {
        self.shape.check_index(&index)?;
        Ok(self.indices.insert(index))
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        self.indices.contains(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[usize]> {
        self.indices.iter().map(|v| v.as_slice())
    }

    /// Re-homes the set into a larger shape.
    pub fn embed(&self, shape: &Shape) -> Result<IndexSet> {
        if !shape.covers(&self.shape) {
            return Err(Error::ShapeMismatch(format!(
                "cannot embed {} into {}",
                self.shape, shape
            )));
        }
        Ok(IndexSet {
            shape: shape.clone(),
            indices: self.indices.clone(),
        })
    }

    fn aligned(&self, other: &IndexSet) -> Result<Shape> {
        if self.shape.order() != other.shape.order() {
            return Err(Error::ShapeMismatch(format!(
                "{} vs {}",
                self.shape, other.shape
            )));
        }
        let dims = self
            .shape
            .dims()
            .iter()
            .zip(other.shape.dims())
            .map(|(a, b)| *a.max(b))
            .collect();
        Shape::new(dims)
    }

    /// Union over the componentwise-max bounding shape.
    pub fn union(&self, other: &IndexSet) -> Result<IndexSet> {
        let shape = self.aligned(other)?;
        Ok(IndexSet {
            shape,
            indices: self.indices.union(&other.indices).cloned().collect(),
        })
    }

    pub fn difference(&self, other: &IndexSet) -> Result<IndexSet> {
        self.aligned(other)?;
        Ok(IndexSet {
            shape: self.shape.clone(),
            indices: self.indices.difference(&other.indices).cloned().collect(),
        })
    }

    pub fn intersection(&self, other: &IndexSet) -> Result<IndexSet> {
        self.aligned(other)?;
        Ok(IndexSet {
            shape: self.shape.clone(),
            indices: self.indices.intersection(&other.indices).cloned().collect(),
        })
    }

    /// Dense membership bitmap in row-major order of `shape`.
    pub fn bitmap(&self, shape: &Shape) -> Result<Vec<bool>> {
        let mut bits = vec![false; shape.num_cells()];
        for idx in &self.indices {
            shape.check_index(idx)?;
            bits[shape.offset(idx)] = true;
        }
        Ok(bits)
    }
}
