use std::collections::HashMap;

use super::{DenseTensor, IndexSet, Shape};
use crate::error::{Error, Result};

/// Read access to a set of observed `(index, value)` entries.
///
/// Solvers read observed data only through this trait, which lets callers
/// meter exactly which entries a solver touches.
pub trait EntrySource {
    fn shape(&self) -> &Shape;
    fn nnz(&self) -> usize;
    fn for_each_entry(&self, f: &mut dyn FnMut(&[usize], f64));
}

/// Coordinate-format sparse tensor. An entry is present exactly when its
/// cell is observed; a stored zero is an observed zero.
#[derive(Clone, Debug)]
pub struct CooTensor {
    shape: Shape,
    coords: Vec<usize>,
    values: Vec<f64>,
    lookup: HashMap<Vec<usize>, usize>,
}

impl PartialEq for CooTensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.coords == other.coords && self.values == other.values
    }
}

impl CooTensor {
    pub fn empty(shape: Shape) -> Self {
        CooTensor {
            shape,
            coords: Vec::new(),
            values: Vec::new(),
            lookup: HashMap::new(),
        }
    }

    /// Builds a tensor from entries, rejecting out-of-bounds and duplicate
    /// coordinates.
    pub fn from_entries<I>(shape: Shape, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let mut t = CooTensor::empty(shape);
        for (idx, v) in entries {
            t.insert(idx, v)?;
        }
        Ok(t)
    }

    /// Every cell of a dense tensor, zeros included.
    pub fn from_dense(dense: &DenseTensor) -> Self {
        let shape = dense.shape().clone();
        let mut t = CooTensor::empty(shape.clone());
        for (idx, &v) in shape.cells().zip(dense.values()) {
            t.push_unchecked(idx, v);
        }
        t
    }

    /// The cells of `dense` selected by `mask`, in mask order.
    pub fn from_dense_masked(dense: &DenseTensor, mask: &IndexSet) -> Result<Self> {
        let mut t = CooTensor::empty(dense.shape().clone());
        for idx in mask.iter() {
            let v = dense.get(idx)?;
            t.push_unchecked(idx.to_vec(), v);
        }
        Ok(t)
    }

    fn push_unchecked(&mut self, idx: Vec<usize>, value: f64) {
        self.coords.extend_from_slice(&idx);
        self.values.push(value);
        self.lookup.insert(idx, self.values.len() - 1);
    }

    pub fn insert(&mut self, index: Vec<usize>, value: f64) -> Result<()> {
        self.shape.check_index(&index)?;
        if !value.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at {index:?}"
            )));
        }
        if self.lookup.contains_key(&index) {
            return Err(Error::DuplicateIndex(index));
        }
        self.push_unchecked(index, value);
        Ok(())
    }

    /// Overwrites the value of an existing entry or appends a new one.
    /// Returns true if the entry already existed.
    pub fn upsert(&mut self, index: &[usize], value: f64) -> Result<bool> {
        self.shape.check_index(index)?;
        if let Some(&pos) = self.lookup.get(index) {
            self.values[pos] = value;
            Ok(true)
        } else {
            self.push_unchecked(index.to_vec(), value);
            Ok(false)
        }
    }

    /// Enlarges the bounds. Existing entries keep their coordinates.
    pub fn grow_to(&mut self, shape: Shape) -> Result<()> {
        if !shape.covers(&self.shape) {
            return Err(Error::ShapeMismatch(format!(
                "cannot shrink {} to {}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(())
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, k: usize) -> &[usize] {
        let n = self.order();
        &self.coords[k * n..(k + 1) * n]
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    pub fn get(&self, index: &[usize]) -> Option<f64> {
        self.lookup.get(index).map(|&k| self.values[k])
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        self.lookup.contains_key(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[usize], f64)> + '_ {
        (0..self.nnz()).map(move |k| (self.index(k), self.values[k]))
    }

    pub fn mask(&self) -> IndexSet {
        IndexSet::from_indices(self.shape.clone(), self.iter().map(|(i, _)| i.to_vec()))
            .expect("entries are within bounds")
    }

    /// Dense tensor with unobserved cells set to zero.
    pub fn to_dense(&self) -> DenseTensor {
        let mut d = DenseTensor::zeros(self.shape.clone());
        for (idx, v) in self.iter() {
            let off = self.shape.offset(idx);
            d.values_mut()[off] = v;
        }
        d
    }

    pub fn sum_squares(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
}

impl EntrySource for CooTensor {
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

/// Entry ids grouped by their coordinate along one mode (CSR layout).
#[derive(Clone, Debug)]
pub struct RowBuckets {
    offsets: Vec<usize>,
    ids: Vec<usize>,
}

impl RowBuckets {
    /// `coords` holds `order` coordinates per entry, back to back.
    pub fn build(coords: &[usize], order: usize, mode: usize, rows: usize) -> Self {
        let nnz = if order == 0 { 0 } else { coords.len() / order };
        let mut counts = vec![0usize; rows + 1];
        for k in 0..nnz {
            counts[coords[k * order + mode] + 1] += 1;
        }
        for r in 0..rows {
            counts[r + 1] += counts[r];
        }
        let mut cursor = counts.clone();
        let mut ids = vec![0; nnz];
        for k in 0..nnz {
            let r = coords[k * order + mode];
            ids[cursor[r]] = k;
            cursor[r] += 1;
        }
        RowBuckets {
            offsets: counts,
            ids,
        }
    }

    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[self.offsets[r]..self.offsets[r + 1]]
    }
}
