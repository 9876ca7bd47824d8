use std::borrow::Cow;

use ndarray::Array2;
use rand::Rng;

use super::{advance, CooTensor, DenseTensor, Shape};
use crate::error::{Error, Result};

/// An `I_n x R` factor matrix.
pub type FactorMatrix = Array2<f64>;

/// A CP model `[[A_0, .., A_{N-1}]]`: N factor matrices sharing rank R.
#[derive(Clone, Debug, PartialEq)]
pub struct KruskalModel {
    factors: Vec<FactorMatrix>,
}

impl KruskalModel {
    pub fn new(factors: Vec<FactorMatrix>) -> Result<Self> {
        let rank = factors
            .first()
            .map(|f| f.ncols())
            .ok_or_else(|| Error::InvalidArgument("a model needs at least one factor".into()))?;
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        for f in &factors {
            if f.ncols() != rank {
                return Err(Error::RankMismatch {
                    left: rank,
                    right: f.ncols(),
                });
            }
            if f.nrows() == 0 {
                return Err(Error::InvalidArgument("factor with zero rows".into()));
            }
            if f.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("factor has non-finite entries".into()));
            }
        }
        Ok(KruskalModel { factors })
    }

    pub fn zeros(shape: &Shape, rank: usize) -> Result<Self> {
        KruskalModel::new(
            shape
                .dims()
                .iter()
                .map(|&d| Array2::zeros((d, rank)))
                .collect(),
        )
    }

    /// Factors drawn i.i.d. from Uniform[0, 1).
    pub fn random_uniform<R: Rng + ?Sized>(shape: &Shape, rank: usize, rng: &mut R) -> Result<Self> {
        let factors = shape
            .dims()
            .iter()
            .map(|&d| Array2::from_shape_fn((d, rank), |_| rng.gen::<f64>()))
            .collect();
        KruskalModel::new(factors)
    }

    pub fn rank(&self) -> usize {
        self.factors[0].ncols()
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.factors.iter().map(|f| f.nrows()).collect()).expect("factors have rows")
    }

    pub fn factor(&self, mode: usize) -> &FactorMatrix {
        &self.factors[mode]
    }

    pub fn factors(&self) -> &[FactorMatrix] {
        &self.factors
    }

    /// Replaces one factor; the rank must match.
    pub fn set_factor(&mut self, mode: usize, factor: FactorMatrix) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        if factor.ncols() != self.rank() {
            return Err(Error::RankMismatch {
                left: self.rank(),
                right: factor.ncols(),
            });
        }
        if factor.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite entries in factor {mode}"
            )));
        }
        self.factors[mode] = factor;
        Ok(())
    }

    pub fn into_factors(self) -> Vec<FactorMatrix> {
        self.factors
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.factors.iter().flat_map(|f| f.iter()).map(|v| v * v).sum()
    }
}

/// Walks every cell of `dims` in row-major order, handing `f` the
/// element-wise product of the factor rows at that cell (mode `skip`
/// excluded). Partial products are cached per level so the amortized cost
/// is O(R) per cell.
pub(crate) fn for_each_cell_product(
    dims: &[usize],
    factors: &[FactorMatrix],
    skip: Option<usize>,
    mut f: impl FnMut(&[usize], &[f64]),
) {
    let order = dims.len();
    let rank = factors[0].ncols();
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    let flats: Vec<Cow<[f64]>> = factors
        .iter()
        .map(|f| match f.as_slice() {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned(f.iter().copied().collect()),
        })
        .collect();
    let mut prod = vec![1.0; (order + 1) * rank];
    let mut index = vec![0; order];
    let refresh = |prod: &mut [f64], index: &[usize], from: usize| {
        for level in from..order {
            let (head, tail) = prod.split_at_mut((level + 1) * rank);
            let src = &head[level * rank..];
            let dst = &mut tail[..rank];
            if Some(level) == skip {
                dst.copy_from_slice(src);
            } else {
                let i = index[level];
                let row = &flats[level][i * rank..(i + 1) * rank];
                for ((d, s), a) in dst.iter_mut().zip(src).zip(row) {
                    *d = s * a;
                }
            }
        }
    };
    refresh(&mut prod, &index, 0);
    loop {
        f(&index, &prod[order * rank..]);
        match advance(&mut index, dims) {
            Some(changed) => refresh(&mut prod, &index, changed),
            None => break,
        }
    }
}

pub fn kruskal_reconstruct(m: &KruskalModel) -> DenseTensor {
    let shape = m.shape();
    let mut values = Vec::with_capacity(shape.num_cells());
    for_each_cell_product(shape.dims(), m.factors(), None, |_, p| {
        values.push(p.iter().sum());
    });
    DenseTensor::new(shape, values).expect("one value per cell")
}

/// Evaluates the model at a single cell.
pub fn kruskal_at(m: &KruskalModel, index: &[usize]) -> Result<f64> {
    m.shape().check_index(index)?;
    Ok(eval_at(m.factors(), index))
}

pub(crate) fn eval_at(factors: &[FactorMatrix], index: &[usize]) -> f64 {
    let rank = factors[0].ncols();
    let mut prod = [0.0f64; 16];
    if rank <= prod.len() {
        let p = &mut prod[..rank];
        row_product(factors, index, usize::MAX, p);
        return p.iter().sum();
    }
    let mut p = vec![0.0; rank];
    row_product(factors, index, usize::MAX, &mut p);
    p.iter().sum()
}

/// Dense MTTKRP: `unfold(x, mode) * khatri_rao_except(factors, mode)`.
pub fn mttkrp(x: &DenseTensor, m: &KruskalModel, mode: usize) -> Result<Array2<f64>> {
    x.shape().check_mode(mode)?;
    if x.shape() != &m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "tensor {} vs model {}",
            x.shape(),
            m.shape()
        )));
    }
    Ok(mttkrp_factors(x, m.factors(), mode))
}

pub(crate) fn mttkrp_factors(x: &DenseTensor, factors: &[FactorMatrix], mode: usize) -> Array2<f64> {
    let rank = factors[0].ncols();
    let rows = x.shape().dim(mode);
    let mut out = vec![0.0; rows * rank];
    let mut values = x.values().iter();
    for_each_cell_product(x.shape().dims(), factors, Some(mode), |idx, p| {
        let v = *values.next().expect("one value per cell");
        let i = idx[mode];
        for (o, a) in out[i * rank..(i + 1) * rank].iter_mut().zip(p) {
            *o += v * a;
        }
    });
    Array2::from_shape_vec((rows, rank), out).expect("rows x rank")
}

/// Sparse MTTKRP over the observed entries of a COO tensor.
pub fn mttkrp_sparse(x: &CooTensor, m: &KruskalModel, mode: usize) -> Result<Array2<f64>> {
    x.shape().check_mode(mode)?;
    if x.shape() != &m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "tensor {} vs model {}",
            x.shape(),
            m.shape()
        )));
    }
    let rank = m.rank();
    let mut out = Array2::zeros((x.shape().dim(mode), rank));
    let mut kr = vec![0.0; rank];
    for (idx, v) in x.iter() {
        row_product(m.factors(), idx, mode, &mut kr);
        let mut row = out.row_mut(idx[mode]);
        for r in 0..rank {
            row[r] += v * kr[r];
        }
    }
    Ok(out)
}

/// Khatri–Rao row `(⊙_{k != skip} a^k_{i_k})` for one cell; a `skip` past
/// the last mode multiplies every mode.
pub(crate) fn row_product(factors: &[FactorMatrix], index: &[usize], skip: usize, out: &mut [f64]) {
    out.fill(1.0);
    for (k, (f, &i)) in factors.iter().zip(index).enumerate() {
        if k == skip {
            continue;
        }
        let rank = out.len();
        match f.as_slice() {
            Some(flat) => {
                for (o, a) in out.iter_mut().zip(&flat[i * rank..(i + 1) * rank]) {
                    *o *= a;
                }
            }
            None => {
                for (o, a) in out.iter_mut().zip(f.row(i)) {
                    *o *= a;
                }
            }
        }
    }
}

pub fn gram(a: &FactorMatrix) -> Array2<f64> {
    a.t().dot(a)
}

/// `⊛_{k != skip} G_k` for a list of R x R matrices.
pub fn hadamard_of_grams(grams: &[Array2<f64>], skip: usize) -> Array2<f64> {
    let rank = grams[0].nrows();
    let mut acc = Array2::ones((rank, rank));
    for (k, g) in grams.iter().enumerate() {
        if k != skip {
            acc *= g;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{khatri_rao_except, unfold};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive(m: &KruskalModel, idx: &[usize]) -> f64 {
        let mut s = 0.0;
        for r in 0..m.rank() {
            let mut p = 1.0;
            for (n, &i) in idx.iter().enumerate() {
                p *= m.factor(n)[[i, r]];
            }
            s += p;
        }
        s
    }

    #[test]
    fn reconstruct_rank_one_outer_product() {
        let m = KruskalModel::new(vec![
            array![[1.0], [2.0]],
            array![[1.0], [1.0]],
            array![[1.0], [0.0]],
        ])
        .unwrap();
        let y = kruskal_reconstruct(&m);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(y.get(&[i, j, 0]).unwrap(), [1.0, 2.0][i]);
                assert_eq!(y.get(&[i, j, 1]).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn zero_factor_gives_zero_tensor_and_zero_padding_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = Shape::new(vec![3, 2, 2]).unwrap();
        let mut m = KruskalModel::random_uniform(&s, 2, &mut rng).unwrap();
        let base = KruskalModel::new(
            m.factors().iter().map(|f| f.slice(ndarray::s![.., 0..1]).to_owned()).collect(),
        )
        .unwrap();
        let mut padded = m.clone();
        for n in 0..3 {
            let mut f = padded.factor(n).clone();
            f.column_mut(1).fill(0.0);
            padded.set_factor(n, f).unwrap();
        }
        let a = kruskal_reconstruct(&padded);
        let b = kruskal_reconstruct(&base);
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
        m.set_factor(1, Array2::zeros((2, 2))).unwrap();
        assert!(kruskal_reconstruct(&m).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kruskal_at_matches_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = Shape::new(vec![3, 4, 2]).unwrap();
        let m = KruskalModel::random_uniform(&s, 2, &mut rng).unwrap();
        let y = kruskal_reconstruct(&m);
        for idx in s.cells() {
            let v = kruskal_at(&m, &idx).unwrap();
            assert!((v - naive(&m, &idx)).abs() < 1e-14);
            assert!((v - y.get(&idx).unwrap()).abs() < 1e-14);
        }
        assert!(kruskal_at(&m, &[3, 0, 0]).is_err());
        let ones = KruskalModel::new(vec![Array2::ones((2, 1)), Array2::ones((3, 1))]).unwrap();
        assert_eq!(kruskal_at(&ones, &[1, 2]).unwrap(), 1.0);
        let zeros = KruskalModel::zeros(&s, 2).unwrap();
        assert_eq!(kruskal_at(&zeros, &[1, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn mttkrp_matches_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = Shape::new(vec![2, 2, 2]).unwrap();
        let m = KruskalModel::random_uniform(&s, 1, &mut rng).unwrap();
        let x = DenseTensor::from_fn(s.clone(), |_| rng.gen::<f64>());
        for n in 0..3 {
            let got = mttkrp(&x, &m, n).unwrap();
            let mut want = Array2::<f64>::zeros((2, 1));
            for idx in s.cells() {
                let mut p = x.get(&idx).unwrap();
                for k in 0..3 {
                    if k != n {
                        p *= m.factor(k)[[idx[k], 0]];
                    }
                }
                want[[idx[n], 0]] += p;
            }
            for (a, b) in got.iter().zip(want.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
            let via_unfold = unfold(&x, n).unwrap().dot(&khatri_rao_except(m.factors(), n).unwrap());
            for (a, b) in got.iter().zip(via_unfold.iter()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
        let z = DenseTensor::zeros(s);
        assert!(mttkrp(&z, &m, 0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sparse_mttkrp_on_full_data_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = Shape::new(vec![3, 2, 4]).unwrap();
        let m = KruskalModel::random_uniform(&s, 3, &mut rng).unwrap();
        let x = DenseTensor::from_fn(s, |_| rng.gen::<f64>());
        let coo = CooTensor::from_dense(&x);
        for n in 0..3 {
            let a = mttkrp(&x, &m, n).unwrap();
            let b = mttkrp_sparse(&coo, &m, n).unwrap();
            for (p, q) in a.iter().zip(b.iter()) {
                assert!((p - q).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn model_validation() {
        assert!(KruskalModel::new(vec![]).is_err());
        assert!(KruskalModel::new(vec![Array2::zeros((2, 2)), Array2::zeros((2, 3))]).is_err());
        assert!(KruskalModel::new(vec![array![[f64::NAN]]]).is_err());
    }
}
