//! Block updates on an imputed full tensor.

use ndarray::{s, Array2};

use super::sparse::full_gram;
use crate::error::{Error, Result};
use crate::linalg::solve_block;
use crate::tensor::{
    kruskal_reconstruct, mttkrp_factors, DenseTensor, EntrySource, FactorMatrix, KruskalModel,
};

/// Model reconstruction everywhere, overwritten by the observed values.
pub fn dense_impute(observed: &dyn EntrySource, model: &KruskalModel) -> Result<DenseTensor> {
    if observed.shape() != &model.shape() {
        return Err(Error::ShapeMismatch(format!(
            "data {} vs model {}",
            observed.shape(),
            model.shape()
        )));
    }
    let mut x = kruskal_reconstruct(model);
    let shape = x.shape().clone();
    let values = x.values_mut();
    observed.for_each_entry(&mut |idx, v| values[shape.offset(idx)] = v);
    Ok(x)
}

/// Normal equations `U P_U = Q_U` (rows that existed at the previous step)
/// and `L P_L = Q_L` (appended rows) of one mode.
///
/// `P_U = G + alpha H + beta I`, `Q_U = M_U + alpha A_prev C`,
/// `P_L = G + beta I`, `Q_L = M_L`, where `G` is the Hadamard product of
/// the other current Grams, `M` the MTTKRP of `xhat`, `H` the Hadamard
/// product of the other upper Grams and `C` that of `A_prev_k^T U_k`.
/// Without `prev` every row counts as lower.
#[derive(Clone, Debug)]
pub struct BlockSystems {
    pub p_upper: Array2<f64>,
    pub q_upper: Array2<f64>,
    pub p_lower: Array2<f64>,
    pub q_lower: Array2<f64>,
}

impl BlockSystems {
    pub fn new(
        xhat: &DenseTensor,
        factors: &[FactorMatrix],
        prev: Option<&[FactorMatrix]>,
        mode: usize,
        alpha: f64,
        beta: f64,
    ) -> Self {
        let rank = factors[0].ncols();
        let m = mttkrp_factors(xhat, factors, mode);
        let p_lower = full_gram(factors, mode) + Array2::<f64>::eye(rank) * beta;
        let old = prev.map_or(0, |p| p[mode].nrows());

        let terms = super::sparse::ModeTerms::new(factors, prev, mode, alpha, beta);
        let mut p_upper = p_lower.clone();
        let mut q_upper = m.slice(s![..old, ..]).to_owned();
        if let Some(prev) = prev.filter(|_| terms.alpha > 0.0) {
            p_upper.scaled_add(terms.alpha, &terms.upper_gram);
            q_upper.scaled_add(terms.alpha, &prev[mode].dot(&terms.cross_gram));
        }
        BlockSystems {
            p_upper,
            q_upper,
            p_lower,
            q_lower: m.slice(s![old.., ..]).to_owned(),
        }
    }
}

/// Solves both blocks of `mode` against `xhat`.
pub fn dense_block_update(
    xhat: &DenseTensor,
    factors: &[FactorMatrix],
    prev: Option<&[FactorMatrix]>,
    mode: usize,
    alpha: f64,
    beta: f64,
    jitter: f64,
) -> Result<(FactorMatrix, FactorMatrix)> {
    let rank = factors[0].ncols();
    let sys = BlockSystems::new(xhat, factors, prev, mode, alpha, beta);
    let solve = |p: &Array2<f64>, q: &Array2<f64>| {
        if q.nrows() > 0 {
            solve_block(p, q, jitter)
        } else {
            Ok(Array2::zeros((0, rank)))
        }
    };
    Ok((solve(&sys.p_upper, &sys.q_upper)?, solve(&sys.p_lower, &sys.q_lower)?))
}

/// One ascending sweep of block updates with a fixed imputation.
pub fn dense_sweep(
    xhat: &DenseTensor,
    factors: &mut [FactorMatrix],
    prev: Option<&[FactorMatrix]>,
    alpha: f64,
    beta: f64,
    jitter: f64,
) -> Result<()> {
    for mode in 0..factors.len() {
        let (upper, lower) = dense_block_update(xhat, factors, prev, mode, alpha, beta, jitter)?;
        let f = &mut factors[mode];
        let old = upper.nrows();
        f.slice_mut(s![..old, ..]).assign(&upper);
        f.slice_mut(s![old.., ..]).assign(&lower);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{CooTensor, IndexSet, Shape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(dims: &[usize], rank: usize, seed: u64) -> KruskalModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        KruskalModel::random_uniform(&Shape::new(dims.to_vec()).unwrap(), rank, &mut rng).unwrap()
    }

    #[test]
    fn impute_selects_cellwise() {
        let m = model(&[2, 2, 2], 2, 1);
        let truth = kruskal_reconstruct(&model(&[2, 2, 2], 2, 2));
        let shape = truth.shape().clone();
        let mask = IndexSet::from_indices(shape.clone(), shape.cells().filter(|c| (c[0] + c[1] + c[2]) % 2 == 0)).unwrap();
        let obs = CooTensor::from_dense_masked(&truth, &mask).unwrap();
        let x = dense_impute(&obs, &m).unwrap();
        let rec = kruskal_reconstruct(&m);
        for c in shape.cells() {
            let want = if mask.contains(&c) { truth.get(&c) } else { rec.get(&c) };
            assert_eq!(x.get(&c).unwrap(), want.unwrap());
        }
        let empty = CooTensor::empty(shape.clone());
        assert_eq!(dense_impute(&empty, &m).unwrap(), rec);
        assert_eq!(dense_impute(&CooTensor::from_dense(&truth), &m).unwrap(), truth);
    }

    #[test]
    fn no_growth_gives_empty_lower() {
        let m = model(&[3, 4, 2], 2, 3);
        let x = kruskal_reconstruct(&model(&[3, 4, 2], 2, 4));
        let (u, l) = dense_block_update(&x, m.factors(), Some(m.factors()), 1, 0.1, 1e-3, 0.0).unwrap();
        assert_eq!(u.dim(), (4, 2));
        assert_eq!(l.dim(), (0, 2));
    }

    #[test]
    fn exact_data_recovers_factor() {
        let truth = model(&[4, 3, 5], 2, 5);
        let x = kruskal_reconstruct(&truth);
        let mut start = truth.factors().to_vec();
        start[2].fill(0.3);
        let (u, l) = dense_block_update(&x, &start, None, 2, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(u.nrows(), 0);
        let err = (&l - truth.factor(2)).iter().fold(0.0f64, |a, d| a.max(d.abs()));
        assert!(err < 1e-10, "{err}");
    }
}
