//! Percentage-of-fitness scores: `1 - ||residual|| / ||data||` over a cell set.

use super::kruskal::{eval_at, for_each_cell_product};
use super::{CooTensor, DenseTensor, IndexSet, KruskalModel};
use crate::error::{Error, Result};

fn check_shape(x: &DenseTensor, m: &KruskalModel) -> Result<()> {
    if x.shape() != &m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "tensor {} vs model {}",
            x.shape(),
            m.shape()
        )));
    }
    Ok(())
}

/// Fitness over every cell.
pub fn pof_factorization(x: &DenseTensor, m: &KruskalModel) -> Result<f64> {
    check_shape(x, m)?;
    let norm_sq: f64 = x.values().iter().map(|v| v * v).sum();
    if norm_sq == 0.0 {
        return Err(Error::UndefinedMetric("data tensor has zero norm".into()));
    }
    let values = x.values();
    let mut k = 0;
    let mut resid_sq = 0.0;
    for_each_cell_product(x.shape().dims(), m.factors(), None, |_, p| {
        let d = values[k] - p.iter().sum::<f64>();
        resid_sq += d * d;
        k += 1;
    });
    Ok(1.0 - (resid_sq / norm_sq).sqrt())
}

/// Fitness over the cells NOT in `mask` (held-out entries).
pub fn pof_completion(x_truth: &DenseTensor, mask: &IndexSet, m: &KruskalModel) -> Result<f64> {
    check_shape(x_truth, m)?;
    let observed = mask.bitmap(x_truth.shape())?;
    if observed.iter().all(|&b| b) {
        return Err(Error::UndefinedMetric("mask covers every cell".into()));
    }
    let values = x_truth.values();
    let mut k = 0;
    let (mut resid_sq, mut norm_sq) = (0.0, 0.0);
    for_each_cell_product(x_truth.shape().dims(), m.factors(), None, |_, p| {
        if !observed[k] {
            let x = values[k];
            let d = x - p.iter().sum::<f64>();
            resid_sq += d * d;
            norm_sq += x * x;
        }
        k += 1;
    });
    if norm_sq == 0.0 {
        return Err(Error::UndefinedMetric("held-out cells have zero norm".into()));
    }
    Ok(1.0 - (resid_sq / norm_sq).sqrt())
}

/// Fitness restricted to the observed entries of a sparse tensor.
pub fn pof_observed(observed: &CooTensor, m: &KruskalModel) -> Result<f64> {
    if observed.shape() != &m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "tensor {} vs model {}",
            observed.shape(),
            m.shape()
        )));
    }
    let (mut resid_sq, mut norm_sq) = (0.0, 0.0);
    for (idx, x) in observed.iter() {
        let d = x - eval_at(m.factors(), idx);
        resid_sq += d * d;
        norm_sq += x * x;
    }
    if norm_sq == 0.0 {
        return Err(Error::UndefinedMetric("observed entries have zero norm".into()));
    }
    Ok(1.0 - (resid_sq / norm_sq).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{kruskal_reconstruct, Shape};
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(seed: u64) -> KruskalModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        KruskalModel::random_uniform(&Shape::new(vec![2, 2, 2]).unwrap(), 2, &mut rng).unwrap()
    }

    #[test]
    fn factorization_pof_limits() {
        let m = model(1);
        let x = kruskal_reconstruct(&m);
        assert!((pof_factorization(&x, &m).unwrap() - 1.0).abs() < 1e-15);
        let zero = KruskalModel::zeros(x.shape(), 2).unwrap();
        assert_eq!(pof_factorization(&x, &zero).unwrap(), 0.0);
        assert!(pof_factorization(&DenseTensor::zeros(x.shape().clone()), &m).is_err());
    }

    #[test]
    fn factorization_pof_is_scale_invariant() {
        let m = model(2);
        let mut x = kruskal_reconstruct(&model(3));
        let before = pof_factorization(&x, &m).unwrap();
        x.scale(2.0);
        let mut scaled = m.clone();
        let f = scaled.factor(0) * 2.0;
        scaled.set_factor(0, f).unwrap();
        let after = pof_factorization(&x, &scaled).unwrap();
        assert!((before - after).abs() < 1e-14);
    }

    #[test]
    fn completion_pof_single_held_out_cell() {
        let m = model(4);
        let s = m.shape();
        let truth = DenseTensor::from_fn(s.clone(), |i| 1.0 + (i[0] + 2 * i[1] + 4 * i[2]) as f64);
        let held = vec![1, 0, 1];
        let mask = IndexSet::from_indices(s.clone(), s.cells().filter(|c| c != &held)).unwrap();
        let x = truth.get(&held).unwrap();
        let y = crate::tensor::kruskal_at(&m, &held).unwrap();
        let want = 1.0 - (x - y).abs() / x.abs();
        assert!((pof_completion(&truth, &mask, &m).unwrap() - want).abs() < 1e-14);

        let exact = kruskal_reconstruct(&m);
        assert!((pof_completion(&exact, &mask, &m).unwrap() - 1.0).abs() < 1e-15);
        let zero = KruskalModel::new(vec![Array2::zeros((2, 2)); 3]).unwrap();
        assert_eq!(pof_completion(&truth, &mask, &zero).unwrap(), 0.0);
        assert!(pof_completion(&truth, &IndexSet::full(s), &m).is_err());
    }
}
