//! Measurements shared by the oracle tests and the acceptance runner. Each
//! returns the worst error over one random instance.

use ndarray::{s, Array2};
use rand::Rng;

use gocpt::engine::{
    build_row_system, dense_block_update, dense_impute, dense_sweep, init_lower, objective_value,
    sparse_mode_update, sparse_sweep, BlockSystems, ModeTerms, SparseData,
};
use gocpt::tensor::{CooTensor, DenseTensor, FactorMatrix, KruskalModel};

use super::*;

pub struct Instance {
    pub dims: Vec<usize>,
    pub prev: Vec<FactorMatrix>,
    pub factors: Vec<FactorMatrix>,
    pub alpha: f64,
    pub beta: f64,
}

pub fn instance(seed: u64) -> (Instance, ChaCha8Rng) {
    let mut rng = rng(seed);
    let (dims, prev_dims, rank) = random_dims(&mut rng);
    let prev = random_factors(&prev_dims, rank, &mut rng);
    let factors = random_factors(&dims, rank, &mut rng);
    let alpha = rng.gen_range(0.1..2.0);
    let beta = rng.gen_range(1e-3..1e-1);
    (
        Instance {
            dims,
            prev,
            factors,
            alpha,
            beta,
        },
        rng,
    )
}

fn random_dense(dims: &[usize], rng: &mut ChaCha8Rng) -> DenseTensor {
    DenseTensor::from_fn(shape(dims), |_| rng.gen::<f64>())
}

fn dense_entries(x: &DenseTensor) -> Vec<(Vec<usize>, f64)> {
    all_cells(x.shape().dims())
        .into_iter()
        .map(|idx| {
            let v = x.get(&idx).unwrap();
            (idx, v)
        })
        .collect()
}

/// Sparse row updates against the brute-force row solver. Skipped rows
/// (empty slice, no history term) must be left untouched.
pub fn sparse_row_update_error(seed: u64) -> f64 {
    let (inst, mut rng) = instance(seed);
    let entries = random_entries(&inst.dims, 0.6, &mut rng);
    let data = SparseData::from_source(&coo(&inst.dims, &entries));
    let mut worst = 0.0f64;
    for mode in 0..inst.dims.len() {
        let out = sparse_mode_update(&data, &inst.factors, Some(&inst.prev), mode, inst.alpha, inst.beta, 0.0).unwrap();
        for row in 0..inst.dims[mode] {
            let empty = !entries.iter().any(|(idx, _)| idx[mode] == row);
            let got: Vec<f64> = out.row(row).to_vec();
            if empty && row >= inst.prev[mode].nrows() {
                let kept = inst.factors[mode].row(row).to_vec();
                worst = worst.max(if got == kept { 0.0 } else { f64::INFINITY });
                continue;
            }
            let want = brute_force_row(&inst.factors, Some(&inst.prev), mode, row, &entries, inst.alpha, inst.beta);
            worst = worst.max(max_rel_diff(&got, want.as_slice()));
        }
    }
    worst
}

/// Dense block updates against the brute-force row solver on a fully
/// imputed tensor.
pub fn dense_block_update_error(seed: u64) -> f64 {
    let (inst, mut rng) = instance(seed);
    let xhat = random_dense(&inst.dims, &mut rng);
    let entries = dense_entries(&xhat);
    let mut worst = 0.0f64;
    for mode in 0..inst.dims.len() {
        let (upper, lower) =
            dense_block_update(&xhat, &inst.factors, Some(&inst.prev), mode, inst.alpha, inst.beta, 0.0).unwrap();
        let old = inst.prev[mode].nrows();
        for row in 0..inst.dims[mode] {
            let got = if row < old { upper.row(row).to_vec() } else { lower.row(row - old).to_vec() };
            let want = brute_force_row(&inst.factors, Some(&inst.prev), mode, row, &entries, inst.alpha, inst.beta);
            worst = worst.max(max_rel_diff(&got, want.as_slice()));
        }
    }
    worst
}

/// Appended-row initialization against the brute-force row solver over
/// the new entries that stay inside the previous bounds elsewhere.
pub fn init_lower_error(seed: u64) -> f64 {
    let (inst, mut rng) = instance(seed);
    let entries = random_entries(&inst.dims, 0.7, &mut rng);
    let delta = coo(&inst.dims, &entries);
    let beta = inst.beta;
    let mut worst = 0.0f64;
    for mode in 0..inst.dims.len() {
        let old = inst.prev[mode].nrows();
        let new_rows = inst.dims[mode] - old;
        if new_rows == 0 {
            continue;
        }
        let lower = init_lower(&inst.prev, &delta, mode, new_rows, beta, 0.0, &mut rng).unwrap();
        for j in 0..new_rows {
            let local: Vec<(Vec<usize>, f64)> = entries
                .iter()
                .filter(|(idx, _)| {
                    idx[mode] == old + j
                        && idx.iter().enumerate().all(|(k, &i)| k == mode || i < inst.prev[k].nrows())
                })
                .map(|(idx, v)| {
                    let mut idx = idx.clone();
                    idx[mode] = j;
                    (idx, *v)
                })
                .collect();
            let got = lower.row(j).to_vec();
            if local.is_empty() {
                let uniform = got.iter().all(|v| (0.0..1.0).contains(v));
                worst = worst.max(if uniform { 0.0 } else { f64::INFINITY });
                continue;
            }
            let want = brute_force_row(&inst.prev, None, mode, j, &local, 0.0, beta);
            worst = worst.max(max_rel_diff(&got, want.as_slice()));
        }
    }
    worst
}

const FD_STEP: f64 = 1e-5;

fn central_difference(
    factors: &[FactorMatrix],
    mode: usize,
    row: usize,
    r: usize,
    objective: &dyn Fn(&[FactorMatrix]) -> f64,
) -> f64 {
    let mut f = factors.to_vec();
    f[mode][[row, r]] += FD_STEP;
    let plus = objective(&f);
    f[mode][[row, r]] -= 2.0 * FD_STEP;
    let minus = objective(&f);
    (plus - minus) / (2.0 * FD_STEP)
}

fn rel_err(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / analytic.abs().max(1e-12)
}

/// Row gradients `2 (a P - q)` of the sparse systems against central
/// differences of the objective. Returns the worst relative error and how
/// many coordinates belonged to (old, new) rows.
pub fn row_gradient_error(seed: u64) -> (f64, usize, usize) {
    let (inst, mut rng) = instance(seed);
    let entries = random_entries(&inst.dims, 0.6, &mut rng);
    let observed = coo(&inst.dims, &entries);
    let data = SparseData::from_source(&observed);
    let prev_model = KruskalModel::new(inst.prev.clone()).unwrap();
    let objective = |f: &[FactorMatrix]| {
        objective_value(&KruskalModel::new(f.to_vec()).unwrap(), &prev_model, &observed, inst.alpha, inst.beta)
            .unwrap()
    };
    let (mut worst, mut old_coords, mut new_coords) = (0.0f64, 0, 0);
    for mode in 0..inst.dims.len() {
        let terms = ModeTerms::new(&inst.factors, Some(&inst.prev), mode, inst.alpha, inst.beta);
        let old = inst.prev[mode].nrows();
        for row in 0..inst.dims[mode] {
            let prev_row = (row < old).then(|| inst.prev[mode].row(row));
            let sys = build_row_system(&terms, &inst.factors, prev_row, row, data.slice(mode, row));
            let a = inst.factors[mode].row(row);
            let grad = (a.dot(&sys.gram) - &sys.rhs) * 2.0;
            for r in 0..grad.len() {
                let fd = central_difference(&inst.factors, mode, row, r, &objective);
                worst = worst.max(rel_err(fd, grad[r]));
                if row < old {
                    old_coords += 1;
                } else {
                    new_coords += 1;
                }
            }
        }
    }
    (worst, old_coords, new_coords)
}

/// Block gradients `2 (U P_U - Q_U)` and `2 (L P_L - Q_L)` of the dense
/// systems against central differences of the objective on the imputed
/// tensor.
pub fn block_gradient_error(seed: u64) -> (f64, usize, usize) {
    let (inst, mut rng) = instance(seed);
    let xhat = random_dense(&inst.dims, &mut rng);
    let full = CooTensor::from_dense(&xhat);
    let prev_model = KruskalModel::new(inst.prev.clone()).unwrap();
    let objective = |f: &[FactorMatrix]| {
        objective_value(&KruskalModel::new(f.to_vec()).unwrap(), &prev_model, &full, inst.alpha, inst.beta).unwrap()
    };
    let (mut worst, mut old_coords, mut new_coords) = (0.0f64, 0, 0);
    for mode in 0..inst.dims.len() {
        let sys = BlockSystems::new(&xhat, &inst.factors, Some(&inst.prev), mode, inst.alpha, inst.beta);
        let old = inst.prev[mode].nrows();
        let f = &inst.factors[mode];
        let g_upper = (f.slice(s![..old, ..]).dot(&sys.p_upper) - &sys.q_upper) * 2.0;
        let g_lower = (f.slice(s![old.., ..]).dot(&sys.p_lower) - &sys.q_lower) * 2.0;
        for row in 0..inst.dims[mode] {
            for r in 0..f.ncols() {
                let analytic = if row < old { g_upper[[row, r]] } else { g_lower[[row - old, r]] };
                let fd = central_difference(&inst.factors, mode, row, r, &objective);
                worst = worst.max(rel_err(fd, analytic));
                if row < old {
                    old_coords += 1;
                } else {
                    new_coords += 1;
                }
            }
        }
    }
    (worst, old_coords, new_coords)
}

/// One sparse sweep and one dense sweep on a fully observed 5x4x6 tensor
/// with history; worst relative factor difference.
pub fn sparse_dense_full_observation_diff(seed: u64) -> f64 {
    let mut rng = rng(seed);
    let dims = [5, 4, 6];
    let prev = random_factors(&[4, 4, 5], 3, &mut rng);
    let start = grow_factors(&prev, &dims, &mut rng);
    let x = random_dense(&dims, &mut rng);
    let (alpha, beta) = (0.3, 1e-2);
    let mut sparse = start.clone();
    sparse_sweep(&SparseData::from_source(&CooTensor::from_dense(&x)), &mut sparse, Some(&prev), alpha, beta, 0.0)
        .unwrap();
    let mut dense = start;
    dense_sweep(&x, &mut dense, Some(&prev), alpha, beta, 0.0).unwrap();
    sparse
        .iter()
        .zip(&dense)
        .map(|(a, b)| max_rel_diff(&flat(a), &flat(b)))
        .fold(0.0, f64::max)
}

/// Largest relative increase of the fixed-imputation objective across the
/// 2N block updates of one dense sweep (0 when monotone).
pub fn dense_sweep_increase(seed: u64) -> f64 {
    let (inst, mut rng) = instance(seed);
    let entries = random_entries(&inst.dims, 0.5, &mut rng);
    let observed = coo(&inst.dims, &entries);
    let mut factors = inst.factors.clone();
    let xhat = dense_impute(&observed, &KruskalModel::new(factors.clone()).unwrap()).unwrap();
    let full = CooTensor::from_dense(&xhat);
    let prev_model = KruskalModel::new(inst.prev.clone()).unwrap();
    let objective = |f: &[FactorMatrix]| {
        objective_value(&KruskalModel::new(f.to_vec()).unwrap(), &prev_model, &full, inst.alpha, inst.beta).unwrap()
    };
    let mut last = objective(&factors);
    let mut worst = 0.0f64;
    for mode in 0..inst.dims.len() {
        let (upper, lower) =
            dense_block_update(&xhat, &factors, Some(&inst.prev), mode, inst.alpha, inst.beta, 0.0).unwrap();
        let old = upper.nrows();
        let blocks: [(&Array2<f64>, usize); 2] = [(&upper, 0), (&lower, old)];
        for (block, offset) in blocks {
            factors[mode].slice_mut(s![offset..offset + block.nrows(), ..]).assign(block);
            let now = objective(&factors);
            worst = worst.max((now - last) / last.abs().max(1e-300));
            last = now;
        }
    }
    worst
}
