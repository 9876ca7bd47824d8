//! Reference solvers that refit on every observed entry: EM-ALS (impute,
//! then plain ALS), EM-ALS with exponentially decaying slice weights, and
//! CPC-ALS (row-wise ALS over observed fibers).

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{
    check_step, dense_impute, dense_sweep, sparse_sweep, warm_start, SparseData, StepData,
    DEFAULT_BETA, DEFAULT_PREP_ITERS,
};
use crate::error::{Error, Result};
use crate::linalg::{solve_block, Cholesky};
use crate::tensor::{gram, hadamard_of_grams, mttkrp_factors, EntrySource, KruskalModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    EmAls,
    EmAlsDecay,
    CpcAls,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub rank: usize,
    pub iters_per_step: usize,
    /// Per-slice decay along the temporal mode (EM-ALS with decay only).
    pub decay: f64,
    /// Mode the decay weights run along; defaults to the last mode.
    pub temporal_mode: Option<usize>,
    pub beta: f64,
    pub jitter: f64,
    pub prep_iters: usize,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod, rank: usize) -> Self {
        BaselineConfig {
            method,
            rank,
            iters_per_step: 1,
            decay: 0.99,
            temporal_mode: None,
            beta: DEFAULT_BETA,
            jitter: 0.0,
            prep_iters: DEFAULT_PREP_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 || self.iters_per_step == 0 || self.prep_iters == 0 {
            return Err(Error::InvalidArgument(
                "rank, iters_per_step and prep_iters must be at least 1".into(),
            ));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay {} not in (0, 1]", self.decay)));
        }
        if !(self.beta >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument("beta and jitter must be non-negative".into()));
        }
        Ok(())
    }
}

/// One sweep of row-wise ridge least squares over the observed fibers.
pub fn cpc_als_sweep(data: &SparseData, model: &KruskalModel, beta: f64, jitter: f64) -> Result<KruskalModel> {
    check_shape(data, model)?;
    let mut factors = model.factors().to_vec();
    sparse_sweep(data, &mut factors, None, 0.0, beta, jitter)?;
    KruskalModel::new(factors)
}

/// Per-slice weights along one mode.
#[derive(Clone, Copy, Debug)]
pub struct SliceWeights<'a> {
    pub mode: usize,
    pub weights: &'a [f64],
}

/// `decay^(I - 1 - k)` for slices `k = 0..I`: the newest slice has weight 1.
pub fn decay_weights(len: usize, decay: f64) -> Vec<f64> {
    (0..len).map(|k| decay.powi((len - 1 - k) as i32)).collect()
}

/// Imputes the unobserved cells from `model`, then runs one ALS sweep on
/// the imputed tensor, optionally weighting the squared error of each
/// slice along one mode.
pub fn em_als_sweep(
    data: &dyn EntrySource,
    model: &KruskalModel,
    beta: f64,
    weights: Option<SliceWeights>,
    jitter: f64,
) -> Result<KruskalModel> {
    check_shape(data, model)?;
    let xhat = dense_impute(data, model)?;
    let mut factors = model.factors().to_vec();
    let Some(w) = weights else {
        dense_sweep(&xhat, &mut factors, None, 0.0, beta, jitter)?;
        return KruskalModel::new(factors);
    };
    let shape = xhat.shape().clone();
    shape.check_mode(w.mode)?;
    if w.weights.len() != shape.dim(w.mode) {
        return Err(Error::ShapeMismatch(format!(
            "{} weights for {} slices",
            w.weights.len(),
            shape.dim(w.mode)
        )));
    }
    let mut weighted = xhat.clone();
    let stride = shape.strides()[w.mode];
    let dim = shape.dim(w.mode);
    for (off, v) in weighted.values_mut().iter_mut().enumerate() {
        *v *= w.weights[(off / stride) % dim];
    }
    let rank = model.rank();
    let ridge = Array2::<f64>::eye(rank) * beta;
    for n in 0..factors.len() {
        let mut grams: Vec<_> = factors.iter().map(gram).collect();
        if n == w.mode {
            // row k: w_k m_k (w_k G + beta I)^{-1}
            let g = hadamard_of_grams(&grams, n);
            let m = mttkrp_factors(&xhat, &factors, n);
            let mut out = Array2::zeros(m.raw_dim());
            for (k, (mut row, m_row)) in out.axis_iter_mut(Axis(0)).zip(m.axis_iter(Axis(0))).enumerate() {
                let p = &g * w.weights[k] + &ridge;
                row.assign(&Cholesky::factor(&p, jitter)?.solve_vec((&m_row * w.weights[k]).view()));
            }
            factors[n] = out;
        } else {
            let t = &factors[w.mode];
            let scaled = t * &ndarray::Array1::from(w.weights.to_vec()).insert_axis(Axis(1));
            grams[w.mode] = t.t().dot(&scaled);
            let p = hadamard_of_grams(&grams, n) + &ridge;
            let m = mttkrp_factors(&weighted, &factors, n);
            factors[n] = solve_block(&p, &m, jitter)?;
        }
    }
    KruskalModel::new(factors)
}

fn check_shape(data: &dyn EntrySource, model: &KruskalModel) -> Result<()> {
    if data.shape() != &model.shape() {
        return Err(Error::ShapeMismatch(format!(
            "data {} vs model {}",
            data.shape(),
            model.shape()
        )));
    }
    Ok(())
}

/// Static fit: EM-ALS sweeps when every cell is observed, CPC-ALS sweeps
/// otherwise.
pub fn fit_static(
    data: &dyn EntrySource,
    mut model: KruskalModel,
    iters: usize,
    beta: f64,
    jitter: f64,
) -> Result<KruskalModel> {
    check_shape(data, &model)?;
    if data.nnz() == data.shape().num_cells() {
        for _ in 0..iters {
            model = em_als_sweep(data, &model, beta, None, jitter)?;
        }
    } else {
        let sd = SparseData::from_source(data);
        for _ in 0..iters {
            model = cpc_als_sweep(&sd, &model, beta, jitter)?;
        }
    }
    Ok(model)
}

/// An online wrapper that warm-starts like the engine and then refits on
/// all observed data.
#[derive(Clone, Debug)]
pub struct Baseline {
    config: BaselineConfig,
    model: KruskalModel,
    step: usize,
    rng: ChaCha8Rng,
}

impl Baseline {
    pub fn init_prep(prep: &crate::tensor::CooTensor, config: BaselineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if prep.is_empty() {
            return Err(Error::InvalidArgument("preparation data is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = KruskalModel::random_uniform(prep.shape(), config.rank, &mut rng)?;
        let model = fit_static(prep, start, config.prep_iters, config.beta, config.jitter)?;
        Ok(Baseline {
            config,
            model,
            step: 0,
            rng,
        })
    }

    pub fn from_model(model: KruskalModel, config: BaselineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if model.rank() != config.rank {
            return Err(Error::RankMismatch {
                left: model.rank(),
                right: config.rank,
            });
        }
        Ok(Baseline {
            config,
            model,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &BaselineConfig {
        &self.config
    }

    pub fn model(&self) -> &KruskalModel {
        &self.model
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn step(&mut self, data: &StepData) -> Result<()> {
        check_step(&self.model, data)?;
        let observed = data
            .observed
            .ok_or_else(|| Error::InvalidArgument("baselines need every observed entry".into()))?;
        let BaselineConfig { beta, jitter, .. } = self.config;
        let mut model = KruskalModel::new(warm_start(&self.model, data, beta, jitter, &mut self.rng)?)?;
        match self.config.method {
            BaselineMethod::CpcAls => {
                let sd = SparseData::from_source(observed);
                for _ in 0..self.config.iters_per_step {
                    model = cpc_als_sweep(&sd, &model, beta, jitter)?;
                }
            }
            BaselineMethod::EmAls => {
                for _ in 0..self.config.iters_per_step {
                    model = em_als_sweep(observed, &model, beta, None, jitter)?;
                }
            }
            BaselineMethod::EmAlsDecay => {
                let mode = self.config.temporal_mode.unwrap_or(data.shape.order() - 1);
                data.shape.check_mode(mode)?;
                let w = decay_weights(data.shape.dim(mode), self.config.decay);
                for _ in 0..self.config.iters_per_step {
                    let sw = SliceWeights { mode, weights: &w };
                    model = em_als_sweep(observed, &model, beta, Some(sw), jitter)?;
                }
            }
        }
        self.model = model;
        self.step += 1;
        Ok(())
    }
}
