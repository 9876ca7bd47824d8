//! The online solver.
//!
//! Each step warm-starts from the previous factors (appended rows fit to the
//! new data), then runs exactly one sweep over the modes in ascending
//! order, updating the existing rows and the appended rows of each mode
//! against an objective that mixes the step's data with the previous
//! reconstruction over the previous bounds.

mod checkpoint;
mod config;
mod dense;
mod init;
mod objective;
mod sparse;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::baselines::fit_static;
use crate::error::{Error, Result};
use crate::tensor::{CooTensor, EntrySource, KruskalModel, Shape};

pub use checkpoint::Checkpoint;
pub use config::{AlphaSchedule, EngineConfig, Strategy, Variant, DEFAULT_BETA, DEFAULT_PREP_ITERS};
pub use dense::{dense_block_update, dense_impute, dense_sweep, BlockSystems};
pub use init::{init_lower, init_upper, stack};
pub use objective::objective_value;
pub use sparse::{
    build_row_system, sparse_mode_update, sparse_row_update, sparse_sweep, ModeTerms, RowSystem,
    SparseData,
};

/// What a solver receives at one step.
#[derive(Clone, Copy)]
pub struct StepData<'a> {
    /// Shape after the step.
    pub shape: &'a Shape,
    /// Entries added or changed by the step.
    pub delta: &'a CooTensor,
    /// Every observed entry after the step. Solvers that work from the
    /// delta alone never read it.
    pub observed: Option<&'a dyn EntrySource>,
}

/// Sizes of the modes that grew between two shapes.
fn grown_dims(before: &Shape, after: &Shape) -> Vec<(usize, usize)> {
    (0..after.order())
        .filter(|&n| after.dim(n) > before.dim(n))
        .map(|n| (n, after.dim(n)))
        .collect()
}

pub(crate) fn check_step(model: &KruskalModel, data: &StepData) -> Result<()> {
    let before = model.shape();
    if data.shape.order() != before.order() || !data.shape.covers(&before) {
        return Err(Error::ShapeMismatch(format!(
            "step shape {} does not extend model shape {}",
            data.shape, before
        )));
    }
    if data.delta.shape() != data.shape {
        return Err(Error::ShapeMismatch(format!(
            "delta shape {} vs step shape {}",
            data.delta.shape(),
            data.shape
        )));
    }
    if let Some(obs) = data.observed {
        if obs.shape() != data.shape {
            return Err(Error::ShapeMismatch(format!(
                "observed shape {} vs step shape {}",
                obs.shape(),
                data.shape
            )));
        }
    }
    Ok(())
}

/// Copies the previous factors and appends fitted rows for every grown
/// mode.
pub(crate) fn warm_start(
    prev: &KruskalModel,
    data: &StepData,
    beta: f64,
    jitter: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<crate::tensor::FactorMatrix>> {
    let before = prev.shape();
    let mut factors = init_upper(prev.factors());
    for (n, dim) in grown_dims(&before, data.shape) {
        let lower = init_lower(prev.factors(), data.delta, n, dim - before.dim(n), beta, jitter, rng)?;
        factors[n] = stack(&prev.factors()[n], &lower);
    }
    Ok(factors)
}

#[derive(Clone, Debug)]
pub struct Engine {
    config: EngineConfig,
    model: KruskalModel,
    step: usize,
    /// Size of the most recently grown mode, for growth-scaled alpha.
    growth_dim: usize,
    rng: ChaCha8Rng,
}

impl Engine {
    /// Fits the preparation data with `prep_iters` static sweeps from a
    /// seeded Uniform[0,1] start.
    pub fn init_prep(prep: &CooTensor, config: EngineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if prep.is_empty() {
            return Err(Error::InvalidArgument("preparation data is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = KruskalModel::random_uniform(prep.shape(), config.rank, &mut rng)?;
        let model = fit_static(prep, start, config.prep_iters, config.beta, config.jitter)?;
        Ok(Engine {
            growth_dim: model.shape().dims().iter().copied().max().unwrap_or(1),
            config,
            model,
            step: 0,
            rng,
        })
    }

    /// Starts from a given model.
    pub fn from_model(model: KruskalModel, config: EngineConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if model.rank() != config.rank {
            return Err(Error::RankMismatch {
                left: model.rank(),
                right: config.rank,
            });
        }
        Ok(Engine {
            growth_dim: model.shape().dims().iter().copied().max().unwrap_or(1),
            config,
            model,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn model(&self) -> &KruskalModel {
        &self.model
    }

    /// Number of steps taken.
    pub fn steps(&self) -> usize {
        self.step
    }

    /// Alpha used by the most recent step (or the next one, if no mode
    /// grows).
    pub fn alpha(&self) -> f64 {
        self.config.alpha.value(self.growth_dim)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(&self.model, self.step)
    }

    pub fn step(&mut self, data: &StepData) -> Result<()> {
        check_step(&self.model, data)?;
        let source: &dyn EntrySource = match self.config.variant {
            Variant::Efficient => data.delta,
            Variant::Full => data.observed.ok_or_else(|| {
                Error::InvalidArgument("the full-data variant needs every observed entry".into())
            })?,
        };
        let before = self.model.shape();
        if let Some(max) = grown_dims(&before, data.shape).iter().map(|&(_, d)| d).max() {
            self.growth_dim = max;
        }
        let alpha = self.alpha();
        let EngineConfig { beta, jitter, .. } = self.config;

        let prev = self.model.factors();
        let mut factors = warm_start(&self.model, data, beta, jitter, &mut self.rng)?;
        match self.config.strategy {
            Strategy::Sparse => {
                let sd = SparseData::from_source(source);
                sparse_sweep(&sd, &mut factors, Some(prev), alpha, beta, jitter)?;
            }
            Strategy::Dense => {
                let xhat = dense_impute(source, &KruskalModel::new(factors.clone())?)?;
                dense_sweep(&xhat, &mut factors, Some(prev), alpha, beta, jitter)?;
            }
        }
        self.model = KruskalModel::new(factors).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::InvalidArgument(format!("step {}: {msg}", self.step + 1)),
            e => e,
        })?;
        self.step += 1;
        Ok(())
    }
}
