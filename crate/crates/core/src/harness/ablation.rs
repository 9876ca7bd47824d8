//! Sparse versus dense static completion across observation densities.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::plot::{render_svg, Axes, Series};
use super::{sub_seed, MASK_STREAM, SOLVER_STREAM};
use crate::baselines::{cpc_als_sweep, em_als_sweep};
use crate::engine::{SparseData, Strategy, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::evolution::{gen_low_rank, gen_mask};
use crate::tensor::io::read_coo_file;
use crate::tensor::{pof_factorization, CooTensor, DenseTensor, KruskalModel, Shape};

#[derive(Clone, Debug)]
pub struct AblationSpec {
    /// Ground truth as a COO file; otherwise an exact low-rank tensor of
    /// `shape` is generated per seed.
    pub tensor: Option<PathBuf>,
    pub shape: Vec<usize>,
    pub rank: usize,
    pub densities: Vec<f64>,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub beta: f64,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            tensor: None,
            shape: vec![30, 30, 30],
            rank: 5,
            densities: vec![0.02, 0.1, 0.5, 1.0],
            iters: 25,
            seeds: vec![0],
            beta: DEFAULT_BETA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub density: f64,
    pub strategy: Strategy,
    pub seed: u64,
    /// Wall time of all sweeps, including building the strategy's data
    /// structures.
    pub time_ms: f64,
    /// Fitness against the full ground truth.
    pub pof: f64,
}

/// Runs `iters` sweeps of one strategy from `start` and returns the model
/// with the elapsed milliseconds.
pub fn static_completion(
    observed: &CooTensor,
    start: &KruskalModel,
    strategy: Strategy,
    iters: usize,
    beta: f64,
) -> Result<(KruskalModel, f64)> {
    let clock = Instant::now();
    let mut model = start.clone();
    match strategy {
        Strategy::Sparse => {
            let sd = SparseData::from_source(observed);
            for _ in 0..iters {
                model = cpc_als_sweep(&sd, &model, beta, 0.0)?;
            }
        }
        Strategy::Dense => {
            for _ in 0..iters {
                model = em_als_sweep(observed, &model, beta, None, 0.0)?;
            }
        }
    }
    Ok((model, clock.elapsed().as_secs_f64() * 1e3))
}

fn truth(spec: &AblationSpec, seed: u64) -> Result<DenseTensor> {
    match &spec.tensor {
        Some(path) => Ok(read_coo_file(path)?.to_dense()),
        None => Ok(gen_low_rank(&Shape::new(spec.shape.clone())?, spec.rank, seed)?.1),
    }
}

/// Every (density, seed) pair shares one mask and one random start
/// between the two strategies.
pub fn ablate_density(spec: &AblationSpec) -> Result<Vec<AblationRow>> {
    if spec.densities.is_empty() || spec.seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one density and one seed".into()));
    }
    if spec.rank == 0 || spec.iters == 0 {
        return Err(Error::InvalidArgument("rank and iters must be at least 1".into()));
    }
    let mut rows = Vec::new();
    for &seed in &spec.seeds {
        let truth = truth(spec, seed)?;
        for (k, &density) in spec.densities.iter().enumerate() {
            let mask = gen_mask(truth.shape(), density, sub_seed(seed, MASK_STREAM + 16 * k as u64))?;
            let observed = CooTensor::from_dense_masked(&truth, &mask)?;
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, SOLVER_STREAM));
            let start = KruskalModel::random_uniform(truth.shape(), spec.rank, &mut rng)?;
            for strategy in [Strategy::Sparse, Strategy::Dense] {
                let (model, time_ms) = static_completion(&observed, &start, strategy, spec.iters, spec.beta)?;
                rows.push(AblationRow {
                    density,
                    strategy,
                    seed,
                    time_ms,
                    pof: pof_factorization(&truth, &model)?,
                });
            }
        }
    }
    Ok(rows)
}

/// Mean time against mean PoF per (strategy, density), one line per
/// strategy.
pub fn render_ablation_svg(rows: &[AblationRow]) -> Result<String> {
    let series: Vec<Series> = [Strategy::Sparse, Strategy::Dense]
        .into_iter()
        .map(|strategy| {
            let mut densities: Vec<f64> = rows.iter().filter(|r| r.strategy == strategy).map(|r| r.density).collect();
            densities.sort_by(f64::total_cmp);
            densities.dedup();
            let points = densities
                .into_iter()
                .map(|d| {
                    let rs: Vec<_> = rows.iter().filter(|r| r.strategy == strategy && r.density == d).collect();
                    let n = rs.len() as f64;
                    (
                        rs.iter().map(|r| r.time_ms).sum::<f64>() / n,
                        rs.iter().map(|r| r.pof).sum::<f64>() / n,
                    )
                })
                .collect();
            Series {
                name: format!("{strategy:?}").to_lowercase(),
                points,
            }
        })
        .collect();
    render_svg(
        &series,
        &Axes {
            x_label: "time (ms)",
            y_label: "PoF",
            y_max: Some(1.0),
        },
    )
}

/// Writes `ablation.csv` and `ablation.svg` into `out`.
pub fn write_ablation(out: &Path, rows: &[AblationRow]) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_path(out.join("ablation.csv")).map_err(|e| Error::Parse {
        line: 0,
        msg: e.to_string(),
    })?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
    }
    w.flush()?;
    std::fs::write(out.join("ablation.svg"), render_ablation_svg(rows)?)?;
    Ok(())
}
