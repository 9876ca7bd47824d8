//! `steps.csv` and `summary.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Scenario, SolverKind};
use crate::error::{Error, Result};

pub const STEPS_HEADER: [&str; 7] = ["solver", "seed", "t", "pof", "step_time_ms", "nnz_delta", "shape"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub solver: String,
    pub seed: u64,
    pub t: usize,
    pub pof: f64,
    pub step_time_ms: f64,
    pub nnz_delta: usize,
    /// Dims after the step, e.g. `30x30x21`.
    pub shape: String,
}

/// A (solver, seed) run that stopped early.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub solver: String,
    pub seed: u64,
    /// Step at which the run failed (0 = preparation).
    pub t: usize,
    pub message: String,
}

pub fn write_steps_csv(path: impl AsRef<Path>, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    if records.is_empty() {
        w.write_record(STEPS_HEADER).map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::Parse {
            line,
            msg: format!("{kind:?}"),
        },
    }
}

pub fn read_steps_csv(path: impl AsRef<Path>) -> Result<Vec<StepRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(STEPS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected header `{}`", STEPS_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.deserialize() {
        let rec: StepRecord = rec.map_err(csv_err)?;
        out.push(rec);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub steps: usize,
    /// Mean per-step PoF over the run.
    pub avg_pof: f64,
    pub total_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub solver: String,
    /// Completed runs (failed runs are excluded).
    pub runs: usize,
    pub avg_pof_mean: f64,
    pub avg_pof_std: f64,
    pub total_time_ms_mean: f64,
    pub total_time_ms_std: f64,
    pub per_seed: Vec<SeedSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub solvers: Vec<SolverSummary>,
    pub failures: Vec<Failure>,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(
    scenario: Scenario,
    solvers: &[SolverKind],
    records: &[StepRecord],
    failures: &[Failure],
) -> RunSummary {
    let solvers = solvers
        .iter()
        .map(|kind| {
            let name = kind.name();
            let mine: Vec<&StepRecord> = records.iter().filter(|r| r.solver == name).collect();
            let mut seeds: Vec<u64> = mine.iter().map(|r| r.seed).collect();
            seeds.dedup();
            let per_seed: Vec<SeedSummary> = seeds
                .into_iter()
                .filter(|s| !failures.iter().any(|f| f.solver == name && f.seed == *s))
                .map(|seed| {
                    let rs: Vec<_> = mine.iter().filter(|r| r.seed == seed).collect();
                    SeedSummary {
                        seed,
                        steps: rs.len(),
                        avg_pof: rs.iter().map(|r| r.pof).sum::<f64>() / rs.len() as f64,
                        total_time_ms: rs.iter().map(|r| r.step_time_ms).sum(),
                    }
                })
                .collect();
            let pofs: Vec<f64> = per_seed.iter().map(|s| s.avg_pof).collect();
            let times: Vec<f64> = per_seed.iter().map(|s| s.total_time_ms).collect();
            let (avg_pof_mean, avg_pof_std) = mean_std(&pofs);
            let (total_time_ms_mean, total_time_ms_std) = mean_std(&times);
            SolverSummary {
                solver: name.to_string(),
                runs: per_seed.len(),
                avg_pof_mean,
                avg_pof_std,
                total_time_ms_mean,
                total_time_ms_std,
                per_seed,
            }
        })
        .collect();
    RunSummary {
        scenario,
        solvers,
        failures: failures.to_vec(),
    }
}
