//! Experiment runner: builds a stream per seed, drives each solver through
//! it, and records fitness and step time.

mod ablation;
mod plot;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{fit_static, Baseline, BaselineConfig, BaselineMethod};
use crate::engine::{AlphaSchedule, Engine, EngineConfig, StepData, Strategy, Variant, DEFAULT_BETA};
use crate::error::{Error, Result};
use crate::evolution::{
    gen_low_rank, gen_mask, read_event_log_file, stream_general, stream_slice_growth,
    write_event_log_file, Perturbation, Stream,
};
use crate::tensor::io::{read_coo_file, write_coo_file};
use crate::tensor::{
    pof_completion, pof_factorization, pof_observed, CooTensor, DenseTensor, IndexSet,
    KruskalModel, Shape,
};
use crate::evolution::EvolvingState;

pub use ablation::{ablate_density, render_ablation_svg, static_completion, write_ablation, AblationRow, AblationSpec};
pub use plot::{plot_steps, render_pof_svg};
pub use report::{read_steps_csv, summarize, write_steps_csv, Failure, RunSummary, SolverSummary, StepRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SolverKind {
    Gocpt,
    GocptE,
    EmAls,
    EmAlsDecay,
    CpcAls,
}

impl SolverKind {
    pub const ALL: [SolverKind; 5] = [
        SolverKind::Gocpt,
        SolverKind::GocptE,
        SolverKind::EmAls,
        SolverKind::EmAlsDecay,
        SolverKind::CpcAls,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Gocpt => "gocpt",
            SolverKind::GocptE => "gocpt_e",
            SolverKind::EmAls => "em_als",
            SolverKind::EmAlsDecay => "em_als_decay",
            SolverKind::CpcAls => "cpc_als",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SolverKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = SolverKind::ALL.iter().map(|k| k.name()).collect();
                Error::InvalidArgument(format!("unknown solver `{s}` ({})", names.join("|")))
            })
    }
}

impl TryFrom<String> for SolverKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SolverKind> for String {
    fn from(k: SolverKind) -> String {
        k.name().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Growth with delayed fills and value revisions.
    General,
    /// Fully observed slices appended one at a time.
    Factorization,
    /// Sparsely observed slices appended one at a time; scored on the
    /// unobserved cells.
    Completion,
    /// A recorded event log.
    Replay,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "general" => Ok(Scenario::General),
            "factorization" => Ok(Scenario::Factorization),
            "completion" => Ok(Scenario::Completion),
            "replay" => Ok(Scenario::Replay),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scenario `{s}` (general|factorization|completion|replay)"
            ))),
        }
    }
}

/// Everything that determines a run. Loaded from a JSON file; CLI flags
/// override individual fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    pub shape: Vec<usize>,
    pub rank: usize,
    /// Observed fraction for the completion scenario.
    pub density: f64,
    /// Leading fraction of the growing mode used as preparation data;
    /// defaults to 0.5 for the general scenario and 0.1 otherwise.
    pub prep_fraction: Option<f64>,
    pub seeds: Vec<u64>,
    /// Defaults to every solver relevant to the scenario.
    pub solvers: Vec<SolverKind>,
    pub strategy: Option<Strategy>,
    pub alpha_schedule: Option<AlphaSchedule>,
    pub beta: f64,
    pub prep_iters: usize,
    /// The growing mode; defaults to the last one.
    pub temporal_mode: Option<usize>,
    /// Fill lag of the general scenario.
    pub lag: usize,
    /// Per-step revision of observed values in the general scenario; a
    /// fraction of 0 disables it.
    pub perturb_fraction: f64,
    pub perturb_magnitude: f64,
    /// Ground truth as a COO file instead of a synthetic tensor.
    pub tensor: Option<PathBuf>,
    /// Observed cells (COO file, values ignored) for the completion
    /// scenario instead of a random mask.
    pub mask: Option<PathBuf>,
    /// Event log for the replay scenario.
    pub events: Option<PathBuf>,
    /// Truncates every stream to at most this many steps.
    pub max_steps: Option<usize>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            scenario: Scenario::Factorization,
            shape: vec![30, 30, 200],
            rank: 5,
            density: 0.02,
            prep_fraction: None,
            seeds: vec![0],
            solvers: Vec::new(),
            strategy: None,
            alpha_schedule: None,
            beta: DEFAULT_BETA,
            prep_iters: crate::engine::DEFAULT_PREP_ITERS,
            temporal_mode: None,
            lag: 3,
            perturb_fraction: 0.02,
            perturb_magnitude: 0.05,
            tensor: None,
            mask: None,
            events: None,
            max_steps: None,
        }
    }
}

/// Independent sub-streams of one run seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer over (seed, stream)
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const MASK_STREAM: u64 = 1;
const EVENT_STREAM: u64 = 2;
const SOLVER_STREAM: u64 = 3;

impl ExperimentSpec {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn prep_fraction(&self) -> f64 {
        self.prep_fraction.unwrap_or(match self.scenario {
            Scenario::General => 0.5,
            _ => 0.1,
        })
    }

    pub fn solvers(&self) -> Vec<SolverKind> {
        if !self.solvers.is_empty() {
            return self.solvers.clone();
        }
        vec![SolverKind::Gocpt, SolverKind::GocptE, SolverKind::EmAls, SolverKind::CpcAls]
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy.unwrap_or(match self.scenario {
            Scenario::Factorization => Strategy::Dense,
            _ => Strategy::Sparse,
        })
    }

    /// Growth-scaled alpha per scenario and variant.
    pub fn alpha(&self, variant: Variant) -> AlphaSchedule {
        if let Some(a) = self.alpha_schedule {
            return a;
        }
        let c = match (self.scenario, variant) {
            (Scenario::Completion, Variant::Full) => 0.005,
            (Scenario::Completion, Variant::Efficient) => 0.5,
            (_, Variant::Full) => 0.02,
            (_, Variant::Efficient) => 2.0,
        };
        AlphaSchedule::OverGrowth(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidArgument("at least one seed is required".into()));
        }
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if self.lag == 0 {
            return Err(Error::InvalidArgument("lag must be at least 1".into()));
        }
        match self.scenario {
            Scenario::Replay if self.events.is_none() => {
                Err(Error::InvalidArgument("the replay scenario needs an event log".into()))
            }
            Scenario::Completion if self.mask.is_none() && !(self.density > 0.0 && self.density < 1.0) => {
                Err(Error::InvalidArgument(format!(
                    "completion density {} must be in (0, 1)",
                    self.density
                )))
            }
            _ => Shape::new(self.shape.clone()).map(|_| ()),
        }
    }

    fn temporal_mode(&self, shape: &Shape) -> Result<usize> {
        let mode = self.temporal_mode.unwrap_or(shape.order() - 1);
        shape.check_mode(mode)?;
        Ok(mode)
    }

    fn truth(&self, seed: u64) -> Result<DenseTensor> {
        match &self.tensor {
            Some(path) => Ok(read_coo_file(path)?.to_dense()),
            None => Ok(gen_low_rank(&Shape::new(self.shape.clone())?, self.rank, seed)?.1),
        }
    }

    fn completion_mask(&self, shape: &Shape, seed: u64) -> Result<IndexSet> {
        match &self.mask {
            Some(path) => {
                let m = read_coo_file(path)?.mask();
                if m.shape() != shape {
                    return Err(Error::ShapeMismatch(format!("mask {} vs tensor {}", m.shape(), shape)));
                }
                Ok(m)
            }
            None => gen_mask(shape, self.density, sub_seed(seed, MASK_STREAM)),
        }
    }

    /// The stream and scoring rule of one seed.
    pub fn workload(&self, seed: u64) -> Result<Workload> {
        let mut w = match self.scenario {
            Scenario::Replay => Workload {
                stream: read_event_log_file(self.events.as_ref().expect("validated"))?,
                scoring: Scoring::Observed,
            },
            Scenario::Factorization => {
                let truth = self.truth(seed)?;
                let mode = self.temporal_mode(truth.shape())?;
                Workload {
                    stream: stream_slice_growth(&truth, None, self.prep_fraction(), mode)?,
                    scoring: Scoring::Factorization(truth),
                }
            }
            Scenario::Completion => {
                let truth = self.truth(seed)?;
                let mode = self.temporal_mode(truth.shape())?;
                let mask = self.completion_mask(truth.shape(), seed)?;
                Workload {
                    stream: stream_slice_growth(&truth, Some(&mask), self.prep_fraction(), mode)?,
                    scoring: Scoring::Completion(truth),
                }
            }
            Scenario::General => {
                let truth = self.truth(seed)?;
                let mode = self.temporal_mode(truth.shape())?;
                let perturb = (self.perturb_fraction > 0.0).then_some(Perturbation {
                    fraction: self.perturb_fraction,
                    magnitude: self.perturb_magnitude,
                });
                Workload {
                    stream: stream_general(
                        &truth,
                        mode,
                        self.lag,
                        perturb,
                        self.prep_fraction(),
                        sub_seed(seed, EVENT_STREAM),
                    )?,
                    scoring: Scoring::Observed,
                }
            }
        };
        if let Some(max) = self.max_steps {
            w.stream.steps.truncate(max);
        }
        Ok(w)
    }

    /// Writes the ground truth (when there is one), the mask (completion)
    /// and the event log of the first seed into `out`.
    pub fn generate(&self, out: &Path) -> Result<Vec<PathBuf>> {
        self.validate()?;
        std::fs::create_dir_all(out)?;
        let seed = self.seeds[0];
        let mut written = Vec::new();
        if self.scenario != Scenario::Replay {
            let truth = self.truth(seed)?;
            let path = out.join("truth.coo");
            write_coo_file(&path, &CooTensor::from_dense(&truth))?;
            written.push(path);
            if self.scenario == Scenario::Completion {
                let mask = self.completion_mask(truth.shape(), seed)?;
                let cells = CooTensor::from_entries(mask.shape().clone(), mask.iter().map(|i| (i.to_vec(), 1.0)))?;
                let path = out.join("mask.coo");
                write_coo_file(&path, &cells)?;
                written.push(path);
            }
        }
        let path = out.join("events.jsonl");
        write_event_log_file(&path, &self.workload(seed)?.stream)?;
        written.push(path);
        Ok(written)
    }

    fn engine_config(&self, variant: Variant) -> EngineConfig {
        EngineConfig {
            variant,
            strategy: self.strategy(),
            rank: self.rank,
            alpha: self.alpha(variant),
            beta: self.beta,
            jitter: 0.0,
            prep_iters: self.prep_iters,
        }
    }

    fn baseline_config(&self, method: BaselineMethod) -> BaselineConfig {
        BaselineConfig {
            beta: self.beta,
            prep_iters: self.prep_iters,
            temporal_mode: self.temporal_mode,
            ..BaselineConfig::new(method, self.rank)
        }
    }

    /// Fits the preparation data from a seeded Uniform[0,1] start. Every
    /// solver of a run starts from this model.
    pub fn fit_prep(&self, prep: &CooTensor, seed: u64) -> Result<KruskalModel> {
        if prep.is_empty() {
            return Err(Error::InvalidArgument("preparation data is empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, SOLVER_STREAM));
        let start = KruskalModel::random_uniform(prep.shape(), self.rank, &mut rng)?;
        fit_static(prep, start, self.prep_iters, self.beta, 0.0)
    }

    pub fn build_solver(&self, kind: SolverKind, prep_model: KruskalModel, seed: u64) -> Result<Solver> {
        let seed = sub_seed(seed, SOLVER_STREAM);
        let engine = |variant| Engine::from_model(prep_model.clone(), self.engine_config(variant), seed);
        let baseline = |method| Baseline::from_model(prep_model.clone(), self.baseline_config(method), seed);
        Ok(match kind {
            SolverKind::Gocpt => Solver::Engine(engine(Variant::Full)?),
            SolverKind::GocptE => Solver::Engine(engine(Variant::Efficient)?),
            SolverKind::EmAls => Solver::Baseline(baseline(BaselineMethod::EmAls)?),
            SolverKind::EmAlsDecay => Solver::Baseline(baseline(BaselineMethod::EmAlsDecay)?),
            SolverKind::CpcAls => Solver::Baseline(baseline(BaselineMethod::CpcAls)?),
        })
    }
}

/// How a step's model is scored.
#[derive(Clone, Debug)]
pub enum Scoring {
    /// Every cell of the ground truth within the current shape.
    Factorization(DenseTensor),
    /// Ground-truth cells within the current shape that are not observed.
    Completion(DenseTensor),
    /// The observed entries themselves.
    Observed,
}

impl Scoring {
    pub fn pof(&self, state: &EvolvingState, model: &KruskalModel) -> Result<f64> {
        match self {
            Scoring::Factorization(truth) => pof_factorization(&truth.leading(state.shape())?, model),
            Scoring::Completion(truth) => {
                pof_completion(&truth.leading(state.shape())?, &state.observed().mask(), model)
            }
            Scoring::Observed => pof_observed(state.observed(), model),
        }
    }
}

pub struct Workload {
    pub stream: Stream,
    pub scoring: Scoring,
}

#[derive(Clone, Debug)]
pub enum Solver {
    Engine(Engine),
    Baseline(Baseline),
}

impl Solver {
    pub fn step(&mut self, data: &StepData) -> Result<()> {
        match self {
            Solver::Engine(e) => e.step(data),
            Solver::Baseline(b) => b.step(data),
        }
    }

    pub fn model(&self) -> &KruskalModel {
        match self {
            Solver::Engine(e) => e.model(),
            Solver::Baseline(b) => b.model(),
        }
    }
}

/// Everything a `run` produced.
#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub failures: Vec<Failure>,
}

/// Runs one solver over one workload, appending a record per step. Returns
/// the failure, if any; records up to the failing step are kept.
fn run_one(
    spec: &ExperimentSpec,
    kind: SolverKind,
    seed: u64,
    workload: &Workload,
    prep_model: &KruskalModel,
    records: &mut Vec<StepRecord>,
) -> std::result::Result<(), Failure> {
    let fail = |t: usize, e: Error| Failure {
        solver: kind.name().to_string(),
        seed,
        t,
        message: e.to_string(),
    };
    let stream = &workload.stream;
    let mut solver = spec
        .build_solver(kind, prep_model.clone(), seed)
        .map_err(|e| fail(0, e))?;
    let mut state = stream.initial.clone();
    for (k, step) in stream.steps.iter().enumerate() {
        let t = k + 1;
        state.apply_in_place(step).map_err(|e| fail(t, e))?;
        let data = StepData {
            shape: state.shape(),
            delta: state.delta(),
            observed: Some(state.observed()),
        };
        let start = Instant::now();
        solver.step(&data).map_err(|e| fail(t, e))?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let pof = workload.scoring.pof(&state, solver.model()).map_err(|e| fail(t, e))?;
        records.push(StepRecord {
            solver: kind.name().to_string(),
            seed,
            t,
            pof,
            step_time_ms: elapsed,
            nnz_delta: state.delta().nnz(),
            shape: state.shape().to_string(),
        });
    }
    Ok(())
}

/// Runs every (solver, seed) pair. Records come out ordered by solver (in
/// spec order), then seed, then step.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    let solvers = spec.solvers();
    let mut out = RunOutput::default();
    let mut per_solver: Vec<Vec<StepRecord>> = vec![Vec::new(); solvers.len()];
    for &seed in &spec.seeds {
        let workload = spec.workload(seed)?;
        let prep_model = match spec.fit_prep(workload.stream.initial.observed(), seed) {
            Ok(m) => m,
            Err(e) => {
                out.failures.extend(solvers.iter().map(|k| Failure {
                    solver: k.name().to_string(),
                    seed,
                    t: 0,
                    message: e.to_string(),
                }));
                continue;
            }
        };
        for (slot, &kind) in per_solver.iter_mut().zip(&solvers) {
            if let Err(f) = run_one(spec, kind, seed, &workload, &prep_model, slot) {
                out.failures.push(f);
            }
        }
    }
    out.records = per_solver.into_iter().flatten().collect();
    Ok(out)
}

/// Runs the experiment and writes `steps.csv` and `summary.json` to `out`.
pub fn run_to_dir(spec: &ExperimentSpec, out: &Path) -> Result<RunOutput> {
    let result = run(spec)?;
    std::fs::create_dir_all(out)?;
    write_steps_csv(out.join("steps.csv"), &result.records)?;
    let summary = summarize(spec.scenario, &spec.solvers(), &result.records, &result.failures);
    let file = std::fs::File::create(out.join("summary.json"))?;
    serde_json::to_writer_pretty(file, &summary)?;
    Ok(result)
}
