use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gocpt::engine::{AlphaSchedule, Strategy, Variant};
use gocpt::harness::{
    ablate_density, plot_steps, run_to_dir, write_ablation, AblationSpec, ExperimentSpec, Scenario, SolverKind,
};
use gocpt::Error;

#[derive(Parser)]
#[command(name = "gocpt", version, about = "Online CP factorization and completion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the ground truth, mask and event log of the first seed.
    Generate(ExperimentArgs),
    /// Run solvers over the stream and write steps.csv and summary.json.
    Run(ExperimentArgs),
    /// Render the PoF curves of a steps.csv as pof.svg.
    Plot {
        steps: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Compare sparse and dense static completion across densities.
    AblateDensity(AblationArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long, value_delimiter = ',')]
    shape: Option<Vec<usize>>,
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long)]
    density: Option<f64>,
    #[arg(long)]
    prep_fraction: Option<f64>,
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long = "solver", value_delimiter = ',', value_parser = parse_solver)]
    solvers: Option<Vec<SolverKind>>,
    /// Shorthand for `--solver gocpt` (full) or `--solver gocpt_e` (efficient).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    #[arg(long, value_parser = parse_alpha)]
    alpha_schedule: Option<AlphaSchedule>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    prep_iters: Option<usize>,
    #[arg(long)]
    temporal_mode: Option<usize>,
    /// Ground truth as a COO file.
    #[arg(long)]
    tensor: Option<PathBuf>,
    /// Observed cells as a COO file (completion).
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Event log to replay.
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args)]
struct AblationArgs {
    #[arg(long)]
    tensor: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "30,30,30")]
    shape: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    rank: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.02,0.1,0.5,1.0")]
    densities: Vec<f64>,
    #[arg(long, default_value_t = 25)]
    iters: usize,
    #[arg(long = "seed", value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[arg(long, default_value_t = gocpt::engine::DEFAULT_BETA)]
    beta: f64,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_solver(s: &str) -> Result<SolverKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_alpha(s: &str) -> Result<AlphaSchedule, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Singular { .. } | Error::UndefinedMetric(_) => Failure::Solver(e.to_string()),
            e => Failure::Usage(e.to_string()),
        }
    }
}

impl ExperimentArgs {
    fn spec(&self) -> Result<ExperimentSpec, Failure> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::load(path)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?,
            None => ExperimentSpec::default(),
        };
        if let Some(s) = self.scenario {
            spec.scenario = s;
        } else if self.config.is_none() {
            if self.events.is_some() {
                spec.scenario = Scenario::Replay;
            } else if self.density.is_some() || self.mask.is_some() {
                spec.scenario = Scenario::Completion;
            }
        }
        if let Some(v) = &self.shape {
            spec.shape = v.clone();
        }
        if let Some(v) = self.rank {
            spec.rank = v;
        }
        if let Some(v) = self.density {
            spec.density = v;
        }
        if let Some(v) = self.prep_fraction {
            spec.prep_fraction = Some(v);
        }
        if let Some(v) = &self.seeds {
            spec.seeds = v.clone();
        }
        match (&self.solvers, self.variant) {
            (Some(_), Some(_)) => {
                return Err(Failure::Usage("--variant and --solver are mutually exclusive".into()))
            }
            (Some(v), None) => spec.solvers = v.clone(),
            (None, Some(Variant::Full)) => spec.solvers = vec![SolverKind::Gocpt],
            (None, Some(Variant::Efficient)) => spec.solvers = vec![SolverKind::GocptE],
            (None, None) => {}
        }
        if let Some(v) = self.strategy {
            spec.strategy = Some(v);
        }
        if let Some(v) = self.alpha_schedule {
            spec.alpha_schedule = Some(v);
        }
        if let Some(v) = self.beta {
            spec.beta = v;
        }
        if let Some(v) = self.prep_iters {
            spec.prep_iters = v;
        }
        if let Some(v) = self.temporal_mode {
            spec.temporal_mode = Some(v);
        }
        for (field, v) in [(&mut spec.tensor, &self.tensor), (&mut spec.mask, &self.mask), (&mut spec.events, &self.events)] {
            if v.is_some() {
                *field = v.clone();
            }
        }
        if let Some(v) = self.max_steps {
            spec.max_steps = Some(v);
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate(args) => {
            let spec = args.spec()?;
            for path in spec.generate(&args.out)? {
                println!("{}", path.display());
            }
        }
        Command::Run(args) => {
            let spec = args.spec()?;
            let out = run_to_dir(&spec, &args.out)?;
            println!("wrote {} records to {}", out.records.len(), args.out.join("steps.csv").display());
            if !out.failures.is_empty() {
                let lines: Vec<String> = out
                    .failures
                    .iter()
                    .map(|f| format!("{} seed {} step {}: {}", f.solver, f.seed, f.t, f.message))
                    .collect();
                return Err(Failure::Solver(lines.join("\n")));
            }
        }
        Command::Plot { steps, out } => {
            std::fs::create_dir_all(&out).map_err(Error::from)?;
            let path = out.join("pof.svg");
            plot_steps(&steps, &path)?;
            println!("{}", path.display());
        }
        Command::AblateDensity(a) => {
            let spec = AblationSpec {
                tensor: a.tensor,
                shape: a.shape,
                rank: a.rank,
                densities: a.densities,
                iters: a.iters,
                seeds: a.seeds,
                beta: a.beta,
            };
            let rows = ablate_density(&spec)?;
            write_ablation(&a.out, &rows)?;
            for r in &rows {
                println!(
                    "density {:<5} {:<6} seed {} time {:9.2} ms  pof {:.6}",
                    r.density,
                    format!("{:?}", r.strategy).to_lowercase(),
                    r.seed,
                    r.time_ms,
                    r.pof
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("solver failure: {msg}");
            ExitCode::from(2)
        }
    }
}
