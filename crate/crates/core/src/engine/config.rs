use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which data the fit term sees each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Every observed entry so far.
    Full,
    /// Only the entries added or changed by the current step; history is
    /// represented by the previous factors alone.
    Efficient,
}

/// How each block is solved.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Row-wise ridge systems over the observed fibers of each row.
    Sparse,
    /// Impute the full tensor, then solve whole blocks.
    Dense,
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "efficient" => Ok(Variant::Efficient),
            _ => Err(Error::InvalidArgument(format!("unknown variant `{s}` (full|efficient)"))),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sparse" => Ok(Strategy::Sparse),
            "dense" => Ok(Strategy::Dense),
            _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}` (sparse|dense)"))),
        }
    }
}

/// Weight of the term tying the new reconstruction to the previous one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum AlphaSchedule {
    Const(f64),
    /// `c / I`, where `I` is the size of the growing mode.
    OverGrowth(f64),
}

impl AlphaSchedule {
    pub fn value(&self, growth_dim: usize) -> f64 {
        match *self {
            AlphaSchedule::Const(v) => v,
            AlphaSchedule::OverGrowth(c) => c / growth_dim.max(1) as f64,
        }
    }
}

impl FromStr for AlphaSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("bad alpha schedule `{s}` (const:V | over-growth:V)"));
        let (kind, v) = s.split_once(':').ok_or_else(bad)?;
        let v: f64 = v.parse().map_err(|_| bad())?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(bad());
        }
        match kind {
            "const" => Ok(AlphaSchedule::Const(v)),
            "over-growth" => Ok(AlphaSchedule::OverGrowth(v)),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for AlphaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSchedule::Const(v) => write!(f, "const:{v}"),
            AlphaSchedule::OverGrowth(v) => write!(f, "over-growth:{v}"),
        }
    }
}

impl From<AlphaSchedule> for String {
    fn from(a: AlphaSchedule) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for AlphaSchedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub variant: Variant,
    pub strategy: Strategy,
    pub rank: usize,
    pub alpha: AlphaSchedule,
    pub beta: f64,
    /// Added to the diagonal of every normal-equation system.
    pub jitter: f64,
    /// Static sweeps used to fit the preparation data.
    pub prep_iters: usize,
}

pub const DEFAULT_BETA: f64 = 1e-5;
pub const DEFAULT_PREP_ITERS: usize = 300;

impl EngineConfig {
    /// Defaults for the general mixed-pattern setting.
    pub fn new(variant: Variant, strategy: Strategy, rank: usize) -> Self {
        let c = match variant {
            Variant::Full => 0.02,
            Variant::Efficient => 2.0,
        };
        EngineConfig {
            variant,
            strategy,
            rank,
            alpha: AlphaSchedule::OverGrowth(c),
            beta: DEFAULT_BETA,
            jitter: 0.0,
            prep_iters: DEFAULT_PREP_ITERS,
        }
    }

    pub fn with_alpha(mut self, alpha: AlphaSchedule) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if !(self.beta >= 0.0) || !(self.jitter >= 0.0) {
            return Err(Error::InvalidArgument("beta and jitter must be non-negative".into()));
        }
        if self.prep_iters == 0 {
            return Err(Error::InvalidArgument("prep_iters must be at least 1".into()));
        }
        Ok(())
    }
}
