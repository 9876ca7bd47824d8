//! Seeded synthetic data and event streams.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Entry, EvolutionEvent, EvolutionStep, EvolvingState};
use crate::error::{Error, Result};
use crate::tensor::{kruskal_reconstruct, CooTensor, DenseTensor, IndexSet, KruskalModel, Shape};

/// An initial (preparation) state followed by the steps that evolve it.
#[derive(Clone, Debug, PartialEq)]
pub struct Stream {
    pub initial: EvolvingState,
    pub steps: Vec<EvolutionStep>,
}

impl Stream {
    /// Applies every step, returning each intermediate state (excluding the
    /// initial one).
    pub fn replay(&self) -> Result<Vec<EvolvingState>> {
        let mut state = self.initial.clone();
        let mut out = Vec::with_capacity(self.steps.len());
        for step in &self.steps {
            state.apply_in_place(step)?;
            out.push(state.clone());
        }
        Ok(out)
    }

    pub fn final_state(&self) -> Result<EvolvingState> {
        let mut state = self.initial.clone();
        for step in &self.steps {
            state.apply_in_place(step)?;
        }
        Ok(state)
    }
}

/// Random fraction of observed entries to revise each step, and the
/// relative size of the revision.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Perturbation {
    pub fraction: f64,
    pub magnitude: f64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            fraction: 0.02,
            magnitude: 0.05,
        }
    }
}

/// Uniform[0,1] factors and their exact reconstruction.
pub fn gen_low_rank(shape: &Shape, rank: usize, seed: u64) -> Result<(KruskalModel, DenseTensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = KruskalModel::random_uniform(shape, rank, &mut rng)?;
    let dense = kruskal_reconstruct(&model);
    Ok((model, dense))
}

/// `round(density * cells)` cells sampled uniformly without replacement.
pub fn gen_mask(shape: &Shape, density: f64, seed: u64) -> Result<IndexSet> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::InvalidArgument(format!("density {density} not in (0, 1]")));
    }
    let cells = shape.num_cells();
    let k = (density * cells as f64).round() as usize;
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "density {density} observes no cell of {shape}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = sample(&mut rng, cells, k);
    IndexSet::from_indices(shape.clone(), picked.iter().map(|off| shape.unravel(off)))
}

pub fn gen_perturbation(
    state: &EvolvingState,
    perturbation: Perturbation,
    seed: u64,
) -> Result<EvolutionStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let event = perturb_with(state.observed(), perturbation, &mut rng)?;
    Ok(EvolutionStep::new(vec![event]))
}

fn perturb_with(observed: &CooTensor, p: Perturbation, rng: &mut impl Rng) -> Result<EvolutionEvent> {
    if !(0.0..=1.0).contains(&p.fraction) || !(p.magnitude >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "perturbation fraction {} / magnitude {} out of range",
            p.fraction, p.magnitude
        )));
    }
    let nnz = observed.nnz();
    let k = (p.fraction * nnz as f64).round() as usize;
    let mut picked = sample(rng, nnz, k).into_vec();
    picked.sort_unstable();
    let entries = picked
        .into_iter()
        .map(|pos| {
            let u = (2.0 * rng.gen::<f64>() - 1.0) * p.magnitude;
            Entry::new(observed.index(pos).to_vec(), observed.value(pos) * (1.0 + u))
        })
        .collect();
    Ok(EvolutionEvent::Update { entries })
}

/// Number of leading slices used for preparation; errors if either the
/// preparation or the stream would be empty.
pub fn prep_slices(dim: usize, prep_fraction: f64) -> Result<usize> {
    if !(prep_fraction > 0.0 && prep_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "prep fraction {prep_fraction} not in (0, 1]"
        )));
    }
    // the epsilon keeps 0.1 * 200 at 20 rather than 21
    let p = (prep_fraction * dim as f64 - 1e-9).ceil().max(0.0) as usize;
    if p == 0 || p >= dim {
        return Err(Error::InvalidArgument(format!(
            "prep fraction {prep_fraction} of {dim} slices leaves {p} prep slices and {} steps",
            dim.saturating_sub(p)
        )));
    }
    Ok(p)
}

/// Cells of slice `s` along `mode`, in row-major order.
fn slice_cells(shape: &Shape, mode: usize, s: usize) -> impl Iterator<Item = Vec<usize>> {
    shape
        .with_dim(mode, 1)
        .expect("dim 1 is valid")
        .cells()
        .map(move |mut c| {
            c[mode] = s;
            c
        })
}

fn check_truth(truth: &DenseTensor, mode: usize, mask: Option<&IndexSet>) -> Result<()> {
    truth.shape().check_mode(mode)?;
    if let Some(m) = mask {
        if m.shape() != truth.shape() {
            return Err(Error::ShapeMismatch(format!(
                "mask {} vs tensor {}",
                m.shape(),
                truth.shape()
            )));
        }
    }
    Ok(())
}

/// Leading slices as preparation, then one slice appended per step.
pub fn stream_slice_growth(
    truth: &DenseTensor,
    mask: Option<&IndexSet>,
    prep_fraction: f64,
    temporal_mode: usize,
) -> Result<Stream> {
    check_truth(truth, temporal_mode, mask)?;
    let shape = truth.shape();
    let dim = shape.dim(temporal_mode);
    let prep = prep_slices(dim, prep_fraction)?;
    let observed = |c: &Vec<usize>| mask.map_or(true, |m| m.contains(c));
    let value = |c: Vec<usize>| {
        let v = truth.get(&c).expect("in bounds");
        Entry::new(c, v)
    };

    let prep_shape = shape.with_dim(temporal_mode, prep)?;
    let mut initial = CooTensor::empty(prep_shape);
    for s in 0..prep {
        for c in slice_cells(shape, temporal_mode, s).filter(observed) {
            let e = value(c);
            initial.insert(e.index, e.value)?;
        }
    }
    let steps = (prep..dim)
        .map(|s| {
            let entries = slice_cells(shape, temporal_mode, s).filter(observed).map(value).collect();
            EvolutionStep::new(vec![EvolutionEvent::ModeGrowth {
                mode: temporal_mode,
                grow_by: 1,
                entries,
            }])
        })
        .collect();
    Ok(Stream {
        initial: EvolvingState::new(initial),
        steps,
    })
}

/// Growth along `gd_mode` where each new slice arrives in `lag` portions.
///
/// Slice `s` is born at step `s - prep + 1` (so the last preparation slice
/// is born at step 0). Its cells are shuffled and cut into `lag` near-equal
/// portions; portion `j` is observed at birth + `j`, so a slice is complete
/// `lag - 1` steps after it appears. Preparation slices carry every portion
/// due by step 0. With a perturbation, each step also revises a random
/// subset of the cells observed before the step.
pub fn stream_general(
    truth: &DenseTensor,
    gd_mode: usize,
    lag: usize,
    perturb: Option<Perturbation>,
    prep_fraction: f64,
    seed: u64,
) -> Result<Stream> {
    check_truth(truth, gd_mode, None)?;
    if lag == 0 {
        return Err(Error::InvalidArgument("fill lag must be at least 1".into()));
    }
    let shape = truth.shape();
    let dim = shape.dim(gd_mode);
    let prep = prep_slices(dim, prep_fraction)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let entry = |c: Vec<usize>| {
        let v = truth.get(&c).expect("in bounds");
        Entry::new(c, v)
    };
    let portions: Vec<Vec<Vec<Entry>>> = (0..dim)
        .map(|s| {
            let mut cells: Vec<Vec<usize>> = slice_cells(shape, gd_mode, s).collect();
            if lag > 1 {
                cells.shuffle(&mut rng);
            }
            let n = cells.len();
            (0..lag)
                .map(|j| {
                    let mut part = cells[j * n / lag..(j + 1) * n / lag].to_vec();
                    part.sort_unstable();
                    part.into_iter().map(entry).collect()
                })
                .collect()
        })
        .collect();
    // birth step of slice s is s + 1 - prep (may be negative)
    let birth = |s: usize| s as i64 + 1 - prep as i64;

    let mut initial = CooTensor::empty(shape.with_dim(gd_mode, prep)?);
    for s in 0..prep {
        let due = (1 - birth(s)).min(lag as i64) as usize;
        for part in &portions[s][..due] {
            for e in part {
                initial.insert(e.index.clone(), e.value)?;
            }
        }
    }

    let initial = EvolvingState::new(initial);
    let mut state = initial.clone();
    let mut steps = Vec::with_capacity(dim - prep);
    for s_new in prep..dim {
        let t = birth(s_new);
        let mut events = vec![EvolutionEvent::ModeGrowth {
            mode: gd_mode,
            grow_by: 1,
            entries: portions[s_new][0].clone(),
        }];
        let fills: Vec<Entry> = (0..s_new)
            .filter_map(|s| {
                let j = t - birth(s);
                (j >= 1 && j < lag as i64).then(|| portions[s][j as usize].iter().cloned())
            })
            .flatten()
            .collect();
        if !fills.is_empty() {
            events.push(EvolutionEvent::Fill { entries: fills });
        }
        if let Some(p) = perturb {
            events.push(perturb_with(state.observed(), p, &mut rng)?);
        }
        let step = EvolutionStep::new(events);
        state.apply_in_place(&step)?;
        steps.push(step);
    }
    Ok(Stream { initial, steps })
}
