//! The evolving-tensor state machine.
//!
//! A step is a list of events applied atomically. Events apply in the order
//! growth, fill, update; all indices are validated against the post-growth
//! bounds before anything is committed, so a rejected step leaves the state
//! untouched.

mod generate;
mod log;

use std::collections::HashSet;
use std::fmt;

use serde::de::{self, SeqAccess, Visitor};
use serde::ser::SerializeSeq;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tensor::{CooTensor, IndexSet, Shape};

pub use generate::{
    gen_low_rank, gen_mask, gen_perturbation, prep_slices, stream_general, stream_slice_growth,
    Perturbation, Stream,
};
pub use log::{read_event_log, read_event_log_file, write_event_log, write_event_log_file, LogRecord};

/// One observed value at a cell. Serialized as `[i_1, .., i_N, value]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub index: Vec<usize>,
    pub value: f64,
}

impl Entry {
    pub fn new(index: Vec<usize>, value: f64) -> Self {
        Entry { index, value }
    }
}

impl Serialize for Entry {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.index.len() + 1))?;
        for i in &self.index {
            seq.serialize_element(i)?;
        }
        seq.serialize_element(&self.value)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Entry {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct EntryVisitor;

        impl<'de> Visitor<'de> for EntryVisitor {
            type Value = Entry;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of indices followed by a value")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> std::result::Result<Entry, A::Error> {
                let mut items: Vec<serde_json::Number> = Vec::new();
                while let Some(x) = seq.next_element()? {
                    items.push(x);
                }
                let value = items
                    .pop()
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| de::Error::custom("entry needs a value"))?;
                if items.is_empty() {
                    return Err(de::Error::custom("entry needs at least one index"));
                }
                let index = items
                    .iter()
                    .map(|n| {
                        n.as_u64()
                            .map(|i| i as usize)
                            .ok_or_else(|| de::Error::custom(format!("bad index {n}")))
                    })
                    .collect::<std::result::Result<_, _>>()?;
                Ok(Entry { index, value })
            }
        }

        deserializer.deserialize_seq(EntryVisitor)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EvolutionEvent {
    /// Appends `grow_by` slices to `mode`, with the observed entries of the
    /// appended region.
    #[serde(rename = "grow")]
    ModeGrowth {
        mode: usize,
        #[serde(rename = "by")]
        grow_by: usize,
        entries: Vec<Entry>,
    },
    /// Observations of previously unobserved cells.
    Fill { entries: Vec<Entry> },
    /// Revised values of previously observed cells.
    Update { entries: Vec<Entry> },
}

impl EvolutionEvent {
    pub fn entries(&self) -> &[Entry] {
        match self {
            EvolutionEvent::ModeGrowth { entries, .. }
            | EvolutionEvent::Fill { entries }
            | EvolutionEvent::Update { entries } => entries,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            EvolutionEvent::ModeGrowth { .. } => 0,
            EvolutionEvent::Fill { .. } => 1,
            EvolutionEvent::Update { .. } => 2,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionStep {
    pub events: Vec<EvolutionEvent>,
}

impl EvolutionStep {
    pub fn new(events: Vec<EvolutionEvent>) -> Self {
        EvolutionStep { events }
    }

    pub fn nnz(&self) -> usize {
        self.events.iter().map(|e| e.entries().len()).sum()
    }
}

/// Snapshot of an evolving tensor at time t.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolvingState {
    observed: CooTensor,
    prev_shape: Shape,
    delta: CooTensor,
}

fn invalid(index: &[usize], reason: impl Into<String>) -> Error {
    Error::InvalidEvent {
        index: index.to_vec(),
        reason: reason.into(),
    }
}

impl EvolvingState {
    /// A state whose history is exactly `observed`, with an empty delta.
    pub fn new(observed: CooTensor) -> Self {
        let shape = observed.shape().clone();
        EvolvingState {
            delta: CooTensor::empty(shape.clone()),
            prev_shape: shape,
            observed,
        }
    }

    pub fn shape(&self) -> &Shape {
        self.observed.shape()
    }

    pub fn prev_shape(&self) -> &Shape {
        &self.prev_shape
    }

    /// `Ω^t ⊛ X^t`.
    pub fn observed(&self) -> &CooTensor {
        &self.observed
    }

    /// Entries introduced or changed by the last step (`Ω̃^t`), with values.
    pub fn delta(&self) -> &CooTensor {
        &self.delta
    }

    pub fn delta_mask(&self) -> IndexSet {
        self.delta.mask()
    }

    /// `Ω^{t,old}`: observed cells untouched by the last step.
    pub fn old_mask(&self) -> IndexSet {
        self.observed
            .mask()
            .difference(&self.delta.mask())
            .expect("same order")
    }

    pub fn apply_step(&self, step: &EvolutionStep) -> Result<EvolvingState> {
        let mut next = self.clone();
        next.apply_in_place(step)?;
        Ok(next)
    }

    /// Validates the whole step, then commits it.
    pub fn apply_in_place(&mut self, step: &EvolutionStep) -> Result<()> {
        let old_shape = self.shape().clone();
        let order = old_shape.order();

        let mut dims = old_shape.dims().to_vec();
        let mut grown = vec![false; order];
        for ev in &step.events {
            if let EvolutionEvent::ModeGrowth { mode, grow_by, .. } = ev {
                if *mode >= order {
                    return Err(Error::ModeOutOfRange { mode: *mode, order });
                }
                if *grow_by == 0 {
                    return Err(Error::InvalidArgument(format!("growth of mode {mode} by zero")));
                }
                if grown[*mode] {
                    return Err(Error::InvalidArgument(format!(
                        "mode {mode} grows more than once in one step"
                    )));
                }
                grown[*mode] = true;
                dims[*mode] += grow_by;
            }
        }
        let new_shape = Shape::new(dims)?;

        let mut events: Vec<&EvolutionEvent> = step.events.iter().collect();
        events.sort_by_key(|e| e.rank());

        let mut seen: HashSet<&[usize]> = HashSet::new();
        for ev in &events {
            for e in ev.entries() {
                let idx = e.index.as_slice();
                if !new_shape.contains(idx) {
                    return Err(invalid(idx, format!("outside bounds {new_shape}")));
                }
                if !e.value.is_finite() {
                    return Err(invalid(idx, "non-finite value"));
                }
                if !seen.insert(idx) {
                    return Err(invalid(idx, "index appears twice in one step"));
                }
                match ev {
                    EvolutionEvent::ModeGrowth { mode, .. } => {
                        if idx[*mode] < old_shape.dim(*mode) {
                            return Err(invalid(idx, format!("not in the slices appended to mode {mode}")));
                        }
                    }
                    EvolutionEvent::Fill { .. } => {
                        if self.observed.contains(idx) {
                            return Err(invalid(idx, "fill at an already observed cell"));
                        }
                    }
                    EvolutionEvent::Update { .. } => {
                        if !self.observed.contains(idx) {
                            return Err(invalid(idx, "update at an unobserved cell"));
                        }
                    }
                }
            }
        }

        self.observed.grow_to(new_shape.clone())?;
        let mut delta = CooTensor::empty(new_shape);
        for ev in &events {
            for e in ev.entries() {
                self.observed.upsert(&e.index, e.value)?;
                delta.insert(e.index.clone(), e.value)?;
            }
        }
        self.delta = delta;
        self.prev_shape = old_shape;
        Ok(())
    }
}
