//! Warm start for a step: existing rows are copied from the previous
//! factors, appended rows are fit to the new entries that only touch
//! existing rows of the other modes.

use ndarray::{concatenate, Array2, Axis};
use rand::Rng;

use super::sparse::{build_row_system, sparse_row_update, ModeTerms};
use crate::error::Result;
use crate::tensor::{CooTensor, FactorMatrix, RowBuckets};

/// Upper blocks: a copy of the previous factors.
pub fn init_upper(prev: &[FactorMatrix]) -> Vec<FactorMatrix> {
    prev.to_vec()
}

/// Fits the `new_rows` appended rows of `mode`.
///
/// Each row solves a ridge problem over the entries of `delta` whose
/// `mode` coordinate is that row and whose other coordinates are all within
/// the previous bounds, with the other modes fixed at `uppers`. Rows with
/// no such entry are drawn from Uniform[0,1].
pub fn init_lower<R: Rng + ?Sized>(
    uppers: &[FactorMatrix],
    delta: &CooTensor,
    mode: usize,
    new_rows: usize,
    beta: f64,
    jitter: f64,
    rng: &mut R,
) -> Result<FactorMatrix> {
    let rank = uppers[0].ncols();
    let old = uppers[mode].nrows();
    let order = uppers.len();

    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (idx, v) in delta.iter() {
        let inside = idx[mode] >= old
            && idx[mode] < old + new_rows
            && idx
                .iter()
                .enumerate()
                .all(|(k, &i)| k == mode || i < uppers[k].nrows());
        if inside {
            coords.extend(idx.iter().enumerate().map(|(k, &i)| if k == mode { i - old } else { i }));
            values.push(v);
        }
    }
    let buckets = RowBuckets::build(&coords, order, mode, new_rows);
    let terms = ModeTerms::new(uppers, None, mode, 0.0, beta);

    let mut lower = Array2::zeros((new_rows, rank));
    for row in 0..new_rows {
        let ids = buckets.row(row);
        if ids.is_empty() {
            for r in 0..rank {
                lower[[row, r]] = rng.gen::<f64>();
            }
            continue;
        }
        let slice = ids
            .iter()
            .map(|&k| (&coords[k * order..(k + 1) * order], values[k]));
        let sys = build_row_system(&terms, uppers, None, row, slice);
        lower.row_mut(row).assign(&sparse_row_update(&sys, jitter)?);
    }
    Ok(lower)
}

/// Stacks upper and lower blocks.
pub fn stack(upper: &FactorMatrix, lower: &FactorMatrix) -> FactorMatrix {
    concatenate(Axis(0), &[upper.view(), lower.view()]).expect("equal rank")
}
