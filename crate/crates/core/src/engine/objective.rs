use crate::error::{Error, Result};
use crate::tensor::{advance, eval_at, EntrySource, KruskalModel};

/// Evaluates
///
/// ```text
/// sum_{data} (x - y)^2 + alpha * sum_{old box} (y_prev - y_upper)^2 + beta * sum_n ||A_n||^2
/// ```
///
/// where the old box is every cell within the shape of `prev` and
/// `y_upper` is the model restricted to that box. The second sum streams
/// cell by cell.
pub fn objective_value(
    model: &KruskalModel,
    prev: &KruskalModel,
    data: &dyn EntrySource,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let shape = model.shape();
    if data.shape() != &shape {
        return Err(Error::ShapeMismatch(format!("data {} vs model {}", data.shape(), shape)));
    }
    let old = prev.shape();
    if old.order() != shape.order() || !shape.covers(&old) || prev.rank() != model.rank() {
        return Err(Error::ShapeMismatch(format!("previous model {old} vs model {shape}")));
    }
    let mut fit = 0.0;
    data.for_each_entry(&mut |idx, x| {
        let d = x - eval_at(model.factors(), idx);
        fit += d * d;
    });
    let mut rec = 0.0;
    if alpha != 0.0 {
        let dims = old.dims();
        let mut idx = vec![0; dims.len()];
        loop {
            let d = eval_at(prev.factors(), &idx) - eval_at(model.factors(), &idx);
            rec += d * d;
            if advance(&mut idx, dims).is_none() {
                break;
            }
        }
    }
    Ok(fit + alpha * rec + beta * model.frobenius_sq())
}
