//! JSON snapshot of a model and its step counter.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::KruskalModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub shape: Vec<usize>,
    pub rank: usize,
    /// One row-major array per mode.
    pub factors: Vec<Vec<f64>>,
    pub step: usize,
}

impl Checkpoint {
    pub fn new(model: &KruskalModel, step: usize) -> Self {
        Checkpoint {
            shape: model.shape().dims().to_vec(),
            rank: model.rank(),
            factors: model.factors().iter().map(|f| f.iter().copied().collect()).collect(),
            step,
        }
    }

    pub fn model(&self) -> Result<KruskalModel> {
        if self.factors.len() != self.shape.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} factors for an order-{} shape",
                self.factors.len(),
                self.shape.len()
            )));
        }
        let factors = self
            .shape
            .iter()
            .zip(&self.factors)
            .map(|(&rows, data)| {
                Array2::from_shape_vec((rows, self.rank), data.clone())
                    .map_err(|e| Error::ShapeMismatch(e.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        KruskalModel::new(factors)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        serde_json::to_writer(&mut w, self)?;
        w.flush()?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        Ok(serde_json::from_reader(BufReader::new(reader))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write(File::create(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(File::open(path)?)
    }
}
