use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::argmax;
use super::train::label_ids;
use super::{CnnModel, NnError, Result};
use crate::signal::Window;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `confusion[true][predicted]`; row sums are per-class support.
    pub confusion: Vec<Vec<u32>>,
    pub total: usize,
}

impl Evaluation {
    pub fn correct(&self) -> u32 {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }
}

/// Top-1 accuracy and confusion matrix over labeled, normalized windows.
pub fn evaluate(model: &CnnModel, windows: &[Window]) -> Result<Evaluation> {
    if windows.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let labels = label_ids(model, windows)?;
    let preds: Vec<usize> = windows
        .par_iter()
        .map(|w| model.forward(w).map(|p| argmax(&p)))
        .collect::<Result<_>>()?;
    let c = model.num_classes();
    let mut confusion = vec![vec![0u32; c]; c];
    for (&t, &p) in labels.iter().zip(&preds) {
        confusion[t][p] += 1;
    }
    let correct: u32 = (0..c).map(|i| confusion[i][i]).sum();
    Ok(Evaluation {
        accuracy: correct as f64 / windows.len() as f64,
        confusion,
        total: windows.len(),
    })
}
