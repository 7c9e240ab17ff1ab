//! Downstream quality: stratified label splits, one-vs-rest logistic
//! regression on frozen embeddings, Micro/Macro-F1, and a chi-square
//! goodness-of-fit test used to validate samplers.

mod chisq;
mod logreg;
mod split;

pub use chisq::chi_square_fit;
pub use logreg::{f1_report, fit_ovr_logreg, ClassScore, F1Report, LogRegConfig, OvrModel};
pub use split::{make_split, LabeledSplit};

use thiserror::Error;

use crate::VertexId;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("labels cover a single class ({0}); need at least two")]
    SingleClass(u64),
    #[error("embedding row of vertex {vertex} is not finite")]
    NonFinite { vertex: VertexId },
    #[error("no embedding row for vertex {vertex}")]
    Missing { vertex: VertexId },
    #[error("test undefined: {0}")]
    Undefined(String),
}

/// Row-major embedding matrix indexed by dense vertex id.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings<'a> {
    pub rows: &'a [f32],
    pub dim: usize,
}

impl<'a> Embeddings<'a> {
    pub fn new(rows: &'a [f32], dim: usize) -> Self {
        assert!(dim > 0 && rows.len().is_multiple_of(dim), "matrix shape");
        Self { rows, dim }
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, v: VertexId) -> Result<&'a [f32], EvalError> {
        let i = v as usize;
        if i >= self.len() {
            return Err(EvalError::Missing { vertex: v });
        }
        let row = &self.rows[i * self.dim..(i + 1) * self.dim];
        if row.iter().any(|x| !x.is_finite()) {
            return Err(EvalError::NonFinite { vertex: v });
        }
        Ok(row)
    }
}
