use rand::Rng;

use super::TrainError;
use crate::alias::AliasTable;
use crate::VertexId;

/// Draws negatives from q(v) ∝ deg(v)^α over all vertices of the graph.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    table: AliasTable,
}

impl NegativeSampler {
    pub fn new(degrees: &[usize], alpha: f64) -> Result<Self, TrainError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(TrainError::Negatives(format!("exponent {alpha} outside [0, 1]")));
        }
        let weights: Vec<f64> = degrees
            .iter()
            .map(|&d| if d == 0 { 0.0 } else { (d as f64).powf(alpha) })
            .collect();
        AliasTable::new(&weights)
            .map(|table| Self { table })
            .ok_or_else(|| TrainError::Negatives("every vertex has degree zero".into()))
    }

    pub fn num_vertices(&self) -> usize {
        self.table.len()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> VertexId {
        self.table.sample(rng) as VertexId
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.table.probabilities()
    }
}
