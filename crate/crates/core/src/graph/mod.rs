//! Graph ingestion, binary CSR storage and 1-D partitioning.

mod csr_io;
mod ingest;
mod labels;
mod local;
mod partition;

pub use csr_io::{
    decode_binary_csr, encode_binary_csr, encoded_len, read_binary_csr, write_binary_csr,
    CSR_MAGIC, CSR_VERSION,
};
pub use ingest::{ingest_edge_list, parse_edge_list, Directedness, IngestStats};
pub use labels::{parse_labels, read_labels};
pub use local::{build_local_partition, edge_balance, EdgeBalance, LocalPartition};
pub use partition::{partition_first_fit, PartitionMap, PartitionOutcome};

use thiserror::Error;

use crate::VertexId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Domain { line: usize, message: String },
    #[error("binary CSR at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("partition configuration: {0}")]
    Config(String),
}

/// Undirected weighted graph in compressed sparse row form.
///
/// Every undirected edge is stored twice, once in each endpoint's row. Rows
/// are sorted by neighbor id and free of duplicates and self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalGraph {
    row_offsets: Vec<u64>,
    neighbors: Vec<VertexId>,
    weights: Vec<f32>,
    /// Original (pre-densification) id of each dense vertex.
    original_ids: Vec<u64>,
}

impl GlobalGraph {
    /// Assembles a graph from raw CSR arrays after checking every invariant.
    pub fn from_csr(
        row_offsets: Vec<u64>,
        neighbors: Vec<VertexId>,
        weights: Vec<f32>,
        original_ids: Option<Vec<u64>>,
    ) -> Result<Self, GraphError> {
        let n = row_offsets.len().checked_sub(1).ok_or_else(|| {
            GraphError::Invalid("row_offsets must have num_vertices + 1 entries".into())
        })?;
        if row_offsets[0] != 0 {
            return Err(GraphError::Invalid("row_offsets[0] must be 0".into()));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(GraphError::Invalid("row_offsets must be nondecreasing".into()));
        }
        if row_offsets[n] != neighbors.len() as u64 || neighbors.len() != weights.len() {
            return Err(GraphError::Invalid(
                "last row offset, neighbor and weight counts disagree".into(),
            ));
        }
        if let Some(ids) = &original_ids {
            if ids.len() != n {
                return Err(GraphError::Invalid("id map length differs from |V|".into()));
            }
        }
        let graph = GlobalGraph {
            row_offsets,
            neighbors,
            weights,
            original_ids: original_ids.unwrap_or_else(|| (0..n as u64).collect()),
        };
        graph.validate()?;
        Ok(graph)
    }

    fn validate(&self) -> Result<(), GraphError> {
        let n = self.num_vertices();
        if n > VertexId::MAX as usize {
            return Err(GraphError::Invalid("too many vertices".into()));
        }
        for w in &self.weights {
            if !w.is_finite() || *w < 0.0 {
                return Err(GraphError::Invalid(format!("edge weight {w} is not a finite nonnegative value")));
            }
        }
        for v in 0..n as VertexId {
            let row = self.neighbors(v);
            for (i, &x) in row.iter().enumerate() {
                if x as usize >= n {
                    return Err(GraphError::Invalid(format!("neighbor {x} of {v} out of range")));
                }
                if x == v {
                    return Err(GraphError::Invalid(format!("self-loop at {v}")));
                }
                if i > 0 && row[i - 1] >= x {
                    return Err(GraphError::Invalid(format!("row {v} is not strictly sorted")));
                }
            }
            let weights = self.weights(v);
            for (&x, &w) in row.iter().zip(weights) {
                match self.edge_weight(x, v) {
                    Some(back) if back.to_bits() == w.to_bits() => {}
                    _ => {
                        return Err(GraphError::Invalid(format!(
                            "edge ({v}, {x}) has no symmetric twin with equal weight"
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_vertices(&self) -> usize {
        self.row_offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Number of stored CSR entries (= 2 |E|).
    pub fn num_entries(&self) -> usize {
        self.neighbors.len()
    }

    pub fn row_offsets(&self) -> &[u64] {
        &self.row_offsets
    }

    pub fn all_neighbors(&self) -> &[VertexId] {
        &self.neighbors
    }

    pub fn all_weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn original_ids(&self) -> &[u64] {
        &self.original_ids
    }

    pub fn degree(&self, v: VertexId) -> usize {
        let v = v as usize;
        (self.row_offsets[v + 1] - self.row_offsets[v]) as usize
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        let v = v as usize;
        &self.neighbors[self.row_offsets[v] as usize..self.row_offsets[v + 1] as usize]
    }

    pub fn weights(&self, v: VertexId) -> &[f32] {
        let v = v as usize;
        &self.weights[self.row_offsets[v] as usize..self.row_offsets[v + 1] as usize]
    }

    pub fn edge_weight(&self, u: VertexId, v: VertexId) -> Option<f32> {
        if u as usize >= self.num_vertices() {
            return None;
        }
        let row = self.neighbors(u);
        row.binary_search(&v).ok().map(|i| self.weights(u)[i])
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        self.edge_weight(u, v).is_some()
    }

    /// Dense id for an original id, linear in |V|; callers joining many ids
    /// should build their own map from [`GlobalGraph::original_ids`].
    pub fn dense_id(&self, original: u64) -> Option<VertexId> {
        self.original_ids
            .iter()
            .position(|&o| o == original)
            .map(|i| i as VertexId)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_vertices() as VertexId).map(|v| self.degree(v)).collect()
    }
}
