use std::ops::Range;

use super::{GlobalGraph, PartitionMap};
use crate::{Rank, VertexId};

/// One rank's view: owned rows of the CSR (global column ids) plus the
/// sorted set of non-owned vertices those rows reference.
#[derive(Debug, Clone)]
pub struct LocalPartition {
    rank: Rank,
    owned: Range<VertexId>,
    row_offsets: Vec<usize>,
    neighbors: Vec<VertexId>,
    weights: Vec<f32>,
    /// Running weight total over all local entries; row `x` covers
    /// `cumulative[row_offsets[x]..row_offsets[x + 1]]`.
    cumulative: Vec<f64>,
    ghosts: Vec<VertexId>,
    neighbor_ranks: Vec<Rank>,
}

pub fn build_local_partition(graph: &GlobalGraph, map: &PartitionMap, rank: Rank) -> LocalPartition {
    assert!(rank < map.num_ranks(), "rank {rank} outside partition map");
    let owned = map.range(rank);
    let lo = graph.row_offsets()[owned.start as usize] as usize;
    let hi = graph.row_offsets()[owned.end as usize] as usize;
    let row_offsets: Vec<usize> = graph.row_offsets()[owned.start as usize..=owned.end as usize]
        .iter()
        .map(|&o| o as usize - lo)
        .collect();
    let neighbors = graph.all_neighbors()[lo..hi].to_vec();
    let weights = graph.all_weights()[lo..hi].to_vec();
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0f64;
    for &w in &weights {
        acc += w as f64;
        cumulative.push(acc);
    }
    let mut ghosts: Vec<VertexId> = neighbors
        .iter()
        .copied()
        .filter(|v| !owned.contains(v))
        .collect();
    ghosts.sort_unstable();
    ghosts.dedup();
    let mut neighbor_ranks: Vec<Rank> = ghosts.iter().map(|&g| map.owner(g)).collect();
    neighbor_ranks.dedup();
    LocalPartition {
        rank,
        owned,
        row_offsets,
        neighbors,
        weights,
        cumulative,
        ghosts,
        neighbor_ranks,
    }
}

impl LocalPartition {
    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn owned_range(&self) -> Range<VertexId> {
        self.owned.clone()
    }

    pub fn num_owned(&self) -> usize {
        (self.owned.end - self.owned.start) as usize
    }

    #[inline]
    pub fn owns(&self, v: VertexId) -> bool {
        self.owned.contains(&v)
    }

    /// Local CSR entry count, E_p.
    pub fn local_edge_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn ghosts(&self) -> &[VertexId] {
        &self.ghosts
    }

    /// Ranks owning at least one ghost; with an undirected graph these are both
    /// the send targets and the receive sources of this rank.
    pub fn neighbor_ranks(&self) -> &[Rank] {
        &self.neighbor_ranks
    }

    fn row_span(&self, x: VertexId) -> Range<usize> {
        assert!(self.owns(x), "vertex {x} not owned by rank {}", self.rank);
        let i = (x - self.owned.start) as usize;
        self.row_offsets[i]..self.row_offsets[i + 1]
    }

    pub fn neighbors(&self, x: VertexId) -> &[VertexId] {
        &self.neighbors[self.row_span(x)]
    }

    pub fn weights(&self, x: VertexId) -> &[f32] {
        &self.weights[self.row_span(x)]
    }

    pub fn degree(&self, x: VertexId) -> usize {
        self.row_span(x).len()
    }

    /// Sum of incident weights of an owned vertex.
    pub fn strength(&self, x: VertexId) -> f64 {
        let span = self.row_span(x);
        self.span_weight(span)
    }

    fn span_weight(&self, span: Range<usize>) -> f64 {
        if span.is_empty() {
            return 0.0;
        }
        let before = if span.start == 0 { 0.0 } else { self.cumulative[span.start - 1] };
        self.cumulative[span.end - 1] - before
    }

    pub fn total_weight(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Index of the local entry hit by `target` in `[0, span weight)` within `span`.
    pub(crate) fn locate(&self, span: Range<usize>, target: f64) -> Option<usize> {
        if span.is_empty() {
            return None;
        }
        let before = if span.start == 0 { 0.0 } else { self.cumulative[span.start - 1] };
        let slice = &self.cumulative[span.clone()];
        let idx = slice.partition_point(|&c| c <= before + target);
        // Guard against target rounding onto the last boundary; skip zero-weight tails.
        let mut idx = idx.min(slice.len() - 1);
        while idx > 0 && self.weights[span.start + idx] == 0.0 {
            idx -= 1;
        }
        if self.weights[span.start + idx] == 0.0 {
            return None;
        }
        Some(span.start + idx)
    }

    pub(crate) fn entry(&self, i: usize) -> VertexId {
        self.neighbors[i]
    }

    pub(crate) fn row_of_entry(&self, i: usize) -> VertexId {
        let row = self.row_offsets.partition_point(|&o| o <= i) - 1;
        self.owned.start + row as VertexId
    }

    pub(crate) fn span_of(&self, x: VertexId) -> Range<usize> {
        self.row_span(x)
    }
}

/// Spread of local CSR entry counts across ranks (σ_{E_p} and extremes).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EdgeBalance {
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub std_dev: f64,
}

pub fn edge_balance(parts: &[LocalPartition]) -> EdgeBalance {
    let counts: Vec<usize> = parts.iter().map(|p| p.local_edge_count()).collect();
    let n = counts.len().max(1) as f64;
    let mean = counts.iter().sum::<usize>() as f64 / n;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / n;
    EdgeBalance {
        min: counts.iter().copied().min().unwrap_or(0),
        max: counts.iter().copied().max().unwrap_or(0),
        mean,
        std_dev: var.sqrt(),
    }
}
