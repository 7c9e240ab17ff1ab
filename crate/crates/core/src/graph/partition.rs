use super::{GlobalGraph, GraphError};
use crate::{Rank, VertexId};

/// 1-D vertex partition: rank `r` owns `[boundaries[r], boundaries[r + 1])`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionMap {
    boundaries: Vec<VertexId>,
}

impl PartitionMap {
    pub fn new(boundaries: Vec<VertexId>) -> Result<Self, GraphError> {
        if boundaries.len() < 2 || boundaries[0] != 0 {
            return Err(GraphError::Config(
                "boundaries need at least two entries starting at 0".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GraphError::Config("boundaries must be strictly increasing".into()));
        }
        Ok(Self { boundaries })
    }

    /// `boundaries[r] = floor(r * n / p)`.
    pub fn uniform(num_vertices: usize, ranks: usize) -> Result<Self, GraphError> {
        check_ranks(num_vertices, ranks)?;
        let boundaries = (0..=ranks)
            .map(|r| ((r as u128 * num_vertices as u128) / ranks as u128) as VertexId)
            .collect();
        Self::new(boundaries)
    }

    pub fn boundaries(&self) -> &[VertexId] {
        &self.boundaries
    }

    pub fn num_ranks(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn num_vertices(&self) -> usize {
        *self.boundaries.last().unwrap() as usize
    }

    pub fn range(&self, rank: Rank) -> std::ops::Range<VertexId> {
        self.boundaries[rank]..self.boundaries[rank + 1]
    }

    /// Owning rank of `v`. Panics if `v` is outside `[0, |V|)`.
    #[inline]
    pub fn owner(&self, v: VertexId) -> Rank {
        assert!((v as usize) < self.num_vertices(), "vertex {v} out of range");
        self.boundaries.partition_point(|&b| b <= v) - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionOutcome {
    pub map: PartitionMap,
    /// False when the edge-balanced sweep failed and the uniform split was used.
    pub balanced: bool,
}

fn check_ranks(num_vertices: usize, ranks: usize) -> Result<(), GraphError> {
    if ranks == 0 {
        return Err(GraphError::Config("need at least one rank".into()));
    }
    if ranks > num_vertices {
        return Err(GraphError::Config(format!(
            "{ranks} ranks requested for {num_vertices} vertices"
        )));
    }
    Ok(())
}

/// Edge-balanced first-fit split.
///
/// One left-to-right sweep gives consecutive vertices to the current rank
/// until its CSR entry count reaches `ceil(2|E| / p)`, then moves on. If the
/// sweep cannot give every rank at least one vertex the uniform split is
/// returned instead.
pub fn partition_first_fit(graph: &GlobalGraph, ranks: usize) -> Result<PartitionOutcome, GraphError> {
    let n = graph.num_vertices();
    check_ranks(n, ranks)?;
    let quota = (graph.num_entries() as u64).div_ceil(ranks as u64);

    let mut boundaries: Vec<VertexId> = vec![0];
    let mut filled = 0u64;
    for v in 0..n as VertexId {
        filled += graph.degree(v) as u64;
        if filled >= quota && boundaries.len() < ranks {
            boundaries.push(v + 1);
            filled = 0;
        }
    }
    let complete = boundaries.len() == ranks && *boundaries.last().unwrap() < n as VertexId;
    if complete {
        boundaries.push(n as VertexId);
        if let Ok(map) = PartitionMap::new(boundaries) {
            return Ok(PartitionOutcome { map, balanced: true });
        }
    }
    Ok(PartitionOutcome {
        map: PartitionMap::uniform(n, ranks)?,
        balanced: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_edge_list, Directedness};
    use proptest::prelude::*;

    fn graph(text: &str) -> GlobalGraph {
        parse_edge_list(text, Directedness::Undirected).unwrap().0
    }

    fn entries_in(g: &GlobalGraph, lo: VertexId, hi: VertexId) -> u64 {
        (lo..hi).map(|v| g.degree(v) as u64).sum()
    }

    #[test]
    fn single_rank_owns_everything() {
        let g = graph("0 1\n1 2\n2 3\n");
        let out = partition_first_fit(&g, 1).unwrap();
        assert_eq!(out.map.boundaries(), &[0, 4]);
    }

    #[test]
    fn path_split_no_worse_than_best_contiguous_split() {
        let g = graph("0 1\n1 2\n2 3\n");
        let out = partition_first_fit(&g, 2).unwrap();
        let b = out.map.boundaries();
        let (e0, e1) = (entries_in(&g, b[0], b[1]), entries_in(&g, b[1], b[2]));
        let ratio = |a: u64, b: u64| a.max(b) as f64 / a.min(b).max(1) as f64;
        // brute force every contiguous 2-split
        let best = (1..4)
            .map(|s| ratio(entries_in(&g, 0, s), entries_in(&g, s, 4)))
            .fold(f64::INFINITY, f64::min);
        assert!(b[1] > 0 && b[1] < 4);
        assert!(ratio(e0, e1) <= best + 1.0);
        assert_eq!(b, &[0, 2, 4]);
    }

    #[test]
    fn star_center_alone_on_rank_zero() {
        let g = graph("0 1\n0 2\n0 3\n0 4\n0 5\n0 6\n0 7\n0 8\n0 9\n");
        // quota = ceil(18 / 2) = 9 = degree of the center
        let out = partition_first_fit(&g, 2).unwrap();
        assert!(out.balanced);
        assert_eq!(out.map.boundaries(), &[0, 1, 10]);
    }

    #[test]
    fn falls_back_when_sweep_leaves_last_rank_empty() {
        // dense degrees (1, 3, 1, 1), quota 2: the second quota closes on the last vertex
        let g = graph("0 3\n1 3\n2 3\n");
        let out = partition_first_fit(&g, 3).unwrap();
        assert!(!out.balanced);
        assert_eq!(out.map, PartitionMap::uniform(4, 3).unwrap());
    }

    #[test]
    fn rejects_more_ranks_than_vertices() {
        let g = graph("0 1\n");
        assert!(matches!(partition_first_fit(&g, 3), Err(GraphError::Config(_))));
        assert!(matches!(partition_first_fit(&g, 0), Err(GraphError::Config(_))));
    }

    proptest! {
        #[test]
        fn owner_consistent_with_boundaries(
            edges in prop::collection::vec((0u32..60, 0u32..60), 1..200),
            ranks in 1usize..8,
        ) {
            let text: String = edges.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
            let g = graph(&text);
            prop_assume!(ranks <= g.num_vertices());
            let map = partition_first_fit(&g, ranks).unwrap().map;
            let b = map.boundaries();
            prop_assert_eq!(b.len(), ranks + 1);
            prop_assert_eq!(b[0], 0);
            prop_assert_eq!(b[ranks] as usize, g.num_vertices());
            for v in 0..g.num_vertices() as VertexId {
                let r = map.owner(v);
                prop_assert!(b[r] <= v && v < b[r + 1]);
            }
        }
    }
}
