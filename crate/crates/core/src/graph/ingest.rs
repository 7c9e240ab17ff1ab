use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::io::BufRead;

use super::{GlobalGraph, GraphError};
use crate::VertexId;

/// How the edge list lists its edges. The result is always an undirected
/// graph; the flag only decides whether a reversed line `v u` after `u v`
/// counts as a duplicate or as the reciprocal arc of a directed listing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Directedness {
    #[default]
    Undirected,
    Directed,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub lines: usize,
    pub edges_read: usize,
    pub self_loops: usize,
    pub duplicates: usize,
    pub reciprocal_arcs: usize,
}

/// Parses an edge list from a string. See [`ingest_edge_list`].
pub fn parse_edge_list(
    text: &str,
    directedness: Directedness,
) -> Result<(GlobalGraph, IngestStats), GraphError> {
    let mut builder = Builder::new(directedness);
    for (i, line) in text.lines().enumerate() {
        builder.line(i + 1, line)?;
    }
    builder.finish()
}

/// Reads an edge list of `u v` or `u v w` lines into an undirected CSR graph.
///
/// Vertex ids are densified in order of first appearance, self-loops are
/// dropped and repeated edges keep the weight of their first occurrence.
/// Blank lines and lines starting with `#` or `%` are ignored.
pub fn ingest_edge_list<R: BufRead>(
    reader: R,
    directedness: Directedness,
) -> Result<(GlobalGraph, IngestStats), GraphError> {
    let mut builder = Builder::new(directedness);
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| GraphError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        builder.line(i + 1, &line)?;
    }
    builder.finish()
}

struct Builder {
    directedness: Directedness,
    ids: HashMap<u64, VertexId>,
    original: Vec<u64>,
    // (min, max) -> index into `edges`; the first listed orientation is remembered
    seen: HashMap<(VertexId, VertexId), (VertexId, VertexId)>,
    edges: Vec<(VertexId, VertexId, f32)>,
    stats: IngestStats,
}

impl Builder {
    fn new(directedness: Directedness) -> Self {
        Builder {
            directedness,
            ids: HashMap::new(),
            original: Vec::new(),
            seen: HashMap::new(),
            edges: Vec::new(),
            stats: IngestStats::default(),
        }
    }

    fn intern(&mut self, id: u64, line: usize) -> Result<VertexId, GraphError> {
        let next = self.original.len();
        match self.ids.entry(id) {
            Entry::Occupied(e) => Ok(*e.get()),
            Entry::Vacant(e) => {
                if next >= VertexId::MAX as usize {
                    return Err(GraphError::Parse {
                        line,
                        message: "too many distinct vertex ids".into(),
                    });
                }
                e.insert(next as VertexId);
                self.original.push(id);
                Ok(next as VertexId)
            }
        }
    }

    fn line(&mut self, lineno: usize, line: &str) -> Result<(), GraphError> {
        self.stats.lines += 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with('%') {
            return Ok(());
        }
        let mut fields = trimmed.split_ascii_whitespace();
        let parse_id = |tok: Option<&str>, what: &str| -> Result<u64, GraphError> {
            let tok = tok.ok_or_else(|| GraphError::Parse {
                line: lineno,
                message: format!("missing {what} vertex id"),
            })?;
            tok.parse::<u64>().map_err(|_| GraphError::Parse {
                line: lineno,
                message: format!("{what} vertex id {tok:?} is not a nonnegative integer"),
            })
        };
        let u = parse_id(fields.next(), "source")?;
        let v = parse_id(fields.next(), "target")?;
        let w = match fields.next() {
            None => 1.0f64,
            Some(tok) => tok.parse::<f64>().map_err(|_| GraphError::Parse {
                line: lineno,
                message: format!("weight {tok:?} is not a number"),
            })?,
        };
        if let Some(extra) = fields.next() {
            return Err(GraphError::Parse {
                line: lineno,
                message: format!("unexpected trailing field {extra:?}"),
            });
        }
        if w.is_nan() || w < 0.0 {
            return Err(GraphError::Domain {
                line: lineno,
                message: format!("edge weight {w} must be nonnegative"),
            });
        }
        let w32 = w as f32;
        if !w32.is_finite() {
            return Err(GraphError::Domain {
                line: lineno,
                message: format!("edge weight {w} does not fit in single precision"),
            });
        }
        self.stats.edges_read += 1;

        let u = self.intern(u, lineno)?;
        let v = self.intern(v, lineno)?;
        if u == v {
            self.stats.self_loops += 1;
            return Ok(());
        }
        let key = (u.min(v), u.max(v));
        match self.seen.entry(key) {
            Entry::Occupied(first) => {
                let reciprocal = *first.get() == (v, u);
                if reciprocal && self.directedness == Directedness::Directed {
                    self.stats.reciprocal_arcs += 1;
                } else {
                    self.stats.duplicates += 1;
                }
            }
            Entry::Vacant(slot) => {
                slot.insert((u, v));
                self.edges.push((u, v, w32));
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<(GlobalGraph, IngestStats), GraphError> {
        let n = self.original.len();
        let mut degree = vec![0u64; n];
        for &(u, v, _) in &self.edges {
            degree[u as usize] += 1;
            degree[v as usize] += 1;
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0u64);
        for d in &degree {
            let last = *row_offsets.last().unwrap();
            row_offsets.push(last + d);
        }
        let entries = *row_offsets.last().unwrap() as usize;
        let mut cursor: Vec<u64> = row_offsets[..n].to_vec();
        let mut scratch = vec![(0 as VertexId, 0f32); entries];
        for &(u, v, w) in &self.edges {
            scratch[cursor[u as usize] as usize] = (v, w);
            cursor[u as usize] += 1;
            scratch[cursor[v as usize] as usize] = (u, w);
            cursor[v as usize] += 1;
        }
        for r in 0..n {
            scratch[row_offsets[r] as usize..row_offsets[r + 1] as usize]
                .sort_unstable_by_key(|&(x, _)| x);
        }
        let (neighbors, weights) = scratch.into_iter().unzip();
        let graph = GlobalGraph {
            row_offsets,
            neighbors,
            weights,
            original_ids: self.original,
        };
        Ok((graph, self.stats))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn parse(text: &str) -> GlobalGraph {
        parse_edge_list(text, Directedness::Undirected).unwrap().0
    }

    #[test]
    fn triangle() {
        let g = parse("0 1\n1 2\n2 0\n");
        assert_eq!(g.num_vertices(), 3);
        assert_eq!(g.num_edges(), 3);
        assert!(g.all_weights().iter().all(|&w| w == 1.0));
        assert_eq!(g.neighbors(0), &[1, 2]);
    }

    #[test]
    fn lone_self_loop_keeps_vertex() {
        let (g, stats) = parse_edge_list("0 0\n", Directedness::Undirected).unwrap();
        assert_eq!(g.num_vertices(), 1);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.degree(0), 0);
        assert_eq!(stats.self_loops, 1);
    }

    #[test]
    fn duplicate_collapsed_against_set_oracle() {
        let text = "0 1\n1 2\n2 3\n3 4\n4 5\n5 6\n3 4\n6 7\n7 8\n8 0\n";
        let g = parse(text);
        // independent oracle: set of unordered pairs of original ids
        let oracle: BTreeSet<(u64, u64)> = text
            .lines()
            .map(|l| {
                let mut it = l.split(' ').map(|t| t.parse::<u64>().unwrap());
                let (a, b) = (it.next().unwrap(), it.next().unwrap());
                (a.min(b), a.max(b))
            })
            .filter(|(a, b)| a != b)
            .collect();
        assert_eq!(g.num_edges(), 9);
        assert_eq!(oracle.len(), 9);
        let ids = g.original_ids();
        let mut built = BTreeSet::new();
        for u in 0..g.num_vertices() as VertexId {
            for &v in g.neighbors(u) {
                let (a, b) = (ids[u as usize], ids[v as usize]);
                built.insert((a.min(b), a.max(b)));
            }
        }
        assert_eq!(built, oracle);
    }

    #[test]
    fn ids_densified_in_first_appearance_order() {
        let g = parse("100 7\n7 42\n");
        assert_eq!(g.original_ids(), &[100, 7, 42]);
        assert!(g.has_edge(0, 1));
        assert!(g.has_edge(1, 2));
        assert!(!g.has_edge(0, 2));
    }

    #[test]
    fn first_weight_wins_and_reciprocal_counted() {
        let (g, stats) = parse_edge_list("0 1 2.5\n1 0 9\n", Directedness::Directed).unwrap();
        assert_eq!(g.edge_weight(0, 1), Some(2.5));
        assert_eq!(g.edge_weight(1, 0), Some(2.5));
        assert_eq!(stats.reciprocal_arcs, 1);
        let (_, stats) = parse_edge_list("0 1 2.5\n1 0 9\n", Directedness::Undirected).unwrap();
        assert_eq!(stats.duplicates, 1);
    }

    #[test]
    fn malformed_lines_report_line_numbers() {
        let err = parse_edge_list("0 1\n\n1 x\n", Directedness::Undirected).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 3, .. }), "{err:?}");
        let err = parse_edge_list("0\n", Directedness::Undirected).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
        let err = parse_edge_list("-1 2\n", Directedness::Undirected).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
        let err = parse_edge_list("0 1 1 1\n", Directedness::Undirected).unwrap_err();
        assert!(matches!(err, GraphError::Parse { line: 1, .. }));
    }

    #[test]
    fn negative_weight_is_domain_error() {
        let err = parse_edge_list("0 1\n1 2 -0.5\n", Directedness::Undirected).unwrap_err();
        assert!(matches!(err, GraphError::Domain { line: 2, .. }));
    }

    #[test]
    fn comments_and_blank_lines_skipped() {
        let g = parse("# header\n% other\n\n0 1\n");
        assert_eq!(g.num_edges(), 1);
    }
}
