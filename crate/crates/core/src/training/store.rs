use std::ops::Range;

use rand::Rng;

use super::TrainError;
use crate::rng::vertex_stream;
use crate::{Rank, VertexId};

/// Vertex and context rows for one rank's contiguous owned range.
///
/// Row accessors take global vertex ids and refuse vertices outside the owned
/// range, so a write to a foreign row surfaces as [`TrainError::Unowned`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    rank: Rank,
    owned: Range<VertexId>,
    dim: usize,
    u: Vec<f32>,
    c: Vec<f32>,
}

impl EmbeddingStore {
    pub fn zeros(rank: Rank, owned: Range<VertexId>, dim: usize) -> Self {
        let n = (owned.end - owned.start) as usize;
        Self {
            rank,
            owned,
            dim,
            u: vec![0.0; n * dim],
            c: vec![0.0; n * dim],
        }
    }

    /// `U` uniform in [−0.5/d, 0.5/d), `C` zero. Row `v` depends only on
    /// `seed` and `v`, never on the partitioning.
    pub fn init(rank: Rank, owned: Range<VertexId>, dim: usize, seed: u64) -> Self {
        let mut store = Self::zeros(rank, owned.clone(), dim);
        let scale = 1.0 / dim as f32;
        for v in owned {
            let mut rng = vertex_stream(seed, v, dim);
            let row = store.u_row_mut(v).expect("owned");
            for x in row {
                *x = (rng.gen::<f32>() - 0.5) * scale;
            }
        }
        store
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn owned_range(&self) -> Range<VertexId> {
        self.owned.clone()
    }

    pub fn owns(&self, v: VertexId) -> bool {
        self.owned.contains(&v)
    }

    pub fn num_rows(&self) -> usize {
        (self.owned.end - self.owned.start) as usize
    }

    fn span(&self, v: VertexId) -> Result<Range<usize>, TrainError> {
        if !self.owns(v) {
            return Err(TrainError::Unowned {
                rank: self.rank,
                vertex: v,
            });
        }
        let i = (v - self.owned.start) as usize * self.dim;
        Ok(i..i + self.dim)
    }

    pub fn u_row(&self, v: VertexId) -> Result<&[f32], TrainError> {
        Ok(&self.u[self.span(v)?])
    }

    pub fn c_row(&self, v: VertexId) -> Result<&[f32], TrainError> {
        Ok(&self.c[self.span(v)?])
    }

    pub fn u_row_mut(&mut self, v: VertexId) -> Result<&mut [f32], TrainError> {
        let s = self.span(v)?;
        Ok(&mut self.u[s])
    }

    pub fn c_row_mut(&mut self, v: VertexId) -> Result<&mut [f32], TrainError> {
        let s = self.span(v)?;
        Ok(&mut self.c[s])
    }

    /// `U[u]` and `C[v]` borrowed together.
    pub fn pair_mut(&mut self, u: VertexId, v: VertexId) -> Result<(&mut [f32], &mut [f32]), TrainError> {
        let (su, sv) = (self.span(u)?, self.span(v)?);
        Ok((&mut self.u[su], &mut self.c[sv]))
    }

    /// Row-major `U` for the owned range.
    pub fn vertex_matrix(&self) -> &[f32] {
        &self.u
    }

    pub fn context_matrix(&self) -> &[f32] {
        &self.c
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(&self.c).all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_bounds_and_zero_context() {
        let s = EmbeddingStore::init(0, 0..50, 4, 7);
        assert!(s.vertex_matrix().iter().all(|x| x.abs() <= 0.125));
        assert!(s.vertex_matrix().iter().any(|&x| x != 0.0));
        assert!(s.context_matrix().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn rows_do_not_depend_on_partitioning() {
        let whole = EmbeddingStore::init(0, 0..10, 8, 3);
        let right = EmbeddingStore::init(1, 6..10, 8, 3);
        for v in 6..10 {
            assert_eq!(whole.u_row(v).unwrap(), right.u_row(v).unwrap());
        }
        assert_ne!(whole.u_row(6).unwrap(), whole.u_row(7).unwrap());
        assert_eq!(right, EmbeddingStore::init(1, 6..10, 8, 3));
        assert_ne!(whole.u_row(0).unwrap(), EmbeddingStore::init(0, 0..10, 8, 4).u_row(0).unwrap());
    }

    #[test]
    fn foreign_rows_are_refused() {
        let mut s = EmbeddingStore::zeros(2, 10..20, 2);
        assert_eq!(s.u_row(9).unwrap_err(), TrainError::Unowned { rank: 2, vertex: 9 });
        assert!(s.c_row_mut(20).is_err());
        assert!(s.pair_mut(10, 25).is_err());
        assert!(s.pair_mut(10, 10).is_ok());
    }
}
