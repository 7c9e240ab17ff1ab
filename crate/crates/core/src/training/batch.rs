use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::Serialize;

use super::{
    line_update_local, line_update_remote, negative_gradient, positive_gradient, EmbeddingStore, Hyperparams,
    NegativeSampler, TrainError,
};
use crate::graph::PartitionMap;
use crate::transport::Endpoint;
use crate::{Pair, VertexId};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct BatchStats {
    pub positives: usize,
    pub local_positives: usize,
    pub local_negatives: usize,
    pub remote_positives: usize,
    pub remote_negatives: usize,
    /// Distinct remote context rows fetched.
    pub fetched_rows: usize,
    pub deltas_sent: usize,
    pub deltas_applied: usize,
}

fn non_finite(v: VertexId) -> crate::Error {
    TrainError::NonFinite { vertex: v }.into()
}

fn protocol(msg: String) -> crate::Error {
    TrainError::Protocol(msg).into()
}

/// One training step over this rank's pairs. Collective: every rank must call
/// it once per batch, with possibly empty `pairs`.
///
/// Local positives and negatives are applied in pair order as they arise.
/// Remote ones are deferred, run against one fetched snapshot of each remote
/// context row (positives first, then negatives, each in emission order), and
/// their deltas are summed per row and sent to the owners.
pub fn train_batch<R: Rng + ?Sized>(
    pairs: &[Pair],
    store: &mut EmbeddingStore,
    negatives: &NegativeSampler,
    rng: &mut R,
    map: &PartitionMap,
    ep: &mut Endpoint,
    hp: &Hyperparams,
) -> crate::Result<BatchStats> {
    let me = ep.rank();
    let (eta, lambda) = (hp.lr, hp.weight_decay);
    let mut stats = BatchStats {
        positives: pairs.len(),
        ..Default::default()
    };
    let mut remote_pos: Vec<Pair> = Vec::new();
    let mut remote_neg: Vec<Pair> = Vec::new();

    for &(u, v) in pairs {
        if !store.owns(u) {
            return Err(TrainError::Unowned { rank: me, vertex: u }.into());
        }
        if store.owns(v) {
            let (ur, cr) = store.pair_mut(u, v)?;
            let g = positive_gradient(ur, cr, hp);
            if !line_update_local(ur, cr, g, eta, lambda) {
                return Err(non_finite(u));
            }
            stats.local_positives += 1;
        } else {
            remote_pos.push((u, v));
        }
        for _ in 0..hp.negatives {
            let n = negatives.sample(rng);
            if store.owns(n) {
                let (ur, cr) = store.pair_mut(u, n)?;
                let g = negative_gradient(ur, cr, hp);
                if !line_update_local(ur, cr, g, eta, lambda) {
                    return Err(non_finite(u));
                }
                stats.local_negatives += 1;
            } else {
                remote_neg.push((u, n));
            }
        }
    }
    stats.remote_positives = remote_pos.len();
    stats.remote_negatives = remote_neg.len();

    // fetch
    let p = ep.world_size();
    let mut wanted: Vec<BTreeSet<VertexId>> = vec![BTreeSet::new(); p];
    for &(_, v) in remote_pos.iter().chain(&remote_neg) {
        wanted[map.owner(v)].insert(v);
    }
    let requests: Vec<Vec<VertexId>> = wanted.iter().map(|s| s.iter().copied().collect()).collect();
    let dim = store.dim();
    let replies = {
        let store = &*store;
        ep.all_to_all_request(requests, |src, ids: Vec<VertexId>| -> crate::Result<Vec<(VertexId, Vec<f32>)>> {
            ids.into_iter()
                .map(|v| match store.c_row(v) {
                    Ok(row) => Ok((v, row.to_vec())),
                    Err(_) => Err(protocol(format!("rank {src} asked rank {me} for unowned row {v}"))),
                })
                .collect()
        })?
    };
    let mut snapshot: HashMap<VertexId, Vec<f32>> = HashMap::new();
    for (src, rows) in replies.into_iter().enumerate() {
        for (v, row) in rows {
            if !wanted[src].remove(&v) || row.len() != dim {
                return Err(protocol(format!("rank {src} returned unrequested row {v}")));
            }
            snapshot.insert(v, row);
        }
    }
    if let Some(v) = wanted.iter().flat_map(|s| s.iter()).next() {
        return Err(protocol(format!("row {v} was requested but not returned")));
    }
    stats.fetched_rows = snapshot.len();

    // remote updates
    let mut deltas: HashMap<VertexId, Vec<f64>> = HashMap::new();
    for (list, positive) in [(&remote_pos, true), (&remote_neg, false)] {
        for &(u, v) in list.iter() {
            let z = &snapshot[&v];
            let ur = store.u_row_mut(u)?;
            let g = if positive {
                positive_gradient(ur, z, hp)
            } else {
                negative_gradient(ur, z, hp)
            };
            let delta = deltas.entry(v).or_insert_with(|| vec![0.0; dim]);
            if !line_update_remote(ur, z, g, eta, lambda, delta) {
                return Err(non_finite(u));
            }
        }
    }

    // scatter
    let mut outgoing: Vec<BTreeMap<VertexId, Vec<f64>>> = vec![BTreeMap::new(); p];
    for (v, d) in deltas {
        outgoing[map.owner(v)].insert(v, d);
    }
    stats.deltas_sent = outgoing.iter().map(BTreeMap::len).sum();
    let sends: Vec<Vec<(VertexId, Vec<f64>)>> = outgoing.into_iter().map(|m| m.into_iter().collect()).collect();
    for (src, incoming) in ep.all_to_all_v(sends)?.into_iter().enumerate() {
        for (v, d) in incoming {
            let row = store
                .c_row_mut(v)
                .map_err(|_| protocol(format!("rank {src} sent rank {me} a delta for unowned row {v}")))?;
            if d.len() != row.len() {
                return Err(protocol(format!("delta for row {v} has length {}", d.len())));
            }
            for (x, dx) in row.iter_mut().zip(&d) {
                *x = (*x as f64 + dx) as f32;
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(non_finite(v));
            }
            stats.deltas_applied += 1;
        }
    }
    Ok(stats)
}
