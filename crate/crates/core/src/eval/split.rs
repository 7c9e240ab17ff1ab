use rand::seq::SliceRandom;
use serde::Serialize;

use super::EvalError;
use crate::rng::{rank_stream, EVAL_STREAM};
use crate::VertexId;

/// Train/test partition of labeled vertices. Labels are class indices into
/// `classes`, which holds the original class ids in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabeledSplit {
    pub train: Vec<(VertexId, usize)>,
    pub test: Vec<(VertexId, usize)>,
    pub classes: Vec<u64>,
    pub seed: u64,
}

impl LabeledSplit {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }
}

/// Stratified split: each class contributes `round(fraction * size)` members
/// to the training side, and at least one when it has ten or more.
pub fn make_split(labels: &[(VertexId, u64)], fraction: f64, seed: u64) -> Result<LabeledSplit, EvalError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(EvalError::Config(format!(
            "train fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let mut classes: Vec<u64> = labels.iter().map(|&(_, c)| c).collect();
    classes.sort_unstable();
    classes.dedup();
    match classes.len() {
        0 => return Err(EvalError::Config("no labeled vertices".into())),
        1 => return Err(EvalError::SingleClass(classes[0])),
        _ => {}
    }
    let mut members: Vec<Vec<VertexId>> = vec![Vec::new(); classes.len()];
    let mut seen = std::collections::HashSet::new();
    for &(v, c) in labels {
        if !seen.insert(v) {
            return Err(EvalError::Config(format!("vertex {v} labeled twice")));
        }
        members[classes.binary_search(&c).unwrap()].push(v);
    }

    let mut rng = rank_stream(seed, 0, EVAL_STREAM);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, vs) in members.iter_mut().enumerate() {
        vs.sort_unstable();
        vs.shuffle(&mut rng);
        let mut n_train = (fraction * vs.len() as f64).round() as usize;
        if n_train == 0 && vs.len() >= 10 {
            n_train = 1;
        }
        n_train = n_train.min(vs.len());
        train.extend(vs[..n_train].iter().map(|&v| (v, k)));
        test.extend(vs[n_train..].iter().map(|&v| (v, k)));
    }
    if test.is_empty() {
        return Err(EvalError::Config("split leaves no test vertices".into()));
    }
    if train.is_empty() {
        return Err(EvalError::Config("split leaves no training vertices".into()));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(LabeledSplit {
        train,
        test,
        classes,
        seed,
    })
}
