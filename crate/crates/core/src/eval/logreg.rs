use serde::Serialize;

use super::{EvalError, Embeddings, LabeledSplit};
use crate::VertexId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogRegConfig {
    /// L2 penalty on weights (not on the bias).
    pub l2: f64,
    pub iters: usize,
    pub step: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-4,
            iters: 500,
            step: 0.1,
        }
    }
}

/// One binary classifier per class over z-scored features.
#[derive(Debug, Clone)]
pub struct OvrModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    // per class: dim weights followed by the bias
    weights: Vec<Vec<f64>>,
}

impl OvrModel {
    pub fn num_classes(&self) -> usize {
        self.weights.len()
    }

    fn standardize(&self, row: &[f32], out: &mut Vec<f64>) {
        out.clear();
        out.extend(row.iter().zip(self.mean.iter().zip(&self.scale)).map(|(&x, (m, s))| (x as f64 - m) / s));
    }

    fn scores(&self, z: &[f64]) -> impl Iterator<Item = f64> + '_ {
        let d = z.len();
        let z = z.to_vec();
        self.weights.iter().map(move |w| dot(&w[..d], &z) + w[d])
    }

    /// Class index with the highest score; ties go to the lower index.
    pub fn predict_row(&self, row: &[f32]) -> usize {
        let mut z = Vec::with_capacity(row.len());
        self.standardize(row, &mut z);
        let mut best = (0, f64::NEG_INFINITY);
        for (k, s) in self.scores(&z).enumerate() {
            if s > best.1 {
                best = (k, s);
            }
        }
        best.0
    }

    pub fn predict(&self, emb: &Embeddings<'_>, vertices: &[VertexId]) -> Result<Vec<usize>, EvalError> {
        vertices.iter().map(|&v| Ok(self.predict_row(emb.row(v)?))).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log1p_exp(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Fits one-vs-rest L2-regularized logistic regression on the training side
/// of `split` with full-batch gradient descent. The step is halved whenever
/// an iteration would raise the objective.
pub fn fit_ovr_logreg(emb: &Embeddings<'_>, split: &LabeledSplit, cfg: &LogRegConfig) -> Result<OvrModel, EvalError> {
    if !(cfg.step > 0.0) || !(cfg.l2 >= 0.0) || cfg.iters == 0 {
        return Err(EvalError::Config(format!("bad logistic regression settings {cfg:?}")));
    }
    if split.train.is_empty() {
        return Err(EvalError::Config("empty training set".into()));
    }
    let d = emb.dim;
    let n = split.train.len();
    let mut x = Vec::with_capacity(n * d);
    for &(v, _) in &split.train {
        x.extend(emb.row(v)?.iter().map(|&f| f as f64));
    }
    let mut mean = vec![0.0; d];
    for r in x.chunks(d) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; d];
    for r in x.chunks(d) {
        for ((s, v), m) in scale.iter_mut().zip(r).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in scale.iter_mut() {
        let sd = (*s / n as f64).sqrt();
        *s = if sd > 1e-12 { sd } else { 1.0 };
    }
    for r in x.chunks_mut(d) {
        for ((v, m), s) in r.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) / s;
        }
    }

    let k = split.num_classes();
    let mut weights = Vec::with_capacity(k);
    for class in 0..k {
        let y: Vec<f64> = split.train.iter().map(|&(_, c)| if c == class { 1.0 } else { 0.0 }).collect();
        weights.push(fit_binary(&x, &y, d, cfg));
    }
    Ok(OvrModel { mean, scale, weights })
}

fn objective(x: &[f64], y: &[f64], w: &[f64], d: usize, l2: f64) -> f64 {
    let n = y.len() as f64;
    let loss: f64 = x
        .chunks(d)
        .zip(y)
        .map(|(r, &t)| {
            let s = dot(&w[..d], r) + w[d];
            log1p_exp(s) - t * s
        })
        .sum();
    loss / n + 0.5 * l2 * dot(&w[..d], &w[..d])
}

fn fit_binary(x: &[f64], y: &[f64], d: usize, cfg: &LogRegConfig) -> Vec<f64> {
    let n = y.len() as f64;
    let mut w = vec![0.0; d + 1];
    let mut step = cfg.step;
    let mut f = objective(x, y, &w, d, cfg.l2);
    let mut grad = vec![0.0; d + 1];
    let mut trial = vec![0.0; d + 1];
    for _ in 0..cfg.iters {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (r, &t) in x.chunks(d).zip(y) {
            let e = sigmoid(dot(&w[..d], r) + w[d]) - t;
            for (g, v) in grad.iter_mut().zip(r) {
                *g += e * v;
            }
            grad[d] += e;
        }
        for (j, g) in grad.iter_mut().enumerate() {
            *g /= n;
            if j < d {
                *g += cfg.l2 * w[j];
            }
        }
        loop {
            for ((t, wi), g) in trial.iter_mut().zip(&w).zip(&grad) {
                *t = wi - step * g;
            }
            let ft = objective(x, y, &trial, d, cfg.l2);
            if ft <= f || step < 1e-12 {
                if ft <= f {
                    std::mem::swap(&mut w, &mut trial);
                    f = ft;
                }
                break;
            }
            step *= 0.5;
        }
        if step < 1e-12 {
            break;
        }
    }
    w
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScore {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct F1Report {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassScore>,
}

/// Micro- and Macro-F1 for single-label predictions over `k` classes. With
/// one label per vertex micro-F1 equals accuracy. A class that is never
/// predicted has precision 0 and so contributes F1 = 0 to the macro mean.
pub fn f1_report(truth: &[usize], pred: &[usize], k: usize) -> Result<F1Report, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::Config(format!("{} labels for {} predictions", truth.len(), pred.len())));
    }
    if truth.is_empty() || k == 0 {
        return Err(EvalError::Undefined("no test vertices".into()));
    }
    if let Some(&c) = truth.iter().chain(pred).find(|&&c| c >= k) {
        return Err(EvalError::Config(format!("class index {c} out of range for {k} classes")));
    }
    let mut tp = vec![0usize; k];
    let mut pred_n = vec![0usize; k];
    let mut true_n = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        true_n[t] += 1;
        pred_n[p] += 1;
        if t == p {
            tp[t] += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let per_class: Vec<ClassScore> = (0..k)
        .map(|c| {
            let precision = ratio(tp[c], pred_n[c]);
            let recall = ratio(tp[c], true_n[c]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassScore {
                class: c,
                precision,
                recall,
                f1,
                support: true_n[c],
            }
        })
        .collect();
    let present: Vec<&ClassScore> = per_class.iter().filter(|s| s.support > 0 || pred_n[s.class] > 0).collect();
    let macro_f1 = present.iter().map(|s| s.f1).sum::<f64>() / present.len() as f64;
    let micro_f1 = tp.iter().sum::<usize>() as f64 / truth.len() as f64;
    Ok(F1Report {
        micro_f1,
        macro_f1,
        per_class,
    })
}
