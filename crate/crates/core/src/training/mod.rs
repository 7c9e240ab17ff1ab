//! LINE second-order SGD under owner-computes.
//!
//! Each rank keeps vertex (`U`) and context (`C`) rows only for the vertices
//! it owns. Pairs whose context vertex is local are applied at once; the rest
//! run against a per-batch snapshot of the remote context rows and return as
//! accumulated deltas to their owners.

mod batch;
mod driver;
mod negative;
mod store;

pub use batch::{train_batch, BatchStats};
pub use driver::{train_rank, PairTrace, RankOutcome, TrainSetup};
pub use negative::NegativeSampler;
pub use store::EmbeddingStore;

use serde::Serialize;
use thiserror::Error;

use crate::{Rank, VertexId};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("rank {rank} accessed row of vertex {vertex}, which it does not own")]
    Unowned { rank: Rank, vertex: VertexId },
    #[error("non-finite value in update of vertex {vertex}")]
    NonFinite { vertex: VertexId },
    #[error("negative distribution undefined: {0}")]
    Negatives(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hyperparams {
    pub dim: usize,
    /// η
    pub lr: f64,
    /// λ
    pub weight_decay: f64,
    /// K, negatives per positive pair
    pub negatives: usize,
    /// Exponent of the degree-based negative distribution.
    pub alpha: f64,
    /// α_neg, scale of negative gradients
    pub neg_weight: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            dim: 128,
            lr: 0.025,
            weight_decay: 0.0,
            negatives: 1,
            alpha: 0.75,
            neg_weight: 1.0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |what: &str| Err(TrainError::Config(what.to_string()));
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be nonnegative");
        }
        if self.negatives == 0 {
            return bad("need at least one negative per positive");
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad("negative exponent must lie in [0, 1]");
        }
        // zero disables negatives in trace-replay checks
        if !(self.neg_weight >= 0.0 && self.neg_weight.is_finite()) {
            return bad("negative weight must be nonnegative");
        }
        Ok(())
    }
}

const SIGMOID_CLAMP: f64 = 35.0;

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum()
}

/// σ(⟨u, c⟩) with the inner product clamped to ±35.
pub fn sigmoid_dot(u: &[f32], c: &[f32]) -> f64 {
    debug_assert_eq!(u.len(), c.len());
    let x = dot(u, c).clamp(-SIGMOID_CLAMP, SIGMOID_CLAMP);
    1.0 / (1.0 + (-x).exp())
}

/// Positive gradient scale η(1 − σ).
pub fn positive_gradient(u: &[f32], c: &[f32], hp: &Hyperparams) -> f64 {
    hp.lr * (1.0 - sigmoid_dot(u, c))
}

/// Negative gradient scale −η·α_neg·σ.
pub fn negative_gradient(u: &[f32], c: &[f32], hp: &Hyperparams) -> f64 {
    -hp.lr * hp.neg_weight * sigmoid_dot(u, c)
}

/// Local update: `U += g·C − ηλU` and `C += g·U₀ − ηλC`, where `U₀` is `U`
/// before this call. Returns false if any result is not finite.
pub fn line_update_local(u: &mut [f32], c: &mut [f32], g: f64, eta: f64, lambda: f64) -> bool {
    let decay = eta * lambda;
    let mut ok = g.is_finite();
    for (ui, ci) in u.iter_mut().zip(c.iter_mut()) {
        let u0 = *ui as f64;
        let c0 = *ci as f64;
        let nu = (u0 + g * c0 - decay * u0) as f32;
        let nc = (c0 + g * u0 - decay * c0) as f32;
        ok &= nu.is_finite() && nc.is_finite();
        *ui = nu;
        *ci = nc;
    }
    ok
}

/// Remote update against a fetched context copy `z`: `U += g·Z − ηλU`, and
/// `δ = g·U₀ − ηλZ` is added to `delta`. `z` is left untouched. Returns false
/// if any result is not finite.
pub fn line_update_remote(
    u: &mut [f32],
    z: &[f32],
    g: f64,
    eta: f64,
    lambda: f64,
    delta: &mut [f64],
) -> bool {
    let decay = eta * lambda;
    let mut ok = g.is_finite();
    for ((ui, &zi), di) in u.iter_mut().zip(z).zip(delta.iter_mut()) {
        let u0 = *ui as f64;
        let zi = zi as f64;
        let nu = (u0 + g * zi - decay * u0) as f32;
        *di += g * u0 - decay * zi;
        ok &= nu.is_finite() && di.is_finite();
        *ui = nu;
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_of_zero_vectors() {
        assert_eq!(sigmoid_dot(&[0.0; 4], &[0.0; 4]), 0.5);
    }

    #[test]
    fn sigmoid_saturates() {
        assert!((sigmoid_dot(&[10.0], &[10.0]) - 1.0).abs() < 1e-12);
        assert!(sigmoid_dot(&[-10.0], &[10.0]) < 1e-12);
        assert!(sigmoid_dot(&[1e30], &[1e30]).is_finite());
    }

    #[test]
    fn sigmoid_matches_reference() {
        let u = [0.3f32, -0.1, 0.25, 0.05, -0.4, 0.2, 0.11, -0.07];
        let c = [-0.2f32, 0.5, 0.1, 0.3, 0.05, -0.15, 0.42, 0.09];
        // accumulated in f64 from the exact f32 inputs, then the logistic
        let x: f64 = u.iter().zip(&c).map(|(&a, &b)| a as f64 * b as f64).sum();
        let reference = 0.5 * (1.0 + (x / 2.0).tanh());
        assert!((sigmoid_dot(&u, &c) - reference).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let (mut u, mut c) = ([0.3f32, -0.2], [0.7f32, 0.1]);
        assert!(line_update_local(&mut u, &mut c, 0.0, 0.025, 0.0));
        assert_eq!((u, c), ([0.3, -0.2], [0.7, 0.1]));
        let mut d = [0.0; 2];
        assert!(line_update_remote(&mut u, &c, 0.0, 0.025, 0.0, &mut d));
        assert_eq!((u, d), ([0.3, -0.2], [0.0, 0.0]));
    }

    #[test]
    fn local_update_uses_pre_update_row() {
        let (mut u, mut c) = ([1.0f32, 0.0], [0.0f32, 1.0]);
        assert!(line_update_local(&mut u, &mut c, 0.1, 0.025, 0.0));
        assert_eq!(u, [1.0, 0.1]);
        assert_eq!(c, [0.1, 1.0]);
    }

    #[test]
    fn remote_delta_by_hand() {
        let mut u = [1.0f32, 0.0];
        let z = [0.0f32, 1.0];
        let mut d = [0.0; 2];
        assert!(line_update_remote(&mut u, &z, 0.1, 0.025, 0.1, &mut d));
        assert!((d[0] - 0.1).abs() < 1e-12);
        assert!((d[1] + 0.0025).abs() < 1e-12);
        assert_eq!(z, [0.0, 1.0]);
        // U' = U0 + g·Z − ηλ·U0 = (1 − 0.0025, 0.1)
        assert!((u[0] as f64 - 0.9975).abs() < 1e-7 && (u[1] as f64 - 0.1).abs() < 1e-7);
    }

    #[test]
    fn non_finite_gradient_is_reported() {
        let (mut u, mut c) = ([1.0f32], [1.0f32]);
        assert!(!line_update_local(&mut u, &mut c, f64::NAN, 0.025, 0.0));
        let mut d = [0.0];
        assert!(!line_update_remote(&mut u, &[f32::INFINITY], 0.1, 0.025, 0.0, &mut d));
    }

    #[test]
    fn hyperparam_validation() {
        assert!(Hyperparams::default().validate().is_ok());
        for bad in [
            Hyperparams { lr: 0.0, ..Default::default() },
            Hyperparams { negatives: 0, ..Default::default() },
            Hyperparams { alpha: 1.5, ..Default::default() },
            Hyperparams { weight_decay: -1.0, ..Default::default() },
            Hyperparams { dim: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    fn row(d: usize) -> impl Strategy<Value = Vec<f32>> {
        proptest::collection::vec(-0.5f32..0.5, d)
    }

    proptest! {
        #[test]
        fn positive_step_raises_score((u, c) in (1usize..16).prop_flat_map(|d| (row(d), row(d)))) {
            let hp = Hyperparams { lr: 1e-3, ..Default::default() };
            let (mut u2, mut c2) = (u.clone(), c.clone());
            let g = positive_gradient(&u, &c, &hp);
            assert!(line_update_local(&mut u2, &mut c2, g, hp.lr, 0.0));
            prop_assume!(dot(&u, &u) + dot(&c, &c) > 1e-3);
            prop_assert!(dot(&u2, &c2) > dot(&u, &c));
        }

        #[test]
        fn local_and_remote_agree_on_u((u, c) in (1usize..16).prop_flat_map(|d| (row(d), row(d))), g in -0.1f64..0.1) {
            let (mut ul, mut cl) = (u.clone(), c.clone());
            assert!(line_update_local(&mut ul, &mut cl, g, 0.025, 0.01));
            let mut ur = u.clone();
            let mut d = vec![0.0; c.len()];
            assert!(line_update_remote(&mut ur, &c, g, 0.025, 0.01, &mut d));
            prop_assert_eq!(&ul, &ur);
            for ((&c0, &c1), &di) in c.iter().zip(&cl).zip(&d) {
                prop_assert!(((c0 as f64 + di) - c1 as f64).abs() < 1e-6);
            }
        }
    }
}
