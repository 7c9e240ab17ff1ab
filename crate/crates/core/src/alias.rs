//! Walker/Vose alias table for O(1) draws from a fixed discrete distribution.

use rand::Rng;

#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds a table from nonnegative weights. Returns `None` when the weights
    /// are empty, contain a non-finite or negative value, or sum to zero.
    pub fn new(weights: &[f64]) -> Option<Self> {
        let n = weights.len();
        if n == 0 || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return None;
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }

        let mut prob: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| prob[i] < 1.0);

        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            alias[s] = l as u32;
            prob[l] -= 1.0 - prob[s];
            if prob[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // Leftovers are 1 up to rounding; a zero weight must stay unreachable.
        let fallback = weights.iter().position(|&w| w > 0.0).unwrap_or(0) as u32;
        for i in large.into_iter().chain(small) {
            if weights[i] > 0.0 {
                prob[i] = 1.0;
            } else {
                prob[i] = 0.0;
                alias[i] = fallback;
            }
        }
        Some(Self { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.gen_range(0..self.prob.len());
        if rng.gen::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Exact probability mass the table assigns to each index.
    pub fn probabilities(&self) -> Vec<f64> {
        let n = self.prob.len() as f64;
        let mut out = vec![0.0; self.prob.len()];
        for (i, &p) in self.prob.iter().enumerate() {
            out[i] += p / n;
            out[self.alias[i] as usize] += (1.0 - p) / n;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_degenerate_weights() {
        assert!(AliasTable::new(&[]).is_none());
        assert!(AliasTable::new(&[0.0, 0.0]).is_none());
        assert!(AliasTable::new(&[1.0, -1.0]).is_none());
        assert!(AliasTable::new(&[1.0, f64::NAN]).is_none());
    }

    #[test]
    fn zero_weight_is_never_drawn() {
        let table = AliasTable::new(&[0.0, 1.0, 0.0, 3.0]).unwrap();
        let mut rng = crate::rng::rank_stream(7, 0, 0);
        for _ in 0..10_000 {
            let i = table.sample(&mut rng);
            assert!(i == 1 || i == 3);
        }
    }

    proptest! {
        #[test]
        fn table_mass_matches_weights(weights in prop::collection::vec(0.0f64..100.0, 1..40)) {
            let total: f64 = weights.iter().sum();
            prop_assume!(total > 1e-9);
            let table = AliasTable::new(&weights).unwrap();
            for (p, w) in table.probabilities().iter().zip(&weights) {
                prop_assert!((p - w / total).abs() < 1e-9);
            }
        }
    }
}
