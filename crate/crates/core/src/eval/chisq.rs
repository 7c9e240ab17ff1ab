use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::EvalError;

/// Goodness-of-fit p-value of `counts` against probabilities `expected`.
///
/// Adjacent cells are merged until each holds an expected count of at least
/// five; a remainder below five joins the last merged cell. Observations in a
/// zero-probability cell give p = 0.
pub fn chi_square_fit(counts: &[u64], expected: &[f64]) -> Result<f64, EvalError> {
    if counts.len() != expected.len() {
        return Err(EvalError::Config(format!(
            "{} counts for {} probabilities",
            counts.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(EvalError::Config("probabilities must be finite and nonnegative".into()));
    }
    let total_p: f64 = expected.iter().sum();
    if (total_p - 1.0).abs() > 1e-6 {
        return Err(EvalError::Config(format!("probabilities sum to {total_p}")));
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return Err(EvalError::Undefined("no observations".into()));
    }
    let n = n as f64;

    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(expected) {
        if p == 0.0 {
            if c > 0 {
                return Ok(0.0);
            }
            continue;
        }
        obs += c as f64;
        exp += p * n;
        if exp >= 5.0 {
            cells.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => cells.push((obs, exp)),
        }
    }
    if cells.len() < 2 {
        return Err(EvalError::Undefined(format!(
            "{} cell(s) left after merging small expectations",
            cells.len()
        )));
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dist = ChiSquared::new((cells.len() - 1) as f64).expect("positive degrees of freedom");
    Ok(dist.sf(stat))
}
