//! Accuracy and pass@k.

use super::EvalError;

/// Percentage accuracy: `100 * mean(bits)`.
pub fn accuracy(results: &[bool]) -> Result<f64, EvalError> {
    if results.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let correct = results.iter().filter(|b| **b).count();
    Ok(100.0 * correct as f64 / results.len() as f64)
}

/// Unbiased pass@k estimator: `1 - C(n-c, k) / C(n, k)`.
///
/// Computed in product form for numerical stability. At `k = n` this reduces
/// to the indicator `c >= 1`.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, EvalError> {
    if c > n || k < 1 || k > n {
        return Err(EvalError::Domain(format!(
            "pass_at_k requires 0 <= c <= n and 1 <= k <= n, got n={n} c={c} k={k}"
        )));
    }
    if n - c < k {
        return Ok(1.0);
    }
    let mut prod = 1.0f64;
    for i in 1..=k {
        prod *= (n - c - k + i) as f64 / (n - k + i) as f64;
    }
    Ok(1.0 - prod)
}
