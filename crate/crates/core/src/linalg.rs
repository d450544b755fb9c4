//! Numeric helpers: jittered Cholesky, compensated summation, log-factorial.

use nalgebra::linalg::Cholesky;
use nalgebra::{DMatrix, Dyn};

use crate::error::{Error, Result};
use crate::kernels::add_jitter;

/// Jitter is multiplied by ten at most this many times before giving up.
pub const MAX_JITTER_ESCALATIONS: usize = 3;

/// Factorizes `m + jitter·I`, escalating the jitter by ×10 up to three times.
///
/// Returns the factor and the jitter that succeeded.
pub fn cholesky_escalating(m: &DMatrix<f64>, jitter: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter;
    for attempt in 0..=MAX_JITTER_ESCALATIONS {
        if let Some(c) = add_jitter(m, j).cholesky() {
            if attempt > 0 {
                log::warn!("cholesky needed jitter {j:e} ({attempt} escalations)");
            }
            return Ok((c, j));
        }
        j *= 10.0;
    }
    Err(Error::CholeskyFailure { jitter: j / 10.0 })
}

/// `log det(L Lᵀ)` from a lower-triangular factor.
pub fn log_det_from_factor(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `log k!` as the compensated sum `Σ_{i=1}^{k} log i`.
pub fn log_factorial(k: u64) -> f64 {
    compensated_sum((2..=k).map(|i| (i as f64).ln()))
}
