//! Chi-square distribution via the regularized incomplete gamma function.

use statrs::function::gamma::{gamma_lr, gamma_ur};

use super::InferenceError;

pub fn chi_square_cdf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(dof as f64 / 2.0, x / 2.0)
}

/// Upper tail `1 - CDF`, computed directly so small p-values keep their precision.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, x / 2.0)
}

/// Inverse CDF: brackets the root, then bisects until the bracket collapses.
pub fn chi_square_quantile(level: f64, dof: usize) -> Result<f64, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::InvalidLevel(level));
    }
    if dof == 0 {
        return Err(InferenceError::InvalidInput("chi-square needs at least one degree of freedom".into()));
    }
    let mut lo = 0.0;
    let mut hi = dof as f64;
    while chi_square_cdf(hi, dof) < level {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi_square_cdf(mid, dof) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
