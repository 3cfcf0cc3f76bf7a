use serde::{Deserialize, Serialize};

use super::mfpt;
use crate::error::{Error, Result};
use crate::optimize::brent_minimize;
use crate::params::{invalid, FptQuery, SrgbmParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalRate {
    /// Minimizing rate (year^-1); exactly 0 when no resetting is best.
    pub rate: f64,
    /// MFPT at that rate (years).
    pub mfpt: f64,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalRateOptions {
    /// Smallest rate scanned.
    pub floor: f64,
    /// Number of log-spaced scan points between `floor` and `r_max`.
    pub scan_points: usize,
    /// Relative tolerance of the Brent refinement.
    pub tol: f64,
}

impl Default for OptimalRateOptions {
    fn default() -> Self {
        Self {
            floor: 1e-6,
            scan_points: 400,
            tol: 1e-10,
        }
    }
}

/// Resetting rate in `[0, r_max]` minimizing the MFPT of `query`.
///
/// A log-spaced scan brackets the minimum, Brent's method refines it, and the
/// `r -> 0` limit competes as the boundary candidate: when it is finite and no
/// larger than the best interior value the optimal rate is reported as 0.
pub fn optimal_resetting_rate(
    query: &FptQuery,
    mu: f64,
    sigma2: f64,
    x_r: f64,
    r_max: f64,
) -> Result<OptimalRate> {
    optimal_resetting_rate_with(query, mu, sigma2, x_r, r_max, &OptimalRateOptions::default())
}

pub fn optimal_resetting_rate_with(
    query: &FptQuery,
    mu: f64,
    sigma2: f64,
    x_r: f64,
    r_max: f64,
    options: &OptimalRateOptions,
) -> Result<OptimalRate> {
    let base = SrgbmParams::new(mu, sigma2, 0.0, x_r)?;
    if !(r_max > options.floor && r_max.is_finite()) {
        return Err(invalid("r_max", r_max, "must be finite and above the rate floor"));
    }
    query.validate_ordered()?;
    // Domain problems (target below the reset income) surface here.
    let probe = mfpt(query, &base.with_rate(r_max));
    if let Err(e @ Error::Domain(_)) = probe {
        return Err(e);
    }
    if query.x0 == query.y {
        return Ok(OptimalRate {
            rate: 0.0,
            mfpt: 0.0,
            at_boundary: true,
        });
    }

    let eval = |r: f64| mfpt(query, &base.with_rate(r)).unwrap_or(f64::INFINITY);
    let n = options.scan_points.max(3);
    let (lf, lm) = (options.floor.ln(), r_max.ln());
    let grid: Vec<f64> = (0..n)
        .map(|i| (lf + (lm - lf) * i as f64 / (n - 1) as f64).exp())
        .collect();
    let values: Vec<f64> = grid.iter().map(|&r| eval(r)).collect();
    let (best, best_value) = values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty scan");

    let limit = mfpt(query, &base).ok();
    if !best_value.is_finite() {
        return match limit {
            Some(t) => Ok(OptimalRate {
                rate: 0.0,
                mfpt: t,
                at_boundary: true,
            }),
            None => Err(Error::Divergent(format!(
                "MFPT is infinite for every rate in [0, {r_max}]"
            ))),
        };
    }

    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(n - 1)];
    let refined = brent_minimize(eval, lo, hi, options.tol, 500);
    let (rate, value) = if refined.fx <= best_value {
        (refined.x, refined.fx)
    } else {
        (grid[best], best_value)
    };

    if let Some(t0) = limit {
        if t0 <= value {
            return Ok(OptimalRate {
                rate: 0.0,
                mfpt: t0,
                at_boundary: true,
            });
        }
    }
    Ok(OptimalRate {
        rate,
        mfpt: value,
        at_boundary: best + 1 == n,
    })
}
