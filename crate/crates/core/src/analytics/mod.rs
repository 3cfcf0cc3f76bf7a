//! Closed-form first-passage quantities of srGBM.
//!
//! Everything here is a pure function of its arguments. Powers of income
//! ratios are evaluated in log space: a query like "bottom percentile to top
//! percentile" easily spans several orders of magnitude.

mod optimal;
mod stationary;

pub use optimal::{optimal_resetting_rate, OptimalRate, OptimalRateOptions};
pub use stationary::{stationary_density, StationaryLaw};

use crate::error::{Error, Result};
use crate::params::{FptQuery, SrgbmParams};

/// Roots `(q1, q2)` of `mu q + (sigma2 / 2) q (q - 1) = s`, with `q1 >= 0 >= q2`
/// for `s >= 0`.
///
/// Each root is taken from whichever algebraic form avoids cancellation, so
/// the residual stays at rounding level even when `|sigma2 - 2 mu|` dwarfs
/// `8 s sigma2`. Returns `None` when the discriminant is negative (only
/// possible for `s < 0`).
pub(crate) fn characteristic_roots(s: f64, mu: f64, sigma2: f64) -> Option<(f64, f64)> {
    let b = sigma2 - 2.0 * mu;
    let disc = b * b + 8.0 * s * sigma2;
    if disc < 0.0 || !disc.is_finite() {
        return None;
    }
    let d = disc.sqrt();
    let two_s2 = 2.0 * sigma2;
    if b >= 0.0 {
        let q1 = (b + d) / two_s2;
        let q2 = if b + d == 0.0 { 0.0 } else { -4.0 * s / (b + d) };
        Some((q1, q2))
    } else {
        let q1 = 4.0 * s / (d - b);
        let q2 = (b - d) / two_s2;
        Some((q1, q2))
    }
}

fn check_rate(name: &'static str, s: f64) -> Result<()> {
    if s >= 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value: s,
            reason: "must be nonnegative and finite",
        })
    }
}

/// Positive characteristic exponent `q1(s)`.
pub fn exponent_q1(s: f64, params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    check_rate("s", s)?;
    let (q1, _) = characteristic_roots(s, params.mu, params.sigma2).expect("s >= 0");
    Ok(q1)
}

/// Nonpositive characteristic exponent `q2(s)`; `q1 * q2 = -2 s / sigma2`.
pub fn exponent_q2(s: f64, params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    check_rate("s", s)?;
    let (_, q2) = characteristic_roots(s, params.mu, params.sigma2).expect("s >= 0");
    Ok(q2)
}

/// Tail exponent of the stationary income distribution.
///
/// Computed from the log-drift form rather than through [`exponent_q1`]; the
/// two agree identically, which makes the pair a useful consistency check.
pub fn tail_alpha(params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    Ok(alpha_unchecked(params.mu, params.sigma2, params.r))
}

pub(crate) fn alpha_unchecked(mu: f64, sigma2: f64, r: f64) -> f64 {
    let m = mu - 0.5 * sigma2;
    let root = (m * m + 2.0 * r * sigma2).sqrt();
    if m <= 0.0 {
        (root - m) / sigma2
    } else {
        2.0 * r / (m + root)
    }
}

/// Reset-free first-passage MGF `<exp(-s T)> = (x0 / y)^{q1(s)}`.
pub fn fpt_mgf_reset_free(query: &FptQuery, s: f64, params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    query.validate_ordered()?;
    check_rate("s", s)?;
    let (q1, _) = characteristic_roots(s, params.mu, params.sigma2).expect("s >= 0");
    Ok((q1 * (query.x0 / query.y).ln()).exp())
}

/// Laplace transform of the survival probability under resetting,
/// `[1 - T(x0, s + r)] / [s + r T(x_r, s + r)]`.
///
/// At `s = 0` this is the mean first-passage time, bit for bit equal to [`mfpt`].
pub fn survival_laplace_reset(query: &FptQuery, s: f64, params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    check_rate("s", s)?;
    check_reset_query(query, params)?;
    if s + params.r == 0.0 {
        return reset_free_mean(query, params);
    }
    survival_core(query, s, params)
        .ok_or_else(|| Error::Divergent(format!("survival transform undefined at s = {s}")))
}

/// Unchecked survival transform; also valid for slightly negative `s` (used by
/// the finite-difference moment code).
fn survival_core(query: &FptQuery, s: f64, params: &SrgbmParams) -> Option<f64> {
    let lambda = s + params.r;
    let (q1, _) = characteristic_roots(lambda, params.mu, params.sigma2)?;
    let start = q1 * (query.x0 / query.y).ln();
    let reset = q1 * (params.x_r / query.y).ln();
    let numerator = -start.exp_m1();
    let denominator = s + params.r * reset.exp();
    if denominator <= 0.0 {
        return None;
    }
    Some(numerator / denominator)
}

fn check_reset_query(query: &FptQuery, params: &SrgbmParams) -> Result<()> {
    query.validate_ordered()?;
    if params.r > 0.0 && params.x_r > query.y {
        return Err(Error::Domain(format!(
            "reset income {} lies above the target {}",
            params.x_r, query.y
        )));
    }
    Ok(())
}

fn reset_free_mean(query: &FptQuery, params: &SrgbmParams) -> Result<f64> {
    let m = params.log_drift();
    if query.x0 == query.y {
        return Ok(0.0);
    }
    if m <= 0.0 {
        return Err(Error::Divergent(format!(
            "without resetting the mean first-passage time is infinite for mu - sigma2/2 = {m} <= 0"
        )));
    }
    Ok((query.y / query.x0).ln() / m)
}

/// Mean first-passage time (years) from `x0` to `y` with resetting to `x_r`.
///
/// For `r = 0` the removable singularity is replaced by its limit
/// `ln(y / x0) / (mu - sigma2 / 2)`, which exists only for positive log-drift.
pub fn mfpt(query: &FptQuery, params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    check_reset_query(query, params)?;
    if query.x0 >= query.y {
        return Ok(0.0);
    }
    if params.r == 0.0 {
        return reset_free_mean(query, params);
    }
    survival_core(query, 0.0, params)
        .ok_or_else(|| Error::Divergent("mean first-passage time is not finite".into()))
}

/// Relative step for the finite-difference moments, scaled by `max(1, r)`.
pub const MOMENT_FD_STEP: f64 = 1e-5;

/// `n`-th moment of the first-passage time (years^n).
///
/// Without resetting the moments are exact derivatives of the MGF at `s = 0`.
/// With resetting, `<T^n> = n (-1)^{n-1} q_r^{(n-1)}(0)` where `q_r` is the
/// survival transform; the derivative is taken with central differences of
/// step `h = 1e-5 max(1, r)` and one Richardson extrapolation step.
pub fn fpt_moment(n: u32, query: &FptQuery, params: &SrgbmParams) -> Result<f64> {
    params.validate()?;
    if n == 0 {
        return Err(Error::Domain("moment order must be at least 1".into()));
    }
    if params.r == 0.0 {
        query.validate_ordered()?;
        return reset_free_moment(n, query, params);
    }
    check_reset_query(query, params)?;
    if n == 1 {
        return mfpt(query, params);
    }
    if query.x0 >= query.y {
        return Ok(0.0);
    }
    let order = n - 1;
    // The stencil reaches s = -order h / 2; keep it well inside s > -r.
    let h = (MOMENT_FD_STEP * params.r.max(1.0)).min(params.r / (2.0 * (order as f64 + 1.0)));
    let f = |s: f64| survival_core(query, s, params);
    let coarse = central_difference(&f, order, h);
    let fine = central_difference(&f, order, 0.5 * h);
    let (coarse, fine) = match (coarse, fine) {
        (Some(c), Some(f)) => (c, f),
        _ => {
            return Err(Error::Divergent(
                "survival transform undefined near s = 0".into(),
            ))
        }
    };
    let derivative = (4.0 * fine - coarse) / 3.0;
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    Ok(n as f64 * sign * derivative)
}

/// Central difference approximation of the `order`-th derivative at 0.
fn central_difference(f: &impl Fn(f64) -> Option<f64>, order: u32, h: f64) -> Option<f64> {
    let k = order as i64;
    let mut acc = 0.0;
    let mut binom = 1.0;
    for j in 0..=k {
        let offset = (k as f64 / 2.0 - j as f64) * h;
        let term = binom * f(offset)?;
        acc += if j % 2 == 0 { term } else { -term };
        binom = binom * (k - j) as f64 / (j + 1) as f64;
    }
    Some(acc / h.powi(order as i32))
}

fn reset_free_moment(n: u32, query: &FptQuery, params: &SrgbmParams) -> Result<f64> {
    if query.x0 == query.y {
        return Ok(0.0);
    }
    let b = params.sigma2 - 2.0 * params.mu;
    if b >= 0.0 {
        return Err(Error::Divergent(format!(
            "reset-free moments are infinite for mu - sigma2/2 = {} <= 0",
            -0.5 * b
        )));
    }
    let n = n as usize;
    let log_ratio = (query.x0 / query.y).ln();
    // g(s) = log_ratio * q1(s); q1 = (b + D(s)) / (2 sigma2), D = sqrt(b^2 + 8 s sigma2).
    // D^{(k)}(0) = c_k (8 sigma2)^k |b|^{1 - 2k} with c_k = prod_{j<k} (1/2 - j).
    let mut g = vec![0.0; n + 1];
    let mut c = 1.0;
    let abs_b = -b;
    for (k, gk) in g.iter_mut().enumerate().skip(1) {
        c *= 0.5 - (k - 1) as f64;
        let dk = c * (8.0 * params.sigma2).powi(k as i32) * abs_b.powi(1 - 2 * k as i32);
        *gk = log_ratio * dk / (2.0 * params.sigma2);
    }
    // Derivatives of exp(g) via f^{(m)} = sum_k C(m-1, k) g^{(k+1)} f^{(m-1-k)}; f(0) = 1.
    let mut f = vec![0.0; n + 1];
    f[0] = 1.0;
    for m in 1..=n {
        let mut acc = 0.0;
        let mut binom = 1.0;
        for k in 0..m {
            acc += binom * g[k + 1] * f[m - 1 - k];
            binom = binom * (m - 1 - k) as f64 / (k + 1) as f64;
        }
        f[m] = acc;
    }
    let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
    Ok(sign * f[n])
}
