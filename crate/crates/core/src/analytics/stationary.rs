use serde::{Deserialize, Serialize};

use super::alpha_unchecked;
use crate::error::{Error, Result};
use crate::params::{invalid, SrgbmParams};

/// Long-time income distribution of srGBM: a two-sided power law joined at `x_r`.
///
/// Above the reset income the density decays as `(x / x_r)^{-alpha - 1}`;
/// below it grows as `(x / x_r)^{beta - 1}` with
/// `beta = alpha + 2 (mu - sigma2 / 2) / sigma2`. Because `alpha beta = 2 r / sigma2`
/// the normalization `alpha beta / (x_r (alpha + beta))` is available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    pub alpha: f64,
    pub beta: f64,
    pub x_r: f64,
}

impl StationaryLaw {
    pub fn new(params: &SrgbmParams) -> Result<Self> {
        params.validate()?;
        if params.r == 0.0 {
            return Err(Error::NoStationaryState);
        }
        let alpha = alpha_unchecked(params.mu, params.sigma2, params.r);
        // Written as the product identity so that beta keeps full precision
        // when alpha and 2m / sigma2 nearly cancel.
        let beta = 2.0 * params.r / (params.sigma2 * alpha);
        if !(alpha > 0.0 && beta > 0.0 && beta.is_finite()) {
            return Err(Error::NonNormalizable(format!(
                "exponents alpha = {alpha}, beta = {beta}"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            x_r: params.x_r,
        })
    }

    /// Density normalization constant (income^-1).
    pub fn norm(&self) -> f64 {
        self.alpha * self.beta / (self.x_r * (self.alpha + self.beta))
    }

    /// Probability mass below the reset income.
    pub fn mass_below_reset(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let lu = (x / self.x_r).ln();
        let exponent = if x > self.x_r {
            -(self.alpha + 1.0) * lu
        } else {
            (self.beta - 1.0) * lu
        };
        self.norm() * exponent.exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let lu = (x / self.x_r).ln();
        let total = self.alpha + self.beta;
        if x <= self.x_r {
            self.alpha / total * (self.beta * lu).exp()
        } else {
            1.0 - self.beta / total * (-self.alpha * lu).exp()
        }
    }

    /// Upper tail `P(X > x)`, accurate far into the tail.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= self.x_r {
            return 1.0 - self.cdf(x);
        }
        self.beta / (self.alpha + self.beta) * (-self.alpha * (x / self.x_r).ln()).exp()
    }

    /// Inverse CDF for `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("percentile", p, "must lie strictly between 0 and 1"));
        }
        let total = self.alpha + self.beta;
        let below = self.mass_below_reset();
        let u = if p <= below {
            ((p * total / self.alpha).ln() / self.beta).exp()
        } else {
            (-((1.0 - p) * total / self.beta).ln() / self.alpha).exp()
        };
        Ok(self.x_r * u)
    }

    /// Mean income; finite only for `alpha > 1`.
    pub fn mean(&self) -> Result<f64> {
        if self.alpha <= 1.0 {
            return Err(Error::Divergent(format!(
                "mean income is infinite for alpha = {} <= 1",
                self.alpha
            )));
        }
        Ok(self.norm()
            * self.x_r
            * self.x_r
            * (1.0 / (self.beta + 1.0) + 1.0 / (self.alpha - 1.0)))
    }

    /// Share of total income held by the richest fraction `p` of the population.
    pub fn top_share(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("fraction", p, "must lie strictly between 0 and 1"));
        }
        if self.alpha <= 1.0 {
            return Err(Error::Divergent(format!(
                "income shares are undefined for alpha = {} <= 1 (infinite mean)",
                self.alpha
            )));
        }
        let (a, b) = (self.alpha, self.beta);
        // Mean in units of norm * x_r^2.
        let mean = 1.0 / (b + 1.0) + 1.0 / (a - 1.0);
        let upper_mass = b / (a + b);
        if p <= upper_mass {
            let u = ((upper_mass / p).ln() / a).exp();
            Ok(((1.0 - a) * u.ln()).exp() / (a - 1.0) / mean)
        } else {
            let v = (((1.0 - p) / (1.0 - upper_mass)).ln() / b).exp();
            Ok(1.0 - ((b + 1.0) * v.ln()).exp() / (b + 1.0) / mean)
        }
    }
}

/// Stationary income density at `x`.
pub fn stationary_density(x: f64, params: &SrgbmParams) -> Result<f64> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(invalid("x", x, "must be positive and finite"));
    }
    Ok(StationaryLaw::new(params)?.density(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> SrgbmParams {
        SrgbmParams::new(0.10, 0.03, 0.041, 1.0).unwrap()
    }

    /// Composite Simpson in log space, x = x_r e^u.
    fn integrate_log(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let u = lo + i as f64 * h;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * f(u.exp()) * u.exp();
        }
        acc * h / 3.0
    }

    #[test]
    fn errors_without_resetting() {
        let p = fig3().with_rate(0.0);
        assert_eq!(stationary_density(1.0, &p), Err(Error::NoStationaryState));
        assert!(stationary_density(0.0, &fig3()).is_err());
    }

    #[test]
    fn continuous_at_reset_income() {
        let law = StationaryLaw::new(&fig3()).unwrap();
        let eps = 1e-12;
        let left = law.density(1.0 - eps);
        let right = law.density(1.0 + eps);
        assert!(((left - right) / left).abs() < 1e-9);
    }

    #[test]
    fn normalization_by_quadrature() {
        for (mu, s2, r, xr) in [
            (0.10, 0.03, 0.041, 1.0),
            (0.02, 0.02, 0.04, 3.0),
            (-0.05, 0.1, 0.2, 0.5),
        ] {
            let p = SrgbmParams::new(mu, s2, r, xr).unwrap();
            let law = StationaryLaw::new(&p).unwrap();
            // Split at x_r; cover both power-law tails analytically beyond the range.
            let lx = xr.ln();
            let lo_cut = lx - 60.0 / law.beta;
            let hi_cut = lx + 60.0 / law.alpha;
            let lower = integrate_log(|x| law.density(x), lo_cut, lx, 20_000);
            let upper = integrate_log(|x| law.density(x), lx, hi_cut, 20_000);
            let tails = law.cdf(lo_cut.exp()) + law.survival(hi_cut.exp());
            assert!((lower + upper + tails - 1.0).abs() < 1e-6, "{}", lower + upper);
        }
    }

    #[test]
    fn fig3_exponents_and_mass() {
        let law = StationaryLaw::new(&fig3()).unwrap();
        assert!((law.alpha - 0.4471).abs() < 1e-4);
        assert!((-(law.alpha + 1.0) + 1.447).abs() < 1e-3);
        assert!((law.beta - (law.alpha + 2.0 * 0.085 / 0.03)).abs() < 1e-12);
        assert!(law.mean().is_err());
    }

    #[test]
    fn quantile_inverts_cdf() {
        let law = StationaryLaw::new(&fig3()).unwrap();
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = law.quantile(p).unwrap();
            assert!((law.cdf(x) - p).abs() < 1e-12);
        }
        let ratio = law.quantile(0.99).unwrap() / law.quantile(0.5).unwrap();
        // Both points sit in the upper branch: ratio = (0.5 / 0.01)^{1 / alpha}.
        assert!((ratio.ln() - 50f64.ln() / law.alpha).abs() < 1e-10);
        assert!(law.quantile(1.0).is_err());
    }

    #[test]
    fn top_share_matches_quadrature() {
        let p = SrgbmParams::new(0.02, 0.02, 0.04, 1.0).unwrap();
        let law = StationaryLaw::new(&p).unwrap();
        assert!(law.alpha > 1.0);
        let mean = law.mean().unwrap();
        let hi = (1.0f64).ln() + 80.0 / (law.alpha - 1.0);
        for frac in [0.01, 0.1, 0.5, 0.95] {
            let t = law.quantile(1.0 - frac).unwrap();
            let mass = if t < 1.0 {
                integrate_log(|x| x * law.density(x), t.ln(), 0.0, 20_000)
                    + integrate_log(|x| x * law.density(x), 0.0, hi, 200_000)
            } else {
                integrate_log(|x| x * law.density(x), t.ln(), hi, 200_000)
            };
            let share = law.top_share(frac).unwrap();
            assert!(((mass / mean) - share).abs() < 1e-6, "{frac}: {share} vs {}", mass / mean);
        }
        let ratio = law.top_share(0.1).unwrap() / law.top_share(0.01).unwrap();
        assert!((ratio - 10f64.powf((law.alpha - 1.0) / law.alpha)).abs() < 1e-12);
    }
}
