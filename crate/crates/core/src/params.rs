//! Model parameters and first-passage queries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of geometric Brownian motion with Poissonian resetting.
///
/// All rates are per year. `x_r` is the income a worker is reset to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrgbmParams {
    pub mu: f64,
    pub sigma2: f64,
    pub r: f64,
    pub x_r: f64,
}

impl SrgbmParams {
    pub fn new(mu: f64, sigma2: f64, r: f64, x_r: f64) -> Result<Self> {
        let p = Self { mu, sigma2, r, x_r };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("mu", self.mu, "must be finite"));
        }
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(invalid("sigma2", self.sigma2, "must be positive and finite"));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid("r", self.r, "must be nonnegative and finite"));
        }
        if !(self.x_r > 0.0 && self.x_r.is_finite()) {
            return Err(invalid("x_r", self.x_r, "must be positive and finite"));
        }
        Ok(())
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Drift of log-income, `mu - sigma2 / 2`.
    pub fn log_drift(&self) -> f64 {
        self.mu - 0.5 * self.sigma2
    }

    pub fn with_rate(self, r: f64) -> Self {
        Self { r, ..self }
    }

    pub fn with_reset_income(self, x_r: f64) -> Self {
        Self { x_r, ..self }
    }
}

/// Start and target income of one first-passage problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FptQuery {
    pub x0: f64,
    pub y: f64,
}

impl FptQuery {
    /// Both incomes must be positive; ordering is checked by the operations
    /// that need it.
    pub fn new(x0: f64, y: f64) -> Result<Self> {
        let q = Self { x0, y };
        q.validate_positive()?;
        Ok(q)
    }

    pub(crate) fn validate_positive(&self) -> Result<()> {
        if !(self.x0 > 0.0 && self.x0.is_finite()) {
            return Err(invalid("x0", self.x0, "must be positive and finite"));
        }
        if !(self.y > 0.0 && self.y.is_finite()) {
            return Err(invalid("y", self.y, "must be positive and finite"));
        }
        Ok(())
    }

    pub(crate) fn validate_ordered(&self) -> Result<()> {
        self.validate_positive()?;
        if self.x0 > self.y {
            return Err(Error::Domain(format!(
                "start income {} lies above the target {}",
                self.x0, self.y
            )));
        }
        Ok(())
    }

    pub fn is_absorbed(&self) -> bool {
        self.x0 >= self.y
    }
}

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter {
        name,
        value,
        reason,
    }
}
