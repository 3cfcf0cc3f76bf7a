use serde::{Deserialize, Serialize};

use super::{tmfpt_continuous, transition_matrix, TransitionMatrix};
use crate::analytics::{mfpt, StationaryLaw};
use crate::error::{Error, Result};
use crate::optimize::{grid_search, pattern_search, PatternSearchOptions};
use crate::params::{FptQuery, SrgbmParams};
use crate::simulator::{generate_panel, SimConfig};

/// Search box for `(mu, sigma2, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub mu: (f64, f64),
    pub sigma2: (f64, f64),
    pub r: (f64, f64),
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            mu: (0.0, 0.2),
            sigma2: (0.005, 0.08),
            r: (0.005, 0.1),
        }
    }
}

impl ParamBounds {
    fn lower(&self) -> [f64; 3] {
        [self.mu.0, self.sigma2.0, self.r.0]
    }

    fn upper(&self) -> [f64; 3] {
        [self.mu.1, self.sigma2.1, self.r.1]
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("mu", self.mu), ("sigma2", self.sigma2), ("r", self.r)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bounds for {name} must be finite and ordered")));
            }
        }
        if self.sigma2.0 <= 0.0 || self.r.0 <= 0.0 {
            return Err(Error::Config("sigma2 and r bounds must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFitConfig {
    /// `n_trajectories` is the number of simulated workers; `seed` is shared
    /// by every candidate (common random numbers).
    pub sim: SimConfig,
    /// Years simulated before the first snapshot.
    pub burn_in: f64,
    /// Reset income of the model economy; quantile matrices do not depend on it.
    pub x_r: f64,
    /// Nodes per axis of the coarse grid preceding the pattern search.
    pub grid_points: [usize; 3],
    pub initial_step: f64,
    pub min_step: f64,
    pub max_evaluations: usize,
}

impl Default for MatrixFitConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig {
                dt: 0.02,
                n_trajectories: 100_000,
                ..SimConfig::default()
            },
            burn_in: 0.0,
            x_r: 1.0,
            grid_points: [5, 5, 5],
            initial_step: 0.125,
            min_step: 1.0 / 256.0,
            max_evaluations: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFit {
    pub params: SrgbmParams,
    /// Entrywise `R^2 = 1 - SS_res / SS_tot` of the model matrix about the
    /// mean of the empirical entries.
    pub explained_variance: f64,
    pub frobenius: f64,
    pub evaluations: usize,
    /// Coarse grid spacing per parameter `(mu, sigma2, r)`.
    pub grid_spacing: [f64; 3],
    /// Final pattern-search step per parameter.
    pub final_step: [f64; 3],
    pub model: TransitionMatrix,
}

/// Transition matrix of a simulated srGBM economy.
pub fn model_matrix(
    params: &SrgbmParams,
    k: usize,
    delta: f64,
    burn_in: f64,
    sim: &SimConfig,
) -> Result<TransitionMatrix> {
    let panel = generate_panel(params, sim.n_trajectories, burn_in, delta, sim)?;
    transition_matrix(&panel, k)
}

pub fn frobenius_distance(a: &TransitionMatrix, b: &TransitionMatrix) -> f64 {
    (a.entries() - b.entries()).norm()
}

/// Share of the entrywise variance of `empirical` reproduced by `model`.
pub fn explained_variance(empirical: &TransitionMatrix, model: &TransitionMatrix) -> f64 {
    let e = empirical.entries();
    let mean = e.mean();
    let ss_tot: f64 = e.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ss_res = (e - model.entries()).norm_squared();
    1.0 - ss_res / ss_tot
}

/// Fits `(mu, sigma2, r)` so that the simulated quantile matrix is closest
/// to `a_emp` in Frobenius norm.
///
/// A coarse grid locates the basin; a compass search refines it. All
/// candidates share one random seed, so the objective is a deterministic
/// function of the parameters.
pub fn fit_srgbm_to_matrix(
    a_emp: &TransitionMatrix,
    bounds: &ParamBounds,
    config: &MatrixFitConfig,
) -> Result<MatrixFit> {
    bounds.validate()?;
    if a_emp.delta <= 0.0 {
        return Err(Error::Config("the empirical matrix needs a positive horizon".into()));
    }
    let k = a_emp.k();
    let objective = |x: &[f64]| -> f64 {
        let params = match SrgbmParams::new(x[0], x[1], x[2], config.x_r) {
            Ok(p) => p,
            Err(_) => return f64::INFINITY,
        };
        match model_matrix(&params, k, a_emp.delta, config.burn_in, &config.sim) {
            Ok(m) => frobenius_distance(a_emp, &m),
            Err(_) => f64::INFINITY,
        }
    };
    let (lower, upper) = (bounds.lower(), bounds.upper());
    let (start, grid_value) = grid_search(objective, &lower, &upper, &config.grid_points);
    let grid_evaluations: usize = config.grid_points.iter().product();
    if !grid_value.is_finite() {
        return Err(Error::FitFailure {
            reason: "no grid candidate produced a valid model matrix".into(),
            evaluations: grid_evaluations,
            best_objective: grid_value,
            best_point: start,
        });
    }
    let options = PatternSearchOptions {
        initial_step: config.initial_step,
        min_step: config.min_step,
        max_evaluations: config.max_evaluations,
    };
    let refined = pattern_search(objective, &start, &lower, &upper, &options);
    let evaluations = grid_evaluations + refined.evaluations;
    if !refined.converged {
        return Err(Error::FitFailure {
            reason: "evaluation budget exhausted before the pattern step converged".into(),
            evaluations,
            best_objective: refined.fx,
            best_point: refined.x,
        });
    }
    let params = SrgbmParams::new(refined.x[0], refined.x[1], refined.x[2], config.x_r)?;
    let model = model_matrix(&params, k, a_emp.delta, config.burn_in, &config.sim)?;
    let width = |i: usize| upper[i] - lower[i];
    let spacing = |i: usize| width(i) / (config.grid_points[i].max(2) - 1) as f64;
    Ok(MatrixFit {
        explained_variance: explained_variance(a_emp, &model),
        frobenius: refined.fx,
        evaluations,
        grid_spacing: [spacing(0), spacing(1), spacing(2)],
        final_step: [0, 1, 2].map(|i| refined.step * width(i)),
        params,
        model,
    })
}

/// One `(from, to)` entry of the srGBM versus matrix MFPT comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    /// Quantile labels, 1 = poorest.
    pub from: usize,
    pub to: usize,
    /// Closed-form MFPT between representative incomes; only defined for
    /// upward or null moves whose target is not below the reset income.
    pub srgbm_years: Option<f64>,
    pub tmfpt_years: f64,
    pub tmfpt_periods: f64,
    /// `tmfpt_years - srgbm_years`.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub rows: Vec<GapRow>,
    pub matrix: TransitionMatrix,
    /// Income at the middle percentile of each quantile.
    pub representative_incomes: Vec<f64>,
}

impl GapReport {
    pub fn get(&self, from: usize, to: usize) -> Option<&GapRow> {
        self.rows.iter().find(|r| r.from == from && r.to == to)
    }
}

/// Compares closed-form MFPTs between quantile midpoints with the TMFPT of
/// the model's own `k`-quantile matrix over `delta` years.
///
/// Quantile `k` is represented by the stationary income at percentile
/// `(k - 1/2) / K`.
pub fn mfpt_gap_report(params: &SrgbmParams, k: usize, delta: f64, sim: &SimConfig) -> Result<GapReport> {
    let law = StationaryLaw::new(params)?;
    let representative_incomes = (1..=k)
        .map(|i| law.quantile((i as f64 - 0.5) / k as f64))
        .collect::<Result<Vec<f64>>>()?;
    let matrix = model_matrix(params, k, delta, 0.0, sim)?;
    let continuous = tmfpt_continuous(&matrix)?;
    let mut rows = Vec::with_capacity(k * k);
    for from in 0..k {
        for to in 0..k {
            let srgbm_years = if from == to {
                Some(0.0)
            } else if from < to && representative_incomes[to] >= params.x_r {
                let q = FptQuery::new(representative_incomes[from], representative_incomes[to])?;
                Some(mfpt(&q, params)?)
            } else {
                None
            };
            let tmfpt_years = continuous.years.get(from, to);
            rows.push(GapRow {
                from: from + 1,
                to: to + 1,
                srgbm_years,
                tmfpt_years,
                tmfpt_periods: continuous.periods.get(from, to),
                difference: srgbm_years.map(|s| tmfpt_years - s),
            });
        }
    }
    Ok(GapReport {
        rows,
        matrix,
        representative_incomes,
    })
}
