//! Year-by-year srGBM parameters from observed income shares, and the
//! time-resolved MFPT, fraction and optimal-rate reports built on them.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{mfpt, optimal_resetting_rate, StationaryLaw};
use crate::error::{Error, Result};
use crate::optimize::{grid_search, pattern_search, PatternSearchOptions};
use crate::params::{invalid, FptQuery, SrgbmParams};
use crate::rng::{derive_seed, purpose, stream};
use crate::simulator::{fraction_reaching, sample_stationary, steps_for, SimConfig, MAX_VARIANCE_STEP};

/// Observed top-income shares and resetting rates, one row per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSeries {
    pub years: Vec<i32>,
    /// Income share of the top `FitConfig::top_fraction` of earners.
    pub top_share: Vec<f64>,
    /// Optional share of the top `FitConfig::aux_fraction`.
    pub aux_share: Option<Vec<f64>>,
    /// Fraction of the working-age population losing or leaving their job (year^-1).
    pub reset_rate: Vec<f64>,
}

impl ObservedSeries {
    pub fn new(
        years: Vec<i32>,
        top_share: Vec<f64>,
        aux_share: Option<Vec<f64>>,
        reset_rate: Vec<f64>,
    ) -> Result<Self> {
        let s = Self {
            years,
            top_share,
            aux_share,
            reset_rate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.years.len();
        if n == 0 {
            return Err(Error::Domain("empty series".into()));
        }
        let aux_len = self.aux_share.as_ref().map_or(n, Vec::len);
        if self.top_share.len() != n || self.reset_rate.len() != n || aux_len != n {
            return Err(Error::Domain("series columns have different lengths".into()));
        }
        if self.years.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("years must be strictly increasing".into()));
        }
        let unit = |v: &f64| *v > 0.0 && *v < 1.0;
        if let Some(v) = self.top_share.iter().find(|v| !unit(v)) {
            return Err(invalid("top_share", *v, "must lie in (0, 1)"));
        }
        if let Some(v) = self.aux_share.iter().flatten().find(|v| !unit(v)) {
            return Err(invalid("aux_share", *v, "must lie in (0, 1)"));
        }
        if let Some(v) = self.reset_rate.iter().find(|v| !unit(v)) {
            return Err(invalid("reset_rate", *v, "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    fn aux(&self, i: usize) -> Option<f64> {
        self.aux_share.as_ref().map(|a| a[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_workers: usize,
    pub reps: usize,
    /// Euler step of the yearly propagation (years).
    pub dt: f64,
    pub mu_bounds: (f64, f64),
    pub sigma2_bounds: (f64, f64),
    pub seed: u64,
    /// Reset income; every reported quantity is invariant under rescaling it.
    pub x_r: f64,
    /// Population fraction whose share is `top_share` (0.01 for the top 1%).
    pub top_fraction: f64,
    /// Population fraction whose share is `aux_share`.
    pub aux_fraction: f64,
    /// Assumed `aux_share / top_share` when no auxiliary series is given.
    pub default_tail_ratio: f64,
    /// Largest acceptable residual of the initial stationary fit.
    pub init_tolerance: f64,
    /// Grid nodes per axis of the initial fit.
    pub init_grid: usize,
    /// Initial and final pattern-search step of the yearly fit, as fractions
    /// of the bounding box.
    pub step_initial: f64,
    pub step_min: f64,
    pub step_max_evaluations: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            n_workers: 100_000,
            reps: 20,
            dt: 1e-2,
            mu_bounds: (-0.05, 0.15),
            sigma2_bounds: (0.005, 0.1),
            seed: 0,
            x_r: 1.0,
            top_fraction: 0.01,
            aux_fraction: 0.1,
            default_tail_ratio: 2.5,
            init_tolerance: 1e-4,
            init_grid: 41,
            step_initial: 0.05,
            step_min: 1e-3,
            step_max_evaluations: 400,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("mu", self.mu_bounds), ("sigma2", self.sigma2_bounds)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!("bounds for {name} must be finite and ordered")));
            }
        }
        if self.sigma2_bounds.0 <= 0.0 {
            return Err(Error::Config("sigma2 bounds must be positive".into()));
        }
        if self.n_workers < 100 {
            return Err(Error::Config("at least 100 workers are required".into()));
        }
        if self.reps < 2 {
            return Err(Error::Config("at least 2 repetitions are needed for standard errors".into()));
        }
        if !(self.dt > 0.0 && self.dt <= 1.0) {
            return Err(invalid("dt", self.dt, "must lie in (0, 1] years"));
        }
        if self.sigma2_bounds.1 * self.dt > MAX_VARIANCE_STEP {
            return Err(Error::Config(format!(
                "sigma2 upper bound times dt exceeds {MAX_VARIANCE_STEP}"
            )));
        }
        let frac = |v: f64| v > 0.0 && v < 1.0;
        if !(frac(self.top_fraction) && frac(self.aux_fraction) && self.top_fraction < self.aux_fraction) {
            return Err(Error::Config("need 0 < top_fraction < aux_fraction < 1".into()));
        }
        if !(self.default_tail_ratio > 1.0) {
            return Err(invalid("default_tail_ratio", self.default_tail_ratio, "must exceed 1"));
        }
        if !(self.x_r > 0.0) {
            return Err(invalid("x_r", self.x_r, "must be positive"));
        }
        Ok(())
    }

    fn lower(&self) -> [f64; 2] {
        [self.mu_bounds.0, self.sigma2_bounds.0]
    }

    fn upper(&self) -> [f64; 2] {
        [self.mu_bounds.1, self.sigma2_bounds.1]
    }

    fn second_target(&self, top_share: f64, aux: Option<f64>) -> f64 {
        aux.unwrap_or(self.default_tail_ratio * top_share)
    }
}

/// Stationary shares of the top `top_fraction` and `aux_fraction`.
pub fn stationary_shares(params: &SrgbmParams, top_fraction: f64, aux_fraction: f64) -> Result<(f64, f64)> {
    let law = StationaryLaw::new(params)?;
    Ok((law.top_share(top_fraction)?, law.top_share(aux_fraction)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialFit {
    pub mu: f64,
    pub sigma2: f64,
    /// Euclidean norm of the two share mismatches.
    pub residual: f64,
}

/// `(mu, sigma2)` whose stationary law, at the first year's resetting rate,
/// reproduces the first year's top share and auxiliary share (or the default
/// tail ratio when there is no auxiliary series).
pub fn fit_initial(series: &ObservedSeries, config: &FitConfig) -> Result<InitialFit> {
    series.validate()?;
    config.validate()?;
    let r = series.reset_rate[0];
    let t1 = series.top_share[0];
    let t2 = config.second_target(t1, series.aux(0));
    let residual = |x: &[f64]| -> f64 {
        SrgbmParams::new(x[0], x[1], r, config.x_r)
            .and_then(|p| stationary_shares(&p, config.top_fraction, config.aux_fraction))
            .map(|(s1, s2)| ((s1 - t1).powi(2) + (s2 - t2).powi(2)).sqrt())
            .unwrap_or(f64::INFINITY)
    };
    let (lower, upper) = (config.lower(), config.upper());
    let n = config.init_grid.max(2);
    let (start, _) = grid_search(residual, &lower, &upper, &[n, n]);
    let refined = pattern_search(
        residual,
        &start,
        &lower,
        &upper,
        &PatternSearchOptions {
            initial_step: 1.0 / (n - 1) as f64,
            min_step: 1e-6,
            max_evaluations: 5_000,
        },
    );
    let shares = |x: [f64; 2]| -> Option<[f64; 2]> {
        let p = SrgbmParams::new(x[0], x[1], r, config.x_r).ok()?;
        let (s1, s2) = stationary_shares(&p, config.top_fraction, config.aux_fraction).ok()?;
        Some([s1 - t1, s2 - t2])
    };
    let mut best = ([refined.x[0], refined.x[1]], refined.fx);
    // The residual valley is curved; Newton steps on the two share equations
    // finish what the compass search cannot.
    for _ in 0..50 {
        if best.1 < 1e-13 {
            break;
        }
        let x = best.0;
        let Some(f) = shares(x) else { break };
        let mut jac = [[0.0; 2]; 2];
        let mut ok = true;
        for k in 0..2 {
            let h = 1e-7 * x[k].abs().max(1e-3);
            let mut xp = x;
            xp[k] += h;
            match shares(xp) {
                Some(fp) => {
                    jac[0][k] = (fp[0] - f[0]) / h;
                    jac[1][k] = (fp[1] - f[1]) / h;
                }
                None => ok = false,
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !ok || det == 0.0 || !det.is_finite() {
            break;
        }
        let dx = [
            (jac[1][1] * f[0] - jac[0][1] * f[1]) / det,
            (jac[0][0] * f[1] - jac[1][0] * f[0]) / det,
        ];
        let mut damping = 1.0;
        let mut improved = false;
        while damping > 1e-4 {
            let y = [0, 1].map(|k| (x[k] - damping * dx[k]).clamp(lower[k], upper[k]));
            let v = residual(&y);
            if v < best.1 {
                best = (y, v);
                improved = true;
                break;
            }
            damping *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if best.1.is_finite() && best.1 <= config.init_tolerance {
        return Ok(InitialFit {
            mu: best.0[0],
            sigma2: best.0[1],
            residual: best.1,
        });
    }
    // Coarse description of the residual surface for the error report.
    let mut finite = 0usize;
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let t = |k: usize| k as f64 / (n - 1) as f64;
            let v = residual(&[
                lower[0] + t(i) * (upper[0] - lower[0]),
                lower[1] + t(j) * (upper[1] - lower[1]),
            ]);
            if v.is_finite() {
                finite += 1;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
    }
    Err(Error::Initialization {
        residual: best.1,
        tolerance: config.init_tolerance,
        best_mu: best.0[0],
        best_sigma2: best.0[1],
        surface: format!(
            "{finite} of {} grid points give finite shares (alpha > 1); residual range [{lo:.3e}, {hi:.3e}]",
            n * n
        ),
    })
}

/// Share of the total held by the largest `fraction` of `incomes`.
pub fn top_share_of(incomes: &[f64], fraction: f64) -> f64 {
    top_shares_of(incomes, &[fraction])[0]
}

/// [`top_share_of`] for several fractions with one sort. Summation runs in
/// sorted order, so the result does not depend on how workers are labelled.
pub fn top_shares_of(incomes: &[f64], fractions: &[f64]) -> Vec<f64> {
    let n = incomes.len();
    let mut v = incomes.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + v[i];
    }
    fractions
        .iter()
        .map(|f| {
            let m = ((f * n as f64).round() as usize).clamp(1, n);
            tail[n - m] / tail[0]
        })
        .collect()
}

/// One year of Gaussian increments and reset times for every worker, drawn
/// once and reused for every candidate `(mu, sigma2)`.
struct YearNoise {
    /// Worker `i` was reset during the year iff `reset[i]`; its increments
    /// after the last reset are `eta[offsets[i]..offsets[i + 1]]`.
    reset: Vec<bool>,
    offsets: Vec<usize>,
    eta: Vec<f64>,
}

impl YearNoise {
    fn draw(n: usize, steps: usize, reset_prob: f64, eta_floor: f64, seed: u64) -> Result<Self> {
        let reset = Bernoulli::new(reset_prob)
            .map_err(|e| Error::Config(format!("reset probability: {e}")))?;
        let per_worker: Vec<(bool, Vec<f64>)> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = stream(seed, purpose::FIT_NOISE, i);
                let mut was_reset = false;
                let mut eta = Vec::with_capacity(steps);
                for _ in 0..steps {
                    if reset.sample(&mut rng) {
                        was_reset = true;
                        eta.clear();
                        continue;
                    }
                    // Redraws that would make the Euler factor nonpositive
                    // anywhere in the search box.
                    let z = loop {
                        let z: f64 = rng.sample(StandardNormal);
                        if z > eta_floor {
                            break z;
                        }
                    };
                    eta.push(z);
                }
                (was_reset, eta)
            })
            .collect();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        let mut eta = Vec::with_capacity(per_worker.iter().map(|w| w.1.len()).sum());
        let mut flags = Vec::with_capacity(n);
        for (r, e) in per_worker {
            flags.push(r);
            eta.extend_from_slice(&e);
            offsets.push(eta.len());
        }
        Ok(Self {
            reset: flags,
            offsets,
            eta,
        })
    }

    fn propagate(&self, state: &[f64], mu: f64, sigma2: f64, dt: f64, x_r: f64) -> Vec<f64> {
        let growth = 1.0 + mu * dt;
        let vol = (sigma2 * dt).sqrt();
        state
            .par_iter()
            .enumerate()
            .map(|(i, &x)| {
                let base = if self.reset[i] { x_r } else { x };
                self.eta[self.offsets[i]..self.offsets[i + 1]]
                    .iter()
                    .fold(base, |acc, &z| acc * (growth + vol * z))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearStep {
    pub mu: f64,
    pub sigma2: f64,
    /// Ensemble after one year under the fitted parameters.
    pub incomes: Vec<f64>,
    pub objective: f64,
    pub evaluations: usize,
    /// `false` when the evaluation budget ran out first; the estimate is the
    /// best point found.
    pub converged: bool,
}

/// Fits `(mu, sigma2)` for one year: the ensemble is propagated one year with
/// resetting rate `r_hat`, and the candidate whose top share best matches the
/// observed one wins. `start` seeds the search; `noise_seed` fixes the random
/// increments shared by all candidates.
pub fn fit_year_step(
    state: &[f64],
    observed_share_next: f64,
    r_hat: f64,
    start: (f64, f64),
    config: &FitConfig,
    noise_seed: u64,
) -> Result<YearStep> {
    config.validate()?;
    if state.is_empty() {
        return Err(Error::Domain("empty ensemble".into()));
    }
    if let Some(bad) = state.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
        return Err(invalid("income", *bad, "must be positive and finite"));
    }
    if !(r_hat > 0.0 && r_hat * config.dt < 1.0) {
        return Err(invalid("r_hat", r_hat, "must be positive with r dt < 1"));
    }
    let steps = steps_for(1.0, config.dt);
    let eta_floor = -(1.0 + config.mu_bounds.0.min(0.0) * config.dt)
        / (config.sigma2_bounds.1 * config.dt).sqrt();
    let noise = YearNoise::draw(state.len(), steps, r_hat * config.dt, eta_floor, noise_seed)?;
    let objective = |x: &[f64]| -> f64 {
        let next = noise.propagate(state, x[0], x[1], config.dt, config.x_r);
        (top_share_of(&next, config.top_fraction) - observed_share_next).powi(2)
    };
    let result = pattern_search(
        objective,
        &[start.0, start.1],
        &config.lower(),
        &config.upper(),
        &PatternSearchOptions {
            initial_step: config.step_initial,
            min_step: config.step_min,
            max_evaluations: config.step_max_evaluations,
        },
    );
    if !result.fx.is_finite() {
        return Err(Error::FitFailure {
            reason: "no candidate produced finite shares".into(),
            evaluations: result.evaluations,
            best_objective: result.fx,
            best_point: result.x,
        });
    }
    if !result.converged {
        log::warn!(
            "yearly fit stopped at the evaluation budget (objective {:.3e})",
            result.fx
        );
    }
    let incomes = noise.propagate(state, result.x[0], result.x[1], config.dt, config.x_r);
    Ok(YearStep {
        mu: result.x[0],
        sigma2: result.x[1],
        incomes,
        objective: result.fx,
        evaluations: result.evaluations,
        converged: result.converged,
    })
}

/// Fitted parameters per year with standard deviations across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSeries {
    pub years: Vec<i32>,
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub r: Vec<f64>,
    pub mu_se: Vec<f64>,
    pub sigma2_se: Vec<f64>,
    pub r_se: Vec<f64>,
    pub x_r: f64,
    pub reps_succeeded: usize,
    pub reps_failed: usize,
    /// Yearly fits that stopped at the evaluation budget.
    pub unconverged_steps: usize,
    /// `true` when the second share constraint came from the default tail ratio.
    pub used_default_tail_ratio: bool,
}

impl ParamSeries {
    /// A series with known parameters and standard errors, e.g. for reports on
    /// hypothetical scenarios.
    pub fn from_params(
        years: Vec<i32>,
        params: &[SrgbmParams],
        mu_se: Vec<f64>,
        sigma2_se: Vec<f64>,
        r_se: Vec<f64>,
    ) -> Result<Self> {
        let n = years.len();
        if params.len() != n || mu_se.len() != n || sigma2_se.len() != n || r_se.len() != n {
            return Err(Error::Domain("parameter series columns have different lengths".into()));
        }
        let x_r = params.first().map_or(1.0, |p| p.x_r);
        let s = Self {
            years,
            mu: params.iter().map(|p| p.mu).collect(),
            sigma2: params.iter().map(|p| p.sigma2).collect(),
            r: params.iter().map(|p| p.r).collect(),
            mu_se,
            sigma2_se,
            r_se,
            x_r,
            reps_succeeded: 0,
            reps_failed: 0,
            unconverged_steps: 0,
            used_default_tail_ratio: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.years.len();
        let cols = [&self.mu, &self.sigma2, &self.r, &self.mu_se, &self.sigma2_se, &self.r_se];
        if cols.iter().any(|c| c.len() != n) {
            return Err(Error::Domain("parameter series columns have different lengths".into()));
        }
        for i in 0..n {
            self.params(i)?;
            for (name, v) in [("mu_se", self.mu_se[i]), ("sigma2_se", self.sigma2_se[i]), ("r_se", self.r_se[i])] {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(invalid(name, v, "must be nonnegative and finite"));
                }
            }
            if self.r[i] <= 0.0 {
                return Err(invalid("r", self.r[i], "must be positive"));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.years.len()
    }

    pub fn is_empty(&self) -> bool {
        self.years.is_empty()
    }

    pub fn params(&self, i: usize) -> Result<SrgbmParams> {
        SrgbmParams::new(self.mu[i], self.sigma2[i], self.r[i], self.x_r)
    }
}

/// Runs the initial fit and then the yearly fits across the series, `reps`
/// times with independent random streams, and reports per-year means and
/// standard deviations of the estimates.
///
/// A failed repetition is skipped as long as at least half succeed.
pub fn fit_series(series: &ObservedSeries, config: &FitConfig) -> Result<ParamSeries> {
    series.validate()?;
    config.validate()?;
    let init = fit_initial(series, config)?;
    let n_years = series.len();
    let runs: Vec<Result<(Vec<(f64, f64)>, usize)>> = (0..config.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let rep_seed = derive_seed(config.seed, purpose::FIT_REPETITION, rep);
            let p0 = SrgbmParams::new(init.mu, init.sigma2, series.reset_rate[0], config.x_r)?;
            let mut state = sample_stationary(&p0, config.n_workers, rep_seed)?;
            let mut estimates = vec![(init.mu, init.sigma2)];
            let mut unconverged = 0;
            for t in 1..n_years {
                let step = fit_year_step(
                    &state,
                    series.top_share[t],
                    series.reset_rate[t],
                    estimates[t - 1],
                    config,
                    derive_seed(rep_seed, purpose::FIT_NOISE, t as u64),
                )?;
                unconverged += usize::from(!step.converged);
                estimates.push((step.mu, step.sigma2));
                state = step.incomes;
            }
            Ok((estimates, unconverged))
        })
        .collect();

    let mut ok = Vec::new();
    let mut last_error = None;
    for run in runs {
        match run {
            Ok(r) => ok.push(r),
            Err(e) => {
                log::warn!("fit repetition failed: {e}");
                last_error = Some(e);
            }
        }
    }
    let failed = config.reps - ok.len();
    if ok.len() < 2 || 2 * ok.len() < config.reps {
        return Err(last_error.unwrap_or_else(|| Error::FitFailure {
            reason: "too few successful repetitions".into(),
            evaluations: 0,
            best_objective: f64::NAN,
            best_point: vec![],
        }));
    }
    let mut mu = Vec::with_capacity(n_years);
    let mut sigma2 = Vec::with_capacity(n_years);
    let mut mu_se = Vec::with_capacity(n_years);
    let mut sigma2_se = Vec::with_capacity(n_years);
    for t in 0..n_years {
        let (m, s) = mean_sd(ok.iter().map(|r| r.0[t].0));
        mu.push(m);
        mu_se.push(s);
        let (m, s) = mean_sd(ok.iter().map(|r| r.0[t].1));
        sigma2.push(m);
        sigma2_se.push(s);
    }
    Ok(ParamSeries {
        years: series.years.clone(),
        mu,
        sigma2,
        r: series.reset_rate.clone(),
        mu_se,
        sigma2_se,
        r_se: vec![0.0; n_years],
        x_r: config.x_r,
        reps_succeeded: ok.len(),
        reps_failed: failed,
        unconverged_steps: ok.iter().map(|r| r.1).sum(),
        used_default_tail_ratio: series.aux_share.is_none(),
    })
}

/// Mean and sample standard deviation.
fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Stationary income at `percentile`.
pub fn percentile_to_income(params: &SrgbmParams, percentile: f64) -> Result<f64> {
    StationaryLaw::new(params)?.quantile(percentile)
}

/// Where a worker of the bottom `start` fraction begins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPosition {
    /// Middle of the group: percentile `start / 2`.
    #[default]
    Midpoint,
    /// Upper edge of the group: percentile `start`.
    Threshold,
}

impl StartPosition {
    fn percentile(self, start: f64) -> f64 {
        match self {
            Self::Midpoint => 0.5 * start,
            Self::Threshold => start,
        }
    }
}

impl std::str::FromStr for StartPosition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "midpoint" => Ok(Self::Midpoint),
            "threshold" => Ok(Self::Threshold),
            other => Err(Error::Config(format!("unknown start position `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// Standard deviation of the MFPT over Gaussian parameter draws.
    Draws { n: usize, seed: u64 },
    /// First-order propagation of the parameter standard errors.
    Delta,
}

impl Default for CiMethod {
    fn default() -> Self {
        Self::Draws { n: 200, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfptPoint {
    pub year: i32,
    /// Years.
    pub mfpt: f64,
    pub se: f64,
    /// `mfpt -/+ 2 se`.
    pub lower: f64,
    pub upper: f64,
    /// Parameter draws dropped for being invalid or giving an infinite MFPT.
    pub excluded_draws: usize,
    /// `true` when the delta method was used.
    pub delta_method: bool,
}

fn percentile_mfpt(params: &SrgbmParams, start: f64, target: f64) -> Result<f64> {
    let law = StationaryLaw::new(params)?;
    let q = FptQuery::new(law.quantile(start)?, law.quantile(target)?)?;
    mfpt(&q, params)
}

/// MFPT per year from the bottom `start_percentile` group to the
/// `target_percentile` income, with a two-standard-error band.
pub fn mfpt_series(
    series: &ParamSeries,
    start_percentile: f64,
    target_percentile: f64,
    start_position: StartPosition,
    ci: CiMethod,
) -> Result<Vec<MfptPoint>> {
    series.validate()?;
    if !(start_percentile > 0.0 && start_percentile <= target_percentile && target_percentile < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < start ({start_percentile}) <= target ({target_percentile}) < 1"
        )));
    }
    let p_start = start_position.percentile(start_percentile);
    (0..series.len())
        .map(|i| {
            let params = series.params(i)?;
            let year = series.years[i];
            let value = if start_percentile == target_percentile {
                0.0
            } else {
                percentile_mfpt(&params, p_start, target_percentile)?
            };
            let ses = [series.mu_se[i], series.sigma2_se[i], series.r_se[i]];
            let eval = |theta: [f64; 3]| {
                SrgbmParams::new(theta[0], theta[1], theta[2], series.x_r)
                    .and_then(|p| percentile_mfpt(&p, p_start, target_percentile))
                    .ok()
                    .filter(|t| t.is_finite())
            };
            let theta = [params.mu, params.sigma2, params.r];
            let mut excluded = 0;
            let mut se = None;
            if let CiMethod::Draws { n, seed } = ci {
                let mut rng = stream(seed, purpose::PARAM_DRAWS, i as u64);
                let mut values = Vec::with_capacity(n);
                for _ in 0..n {
                    let z: [f64; 3] = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
                    let draw = [0, 1, 2].map(|k| theta[k] + ses[k] * z[k]);
                    match eval(draw) {
                        Some(t) => values.push(t),
                        None => excluded += 1,
                    }
                }
                if values.len() >= 2 {
                    let (_, sd) = mean_sd(values.iter().copied());
                    se = Some(sd);
                }
            }
            let delta_method = se.is_none();
            let se = match se {
                Some(s) => s,
                None => delta_se(&eval, theta, ses, value)?,
            };
            Ok(MfptPoint {
                year,
                mfpt: value,
                se,
                lower: value - 2.0 * se,
                upper: value + 2.0 * se,
                excluded_draws: excluded,
                delta_method,
            })
        })
        .collect()
}

fn delta_se(eval: &impl Fn([f64; 3]) -> Option<f64>, theta: [f64; 3], ses: [f64; 3], value: f64) -> Result<f64> {
    let mut var = 0.0;
    for k in 0..3 {
        if ses[k] == 0.0 {
            continue;
        }
        let h = 1e-6 * theta[k].abs().max(1e-3);
        let mut up = theta;
        let mut down = theta;
        up[k] += h;
        down[k] -= h;
        let g = match (eval(up), eval(down)) {
            (Some(a), Some(b)) => (a - b) / (2.0 * h),
            (Some(a), None) => (a - value) / h,
            (None, Some(b)) => (value - b) / h,
            (None, None) => {
                return Err(Error::Divergent(
                    "MFPT undefined around the point estimate".into(),
                ))
            }
        };
        var += (g * ses[k]).powi(2);
    }
    Ok(var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionPoint {
    pub year: i32,
    pub fraction: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Per year, the Monte Carlo fraction of workers starting in the middle of
/// the bottom `start_percentile` group who reach the `target_percentile`
/// income within `window_years`. Every year reuses `sim.seed`, so series for
/// different windows or targets are paired.
pub fn fraction_series(
    series: &ParamSeries,
    start_percentile: f64,
    target_percentile: f64,
    window_years: f64,
    sim: &SimConfig,
) -> Result<Vec<FractionPoint>> {
    series.validate()?;
    if !(start_percentile > 0.0 && start_percentile <= target_percentile && target_percentile < 1.0) {
        return Err(Error::Domain(format!(
            "need 0 < start ({start_percentile}) <= target ({target_percentile}) < 1"
        )));
    }
    (0..series.len())
        .map(|i| {
            let params = series.params(i)?;
            let law = StationaryLaw::new(&params)?;
            let q = FptQuery::new(law.quantile(0.5 * start_percentile)?, law.quantile(target_percentile)?)?;
            let est = fraction_reaching(&q, &params, window_years, sim)?;
            Ok(FractionPoint {
                year: series.years[i],
                fraction: est.fraction,
                se: est.standard_error,
                lower: (est.fraction - 2.0 * est.standard_error).max(0.0),
                upper: (est.fraction + 2.0 * est.standard_error).min(1.0),
            })
        })
        .collect()
}

/// All ordered pairs `start < target` over ten percentile levels: 45 queries.
pub fn default_rate_queries() -> Vec<(f64, f64)> {
    let levels = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99];
    let mut out = Vec::with_capacity(45);
    for (i, &a) in levels.iter().enumerate() {
        for &b in &levels[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRatePoint {
    pub year: i32,
    /// Optimal rate per evaluated query, in query order.
    pub rates: Vec<f64>,
    pub mean_rate: f64,
    pub r_hat: f64,
    /// `sign(r_hat - mean_rate)`.
    pub excess_sign: i8,
    /// Queries skipped because their target income lies below the reset income.
    pub skipped: usize,
}

/// Per year and query, the resetting rate minimizing the MFPT between the
/// query's percentile incomes under that year's `(mu, sigma2, x_r)`.
pub fn optimal_rate_series(
    series: &ParamSeries,
    queries: &[(f64, f64)],
    r_max: f64,
) -> Result<Vec<OptimalRatePoint>> {
    series.validate()?;
    if queries.is_empty() {
        return Err(Error::Domain("query set is empty".into()));
    }
    for &(a, b) in queries {
        if !(a > 0.0 && a < b && b < 1.0) {
            return Err(Error::Domain(format!("query ({a}, {b}) needs 0 < start < target < 1")));
        }
    }
    (0..series.len())
        .map(|i| {
            let params = series.params(i)?;
            let law = StationaryLaw::new(&params)?;
            let mut rates = Vec::with_capacity(queries.len());
            let mut skipped = 0;
            for &(a, b) in queries {
                let (x0, y) = (law.quantile(a)?, law.quantile(b)?);
                if y < params.x_r {
                    skipped += 1;
                    continue;
                }
                let q = FptQuery::new(x0, y)?;
                rates.push(optimal_resetting_rate(&q, params.mu, params.sigma2, params.x_r, r_max)?.rate);
            }
            if rates.is_empty() {
                return Err(Error::Domain(format!(
                    "every query target lies below the reset income in {}",
                    series.years[i]
                )));
            }
            let mean_rate = rates.iter().sum::<f64>() / rates.len() as f64;
            let diff = params.r - mean_rate;
            Ok(OptimalRatePoint {
                year: series.years[i],
                rates,
                mean_rate,
                r_hat: params.r,
                excess_sign: if diff > 0.0 { 1 } else if diff < 0.0 { -1 } else { 0 },
                skipped,
            })
        })
        .collect()
}

/// Observed series generated from the stationary shares of known yearly
/// parameters.
pub fn synthetic_series(
    first_year: i32,
    truth: &[SrgbmParams],
    top_fraction: f64,
    aux_fraction: f64,
) -> Result<ObservedSeries> {
    let mut top = Vec::with_capacity(truth.len());
    let mut aux = Vec::with_capacity(truth.len());
    for p in truth {
        let (s1, s2) = stationary_shares(p, top_fraction, aux_fraction)?;
        top.push(s1);
        aux.push(s2);
    }
    ObservedSeries::new(
        (0..truth.len() as i32).map(|i| first_year + i).collect(),
        top,
        Some(aux),
        truth.iter().map(|p| p.r).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn truth() -> SrgbmParams {
        SrgbmParams::new(0.02, 0.02, 0.04, 1.0).unwrap()
    }

    fn small_config() -> FitConfig {
        FitConfig {
            n_workers: 5_000,
            reps: 2,
            ..Default::default()
        }
    }

    #[test]
    fn series_validation() {
        assert!(ObservedSeries::new(vec![2000, 2001], vec![0.2, 1.2], None, vec![0.05, 0.05]).is_err());
        assert!(ObservedSeries::new(vec![2001, 2000], vec![0.2, 0.2], None, vec![0.05, 0.05]).is_err());
        assert!(ObservedSeries::new(vec![2000], vec![0.2], None, vec![0.05, 0.05]).is_err());
        assert!(ObservedSeries::new(vec![2000, 2001], vec![0.2, 0.2], None, vec![0.05, 0.05]).is_ok());
    }

    #[test]
    fn initial_fit_recovers_truth() {
        let series = synthetic_series(2000, &[truth()], 0.01, 0.1).unwrap();
        let fit = fit_initial(&series, &small_config()).unwrap();
        assert!((fit.mu - 0.02).abs() < 1e-5, "{fit:?}");
        assert!((fit.sigma2 - 0.02).abs() < 1e-5, "{fit:?}");
    }

    #[test]
    fn impossible_share_fails_initialization() {
        let series = ObservedSeries::new(vec![2000], vec![0.999], None, vec![0.04]).unwrap();
        assert!(matches!(fit_initial(&series, &small_config()), Err(Error::Initialization { .. })));
    }

    #[test]
    fn flat_distribution_pushes_mu_to_lower_bound() {
        let series = ObservedSeries::new(vec![2000], vec![0.01], None, vec![0.04]).unwrap();
        let config = FitConfig {
            mu_bounds: (0.0, 0.15),
            ..small_config()
        };
        match fit_initial(&series, &config) {
            Err(Error::Initialization { best_mu, best_sigma2, .. }) => {
                assert!((best_mu - config.mu_bounds.0).abs() < 1e-6, "{best_mu}");
                assert!((best_sigma2 - config.sigma2_bounds.0).abs() < 1e-6, "{best_sigma2}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn top_share_is_permutation_invariant() {
        let xs: Vec<f64> = (1..=1000).map(|i| (i as f64).powf(1.3)).collect();
        let mut ys = xs.clone();
        ys.reverse();
        ys.swap(3, 700);
        assert_eq!(top_share_of(&xs, 0.01), top_share_of(&ys, 0.01));
        let total: f64 = xs.iter().sum();
        let top: f64 = xs[990..].iter().sum();
        assert!((top_share_of(&xs, 0.01) - top / total).abs() < 1e-15);
    }

    #[test]
    fn default_query_set_has_45_pairs() {
        let q = default_rate_queries();
        assert_eq!(q.len(), 45);
        assert!(q.iter().all(|(a, b)| a < b));
    }

    #[test]
    fn percentile_income_inverts_cdf() {
        let p = SrgbmParams::new(0.10, 0.03, 0.041, 1.0).unwrap();
        let law = StationaryLaw::new(&p).unwrap();
        let mut last = 0.0;
        for i in 1..100 {
            let pct = i as f64 / 100.0;
            let x = percentile_to_income(&p, pct).unwrap();
            assert!(x > last);
            assert!((law.cdf(x) - pct).abs() < 1e-8);
            last = x;
        }
        assert!(percentile_to_income(&p.with_rate(0.0), 0.5).is_err());
    }

    #[test]
    fn mfpt_series_edge_cases() {
        let ps = ParamSeries::from_params(vec![2000, 2001], &[truth(), truth()], vec![0.002; 2], vec![0.001; 2], vec![0.0; 2]).unwrap();
        let zero = mfpt_series(&ps, 0.9, 0.9, StartPosition::Threshold, CiMethod::default()).unwrap();
        assert!(zero.iter().all(|p| p.mfpt == 0.0));
        let p90 = mfpt_series(&ps, 0.1, 0.9, StartPosition::Midpoint, CiMethod::default()).unwrap();
        let p99 = mfpt_series(&ps, 0.1, 0.99, StartPosition::Midpoint, CiMethod::default()).unwrap();
        for (a, b) in p90.iter().zip(&p99) {
            assert!(b.mfpt > a.mfpt);
            assert!(a.lower < a.mfpt && a.mfpt < a.upper);
        }
        let delta = mfpt_series(&ps, 0.1, 0.9, StartPosition::Midpoint, CiMethod::Delta).unwrap();
        assert!(delta[0].delta_method && delta[0].se > 0.0);
        assert!(((delta[0].se - p90[0].se) / p90[0].se).abs() < 0.3);
    }

    #[test]
    fn year_step_objective_vanishes_at_truth_on_shared_noise() {
        let config = small_config();
        let state = sample_stationary(&truth(), config.n_workers, 3).unwrap();
        let noise = YearNoise::draw(state.len(), 100, 0.04 * 0.01, -30.0, 9).unwrap();
        let next = noise.propagate(&state, 0.02, 0.02, 0.01, 1.0);
        let s1 = top_share_of(&next, 0.01);
        let step = fit_year_step(&state, s1, 0.04, (0.02, 0.02), &config, 9).unwrap();
        assert_eq!(step.objective, 0.0);
        assert_eq!((step.mu, step.sigma2), (0.02, 0.02));
    }
}
