//! Euler-Maruyama Monte Carlo for srGBM.
//!
//! Each step a worker is first reset to `x_r` with probability `r dt`;
//! otherwise `x <- x (1 + mu dt + sigma sqrt(dt) eta)`. A step that would make
//! the income nonpositive is redrawn. Every trajectory owns an RNG stream
//! derived from `(seed, index)` and results are gathered in index order, so
//! outputs are bit-identical for any number of threads.

use rand::distr::{Bernoulli, Distribution, Open01};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::StationaryLaw;
use crate::error::{Error, Result};
use crate::params::{invalid, FptQuery, SrgbmParams};
use crate::rng::{purpose, stream};

/// Upper bound on `sigma2 * dt`; keeps negative Euler factors out of reach
/// (they need `eta < -1 / sqrt(sigma2 dt)`, a ten-sigma event at the bound).
pub const MAX_VARIANCE_STEP: f64 = 1e-2;

/// Censored fraction above which [`estimate_mfpt_mc`] refuses a point estimate.
pub const DEFAULT_CENSOR_THRESHOLD: f64 = 0.01;

/// Two-sample KS coefficient used by the panel stationarity check (0.1% level).
pub const KS_COEFFICIENT: f64 = 1.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Time step (years).
    pub dt: f64,
    pub n_trajectories: usize,
    /// Censoring time (years).
    pub horizon: f64,
    pub seed: u64,
    /// Extra panel snapshots every this many steps; 0 records only the two
    /// analysis snapshots.
    pub record_stride: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            n_trajectories: 10_000,
            horizon: 1_000.0,
            seed: 0,
            record_stride: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &SrgbmParams) -> Result<()> {
        params.validate()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", self.dt, "must be positive and finite"));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid("horizon", self.horizon, "must be positive and finite"));
        }
        if self.n_trajectories == 0 {
            return Err(Error::Config("at least one trajectory is required".into()));
        }
        if self.dt > self.horizon {
            return Err(Error::Config(format!(
                "time step {} exceeds the horizon {}",
                self.dt, self.horizon
            )));
        }
        check_step(params, self.dt)
    }

    /// Whole steps covering `years`.
    pub fn steps_for(&self, years: f64) -> usize {
        steps_for(years, self.dt)
    }
}

pub(crate) fn steps_for(years: f64, dt: f64) -> usize {
    (years / dt + 1e-9).floor() as usize
}

fn check_step(params: &SrgbmParams, dt: f64) -> Result<()> {
    if params.r * dt >= 1.0 {
        return Err(Error::Config(format!(
            "reset probability per step r dt = {} must be below 1",
            params.r * dt
        )));
    }
    if params.sigma2 * dt > MAX_VARIANCE_STEP {
        return Err(Error::Config(format!(
            "sigma2 dt = {} exceeds {MAX_VARIANCE_STEP}; reduce dt",
            params.sigma2 * dt
        )));
    }
    Ok(())
}

/// One Euler step of a single worker.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stepper {
    growth: f64,
    vol: f64,
    x_r: f64,
    reset: Bernoulli,
}

impl Stepper {
    pub(crate) fn new(params: &SrgbmParams, dt: f64) -> Result<Self> {
        check_step(params, dt)?;
        let reset = Bernoulli::new(params.r * dt)
            .map_err(|e| Error::Config(format!("reset probability: {e}")))?;
        Ok(Self {
            growth: 1.0 + params.mu * dt,
            vol: params.sigma() * dt.sqrt(),
            x_r: params.x_r,
            reset,
        })
    }

    #[inline]
    pub(crate) fn step<R: Rng>(&self, x: f64, rng: &mut R, rejections: &mut u64) -> f64 {
        if self.reset.sample(rng) {
            return self.x_r;
        }
        loop {
            let eta: f64 = rng.sample(StandardNormal);
            let factor = self.growth + self.vol * eta;
            if factor > 0.0 {
                return x * factor;
            }
            *rejections += 1;
        }
    }
}

/// Advances every worker by one step using its own stream `rngs[i]`.
/// Returns the number of redrawn Gaussian increments.
pub fn step_ensemble(
    state: &mut [f64],
    params: &SrgbmParams,
    dt: f64,
    rngs: &mut [ChaCha8Rng],
) -> Result<u64> {
    params.validate()?;
    if state.len() != rngs.len() {
        return Err(Error::Config(format!(
            "{} incomes but {} random streams",
            state.len(),
            rngs.len()
        )));
    }
    if let Some(bad) = state.iter().find(|x| !(**x > 0.0)) {
        return Err(invalid("income", *bad, "must be positive"));
    }
    let stepper = Stepper::new(params, dt)?;
    let rejections = state
        .par_iter_mut()
        .zip(rngs.par_iter_mut())
        .map(|(x, rng)| {
            let mut rejected = 0;
            *x = stepper.step(*x, rng, &mut rejected);
            rejected
        })
        .collect::<Vec<u64>>();
    Ok(rejections.iter().sum())
}

/// Worker incomes paired with their private random streams.
#[derive(Debug, Clone)]
pub struct Ensemble {
    incomes: Vec<f64>,
    rngs: Vec<ChaCha8Rng>,
    rejections: u64,
}

impl Ensemble {
    pub fn new(incomes: Vec<f64>, seed: u64) -> Result<Self> {
        if let Some(bad) = incomes.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(invalid("income", *bad, "must be positive and finite"));
        }
        let rngs = (0..incomes.len() as u64)
            .map(|i| stream(seed, purpose::ENSEMBLE, i))
            .collect();
        Ok(Self {
            incomes,
            rngs,
            rejections: 0,
        })
    }

    pub fn incomes(&self) -> &[f64] {
        &self.incomes
    }

    pub fn rejections(&self) -> u64 {
        self.rejections
    }

    pub fn advance(&mut self, params: &SrgbmParams, dt: f64, n_steps: usize) -> Result<()> {
        for _ in 0..n_steps {
            self.rejections += step_ensemble(&mut self.incomes, params, dt, &mut self.rngs)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FptSampleSet {
    /// Hitting times (years) of the absorbed trajectories, in trajectory order.
    pub hitting_times: Vec<f64>,
    pub n_censored: usize,
    pub n_trajectories: usize,
    pub horizon: f64,
    pub dt: f64,
    /// Redrawn Gaussian increments over the whole run.
    pub rejections: u64,
    /// The start was already at or above the target; all times are 0.
    pub degenerate: bool,
}

impl FptSampleSet {
    pub fn censored_fraction(&self) -> f64 {
        self.n_censored as f64 / self.n_trajectories as f64
    }
}

/// Runs `n` trajectories from `x0` and returns, in index order, the step at
/// which each first reached `y` (or `None` if it did not within `steps`).
fn first_passage_steps(
    x0: f64,
    y: f64,
    stepper: Stepper,
    steps: usize,
    n: usize,
    seed: u64,
    family: u64,
) -> (Vec<Option<usize>>, u64) {
    let results: Vec<(Option<usize>, u64)> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, family, i);
            let mut rejected = 0;
            let mut x = x0;
            for k in 1..=steps {
                x = stepper.step(x, &mut rng, &mut rejected);
                if x >= y {
                    return (Some(k), rejected);
                }
            }
            (None, rejected)
        })
        .collect();
    let rejections = results.iter().map(|r| r.1).sum();
    (results.into_iter().map(|r| r.0).collect(), rejections)
}

/// Samples first-passage times from `x0` to the absorbing level `y`.
pub fn sample_fpt(query: &FptQuery, params: &SrgbmParams, config: &SimConfig) -> Result<FptSampleSet> {
    config.validate(params)?;
    query.validate_positive()?;
    if query.is_absorbed() {
        return Ok(FptSampleSet {
            hitting_times: vec![0.0; config.n_trajectories],
            n_censored: 0,
            n_trajectories: config.n_trajectories,
            horizon: config.horizon,
            dt: config.dt,
            rejections: 0,
            degenerate: true,
        });
    }
    let stepper = Stepper::new(params, config.dt)?;
    let steps = config.steps_for(config.horizon);
    let (hits, rejections) = first_passage_steps(
        query.x0,
        query.y,
        stepper,
        steps,
        config.n_trajectories,
        config.seed,
        purpose::FPT,
    );
    let hitting_times: Vec<f64> = hits.iter().flatten().map(|&k| k as f64 * config.dt).collect();
    if rejections > 0 {
        log::debug!("{rejections} Euler steps redrawn to keep incomes positive");
    }
    Ok(FptSampleSet {
        n_censored: config.n_trajectories - hitting_times.len(),
        hitting_times,
        n_trajectories: config.n_trajectories,
        horizon: config.horizon,
        dt: config.dt,
        rejections,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfptEstimate {
    /// Mean hitting time (years).
    pub mean: f64,
    pub standard_error: f64,
    pub n_used: usize,
    pub censored_fraction: f64,
}

/// Empirical MFPT and standard error, refusing when more than 1% of the
/// trajectories were censored.
pub fn estimate_mfpt_mc(samples: &FptSampleSet) -> Result<MfptEstimate> {
    estimate_mfpt_mc_with(samples, DEFAULT_CENSOR_THRESHOLD)
}

pub fn estimate_mfpt_mc_with(samples: &FptSampleSet, censor_threshold: f64) -> Result<MfptEstimate> {
    let censored_fraction = samples.censored_fraction();
    if censored_fraction > censor_threshold {
        return Err(Error::Censored {
            fraction: censored_fraction,
            threshold: censor_threshold,
        });
    }
    let (mean, standard_error) = mean_and_se(&samples.hitting_times)?;
    Ok(MfptEstimate {
        mean,
        standard_error,
        n_used: samples.hitting_times.len(),
        censored_fraction,
    })
}

/// Sample mean and standard error of the mean, summed in order.
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Domain(format!(
            "need at least 2 samples for a standard error, got {n}"
        )));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    let sd = (ss / (n - 1) as f64).sqrt();
    Ok((mean, sd / (n as f64).sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FractionEstimate {
    pub fraction: f64,
    /// Binomial standard error.
    pub standard_error: f64,
    pub n: usize,
}

/// Fraction of trajectories whose income reaches `y` within `window_years`.
///
/// Trajectory `i` uses the same stream for every window and target, so
/// estimates for nested windows or targets are ordered sample by sample.
pub fn fraction_reaching(
    query: &FptQuery,
    params: &SrgbmParams,
    window_years: f64,
    config: &SimConfig,
) -> Result<FractionEstimate> {
    if !(window_years >= 0.0 && window_years.is_finite()) {
        return Err(invalid("window_years", window_years, "must be nonnegative and finite"));
    }
    let n = config.n_trajectories;
    let check = SimConfig {
        horizon: window_years.max(config.dt),
        ..*config
    };
    check.validate(params)?;
    query.validate_positive()?;
    if query.is_absorbed() {
        return Ok(FractionEstimate {
            fraction: 1.0,
            standard_error: 0.0,
            n,
        });
    }
    let steps = steps_for(window_years, config.dt);
    if steps == 0 {
        return Ok(FractionEstimate {
            fraction: 0.0,
            standard_error: 0.0,
            n,
        });
    }
    let stepper = Stepper::new(params, config.dt)?;
    let (hits, _) = first_passage_steps(
        query.x0,
        query.y,
        stepper,
        steps,
        n,
        config.seed,
        purpose::FRACTION,
    );
    let reached = hits.iter().filter(|h| h.is_some()).count();
    let fraction = reached as f64 / n as f64;
    Ok(FractionEstimate {
        fraction,
        standard_error: (fraction * (1.0 - fraction) / n as f64).sqrt(),
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Years since the start of the simulation.
    pub time: f64,
    pub incomes: Vec<f64>,
}

/// Incomes of the same workers at aligned times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncomePanel {
    pub worker_ids: Vec<u64>,
    pub snapshots: Vec<Snapshot>,
    /// Years between the first and the last snapshot.
    pub delta: f64,
}

impl IncomePanel {
    pub fn new(worker_ids: Vec<u64>, snapshots: Vec<Snapshot>) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::Domain("a panel needs at least two snapshots".into()));
        }
        for s in &snapshots {
            if s.incomes.len() != worker_ids.len() {
                return Err(Error::Domain(format!(
                    "snapshot at t = {} has {} incomes for {} workers",
                    s.time,
                    s.incomes.len(),
                    worker_ids.len()
                )));
            }
            if let Some(bad) = s.incomes.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
                return Err(invalid("income", *bad, "must be positive and finite"));
            }
        }
        if snapshots.windows(2).any(|w| w[1].time < w[0].time) {
            return Err(Error::Domain("snapshot times must be nondecreasing".into()));
        }
        let delta = snapshots[snapshots.len() - 1].time - snapshots[0].time;
        Ok(Self {
            worker_ids,
            snapshots,
            delta,
        })
    }

    pub fn start(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn end(&self) -> &Snapshot {
        &self.snapshots[self.snapshots.len() - 1]
    }

    pub fn n_workers(&self) -> usize {
        self.worker_ids.len()
    }
}

/// Two-sample Kolmogorov-Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Draws `n` incomes from the analytic stationary law by inverse CDF.
pub fn sample_stationary(params: &SrgbmParams, n: usize, seed: u64) -> Result<Vec<f64>> {
    let law = StationaryLaw::new(params)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let u: f64 = stream(seed, purpose::PANEL, i).sample(Open01);
            law.quantile(u)
        })
        .collect()
}

/// Simulates an economy of `n_workers` and records it at `burn_in` and
/// `burn_in + delta`.
///
/// Workers start from the analytic stationary law. When `burn_in > 0` the
/// snapshot at `burn_in / 2` is compared with the one at `burn_in`; a KS
/// distance above `KS_COEFFICIENT sqrt(2 / n)` is reported as non-stationary.
/// `config.n_trajectories` and `config.horizon` are not used.
pub fn generate_panel(
    params: &SrgbmParams,
    n_workers: usize,
    burn_in: f64,
    delta: f64,
    config: &SimConfig,
) -> Result<IncomePanel> {
    params.validate()?;
    if params.r == 0.0 {
        return Err(Error::NoStationaryState);
    }
    if n_workers == 0 {
        return Err(Error::Config("at least one worker is required".into()));
    }
    if !(burn_in >= 0.0 && burn_in.is_finite()) {
        return Err(invalid("burn_in", burn_in, "must be nonnegative and finite"));
    }
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid("delta", delta, "must be nonnegative and finite"));
    }
    if !(config.dt > 0.0 && config.dt.is_finite()) {
        return Err(invalid("dt", config.dt, "must be positive and finite"));
    }
    let law = StationaryLaw::new(params)?;
    let stepper = Stepper::new(params, config.dt)?;

    let burn_steps = steps_for(burn_in, config.dt);
    let end_steps = burn_steps + steps_for(delta, config.dt);
    let mut record_steps = Vec::new();
    let check_stationarity = burn_steps >= 2;
    if check_stationarity {
        record_steps.push(burn_steps / 2);
    }
    record_steps.push(burn_steps);
    if config.record_stride > 0 {
        let mut k = burn_steps + config.record_stride;
        while k < end_steps {
            record_steps.push(k);
            k += config.record_stride;
        }
    }
    record_steps.push(end_steps);

    let records: Vec<(Vec<f64>, u64)> = (0..n_workers as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, purpose::PANEL, i);
            let u: f64 = rng.sample(Open01);
            let mut x = law.quantile(u).expect("u in (0, 1)");
            let mut out = Vec::with_capacity(record_steps.len());
            let mut rejected = 0;
            let mut k = 0;
            for &target in &record_steps {
                while k < target {
                    x = stepper.step(x, &mut rng, &mut rejected);
                    k += 1;
                }
                out.push(x);
            }
            (out, rejected)
        })
        .collect();

    let n_records = record_steps.len();
    let mut columns = vec![Vec::with_capacity(n_workers); n_records];
    for (row, _) in &records {
        for (col, &x) in columns.iter_mut().zip(row) {
            col.push(x);
        }
    }
    let rejections: u64 = records.iter().map(|r| r.1).sum();
    if rejections > 0 {
        log::debug!("{rejections} Euler steps redrawn to keep incomes positive");
    }

    let mut columns = columns.into_iter();
    if check_stationarity {
        let half = columns.next().expect("recorded");
        let d = ks_distance(&half, &columns.as_slice()[0]);
        let threshold = KS_COEFFICIENT * (2.0 / n_workers as f64).sqrt();
        log::debug!("panel stationarity: KS distance {d:.5} (threshold {threshold:.5})");
        if d > threshold {
            return Err(Error::NotStationary {
                distance: d,
                threshold,
            });
        }
    }
    let times = record_steps
        .iter()
        .skip(usize::from(check_stationarity))
        .map(|&k| k as f64 * config.dt);
    let snapshots = times
        .zip(columns)
        .map(|(time, incomes)| Snapshot { time, incomes })
        .collect();
    IncomePanel::new((0..n_workers as u64).collect(), snapshots)
}

/// Log-spaced histogram normalized as a density over income.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_samples: usize,
}

impl Histogram {
    /// Bins of equal logarithmic width spanning every sample.
    pub fn log_spaced(samples: &[f64], bins_per_decade: usize) -> Result<Self> {
        if samples.is_empty() || bins_per_decade == 0 {
            return Err(Error::Domain("histogram needs samples and bins".into()));
        }
        if let Some(bad) = samples.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(invalid("sample", *bad, "must be positive and finite"));
        }
        let (lo, hi) = samples
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        let bpd = bins_per_decade as f64;
        let first = (lo.log10() * bpd).floor() as i64;
        let last = ((hi.log10() * bpd).floor() as i64 + 1).max(first + 1);
        let edges: Vec<f64> = (first..=last).map(|k| 10f64.powf(k as f64 / bpd)).collect();
        let n_bins = edges.len() - 1;
        let mut counts = vec![0u64; n_bins];
        for &x in samples {
            let mut b = ((x.log10() * bpd).floor() as i64 - first).clamp(0, n_bins as i64 - 1) as usize;
            // Guard against rounding in log10 near an edge.
            while b > 0 && x < edges[b] {
                b -= 1;
            }
            while b + 1 < n_bins && x >= edges[b + 1] {
                b += 1;
            }
            counts[b] += 1;
        }
        Ok(Self {
            edges,
            counts,
            n_samples: samples.len(),
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    /// Geometric bin centers.
    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect()
    }

    pub fn density(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| c as f64 / (n * (w[1] - w[0])))
            .collect()
    }

    /// Poisson standard error of each bin density.
    pub fn density_se(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        self.edges
            .windows(2)
            .zip(&self.counts)
            .map(|(w, &c)| (c as f64).sqrt() / (n * (w[1] - w[0])))
            .collect()
    }

    pub fn integral(&self) -> f64 {
        self.edges
            .windows(2)
            .zip(self.density())
            .map(|(w, d)| d * (w[1] - w[0]))
            .sum()
    }

    /// Center of the bin with the largest density.
    pub fn mode(&self) -> f64 {
        let d = self.density();
        let i = d
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.centers()[i]
    }

    /// Least-squares slope of log density against log income over bins lying
    /// inside `[lo, hi]` with at least `min_count` samples.
    pub fn tail_slope(&self, lo: f64, hi: f64, min_count: u64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .edges
            .windows(2)
            .zip(self.centers())
            .zip(self.density())
            .zip(&self.counts)
            .filter(|(((w, _), _), &c)| w[0] >= lo && w[1] <= hi && c >= min_count)
            .map(|(((_, x), d), _)| (x.ln(), d.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    }
}

/// Bins per decade of [`stationary_histogram`].
pub const HISTOGRAM_BINS_PER_DECADE: usize = 20;

/// Long-run income histogram from `config.n_trajectories` workers started at
/// the reset income and simulated for `config.horizon` years.
///
/// Independent of the analytic stationary law, which makes it a check on it.
pub fn stationary_histogram(params: &SrgbmParams, config: &SimConfig) -> Result<Histogram> {
    config.validate(params)?;
    let incomes = simulate_from_reset(params, config)?;
    Histogram::log_spaced(&incomes, HISTOGRAM_BINS_PER_DECADE)
}

/// Final incomes of workers started at `x_r` and run for the horizon.
pub fn simulate_from_reset(params: &SrgbmParams, config: &SimConfig) -> Result<Vec<f64>> {
    config.validate(params)?;
    let stepper = Stepper::new(params, config.dt)?;
    let steps = config.steps_for(config.horizon);
    Ok((0..config.n_trajectories as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(config.seed, purpose::HISTOGRAM, i);
            let mut rejected = 0;
            let mut x = params.x_r;
            for _ in 0..steps {
                x = stepper.step(x, &mut rng, &mut rejected);
            }
            x
        })
        .collect())
}
