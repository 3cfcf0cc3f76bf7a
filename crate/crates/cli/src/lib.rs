//! The `srgbm` command line.
//!
//! Every artifact starts with a metadata header holding the full parsed
//! command line as JSON; `srgbm replay --from <artifact>` reruns it.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use srgbm_core::estimation::{
    default_rate_queries, fit_series, fraction_series, mfpt_series, optimal_rate_series, CiMethod,
    FitConfig, StartPosition,
};
use srgbm_core::io::{self, Metadata};
use srgbm_core::mobility::{
    fit_srgbm_to_matrix, generator_first_passage, generator_matrix, mfpt_gap_report, MatrixFitConfig,
    ParamBounds,
};
use srgbm_core::simulator::generate_panel;
use srgbm_core::{
    estimate_mfpt_mc, fpt_moment, fraction_reaching, mfpt, optimal_resetting_rate, sample_fpt, tmfpt,
    transition_matrix, Error, ErrorCategory, FptQuery, GeneratorVariant, Result, SimConfig,
    SrgbmParams,
};

#[derive(Parser, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(name = "srgbm", version, about = "First-passage statistics of GBM with stochastic resetting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Master seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Simulation time step in years (subcommand default if omitted).
    #[arg(long, global = true)]
    pub dt: Option<f64>,

    /// Number of trajectories or workers.
    #[arg(long, global = true)]
    pub n: Option<usize>,

    /// Monte Carlo repetitions of the series fit.
    #[arg(long, global = true)]
    pub reps: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, env = "SRGBM_OUT_DIR", default_value = "srgbm-out")]
    #[serde(skip)]
    pub out: PathBuf,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    /// Generator formula for continuous-time matrix MFPTs.
    #[arg(long, global = true, default_value = "diagonal-adjustment")]
    pub variant: GeneratorVariant,

    /// Rescale matrix rows that do not sum to one.
    #[arg(long, global = true)]
    pub renormalize: bool,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Closed-form MFPT, optionally over a grid of resetting rates.
    #[command(allow_negative_numbers = true)]
    Mfpt(MfptArgs),
    /// Monte Carlo first-passage samples and their mean.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Fraction of trajectories reaching the target within time windows.
    #[command(allow_negative_numbers = true)]
    Fraction(FractionArgs),
    /// Resetting rate minimizing the MFPT.
    #[command(allow_negative_numbers = true)]
    OptimalRate(OptimalRateArgs),
    /// Quantile transition matrix from a panel file or a simulated economy.
    #[command(allow_negative_numbers = true)]
    Tmatrix(TmatrixArgs),
    /// Mean first-passage times of a transition matrix.
    #[command(allow_negative_numbers = true)]
    Tmfpt(TmfptArgs),
    /// Fits (mu, sigma2, r) to a transition matrix.
    #[command(allow_negative_numbers = true)]
    FitMatrix(FitMatrixArgs),
    /// Yearly parameters from an observed share series, with reports.
    #[command(allow_negative_numbers = true)]
    FitSeries(FitSeriesArgs),
    /// Closed-form MFPT versus matrix MFPT between quantiles.
    #[command(allow_negative_numbers = true)]
    GapReport(GapReportArgs),
    /// Reruns the command recorded in an artifact's metadata header.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 0.10)]
    pub mu: f64,
    #[arg(long, default_value_t = 0.03)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.041)]
    pub r: f64,
    #[arg(long = "x-r", default_value_t = 1.0)]
    pub x_r: f64,
}

impl ParamArgs {
    fn params(&self) -> Result<SrgbmParams> {
        SrgbmParams::new(self.mu, self.sigma2, self.r, self.x_r)
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryArgs {
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 10.0)]
    pub y: f64,
}

impl QueryArgs {
    fn query(&self) -> Result<FptQuery> {
        FptQuery::new(self.x0, self.y)
    }
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MfptArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Linear grid of resetting rates `lo:hi:count`, replacing `--r`.
    #[arg(long)]
    pub r_grid: Option<String>,
    /// Also report raw moments up to this order.
    #[arg(long, default_value_t = 1)]
    pub moments: u32,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Censoring time (years).
    #[arg(long, default_value_t = 1000.0)]
    pub horizon: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Time windows (years).
    #[arg(long, value_delimiter = ',', default_values_t = [20.0, 40.0])]
    pub window: Vec<f64>,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalRateArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[command(flatten)]
    pub query: QueryArgs,
    /// Upper end of the rate search (year^-1).
    #[arg(long, default_value_t = 1.0)]
    pub r_max: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmatrixArgs {
    /// Panel CSV (`worker_id,time,income`); simulated from the parameters if absent.
    #[arg(long)]
    pub panel: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Number of quantiles.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Horizon of the simulated panel (years).
    #[arg(long, default_value_t = 10.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub burn_in: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TmfptArgs {
    /// Matrix CSV with a JSON sidecar of the same stem.
    #[arg(long)]
    pub matrix: PathBuf,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitMatrixArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub mu_min: f64,
    #[arg(long, default_value_t = 0.2)]
    pub mu_max: f64,
    #[arg(long, default_value_t = 0.005)]
    pub sigma2_min: f64,
    #[arg(long, default_value_t = 0.08)]
    pub sigma2_max: f64,
    #[arg(long, default_value_t = 0.005)]
    pub r_min: f64,
    #[arg(long, default_value_t = 0.1)]
    pub r_max: f64,
    /// Coarse grid nodes per parameter.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.0)]
    pub burn_in: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSeriesArgs {
    /// CSV `year,top_share[,aux_share],reset_rate`.
    #[arg(long)]
    pub series: PathBuf,
    #[arg(long)]
    pub mu_min: Option<f64>,
    #[arg(long)]
    pub mu_max: Option<f64>,
    #[arg(long)]
    pub sigma2_min: Option<f64>,
    #[arg(long)]
    pub sigma2_max: Option<f64>,
    /// Assumed top-10% to top-1% share ratio when there is no aux_share column.
    #[arg(long)]
    pub tail_ratio: Option<f64>,
    /// Bottom group the MFPT and fraction reports start from.
    #[arg(long, default_value_t = 0.1)]
    pub start_pct: f64,
    #[arg(long, default_value_t = 0.9)]
    pub target_pct: f64,
    #[arg(long, default_value = "midpoint")]
    pub start_position: StartPosition,
    /// Parameter draws for the MFPT band; 0 selects the delta method.
    #[arg(long, default_value_t = 200)]
    pub draws: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [20.0, 40.0])]
    pub window: Vec<f64>,
    /// Trajectories per year in the fraction report.
    #[arg(long, default_value_t = 10_000)]
    pub fraction_n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub rate_max: f64,
    /// Only fit the parameters.
    #[arg(long)]
    pub no_reports: bool,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReportArgs {
    #[command(flatten)]
    pub params: ParamArgs,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 10.0)]
    pub delta: f64,
}

#[derive(Args, Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// Any artifact written by a previous run.
    #[arg(long)]
    pub from: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub command: String,
    pub outputs: Vec<PathBuf>,
}

/// Exit status for an error: 2 validation, 3 numerical, 4 fit.
pub fn exit_code(e: &Error) -> i32 {
    match e.category() {
        ErrorCategory::Validation => 2,
        ErrorCategory::Numerical => 3,
        ErrorCategory::Fit => 4,
    }
}

pub fn error_json(e: &Error) -> Value {
    json!({
        "error": {
            "kind": e.kind(),
            "category": format!("{:?}", e.category()).to_lowercase(),
            "message": e.to_string(),
            "exit_code": exit_code(e),
        }
    })
}

/// Parses `args` (including the program name), runs, prints, and returns the
/// exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{}", json!({ "status": "ok", "command": summary.command, "outputs": summary.outputs }));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", error_json(&e));
            exit_code(&e)
        }
    }
}

/// Runs `cli` inside a thread pool of the requested size.
pub fn run(cli: &Cli) -> Result<RunSummary> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_inner(cli))
}

fn run_inner(cli: &Cli) -> Result<RunSummary> {
    if let Command::Replay(args) = &cli.command {
        let meta = io::read_metadata(&args.from)?;
        let mut original: Cli = serde_json::from_value(meta.config)
            .map_err(|e| Error::Config(format!("metadata does not hold a run configuration: {e}")))?;
        if matches!(original.command, Command::Replay(_)) {
            return Err(Error::Config("cannot replay a replay".into()));
        }
        original.out = cli.out.clone();
        original.threads = cli.threads;
        return run_inner(&original);
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| Error::Io(format!("{}: {e}", cli.out.display())))?;
    let mut out = Output::new(cli)?;
    match &cli.command {
        Command::Mfpt(a) => cmd_mfpt(cli, a, &mut out)?,
        Command::Simulate(a) => cmd_simulate(cli, a, &mut out)?,
        Command::Fraction(a) => cmd_fraction(cli, a, &mut out)?,
        Command::OptimalRate(a) => cmd_optimal_rate(a, &mut out)?,
        Command::Tmatrix(a) => cmd_tmatrix(cli, a, &mut out)?,
        Command::Tmfpt(a) => cmd_tmfpt(cli, a, &mut out)?,
        Command::FitMatrix(a) => cmd_fit_matrix(cli, a, &mut out)?,
        Command::FitSeries(a) => cmd_fit_series(cli, a, &mut out)?,
        Command::GapReport(a) => cmd_gap_report(cli, a, &mut out)?,
        Command::Replay(_) => unreachable!("handled above"),
    }
    Ok(RunSummary {
        command: out.command.clone(),
        outputs: out.written,
    })
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Mfpt(_) => "mfpt",
        Command::Simulate(_) => "simulate",
        Command::Fraction(_) => "fraction",
        Command::OptimalRate(_) => "optimal-rate",
        Command::Tmatrix(_) => "tmatrix",
        Command::Tmfpt(_) => "tmfpt",
        Command::FitMatrix(_) => "fit-matrix",
        Command::FitSeries(_) => "fit-series",
        Command::GapReport(_) => "gap-report",
        Command::Replay(_) => "replay",
    }
}

/// Writes artifacts into the output directory only.
struct Output {
    dir: PathBuf,
    format: Format,
    command: String,
    seed: u64,
    config: Value,
    start: Instant,
    written: Vec<PathBuf>,
}

impl Output {
    fn new(cli: &Cli) -> Result<Self> {
        Ok(Self {
            dir: cli.out.clone(),
            format: cli.format,
            command: command_name(&cli.command).into(),
            seed: cli.seed,
            config: serde_json::to_value(cli)?,
            start: Instant::now(),
            written: vec![],
        })
    }

    fn meta(&self) -> Metadata {
        let mut m = Metadata::new(&self.command, self.seed, self.config.clone());
        m.wall_clock_seconds = self.start.elapsed().as_secs_f64();
        m
    }

    fn path(&mut self, file: &str) -> PathBuf {
        let p = self.dir.join(file);
        self.written.push(p.clone());
        p
    }

    fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<Value>>) -> Result<()> {
        let meta = self.meta();
        match self.format {
            Format::Csv => {
                let text: Vec<Vec<String>> = rows
                    .iter()
                    .map(|r| r.iter().map(render).collect())
                    .collect();
                let p = self.path(&format!("{name}.csv"));
                io::write_table(&p, &meta, header, &text)
            }
            Format::Json => {
                let records: Vec<Value> = rows
                    .into_iter()
                    .map(|r| Value::Object(header.iter().map(|h| h.to_string()).zip(r).collect()))
                    .collect();
                let p = self.path(&format!("{name}.json"));
                io::write_json(&p, &meta, &records)
            }
        }
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Finite numbers as JSON numbers, anything else as text.
fn num(v: f64) -> Value {
    if v.is_finite() {
        Value::from(v)
    } else {
        Value::String(v.to_string())
    }
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

fn sim_config(cli: &Cli, dt: f64, n: usize) -> SimConfig {
    SimConfig {
        dt: cli.dt.unwrap_or(dt),
        n_trajectories: cli.n.unwrap_or(n),
        seed: cli.seed,
        ..SimConfig::default()
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("--r-grid expects lo:hi:count, got `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !(lo <= hi) {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn cmd_mfpt(_cli: &Cli, a: &MfptArgs, out: &mut Output) -> Result<()> {
    let query = a.query.query()?;
    let base = a.params.params()?;
    let rates = match &a.r_grid {
        Some(g) => parse_grid(g)?,
        None => vec![base.r],
    };
    let mut header = vec!["r".to_string(), "mfpt_years".to_string()];
    header.extend((2..=a.moments).map(|n| format!("moment_{n}")));
    let mut rows = Vec::with_capacity(rates.len());
    for r in rates {
        let p = base.with_rate(r);
        let mut row = vec![num(r), num(mfpt(&query, &p)?)];
        for n in 2..=a.moments {
            row.push(num(fpt_moment(n, &query, &p)?));
        }
        rows.push(row);
    }
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.table("mfpt", &header, rows)
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs, out: &mut Output) -> Result<()> {
    let query = a.query.query()?;
    let params = a.params.params()?;
    let config = SimConfig {
        horizon: a.horizon,
        ..sim_config(cli, 1e-2, 10_000)
    };
    let samples = sample_fpt(&query, &params, &config)?;
    let p = out.path("fpt_samples.csv");
    io::write_fpt_samples(&p, &samples, &out.meta())?;
    let est = estimate_mfpt_mc(&samples)?;
    let analytic = mfpt(&query, &params)?;
    let z = if est.standard_error > 0.0 {
        (est.mean - analytic) / est.standard_error
    } else {
        0.0
    };
    out.table(
        "simulate",
        &["mc_mfpt_years", "standard_error", "n_used", "censored_fraction", "analytic_mfpt_years", "z_score", "rejections"],
        vec![vec![
            num(est.mean),
            num(est.standard_error),
            Value::from(est.n_used),
            num(est.censored_fraction),
            num(analytic),
            num(z),
            Value::from(samples.rejections),
        ]],
    )
}

fn cmd_fraction(cli: &Cli, a: &FractionArgs, out: &mut Output) -> Result<()> {
    let query = a.query.query()?;
    let params = a.params.params()?;
    let config = sim_config(cli, 1e-2, 10_000);
    let mut rows = Vec::with_capacity(a.window.len());
    for &w in &a.window {
        let est = fraction_reaching(&query, &params, w, &config)?;
        rows.push(vec![num(w), num(est.fraction), num(est.standard_error), Value::from(est.n)]);
    }
    out.table("fraction", &["window_years", "fraction", "standard_error", "n"], rows)
}

fn cmd_optimal_rate(a: &OptimalRateArgs, out: &mut Output) -> Result<()> {
    let query = a.query.query()?;
    let p = &a.params;
    let best = optimal_resetting_rate(&query, p.mu, p.sigma2, p.x_r, a.r_max)?;
    out.table(
        "optimal_rate",
        &["rate", "mfpt_years", "at_boundary"],
        vec![vec![num(best.rate), num(best.mfpt), Value::from(best.at_boundary)]],
    )
}

fn cmd_tmatrix(cli: &Cli, a: &TmatrixArgs, out: &mut Output) -> Result<()> {
    let panel = match &a.panel {
        Some(path) => io::load_panel(path)?,
        None => {
            let params = a.params.params()?;
            let config = sim_config(cli, 2e-2, 100_000);
            let panel = generate_panel(&params, config.n_trajectories, a.burn_in, a.delta, &config)?;
            let p = out.path("panel.csv");
            io::write_panel(&p, &panel, &out.meta())?;
            panel
        }
    };
    let m = transition_matrix(&panel, a.k)?;
    let p = out.path("matrix.csv");
    io::write_matrix(&p, &m, &out.meta())?;
    out.written.push(io::sidecar_path(&p));
    Ok(())
}

fn cmd_tmfpt(cli: &Cli, a: &TmfptArgs, out: &mut Output) -> Result<()> {
    let m = io::load_matrix(&a.matrix, cli.renormalize)?;
    let discrete = tmfpt(&m)?;
    let continuous = generator_matrix(&m, cli.variant).and_then(|q| generator_first_passage(&q));
    if let Err(e) = &continuous {
        log::warn!("continuous-time route unavailable: {e}");
    }
    let k = m.k();
    let mut rows = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let c = continuous.as_ref().ok();
            rows.push(vec![
                Value::from(i + 1),
                Value::from(j + 1),
                num(discrete.get(i, j)),
                num(discrete.get(i, j) * m.delta),
                opt(c.map(|c| c.periods.get(i, j))),
                opt(c.map(|c| c.years.get(i, j))),
                opt(c.map(|c| c.jump_route_periods.get(i, j))),
            ]);
        }
    }
    out.table(
        "tmfpt",
        &["from", "to", "discrete_periods", "discrete_years", "continuous_periods", "continuous_years", "jump_route_periods"],
        rows,
    )?;
    let c = continuous.as_ref().ok();
    out.table(
        "tmfpt_summary",
        &["k", "delta_years", "variant", "generator_valid", "generator_max_row_sum", "route_discrepancy"],
        vec![vec![
            Value::from(k),
            num(m.delta),
            serde_json::to_value(cli.variant)?,
            Value::from(c.is_some_and(|c| c.generator.is_valid())),
            opt(c.map(|c| c.generator.max_row_sum())),
            opt(c.map(|c| c.route_discrepancy)),
        ]],
    )
}

fn cmd_fit_matrix(cli: &Cli, a: &FitMatrixArgs, out: &mut Output) -> Result<()> {
    let m = io::load_matrix(&a.matrix, cli.renormalize)?;
    let bounds = ParamBounds {
        mu: (a.mu_min, a.mu_max),
        sigma2: (a.sigma2_min, a.sigma2_max),
        r: (a.r_min, a.r_max),
    };
    let config = MatrixFitConfig {
        sim: sim_config(cli, 2e-2, 100_000),
        burn_in: a.burn_in,
        grid_points: [a.grid; 3],
        ..MatrixFitConfig::default()
    };
    let fit = fit_srgbm_to_matrix(&m, &bounds, &config)?;
    let p = out.path("model_matrix.csv");
    io::write_matrix(&p, &fit.model, &out.meta())?;
    out.written.push(io::sidecar_path(&p));
    let names = ["mu", "sigma2", "r"];
    let values = [fit.params.mu, fit.params.sigma2, fit.params.r];
    let rows = (0..3)
        .map(|i| vec![Value::from(names[i]), num(values[i]), num(fit.grid_spacing[i]), num(fit.final_step[i])])
        .collect();
    out.table("fit_matrix", &["parameter", "value", "grid_spacing", "final_step"], rows)?;
    out.table(
        "fit_matrix_summary",
        &["explained_variance", "frobenius", "evaluations"],
        vec![vec![num(fit.explained_variance), num(fit.frobenius), Value::from(fit.evaluations)]],
    )
}

fn cmd_fit_series(cli: &Cli, a: &FitSeriesArgs, out: &mut Output) -> Result<()> {
    let series = io::load_observed_series(&a.series)?;
    let d = FitConfig::default();
    let config = FitConfig {
        n_workers: cli.n.unwrap_or(d.n_workers),
        reps: cli.reps.unwrap_or(d.reps),
        dt: cli.dt.unwrap_or(d.dt),
        mu_bounds: (a.mu_min.unwrap_or(d.mu_bounds.0), a.mu_max.unwrap_or(d.mu_bounds.1)),
        sigma2_bounds: (
            a.sigma2_min.unwrap_or(d.sigma2_bounds.0),
            a.sigma2_max.unwrap_or(d.sigma2_bounds.1),
        ),
        default_tail_ratio: a.tail_ratio.unwrap_or(d.default_tail_ratio),
        seed: cli.seed,
        ..d
    };
    let ps = fit_series(&series, &config)?;
    let p = out.path("param_series.csv");
    io::write_param_series(&p, &ps, &out.meta())?;
    if a.no_reports {
        return Ok(());
    }
    let ci = if a.draws == 0 {
        CiMethod::Delta
    } else {
        CiMethod::Draws {
            n: a.draws,
            seed: cli.seed,
        }
    };
    let points = mfpt_series(&ps, a.start_pct, a.target_pct, a.start_position, ci)?;
    let rows = points
        .iter()
        .map(|p| {
            vec![
                Value::from(p.year),
                num(p.mfpt),
                num(p.se),
                num(p.lower),
                num(p.upper),
                Value::from(p.excluded_draws),
                Value::from(p.delta_method),
            ]
        })
        .collect();
    out.table(
        "mfpt_series",
        &["year", "mfpt_years", "se", "lower", "upper", "excluded_draws", "delta_method"],
        rows,
    )?;
    let sim = SimConfig {
        n_trajectories: a.fraction_n,
        ..sim_config(cli, 1e-2, a.fraction_n)
    };
    let mut rows = Vec::new();
    for &w in &a.window {
        for p in fraction_series(&ps, a.start_pct, a.target_pct, w, &sim)? {
            rows.push(vec![Value::from(p.year), num(w), num(p.fraction), num(p.se), num(p.lower), num(p.upper)]);
        }
    }
    out.table("fraction_series", &["year", "window_years", "fraction", "se", "lower", "upper"], rows)?;
    let rates = optimal_rate_series(&ps, &default_rate_queries(), a.rate_max)?;
    let rows = rates
        .iter()
        .map(|p| {
            vec![
                Value::from(p.year),
                num(p.mean_rate),
                num(p.r_hat),
                Value::from(p.excess_sign),
                Value::from(p.rates.len()),
                Value::from(p.skipped),
            ]
        })
        .collect();
    out.table(
        "optimal_rates",
        &["year", "mean_optimal_rate", "r_hat", "excess_sign", "queries", "skipped"],
        rows,
    )
}

fn cmd_gap_report(cli: &Cli, a: &GapReportArgs, out: &mut Output) -> Result<()> {
    let params = a.params.params()?;
    let sim = sim_config(cli, 2e-2, 100_000);
    let report = mfpt_gap_report(&params, a.k, a.delta, &sim)?;
    let p = out.path("gap_matrix.csv");
    io::write_matrix(&p, &report.matrix, &out.meta())?;
    out.written.push(io::sidecar_path(&p));
    let rows = report
        .rows
        .iter()
        .map(|r| {
            vec![
                Value::from(r.from),
                Value::from(r.to),
                opt(r.srgbm_years),
                num(r.tmfpt_years),
                num(r.tmfpt_periods),
                opt(r.difference),
            ]
        })
        .collect();
    out.table(
        "gap_report",
        &["from", "to", "srgbm_years", "tmfpt_years", "tmfpt_periods", "difference_years"],
        rows,
    )
}

/// Data lines of an artifact, without the metadata header.
pub fn artifact_body(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    if text.starts_with('{') {
        let v: Value = serde_json::from_str(&text)?;
        return Ok(v["data"].to_string());
    }
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n"))
}
