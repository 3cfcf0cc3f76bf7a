//! Acceptance run: one line per criterion.
//!
//! Criteria listed in `EXPECTED_FAILURES` are evaluated at full strength and
//! reported, but do not fail the run; every other failure does. Set
//! `SRGBM_ACCEPTANCE=1,7,13` to run a subset.

use std::path::Path;
use std::time::{Duration, Instant};

use clap::Parser;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srgbm_cli::{artifact_body, run, Cli};
use srgbm_core::estimation::{fit_series, fraction_series, synthetic_series, FitConfig, ParamSeries};
use srgbm_core::io::{write_observed_series, Metadata};
use srgbm_core::mobility::{fit_srgbm_to_matrix, mfpt_gap_report, model_matrix, MatrixFitConfig, ParamBounds};
use srgbm_core::{
    estimate_mfpt_mc, exponent_q1, exponent_q2, mfpt, optimal_resetting_rate, sample_fpt,
    stationary_histogram, tail_alpha, tmfpt, FptQuery, SimConfig, SrgbmParams, TransitionMatrix,
};

/// Matrix structure and the underestimation claim do not hold for the
/// model's own decile matrix at the stated operating point.
const EXPECTED_FAILURES: &[usize] = &[8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn fig3() -> SrgbmParams {
    SrgbmParams::new(0.10, 0.03, 0.041, 1.0).unwrap()
}

fn c1_analytic_vs_mc() -> Outcome {
    let q = FptQuery::new(1.0, 10.0).unwrap();
    let exact = mfpt(&q, &fig3()).unwrap();
    let config = SimConfig {
        dt: 1e-3,
        n_trajectories: 100_000,
        horizon: 2_000.0,
        seed: 1,
        ..Default::default()
    };
    let t = Instant::now();
    let est = estimate_mfpt_mc(&sample_fpt(&q, &fig3(), &config).unwrap()).unwrap();
    let elapsed = t.elapsed();
    let z = (est.mean - exact) / est.standard_error;
    outcome(
        z.abs() <= 3.0 && elapsed <= Duration::from_secs(300),
        format!(
            "closed form {exact:.4} y, MC {:.4} +/- {:.4} y (z = {z:.2}), {:.0} s",
            est.mean,
            est.standard_error,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_characteristic_roots() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_root, mut worst_product) = (0.0f64, 0.0f64);
    for _ in 0..1_000 {
        let mu = rng.random_range(-0.2..0.5);
        let s2 = rng.random_range(1e-3..0.5);
        let s = rng.random_range(0.0..1.0);
        let p = SrgbmParams::new(mu, s2, 0.0, 1.0).unwrap();
        let (q1, q2) = (exponent_q1(s, &p).unwrap(), exponent_q2(s, &p).unwrap());
        for q in [q1, q2] {
            let res = (mu * q + 0.5 * s2 * q * (q - 1.0) - s).abs() / f64::max(1.0, s);
            worst_root = worst_root.max(res);
        }
        let target = -2.0 * s / s2;
        let rel = if target == 0.0 { (q1 * q2).abs() } else { (q1 * q2 - target).abs() / target.abs() };
        worst_product = worst_product.max(rel);
    }
    outcome(
        worst_root <= 1e-10 && worst_product <= 1e-10,
        format!("1000 draws: max root residual {worst_root:.2e}, max product error {worst_product:.2e}"),
    )
}

fn c3_alpha_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..1_000 {
        let p = SrgbmParams::new(
            rng.random_range(-0.2..0.5),
            rng.random_range(1e-3..0.5),
            rng.random_range(0.0..1.0),
            1.0,
        )
        .unwrap();
        let (a, q) = (tail_alpha(&p).unwrap(), exponent_q1(p.r, &p).unwrap());
        let rel = if q == 0.0 { a.abs() } else { (a - q).abs() / q.abs() };
        worst = worst.max(rel);
    }
    outcome(worst <= 1e-12, format!("1000 draws: max relative gap {worst:.2e}"))
}

fn c4_reset_free_limit() -> Outcome {
    let q = FptQuery::new(1.0, 10.0).unwrap();
    let t = mfpt(&q, &SrgbmParams::new(0.10, 0.03, 1e-8, 1.0).unwrap()).unwrap();
    let limit = 10f64.ln() / 0.085;
    let rel = (t - limit).abs() / limit;
    outcome(rel <= 1e-3, format!("{t:.6} y vs {limit:.6} y, relative {rel:.2e}"))
}

fn c5_deterministic_drift() -> Outcome {
    let p = SrgbmParams::new(0.1, 1e-12, 0.0, 1.0).unwrap();
    let q = FptQuery::new(1.0, std::f64::consts::E).unwrap();
    let config = SimConfig {
        n_trajectories: 1_000,
        horizon: 20.0,
        seed: 5,
        ..Default::default()
    };
    let s = sample_fpt(&q, &p, &config).unwrap();
    let worst = s.hitting_times.iter().map(|t| (t - 10.0).abs()).fold(0.0, f64::max);
    outcome(
        s.n_censored == 0 && worst <= config.dt,
        format!("{} hits, max |T - 10| = {worst:.4} y (dt = {})", s.hitting_times.len(), config.dt),
    )
}

/// Minimizer of the MFPT over `r = i r_max / 10^4`, `i = 0..10^4`; `i = 0`
/// is the reset-free limit when it exists.
fn grid_oracle(q: &FptQuery, mu: f64, s2: f64, r_max: f64) -> f64 {
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=10_000 {
        let r = r_max * i as f64 / 10_000.0;
        if let Ok(t) = mfpt(q, &SrgbmParams::new(mu, s2, r, 1.0).unwrap()) {
            if t < best.0 {
                best = (t, r);
            }
        }
    }
    best.1
}

fn c6_optimal_rate_trends() -> Outcome {
    let q = FptQuery::new(1.0, 10.0).unwrap();
    let r_max = 1.0;
    let h = r_max / 10_000.0;
    let mut oracle_ok = true;
    let mut worst = 0.0f64;
    let mut check = |mu: f64, s2: f64| {
        let r = optimal_resetting_rate(&q, mu, s2, 1.0, r_max).unwrap().rate;
        let g = grid_oracle(&q, mu, s2, r_max);
        let gap = (r - g).abs();
        // Within 1 % of the oracle, or within its resolution when it is near 0.
        oracle_ok &= gap <= f64::max(0.01 * g, h);
        if g > 0.0 {
            worst = worst.max(gap / g);
        }
        r
    };
    let by_mu: Vec<f64> = (1..=12).map(|i| check(0.01 * i as f64, 0.03)).collect();
    let by_s2: Vec<f64> = (1..=20).map(|i| check(0.02, 0.01 * i as f64)).collect();
    let mu_ok = by_mu.windows(2).all(|w| w[1] <= w[0]);
    let s2_ok = by_s2.windows(2).all(|w| w[1] >= w[0]);
    outcome(
        mu_ok && s2_ok && oracle_ok,
        format!(
            "r*(mu) {:.4}..{:.4} nonincreasing {mu_ok}; r*(sigma2) {:.4}..{:.4} nondecreasing {s2_ok}; \
             grid oracle ok {oracle_ok} (max relative gap {worst:.2e})",
            by_mu[0],
            by_mu[11],
            by_s2[0],
            by_s2[19]
        ),
    )
}

fn absorbing_solve(p: &DMatrix<f64>, target: usize) -> Vec<f64> {
    let k = p.nrows();
    let others: Vec<usize> = (0..k).filter(|&i| i != target).collect();
    let a = DMatrix::from_fn(others.len(), others.len(), |i, j| {
        (if i == j { 1.0 } else { 0.0 }) - p[(others[i], others[j])]
    });
    let m = a.lu().solve(&DVector::from_element(others.len(), 1.0)).unwrap();
    let mut out = vec![0.0; k];
    for (i, &s) in others.iter().enumerate() {
        out[s] = m[i];
    }
    out
}

fn c7_tmfpt_oracles() -> Outcome {
    let u = tmfpt(&TransitionMatrix::new(DMatrix::from_element(10, 10, 0.1), 1.0).unwrap()).unwrap();
    let uniform_err = (0..10)
        .flat_map(|i| (0..10).map(move |j| (i, j)))
        .map(|(i, j)| (u.get(i, j) - if i == j { 0.0 } else { 10.0 }).abs())
        .fold(0.0, f64::max);
    let two = tmfpt(&TransitionMatrix::new(DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.75, 0.25]), 1.0).unwrap())
        .unwrap();
    let two_err = f64::max((two.get(0, 1) - 2.0).abs(), (two.get(1, 0) - 4.0 / 3.0).abs());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let mut a = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() + 0.01);
        for i in 0..5 {
            let s: f64 = a.row(i).sum();
            a.row_mut(i).unscale_mut(s);
        }
        let p = TransitionMatrix::with_tolerance(a, 1.0, 1e-9, true).unwrap();
        let t = tmfpt(&p).unwrap();
        for target in 0..5 {
            let brute = absorbing_solve(p.entries(), target);
            for from in (0..5).filter(|&f| f != target) {
                worst = worst.max((t.get(from, target) - brute[from]).abs() / brute[from]);
            }
        }
    }
    outcome(
        uniform_err < 1e-12 && two_err < 1e-12 && worst <= 1e-9,
        format!("uniform error {uniform_err:.1e}, two-state error {two_err:.1e}, random chains {worst:.1e}"),
    )
}

fn c8_matrix_structure() -> Outcome {
    // Decile matrix over a decade, the unit of the published TMFPT panels.
    let sim = SimConfig {
        dt: 0.02,
        n_trajectories: 100_000,
        seed: 8,
        ..Default::default()
    };
    let report = mfpt_gap_report(&fig3(), 10, 10.0, &sim).unwrap();
    let m = &report.matrix;
    let dominant = m.diagonally_dominant();
    let corners = m.row_argmax_is_diagonal(0) && m.row_argmax_is_diagonal(9);
    let discrete = tmfpt(m).unwrap();
    let (mut compared, mut violations) = (0, 0);
    for row in report.rows.iter().filter(|r| r.from < r.to) {
        let Some(srgbm) = row.srgbm_years else { continue };
        compared += 1;
        let discrete_years = discrete.get(row.from - 1, row.to - 1) * m.delta;
        if row.tmfpt_years > srgbm || discrete_years > srgbm {
            violations += 1;
        }
    }
    let row1_max = (0..10).max_by(|&a, &b| m.get(0, a).total_cmp(&m.get(0, b))).unwrap() + 1;
    outcome(
        dominant && corners && violations == 0,
        format!(
            "diagonally dominant {dominant}, corner persistence {corners} (row 1 peaks at decile {row1_max}); \
             TMFPT above srGBM MFPT in {violations} of {compared} upward moves"
        ),
    )
}

fn c9_self_fit() -> Outcome {
    let truth = fig3();
    let sim = SimConfig {
        dt: 0.02,
        n_trajectories: 100_000,
        seed: 90,
        ..Default::default()
    };
    let a_emp = model_matrix(&truth, 10, 10.0, 0.0, &sim).unwrap();
    let bounds = ParamBounds {
        mu: (0.05, 0.15),
        sigma2: (0.01, 0.05),
        r: (0.02, 0.06),
    };
    let config = MatrixFitConfig {
        sim: SimConfig { seed: 9, ..sim },
        ..Default::default()
    };
    let t = Instant::now();
    let fit = match fit_srgbm_to_matrix(&a_emp, &bounds, &config) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let got = [fit.params.mu, fit.params.sigma2, fit.params.r];
    let want = [truth.mu, truth.sigma2, truth.r];
    let within = (0..3).all(|i| (got[i] - want[i]).abs() <= fit.grid_spacing[i]);
    outcome(
        within && fit.explained_variance >= 0.99,
        format!(
            "recovered ({:.4}, {:.4}, {:.4}) vs ({:.3}, {:.3}, {:.3}), grid spacing ({:.3}, {:.3}, {:.3}), R^2 = {:.4}, {} evaluations, {:.0} s",
            got[0],
            got[1],
            got[2],
            want[0],
            want[1],
            want[2],
            fit.grid_spacing[0],
            fit.grid_spacing[1],
            fit.grid_spacing[2],
            fit.explained_variance,
            fit.evaluations,
            t.elapsed().as_secs_f64()
        ),
    )
}

fn c10_stationary_tail() -> Outcome {
    let p = fig3();
    let horizon = 150.0;
    let config = SimConfig {
        dt: 0.02,
        n_trajectories: 100_000,
        horizon,
        seed: 10,
        ..Default::default()
    };
    let h = stationary_histogram(&p, &config).unwrap();
    // Above the reset income, and below the reach of workers never reset.
    let (lo, hi) = (1.5 * p.x_r, p.x_r * ((p.mu - 0.5 * p.sigma2) * horizon / 2.0).exp());
    let expect = -(tail_alpha(&p).unwrap() + 1.0);
    match h.tail_slope(lo, hi, 30) {
        Some(slope) => outcome(
            (slope - expect).abs() <= 0.1,
            format!("slope {slope:.4} vs {expect:.4} over [{lo:.2}, {hi:.1}]"),
        ),
        None => outcome(false, "too few populated bins for a slope"),
    }
}

fn c11_coverage() -> Outcome {
    let truth = SrgbmParams::new(0.02, 0.02, 0.04, 1.0).unwrap();
    let series = synthetic_series(2000, &[truth; 20], 0.01, 0.1).unwrap();
    let config = FitConfig::default();
    let t = Instant::now();
    let ps = match fit_series(&series, &config) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let elapsed = t.elapsed();
    let covered = (0..ps.len())
        .filter(|&i| {
            (ps.mu[i] - truth.mu).abs() <= 2.0 * ps.mu_se[i]
                && (ps.sigma2[i] - truth.sigma2).abs() <= 2.0 * ps.sigma2_se[i]
        })
        .count();
    let share = covered as f64 / ps.len() as f64;
    outcome(
        share >= 0.9 && elapsed <= Duration::from_secs(900),
        format!(
            "{covered}/{} years cover (mu, sigma2), {} reps, N = {}, {:.0} s",
            ps.len(),
            config.reps,
            config.n_workers,
            elapsed.as_secs_f64()
        ),
    )
}

fn c12_fraction_monotonicity() -> Outcome {
    let truth: Vec<SrgbmParams> = (0..20)
        .map(|i| SrgbmParams::new(0.01 + 0.003 * i as f64, 0.02 + 0.001 * i as f64, 0.04, 1.0).unwrap())
        .collect();
    let ps = ParamSeries::from_params((2000..2020).collect(), &truth, vec![0.0; 20], vec![0.0; 20], vec![0.0; 20])
        .unwrap();
    let sim = SimConfig {
        n_trajectories: 10_000,
        seed: 12,
        ..Default::default()
    };
    let targets = [0.5, 0.7, 0.9, 0.99];
    let mut by_window = Vec::new();
    for w in [20.0, 40.0] {
        let per_target: Vec<Vec<f64>> = targets
            .iter()
            .map(|&t| fraction_series(&ps, 0.1, t, w, &sim).unwrap().iter().map(|p| p.fraction).collect())
            .collect();
        by_window.push(per_target);
    }
    let mut window_ok = true;
    let mut target_ok = true;
    for year in 0..20 {
        for t in 0..targets.len() {
            window_ok &= by_window[1][t][year] >= by_window[0][t][year];
        }
        for w in &by_window {
            target_ok &= (1..targets.len()).all(|t| w[t][year] <= w[t - 1][year]);
        }
    }
    outcome(
        window_ok && target_ok,
        format!("20 years x {} targets: 40y >= 20y {window_ok}, decreasing in target {target_ok}", targets.len()),
    )
}

fn cli(dir: &Path, args: &[&str]) -> Result<Vec<std::path::PathBuf>, String> {
    let mut full = vec!["srgbm", "--out"];
    let out = dir.to_str().unwrap();
    full.push(out);
    full.extend_from_slice(args);
    let parsed = Cli::try_parse_from(&full).map_err(|e| e.to_string())?;
    run(&parsed).map(|s| s.outputs).map_err(|e| e.to_string())
}

fn c13_replay() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let truth: Vec<SrgbmParams> = (0..3).map(|_| SrgbmParams::new(0.02, 0.02, 0.04, 1.0).unwrap()).collect();
    let series = root.join("series.csv");
    write_observed_series(
        &series,
        &synthetic_series(2000, &truth, 0.01, 0.1).unwrap(),
        &Metadata::new("input", 0, serde_json::Value::Null),
    )
    .unwrap();
    let matrix = root.join("m").join("matrix.csv");
    let (series, matrix) = (series.to_str().unwrap(), matrix.to_str().unwrap());
    let runs: Vec<(&str, Vec<&str>)> = vec![
        ("mfpt", vec!["mfpt", "--r-grid", "0:0.2:11", "--moments", "2"]),
        ("simulate", vec!["--n", "3000", "simulate", "--y", "3"]),
        ("fraction", vec!["--n", "3000", "fraction", "--y", "3"]),
        ("optimal-rate", vec!["optimal-rate", "--mu", "0.01"]),
        ("m", vec!["--n", "5000", "--dt", "0.05", "tmatrix", "--k", "5"]),
        ("tmfpt", vec!["tmfpt", "--matrix", matrix]),
        ("fit-matrix", vec!["--n", "2000", "--dt", "0.1", "fit-matrix", "--matrix", matrix, "--grid", "2"]),
        (
            "fit-series",
            vec!["--n", "1000", "--reps", "2", "--dt", "0.05", "fit-series", "--series", series, "--draws", "20", "--fraction-n", "500"],
        ),
        ("gap-report", vec!["--n", "5000", "--dt", "0.05", "gap-report", "--k", "5"]),
    ];
    let mut compared = 0;
    for (name, args) in runs {
        let first = root.join(name);
        let mut a = vec!["--threads", "1", "--seed", "13"];
        a.extend(args);
        let outputs = match cli(&first, &a) {
            Ok(o) => o,
            Err(e) => return outcome(false, format!("{name}: {e}")),
        };
        let again = root.join(format!("{name}-replay"));
        let from = outputs[0].to_str().unwrap().to_string();
        let replayed = match cli(&again, &["--threads", "3", "replay", "--from", &from]) {
            Ok(o) => o,
            Err(e) => return outcome(false, format!("{name} replay: {e}")),
        };
        if replayed.len() != outputs.len() {
            return outcome(false, format!("{name}: {} outputs, replay wrote {}", outputs.len(), replayed.len()));
        }
        for (x, y) in outputs.iter().zip(&replayed) {
            if artifact_body(x).unwrap() != artifact_body(y).unwrap() {
                return outcome(false, format!("{name}: {} differs from its replay", x.display()));
            }
            compared += 1;
        }
    }
    outcome(true, format!("9 subcommands, {compared} artifacts identical under 1 vs 3 threads"))
}

type Criterion = (usize, &'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        (1, "analytic vs Monte Carlo MFPT", c1_analytic_vs_mc),
        (2, "characteristic roots", c2_characteristic_roots),
        (3, "tail exponent identity", c3_alpha_identity),
        (4, "reset-free limit", c4_reset_free_limit),
        (5, "deterministic drift hitting times", c5_deterministic_drift),
        (6, "optimal-rate trends", c6_optimal_rate_trends),
        (7, "TMFPT oracles", c7_tmfpt_oracles),
        (8, "srGBM decile matrix structure", c8_matrix_structure),
        (9, "Frobenius self-fit", c9_self_fit),
        (10, "stationary tail slope", c10_stationary_tail),
        (11, "parameter-recovery coverage", c11_coverage),
        (12, "fraction monotonicity", c12_fraction_monotonicity),
        (13, "replay reproducibility", c13_replay),
    ];
    let only: Option<Vec<usize>> = std::env::var("SRGBM_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let mut unexpected = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let expected = EXPECTED_FAILURES.contains(&id);
        let tag = match (o.pass, expected) {
            (true, _) => "PASS",
            (false, true) => "FAIL (expected)",
            (false, false) => "FAIL",
        };
        if !o.pass && !expected {
            unexpected += 1;
        }
        println!("[{tag}] {id:>2} {name}: {} [{:.1} s]", o.detail, t.elapsed().as_secs_f64());
    }
    if unexpected > 0 {
        println!("{unexpected} criterion/criteria failed");
        std::process::exit(1);
    }
}
