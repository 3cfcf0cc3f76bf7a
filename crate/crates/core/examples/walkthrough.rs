//! End-to-end tour on synthetic data.
//!
//! Part one tabulates the MFPT against the resetting rate for a few drifts
//! and the optimal rate as drift and volatility vary. Part two simulates the
//! decile mobility matrix of a model economy, computes its first-passage
//! times and compares them with the closed form.
//!
//! ```text
//! cargo run --release -p srgbm-core --example walkthrough
//! ```

use srgbm_core::mobility::mfpt_gap_report;
use srgbm_core::{mfpt, optimal_resetting_rate, tail_alpha, tmfpt, FptQuery, SimConfig, SrgbmParams};

fn main() -> srgbm_core::Result<()> {
    let query = FptQuery::new(1.0, 10.0)?;

    println!("MFPT (years) from x0 = x_r = 1 to y = 10, sigma2 = 0.03");
    let rates = [0.0, 0.01, 0.02, 0.05, 0.1, 0.2];
    print!("{:>6}", "mu");
    for r in rates {
        print!("{:>12}", format!("r={r}"));
    }
    println!();
    for mu in [0.0, 0.02, 0.05, 0.1] {
        print!("{mu:>6}");
        for r in rates {
            match mfpt(&query, &SrgbmParams::new(mu, 0.03, r, 1.0)?) {
                Ok(t) => print!("{t:>12.2}"),
                Err(_) => print!("{:>12}", "inf"),
            }
        }
        println!();
    }

    println!("\noptimal rate r* against mu (sigma2 = 0.03)");
    for i in 1..=12 {
        let mu = 0.01 * i as f64;
        let best = optimal_resetting_rate(&query, mu, 0.03, 1.0, 1.0)?;
        println!("  mu = {mu:.2}  r* = {:.4}  MFPT = {:.2}", best.rate, best.mfpt);
    }
    println!("\noptimal rate r* against sigma2 (mu = 0.02)");
    for i in (1..=20).step_by(3) {
        let s2 = 0.01 * i as f64;
        let best = optimal_resetting_rate(&query, 0.02, s2, 1.0, 1.0)?;
        println!("  sigma2 = {s2:.2}  r* = {:.4}  MFPT = {:.2}", best.rate, best.mfpt);
    }

    let params = SrgbmParams::new(0.10, 0.03, 0.041, 1.0)?;
    println!("\nmodel economy mu = 0.10, sigma2 = 0.03, r = 0.041: tail exponent {:.4}", tail_alpha(&params)?);
    let sim = SimConfig {
        dt: 0.02,
        n_trajectories: 50_000,
        seed: 1,
        ..Default::default()
    };
    let report = mfpt_gap_report(&params, 10, 10.0, &sim)?;
    println!("decile transition matrix over 10 years:");
    for row in report.matrix.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", cells.join(" "));
    }
    let discrete = tmfpt(&report.matrix)?;
    println!("\nfrom decile 1: closed form vs matrix first-passage years");
    println!("{:>4}{:>12}{:>12}{:>12}", "to", "srGBM", "discrete", "continuous");
    for to in 2..=10 {
        let row = report.get(1, to).expect("every pair is reported");
        let srgbm = row.srgbm_years.map_or("-".to_string(), |v| format!("{v:.1}"));
        println!(
            "{to:>4}{srgbm:>12}{:>12.1}{:>12.1}",
            discrete.get(0, to - 1) * report.matrix.delta,
            row.tmfpt_years
        );
    }
    Ok(())
}
