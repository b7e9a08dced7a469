//! Draws one synthetic statin cohort and prints its composition by arm.
//!
//! ```text
//! cargo run --example generate_cohort -- [n] [seed]
//! ```

use dr_crossfit::dgm::{generate_sample_seeded, GeneratedRow, Mechanism};

fn arm_mean(rows: &[GeneratedRow], x: u8, f: impl Fn(&GeneratedRow) -> f64) -> f64 {
    let values: Vec<f64> = rows.iter().filter(|r| r.x == x).map(f).collect();
    values.iter().sum::<f64>() / values.len() as f64
}

fn main() -> dr_crossfit::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args
        .next()
        .map_or(3000, |s| s.parse().expect("n must be an integer"));
    let seed: u64 = args
        .next()
        .map_or(2026, |s| s.parse().expect("seed must be an integer"));

    let sample = generate_sample_seeded(n, Mechanism::STATIN, seed)?;
    let rows = &sample.rows;
    let treated = rows.iter().filter(|r| r.x == 1).count();
    println!(
        "{n} individuals, seed {seed}: {treated} on statins ({:.1}%)\n",
        100.0 * treated as f64 / n as f64
    );

    println!("{:<20}{:>10}{:>12}", "", "statin", "no statin");
    let line = |label: &str, f: &dyn Fn(&GeneratedRow) -> f64| {
        println!(
            "{label:<20}{:>10.2}{:>12.2}",
            arm_mean(rows, 1, f),
            arm_mean(rows, 0, f)
        );
    };
    line("age", &|r| r.covariates.a);
    line("LDL (mg/dL)", &|r| r.covariates.l.exp());
    line("diabetes (%)", &|r| 100.0 * r.covariates.d);
    line("risk score", &|r| r.covariates.r);
    line("ASCVD (%)", &|r| 100.0 * f64::from(r.y));

    // Both potential outcomes are known in simulation.
    let sample_ace = rows
        .iter()
        .map(|r| f64::from(r.y1) - f64::from(r.y0))
        .sum::<f64>()
        / n as f64;
    println!("\nsample mean of Y1 - Y0: {sample_ace:.4}");

    println!("\nestimator view, first rows:");
    let mut csv = Vec::new();
    sample.write_csv(&mut csv, false).expect("write to memory");
    for l in String::from_utf8(csv).expect("utf-8").lines().take(6) {
        println!("  {l}");
    }
    Ok(())
}
