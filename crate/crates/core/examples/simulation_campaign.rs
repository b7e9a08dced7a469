//! A small Monte Carlo campaign: every estimator under correct and
//! main-effects nuisance models, summarised as bias, RMSE, standard errors,
//! interval width and coverage.
//!
//! ```text
//! cargo run --release --example simulation_campaign -- [replicates]
//! ```

use dr_crossfit::config::{CampaignConfig, NuisanceChoice};
use dr_crossfit::simharness::{run_campaign_with_progress, write_metrics_csv};

fn main() -> dr_crossfit::Result<()> {
    let replicates: usize = std::env::args()
        .nth(1)
        .map_or(40, |s| s.parse().expect("replicates must be an integer"));

    // Start from the workstation preset and shrink it.
    let mut config = CampaignConfig::desk();
    config.replicates = replicates;
    config.oracle_size = 1_000_000;
    config.partitions = 5;
    config.bootstrap = 50;
    config.nuisances = vec![NuisanceChoice::Correct, NuisanceChoice::MainEffects];
    config.validate()?;

    let step = (replicates / 4).max(1);
    let result = run_campaign_with_progress(&config, 2024, &|done| {
        if done % step == 0 {
            eprintln!("{done}/{replicates} replicates");
        }
    })?;

    println!("true ACE {:+.5}\n", result.truth);
    write_metrics_csv(&result.rows, std::io::stdout())?;
    println!("\nconfiguration used:\n{}", config.to_toml_string());
    Ok(())
}
