//! Reruns the double cross-fit on one dataset with fresh partitions and
//! shows how the spread of the estimate shrinks as partitions are added.
//!
//! ```text
//! cargo run --release --example partition_stability
//! ```

use dr_crossfit::crossfit::{Aggregation, DrEstimator};
use dr_crossfit::dgm::{generate_sample_seeded, Mechanism};
use dr_crossfit::nuisance::{Bounds, NuisanceSpec};
use dr_crossfit::simharness::{stability_study, write_stability_csv};

fn main() -> dr_crossfit::Result<()> {
    let data = generate_sample_seeded(3000, Mechanism::STATIN, 13)?.dataset();
    let rows = stability_study(
        &data,
        &NuisanceSpec::correct(),
        Mechanism::STATIN,
        DrEstimator::Tmle,
        &[1, 5, 25, 100],
        20,
        Aggregation::Median,
        &Bounds::default(),
        7,
    )?;
    write_stability_csv(&rows, std::io::stdout())?;

    println!();
    for r in &rows {
        let bar = "#".repeat((r.iqr * 20_000.0).round() as usize);
        println!("p = {:>3}  IQR {:.5}  {bar}", r.p, r.iqr);
    }
    Ok(())
}
