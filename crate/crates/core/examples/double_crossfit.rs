//! Double cross-fit AIPW and TMLE with super-learner nuisances: three-way
//! splits, discordant nuisance models, and median aggregation over
//! partitions.
//!
//! ```text
//! cargo run --release --example double_crossfit -- [partitions]
//! ```

use dr_crossfit::crossfit::{run_crossfit_many, Aggregation, DrEstimator, ROTATION};
use dr_crossfit::dgm::{generate_sample_seeded, Mechanism};
use dr_crossfit::nuisance::{Bounds, NuisanceSpec};
use dr_crossfit::superlearner::LearnerLibrary;

fn main() -> dr_crossfit::Result<()> {
    let p: usize = std::env::args()
        .nth(1)
        .map_or(10, |s| s.parse().expect("partitions must be an integer"));
    let data = generate_sample_seeded(3000, Mechanism::STATIN, 5)?.dataset();
    let spec = NuisanceSpec::SuperLearner {
        library: LearnerLibrary::desk(),
        folds: 5,
    };

    for (s, (g, e)) in ROTATION.iter().enumerate() {
        println!("split {s}: propensity from split {g}, outcome model from split {e}");
    }

    // Both estimators reuse the same partitions and nuisance fits.
    let results = run_crossfit_many(
        &data,
        &spec,
        Mechanism::STATIN,
        &[DrEstimator::Aipw, DrEstimator::Tmle],
        p,
        Aggregation::Median,
        &Bounds::default(),
        42,
    )?;

    for r in &results {
        println!(
            "\n{} over {} partitions ({} failed):",
            r.estimator.label(),
            r.p(),
            r.failed_partitions
        );
        for (k, part) in r.partitions.iter().enumerate().take(5) {
            let splits: Vec<String> = part
                .splits
                .iter()
                .map(|s| format!("{:+.4}", s.psi))
                .collect();
            println!(
                "  partition {k}: ACE {:+.4} from splits [{}]",
                part.ace,
                splits.join(", ")
            );
        }
        if r.partitions.len() > 5 {
            println!("  ...");
        }
        println!(
            "  median ACE {:+.4}, se {:.4}, 95% CI [{:+.4}, {:+.4}], {} bounded predictions",
            r.psi,
            r.se,
            r.ci_lower,
            r.ci_upper,
            r.clip_count()
        );
    }
    Ok(())
}
