//! Fits the workstation learner library to the outcome of one cohort and
//! shows how the cross-validated ensemble weights its members.
//!
//! ```text
//! cargo run --release --example super_learner
//! ```

use dr_crossfit::data::FeatureMatrix;
use dr_crossfit::dgm::{generate_sample_seeded, Mechanism};
use dr_crossfit::learners::LearnerSpec;
use dr_crossfit::rng::rng_from_seed;
use dr_crossfit::superlearner::{fit_superlearner, log_loss, LearnerLibrary};

fn main() -> dr_crossfit::Result<()> {
    let data = generate_sample_seeded(3000, Mechanism::STATIN, 11)?.dataset();
    let x = FeatureMatrix::from_rows(
        &["X", "L", "A", "R", "D"],
        data.rows()
            .iter()
            .map(|o| vec![f64::from(o.x), o.z.l, o.z.a, o.z.r, o.z.d]),
    )?;
    let y = data.outcome();

    let model = fit_superlearner(&LearnerLibrary::desk(), &x, &y, 5, &mut rng_from_seed(3))?;
    println!("{:<16}{:>12}{:>10}", "learner", "CV log-loss", "weight");
    for ((name, risk), w) in model.names.iter().zip(&model.cv_risk).zip(&model.weights) {
        let risk = risk.map_or("dropped".to_string(), |r| format!("{r:.5}"));
        println!("{name:<16}{risk:>12}{w:>10.3}");
    }
    println!("{:<16}{:>12.5}", "ensemble", model.ensemble_cv_risk);
    for w in &model.warnings {
        println!("warning: {w}");
    }

    let fitted = model.predict(&x)?;
    println!(
        "\nin-sample log-loss {:.5}, mean prediction {:.4} vs outcome rate {:.4}",
        log_loss(&fitted, &y),
        fitted.iter().sum::<f64>() / fitted.len() as f64,
        y.iter().sum::<f64>() / y.len() as f64
    );

    // Libraries are plain data: add or drop members freely.
    let custom = LearnerLibrary::new(vec![
        ("logistic", LearnerSpec::logistic()),
        (
            "wide_gam",
            LearnerSpec::Gam {
                n_splines: 8,
                ridge_penalty: 2.0,
            },
        ),
    ])?;
    let small = fit_superlearner(&custom, &x, &y, 5, &mut rng_from_seed(3))?;
    println!("custom library weights: {:?}", small.weights);
    Ok(())
}
