//! Each base learner on its own, scored on held-out data from a curved
//! logistic surface.
//!
//! ```text
//! cargo run --release --example learners
//! ```

use dr_crossfit::data::FeatureMatrix;
use dr_crossfit::dgm::expit;
use dr_crossfit::learners::LearnerSpec;
use dr_crossfit::rng::{rng_from_seed, SimRng};
use dr_crossfit::superlearner::log_loss;
use rand::Rng;

fn draw(n: usize, rng: &mut SimRng) -> (FeatureMatrix, Vec<f64>) {
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random::<f64>() * 4.0 - 2.0;
        let b: f64 = rng.random();
        let flag = f64::from(u8::from(rng.random::<f64>() < 0.3));
        y.push(f64::from(u8::from(
            rng.random::<f64>() < expit(a * a - 1.5 + b + flag),
        )));
        rows.push(vec![a, b, flag]);
    }
    (
        FeatureMatrix::from_rows(&["a", "b", "flag"], rows).expect("finite draws"),
        y,
    )
}

fn main() -> dr_crossfit::Result<()> {
    let mut rng = rng_from_seed(1);
    let (train_x, train_y) = draw(2000, &mut rng);
    let (test_x, test_y) = draw(2000, &mut rng);

    let learners = [
        ("empirical mean", LearnerSpec::EmpiricalMean),
        ("logistic", LearnerSpec::logistic()),
        (
            "gam, 4 splines",
            LearnerSpec::Gam {
                n_splines: 4,
                ridge_penalty: 0.6,
            },
        ),
        (
            "gam, 6 splines",
            LearnerSpec::Gam {
                n_splines: 6,
                ridge_penalty: 0.6,
            },
        ),
        (
            "forest, 100 trees",
            LearnerSpec::RandomForest {
                n_trees: 100,
                min_leaf: 20,
            },
        ),
        (
            "net, 4 hidden",
            LearnerSpec::NeuralNet {
                hidden: 4,
                epochs: 500,
                learning_rate: 1.0,
            },
        ),
    ];
    println!("{:<20}{:>16}", "learner", "test log-loss");
    for (name, spec) in learners {
        let fitted = spec.fit(&train_x, &train_y, &mut rng_from_seed(2))?;
        let pred: Vec<f64> = fitted
            .predict_prob(&test_x)?
            .into_iter()
            .map(|p| p.clamp(1e-6, 1.0 - 1e-6))
            .collect();
        println!("{name:<20}{:>16.4}", log_loss(&pred, &test_y));
    }
    // The logistic model is linear in `a` and cannot follow the a² term.
    Ok(())
}
