use dr_crossfit::data::FeatureMatrix;
use dr_crossfit::dgm::{expit, generate_sample_seeded, Mechanism};
use dr_crossfit::learners::LearnerSpec;
use dr_crossfit::nuisance::{fit_treatment, NuisanceSpec};
use dr_crossfit::rng::{rng_from_seed, SimRng};
use dr_crossfit::superlearner::{fit_superlearner, log_loss, LearnerLibrary, PREDICTION_CLIP};
use proptest::prelude::*;
use rand::Rng;

fn logistic_data(n: usize, seed: u64) -> (FeatureMatrix, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let mut rows = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = rng.random::<f64>() * 4.0 - 2.0;
        let b: f64 = rng.random();
        y.push(f64::from(u8::from(
            rng.random::<f64>() < expit(-0.5 + 1.5 * a - b),
        )));
        rows.push(vec![a, b]);
    }
    (FeatureMatrix::from_rows(&["a", "b"], rows).unwrap(), y)
}

fn quick_library() -> LearnerLibrary {
    LearnerLibrary::new(vec![
        ("mean", LearnerSpec::EmpiricalMean),
        ("logistic", LearnerSpec::logistic()),
        (
            "gam4",
            LearnerSpec::Gam {
                n_splines: 4,
                ridge_penalty: 0.6,
            },
        ),
        (
            "forest",
            LearnerSpec::RandomForest {
                n_trees: 5,
                min_leaf: 20,
            },
        ),
    ])
    .unwrap()
}

#[test]
fn correct_learner_dominates_the_mixture() {
    let (x, y) = logistic_data(5000, 1);
    let library = LearnerLibrary::new(vec![
        ("mean", LearnerSpec::EmpiricalMean),
        ("logistic", LearnerSpec::logistic()),
    ])
    .unwrap();
    let model = fit_superlearner(&library, &x, &y, 5, &mut rng_from_seed(2)).unwrap();
    assert!(model.weights[1] > 0.9, "{:?}", model.weights);
}

#[test]
fn single_learner_gets_all_the_weight() {
    let (x, y) = logistic_data(500, 3);
    let library = LearnerLibrary::new(vec![(
        "gam4",
        LearnerSpec::Gam {
            n_splines: 4,
            ridge_penalty: 0.6,
        },
    )])
    .unwrap();
    let model = fit_superlearner(&library, &x, &y, 5, &mut rng_from_seed(4)).unwrap();
    assert_eq!(model.weights, vec![1.0]);
    assert_eq!(Some(model.ensemble_cv_risk), model.cv_risk[0]);
}

#[test]
fn unit_weights_reproduce_that_learner() {
    let (x, y) = logistic_data(800, 5);
    let mut model = fit_superlearner(&quick_library(), &x, &y, 5, &mut rng_from_seed(6)).unwrap();
    for j in 0..model.weights.len() {
        model.weights = (0..model.weights.len())
            .map(|k| f64::from(u8::from(k == j)))
            .collect();
        let direct = model.learners[j]
            .as_ref()
            .unwrap()
            .predict_prob(&x)
            .unwrap();
        assert_eq!(
            model.predict(&x).unwrap(),
            direct,
            "learner {}",
            model.names[j]
        );
    }
}

#[test]
fn pure_noise_outcome_predicts_its_rate() {
    let mut rng = rng_from_seed(7);
    let n = 4000;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    let y: Vec<f64> = (0..n)
        .map(|_| f64::from(u8::from(rng.random::<f64>() < 0.4)))
        .collect();
    let x = FeatureMatrix::from_rows(&["a", "b"], rows).unwrap();
    let model = fit_superlearner(&quick_library(), &x, &y, 5, &mut rng_from_seed(8)).unwrap();
    let pred = model.predict(&x).unwrap();
    let rate = y.iter().sum::<f64>() / n as f64;
    assert!(
        pred.iter().all(|p| (p - rate).abs() < 0.1),
        "max deviation too large"
    );
    let mean = pred.iter().sum::<f64>() / n as f64;
    assert!((mean - rate).abs() < 0.01);
}

#[test]
fn treatment_super_learner_is_calibrated_on_the_cohort() {
    let data = generate_sample_seeded(3000, Mechanism::STATIN, 9)
        .unwrap()
        .dataset();
    let spec = NuisanceSpec::SuperLearner {
        library: LearnerLibrary::desk(),
        folds: 5,
    };
    let model = fit_treatment(&spec, &data, Mechanism::STATIN, &mut rng_from_seed(10)).unwrap();
    let pi = model.predict(&data).unwrap();
    let mean = pi.iter().sum::<f64>() / pi.len() as f64;
    assert!(
        (mean - data.treated_fraction()).abs() < 0.01,
        "{mean} vs {}",
        data.treated_fraction()
    );
    assert!((0.23..0.29).contains(&mean));
}

#[test]
fn failing_learner_is_dropped_with_a_warning() {
    let (x, y) = logistic_data(600, 11);
    let library = LearnerLibrary::new(vec![
        ("mean", LearnerSpec::EmpiricalMean),
        (
            "capped",
            LearnerSpec::Logistic {
                max_iter: 1,
                tol: 1e-8,
            },
        ),
        ("logistic", LearnerSpec::logistic()),
    ])
    .unwrap();
    let model = fit_superlearner(&library, &x, &y, 5, &mut rng_from_seed(12)).unwrap();
    assert_eq!(model.weights[1], 0.0);
    assert!(model.learners[1].is_none() && model.cv_risk[1].is_none());
    assert!(
        model.warnings.iter().any(|w| w.contains("capped")),
        "{:?}",
        model.warnings
    );
    assert!((model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-8);
}

#[test]
fn fitting_is_deterministic() {
    let (x, y) = logistic_data(400, 13);
    let fit = |rng: &mut SimRng| fit_superlearner(&quick_library(), &x, &y, 4, rng).unwrap();
    let a = fit(&mut rng_from_seed(1));
    let b = fit(&mut rng_from_seed(1));
    assert_eq!(a.weights, b.weights);
    assert_eq!(a.folds, b.folds);
    assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn weights_are_convex_and_never_worse_than_the_best_learner(seed in any::<u64>(), n in 200usize..800, k in 2usize..6) {
        let (x, y) = logistic_data(n, seed);
        let model = fit_superlearner(&quick_library(), &x, &y, k, &mut rng_from_seed(seed ^ 1)).unwrap();
        prop_assert!(model.weights.iter().all(|&w| w >= -1e-8));
        prop_assert!((model.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-8);
        let best = model.cv_risk.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(model.ensemble_cv_risk <= best + 1e-8, "{} > {}", model.ensemble_cv_risk, best);

        // the reported ensemble risk is the log-loss of the weighted out-of-fold predictions
        let mut mix = vec![0.0; n];
        for (w, col) in model.weights.iter().zip(&model.oof) {
            if let Some(col) = col {
                prop_assert!(col.iter().all(|&p| (PREDICTION_CLIP..=1.0 - PREDICTION_CLIP).contains(&p)));
                for (m, p) in mix.iter_mut().zip(col) {
                    *m += w * p;
                }
            }
        }
        prop_assert!((log_loss(&mix, &y) - model.ensemble_cv_risk).abs() < 1e-9);

        let pred = model.predict(&x).unwrap();
        prop_assert!(pred.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
