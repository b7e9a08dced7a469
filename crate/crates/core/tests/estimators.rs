use dr_crossfit::data::{Confounders, Dataset, Observation};
use dr_crossfit::dgm::{generate_sample_seeded, Mechanism};
use dr_crossfit::estimators::{aipw, bootstrap_se, ipw, tmle, TARGETING_MAX_ITER};
use dr_crossfit::nuisance::{fit_nuisance, Bounds, NuisanceScores, NuisanceSpec};
use dr_crossfit::rng::rng_from_seed;
use dr_crossfit::simharness::gcomp_refit;
use proptest::prelude::*;

fn binary_d_row(d: u8, x: u8, y: u8) -> Observation {
    Observation {
        z: Confounders {
            l: 4.8,
            a: 55.0,
            r: 0.1,
            d: f64::from(d),
        },
        x,
        y,
    }
}

/// Datasets with one binary confounder in which every (D, X) cell holds
/// both outcomes, so saturated fits are interior.
fn saturated_dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec((0u8..2, 0u8..2, 0u8..2), 40..200).prop_map(|draws| {
        let mut rows: Vec<Observation> = Vec::new();
        for d in 0..2 {
            for x in 0..2 {
                for y in 0..2 {
                    rows.push(binary_d_row(d, x, y));
                }
            }
        }
        rows.extend(draws.into_iter().map(|(d, x, y)| binary_d_row(d, x, y)));
        Dataset::new(rows).unwrap()
    })
}

/// Standardization by hand: Σ_d P(D=d) (Ȳ(X=1,D=d) − Ȳ(X=0,D=d)).
fn standardized(data: &Dataset) -> f64 {
    let n = data.len() as f64;
    let mut total = 0.0;
    for d in [0.0, 1.0] {
        let cell = |x: u8| {
            let ys: Vec<f64> = data
                .rows()
                .iter()
                .filter(|o| o.z.d == d && o.x == x)
                .map(|o| f64::from(o.y))
                .collect();
            ys.iter().sum::<f64>() / ys.len() as f64
        };
        let share = data.rows().iter().filter(|o| o.z.d == d).count() as f64 / n;
        total += share * (cell(1) - cell(0));
    }
    total
}

fn saturated_scores(data: &Dataset) -> NuisanceScores {
    let mut rng = rng_from_seed(7);
    fit_nuisance(
        &NuisanceSpec::saturated(),
        data,
        Mechanism::STATIN,
        &mut rng,
    )
    .unwrap()
    .score(data)
    .unwrap()
    .bounded(&Bounds::default())
}

fn dgm_scores(n: usize, seed: u64, spec: &NuisanceSpec) -> (Dataset, NuisanceScores) {
    let data = generate_sample_seeded(n, Mechanism::STATIN, seed)
        .unwrap()
        .dataset();
    let mut rng = rng_from_seed(seed ^ 0xabc);
    let scores = fit_nuisance(spec, &data, Mechanism::STATIN, &mut rng)
        .unwrap()
        .score(&data)
        .unwrap()
        .bounded(&Bounds::default());
    (data, scores)
}

fn permuted(data: &Dataset, scores: &NuisanceScores, order: &[usize]) -> (Dataset, NuisanceScores) {
    let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
    (
        data.subset(order),
        NuisanceScores {
            pi: pick(&scores.pi),
            m1: pick(&scores.m1),
            m0: pick(&scores.m0),
            provenance: scores.provenance.clone(),
            clip_count: scores.clip_count,
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn saturated_estimators_agree_with_standardization(data in saturated_dataset()) {
        let truth = standardized(&data);
        let scores = saturated_scores(&data);
        let gcomp = dr_crossfit::estimators::g_computation(&scores.m1, &scores.m0).unwrap();
        let ipw_est = ipw(&data, &scores.pi, false).unwrap();
        let aipw_est = aipw(&data, &scores).unwrap();
        let (_, tmle_est) = tmle(&data, &scores).unwrap();
        for (label, value) in [("gcomp", gcomp), ("ipw", ipw_est.psi), ("aipw", aipw_est.psi), ("tmle", tmle_est.psi)] {
            prop_assert!((value - truth).abs() < 1e-10, "{label}: {value} vs {truth}");
        }
    }

    #[test]
    fn aipw_influence_curve_sums_to_zero(seed in 0u64..1000) {
        let (data, scores) = dgm_scores(400, seed, &NuisanceSpec::main_effects());
        let est = aipw(&data, &scores).unwrap();
        let sum: f64 = est.ic.as_ref().unwrap().iter().sum();
        prop_assert!(sum.abs() <= 1e-10 * data.len() as f64, "Σ IC = {sum}");
    }

    #[test]
    fn tmle_solves_its_score_equation(seed in 0u64..1000) {
        let (data, scores) = dgm_scores(400, seed, &NuisanceSpec::main_effects());
        let (fit, est) = tmle(&data, &scores).unwrap();
        prop_assert!(fit.score.abs() <= 1e-6, "score {}", fit.score);
        let sum: f64 = est.ic.as_ref().unwrap().iter().sum();
        prop_assert!(sum.abs() <= 1e-6);
        prop_assert!(fit.iterations <= TARGETING_MAX_ITER);
    }

    #[test]
    fn aipw_with_null_outcome_model_is_ipw(seed in 0u64..1000) {
        let (data, mut scores) = dgm_scores(300, seed, &NuisanceSpec::main_effects());
        scores.m1.iter_mut().for_each(|m| *m = 0.0);
        scores.m0.iter_mut().for_each(|m| *m = 0.0);
        let a = aipw(&data, &scores).unwrap();
        let i = ipw(&data, &scores.pi, false).unwrap();
        prop_assert!((a.psi - i.psi).abs() < 1e-12);
    }

    #[test]
    fn estimates_do_not_depend_on_row_order(seed in 0u64..1000, shift in 1usize..299) {
        let (data, scores) = dgm_scores(300, seed, &NuisanceSpec::main_effects());
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.rotate_left(shift);
        order.reverse();
        let (pdata, pscores) = permuted(&data, &scores, &order);
        let a = aipw(&data, &scores).unwrap();
        let pa = aipw(&pdata, &pscores).unwrap();
        prop_assert!((a.psi - pa.psi).abs() < 1e-12);
        prop_assert!((a.se - pa.se).abs() < 1e-12);
        let (_, t) = tmle(&data, &scores).unwrap();
        let (_, pt) = tmle(&pdata, &pscores).unwrap();
        prop_assert!((t.psi - pt.psi).abs() < 1e-10);
        let i = ipw(&data, &scores.pi, false).unwrap();
        let pi = ipw(&pdata, &pscores.pi, false).unwrap();
        prop_assert!((i.psi - pi.psi).abs() < 1e-12);
    }
}

#[test]
fn tmle_fluctuation_preserves_probability_range() {
    let (data, scores) = dgm_scores(1000, 3, &NuisanceSpec::correct());
    let (fit, _) = tmle(&data, &scores).unwrap();
    assert!(fit
        .m1_star
        .iter()
        .chain(&fit.m0_star)
        .all(|&m| m > 0.0 && m < 1.0));
}

#[test]
fn bootstrap_standard_error_is_stable() {
    let data = generate_sample_seeded(3000, Mechanism::STATIN, 11)
        .unwrap()
        .dataset();
    let spec = NuisanceSpec::main_effects();
    let bounds = Bounds::default();
    let estimate =
        |d: &Dataset, rng: &mut dr_crossfit::rng::SimRng| gcomp_refit(&spec, d, &bounds, rng);
    let b200 = bootstrap_se(&data, 200, 5, estimate).unwrap();
    let b400 = bootstrap_se(&data, 400, 5, estimate).unwrap();
    assert_eq!(b200.failures, 0);
    assert!((0.010..0.025).contains(&b200.se), "se {}", b200.se);
    let change = (b400.se - b200.se).abs() / b200.se;
    assert!(change < 0.15, "{} vs {}", b200.se, b400.se);
}

#[test]
fn bootstrap_is_reproducible() {
    let data = generate_sample_seeded(500, Mechanism::STATIN, 12)
        .unwrap()
        .dataset();
    let spec = NuisanceSpec::main_effects();
    let bounds = Bounds::default();
    let estimate =
        |d: &Dataset, rng: &mut dr_crossfit::rng::SimRng| gcomp_refit(&spec, d, &bounds, rng);
    let a = bootstrap_se(&data, 30, 9, estimate).unwrap();
    let b = bootstrap_se(&data, 30, 9, estimate).unwrap();
    assert_eq!(a, b);
}
