use dr_crossfit::config::{CampaignConfig, NuisanceChoice};
use dr_crossfit::crossfit::{run_crossfit, DrEstimator};
use dr_crossfit::dgm::{generate_sample_seeded, Mechanism};
use dr_crossfit::estimators::{aipw, Method};
use dr_crossfit::nuisance::{fit_nuisance, NuisanceSpec};
use dr_crossfit::rng::{derive_seed, rng_from_seed, tags};
use dr_crossfit::simharness::run_campaign;

fn small_config() -> CampaignConfig {
    let mut c = CampaignConfig::desk();
    c.n = 1000;
    c.replicates = 12;
    c.oracle_size = 200_000;
    c.partitions = 3;
    c.bootstrap = 10;
    c.nuisances = vec![NuisanceChoice::Correct, NuisanceChoice::MainEffects];
    c
}

#[test]
fn null_mechanism_has_no_effect_to_find() {
    let mut config = small_config();
    config.mechanism = Mechanism::NULL;
    config.estimators = vec![
        Method::GComputation,
        Method::Aipw,
        Method::Tmle,
        Method::DcTmle,
    ];
    config.nuisances = vec![NuisanceChoice::Correct];
    let result = run_campaign(&config, 5).unwrap();
    assert_eq!(result.truth, 0.0);
    for row in &result.rows {
        let m = row.metrics.as_ref().unwrap();
        assert_eq!(row.failures, 0);
        // three Monte Carlo standard errors of the mean estimate
        let mc_se = m.ese / (row.n_used as f64).sqrt();
        assert!(
            m.bias.abs() < 3.0 * mc_se,
            "{:?}: bias {} (MC se {mc_se})",
            row.estimator,
            m.bias
        );
    }
}

#[test]
fn campaigns_are_reproducible() {
    let mut config = small_config();
    config.replicates = 4;
    let a = run_campaign(&config, 77).unwrap();
    let b = run_campaign(&config, 77).unwrap();
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.truth, b.truth);
    let c = run_campaign(&config, 78).unwrap();
    assert_ne!(a.rows, c.rows);
}

/// Every cell of a replicate is computed on the same sample; recomputing
/// two cells by hand from the replicate's seed streams reproduces them.
#[test]
fn cells_share_each_replicate_sample() {
    let mut config = small_config();
    config.replicates = 3;
    config.estimators = vec![Method::Aipw, Method::DcAipw];
    let seed = 31;
    let result = run_campaign(&config, seed).unwrap();
    for r in 0..config.replicates {
        let data = generate_sample_seeded(
            config.n,
            config.mechanism,
            derive_seed(seed, tags::SAMPLE, r as u64),
        )
        .unwrap()
        .dataset();
        for (k, cell) in result.cells.iter().enumerate() {
            let spec = match cell.nuisance {
                NuisanceChoice::Correct => NuisanceSpec::correct(),
                _ => NuisanceSpec::main_effects(),
            };
            let expected = match cell.estimator {
                Method::Aipw => {
                    let mut rng = rng_from_seed(derive_seed(seed, tags::NUISANCE, r as u64));
                    let scores = fit_nuisance(&spec, &data, config.mechanism, &mut rng)
                        .unwrap()
                        .score(&data)
                        .unwrap()
                        .bounded(&config.bounds);
                    aipw(&data, &scores).unwrap().psi
                }
                _ => {
                    run_crossfit(
                        &data,
                        &spec,
                        config.mechanism,
                        DrEstimator::Aipw,
                        config.partitions,
                        config.aggregation,
                        &config.bounds,
                        derive_seed(seed, tags::CROSSFIT, r as u64),
                    )
                    .unwrap()
                    .psi
                }
            };
            let got = result.replicates[r][k].as_ref().unwrap().psi;
            assert_eq!(got, expected, "replicate {r}, cell {cell:?}");
        }
    }
}
