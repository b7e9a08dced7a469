//! The four single-sample estimators on one cohort, with correctly
//! specified and main-effects nuisance models.
//!
//! ```text
//! cargo run --release --example single_sample_analysis
//! ```

use dr_crossfit::dgm::{generate_sample_seeded, Mechanism};
use dr_crossfit::estimators::{aipw, bootstrap_se, g_computation_estimate, ipw, tmle, AceEstimate};
use dr_crossfit::nuisance::{fit_nuisance, Bounds, NuisanceSpec};
use dr_crossfit::rng::rng_from_seed;
use dr_crossfit::simharness::{gcomp_refit, oracle_truth};

fn show(e: &AceEstimate, truth: f64) {
    println!(
        "  {:<6} {:+.4}  se {:.4}  95% CI [{:+.4}, {:+.4}]{}",
        e.method.label(),
        e.psi,
        e.se,
        e.ci_lower,
        e.ci_upper,
        if e.covers(truth) {
            ""
        } else {
            "  (misses truth)"
        }
    );
}

fn main() -> dr_crossfit::Result<()> {
    let mechanism = Mechanism::STATIN;
    let data = generate_sample_seeded(3000, mechanism, 7)?.dataset();
    let truth = oracle_truth(1_000_000, mechanism, 1)?;
    let bounds = Bounds::default();
    println!("true ACE {truth:+.4}");

    for spec in [NuisanceSpec::correct(), NuisanceSpec::main_effects()] {
        println!("\n{} nuisance models:", spec.label());
        let scores = fit_nuisance(&spec, &data, mechanism, &mut rng_from_seed(1))?
            .score(&data)?
            .bounded(&bounds);
        if scores.clip_count > 0 {
            println!("  ({} predictions moved to the bounds)", scores.clip_count);
        }

        // g-computation has no closed-form variance here: bootstrap it.
        let boot = bootstrap_se(&data, 100, 2, |resample, rng| {
            gcomp_refit(&spec, resample, &bounds, rng)
        })?;
        show(&g_computation_estimate(&scores, &boot)?, truth);
        show(&ipw(&data, &scores.pi, false)?, truth);
        show(&aipw(&data, &scores)?, truth);
        let (fluctuation, est) = tmle(&data, &scores)?;
        show(&est, truth);
        println!(
            "  tmle targeting: epsilon {:+.2e} after {} Newton steps, score {:.1e}",
            fluctuation.epsilon, fluctuation.iterations, fluctuation.score
        );
    }
    Ok(())
}
