//! Synthetic statin / ASCVD cohort generator.
//!
//! Covariates are drawn per individual in the order A → L → D → F → R,
//! followed by the treatment and both potential outcomes. The frailty F is
//! latent: it enters the risk score but is never part of the estimator view.
//!
//! The frailty noise term is placed inside the logistic link so that F stays
//! in (0, 1).
//!
//! The LDL indicator of the treatment model fires above `log(160)` by
//! default, giving about 26% treated with diabetes concentrated among the
//! treated (≈31% vs ≈1.5%). A 60 mg/dL threshold is on for essentially every
//! individual (L ≈ 4.9 > log 60 ≈ 4.09) and raises the treated fraction to
//! about 40%; set [`Mechanism::ldl_threshold`] to 60 for that variant.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::data::{Confounders, Dataset, Observation};
use crate::error::{Error, Result};
use crate::math::format_sig17;
pub use crate::math::{checked_expit, expit, logit};
use crate::rng::{derive_seed, rng_from_seed, tags, SimRng};

/// Covariates of one simulated individual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovariateRow {
    /// Age in years.
    pub a: f64,
    /// Natural-log LDL.
    pub l: f64,
    /// Diabetes indicator, 0 or 1.
    pub d: f64,
    /// Latent frailty in (0, 1).
    pub f: f64,
    /// Risk score in (0, 1).
    pub r: f64,
    /// Uniform-derived draw that determined the age.
    pub v: f64,
}

impl CovariateRow {
    pub fn confounders(&self) -> Confounders {
        Confounders {
            l: self.l,
            a: self.a,
            r: self.r,
            d: self.d,
        }
    }
}

/// Tunable parts of the mechanism.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mechanism {
    /// Zero every treatment coefficient of the outcome model (true ACE = 0).
    pub null_effect: bool,
    /// LDL (mg/dL, untransformed) above which the treatment model adds 0.973.
    pub ldl_threshold: f64,
}

impl Default for Mechanism {
    fn default() -> Self {
        Self::STATIN
    }
}

impl Mechanism {
    pub const STATIN: Mechanism = Mechanism {
        null_effect: false,
        ldl_threshold: 160.0,
    };
    pub const NULL: Mechanism = Mechanism {
        null_effect: true,
        ldl_threshold: 160.0,
    };
}

/// Maps the intermediate draw `v` to age.
pub fn age_from_v(v: f64) -> f64 {
    if v > 60.0 {
        75.0 - (30.0 * (v - 60.0)).sqrt()
    } else {
        v
    }
}

pub fn draw_covariates(n: usize, rng: &mut SimRng) -> Result<Vec<CovariateRow>> {
    let ldl_noise = Normal::new(100f64.ln(), 0.18).expect("valid normal");
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.random();
        let v = (55.0 * u + 80.0) / 2.0;
        let a = age_from_v(v);
        if a < 39.0 || !a.is_finite() {
            return Err(Error::Generation(format!("age {a} below 39 (v = {v})")));
        }
        let l = 0.005 * a + ldl_noise.sample(rng);
        let d_prob = expit(-4.23 + 0.03 * l - 0.02 * a + 0.0009 * a * a);
        let d = if rng.random::<f64>() < d_prob {
            1.0
        } else {
            0.0
        };
        let f = expit(-5.5 + 0.05 * (a - 20.0) + 0.001 * a * a + std_normal.sample(rng));
        let log_a = a.ln();
        let r = expit(
            4.299 + 3.501 * d - 2.07 * log_a + 0.051 * log_a * log_a + 4.090 * l - 1.04 * l * log_a
                + 0.01 * f,
        );
        rows.push(CovariateRow { a, l, d, f, r, v });
    }
    Ok(rows)
}

/// Pr(X = 1 | Z) under the treatment-assignment model.
pub fn treatment_prob(z: &Confounders, mechanism: Mechanism) -> f64 {
    let mut eta = -3.471 + 1.390 * z.d + 0.112 * z.l;
    if z.l > mechanism.ldl_threshold.ln() {
        eta += 0.973;
    }
    eta += -0.046 * (z.a - 30.0) + 0.003 * (z.a - 30.0).powi(2);
    if (0.05..0.075).contains(&z.r) {
        eta += 0.273;
    }
    if (0.075..0.2).contains(&z.r) {
        eta += 1.592;
    }
    if z.r >= 0.2 {
        eta += 2.461;
    }
    expit(eta)
}

/// Pr(Y^x = 1 | Z) under the outcome model.
pub fn outcome_prob(x: u8, z: &Confounders, mechanism: Mechanism) -> Result<f64> {
    if z.a < 39.0 {
        return Err(Error::Generation(format!(
            "outcome model requires age >= 39, got {}",
            z.a
        )));
    }
    let xf = if mechanism.null_effect {
        0.0
    } else {
        f64::from(x)
    };
    let mut eta = -6.250 - 0.75 * xf;
    if z.l < 130f64.ln() {
        eta += 0.35 * xf * (5.0 - z.l);
    }
    eta += 0.45 * (z.a - 39.0).sqrt() + 1.75 * z.d + 0.29 * (z.r + 1.0).exp();
    if z.l > 120f64.ln() {
        eta += 0.14 * z.l * z.l;
    }
    Ok(expit(eta))
}

/// One simulated individual with both potential outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratedRow {
    pub covariates: CovariateRow,
    pub x: u8,
    pub y0: u8,
    pub y1: u8,
    pub y: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSample {
    pub rows: Vec<GeneratedRow>,
    pub seed: Option<u64>,
}

impl GeneratedSample {
    /// Estimator view: (X, Y, Z) only.
    pub fn dataset(&self) -> Dataset {
        let rows = self
            .rows
            .iter()
            .map(|r| Observation {
                z: r.covariates.confounders(),
                x: r.x,
                y: r.y,
            })
            .collect();
        Dataset::new(rows).expect("generated rows are valid")
    }

    /// Writes `A,L,D,R,X,Y` or, with `oracle_view`, `A,L,D,F,R,X,Y0,Y1,Y`.
    pub fn write_csv<W: Write>(&self, mut out: W, oracle_view: bool) -> std::io::Result<()> {
        if oracle_view {
            writeln!(out, "A,L,D,F,R,X,Y0,Y1,Y")?;
        } else {
            writeln!(out, "A,L,D,R,X,Y")?;
        }
        for row in &self.rows {
            let c = &row.covariates;
            if oracle_view {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    format_sig17(c.a),
                    format_sig17(c.l),
                    c.d as u8,
                    format_sig17(c.f),
                    format_sig17(c.r),
                    row.x,
                    row.y0,
                    row.y1,
                    row.y
                )?;
            } else {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    format_sig17(c.a),
                    format_sig17(c.l),
                    c.d as u8,
                    format_sig17(c.r),
                    row.x,
                    row.y
                )?;
            }
        }
        out.flush()
    }
}

fn bernoulli(rng: &mut SimRng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

/// Both potential outcomes from one shared uniform, so they agree whenever
/// the two probabilities do.
fn potential_outcomes(rng: &mut SimRng, z: &Confounders, mechanism: Mechanism) -> Result<(u8, u8)> {
    let u: f64 = rng.random();
    let y0 = u8::from(u < outcome_prob(0, z, mechanism)?);
    let y1 = u8::from(u < outcome_prob(1, z, mechanism)?);
    Ok((y0, y1))
}

pub fn generate_sample(
    n: usize,
    mechanism: Mechanism,
    rng: &mut SimRng,
) -> Result<GeneratedSample> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let covariates = draw_covariates(n, rng)?;
    let mut rows = Vec::with_capacity(n);
    for c in covariates {
        let z = c.confounders();
        let x = bernoulli(rng, treatment_prob(&z, mechanism));
        let (y0, y1) = potential_outcomes(rng, &z, mechanism)?;
        let y = if x == 1 { y1 } else { y0 };
        rows.push(GeneratedRow {
            covariates: c,
            x,
            y0,
            y1,
            y,
        });
    }
    Ok(GeneratedSample { rows, seed: None })
}

/// Convenience wrapper seeding a fresh stream.
pub fn generate_sample_seeded(
    n: usize,
    mechanism: Mechanism,
    seed: u64,
) -> Result<GeneratedSample> {
    let mut rng = rng_from_seed(seed);
    let mut sample = generate_sample(n, mechanism, &mut rng)?;
    sample.seed = Some(seed);
    Ok(sample)
}

const ORACLE_CHUNK: usize = 1_000_000;

/// Population ACE by brute force: mean of Y¹ − Y⁰ over a generated
/// population. The population is generated in chunks of 10⁶ with
/// independent substreams of `seed`, so the result does not depend on
/// thread count.
pub fn true_ace(population_size: usize, mechanism: Mechanism, seed: u64) -> Result<f64> {
    if population_size == 0 {
        return Err(Error::InvalidInput(
            "population size must be at least 1".into(),
        ));
    }
    let n_chunks = population_size.div_ceil(ORACLE_CHUNK);
    let partial: Vec<Result<i64>> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let size = ORACLE_CHUNK.min(population_size - chunk * ORACLE_CHUNK);
            let mut rng = rng_from_seed(derive_seed(seed, tags::ORACLE, chunk as u64));
            let rows = draw_covariates(size, &mut rng)?;
            let mut diff = 0i64;
            for c in rows {
                let z = c.confounders();
                let (y0, y1) = potential_outcomes(&mut rng, &z, mechanism)?;
                diff += i64::from(y1) - i64::from(y0);
            }
            Ok(diff)
        })
        .collect();
    let mut total = 0i64;
    for p in partial {
        total += p?;
    }
    Ok(total as f64 / population_size as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(l: f64, a: f64, r: f64, d: f64) -> Confounders {
        Confounders { l, a, r, d }
    }

    #[test]
    fn age_boundary() {
        assert_eq!(age_from_v(60.0), 60.0);
        assert_eq!(age_from_v(40.0), 40.0);
        assert!((age_from_v(67.5) - 60.0).abs() < 1e-12);
        assert!(age_from_v(60.0 + 1e-9) < 75.0);
    }

    #[test]
    fn treatment_prob_baseline() {
        let p = treatment_prob(&z(0.0, 30.0, 0.0, 0.0), Mechanism::STATIN);
        assert!((p - expit(-3.471)).abs() < 1e-15);
    }

    #[test]
    fn treatment_ldl_indicator_threshold() {
        let m = Mechanism::STATIN;
        let below = treatment_prob(&z(159f64.ln(), 30.0, 0.0, 0.0), m);
        let above = treatment_prob(&z(161f64.ln(), 30.0, 0.0, 0.0), m);
        let jump = logit(above) - logit(below) - 0.112 * (161f64.ln() - 159f64.ln());
        assert!((jump - 0.973).abs() < 1e-9);
        let literal = Mechanism {
            ldl_threshold: 60.0,
            ..m
        };
        let p = treatment_prob(&z(4.0, 30.0, 0.0, 0.0), literal);
        assert!((logit(p) - (-3.471 + 0.112 * 4.0)).abs() < 1e-9);
        let p = treatment_prob(&z(4.2, 30.0, 0.0, 0.0), literal);
        assert!((logit(p) - (-3.471 + 0.112 * 4.2 + 0.973)).abs() < 1e-9);
    }

    #[test]
    fn treatment_prob_half_open_risk_bins() {
        let m = Mechanism::STATIN;
        let base = treatment_prob(&z(0.0, 30.0, 0.0, 0.0), m);
        let at = |r| logit(treatment_prob(&z(0.0, 30.0, r, 0.0), m)) - logit(base);
        assert!((at(0.075) - 1.592).abs() < 1e-9);
        assert!((at(0.0749999) - 0.273).abs() < 1e-9);
        assert!((at(0.05) - 0.273).abs() < 1e-9);
        assert!((at(0.2) - 2.461).abs() < 1e-9);
        assert!(at(0.0499).abs() < 1e-9);
    }

    #[test]
    fn outcome_prob_untreated_ignores_treatment_terms() {
        let row = z(5.0, 50.0, 0.1, 0.0);
        let p0 = outcome_prob(0, &row, Mechanism::STATIN).unwrap();
        let p0_null = outcome_prob(0, &row, Mechanism::NULL).unwrap();
        assert_eq!(p0, p0_null);
        let p1_null = outcome_prob(1, &row, Mechanism::NULL).unwrap();
        assert_eq!(p0, p1_null);
    }

    #[test]
    fn outcome_prob_rejects_young_age() {
        assert!(outcome_prob(0, &z(4.6, 38.0, 0.1, 0.0), Mechanism::STATIN).is_err());
    }

    #[test]
    fn generated_rows_satisfy_consistency() {
        let sample = generate_sample_seeded(2000, Mechanism::STATIN, 7).unwrap();
        for r in &sample.rows {
            assert_eq!(r.y, r.x * r.y1 + (1 - r.x) * r.y0);
            let c = r.covariates;
            assert!(c.d == 0.0 || c.d == 1.0);
            assert!(c.f > 0.0 && c.f < 1.0 && c.r > 0.0 && c.r < 1.0);
            assert!(c.a >= 40.0 && c.a <= 75.0);
        }
    }

    #[test]
    fn single_row_sample() {
        let s = generate_sample_seeded(1, Mechanism::STATIN, 3).unwrap();
        assert_eq!(s.rows.len(), 1);
        let r = s.rows[0];
        assert_eq!(r.y, if r.x == 1 { r.y1 } else { r.y0 });
    }

    #[test]
    fn seed_determinism() {
        let a = generate_sample_seeded(500, Mechanism::STATIN, 11).unwrap();
        let b = generate_sample_seeded(500, Mechanism::STATIN, 11).unwrap();
        assert_eq!(a, b);
        let c = generate_sample_seeded(500, Mechanism::STATIN, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn null_mechanism_has_zero_ace() {
        assert_eq!(true_ace(50_000, Mechanism::NULL, 5).unwrap(), 0.0);
    }

    #[test]
    fn zero_size_is_rejected() {
        assert!(generate_sample_seeded(0, Mechanism::STATIN, 1).is_err());
        assert!(true_ace(0, Mechanism::STATIN, 1).is_err());
    }

    #[test]
    fn csv_views() {
        let s = generate_sample_seeded(3, Mechanism::STATIN, 1).unwrap();
        let mut est = Vec::new();
        s.write_csv(&mut est, false).unwrap();
        let text = String::from_utf8(est).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "A,L,D,R,X,Y");
        assert_eq!(lines[1].split(',').count(), 6);
        let parsed = Dataset::from_csv_reader(text.as_bytes()).unwrap();
        assert_eq!(parsed, s.dataset());

        let mut orc = Vec::new();
        s.write_csv(&mut orc, true).unwrap();
        let text = String::from_utf8(orc).unwrap();
        assert_eq!(text.lines().next().unwrap(), "A,L,D,F,R,X,Y0,Y1,Y");
        assert!(text.lines().skip(1).all(|l| l.split(',').count() == 9));
    }
}
