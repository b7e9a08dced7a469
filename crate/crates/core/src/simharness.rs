//! Monte Carlo campaigns over the simulation mechanism and the
//! partition-stability study.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CampaignConfig, NuisanceChoice};
use crate::crossfit::{run_crossfit, run_crossfit_many, Aggregation, DrEstimator};
use crate::data::Dataset;
use crate::dgm::{generate_sample_seeded, true_ace, Mechanism};
use crate::error::{Error, Result};
use crate::estimators::{aipw, bootstrap_se, g_computation, ipw, tmle, AceEstimate, Method};
use crate::math::{mean, quantile, sample_sd};
use crate::nuisance::{fit_nuisance, fit_outcome, Bounds, NuisanceSpec};
use crate::rng::{derive_seed, rng_from_seed, tags, RNG_ALGORITHM};

/// Cells with a larger share of failed replicates are flagged.
pub const FAILURE_FLAG_SHARE: f64 = 0.05;

/// Summary of one estimator across replicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub bias: f64,
    pub rmse: f64,
    pub ase: f64,
    pub ese: f64,
    pub cld: f64,
    pub coverage: f64,
}

/// Bias, spread, interval width and coverage of `estimates` against `truth`.
///
/// ASE, CLD and coverage use the estimates with a finite standard error;
/// they are NaN when there is none.
pub fn compute_metrics(estimates: &[AceEstimate], truth: f64) -> Result<Metrics> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput(
            "metrics need at least 2 estimates".into(),
        ));
    }
    let psi: Vec<f64> = estimates.iter().map(|e| e.psi).collect();
    let bias = mean(&psi) - truth;
    let ese = sample_sd(&psi);
    let with_se: Vec<&AceEstimate> = estimates.iter().filter(|e| e.se.is_finite()).collect();
    let (ase, cld, coverage) = if with_se.is_empty() {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let k = with_se.len() as f64;
        (
            with_se.iter().map(|e| e.se).sum::<f64>() / k,
            with_se.iter().map(|e| e.ci_upper - e.ci_lower).sum::<f64>() / k,
            with_se.iter().filter(|e| e.covers(truth)).count() as f64 / k,
        )
    };
    Ok(Metrics {
        bias,
        rmse: (bias * bias + ese * ese).sqrt(),
        ase,
        ese,
        cld,
        coverage,
    })
}

/// One line of campaign output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub estimator: Method,
    pub nuisance: NuisanceChoice,
    pub metrics: Option<Metrics>,
    pub n_used: usize,
    pub failures: usize,
    /// More than [`FAILURE_FLAG_SHARE`] of the replicates failed.
    pub flagged: bool,
}

impl MetricsRow {
    /// Metric columns; NaN when the cell has fewer than two usable replicates.
    pub fn values(&self) -> [f64; 6] {
        match &self.metrics {
            Some(m) => [m.bias, m.rmse, m.ase, m.ese, m.cld, m.coverage],
            None => [f64::NAN; 6],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub estimator: Method,
    pub nuisance: NuisanceChoice,
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub config: CampaignConfig,
    pub seed: u64,
    pub truth: f64,
    pub cells: Vec<Cell>,
    pub rows: Vec<MetricsRow>,
    /// Per replicate, one entry per cell (same order as `cells`).
    pub replicates: Vec<Vec<std::result::Result<AceEstimate, String>>>,
}

impl CampaignResult {
    pub fn row(&self, estimator: Method, nuisance: NuisanceChoice) -> Option<&MetricsRow> {
        self.rows
            .iter()
            .find(|r| r.estimator == estimator && r.nuisance == nuisance)
    }
}

type OracleKey = (usize, bool, u64, u64);

fn oracle_cache() -> &'static Mutex<HashMap<OracleKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<OracleKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// True ACE for (size, mechanism, seed), computed once per process.
pub fn oracle_truth(size: usize, mechanism: Mechanism, seed: u64) -> Result<f64> {
    let key = (
        size,
        mechanism.null_effect,
        mechanism.ldl_threshold.to_bits(),
        seed,
    );
    if let Some(&v) = oracle_cache().lock().expect("oracle cache").get(&key) {
        return Ok(v);
    }
    let v = true_ace(size, mechanism, seed)?;
    oracle_cache().lock().expect("oracle cache").insert(key, v);
    Ok(v)
}

/// The grid in output order: nuisance-major, estimators in config order.
pub fn campaign_cells(config: &CampaignConfig) -> Vec<Cell> {
    config
        .nuisances
        .iter()
        .flat_map(|&nuisance| {
            config.estimators.iter().map(move |&estimator| Cell {
                estimator,
                nuisance,
            })
        })
        .collect()
}

/// Every grid cell applied to one sample.
fn analyze_nuisance(
    config: &CampaignConfig,
    data: &Dataset,
    choice: NuisanceChoice,
    seed: u64,
    replicate: u64,
) -> HashMap<Method, std::result::Result<AceEstimate, String>> {
    let spec = config.nuisance_spec(choice);
    let mechanism = config.mechanism;
    let bounds = config.bounds;
    let mut out = HashMap::new();
    let single: Vec<Method> = config
        .estimators
        .iter()
        .copied()
        .filter(|m| !m.is_crossfit())
        .collect();

    if !single.is_empty() {
        let mut rng = rng_from_seed(derive_seed(seed, tags::NUISANCE, replicate));
        match fit_nuisance(&spec, data, mechanism, &mut rng).and_then(|f| f.score(data)) {
            Err(e) => {
                for m in &single {
                    out.insert(*m, Err(e.to_string()));
                }
            }
            Ok(raw) => {
                let scores = raw.bounded(&bounds);
                for &m in &single {
                    let est = match m {
                        Method::GComputation => {
                            let b = config.bootstrap_for(choice);
                            let psi = g_computation(&scores.m1, &scores.m0);
                            if b == 0 {
                                psi.map(|psi| AceEstimate::new(m, psi, f64::NAN, None))
                            } else {
                                psi.and_then(|psi| {
                                    let boot = bootstrap_se(
                                        data,
                                        b,
                                        derive_seed(seed, tags::BOOTSTRAP, replicate),
                                        |resample, rng| gcomp_refit(&spec, resample, &bounds, rng),
                                    )?;
                                    Ok(AceEstimate::new(m, psi, boot.se, None))
                                })
                            }
                        }
                        Method::Ipw => ipw(data, &scores.pi, config.hajek),
                        Method::Aipw => aipw(data, &scores),
                        Method::Tmle => tmle(data, &scores).map(|(_, e)| e),
                        Method::DcAipw | Method::DcTmle => unreachable!("filtered above"),
                    };
                    out.insert(m, est.map_err(|e| e.to_string()));
                }
            }
        }
    }

    let dr: Vec<DrEstimator> = config
        .estimators
        .iter()
        .filter_map(|m| match m {
            Method::DcAipw => Some(DrEstimator::Aipw),
            Method::DcTmle => Some(DrEstimator::Tmle),
            _ => None,
        })
        .collect();
    if !dr.is_empty() {
        let result = run_crossfit_many(
            data,
            &spec,
            mechanism,
            &dr,
            config.partitions,
            config.aggregation,
            &bounds,
            derive_seed(seed, tags::CROSSFIT, replicate),
        );
        match result {
            Ok(results) => {
                for r in results {
                    out.insert(r.estimator.method(), Ok(r.estimate()));
                }
            }
            Err(e) => {
                for d in dr {
                    out.insert(d.method(), Err(e.to_string()));
                }
            }
        }
    }
    out
}

/// G-computation with the outcome model refit on `data`.
pub fn gcomp_refit(
    spec: &NuisanceSpec,
    data: &Dataset,
    bounds: &Bounds,
    rng: &mut crate::rng::SimRng,
) -> Result<f64> {
    let model = fit_outcome(spec, data, rng)?;
    let clip = |v: Vec<f64>| -> Vec<f64> {
        v.into_iter()
            .map(|m| m.clamp(bounds.m_lower, bounds.m_upper))
            .collect()
    };
    g_computation(
        &clip(model.predict(data, 1)?),
        &clip(model.predict(data, 0)?),
    )
}

/// Runs the campaign without progress reporting.
pub fn run_campaign(config: &CampaignConfig, seed: u64) -> Result<CampaignResult> {
    run_campaign_with_progress(config, seed, &|_| {})
}

/// Runs every grid cell on `config.replicates` shared samples. `progress`
/// receives the number of completed replicates (in no particular order).
pub fn run_campaign_with_progress(
    config: &CampaignConfig,
    seed: u64,
    progress: &(dyn Fn(usize) + Sync),
) -> Result<CampaignResult> {
    config.validate()?;
    let truth = oracle_truth(config.oracle_size, config.mechanism, seed)?;
    let cells = campaign_cells(config);
    let done = std::sync::atomic::AtomicUsize::new(0);

    let replicates: Vec<Vec<std::result::Result<AceEstimate, String>>> = (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let r = r as u64;
            let sample = generate_sample_seeded(
                config.n,
                config.mechanism,
                derive_seed(seed, tags::SAMPLE, r),
            );
            let row = match sample {
                Err(e) => cells.iter().map(|_| Err(e.to_string())).collect(),
                Ok(sample) => {
                    let data = sample.dataset();
                    let per_nuisance: HashMap<NuisanceChoice, HashMap<Method, _>> = config
                        .nuisances
                        .iter()
                        .map(|&c| (c, analyze_nuisance(config, &data, c, seed, r)))
                        .collect();
                    cells
                        .iter()
                        .map(|cell| {
                            per_nuisance[&cell.nuisance]
                                .get(&cell.estimator)
                                .cloned()
                                .unwrap_or_else(|| Err("not run".to_string()))
                        })
                        .collect()
                }
            };
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            row
        })
        .collect();

    let rows = cells
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            let ok: Vec<AceEstimate> = replicates
                .iter()
                .filter_map(|r| r[k].as_ref().ok().cloned())
                .collect();
            let failures = replicates.len() - ok.len();
            MetricsRow {
                estimator: cell.estimator,
                nuisance: cell.nuisance,
                metrics: compute_metrics(&ok, truth).ok(),
                n_used: ok.len(),
                failures,
                flagged: failures as f64 > FAILURE_FLAG_SHARE * replicates.len() as f64,
            }
        })
        .collect();

    Ok(CampaignResult {
        config: config.clone(),
        seed,
        truth,
        cells,
        rows,
        replicates,
    })
}

fn fmt_num(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// CSV with columns `estimator,nuisance,bias,rmse,ase,ese,cld,coverage,n_used,failures`.
pub fn write_metrics_csv<W: std::io::Write>(rows: &[MetricsRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record([
        "estimator",
        "nuisance",
        "bias",
        "rmse",
        "ase",
        "ese",
        "cld",
        "coverage",
        "n_used",
        "failures",
    ])
    .map_err(err)?;
    for row in rows {
        let mut record = vec![
            row.estimator.label().to_string(),
            row.nuisance.label().to_string(),
        ];
        record.extend(row.values().iter().map(|&v| fmt_num(v)));
        record.push(row.n_used.to_string());
        record.push(row.failures.to_string());
        w.write_record(&record).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Reproducibility manifest for a campaign.
pub fn manifest(result: &CampaignResult) -> serde_json::Value {
    let flagged: Vec<String> = result
        .rows
        .iter()
        .filter(|r| r.flagged)
        .map(|r| format!("{}/{}", r.estimator.label(), r.nuisance.label()))
        .collect();
    serde_json::json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "rng": RNG_ALGORITHM,
        "master_seed": result.seed,
        "seed_streams": {
            "sample": "derive_seed(master, SAMPLE, replicate)",
            "nuisance": "derive_seed(master, NUISANCE, replicate)",
            "bootstrap": "derive_seed(master, BOOTSTRAP, replicate)",
            "crossfit": "derive_seed(master, CROSSFIT, replicate)",
            "oracle": "derive_seed(master, ORACLE, chunk)",
        },
        "oracle_truth": result.truth,
        "flagged_cells": flagged,
        "config": result.config,
    })
}

/// Spread of ψ̃ across reruns for one number of partitions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityRow {
    pub p: usize,
    pub reruns: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub iqr: f64,
}

/// Reruns the double cross-fit `reruns` times for every `p` on the same
/// data, each rerun with fresh partitions.
#[allow(clippy::too_many_arguments)]
pub fn stability_study(
    data: &Dataset,
    spec: &NuisanceSpec,
    mechanism: Mechanism,
    estimator: DrEstimator,
    p_values: &[usize],
    reruns: usize,
    aggregation: Aggregation,
    bounds: &Bounds,
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    if p_values.is_empty() || reruns == 0 {
        return Err(Error::InvalidInput(
            "stability study needs at least one p and one rerun".into(),
        ));
    }
    p_values
        .iter()
        .map(|&p| {
            let stream = derive_seed(seed, tags::STABILITY, p as u64);
            let estimates: Vec<f64> = (0..reruns)
                .into_par_iter()
                .map(|r| {
                    run_crossfit(
                        data,
                        spec,
                        mechanism,
                        estimator,
                        p,
                        aggregation,
                        bounds,
                        derive_seed(stream, tags::STABILITY, r as u64),
                    )
                    .map(|c| c.psi)
                })
                .collect::<Result<_>>()?;
            let (q1, q3) = (quantile(&estimates, 0.25), quantile(&estimates, 0.75));
            Ok(StabilityRow {
                p,
                reruns,
                min: quantile(&estimates, 0.0),
                q1,
                median: quantile(&estimates, 0.5),
                q3,
                max: quantile(&estimates, 1.0),
                iqr: q3 - q1,
            })
        })
        .collect()
}

pub fn write_stability_csv<W: std::io::Write>(rows: &[StabilityRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["p", "reruns", "min", "q1", "median", "q3", "max", "iqr"])
        .map_err(err)?;
    for r in rows {
        let mut record = vec![r.p.to_string(), r.reruns.to_string()];
        record.extend(
            [r.min, r.q1, r.median, r.q3, r.max, r.iqr]
                .iter()
                .map(|v| format!("{v:.17e}")),
        );
        w.write_record(&record).map_err(err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}
