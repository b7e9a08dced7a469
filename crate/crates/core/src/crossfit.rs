//! Double cross-fitting for the doubly robust estimators.
//!
//! Each partition splits the rows three ways. Every split is scored by a
//! treatment model fit on one other split and an outcome model fit on the
//! remaining split; the estimator runs within each split and the three
//! results are averaged. Estimates from `p` independent partitions are
//! combined by their median (or mean), with the between-partition spread
//! added to the variance.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dgm::Mechanism;
use crate::error::{Error, Result};
use crate::estimators::{aipw, tmle, AceEstimate, Method};
use crate::math::{mean, median};
use crate::nuisance::{fit_outcome, fit_treatment, score_with, Bounds, NuisanceSpec};
use crate::rng::{derive_seed, rng_from_seed, tags, SimRng};

pub const SPLITS: usize = 3;

/// Split `s` is scored by the treatment model of `ROTATION[s].0` and the
/// outcome model of `ROTATION[s].1`.
pub const ROTATION: [(usize, usize); SPLITS] = [(1, 2), (2, 0), (0, 1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DrEstimator {
    Aipw,
    Tmle,
}

impl DrEstimator {
    pub fn method(self) -> Method {
        match self {
            DrEstimator::Aipw => Method::DcAipw,
            DrEstimator::Tmle => Method::DcTmle,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DrEstimator::Aipw => "aipw",
            DrEstimator::Tmle => "tmle",
        }
    }
}

impl std::str::FromStr for DrEstimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aipw" => Ok(DrEstimator::Aipw),
            "tmle" => Ok(DrEstimator::Tmle),
            other => Err(Error::InvalidInput(format!(
                "unknown doubly robust estimator `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    Median,
    Mean,
}

impl std::str::FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Aggregation::Median),
            "mean" => Ok(Aggregation::Mean),
            other => Err(Error::InvalidInput(format!(
                "unknown aggregation `{other}`"
            ))),
        }
    }
}

/// Three-way split of the rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionScheme {
    split: Vec<u8>,
}

impl PartitionScheme {
    /// Split index (0, 1, 2) of every row.
    pub fn assignment(&self) -> &[u8] {
        &self.split
    }

    /// Rows of split `s`, ascending.
    pub fn members(&self, s: usize) -> Vec<usize> {
        (0..self.split.len())
            .filter(|&i| usize::from(self.split[i]) == s)
            .collect()
    }

    pub fn sizes(&self) -> [usize; SPLITS] {
        let mut sizes = [0; SPLITS];
        for &s in &self.split {
            sizes[usize::from(s)] += 1;
        }
        sizes
    }

    /// (treatment-model split, outcome-model split) used to score row `i`.
    pub fn sources(&self, i: usize) -> (usize, usize) {
        ROTATION[usize::from(self.split[i])]
    }
}

/// Random three-way split with sizes differing by at most one.
pub fn make_partition(n: usize, rng: &mut SimRng) -> Result<PartitionScheme> {
    if n < SPLITS {
        return Err(Error::InvalidInput(format!(
            "double cross-fitting needs at least 3 rows, got {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut split = vec![0u8; n];
    for (pos, &row) in order.iter().enumerate() {
        split[row] = (pos % SPLITS) as u8;
    }
    Ok(PartitionScheme { split })
}

/// Estimate from one split of one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitEstimate {
    pub split: usize,
    pub treatment_source: usize,
    pub outcome_source: usize,
    pub rows: usize,
    pub psi: f64,
    /// Influence-curve variance (per observation, n−1 denominator).
    pub ic_variance: f64,
}

/// Result of one partition for one estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEstimate {
    pub ace: f64,
    /// Mean of the three split IC variances (per-observation scale).
    pub variance: f64,
    pub splits: Vec<SplitEstimate>,
    pub clip_count: usize,
}

fn ic_variance(est: &AceEstimate) -> f64 {
    let ic = est.ic.as_deref().unwrap_or(&[]);
    if ic.len() < 2 {
        return 0.0;
    }
    ic.iter().map(|v| v * v).sum::<f64>() / (ic.len() - 1) as f64
}

/// Runs one partition: six nuisance fits, discordant scoring, and every
/// estimator in `estimators` on the same scores. Output order follows
/// `estimators`.
pub fn crossfit_once(
    data: &Dataset,
    spec: &NuisanceSpec,
    mechanism: Mechanism,
    estimators: &[DrEstimator],
    scheme: &PartitionScheme,
    bounds: &Bounds,
    rng: &mut SimRng,
) -> Result<Vec<PartitionEstimate>> {
    if scheme.assignment().len() != data.len() {
        return Err(Error::InvalidInput(
            "partition does not match the data".into(),
        ));
    }
    let members: Vec<Vec<usize>> = (0..SPLITS).map(|s| scheme.members(s)).collect();
    if members.iter().any(|m| m.is_empty()) {
        return Err(Error::InvalidInput(
            "every split needs at least one row".into(),
        ));
    }
    let parts: Vec<Dataset> = members.iter().map(|m| data.subset(m)).collect();
    let mut treatment = Vec::with_capacity(SPLITS);
    let mut outcome = Vec::with_capacity(SPLITS);
    for part in &parts {
        treatment.push(fit_treatment(spec, part, mechanism, rng)?);
        outcome.push(fit_outcome(spec, part, rng)?);
    }

    let mut per_estimator: Vec<Vec<SplitEstimate>> =
        vec![Vec::with_capacity(SPLITS); estimators.len()];
    let mut clip_count = 0;
    for (s, part) in parts.iter().enumerate() {
        let (g, e) = ROTATION[s];
        let scores = score_with(&treatment[g], &outcome[e], part, spec.label())?.bounded(bounds);
        clip_count += scores.clip_count;
        for (k, est) in estimators.iter().enumerate() {
            let fitted = match est {
                DrEstimator::Aipw => aipw(part, &scores)?,
                DrEstimator::Tmle => tmle(part, &scores)?.1,
            };
            per_estimator[k].push(SplitEstimate {
                split: s,
                treatment_source: g,
                outcome_source: e,
                rows: part.len(),
                psi: fitted.psi,
                ic_variance: ic_variance(&fitted),
            });
        }
    }
    Ok(per_estimator
        .into_iter()
        .map(|splits| PartitionEstimate {
            ace: splits.iter().map(|s| s.psi).sum::<f64>() / SPLITS as f64,
            variance: splits.iter().map(|s| s.ic_variance).sum::<f64>() / SPLITS as f64,
            splits,
            clip_count,
        })
        .collect())
}

/// Aggregated double cross-fit estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossfitResult {
    pub estimator: DrEstimator,
    pub aggregation: Aggregation,
    /// Successful partitions, in partition order.
    pub partitions: Vec<PartitionEstimate>,
    pub failed_partitions: usize,
    pub psi: f64,
    /// Variance of ψ̃ on the estimate scale.
    pub variance: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

impl CrossfitResult {
    pub fn p(&self) -> usize {
        self.partitions.len() + self.failed_partitions
    }

    pub fn estimate(&self) -> AceEstimate {
        AceEstimate::new(self.estimator.method(), self.psi, self.se, None)
    }

    pub fn clip_count(&self) -> usize {
        self.partitions.iter().map(|p| p.clip_count).sum()
    }
}

/// Combines per-partition results: ψ̃ = agg(ACE_p) and
/// Var(ψ̃) = agg(Var_p / n + (ACE_p − ψ̃)²).
///
/// Var_p is an influence-curve variance on the per-observation scale, so
/// it is divided by the sample size before the between-partition spread
/// (already on the estimate scale) is added.
pub fn aggregate(
    aces: &[f64],
    variances: &[f64],
    n: usize,
    aggregation: Aggregation,
) -> (f64, f64) {
    let agg = |v: &[f64]| match aggregation {
        Aggregation::Median => median(v),
        Aggregation::Mean => mean(v),
    };
    let psi = agg(aces);
    let terms: Vec<f64> = aces
        .iter()
        .zip(variances)
        .map(|(a, v)| v / n as f64 + (a - psi).powi(2))
        .collect();
    (psi, agg(&terms))
}

/// Runs `p` partitions once and aggregates them separately for every
/// estimator in `estimators`, which therefore share partitions and
/// nuisance fits. Partition `k` draws from its own seed derived from
/// `seed`, so results do not depend on thread scheduling.
#[allow(clippy::too_many_arguments)]
pub fn run_crossfit_many(
    data: &Dataset,
    spec: &NuisanceSpec,
    mechanism: Mechanism,
    estimators: &[DrEstimator],
    p: usize,
    aggregation: Aggregation,
    bounds: &Bounds,
    seed: u64,
) -> Result<Vec<CrossfitResult>> {
    if p == 0 {
        return Err(Error::InvalidInput(
            "number of partitions must be at least 1".into(),
        ));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidInput("no estimator requested".into()));
    }
    let n = data.len();
    if n < SPLITS {
        return Err(Error::InvalidInput(format!(
            "double cross-fitting needs at least 3 rows, got {n}"
        )));
    }
    let runs: Vec<Option<Vec<PartitionEstimate>>> = (0..p)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, tags::CROSSFIT, k as u64));
            let scheme = make_partition(n, &mut rng).ok()?;
            crossfit_once(data, spec, mechanism, estimators, &scheme, bounds, &mut rng).ok()
        })
        .collect();
    let failed = runs.iter().filter(|r| r.is_none()).count();
    if failed * 10 > p || failed == p {
        return Err(Error::TooManyFailures {
            what: "cross-fit partitions",
            failed,
            total: p,
        });
    }
    let ok: Vec<Vec<PartitionEstimate>> = runs.into_iter().flatten().collect();
    Ok(estimators
        .iter()
        .enumerate()
        .map(|(k, &estimator)| {
            let partitions: Vec<PartitionEstimate> = ok.iter().map(|r| r[k].clone()).collect();
            let aces: Vec<f64> = partitions.iter().map(|r| r.ace).collect();
            let vars: Vec<f64> = partitions.iter().map(|r| r.variance).collect();
            let (psi, variance) = aggregate(&aces, &vars, n, aggregation);
            let se = variance.sqrt();
            let wald = AceEstimate::new(estimator.method(), psi, se, None);
            CrossfitResult {
                estimator,
                aggregation,
                partitions,
                failed_partitions: failed,
                psi,
                variance,
                se,
                ci_lower: wald.ci_lower,
                ci_upper: wald.ci_upper,
            }
        })
        .collect())
}

/// Double cross-fit estimate for a single estimator.
#[allow(clippy::too_many_arguments)]
pub fn run_crossfit(
    data: &Dataset,
    spec: &NuisanceSpec,
    mechanism: Mechanism,
    estimator: DrEstimator,
    p: usize,
    aggregation: Aggregation,
    bounds: &Bounds,
    seed: u64,
) -> Result<CrossfitResult> {
    let mut out = run_crossfit_many(
        data,
        spec,
        mechanism,
        &[estimator],
        p,
        aggregation,
        bounds,
        seed,
    )?;
    Ok(out.remove(0))
}

/// Writes one line per partition: `partition,ace,variance`.
pub fn write_partitions_csv<W: std::io::Write>(result: &CrossfitResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["partition", "ace", "variance"])
        .map_err(io)?;
    for (k, part) in result.partitions.iter().enumerate() {
        w.write_record([
            k.to_string(),
            format!("{:.17e}", part.ace),
            format!("{:.17e}", part.variance),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}
