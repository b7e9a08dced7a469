//! Average causal effect estimators operating on nuisance predictions:
//! g-computation, IPW, AIPW and TMLE, each with a Wald 95% interval.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{expit, logit, mean, sample_sd};
use crate::nuisance::NuisanceScores;
use crate::rng::{derive_seed, rng_from_seed, tags, SimRng};

/// Normal quantile for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

/// Newton tolerance on |Δε| for the targeting step.
pub const TARGETING_TOL: f64 = 1e-10;
pub const TARGETING_MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[serde(rename = "gcomp")]
    GComputation,
    Ipw,
    Aipw,
    Tmle,
    DcAipw,
    DcTmle,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GComputation,
        Method::Ipw,
        Method::Aipw,
        Method::Tmle,
        Method::DcAipw,
        Method::DcTmle,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::GComputation => "gcomp",
            Method::Ipw => "ipw",
            Method::Aipw => "aipw",
            Method::Tmle => "tmle",
            Method::DcAipw => "dc-aipw",
            Method::DcTmle => "dc-tmle",
        }
    }

    pub fn is_crossfit(self) -> bool {
        matches!(self, Method::DcAipw | Method::DcTmle)
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown method `{s}`")))
    }
}

/// Point estimate with standard error and Wald interval.
#[derive(Debug, Clone, PartialEq)]
pub struct AceEstimate {
    pub method: Method,
    pub psi: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Per-observation influence values, when the variance comes from them.
    pub ic: Option<Vec<f64>>,
}

impl AceEstimate {
    pub fn new(method: Method, psi: f64, se: f64, ic: Option<Vec<f64>>) -> Self {
        Self {
            method,
            psi,
            se,
            ci_lower: psi - Z_95 * se,
            ci_upper: psi + Z_95 * se,
            ic,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lower <= truth && truth <= self.ci_upper
    }
}

/// Fluctuation of the outcome predictions along the clever covariate.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetingResult {
    pub epsilon: f64,
    pub m1_star: Vec<f64>,
    pub m0_star: Vec<f64>,
    pub iterations: usize,
    /// Σ H·(Y − m*_X) after targeting.
    pub score: f64,
}

fn check_lengths(data: &Dataset, scores: &NuisanceScores) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidInput(
            "estimator needs at least one row".into(),
        ));
    }
    let n = data.len();
    if scores.pi.len() != n || scores.m1.len() != n || scores.m0.len() != n {
        return Err(Error::InvalidInput(format!(
            "nuisance scores have lengths ({}, {}, {}) but the data has {n} rows",
            scores.pi.len(),
            scores.m1.len(),
            scores.m0.len()
        )));
    }
    Ok(())
}

fn check_positivity(pi: &[f64]) -> Result<()> {
    match pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        Some(row) => Err(Error::Positivity {
            row,
            value: pi[row],
        }),
        None => Ok(()),
    }
}

fn ic_se(ic: &[f64]) -> f64 {
    let n = ic.len();
    if n < 2 {
        return 0.0;
    }
    let var = ic.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// mean(m1) − mean(m0).
pub fn g_computation(m1: &[f64], m0: &[f64]) -> Result<f64> {
    if m1.is_empty() || m1.len() != m0.len() {
        return Err(Error::InvalidInput(
            "g-computation needs two non-empty vectors of equal length".into(),
        ));
    }
    Ok(m1.iter().zip(m0).map(|(a, b)| a - b).sum::<f64>() / m1.len() as f64)
}

/// Outcome of a nonparametric bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub struct Bootstrap {
    pub se: f64,
    pub estimates: Vec<f64>,
    pub failures: usize,
}

/// Standard deviation of `b` re-estimates, each computed by `estimate` on a
/// size-n resample drawn with replacement. Resample `r` uses its own seed
/// derived from `seed`, so results do not depend on thread scheduling.
pub fn bootstrap_se<F>(data: &Dataset, b: usize, seed: u64, estimate: F) -> Result<Bootstrap>
where
    F: Fn(&Dataset, &mut SimRng) -> Result<f64> + Sync,
{
    if b < 2 {
        return Err(Error::InvalidInput(
            "bootstrap needs at least 2 resamples".into(),
        ));
    }
    let n = data.len();
    let draws: Vec<Option<f64>> = (0..b)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from_seed(derive_seed(seed, tags::BOOTSTRAP, r as u64));
            let idx: Vec<usize> = (0..n)
                .map(|_| rand::Rng::random_range(&mut rng, 0..n))
                .collect();
            estimate(&data.subset(&idx), &mut rng)
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();
    let estimates: Vec<f64> = draws.iter().flatten().copied().collect();
    let failures = b - estimates.len();
    if failures * 10 > b {
        return Err(Error::TooManyFailures {
            what: "bootstrap resamples",
            failed: failures,
            total: b,
        });
    }
    if estimates.len() < 2 {
        return Err(Error::TooManyFailures {
            what: "bootstrap resamples",
            failed: failures,
            total: b,
        });
    }
    Ok(Bootstrap {
        se: sample_sd(&estimates),
        estimates,
        failures,
    })
}

/// G-computation point estimate with a bootstrap standard error.
pub fn g_computation_estimate(
    scores: &NuisanceScores,
    bootstrap: &Bootstrap,
) -> Result<AceEstimate> {
    let psi = g_computation(&scores.m1, &scores.m0)?;
    Ok(AceEstimate::new(
        Method::GComputation,
        psi,
        bootstrap.se,
        None,
    ))
}

/// Inverse probability weighting. Horvitz–Thompson by default; `hajek`
/// normalizes each arm by its summed weights.
pub fn ipw(data: &Dataset, pi: &[f64], hajek: bool) -> Result<AceEstimate> {
    if data.is_empty() || pi.len() != data.len() {
        return Err(Error::InvalidInput(
            "ipw needs one propensity per row".into(),
        ));
    }
    check_positivity(pi)?;
    let n = data.len() as f64;
    let rows = data.rows();
    if !hajek {
        let terms: Vec<f64> = rows
            .iter()
            .zip(pi)
            .map(|(o, &p)| {
                let (x, y) = (f64::from(o.x), f64::from(o.y));
                y * x / p - y * (1.0 - x) / (1.0 - p)
            })
            .collect();
        let psi = terms.iter().sum::<f64>() / n;
        let ic: Vec<f64> = terms.iter().map(|t| t - psi).collect();
        return Ok(AceEstimate::new(Method::Ipw, psi, ic_se(&ic), Some(ic)));
    }
    let (mut w1, mut w0, mut s1, mut s0) = (0.0, 0.0, 0.0, 0.0);
    for (o, &p) in rows.iter().zip(pi) {
        let (x, y) = (f64::from(o.x), f64::from(o.y));
        w1 += x / p;
        w0 += (1.0 - x) / (1.0 - p);
        s1 += y * x / p;
        s0 += y * (1.0 - x) / (1.0 - p);
    }
    if w1 == 0.0 || w0 == 0.0 {
        return Err(Error::InvalidInput(
            "Hajek IPW needs both treatment arms".into(),
        ));
    }
    let (mu1, mu0) = (s1 / w1, s0 / w0);
    let (wbar1, wbar0) = (w1 / n, w0 / n);
    let ic: Vec<f64> = rows
        .iter()
        .zip(pi)
        .map(|(o, &p)| {
            let (x, y) = (f64::from(o.x), f64::from(o.y));
            x * (y - mu1) / p / wbar1 - (1.0 - x) * (y - mu0) / (1.0 - p) / wbar0
        })
        .collect();
    Ok(AceEstimate::new(
        Method::Ipw,
        mu1 - mu0,
        ic_se(&ic),
        Some(ic),
    ))
}

/// Per-observation AIPW pseudo-outcome differences δᵢ.
fn aipw_pseudo(data: &Dataset, scores: &NuisanceScores) -> Vec<f64> {
    data.rows()
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let (x, y) = (f64::from(o.x), f64::from(o.y));
            let (p, m1, m0) = (scores.pi[i], scores.m1[i], scores.m0[i]);
            (y * x / p + m1 * (p - x) / p) - (y * (1.0 - x) / (1.0 - p) + m0 * (x - p) / (1.0 - p))
        })
        .collect()
}

pub fn aipw(data: &Dataset, scores: &NuisanceScores) -> Result<AceEstimate> {
    check_lengths(data, scores)?;
    check_positivity(&scores.pi)?;
    let delta = aipw_pseudo(data, scores);
    let psi = mean(&delta);
    let ic: Vec<f64> = delta.iter().map(|d| d - psi).collect();
    Ok(AceEstimate::new(Method::Aipw, psi, ic_se(&ic), Some(ic)))
}

/// H = X/π − (1−X)/(1−π).
pub fn clever_covariate(x: &[u8], pi: &[f64]) -> Result<Vec<f64>> {
    if x.len() != pi.len() {
        return Err(Error::InvalidInput(
            "clever covariate needs one propensity per row".into(),
        ));
    }
    check_positivity(pi)?;
    Ok(x.iter()
        .zip(pi)
        .map(|(&x, &p)| if x == 1 { 1.0 / p } else { -1.0 / (1.0 - p) })
        .collect())
}

/// Working-model log-likelihood Σ y log q + (1−y) log(1−q) at ε.
fn working_loglik(offset: &[f64], h: &[f64], y: &[f64], eps: f64) -> f64 {
    offset
        .iter()
        .zip(h)
        .zip(y)
        .map(|((o, h), y)| {
            let eta = o + eps * h;
            // y·η − log(1 + e^η), overflow-safe
            let softplus = if eta > 0.0 {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            y * eta - softplus
        })
        .sum()
}

/// Maximum-likelihood ε of logit P(Y=1) = offset + ε·H (no intercept).
fn solve_epsilon(offset: &[f64], h: &[f64], y: &[f64]) -> Result<(f64, usize)> {
    let mut eps = 0.0;
    let mut ll = working_loglik(offset, h, y, eps);
    let mut trace = vec![eps];
    for iter in 1..=TARGETING_MAX_ITER {
        let (mut score, mut info) = (0.0, 0.0);
        for ((o, h), y) in offset.iter().zip(h).zip(y) {
            let q = expit(o + eps * h);
            score += h * (y - q);
            info += h * h * q * (1.0 - q);
        }
        if score == 0.0 {
            return Ok((eps, iter - 1));
        }
        if !(info > 0.0 && info.is_finite()) {
            return Err(Error::Targeting {
                iterations: iter,
                trace,
            });
        }
        let step = score / info;
        // slack for rounding noise in the log-likelihood near the optimum
        let slack = 1e-12 * ll.abs().max(1.0);
        let mut t = 1.0;
        let (mut next, mut next_ll);
        loop {
            next = eps + t * step;
            next_ll = working_loglik(offset, h, y, next);
            if next_ll >= ll - slack || t < 1e-8 {
                break;
            }
            t *= 0.5;
        }
        if !next_ll.is_finite() {
            return Err(Error::Targeting {
                iterations: iter,
                trace,
            });
        }
        let moved = (next - eps).abs();
        eps = next;
        ll = next_ll;
        trace.push(eps);
        if moved <= TARGETING_TOL {
            return Ok((eps, iter));
        }
    }
    Err(Error::Targeting {
        iterations: TARGETING_MAX_ITER,
        trace,
    })
}

/// One-step targeted maximum likelihood. Outcome predictions must lie
/// strictly inside (0, 1).
pub fn tmle(data: &Dataset, scores: &NuisanceScores) -> Result<(TargetingResult, AceEstimate)> {
    check_lengths(data, scores)?;
    check_positivity(&scores.pi)?;
    if let Some(row) = scores
        .m1
        .iter()
        .chain(&scores.m0)
        .position(|&m| !(m > 0.0 && m < 1.0))
    {
        return Err(Error::Domain(format!(
            "outcome prediction at position {row} is not strictly inside (0, 1)"
        )));
    }
    let x: Vec<u8> = data.rows().iter().map(|o| o.x).collect();
    let y = data.outcome();
    let h = clever_covariate(&x, &scores.pi)?;
    let offset: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| logit(if xi == 1 { scores.m1[i] } else { scores.m0[i] }))
        .collect();
    let (epsilon, iterations) = solve_epsilon(&offset, &h, &y)?;

    let m1_star: Vec<f64> = (0..x.len())
        .map(|i| expit(logit(scores.m1[i]) + epsilon / scores.pi[i]))
        .collect();
    let m0_star: Vec<f64> = (0..x.len())
        .map(|i| expit(logit(scores.m0[i]) - epsilon / (1.0 - scores.pi[i])))
        .collect();
    let psi = g_computation(&m1_star, &m0_star)?;
    let mut score = 0.0;
    let ic: Vec<f64> = (0..x.len())
        .map(|i| {
            let m_x = if x[i] == 1 { m1_star[i] } else { m0_star[i] };
            score += h[i] * (y[i] - m_x);
            h[i] * (y[i] - m_x) + m1_star[i] - m0_star[i] - psi
        })
        .collect();
    let estimate = AceEstimate::new(Method::Tmle, psi, ic_se(&ic), Some(ic));
    Ok((
        TargetingResult {
            epsilon,
            m1_star,
            m0_star,
            iterations,
            score,
        },
        estimate,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Confounders, Observation};

    fn obs(x: u8, y: u8, d: f64) -> Observation {
        Observation {
            z: Confounders {
                l: 4.5,
                a: 50.0,
                r: 0.1,
                d,
            },
            x,
            y,
        }
    }

    fn scores(pi: Vec<f64>, m1: Vec<f64>, m0: Vec<f64>) -> NuisanceScores {
        NuisanceScores {
            pi,
            m1,
            m0,
            provenance: "test".into(),
            clip_count: 0,
        }
    }

    #[test]
    fn g_computation_basics() {
        assert_eq!(g_computation(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        let v = g_computation(&[0.37; 5], &[0.29; 5]).unwrap();
        assert!((v - 0.08).abs() < 1e-15);
        assert!(g_computation(&[], &[]).is_err());
    }

    #[test]
    fn ipw_hand_computation() {
        let data = Dataset::new(vec![obs(1, 1, 0.0), obs(0, 0, 0.0)]).unwrap();
        let est = ipw(&data, &[0.5, 0.5], false).unwrap();
        assert_eq!(est.psi, 1.0);
    }

    #[test]
    fn ipw_rejects_degenerate_propensity() {
        let data = Dataset::new(vec![obs(1, 1, 0.0), obs(0, 0, 0.0)]).unwrap();
        assert!(matches!(
            ipw(&data, &[1.0, 0.5], false),
            Err(Error::Positivity { row: 0, .. })
        ));
    }

    #[test]
    fn clever_covariate_values() {
        let h = clever_covariate(&[1, 0, 1], &[0.5, 0.5, 0.25]).unwrap();
        assert_eq!(h, vec![2.0, -2.0, 4.0]);
    }

    #[test]
    fn ci_is_symmetric_wald() {
        let e = AceEstimate::new(Method::Aipw, 0.1, 0.02, None);
        assert!((e.ci_upper - e.ci_lower - 2.0 * Z_95 * 0.02).abs() < 1e-15);
        assert!(e.ci_lower <= e.psi && e.psi <= e.ci_upper);
    }

    #[test]
    fn constant_bootstrap_has_zero_se() {
        let data = Dataset::new(vec![obs(1, 1, 0.0), obs(0, 0, 1.0), obs(1, 0, 1.0)]).unwrap();
        let b = bootstrap_se(&data, 20, 1, |_, _| Ok(0.25)).unwrap();
        assert_eq!(b.se, 0.0);
        assert_eq!(b.failures, 0);
    }

    #[test]
    fn bootstrap_failure_budget() {
        let data = Dataset::new(vec![obs(1, 1, 0.0), obs(0, 0, 1.0)]).unwrap();
        let r = bootstrap_se(&data, 10, 1, |_, _| Err(Error::InvalidInput("no".into())));
        assert!(matches!(r, Err(Error::TooManyFailures { .. })));
    }

    #[test]
    fn tmle_with_zero_update_equals_plug_in() {
        // m already solves the score equation: Y equals m_X on every row type
        let data = Dataset::new(vec![
            obs(1, 1, 0.0),
            obs(1, 0, 0.0),
            obs(0, 1, 0.0),
            obs(0, 0, 0.0),
        ])
        .unwrap();
        let s = scores(vec![0.5; 4], vec![0.5; 4], vec![0.5; 4]);
        let (t, e) = tmle(&data, &s).unwrap();
        assert_eq!(t.epsilon, 0.0);
        assert_eq!(e.psi, 0.0);
    }

    #[test]
    fn hajek_matches_stratified_means_with_constant_pi() {
        let data = Dataset::new(vec![
            obs(1, 1, 0.0),
            obs(1, 0, 0.0),
            obs(1, 1, 0.0),
            obs(0, 1, 0.0),
            obs(0, 0, 0.0),
        ])
        .unwrap();
        let e = ipw(&data, &[0.3; 5], true).unwrap();
        assert!((e.psi - (2.0 / 3.0 - 0.5)).abs() < 1e-12);
    }
}
