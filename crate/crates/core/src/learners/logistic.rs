//! Logistic regression by (optionally ridge-penalized) iteratively
//! reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::expit;

/// Defaults for the unpenalized main-effects fit.
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_TOL: f64 = 1e-8;

/// |linear predictor| beyond which a fitted probability is treated as
/// saturated, i.e. evidence of (quasi-)complete separation.
const SEPARATION_ETA: f64 = 20.0;

/// Largest |y − p| on every row for the fit to count as completely separated.
const COMPLETE_SEPARATION_RESIDUAL: f64 = 1e-4;

/// Row-major design with an explicit intercept in column 0.
pub(crate) struct Design<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
    pub names: &'a [String],
}

impl Design<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(beta).map(|(x, b)| x * b).sum()
    }
}

/// Outcome of an IRLS fit.
#[derive(Debug, Clone)]
pub(crate) struct IrlsFit {
    pub beta: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn penalized_loglik(design: &Design, y: &[f64], beta: &[f64], penalty: &[f64]) -> f64 {
    let mut ll = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let eta = design.eta(beta, i);
        // log(1 + e^eta) without overflow
        let softplus = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        ll += yi * eta - softplus;
    }
    ll - 0.5
        * penalty
            .iter()
            .zip(beta)
            .map(|(l, b)| l * b * b)
            .sum::<f64>()
}

/// Maximizes Σ log-likelihood − ½ Σ penalty_j β_j² by Newton–Raphson.
///
/// Converged when the max-norm of the penalized score is ≤ `tol`.
pub(crate) fn irls(
    design: &Design,
    y: &[f64],
    penalty: &[f64],
    max_iter: usize,
    tol: f64,
    model: &'static str,
) -> Result<IrlsFit> {
    let p = design.cols;
    let n = design.rows;
    let mut beta = vec![0.0; p];
    let mut ll = penalized_loglik(design, y, &beta, penalty);
    let mut gradient_norm = f64::INFINITY;
    // One extra Newton step after reaching `tol` drives the score to rounding level.
    let mut polished = false;

    for iter in 0..max_iter {
        let mut grad = DVector::<f64>::zeros(p);
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let row = design.row(i);
            let mu = expit(design.eta(&beta, i));
            let w = mu * (1.0 - mu);
            let resid = y[i] - mu;
            for a in 0..p {
                grad[a] += row[a] * resid;
                let wa = w * row[a];
                for b in 0..=a {
                    hess[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            grad[a] -= penalty[a] * beta[a];
            hess[(a, a)] += penalty[a];
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        gradient_norm = grad.amax();
        if !gradient_norm.is_finite() {
            return Err(Error::Convergence {
                model,
                reason: "non-finite score".into(),
                columns: Vec::new(),
            });
        }
        if polished || (gradient_norm <= tol && iter + 1 == max_iter) {
            return Ok(IrlsFit {
                beta,
                iterations: iter,
                gradient_norm,
            });
        }
        polished = gradient_norm <= tol;

        let step = match hess.clone().cholesky() {
            Some(chol) => chol.solve(&grad),
            None => {
                return Err(Error::Convergence {
                    model,
                    reason: "information matrix is singular (rank deficient design)".into(),
                    columns: dependent_columns(design),
                })
            }
        };

        // Step halving keeps the (concave) objective monotone.
        let mut scale = 1.0;
        loop {
            let candidate: Vec<f64> = beta
                .iter()
                .zip(step.iter())
                .map(|(b, s)| b + scale * s)
                .collect();
            let cand_ll = penalized_loglik(design, y, &candidate, penalty);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || scale < 1e-10 {
                beta = candidate;
                ll = cand_ll;
                break;
            }
            scale *= 0.5;
        }
    }

    Err(Error::Convergence {
        model,
        reason: format!(
            "no convergence after {max_iter} iterations (score max-norm {gradient_norm:.3e})"
        ),
        columns: diverging_columns(design, &beta),
    })
}

/// Columns that are (numerically) linear combinations of earlier columns,
/// found by modified Gram–Schmidt.
fn dependent_columns(design: &Design) -> Vec<String> {
    let n = design.rows;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut offending = Vec::new();
    for j in 0..design.cols {
        let mut v: Vec<f64> = (0..n).map(|i| design.data[i * design.cols + j]).collect();
        let norm0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for q in &basis {
            let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= 1e-9 * norm0.max(1.0) {
            offending.push(design.names[j].clone());
        } else {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    offending
}

/// Columns whose contribution to the linear predictor is large enough to
/// push fitted probabilities to 0 or 1.
fn diverging_columns(design: &Design, beta: &[f64]) -> Vec<String> {
    let mut scored: Vec<(f64, usize)> = (1..design.cols)
        .map(|j| {
            let (lo, hi) = (0..design.rows)
                .map(|i| design.data[i * design.cols + j])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            ((beta[j] * (hi - lo)).abs(), j)
        })
        .filter(|(s, _)| *s > 5.0)
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored
        .into_iter()
        .map(|(_, j)| design.names[j].clone())
        .collect()
}

/// Fails when the fit reproduces every observed class (complete
/// separation). Quasi-complete separation, where only some rows are fitted
/// as certain, returns the offending columns instead so the caller can
/// record it; the fitted probabilities are then extreme but finite.
pub(crate) fn check_separation(
    design: &Design,
    y: &[f64],
    beta: &[f64],
    model: &'static str,
) -> Result<Vec<String>> {
    let mut perfect = true;
    let mut saturated = false;
    for (i, &yi) in y.iter().enumerate() {
        let eta = design.eta(beta, i);
        perfect &= (yi - expit(eta)).abs() < COMPLETE_SEPARATION_RESIDUAL;
        saturated |= eta.abs() > SEPARATION_ETA;
    }
    if perfect && saturated {
        return Err(Error::Convergence {
            model,
            reason: "complete separation: every row is fitted to its observed class".into(),
            columns: diverging_columns(design, beta),
        });
    }
    Ok(if saturated {
        diverging_columns(design, beta)
    } else {
        Vec::new()
    })
}

/// Unpenalized main-effects logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    /// Intercept first, then one coefficient per feature column.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Max-norm of the score at the returned coefficients.
    pub score_norm: f64,
    /// Columns driving quasi-complete separation; empty for a regular fit.
    pub separated_columns: Vec<String>,
}

impl LogisticModel {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub(crate) fn predict_row(&self, row: &[f64]) -> f64 {
        let eta = self.coefficients[0]
            + row
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        expit(eta)
    }
}

pub(crate) fn with_intercept(x: &crate::data::FeatureMatrix) -> (Vec<f64>, Vec<String>) {
    let p = x.n_cols() + 1;
    let mut data = Vec::with_capacity(x.n_rows() * p);
    for i in 0..x.n_rows() {
        data.push(1.0);
        data.extend_from_slice(x.row(i));
    }
    let mut names = vec!["(intercept)".to_string()];
    names.extend(x.names().iter().cloned());
    (data, names)
}

pub(crate) fn fit(
    x: &crate::data::FeatureMatrix,
    y: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<LogisticModel> {
    let (data, names) = with_intercept(x);
    let design = Design {
        rows: x.n_rows(),
        cols: names.len(),
        data: &data,
        names: &names,
    };
    let penalty = vec![0.0; design.cols];
    let fit = irls(&design, y, &penalty, max_iter, tol, "logistic regression")?;
    let separated_columns = check_separation(&design, y, &fit.beta, "logistic regression")?;
    Ok(LogisticModel {
        coefficients: fit.beta,
        iterations: fit.iterations,
        score_norm: fit.gradient_norm,
        separated_columns,
    })
}
