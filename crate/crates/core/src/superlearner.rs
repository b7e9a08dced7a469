//! Cross-validated convex stacking of base learners.
//!
//! Out-of-fold predictions from k-fold cross-validation are combined with
//! simplex weights chosen to minimize the cross-validated Bernoulli
//! log-loss; every learner is then refit on the full data.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::learners::{FittedLearner, LearnerSpec};
use crate::rng::{derive_seed, rng_from_seed, SimRng};

/// Base predictions are clipped to this band before entering the log-loss.
pub const PREDICTION_CLIP: f64 = 1e-6;

/// Convergence tolerance of the meta-learner (Frank–Wolfe duality gap).
pub const META_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryEntry {
    pub name: String,
    pub learner: LearnerSpec,
}

/// Ordered, uniquely named set of base learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LearnerLibrary {
    pub entries: Vec<LibraryEntry>,
}

impl LearnerLibrary {
    pub fn new(entries: Vec<(&str, LearnerSpec)>) -> Result<Self> {
        let lib = Self {
            entries: entries
                .into_iter()
                .map(|(name, learner)| LibraryEntry {
                    name: name.to_string(),
                    learner,
                })
                .collect(),
        };
        lib.validate().map_err(Error::Config)?;
        Ok(lib)
    }

    /// The six-member library: empirical mean, main-effects logistic, two
    /// GAMs, a 500-tree forest and a 4-unit network.
    pub fn full() -> Self {
        Self::new(vec![
            ("empirical_mean", LearnerSpec::EmpiricalMean),
            ("logistic", LearnerSpec::logistic()),
            (
                "gam4",
                LearnerSpec::Gam {
                    n_splines: 4,
                    ridge_penalty: 0.6,
                },
            ),
            (
                "gam6",
                LearnerSpec::Gam {
                    n_splines: 6,
                    ridge_penalty: 0.6,
                },
            ),
            (
                "random_forest",
                LearnerSpec::RandomForest {
                    n_trees: 500,
                    min_leaf: 20,
                },
            ),
            (
                "neural_net",
                LearnerSpec::NeuralNet {
                    hidden: 4,
                    epochs: 2000,
                    learning_rate: 0.05,
                },
            ),
        ])
        .expect("valid library")
    }

    /// Same members with a smaller forest and a shorter network schedule,
    /// sized for workstation-scale simulation campaigns.
    pub fn desk() -> Self {
        Self::new(vec![
            ("empirical_mean", LearnerSpec::EmpiricalMean),
            ("logistic", LearnerSpec::logistic()),
            (
                "gam4",
                LearnerSpec::Gam {
                    n_splines: 4,
                    ridge_penalty: 0.6,
                },
            ),
            (
                "gam6",
                LearnerSpec::Gam {
                    n_splines: 6,
                    ridge_penalty: 0.6,
                },
            ),
            (
                "random_forest",
                LearnerSpec::RandomForest {
                    n_trees: 10,
                    min_leaf: 20,
                },
            ),
            (
                "neural_net",
                LearnerSpec::NeuralNet {
                    hidden: 4,
                    epochs: 100,
                    learning_rate: 1.0,
                },
            ),
        ])
        .expect("valid library")
    }

    /// All problems with the library, empty when valid.
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        if self.entries.is_empty() {
            problems.push("learner library is empty".to_string());
        }
        for (i, e) in self.entries.iter().enumerate() {
            if self.entries[..i].iter().any(|o| o.name == e.name) {
                problems.push(format!("duplicate learner name `{}`", e.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SuperLearnerModel {
    pub names: Vec<String>,
    /// Full-data fits; `None` for learners dropped after a fit failure.
    pub learners: Vec<Option<FittedLearner>>,
    pub weights: Vec<f64>,
    /// Validation fold of every training row.
    pub folds: Vec<usize>,
    /// Cross-validated log-loss per learner (`None` when dropped).
    pub cv_risk: Vec<Option<f64>>,
    /// Cross-validated log-loss of the weighted combination.
    pub ensemble_cv_risk: f64,
    /// Out-of-fold predictions (clipped), one column per learner.
    pub oof: Vec<Option<Vec<f64>>>,
    pub warnings: Vec<String>,
}

/// Random k-fold assignment with fold sizes differing by at most one.
pub fn assign_folds(n: usize, k: usize, rng: &mut SimRng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        folds[row] = pos % k;
    }
    folds
}

/// Mean Bernoulli log-loss of probabilities `q` (assumed inside (0, 1)).
pub fn log_loss(q: &[f64], y: &[f64]) -> f64 {
    -q.iter()
        .zip(y)
        .map(|(&q, &y)| if y > 0.5 { q.ln() } else { (1.0 - q).ln() })
        .sum::<f64>()
        / y.len() as f64
}

fn clip(p: f64) -> f64 {
    p.clamp(PREDICTION_CLIP, 1.0 - PREDICTION_CLIP)
}

fn combine(columns: &[&[f64]], w: &[f64], n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n];
    for (col, &wj) in columns.iter().zip(w) {
        if wj != 0.0 {
            for (qi, c) in q.iter_mut().zip(col.iter()) {
                *qi += wj * c;
            }
        }
    }
    q
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Simplex weights minimizing the log-loss of Σ wⱼ·columnⱼ.
///
/// Projected Newton: each step minimizes the local quadratic model over the
/// simplex, followed by a backtracking line search on the exact loss. The
/// search starts at the best single column and only accepts descent steps,
/// so the result never does worse than any individual column.
pub fn simplex_log_loss_weights(columns: &[&[f64]], y: &[f64]) -> (Vec<f64>, f64) {
    let k = columns.len();
    let n = y.len();
    let single: Vec<f64> = columns.iter().map(|c| log_loss(c, y)).collect();
    let best = (0..k)
        .min_by(|&a, &b| single[a].total_cmp(&single[b]))
        .unwrap_or(0);
    let mut w = vec![0.0; k];
    w[best] = 1.0;
    let mut loss = single[best];
    if k == 1 {
        return (w, loss);
    }

    for _ in 0..200 {
        let q = combine(columns, &w, n);
        let mut grad = vec![0.0; k];
        let mut hess = vec![0.0; k * k];
        for i in 0..n {
            let (g_i, c_i) = if y[i] > 0.5 {
                (-1.0 / q[i], 1.0 / (q[i] * q[i]))
            } else {
                (1.0 / (1.0 - q[i]), 1.0 / ((1.0 - q[i]) * (1.0 - q[i])))
            };
            for a in 0..k {
                let za = columns[a][i];
                grad[a] += g_i * za;
                for b in 0..=a {
                    hess[a * k + b] += c_i * za * columns[b][i];
                }
            }
        }
        for a in 0..k {
            grad[a] /= n as f64;
            for b in 0..=a {
                hess[a * k + b] /= n as f64;
                hess[b * k + a] = hess[a * k + b];
            }
        }

        // Frank–Wolfe gap bounds the suboptimality of the convex problem.
        let gw: f64 = grad.iter().zip(&w).map(|(g, w)| g * w).sum();
        let gmin = grad.iter().cloned().fold(f64::INFINITY, f64::min);
        if gw - gmin <= META_TOL {
            break;
        }

        // Minimize the quadratic model over the simplex (accelerated projected gradient).
        let lipschitz = (0..k).map(|a| hess[a * k + a]).sum::<f64>().max(1e-12);
        let model_grad = |v: &[f64]| -> Vec<f64> {
            (0..k)
                .map(|a| grad[a] + (0..k).map(|b| hess[a * k + b] * (v[b] - w[b])).sum::<f64>())
                .collect()
        };
        let mut v = w.clone();
        let mut prev = w.clone();
        let mut t = 1.0f64;
        for _ in 0..2000 {
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let momentum: Vec<f64> = v
                .iter()
                .zip(&prev)
                .map(|(a, b)| a + (t - 1.0) / t_next * (a - b))
                .collect();
            let g = model_grad(&momentum);
            let next = project_simplex(
                &momentum
                    .iter()
                    .zip(&g)
                    .map(|(m, g)| m - g / lipschitz)
                    .collect::<Vec<_>>(),
            );
            let change = next
                .iter()
                .zip(&v)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            prev = std::mem::replace(&mut v, next);
            t = t_next;
            if change < 1e-15 {
                break;
            }
        }
        let direction: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
        let slope: f64 = direction.iter().zip(&grad).map(|(d, g)| d * g).sum();
        if slope >= 0.0 {
            break;
        }

        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-12 {
            let cand: Vec<f64> = w
                .iter()
                .zip(&direction)
                .map(|(w, d)| w + step * d)
                .collect();
            let cand_loss = log_loss(&combine(columns, &cand, n), y);
            if cand_loss <= loss + 1e-4 * step * slope {
                w = cand;
                loss = cand_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    // Renormalize away rounding drift.
    let total: f64 = w.iter().sum();
    for wj in &mut w {
        *wj = (*wj / total).max(0.0);
    }
    let loss = log_loss(&combine(columns, &w, n), y);
    (w, loss)
}

pub fn fit_superlearner(
    library: &LearnerLibrary,
    x: &FeatureMatrix,
    y: &[f64],
    k: usize,
    rng: &mut SimRng,
) -> Result<SuperLearnerModel> {
    library.validate().map_err(Error::Config)?;
    let n = x.n_rows();
    if k < 2 {
        return Err(Error::InvalidInput(
            "super-learner needs at least 2 folds".into(),
        ));
    }
    if n < 2 * k {
        return Err(Error::InvalidInput(format!(
            "super-learner with {k} folds needs at least {} rows, got {n}",
            2 * k
        )));
    }
    if y.len() != n || y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput(
            "super-learner target must be 0/1 with one value per row".into(),
        ));
    }

    let folds = assign_folds(n, k, rng);
    let base_seed: u64 = rng.random();
    let fold_rows: Vec<(Vec<usize>, Vec<usize>)> = (0..k)
        .map(|f| {
            let (valid, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| folds[i] == f);
            (train, valid)
        })
        .collect();

    let m = library.len();
    let mut warnings = Vec::new();
    let mut oof: Vec<Option<Vec<f64>>> = Vec::with_capacity(m);
    let mut learners: Vec<Option<FittedLearner>> = Vec::with_capacity(m);

    for (j, entry) in library.entries.iter().enumerate() {
        let mut column = vec![0.0; n];
        let mut failure = None;
        for (f, (train, valid)) in fold_rows.iter().enumerate() {
            let mut fold_rng = rng_from_seed(derive_seed(base_seed, j as u64, f as u64));
            let x_train = x.select_rows(train);
            let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let fitted = entry
                .learner
                .fit(&x_train, &y_train, &mut fold_rng)
                .and_then(|model| model.predict_prob(&x.select_rows(valid)));
            match fitted {
                Ok(pred) => {
                    for (&i, p) in valid.iter().zip(pred) {
                        column[i] = clip(p);
                    }
                }
                Err(e) => {
                    failure = Some(format!("learner `{}` failed on fold {f}: {e}", entry.name));
                    break;
                }
            }
        }
        let full = match failure {
            Some(msg) => Err(msg),
            None => {
                let mut full_rng = rng_from_seed(derive_seed(base_seed, j as u64, k as u64));
                entry
                    .learner
                    .fit(x, y, &mut full_rng)
                    .map_err(|e| format!("learner `{}` failed on the full data: {e}", entry.name))
            }
        };
        match full {
            Ok(model) => {
                oof.push(Some(column));
                learners.push(Some(model));
            }
            Err(msg) => {
                warnings.push(msg);
                oof.push(None);
                learners.push(None);
            }
        }
    }

    let active: Vec<usize> = (0..m).filter(|&j| learners[j].is_some()).collect();
    if active.is_empty() {
        return Err(Error::fit(
            "super-learner",
            format!("every library member failed: {}", warnings.join("; ")),
        ));
    }
    let columns: Vec<&[f64]> = active
        .iter()
        .map(|&j| oof[j].as_deref().expect("active learner has predictions"))
        .collect();
    let (active_w, ensemble_cv_risk) = simplex_log_loss_weights(&columns, y);
    let mut weights = vec![0.0; m];
    for (&j, w) in active.iter().zip(active_w) {
        weights[j] = w;
    }
    let cv_risk = oof
        .iter()
        .map(|c| c.as_ref().map(|c| log_loss(c, y)))
        .collect();

    Ok(SuperLearnerModel {
        names: library.entries.iter().map(|e| e.name.clone()).collect(),
        learners,
        weights,
        folds,
        cv_risk,
        ensemble_cv_risk,
        oof,
        warnings,
    })
}

impl SuperLearnerModel {
    /// Σⱼ wⱼ · predictionⱼ over learners with non-zero weight.
    pub fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.n_rows()];
        for (learner, &w) in self.learners.iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            let pred = learner
                .as_ref()
                .expect("weighted learners are fitted")
                .predict_prob(x)?;
            for (o, p) in out.iter_mut().zip(pred) {
                *o += w * p;
            }
        }
        for o in &mut out {
            *o = o.clamp(0.0, 1.0);
        }
        Ok(out)
    }
}

/// Free-function form of [`SuperLearnerModel::predict`].
pub fn predict_superlearner(model: &SuperLearnerModel, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict(x)
}
