//! Base prediction algorithms for binary targets.
//!
//! Every learner is fit on a [`FeatureMatrix`] and a 0/1 target and returns
//! a [`FittedLearner`] whose predictions are probabilities. Fitted learners
//! are immutable and remember the column schema they were trained on.

pub mod forest;
pub mod gam;
pub mod logistic;
pub mod neural;

use serde::{Deserialize, Serialize};

use crate::data::FeatureMatrix;
use crate::error::{Error, Result};
use crate::rng::SimRng;

pub use forest::RandomForest;
pub use gam::GamModel;
pub use logistic::LogisticModel;
pub use neural::NeuralNet;

/// A learner with fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    EmpiricalMean,
    Logistic {
        max_iter: usize,
        tol: f64,
    },
    Gam {
        n_splines: usize,
        ridge_penalty: f64,
    },
    RandomForest {
        n_trees: usize,
        min_leaf: usize,
    },
    NeuralNet {
        hidden: usize,
        epochs: usize,
        learning_rate: f64,
    },
}

impl LearnerSpec {
    pub fn logistic() -> Self {
        LearnerSpec::Logistic {
            max_iter: logistic::DEFAULT_MAX_ITER,
            tol: logistic::DEFAULT_TOL,
        }
    }

    pub fn fit(&self, x: &FeatureMatrix, y: &[f64], rng: &mut SimRng) -> Result<FittedLearner> {
        match *self {
            LearnerSpec::EmpiricalMean => fit_empirical_mean(x, y),
            LearnerSpec::Logistic { max_iter, tol } => fit_logistic(x, y, max_iter, tol),
            LearnerSpec::Gam {
                n_splines,
                ridge_penalty,
            } => fit_gam(x, y, n_splines, ridge_penalty),
            LearnerSpec::RandomForest { n_trees, min_leaf } => {
                fit_random_forest(x, y, n_trees, min_leaf, rng)
            }
            LearnerSpec::NeuralNet {
                hidden,
                epochs,
                learning_rate,
            } => fit_neural_net(x, y, hidden, epochs, learning_rate, rng),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LearnerSpec::EmpiricalMean => "empirical_mean",
            LearnerSpec::Logistic { .. } => "logistic",
            LearnerSpec::Gam { .. } => "gam",
            LearnerSpec::RandomForest { .. } => "random_forest",
            LearnerSpec::NeuralNet { .. } => "neural_net",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Constant(f64),
    Logistic(LogisticModel),
    Gam(GamModel),
    Forest(RandomForest),
    Net(NeuralNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedLearner {
    pub kind: &'static str,
    pub model: FittedModel,
    schema: Vec<String>,
}

impl FittedLearner {
    fn new(kind: &'static str, model: FittedModel, x: &FeatureMatrix) -> Self {
        Self {
            kind,
            model,
            schema: x.names().to_vec(),
        }
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    /// Predicted Pr(y = 1) for every row of `x`.
    pub fn predict_prob(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        x.check_schema(&self.schema)?;
        let n = x.n_rows();
        let mut buf = Vec::new();
        let out = match &self.model {
            FittedModel::Constant(c) => vec![*c; n],
            FittedModel::Logistic(m) => (0..n).map(|i| m.predict_row(x.row(i))).collect(),
            FittedModel::Gam(m) => (0..n).map(|i| m.predict_row(x.row(i), &mut buf)).collect(),
            FittedModel::Forest(m) => (0..n).map(|i| m.predict_row(x.row(i))).collect(),
            FittedModel::Net(m) => (0..n).map(|i| m.predict_row(x.row(i), &mut buf)).collect(),
        };
        Ok(out)
    }
}

/// Free-function form of [`FittedLearner::predict_prob`].
pub fn predict_prob(model: &FittedLearner, x: &FeatureMatrix) -> Result<Vec<f64>> {
    model.predict_prob(x)
}

fn check_target(x: &FeatureMatrix, y: &[f64]) -> Result<()> {
    if y.len() != x.n_rows() {
        return Err(Error::InvalidInput(format!(
            "target has {} values for {} rows",
            y.len(),
            x.n_rows()
        )));
    }
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidInput("target must be 0/1".into()));
    }
    Ok(())
}

pub fn fit_empirical_mean(x: &FeatureMatrix, y: &[f64]) -> Result<FittedLearner> {
    check_target(x, y)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(FittedLearner::new(
        "empirical_mean",
        FittedModel::Constant(mean),
        x,
    ))
}

pub fn fit_logistic(
    x: &FeatureMatrix,
    y: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<FittedLearner> {
    check_target(x, y)?;
    let model = logistic::fit(x, y, max_iter, tol)?;
    Ok(FittedLearner::new(
        "logistic",
        FittedModel::Logistic(model),
        x,
    ))
}

pub fn fit_gam(
    x: &FeatureMatrix,
    y: &[f64],
    n_splines: usize,
    ridge_penalty: f64,
) -> Result<FittedLearner> {
    check_target(x, y)?;
    let model = gam::fit(x, y, n_splines, ridge_penalty)?;
    Ok(FittedLearner::new("gam", FittedModel::Gam(model), x))
}

pub fn fit_random_forest(
    x: &FeatureMatrix,
    y: &[f64],
    n_trees: usize,
    min_leaf: usize,
    rng: &mut SimRng,
) -> Result<FittedLearner> {
    check_target(x, y)?;
    let model = forest::fit(x, y, n_trees, min_leaf, rng)?;
    Ok(FittedLearner::new(
        "random_forest",
        FittedModel::Forest(model),
        x,
    ))
}

pub fn fit_neural_net(
    x: &FeatureMatrix,
    y: &[f64],
    hidden: usize,
    epochs: usize,
    learning_rate: f64,
    rng: &mut SimRng,
) -> Result<FittedLearner> {
    check_target(x, y)?;
    let model = neural::fit(x, y, hidden, epochs, learning_rate, rng)?;
    Ok(FittedLearner::new("neural_net", FittedModel::Net(model), x))
}
