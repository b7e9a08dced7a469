//! Nuisance-model recipes: feature construction and fitting of the
//! treatment model π(z) and the outcome model m_x(z).

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureMatrix, Observation};
use crate::dgm::Mechanism;
use crate::error::{Error, Result};
use crate::learners::{FittedLearner, LearnerSpec};
use crate::rng::SimRng;
use crate::superlearner::{fit_superlearner, LearnerLibrary, SuperLearnerModel};

/// Probability bounds applied to nuisance predictions before estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub pi_lower: f64,
    pub pi_upper: f64,
    pub m_lower: f64,
    pub m_upper: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            pi_lower: 0.001,
            pi_upper: 0.999,
            m_lower: 1e-6,
            m_upper: 1.0 - 1e-6,
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> std::result::Result<(), Vec<String>> {
        let mut problems = Vec::new();
        for (name, lo, hi) in [
            ("pi", self.pi_lower, self.pi_upper),
            ("m", self.m_lower, self.m_upper),
        ] {
            if !(0.0 <= lo && lo < hi && hi <= 1.0) {
                problems.push(format!(
                    "bounds for {name} must satisfy 0 <= lower < upper <= 1"
                ));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(problems)
        }
    }
}

/// Per-row nuisance predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceScores {
    pub pi: Vec<f64>,
    pub m1: Vec<f64>,
    pub m0: Vec<f64>,
    /// Which recipe produced the scores.
    pub provenance: String,
    /// Number of entries moved by [`NuisanceScores::bounded`].
    pub clip_count: usize,
}

impl NuisanceScores {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// Copy with every entry clipped to `bounds`, counting moved entries.
    pub fn bounded(&self, bounds: &Bounds) -> NuisanceScores {
        let mut clips = 0;
        let mut clip = |v: f64, lo: f64, hi: f64| {
            let c = v.clamp(lo, hi);
            if c != v {
                clips += 1;
            }
            c
        };
        let pi = self
            .pi
            .iter()
            .map(|&v| clip(v, bounds.pi_lower, bounds.pi_upper))
            .collect();
        let m1 = self
            .m1
            .iter()
            .map(|&v| clip(v, bounds.m_lower, bounds.m_upper))
            .collect();
        let m0 = self
            .m0
            .iter()
            .map(|&v| clip(v, bounds.m_lower, bounds.m_upper))
            .collect();
        NuisanceScores {
            pi,
            m1,
            m0,
            provenance: self.provenance.clone(),
            clip_count: self.clip_count + clips,
        }
    }
}

/// Parametric design families for both nuisance models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// The functional forms used by the simulation mechanism.
    Correct,
    /// Every confounder enters linearly, no interactions.
    MainEffects,
    /// One parameter per (X, D) cell; only valid when D is the sole confounder.
    Saturated,
}

/// How the nuisance functions are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum NuisanceSpec {
    Parametric {
        design: Design,
    },
    SuperLearner {
        library: LearnerLibrary,
        folds: usize,
    },
}

impl NuisanceSpec {
    pub fn correct() -> Self {
        Self::Parametric {
            design: Design::Correct,
        }
    }

    pub fn main_effects() -> Self {
        Self::Parametric {
            design: Design::MainEffects,
        }
    }

    pub fn saturated() -> Self {
        Self::Parametric {
            design: Design::Saturated,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Parametric {
                design: Design::Correct,
            } => "correct",
            Self::Parametric {
                design: Design::MainEffects,
            } => "main-effects",
            Self::Parametric {
                design: Design::Saturated,
            } => "saturated",
            Self::SuperLearner { .. } => "super-learner",
        }
    }
}

fn indicator(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// Treatment-model features for `design`.
pub fn treatment_features(
    design: Design,
    data: &Dataset,
    mechanism: Mechanism,
) -> Result<FeatureMatrix> {
    let rows = data.rows().iter();
    match design {
        Design::Correct => {
            let ldl_cut = mechanism.ldl_threshold.ln();
            FeatureMatrix::from_rows(
                &[
                    "D",
                    "L",
                    "I(L>cut)",
                    "A30",
                    "A30^2",
                    "R[.05,.075)",
                    "R[.075,.2)",
                    "R[.2,)",
                ],
                rows.map(|o| {
                    let z = o.z;
                    vec![
                        z.d,
                        z.l,
                        indicator(z.l > ldl_cut),
                        z.a - 30.0,
                        (z.a - 30.0).powi(2),
                        indicator((0.05..0.075).contains(&z.r)),
                        indicator((0.075..0.2).contains(&z.r)),
                        indicator(z.r >= 0.2),
                    ]
                }),
            )
        }
        Design::MainEffects => FeatureMatrix::from_rows(
            &["L", "A", "R", "D"],
            rows.map(|o| vec![o.z.l, o.z.a, o.z.r, o.z.d]),
        ),
        Design::Saturated => FeatureMatrix::from_rows(&["D"], rows.map(|o| vec![o.z.d])),
    }
}

/// Outcome-model features for `design`, with the treatment column set to
/// `x` when given (counterfactual prediction) or observed otherwise.
pub fn outcome_features(design: Design, data: &Dataset, x: Option<u8>) -> Result<FeatureMatrix> {
    let treat = |o: &Observation| f64::from(x.unwrap_or(o.x));
    let rows = data.rows().iter();
    match design {
        Design::Correct => {
            let (l130, l120) = (130f64.ln(), 120f64.ln());
            let mut out = Vec::with_capacity(data.len());
            for o in data.rows() {
                let z = o.z;
                if z.a < 39.0 {
                    return Err(Error::InvalidInput(format!(
                        "correct outcome design needs age >= 39, found {}",
                        z.a
                    )));
                }
                let xv = treat(o);
                out.push(vec![
                    xv,
                    xv * (5.0 - z.l) * indicator(z.l < l130),
                    (z.a - 39.0).sqrt(),
                    z.d,
                    (z.r + 1.0).exp(),
                    z.l * z.l * indicator(z.l > l120),
                ]);
            }
            FeatureMatrix::from_rows(
                &[
                    "X",
                    "X(5-L)I(L<130)",
                    "sqrt(A-39)",
                    "D",
                    "exp(R+1)",
                    "L^2 I(L>120)",
                ],
                out,
            )
        }
        Design::MainEffects => FeatureMatrix::from_rows(
            &["X", "L", "A", "R", "D"],
            rows.map(|o| vec![treat(o), o.z.l, o.z.a, o.z.r, o.z.d]),
        ),
        Design::Saturated => FeatureMatrix::from_rows(
            &["X", "D", "X:D"],
            rows.map(|o| {
                let xv = treat(o);
                vec![xv, o.z.d, xv * o.z.d]
            }),
        ),
    }
}

/// Super-learner features: raw confounders (and treatment for the outcome).
fn learner_treatment_features(data: &Dataset) -> Result<FeatureMatrix> {
    treatment_features(Design::MainEffects, data, Mechanism::STATIN)
}

fn learner_outcome_features(data: &Dataset, x: Option<u8>) -> Result<FeatureMatrix> {
    outcome_features(Design::MainEffects, data, x)
}

/// A fitted single-model predictor.
#[derive(Debug, Clone)]
pub enum Predictor {
    Parametric {
        design: Design,
        model: FittedLearner,
    },
    SuperLearner(Box<SuperLearnerModel>),
}

impl Predictor {
    fn predict(&self, features: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            Self::Parametric { model, .. } => model.predict_prob(features),
            Self::SuperLearner(sl) => sl.predict(features),
        }
    }
}

/// Fitted treatment model π(z).
#[derive(Debug, Clone)]
pub struct TreatmentModel {
    predictor: Predictor,
    mechanism: Mechanism,
}

impl TreatmentModel {
    pub fn predict(&self, data: &Dataset) -> Result<Vec<f64>> {
        let features = match &self.predictor {
            Predictor::Parametric { design, .. } => {
                treatment_features(*design, data, self.mechanism)?
            }
            Predictor::SuperLearner(_) => learner_treatment_features(data)?,
        };
        self.predictor.predict(&features)
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }
}

/// Fitted outcome model m_x(z), fit jointly on (X, Z).
#[derive(Debug, Clone)]
pub struct OutcomeModel {
    predictor: Predictor,
}

impl OutcomeModel {
    /// Predictions with the treatment column set to `x`.
    pub fn predict(&self, data: &Dataset, x: u8) -> Result<Vec<f64>> {
        let features = match &self.predictor {
            Predictor::Parametric { design, .. } => outcome_features(*design, data, Some(x))?,
            Predictor::SuperLearner(_) => learner_outcome_features(data, Some(x))?,
        };
        self.predictor.predict(&features)
    }

    pub fn predictor(&self) -> &Predictor {
        &self.predictor
    }
}

fn fit_parametric(
    design: Design,
    features: &FeatureMatrix,
    target: &[f64],
    rng: &mut SimRng,
) -> Result<Predictor> {
    let model = LearnerSpec::logistic().fit(features, target, rng)?;
    Ok(Predictor::Parametric { design, model })
}

pub fn fit_treatment(
    spec: &NuisanceSpec,
    data: &Dataset,
    mechanism: Mechanism,
    rng: &mut SimRng,
) -> Result<TreatmentModel> {
    let target = data.treatment();
    let predictor = match spec {
        NuisanceSpec::Parametric { design } => fit_parametric(
            *design,
            &treatment_features(*design, data, mechanism)?,
            &target,
            rng,
        )?,
        NuisanceSpec::SuperLearner { library, folds } => {
            Predictor::SuperLearner(Box::new(fit_superlearner(
                library,
                &learner_treatment_features(data)?,
                &target,
                *folds,
                rng,
            )?))
        }
    };
    Ok(TreatmentModel {
        predictor,
        mechanism,
    })
}

pub fn fit_outcome(spec: &NuisanceSpec, data: &Dataset, rng: &mut SimRng) -> Result<OutcomeModel> {
    let target = data.outcome();
    let predictor = match spec {
        NuisanceSpec::Parametric { design } => fit_parametric(
            *design,
            &outcome_features(*design, data, None)?,
            &target,
            rng,
        )?,
        NuisanceSpec::SuperLearner { library, folds } => {
            Predictor::SuperLearner(Box::new(fit_superlearner(
                library,
                &learner_outcome_features(data, None)?,
                &target,
                *folds,
                rng,
            )?))
        }
    };
    Ok(OutcomeModel { predictor })
}

/// Treatment and outcome models fit on the same data.
#[derive(Debug, Clone)]
pub struct FittedNuisance {
    pub label: String,
    pub treatment: TreatmentModel,
    pub outcome: OutcomeModel,
}

impl FittedNuisance {
    /// Unbounded predictions on `data`.
    pub fn score(&self, data: &Dataset) -> Result<NuisanceScores> {
        score_with(&self.treatment, &self.outcome, data, &self.label)
    }
}

/// Scores `data` with models that may have been fit elsewhere.
pub fn score_with(
    treatment: &TreatmentModel,
    outcome: &OutcomeModel,
    data: &Dataset,
    provenance: &str,
) -> Result<NuisanceScores> {
    Ok(NuisanceScores {
        pi: treatment.predict(data)?,
        m1: outcome.predict(data, 1)?,
        m0: outcome.predict(data, 0)?,
        provenance: provenance.to_string(),
        clip_count: 0,
    })
}

pub fn fit_nuisance(
    spec: &NuisanceSpec,
    data: &Dataset,
    mechanism: Mechanism,
    rng: &mut SimRng,
) -> Result<FittedNuisance> {
    let treatment = fit_treatment(spec, data, mechanism, rng)?;
    let outcome = fit_outcome(spec, data, rng)?;
    Ok(FittedNuisance {
        label: spec.label().to_string(),
        treatment,
        outcome,
    })
}
