//! Campaign configuration files (TOML) and the named presets.
//!
//! Every field is written out when a configuration is serialized, unknown
//! keys are rejected, and validation reports all violations at once. The
//! master seed is deliberately not part of the file: it is supplied with
//! each run.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crossfit::Aggregation;
use crate::dgm::Mechanism;
use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::nuisance::{Bounds, NuisanceSpec};
use crate::superlearner::LearnerLibrary;

/// Nuisance recipes available to campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NuisanceChoice {
    Correct,
    MainEffects,
    SuperLearner,
}

impl NuisanceChoice {
    pub fn label(self) -> &'static str {
        match self {
            NuisanceChoice::Correct => "correct",
            NuisanceChoice::MainEffects => "main-effects",
            NuisanceChoice::SuperLearner => "super-learner",
        }
    }
}

impl std::str::FromStr for NuisanceChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(NuisanceChoice::Correct),
            "main-effects" => Ok(NuisanceChoice::MainEffects),
            "super-learner" => Ok(NuisanceChoice::SuperLearner),
            other => Err(Error::InvalidInput(format!(
                "unknown nuisance specification `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuperLearnerConfig {
    pub folds: usize,
    /// Bootstrap resamples for g-computation with super-learner nuisances;
    /// 0 skips the bootstrap and leaves the standard error undefined.
    pub bootstrap: usize,
    pub library: LearnerLibrary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    /// Rows per simulated sample.
    pub n: usize,
    pub replicates: usize,
    /// Population size of the true-effect oracle.
    pub oracle_size: usize,
    /// Partitions per double cross-fit estimate.
    pub partitions: usize,
    /// Bootstrap resamples for g-computation standard errors.
    pub bootstrap: usize,
    pub aggregation: Aggregation,
    /// Normalized (Hajek) instead of Horvitz-Thompson IPW.
    pub hajek: bool,
    pub estimators: Vec<Method>,
    pub nuisances: Vec<NuisanceChoice>,
    pub mechanism: Mechanism,
    pub bounds: Bounds,
    pub super_learner: SuperLearnerConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            other => Err(Error::InvalidInput(format!(
                "unknown preset `{other}` (expected desk or full)"
            ))),
        }
    }
}

impl CampaignConfig {
    /// Workstation-scale campaign: 500 replicates, 20 partitions,
    /// 100 bootstrap resamples and the reduced learner library.
    pub fn desk() -> Self {
        Self {
            n: 3000,
            replicates: 500,
            oracle_size: 10_000_000,
            partitions: 20,
            bootstrap: 100,
            aggregation: Aggregation::Median,
            hajek: false,
            estimators: Method::ALL.to_vec(),
            nuisances: vec![
                NuisanceChoice::Correct,
                NuisanceChoice::MainEffects,
                NuisanceChoice::SuperLearner,
            ],
            mechanism: Mechanism::STATIN,
            bounds: Bounds::default(),
            super_learner: SuperLearnerConfig {
                folds: DESK_FOLDS,
                bootstrap: 100,
                library: LearnerLibrary::desk(),
            },
        }
    }

    /// Full-scale campaign: 2000 replicates, 100 partitions, 250 bootstrap
    /// resamples, 10-fold super-learner with the full library.
    pub fn full() -> Self {
        Self {
            replicates: 2000,
            partitions: 100,
            bootstrap: 250,
            super_learner: SuperLearnerConfig {
                folds: 10,
                bootstrap: 250,
                library: LearnerLibrary::full(),
            },
            ..Self::desk()
        }
    }

    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Desk => Self::desk(),
            Preset::Full => Self::full(),
        }
    }

    pub fn nuisance_spec(&self, choice: NuisanceChoice) -> NuisanceSpec {
        match choice {
            NuisanceChoice::Correct => NuisanceSpec::correct(),
            NuisanceChoice::MainEffects => NuisanceSpec::main_effects(),
            NuisanceChoice::SuperLearner => NuisanceSpec::SuperLearner {
                library: self.super_learner.library.clone(),
                folds: self.super_learner.folds,
            },
        }
    }

    /// Bootstrap resamples used for g-computation under `choice`.
    pub fn bootstrap_for(&self, choice: NuisanceChoice) -> usize {
        match choice {
            NuisanceChoice::SuperLearner => self.super_learner.bootstrap,
            _ => self.bootstrap,
        }
    }

    /// Every problem with the configuration, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.n < 3 {
            v.push(format!("n must be at least 3, got {}", self.n));
        }
        if self.replicates < 2 {
            v.push(format!(
                "replicates must be at least 2, got {}",
                self.replicates
            ));
        }
        if self.oracle_size == 0 {
            v.push("oracle_size must be at least 1".to_string());
        }
        if self.partitions == 0 {
            v.push("partitions must be at least 1".to_string());
        }
        if self.bootstrap < 2 {
            v.push(format!(
                "bootstrap must be at least 2, got {}",
                self.bootstrap
            ));
        }
        if self.super_learner.bootstrap == 1 {
            v.push("super_learner.bootstrap must be 0 (disabled) or at least 2".to_string());
        }
        if self.estimators.is_empty() {
            v.push("estimators must not be empty".to_string());
        }
        for (i, m) in self.estimators.iter().enumerate() {
            if self.estimators[..i].contains(m) {
                v.push(format!("estimator `{}` listed twice", m.label()));
            }
        }
        if self.nuisances.is_empty() {
            v.push("nuisances must not be empty".to_string());
        }
        for (i, c) in self.nuisances.iter().enumerate() {
            if self.nuisances[..i].contains(c) {
                v.push(format!("nuisance `{}` listed twice", c.label()));
            }
        }
        if !(self.mechanism.ldl_threshold > 0.0 && self.mechanism.ldl_threshold.is_finite()) {
            v.push("mechanism.ldl_threshold must be positive".to_string());
        }
        if let Err(problems) = self.bounds.validate() {
            v.extend(problems);
        }
        if self.nuisances.contains(&NuisanceChoice::SuperLearner) {
            let folds = self.super_learner.folds;
            if folds < 2 {
                v.push(format!(
                    "super_learner.folds must be at least 2, got {folds}"
                ));
            }
            // the smallest training set is one cross-fit split
            if self.n / 3 < 2 * folds {
                v.push(format!(
                    "n = {} is too small for {folds}-fold super-learning within cross-fit splits",
                    self.n
                ));
            }
            if let Err(problems) = self.super_learner.library.validate() {
                v.extend(
                    problems
                        .into_iter()
                        .map(|p| format!("super_learner.library: {p}")),
                );
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}

/// Super-learner folds in the desk preset.
pub const DESK_FOLDS: usize = 5;
