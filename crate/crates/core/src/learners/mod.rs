//! The three classifiers: SGD logistic regression, extremely randomized trees
//! and second-order gradient boosted trees.
//!
//! All of them consume a finite [`DesignMatrix`] and produce vandalism scores
//! strictly inside `(0, 1)`.

pub mod extra_trees;
pub mod gbt;
pub mod logistic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::DesignMatrix;

pub use extra_trees::{ErtParams, ExtraTree, ExtraTreesForest};
pub use gbt::{GbtEnsemble, GbtParams, RegressionTree};
pub use logistic::{LinearModel, LrParams};

/// Smallest and largest representable scores of the sigmoid learners.
const SIGMOID_FLOOR: f64 = f64::EPSILON / 2.0;
const SIGMOID_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept strictly inside `(0, 1)`.
pub fn sigmoid(z: f64) -> f64 {
    let p = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    p.clamp(SIGMOID_FLOOR, SIGMOID_CEIL)
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of margin `z` against label `y`.
pub fn log_loss(z: f64, y: bool) -> f64 {
    softplus(z) - if y { z } else { 0.0 }
}

pub(crate) fn check_training_labels(matrix: &DesignMatrix) -> Result<&[bool]> {
    let labels = matrix.labels()?;
    let pos = labels.iter().filter(|&&y| y).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::SingleClassTraining);
    }
    Ok(labels)
}

pub(crate) fn check_width(expected: usize, matrix: &DesignMatrix) -> Result<()> {
    if matrix.n_cols != expected {
        return Err(Error::DimensionMismatch {
            expected,
            found: matrix.n_cols,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Lr,
    Ert,
    Gbt,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 3] = [LearnerKind::Lr, LearnerKind::Ert, LearnerKind::Gbt];

    pub fn as_str(self) -> &'static str {
        match self {
            LearnerKind::Lr => "lr",
            LearnerKind::Ert => "ert",
            LearnerKind::Gbt => "gbt",
        }
    }

    /// Column label used in evaluation reports.
    pub fn tag(self) -> &'static str {
        match self {
            LearnerKind::Lr => "LR",
            LearnerKind::Ert => "ET",
            LearnerKind::Gbt => "GBT",
        }
    }

    pub fn default_params(self) -> Hyperparams {
        match self {
            LearnerKind::Lr => Hyperparams::Lr(LrParams::default()),
            LearnerKind::Ert => Hyperparams::Ert(ErtParams::default()),
            LearnerKind::Gbt => Hyperparams::Gbt(GbtParams::default()),
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lr" => Ok(LearnerKind::Lr),
            "ert" | "et" => Ok(LearnerKind::Ert),
            "gbt" | "xgb" => Ok(LearnerKind::Gbt),
            other => Err(Error::InvalidHyperparameter(format!("unknown learner `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Lr(LrParams),
    Ert(ErtParams),
    Gbt(GbtParams),
}

impl Hyperparams {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Hyperparams::Lr(_) => LearnerKind::Lr,
            Hyperparams::Ert(_) => LearnerKind::Ert,
            Hyperparams::Gbt(_) => LearnerKind::Gbt,
        }
    }

    pub fn fit(&self, matrix: &DesignMatrix, seed: u64) -> Result<Model> {
        Ok(match self {
            Hyperparams::Lr(p) => Model::Linear(logistic::lr_fit(matrix, p, seed)?),
            Hyperparams::Ert(p) => Model::ExtraTrees(extra_trees::ert_fit(matrix, p, seed)?),
            Hyperparams::Gbt(p) => Model::Gbt(gbt::gbt_fit(matrix, p, seed)?),
        })
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        match self {
            Hyperparams::Lr(p) => vec![
                ("learning_rate", p.learning_rate.to_string()),
                ("l2", p.l2.to_string()),
                ("epochs", p.epochs.to_string()),
            ],
            Hyperparams::Ert(p) => vec![
                ("n_trees", p.n_trees.to_string()),
                (
                    "features_per_split",
                    p.features_per_split
                        .map_or_else(|| "auto".to_string(), |k| k.to_string()),
                ),
                ("min_samples_leaf", p.min_samples_leaf.to_string()),
            ],
            Hyperparams::Gbt(p) => vec![
                ("rounds", p.rounds.to_string()),
                ("learning_rate", p.learning_rate.to_string()),
                ("max_depth", p.max_depth.to_string()),
                ("l2", p.l2.to_string()),
                ("min_split_gain", p.min_split_gain.to_string()),
                ("min_child_weight", p.min_child_weight.to_string()),
            ],
        }
    }

    /// Sets one named hyperparameter from its textual value.
    pub fn set(&mut self, name: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(name: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::InvalidHyperparameter(format!("{name} = `{value}`")))
        }
        match (self, name) {
            (Hyperparams::Lr(p), "learning_rate") => p.learning_rate = num(name, value)?,
            (Hyperparams::Lr(p), "l2") => p.l2 = num(name, value)?,
            (Hyperparams::Lr(p), "epochs") => p.epochs = num(name, value)?,
            (Hyperparams::Ert(p), "n_trees") => p.n_trees = num(name, value)?,
            (Hyperparams::Ert(p), "features_per_split") => {
                p.features_per_split = match value.trim() {
                    "auto" => None,
                    v => Some(num(name, v)?),
                }
            }
            (Hyperparams::Ert(p), "min_samples_leaf") => p.min_samples_leaf = num(name, value)?,
            (Hyperparams::Gbt(p), "rounds") => p.rounds = num(name, value)?,
            (Hyperparams::Gbt(p), "learning_rate") => p.learning_rate = num(name, value)?,
            (Hyperparams::Gbt(p), "max_depth") => p.max_depth = num(name, value)?,
            (Hyperparams::Gbt(p), "l2") => p.l2 = num(name, value)?,
            (Hyperparams::Gbt(p), "min_split_gain") => p.min_split_gain = num(name, value)?,
            (Hyperparams::Gbt(p), "min_child_weight") => p.min_child_weight = num(name, value)?,
            (hp, _) => {
                return Err(Error::InvalidHyperparameter(format!(
                    "`{name}` is not a {} hyperparameter",
                    hp.kind()
                )))
            }
        }
        Ok(())
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.entries().into_iter().map(|(k, v)| format!("{k}={v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A fitted classifier of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Model {
    #[serde(rename = "lr")]
    Linear(LinearModel),
    #[serde(rename = "ert")]
    ExtraTrees(ExtraTreesForest),
    Gbt(GbtEnsemble),
}

impl Model {
    pub fn kind(&self) -> LearnerKind {
        match self {
            Model::Linear(_) => LearnerKind::Lr,
            Model::ExtraTrees(_) => LearnerKind::Ert,
            Model::Gbt(_) => LearnerKind::Gbt,
        }
    }

    pub fn score(&self, matrix: &DesignMatrix) -> Result<ScoredOutput> {
        let scores = match self {
            Model::Linear(m) => logistic::lr_score(m, matrix)?,
            Model::ExtraTrees(m) => extra_trees::ert_score(m, matrix)?,
            Model::Gbt(m) => gbt::gbt_score(m, matrix)?,
        };
        Ok(ScoredOutput {
            row_ids: matrix.row_ids.clone(),
            scores,
        })
    }
}

/// One vandalism score per input row.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredOutput {
    pub row_ids: Vec<String>,
    pub scores: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_open_interval() {
        assert_eq!(sigmoid(0.0), 0.5);
        for z in [-1e6, -800.0, -40.0, 40.0, 800.0, 1e6] {
            let p = sigmoid(z);
            assert!(p > 0.0 && p < 1.0, "sigmoid({z}) = {p}");
        }
        assert!(sigmoid(10.0) > 0.9999);
    }

    #[test]
    fn log_loss_is_stable() {
        assert!((log_loss(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(log_loss(1000.0, true) < 1e-12);
        assert!((log_loss(1000.0, false) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn hyperparams_text_round_trip() {
        for kind in LearnerKind::ALL {
            let hp = kind.default_params();
            let mut back = kind.default_params();
            for (k, v) in hp.entries() {
                back.set(k, &v).unwrap();
            }
            assert_eq!(back, hp);
        }
        let mut hp = LearnerKind::Lr.default_params();
        assert!(hp.set("max_depth", "3").is_err());
        assert!(hp.set("epochs", "many").is_err());
    }
}
