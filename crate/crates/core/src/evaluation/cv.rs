//! K-fold grid search maximizing mean held-out ROC-AUC.
//!
//! The feature pipeline is refit inside every fold on that fold's training
//! portion only. All `(config, fold)` fits run in parallel and are reduced in
//! `(config, fold)` order, so results do not depend on the thread count.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::metrics::roc_auc;
use crate::error::{Error, Result};
use crate::features::{DesignMatrix, FeatureConfig, FeaturePipeline};
use crate::ingest::{FeatureSchema, RevisionRecord};
use crate::learners::{Hyperparams, LearnerKind, Model};
use crate::rng::{derive_indexed_seed, derive_seed};

/// Seed handed to a learner when fitting on the full training split.
pub fn model_seed(seed: u64, kind: LearnerKind) -> u64 {
    derive_seed(seed, &format!("model:{}", kind.as_str()))
}

fn fold_seed(seed: u64, kind: LearnerKind, fold: usize) -> u64 {
    derive_indexed_seed(model_seed(seed, kind), "cv:fold", fold as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvEntry {
    pub config: Hyperparams,
    /// Held-out ROC-AUC per fold, in fold order.
    pub fold_aucs: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation (denominator `k - 1`).
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub kind: LearnerKind,
    pub entries: Vec<CvEntry>,
    /// Index of the winning entry: highest mean, first in grid order on ties.
    pub best: usize,
}

impl CvResult {
    pub fn best_config(&self) -> &Hyperparams {
        &self.entries[self.best].config
    }

    pub fn to_tsv(&self) -> String {
        let k = self.entries.first().map_or(0, |e| e.fold_aucs.len());
        let mut out = String::from("config\tlearner\tparams\tmean_roc_auc\tstd_roc_auc");
        for f in 0..k {
            let _ = write!(out, "\tfold_{f}");
        }
        out.push_str("\tbest\n");
        for (i, e) in self.entries.iter().enumerate() {
            let _ = write!(out, "{i}\t{}\t{}\t{}\t{}", self.kind, e.config, e.mean, e.stddev);
            for a in &e.fold_aucs {
                let _ = write!(out, "\t{a}");
            }
            let _ = writeln!(out, "\t{}", if i == self.best { "*" } else { "" });
        }
        out
    }
}

fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Training and held-out matrices for one fold.
pub struct FoldData {
    pub pipeline: FeaturePipeline,
    pub train: DesignMatrix,
    pub held_out: DesignMatrix,
}

/// Fits one pipeline per fold on the rows outside that fold.
pub fn fold_pipelines(
    rows: &[RevisionRecord],
    folds: &[usize],
    schema: &FeatureSchema,
    feature_cfg: &FeatureConfig,
) -> Result<Vec<FoldData>> {
    if rows.len() != folds.len() {
        return Err(Error::MisalignedScores {
            tag: "folds".into(),
            expected: rows.len(),
            found: folds.len(),
        });
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    (0..k)
        .into_par_iter()
        .map(|f| {
            let (held, train): (Vec<_>, Vec<_>) = rows.iter().zip(folds).partition(|(_, &g)| g == f);
            let train: Vec<RevisionRecord> = train.into_iter().map(|(r, _)| r.clone()).collect();
            let held: Vec<RevisionRecord> = held.into_iter().map(|(r, _)| r.clone()).collect();
            let pipeline = FeaturePipeline::fit(&train, schema, feature_cfg)?;
            Ok(FoldData {
                train: pipeline.transform(&train)?,
                held_out: pipeline.transform(&held)?,
                pipeline,
            })
        })
        .collect()
}

/// Scores every config in `grid` by k-fold ROC-AUC over labeled training rows.
pub fn cross_validate(
    grid: &[Hyperparams],
    rows: &[RevisionRecord],
    folds: &[usize],
    schema: &FeatureSchema,
    feature_cfg: &FeatureConfig,
    seed: u64,
) -> Result<CvResult> {
    let kind = grid.first().ok_or(Error::EmptyGrid)?.kind();
    if let Some(other) = grid.iter().find(|h| h.kind() != kind) {
        return Err(Error::InvalidHyperparameter(format!(
            "grid mixes learners {kind} and {}",
            other.kind()
        )));
    }
    let data = fold_pipelines(rows, folds, schema, feature_cfg)?;
    let k = data.len();
    let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let aucs: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let fold = &data[f];
            let annotate = |source: Error| Error::Fold {
                config: c,
                fold: f,
                source: Box::new(source),
            };
            let model = grid[c].fit(&fold.train, fold_seed(seed, kind, f)).map_err(annotate)?;
            let scored = model.score(&fold.held_out).map_err(annotate)?;
            roc_auc(&scored.scores, fold.held_out.labels()?).map_err(annotate)
        })
        .collect::<Result<_>>()?;
    let entries: Vec<CvEntry> = grid
        .iter()
        .zip(aucs.chunks(k.max(1)))
        .map(|(config, fold_aucs)| {
            let (mean, stddev) = mean_and_stddev(fold_aucs);
            CvEntry {
                config: config.clone(),
                fold_aucs: fold_aucs.to_vec(),
                mean,
                stddev,
            }
        })
        .collect();
    let mut best = 0;
    for (i, e) in entries.iter().enumerate() {
        if e.mean > entries[best].mean {
            best = i;
        }
    }
    Ok(CvResult { kind, entries, best })
}

/// Fits the pipeline and the learner on the full training split.
pub fn fit_final(
    config: &Hyperparams,
    rows: &[RevisionRecord],
    schema: &FeatureSchema,
    feature_cfg: &FeatureConfig,
    seed: u64,
) -> Result<(FeaturePipeline, Model)> {
    let pipeline = FeaturePipeline::fit(rows, schema, feature_cfg)?;
    let matrix = pipeline.transform(rows)?;
    let model = config.fit(&matrix, model_seed(seed, config.kind()))?;
    Ok((pipeline, model))
}
