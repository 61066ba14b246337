//! Extremely randomized trees for binary classification.
//!
//! Every tree sees the whole training set (no bootstrap). At a node, up to `K`
//! features are drawn without replacement among those that are not constant
//! on the node, each gets one cut-point drawn uniformly inside its node range,
//! and the cut with the largest Gini decrease wins. A node becomes a leaf when
//! it is pure, holds fewer than `2 * min_samples_leaf` rows, or no candidate
//! cut leaves `min_samples_leaf` rows on both sides.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_labels, check_width};
use crate::error::{Error, Result};
use crate::features::DesignMatrix;
use crate::rng::{derive_indexed_seed, Pcg32};

/// Scores are kept inside `[ε, 1 - ε]`.
pub const SCORE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErtParams {
    pub n_trees: usize,
    /// `None` means `ceil(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for ErtParams {
    fn default() -> Self {
        ErtParams {
            n_trees: 300,
            features_per_split: None,
            min_samples_leaf: 1,
        }
    }
}

impl ErtParams {
    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ErtNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        positive_fraction: f64,
        n_samples: usize,
    },
}

impl fmt::Display for ErtNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ErtNode::Split {
                feature,
                threshold,
                left,
                right,
            } => write!(f, "split {feature} {threshold} {left} {right}"),
            ErtNode::Leaf {
                positive_fraction,
                n_samples,
            } => write!(f, "leaf {positive_fraction} {n_samples}"),
        }
    }
}

impl From<ErtNode> for String {
    fn from(n: ErtNode) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for ErtNode {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(' ').collect();
        let bad = || format!("malformed tree node `{s}`");
        match parts.as_slice() {
            ["split", f, t, l, r] => Ok(ErtNode::Split {
                feature: f.parse().map_err(|_| bad())?,
                threshold: t.parse().map_err(|_| bad())?,
                left: l.parse().map_err(|_| bad())?,
                right: r.parse().map_err(|_| bad())?,
            }),
            ["leaf", p, n] => Ok(ErtNode::Leaf {
                positive_fraction: p.parse().map_err(|_| bad())?,
                n_samples: n.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTree {
    pub nodes: Vec<ErtNode>,
}

impl ExtraTree {
    pub fn leaf_for(&self, row: &[f64]) -> &ErtNode {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                ErtNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
                leaf => return leaf,
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        match self.leaf_for(row) {
            ErtNode::Leaf { positive_fraction, .. } => *positive_fraction,
            ErtNode::Split { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraTreesForest {
    pub n_features: usize,
    pub params: ErtParams,
    pub seed: u64,
    pub trees: Vec<ExtraTree>,
}

/// Unnormalized Gini impurity `n * 2p(1-p)` of a node with `pos` positives.
fn gini_mass(n: usize, pos: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    2.0 * pos as f64 * (n - pos) as f64 / n as f64
}

fn draw_threshold(rng: &mut Pcg32, lo: f64, hi: f64) -> Option<f64> {
    let t = lo + rng.open_unit_f64() * (hi - lo);
    if t > lo && t < hi {
        return Some(t);
    }
    let mid = lo + (hi - lo) / 2.0;
    (mid > lo && mid < hi).then_some(mid)
}

struct Grower<'a> {
    matrix: &'a DesignMatrix,
    labels: &'a [bool],
    k: usize,
    min_leaf: usize,
    rng: Pcg32,
    features: Vec<usize>,
}

impl Grower<'_> {
    fn best_split(&mut self, idx: &[usize], pos: usize) -> Option<(usize, f64)> {
        let n = idx.len();
        let d = self.matrix.n_cols;
        let parent = gini_mass(n, pos);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut examined = 0;
        for i in 0..d {
            if examined == self.k {
                break;
            }
            let j = i + self.rng.below_usize(d - i);
            self.features.swap(i, j);
            let f = self.features[i];
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &r in idx {
                let x = self.matrix.get(r, f);
                lo = lo.min(x);
                hi = hi.max(x);
            }
            if hi <= lo {
                continue;
            }
            let Some(threshold) = draw_threshold(&mut self.rng, lo, hi) else {
                continue;
            };
            examined += 1;
            let (mut n_left, mut pos_left) = (0, 0);
            for &r in idx {
                if self.matrix.get(r, f) <= threshold {
                    n_left += 1;
                    pos_left += self.labels[r] as usize;
                }
            }
            let n_right = n - n_left;
            if n_left < self.min_leaf || n_right < self.min_leaf {
                continue;
            }
            let decrease = parent - gini_mass(n_left, pos_left) - gini_mass(n_right, pos - pos_left);
            if best.is_none_or(|(b, _, _)| decrease > b) {
                best = Some((decrease, f, threshold));
            }
        }
        best.map(|(_, f, t)| (f, t))
    }

    fn grow(mut self) -> ExtraTree {
        let n = self.matrix.n_rows;
        let mut idx: Vec<usize> = (0..n).collect();
        let mut nodes = vec![ErtNode::Leaf {
            positive_fraction: 0.0,
            n_samples: 0,
        }];
        let mut stack = vec![(0usize, 0usize, n)];
        while let Some((slot, start, end)) = stack.pop() {
            let count = end - start;
            let pos = idx[start..end].iter().filter(|&&r| self.labels[r]).count();
            let leaf = ErtNode::Leaf {
                positive_fraction: pos as f64 / count as f64,
                n_samples: count,
            };
            if pos == 0 || pos == count || count < 2 * self.min_leaf {
                nodes[slot] = leaf;
                continue;
            }
            let Some((feature, threshold)) = self.best_split(&idx[start..end], pos) else {
                nodes[slot] = leaf;
                continue;
            };
            // in-place partition: rows going left first
            let part = &mut idx[start..end];
            let mut split = 0;
            for i in 0..part.len() {
                if self.matrix.get(part[i], feature) <= threshold {
                    part.swap(i, split);
                    split += 1;
                }
            }
            let left = nodes.len();
            nodes.push(leaf);
            nodes.push(leaf);
            nodes[slot] = ErtNode::Split {
                feature,
                threshold,
                left,
                right: left + 1,
            };
            stack.push((left + 1, start + split, end));
            stack.push((left, start, start + split));
        }
        ExtraTree { nodes }
    }
}

pub fn ert_fit(matrix: &DesignMatrix, hp: &ErtParams, seed: u64) -> Result<ExtraTreesForest> {
    let labels = check_training_labels(matrix)?;
    if hp.n_trees == 0 {
        return Err(Error::InvalidHyperparameter("n_trees must be at least 1".into()));
    }
    if hp.min_samples_leaf == 0 {
        return Err(Error::InvalidHyperparameter(
            "min_samples_leaf must be at least 1".into(),
        ));
    }
    if hp.features_per_split == Some(0) {
        return Err(Error::InvalidHyperparameter(
            "features_per_split must be at least 1".into(),
        ));
    }
    let k = hp.resolved_features_per_split(matrix.n_cols);
    let trees = (0..hp.n_trees)
        .into_par_iter()
        .map(|t| {
            Grower {
                matrix,
                labels,
                k,
                min_leaf: hp.min_samples_leaf,
                rng: Pcg32::seeded(derive_indexed_seed(seed, "ert:tree", t as u64)),
                features: (0..matrix.n_cols).collect(),
            }
            .grow()
        })
        .collect();
    Ok(ExtraTreesForest {
        n_features: matrix.n_cols,
        params: hp.clone(),
        seed,
        trees,
    })
}

pub fn ert_score(forest: &ExtraTreesForest, matrix: &DesignMatrix) -> Result<Vec<f64>> {
    check_width(forest.n_features, matrix)?;
    let m = forest.trees.len() as f64;
    Ok((0..matrix.n_rows)
        .into_par_iter()
        .map(|i| {
            let row = matrix.row(i);
            let mean = forest.trees.iter().map(|t| t.predict(row)).sum::<f64>() / m;
            mean.clamp(SCORE_EPSILON, 1.0 - SCORE_EPSILON)
        })
        .collect())
}
