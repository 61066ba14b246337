//! Second-order gradient boosted regression trees on the logistic loss.
//!
//! Each round computes `g = p - y` and `h = p(1 - p)` at the current margins
//! and grows one tree level by level with an exact scan over pre-sorted
//! feature columns. A split is scored by
//!
//! ```text
//! gain = ½ [G_L²/(H_L+λ) + G_R²/(H_R+λ) − (G_L+G_R)²/(H_L+H_R+λ)] − γ
//! ```
//!
//! and taken only when `gain > 0` and both children carry at least
//! `min_child_weight` hessian mass. Leaves store `−η·G/(H+λ)`, shrinkage
//! included, so a prediction is `σ(base_score + Σ leaf weights)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_training_labels, check_width, sigmoid};
use crate::error::{Error, Result};
use crate::features::DesignMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub l2: f64,
    pub min_split_gain: f64,
    pub min_child_weight: f64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            rounds: 300,
            learning_rate: 0.1,
            max_depth: 6,
            l2: 1.0,
            min_split_gain: 0.0,
            min_child_weight: 1.0,
        }
    }
}

pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, l2: f64, min_split_gain: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + l2);
    0.5 * (score(g_left, h_left) + score(g_right, h_right) - score(g_left + g_right, h_left + h_right)) - min_split_gain
}

/// Shrunken leaf weight `−η·G/(H+λ)`.
pub fn leaf_weight(g: f64, h: f64, l2: f64, learning_rate: f64) -> f64 {
    -learning_rate * g / (h + l2)
}

/// Log-odds of the positive rate.
pub fn base_score(positive_fraction: f64) -> f64 {
    (positive_fraction / (1.0 - positive_fraction)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum GbtNode {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        weight: f64,
    },
}

impl fmt::Display for GbtNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GbtNode::Split {
                feature,
                threshold,
                left,
                right,
            } => write!(f, "split {feature} {threshold} {left} {right}"),
            GbtNode::Leaf { weight } => write!(f, "leaf {weight}"),
        }
    }
}

impl From<GbtNode> for String {
    fn from(n: GbtNode) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for GbtNode {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(' ').collect();
        let bad = || format!("malformed tree node `{s}`");
        match parts.as_slice() {
            ["split", f, t, l, r] => Ok(GbtNode::Split {
                feature: f.parse().map_err(|_| bad())?,
                threshold: t.parse().map_err(|_| bad())?,
                left: l.parse().map_err(|_| bad())?,
                right: r.parse().map_err(|_| bad())?,
            }),
            ["leaf", w] => Ok(GbtNode::Leaf {
                weight: w.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<GbtNode>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                GbtNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
                GbtNode::Leaf { weight } => return weight,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtEnsemble {
    pub n_features: usize,
    pub base_score: f64,
    pub params: GbtParams,
    pub seed: u64,
    pub trees: Vec<RegressionTree>,
}

impl GbtEnsemble {
    pub fn margin(&self, row: &[f64]) -> f64 {
        self.trees.iter().fold(self.base_score, |m, t| m + t.predict(row))
    }
}

const NO_SLOT: u32 = u32::MAX;

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    g_left: f64,
    h_left: f64,
}

struct ActiveNode {
    node: usize,
    g: f64,
    h: f64,
}

/// Point strictly below `hi` and not below `lo`, so `x <= t` sends `lo` left and `hi` right.
fn cut_between(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid.is_finite() && mid >= lo && mid < hi {
        mid
    } else {
        lo
    }
}

struct TreeBuilder<'a> {
    matrix: &'a DesignMatrix,
    /// Per feature, `(row, value)` in ascending value order.
    sorted: &'a [Vec<(u32, f64)>],
    params: &'a GbtParams,
}

impl TreeBuilder<'_> {
    /// Best split per active node on one feature.
    fn scan_feature(
        &self,
        feature: usize,
        grad: &[f64],
        hess: &[f64],
        node_of_row: &[u32],
        slot_of_node: &[u32],
        active: &[ActiveNode],
    ) -> Vec<Option<Candidate>> {
        let p = self.params;
        let mut acc = vec![(0.0f64, 0.0f64, f64::NAN); active.len()];
        let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
        for &(r, x) in &self.sorted[feature] {
            let r = r as usize;
            let slot = slot_of_node[node_of_row[r] as usize];
            if slot == NO_SLOT {
                continue;
            }
            let a = slot as usize;
            let (gl, hl, last) = acc[a];
            if x > last {
                let (gr, hr) = (active[a].g - gl, active[a].h - hl);
                if hl >= p.min_child_weight && hr >= p.min_child_weight {
                    let gain = split_gain(gl, hl, gr, hr, p.l2, p.min_split_gain);
                    if best[a].is_none_or(|b| gain > b.gain) {
                        best[a] = Some(Candidate {
                            gain,
                            feature,
                            threshold: cut_between(last, x),
                            g_left: gl,
                            h_left: hl,
                        });
                    }
                }
            }
            acc[a] = (gl + grad[r], hl + hess[r], x);
        }
        best
    }

    /// Grows one tree; returns it with the leaf index of every training row.
    fn grow(&self, grad: &[f64], hess: &[f64]) -> (RegressionTree, Vec<u32>) {
        let n = self.matrix.n_rows;
        let p = self.params;
        let mut nodes = vec![GbtNode::Leaf { weight: 0.0 }];
        let mut node_of_row = vec![0u32; n];
        let mut active = vec![ActiveNode {
            node: 0,
            g: grad.iter().sum(),
            h: hess.iter().sum(),
        }];
        let mut depth = 0;
        while !active.is_empty() {
            if depth >= p.max_depth {
                for a in &active {
                    nodes[a.node] = GbtNode::Leaf {
                        weight: leaf_weight(a.g, a.h, p.l2, p.learning_rate),
                    };
                }
                break;
            }
            let mut slot_of_node = vec![NO_SLOT; nodes.len()];
            for (i, a) in active.iter().enumerate() {
                slot_of_node[a.node] = i as u32;
            }
            let per_feature: Vec<Vec<Option<Candidate>>> = (0..self.matrix.n_cols)
                .into_par_iter()
                .map(|f| self.scan_feature(f, grad, hess, &node_of_row, &slot_of_node, &active))
                .collect();
            // features in ascending order, strict improvement: ties keep the lowest feature
            let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
            for cands in per_feature {
                for (b, c) in best.iter_mut().zip(cands) {
                    if let Some(c) = c {
                        if b.is_none_or(|b| c.gain > b.gain) {
                            *b = Some(c);
                        }
                    }
                }
            }
            let mut next = Vec::new();
            let mut split_of_node: Vec<Option<(usize, f64, usize)>> = vec![None; nodes.len()];
            for (a, cand) in active.iter().zip(best) {
                match cand.filter(|c| c.gain > 0.0) {
                    Some(c) => {
                        let left = nodes.len();
                        nodes.push(GbtNode::Leaf { weight: 0.0 });
                        nodes.push(GbtNode::Leaf { weight: 0.0 });
                        nodes[a.node] = GbtNode::Split {
                            feature: c.feature,
                            threshold: c.threshold,
                            left,
                            right: left + 1,
                        };
                        split_of_node[a.node] = Some((c.feature, c.threshold, left));
                        next.push(ActiveNode {
                            node: left,
                            g: c.g_left,
                            h: c.h_left,
                        });
                        next.push(ActiveNode {
                            node: left + 1,
                            g: a.g - c.g_left,
                            h: a.h - c.h_left,
                        });
                    }
                    None => {
                        nodes[a.node] = GbtNode::Leaf {
                            weight: leaf_weight(a.g, a.h, p.l2, p.learning_rate),
                        };
                    }
                }
            }
            for (r, node) in node_of_row.iter_mut().enumerate() {
                if let Some(Some((f, t, left))) = split_of_node.get(*node as usize) {
                    *node = if self.matrix.get(r, *f) <= *t { *left } else { left + 1 } as u32;
                }
            }
            active = next;
            depth += 1;
        }
        (RegressionTree { nodes }, node_of_row)
    }
}

fn validate(hp: &GbtParams) -> Result<()> {
    let bad = |what: &str, v: f64| Err(Error::InvalidHyperparameter(format!("{what} = {v}")));
    if !(hp.learning_rate > 0.0 && hp.learning_rate.is_finite()) {
        return bad("learning_rate", hp.learning_rate);
    }
    if !(hp.l2 >= 0.0 && hp.l2.is_finite()) {
        return bad("l2", hp.l2);
    }
    if !(hp.min_split_gain >= 0.0 && hp.min_split_gain.is_finite()) {
        return bad("min_split_gain", hp.min_split_gain);
    }
    if !(hp.min_child_weight >= 0.0 && hp.min_child_weight.is_finite()) {
        return bad("min_child_weight", hp.min_child_weight);
    }
    Ok(())
}

pub fn gbt_fit(matrix: &DesignMatrix, hp: &GbtParams, seed: u64) -> Result<GbtEnsemble> {
    fit(matrix, hp, seed, false).map(|(m, _)| m)
}

/// Fits and also returns the mean training log loss before boosting and after every round.
pub fn gbt_fit_traced(matrix: &DesignMatrix, hp: &GbtParams, seed: u64) -> Result<(GbtEnsemble, Vec<f64>)> {
    fit(matrix, hp, seed, true)
}

fn fit(matrix: &DesignMatrix, hp: &GbtParams, seed: u64, traced: bool) -> Result<(GbtEnsemble, Vec<f64>)> {
    validate(hp)?;
    let labels = check_training_labels(matrix)?;
    let n = matrix.n_rows;
    let y: Vec<f64> = labels.iter().map(|&b| b as u8 as f64).collect();
    let prior = y.iter().sum::<f64>() / n as f64;
    let base = base_score(prior);
    let sorted: Vec<Vec<(u32, f64)>> = (0..matrix.n_cols)
        .into_par_iter()
        .map(|f| {
            let mut col: Vec<(u32, f64)> = (0..n).map(|r| (r as u32, matrix.get(r, f))).collect();
            col.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            col
        })
        .collect();
    let builder = TreeBuilder {
        matrix,
        sorted: &sorted,
        params: hp,
    };
    let mean_loss = |margins: &[f64]| {
        margins
            .iter()
            .zip(labels)
            .map(|(&z, &l)| super::log_loss(z, l))
            .sum::<f64>()
            / n as f64
    };
    let mut margins = vec![base; n];
    let mut trace = Vec::new();
    if traced {
        trace.push(mean_loss(&margins));
    }
    let mut trees = Vec::with_capacity(hp.rounds);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    for round in 0..hp.rounds {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - y[i];
            hess[i] = p * (1.0 - p);
        }
        let (tree, leaf_of_row) = builder.grow(&grad, &hess);
        for (m, &leaf) in margins.iter_mut().zip(&leaf_of_row) {
            if let GbtNode::Leaf { weight } = tree.nodes[leaf as usize] {
                *m += weight;
            }
        }
        if margins.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFiniteMargin { round });
        }
        if traced {
            trace.push(mean_loss(&margins));
        }
        trees.push(tree);
    }
    Ok((
        GbtEnsemble {
            n_features: matrix.n_cols,
            base_score: base,
            params: hp.clone(),
            seed,
            trees,
        },
        trace,
    ))
}

pub fn gbt_score(model: &GbtEnsemble, matrix: &DesignMatrix) -> Result<Vec<f64>> {
    check_width(model.n_features, matrix)?;
    Ok((0..matrix.n_rows)
        .into_par_iter()
        .map(|i| sigmoid(model.margin(matrix.row(i))))
        .collect())
}
