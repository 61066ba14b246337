//! Synthetic revision corpus with a known, nonlinear label rule.
//!
//! Every row has eight usable features and one dropped text column:
//!
//! | column    | kind        | distribution                              | missing |
//! |-----------|-------------|-------------------------------------------|---------|
//! | `x0`,`x1` | numeric     | uniform on `(-1, 1)`                      | none    |
//! | `x2`      | numeric     | standard normal                           | none    |
//! | `x3`      | numeric     | uniform on `(0, 1)`                       | 10%     |
//! | `x4`      | numeric     | standard normal, pure noise               | none    |
//! | `x5`      | numeric     | uniform on `(0, 1)`, pure noise           | 40%     |
//! | `user`    | categorical | `u0` … `u49` , uniform                    | none    |
//! | `tag`     | categorical | `t0` … `t7`, uniform                      | 5%      |
//! | `comment` | dropped     | free text                                 | none    |
//!
//! The vandalism log-odds are
//!
//! ```text
//! m = 3·d(x0, x1) + 1.5·(x2² − 1) + 2·[user index divisible by 5]
//!     + 1.2·(x3 − 0.5) + 0.5·[tag ∈ {t0, t1}] − 2.5
//! ```
//!
//! where `d = 1` inside the disc `x0² + x1² < 0.5` and `−1` outside, and a row
//! is labeled positive with probability `σ(6m)`. Both the disc and the `x2²`
//! term are symmetric around zero, so a linear model on the raw features
//! cannot rank them.
//! Rows are drawn until the requested number of each class is reached, so
//! class-conditional feature distributions follow the rule exactly. Each row
//! lands in a uniformly random batch; ids are unique across the corpus.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::{format_revision_row, FeatureKind, FeatureSchema, RevisionRecord, Value};
use crate::learners::sigmoid;
use crate::rng::{derive_seed, Pcg32};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub positives: usize,
    pub negatives: usize,
    pub batches: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    /// Subsampling with a negative ratio of 4 yields 5000 rows at prevalence 0.2.
    fn default() -> Self {
        SyntheticSpec {
            positives: 1000,
            negatives: 8000,
            batches: 3,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticBatch {
    pub batch_id: String,
    /// Rows in ascending revision id; labels are filled in.
    pub records: Vec<RevisionRecord>,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub schema: FeatureSchema,
    pub batches: Vec<SyntheticBatch>,
}

#[derive(Debug, Clone)]
pub struct SyntheticPaths {
    pub schema: PathBuf,
    pub batches: Vec<PathBuf>,
    pub truth: PathBuf,
}

pub fn synthetic_schema() -> FeatureSchema {
    let mut decls: Vec<(String, FeatureKind)> = (0..6).map(|i| (format!("x{i}"), FeatureKind::Numeric)).collect();
    decls.push(("user".into(), FeatureKind::Categorical));
    decls.push(("tag".into(), FeatureKind::Categorical));
    decls.push(("comment".into(), FeatureKind::Dropped));
    FeatureSchema::new(decls).expect("static schema is valid")
}

fn normal(rng: &mut Pcg32) -> f64 {
    let u1 = rng.open_unit_f64();
    let u2 = rng.unit_f64();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Rounds to 6 decimals so the TSV form is short and parses back exactly.
fn r6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn draw_row(rng: &mut Pcg32) -> (Vec<Value>, f64) {
    let x0 = r6(rng.unit_f64() * 2.0 - 1.0);
    let x1 = r6(rng.unit_f64() * 2.0 - 1.0);
    let x2 = r6(normal(rng));
    let x3 = r6(rng.unit_f64());
    let x3_missing = rng.unit_f64() < 0.10;
    let x4 = r6(normal(rng));
    let x5 = r6(rng.unit_f64());
    let x5_missing = rng.unit_f64() < 0.40;
    let user = rng.below(50);
    let tag = rng.below(8);
    let tag_missing = rng.unit_f64() < 0.05;
    let words = ["fix", "typo", "add label", "revert", "lol", "update"];
    let comment = words[rng.below_usize(words.len())];

    let disc = if x0 * x0 + x1 * x1 < 0.5 { 1.0 } else { -1.0 };
    let m = 3.0 * disc
        + 1.5 * (x2 * x2 - 1.0)
        + if user.is_multiple_of(5) { 2.0 } else { 0.0 }
        + if x3_missing { 0.0 } else { 1.2 * (x3 - 0.5) }
        + if !tag_missing && tag < 2 { 0.5 } else { 0.0 }
        - 2.5;
    let missing_or = |missing: bool, v: Value| if missing { Value::Missing } else { v };
    let values = vec![
        Value::Numeric(x0),
        Value::Numeric(x1),
        Value::Numeric(x2),
        missing_or(x3_missing, Value::Numeric(x3)),
        Value::Numeric(x4),
        missing_or(x5_missing, Value::Numeric(x5)),
        Value::Categorical(format!("u{user}")),
        missing_or(tag_missing, Value::Categorical(format!("t{tag}"))),
        Value::Dropped(comment.to_string()),
    ];
    (values, sigmoid(6.0 * m))
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    if spec.batches == 0 {
        return Err(Error::InvalidSampleConfig(
            "synthetic corpus needs at least one batch".into(),
        ));
    }
    let mut rng = Pcg32::seeded(derive_seed(spec.seed, "synthetic"));
    let schema = synthetic_schema();
    let batch_ids: Vec<String> = (0..spec.batches).map(|b| format!("batch{b:02}")).collect();
    let mut batches: Vec<SyntheticBatch> = batch_ids
        .iter()
        .map(|id| SyntheticBatch {
            batch_id: id.clone(),
            records: Vec::new(),
        })
        .collect();
    let (mut pos, mut neg) = (0, 0);
    let mut next_id: u64 = 10_000_000;
    while pos < spec.positives || neg < spec.negatives {
        let (values, p) = draw_row(&mut rng);
        let label = rng.unit_f64() < p;
        let keep = if label {
            pos < spec.positives
        } else {
            neg < spec.negatives
        };
        if !keep {
            continue;
        }
        if label {
            pos += 1;
        } else {
            neg += 1;
        }
        let b = rng.below_usize(spec.batches);
        batches[b].records.push(RevisionRecord {
            revision_id: next_id.to_string(),
            batch_id: batch_ids[b].clone(),
            values,
            label: Some(label),
        });
        next_id += 1;
    }
    Ok(SyntheticCorpus { schema, batches })
}

impl SyntheticCorpus {
    pub fn records(&self) -> impl Iterator<Item = &RevisionRecord> {
        self.batches.iter().flat_map(|b| b.records.iter())
    }

    /// Writes `schema.tsv`, one `<batch_id>.tsv` per batch and `truth.tsv`.
    pub fn write_to(&self, dir: &Path) -> Result<SyntheticPaths> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |path: PathBuf, text: String| -> Result<PathBuf> {
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        };
        let schema = write(dir.join("schema.tsv"), self.schema.to_text())?;
        let mut truth_text = String::new();
        let mut batches = Vec::new();
        for b in &self.batches {
            let mut text = String::new();
            for r in &b.records {
                text.push_str(&format_revision_row(r));
                text.push('\n');
                truth_text.push_str(&format!("{}\t{}\n", r.revision_id, r.label.unwrap_or(false)));
            }
            batches.push(write(dir.join(format!("{}.tsv", b.batch_id)), text)?);
        }
        let truth = write(dir.join("truth.tsv"), truth_text)?;
        Ok(SyntheticPaths { schema, batches, truth })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_revision_row;

    #[test]
    fn class_counts_are_exact() {
        let spec = SyntheticSpec {
            positives: 50,
            negatives: 120,
            batches: 4,
            seed: 3,
        };
        let c = generate(&spec).unwrap();
        let pos = c.records().filter(|r| r.label == Some(true)).count();
        assert_eq!(pos, 50);
        assert_eq!(c.records().count(), 170);
        assert_eq!(c.batches.len(), 4);
    }

    #[test]
    fn rows_survive_tsv() {
        let c = generate(&SyntheticSpec {
            positives: 20,
            negatives: 20,
            batches: 1,
            seed: 9,
        })
        .unwrap();
        for r in c.records() {
            let back = parse_revision_row(&format_revision_row(r), &c.schema, &r.batch_id).unwrap();
            assert_eq!(back.values, r.values);
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let spec = SyntheticSpec {
            positives: 10,
            negatives: 30,
            batches: 2,
            seed: 5,
        };
        let a: Vec<String> = generate(&spec).unwrap().records().map(format_revision_row).collect();
        let b: Vec<String> = generate(&spec).unwrap().records().map(format_revision_row).collect();
        assert_eq!(a, b);
    }
}
