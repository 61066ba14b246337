//! Feature selection, median imputation and spam-count encoding.
//!
//! Everything here is fitted on training rows only and then applied unchanged
//! to validation, test and scoring rows. Categorical columns are replaced by a
//! pair of numbers: a smoothed spam probability `(s + alpha*g) / (n + alpha)`
//! and the raw spam count `s`, where `n` is how often the value occurred in
//! training, `s` how often it was labeled vandalism and `g` the global spam
//! rate of the feature. Unseen and missing values encode as `(g, 0)`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FeatureDecl, FeatureKind, FeatureSchema, RevisionRecord, Value};

pub const DEFAULT_MISSINGNESS_THRESHOLD: f64 = 0.25;
pub const DEFAULT_SMOOTHING: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    /// Features missing from strictly more than this fraction of training rows are excluded.
    pub missingness_threshold: f64,
    /// Pseudo-count pulling rare categorical values toward the global spam rate.
    pub smoothing: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            missingness_threshold: DEFAULT_MISSINGNESS_THRESHOLD,
            smoothing: DEFAULT_SMOOTHING,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessReport {
    /// Non-dropped features in schema order.
    pub fractions: Vec<(String, f64)>,
    pub rows: usize,
}

impl MissingnessReport {
    pub fn fraction(&self, name: &str) -> Option<f64> {
        self.fractions.iter().find(|(n, _)| n == name).map(|(_, f)| *f)
    }
}

fn check_width(row: &RevisionRecord, schema_len: usize) -> Result<()> {
    if row.values.len() != schema_len {
        return Err(Error::SchemaMismatch(format!(
            "row `{}` has {} values, schema has {}",
            row.revision_id,
            row.values.len(),
            schema_len
        )));
    }
    Ok(())
}

pub fn compute_missingness(rows: &[RevisionRecord], schema: &FeatureSchema) -> Result<MissingnessReport> {
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut missing = vec![0usize; schema.len()];
    for row in rows {
        check_width(row, schema.len())?;
        for (m, v) in missing.iter_mut().zip(&row.values) {
            if v.is_missing() {
                *m += 1;
            }
        }
    }
    let n = rows.len();
    let fractions = schema
        .decls()
        .iter()
        .filter(|d| d.kind != FeatureKind::Dropped)
        .map(|d| (d.name.clone(), missing[d.source_index] as f64 / n as f64))
        .collect();
    Ok(MissingnessReport { fractions, rows: n })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ExclusionReason {
    Dropped,
    Missingness(f64),
}

/// The features that survive selection, in raw schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedSchema {
    pub features: Vec<FeatureDecl>,
    pub excluded: Vec<(String, ExclusionReason)>,
}

impl RetainedSchema {
    pub fn numeric(&self) -> impl Iterator<Item = &FeatureDecl> {
        self.features.iter().filter(|d| d.kind == FeatureKind::Numeric)
    }

    pub fn categorical(&self) -> impl Iterator<Item = &FeatureDecl> {
        self.features.iter().filter(|d| d.kind == FeatureKind::Categorical)
    }

    /// Design-matrix column names: one per numeric feature, two per categorical one.
    pub fn column_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for d in &self.features {
            match d.kind {
                FeatureKind::Numeric => out.push(d.name.clone()),
                FeatureKind::Categorical => {
                    out.push(format!("{}:spam_prob", d.name));
                    out.push(format!("{}:spam_count", d.name));
                }
                FeatureKind::Dropped => {}
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.numeric().count() + 2 * self.categorical().count()
    }
}

pub fn select_features(report: &MissingnessReport, threshold: f64, schema: &FeatureSchema) -> Result<RetainedSchema> {
    let mut features = Vec::new();
    let mut excluded = Vec::new();
    for d in schema.decls() {
        if d.kind == FeatureKind::Dropped {
            excluded.push((d.name.clone(), ExclusionReason::Dropped));
            continue;
        }
        let frac = report
            .fraction(&d.name)
            .ok_or_else(|| Error::SchemaMismatch(format!("no missingness entry for `{}`", d.name)))?;
        if frac > threshold {
            excluded.push((d.name.clone(), ExclusionReason::Missingness(frac)));
        } else {
            features.push(d.clone());
        }
    }
    if features.is_empty() {
        return Err(Error::NoFeaturesRetained);
    }
    Ok(RetainedSchema { features, excluded })
}

/// Training medians of the retained numeric features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerState {
    pub medians: BTreeMap<String, f64>,
    pub fitted_on: usize,
}

/// Median of a non-empty slice; the mean of the two middle values for even lengths.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        let (a, b) = (values[n / 2 - 1], values[n / 2]);
        a + (b - a) / 2.0
    })
}

pub fn fit_medians(rows: &[RevisionRecord], retained: &RetainedSchema) -> Result<ImputerState> {
    let mut medians = BTreeMap::new();
    for d in retained.numeric() {
        let mut observed: Vec<f64> = rows
            .iter()
            .filter_map(|r| match r.values.get(d.source_index) {
                Some(Value::Numeric(x)) => Some(*x),
                _ => None,
            })
            .collect();
        let m = median(&mut observed).ok_or_else(|| Error::AllMissingFeature(d.name.clone()))?;
        medians.insert(d.name.clone(), m);
    }
    Ok(ImputerState {
        medians,
        fitted_on: rows.len(),
    })
}

/// Occurrence and spam counts of one categorical feature's values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamStats {
    /// value -> (occurrences n, spam count s)
    pub counts: BTreeMap<String, (u64, u64)>,
    /// Σs / Σn over the fitting rows.
    pub global_rate: f64,
}

impl SpamStats {
    /// `(p̂, s)` for a value; `None` stands for a missing value.
    pub fn encode(&self, value: Option<&str>, alpha: f64) -> (f64, f64) {
        match value.and_then(|v| self.counts.get(v)) {
            Some(&(n, s)) => (smoothed_probability(n, s, self.global_rate, alpha), s as f64),
            None => (self.global_rate, 0.0),
        }
    }
}

/// `(s + alpha*g) / (n + alpha)`; exactly `g` when there is nothing to count.
pub fn smoothed_probability(n: u64, s: u64, global_rate: f64, alpha: f64) -> f64 {
    let denom = n as f64 + alpha;
    if denom <= 0.0 {
        return global_rate;
    }
    (s as f64 + alpha * global_rate) / denom
}

/// Counts occurrences and spam labels of each value of `decl` over `rows`.
///
/// When the feature is missing everywhere the global rate falls back to the
/// label rate of `rows`.
pub fn fit_spam_stats(rows: &[RevisionRecord], decl: &FeatureDecl) -> Result<SpamStats> {
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let (mut total_n, mut total_s, mut label_pos) = (0u64, 0u64, 0u64);
    for r in rows {
        let label = r.label.ok_or_else(|| Error::UnlabeledRow(r.revision_id.clone()))?;
        label_pos += label as u64;
        if let Some(Value::Categorical(v)) = r.values.get(decl.source_index) {
            let e = counts.entry(v.clone()).or_insert((0, 0));
            e.0 += 1;
            e.1 += label as u64;
            total_n += 1;
            total_s += label as u64;
        }
    }
    let global_rate = if total_n > 0 {
        total_s as f64 / total_n as f64
    } else if !rows.is_empty() {
        label_pos as f64 / rows.len() as f64
    } else {
        0.0
    };
    Ok(SpamStats { counts, global_rate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpamStatsTable {
    pub alpha: f64,
    pub features: BTreeMap<String, SpamStats>,
}

/// Dense row-major numeric matrix with aligned labels and row ids.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub values: Vec<f64>,
    pub column_names: Vec<String>,
    pub row_ids: Vec<String>,
    /// Present when every row is labeled.
    pub labels: Option<Vec<bool>>,
}

impl DesignMatrix {
    pub fn new(n_cols: usize, values: Vec<f64>, row_ids: Vec<String>, labels: Option<Vec<bool>>) -> Self {
        let n_rows = row_ids.len();
        assert_eq!(values.len(), n_rows * n_cols, "matrix shape");
        if let Some(l) = &labels {
            assert_eq!(l.len(), n_rows, "label count");
        }
        DesignMatrix {
            n_rows,
            n_cols,
            values,
            column_names: (0..n_cols).map(|j| format!("x{j}")).collect(),
            row_ids,
            labels,
        }
    }

    /// Unlabeled-id convenience for tests and small fixtures.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[bool]) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let values = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        DesignMatrix::new(n_cols, values, ids, Some(labels.to_vec()))
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols + j]
    }

    pub fn labels(&self) -> Result<&[bool]> {
        self.labels
            .as_deref()
            .ok_or_else(|| Error::UnlabeledRow(self.row_ids.first().cloned().unwrap_or_default()))
    }

    /// Rows at `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        DesignMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
            column_names: self.column_names.clone(),
            row_ids: indices.iter().map(|&i| self.row_ids[i].clone()).collect(),
            labels: self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

/// Encodes rows with already-fitted state.
pub fn transform(
    rows: &[RevisionRecord],
    raw_len: usize,
    retained: &RetainedSchema,
    imputer: &ImputerState,
    spam: &SpamStatsTable,
) -> Result<DesignMatrix> {
    let width = retained.width();
    let encoded: Vec<Vec<f64>> = rows
        .par_iter()
        .map(|row| encode_row(row, raw_len, retained, imputer, spam))
        .collect::<Result<_>>()?;
    let mut values = Vec::with_capacity(rows.len() * width);
    for r in encoded {
        values.extend(r);
    }
    let labels = rows.iter().map(|r| r.label).collect::<Option<Vec<bool>>>();
    Ok(DesignMatrix {
        n_rows: rows.len(),
        n_cols: width,
        values,
        column_names: retained.column_names(),
        row_ids: rows.iter().map(|r| r.revision_id.clone()).collect(),
        labels,
    })
}

fn encode_row(
    row: &RevisionRecord,
    raw_len: usize,
    retained: &RetainedSchema,
    imputer: &ImputerState,
    spam: &SpamStatsTable,
) -> Result<Vec<f64>> {
    check_width(row, raw_len)?;
    let mismatch = |d: &FeatureDecl| {
        Error::SchemaMismatch(format!(
            "row `{}` holds the wrong kind of value for `{}`",
            row.revision_id, d.name
        ))
    };
    let mut out = Vec::with_capacity(retained.width());
    for d in &retained.features {
        let value = &row.values[d.source_index];
        match d.kind {
            FeatureKind::Numeric => {
                let x = match value {
                    Value::Numeric(x) => *x,
                    Value::Missing => *imputer
                        .medians
                        .get(&d.name)
                        .ok_or_else(|| Error::SchemaMismatch(format!("no median for `{}`", d.name)))?,
                    _ => return Err(mismatch(d)),
                };
                out.push(x);
            }
            FeatureKind::Categorical => {
                let stats = spam
                    .features
                    .get(&d.name)
                    .ok_or_else(|| Error::SchemaMismatch(format!("no spam table for `{}`", d.name)))?;
                let v = match value {
                    Value::Categorical(s) => Some(s.as_str()),
                    Value::Missing => None,
                    _ => return Err(mismatch(d)),
                };
                let (p, s) = stats.encode(v, spam.alpha);
                out.push(p);
                out.push(s);
            }
            FeatureKind::Dropped => {}
        }
    }
    Ok(out)
}

/// All fitted preprocessing state needed to turn raw rows into a design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub raw_schema: FeatureSchema,
    pub missingness_threshold: f64,
    pub retained: RetainedSchema,
    pub imputer: ImputerState,
    pub spam: SpamStatsTable,
}

impl FeaturePipeline {
    pub fn fit(rows: &[RevisionRecord], schema: &FeatureSchema, cfg: &FeatureConfig) -> Result<Self> {
        Self::fit_with_spam_rows(rows, rows, schema, cfg)
    }

    /// Like [`FeaturePipeline::fit`] but counts spam statistics over `spam_rows`.
    pub fn fit_with_spam_rows(
        rows: &[RevisionRecord],
        spam_rows: &[RevisionRecord],
        schema: &FeatureSchema,
        cfg: &FeatureConfig,
    ) -> Result<Self> {
        if !(cfg.smoothing >= 0.0 && cfg.smoothing.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "smoothing must be >= 0, got {}",
                cfg.smoothing
            )));
        }
        let report = compute_missingness(rows, schema)?;
        let retained = select_features(&report, cfg.missingness_threshold, schema)?;
        let imputer = fit_medians(rows, &retained)?;
        let features = retained
            .categorical()
            .map(|d| Ok((d.name.clone(), fit_spam_stats(spam_rows, d)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(FeaturePipeline {
            raw_schema: schema.clone(),
            missingness_threshold: cfg.missingness_threshold,
            retained,
            imputer,
            spam: SpamStatsTable {
                alpha: cfg.smoothing,
                features,
            },
        })
    }

    pub fn transform(&self, rows: &[RevisionRecord]) -> Result<DesignMatrix> {
        transform(rows, self.raw_schema.len(), &self.retained, &self.imputer, &self.spam)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_revision_row;

    fn schema() -> FeatureSchema {
        FeatureSchema::parse("a\tnum\nuser\tcat\nrev\tdrop\n").unwrap()
    }

    fn row(line: &str, label: Option<bool>) -> RevisionRecord {
        let mut r = parse_revision_row(line, &schema(), "b").unwrap();
        r.label = label;
        r
    }

    fn numeric_rows(vals: &[Option<f64>]) -> Vec<RevisionRecord> {
        vals.iter()
            .enumerate()
            .map(|(i, v)| {
                let tok = v.map(|x| x.to_string()).unwrap_or_else(|| "NA".into());
                row(&format!("r{i}\t{tok}\tu\tx"), Some(i % 2 == 0))
            })
            .collect()
    }

    #[test]
    fn missingness_fractions() {
        let mut vals = vec![Some(1.0); 10];
        vals[0] = None;
        vals[3] = None;
        vals[7] = None;
        let rep = compute_missingness(&numeric_rows(&vals), &schema()).unwrap();
        assert_eq!(rep.fraction("a"), Some(0.3));
        assert_eq!(rep.fraction("user"), Some(0.0));
        assert_eq!(rep.fraction("rev"), None);

        let rep = compute_missingness(&numeric_rows(&[None, None]), &schema()).unwrap();
        assert_eq!(rep.fraction("a"), Some(1.0));
        assert!(matches!(
            compute_missingness(&[], &schema()),
            Err(Error::EmptyTrainingSet)
        ));
    }

    #[test]
    fn selection_threshold_is_strict() {
        let s = schema();
        let rep = |a: f64, u: f64| MissingnessReport {
            fractions: vec![("a".into(), a), ("user".into(), u)],
            rows: 100,
        };
        let kept = select_features(&rep(0.25, 0.26), 0.25, &s).unwrap();
        let names: Vec<_> = kept.features.iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["a"]);
        assert!(kept.excluded.contains(&("rev".into(), ExclusionReason::Dropped)));
        assert!(kept
            .excluded
            .contains(&("user".into(), ExclusionReason::Missingness(0.26))));
        assert!(matches!(
            select_features(&rep(0.5, 0.9), 0.25, &s),
            Err(Error::NoFeaturesRetained)
        ));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [1.0, 2.0, 3.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
        let rows = numeric_rows(&[Some(5.0), None, Some(7.0)]);
        let kept = select_features(&compute_missingness(&rows, &schema()).unwrap(), 1.0, &schema()).unwrap();
        let imp = fit_medians(&rows, &kept).unwrap();
        assert_eq!(imp.medians["a"], 6.0);
        assert_eq!(imp.fitted_on, 3);
    }

    #[test]
    fn all_missing_feature_has_no_median() {
        let rows = numeric_rows(&[None, None]);
        let kept = select_features(&compute_missingness(&rows, &schema()).unwrap(), 1.0, &schema()).unwrap();
        assert!(matches!(fit_medians(&rows, &kept), Err(Error::AllMissingFeature(n)) if n == "a"));
    }

    #[test]
    fn spam_counts_and_smoothing() {
        let decl = schema().decls()[1].clone();
        let rows = vec![
            row("r1\t1\tu1\tx", Some(true)),
            row("r2\t1\tu1\tx", Some(false)),
            row("r3\t1\tu1\tx", Some(false)),
            row("r4\t1\tu1\tx", Some(false)),
        ];
        let st = fit_spam_stats(&rows, &decl).unwrap();
        assert_eq!(st.counts["u1"], (4, 1));
        assert_eq!(st.global_rate, 0.25);
        assert_eq!(st.encode(Some("u1"), 0.0), (0.25, 1.0));

        // (1 + 1*0.1) / (1 + 1) = 0.55
        assert!((smoothed_probability(1, 1, 0.1, 1.0) - 0.55).abs() < 1e-15);
        assert_eq!(smoothed_probability(0, 0, 0.3, 10.0), 0.3);
        assert_eq!(smoothed_probability(0, 0, 0.3, 0.0), 0.3);

        let unlabeled = vec![row("r1\t1\tu1\tx", None)];
        assert!(matches!(fit_spam_stats(&unlabeled, &decl), Err(Error::UnlabeledRow(_))));
    }

    #[test]
    fn user_example_encodes_as_probability_and_count() {
        // User1: 350 edits, 300 spam; User2: 150 clean edits. g = 300/500 = 0.6,
        // so with alpha = 10 User1 reads (300 + 6) / 360 = 0.85 and count 300.
        let decl = schema().decls()[1].clone();
        let mut rows = Vec::new();
        for i in 0..350 {
            rows.push(row(&format!("a{i}\t1\tUser1\tx"), Some(i < 300)));
        }
        for i in 0..150 {
            rows.push(row(&format!("b{i}\t1\tUser2\tx"), Some(false)));
        }
        let st = fit_spam_stats(&rows, &decl).unwrap();
        let (p, s) = st.encode(Some("User1"), 10.0);
        assert!((p - 0.85).abs() < 1e-12);
        assert_eq!(s, 300.0);
    }

    #[test]
    fn transform_imputes_and_falls_back() {
        let train = vec![
            row("r1\t1\tu1\tx", Some(true)),
            row("r2\t2\tu2\tx", Some(false)),
            row("r3\t3\tu2\tx", Some(false)),
            row("r4\t4\tu2\tx", Some(false)),
        ];
        let cfg = FeatureConfig {
            smoothing: 0.0,
            ..Default::default()
        };
        let p = FeaturePipeline::fit(&train, &schema(), &cfg).unwrap();
        assert_eq!(
            p.retained.column_names(),
            vec!["a", "user:spam_prob", "user:spam_count"]
        );
        let test = vec![row("t1\tNA\tnever-seen\tx", None), row("t2\t9\tNA\tx", None)];
        let m = p.transform(&test).unwrap();
        assert_eq!(m.n_cols, 3);
        assert_eq!(m.row(0), &[2.5, 0.25, 0.0]);
        assert_eq!(m.row(1), &[9.0, 0.25, 0.0]);
        assert!(m.labels.is_none());

        // leakage: a training row's own label drives its encoding
        let m = p.transform(&train[..1]).unwrap();
        assert_eq!(m.row(0)[1], 1.0);
        assert_eq!(m.labels.as_deref(), Some(&[true][..]));
    }

    #[test]
    fn transform_rejects_wrong_width() {
        let train = vec![row("r1\t1\tu1\tx", Some(true)), row("r2\t2\tu2\tx", Some(false))];
        let p = FeaturePipeline::fit(&train, &schema(), &FeatureConfig::default()).unwrap();
        let mut bad = train[0].clone();
        bad.values.pop();
        assert!(matches!(p.transform(&[bad]), Err(Error::SchemaMismatch(_))));
    }
}
