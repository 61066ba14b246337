//! Negative subsampling, train/validation split and cross-validation folds.
//!
//! Every positive is kept. Negatives are drawn without replacement, a fixed
//! multiple of the positive count in total, split across batches in
//! proportion to each batch's negative count. Each batch is sampled in one
//! pass with its own reservoir, seeded from `(seed, batch_id)`, so batches can
//! be processed independently and in any order.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::ingest::RevisionRecord;
use crate::rng::{derive_seed, Pcg32};

#[derive(Debug, Clone, PartialEq)]
pub struct SampleConfig {
    pub negative_ratio: f64,
    pub train_fraction: f64,
    pub k_folds: usize,
    pub seed: u64,
    /// Take every available negative instead of failing when there are too few.
    pub clamp: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            negative_ratio: 2.5,
            train_fraction: 0.8,
            k_folds: 5,
            seed: 0,
            clamp: false,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.negative_ratio > 0.0 && self.negative_ratio.is_finite()) {
            return Err(Error::InvalidSampleConfig(format!(
                "negative_ratio must be positive, got {}",
                self.negative_ratio
            )));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidSampleConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.k_folds < 2 {
            return Err(Error::InvalidSampleConfig(format!(
                "k_folds must be at least 2, got {}",
                self.k_folds
            )));
        }
        Ok(())
    }
}

/// `round(ratio * positives)`, halves rounded up.
pub fn negative_target(positives: u64, ratio: f64) -> u64 {
    (ratio * positives as f64 + 0.5).floor() as u64
}

/// Splits `target_total` across batches in proportion to `counts`.
///
/// Integerized by largest remainder; equal remainders go to the smaller batch
/// id first. The quotas always sum to `target_total`. Availability is not
/// checked here, see [`SamplePlan::build`].
pub fn allocate_negative_quota(counts: &[(String, u64)], target_total: u64) -> Result<Vec<(String, u64)>> {
    let total: u128 = counts.iter().map(|(_, c)| *c as u128).sum();
    if total == 0 {
        if target_total == 0 {
            return Ok(counts.iter().map(|(b, _)| (b.clone(), 0)).collect());
        }
        return Err(Error::InsufficientNegatives {
            requested: target_total,
            available: 0,
        });
    }
    let t = target_total as u128;
    let mut quotas: Vec<u64> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(u128, &str, usize)> = Vec::with_capacity(counts.len());
    for (i, (batch, c)) in counts.iter().enumerate() {
        let scaled = t * *c as u128;
        quotas.push((scaled / total) as u64);
        remainders.push((scaled % total, batch.as_str(), i));
    }
    let assigned: u64 = quotas.iter().sum();
    let leftover = (target_total - assigned) as usize;
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    for &(_, _, i) in remainders.iter().take(leftover) {
        quotas[i] += 1;
    }
    Ok(counts.iter().zip(quotas).map(|((b, _), q)| (b.clone(), q)).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchCensus {
    pub batch_id: String,
    pub rows: u64,
    pub positives: u64,
    pub negatives: u64,
    pub unlabeled: u64,
}

/// Per-batch label counts from a first pass over the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelCensus {
    pub batches: Vec<BatchCensus>,
}

impl LabelCensus {
    pub fn observe(&mut self, record: &RevisionRecord) {
        let entry = match self.batches.last_mut() {
            Some(b) if b.batch_id == record.batch_id => b,
            _ => match self.batches.iter().position(|b| b.batch_id == record.batch_id) {
                Some(i) => &mut self.batches[i],
                None => {
                    self.batches.push(BatchCensus {
                        batch_id: record.batch_id.clone(),
                        ..Default::default()
                    });
                    self.batches.last_mut().unwrap()
                }
            },
        };
        entry.rows += 1;
        match record.label {
            Some(true) => entry.positives += 1,
            Some(false) => entry.negatives += 1,
            None => entry.unlabeled += 1,
        }
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a RevisionRecord>) -> Self {
        let mut census = LabelCensus::default();
        for r in records {
            census.observe(r);
        }
        census
    }

    /// Registers a batch that may turn out to have no rows.
    pub fn ensure_batch(&mut self, batch_id: &str) {
        if !self.batches.iter().any(|b| b.batch_id == batch_id) {
            self.batches.push(BatchCensus {
                batch_id: batch_id.to_string(),
                ..Default::default()
            });
        }
    }

    pub fn positives(&self) -> u64 {
        self.batches.iter().map(|b| b.positives).sum()
    }

    pub fn negatives(&self) -> u64 {
        self.batches.iter().map(|b| b.negatives).sum()
    }

    pub fn unlabeled(&self) -> u64 {
        self.batches.iter().map(|b| b.unlabeled).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePlan {
    /// In batch order.
    pub per_batch_negative_quota: Vec<(String, u64)>,
    pub total_positives: u64,
    pub total_negatives_target: u64,
    /// Set when the target was cut down to the available negatives.
    pub clamped: bool,
}

impl SamplePlan {
    pub fn build(census: &LabelCensus, cfg: &SampleConfig) -> Result<Self> {
        cfg.validate()?;
        let positives = census.positives();
        let available = census.negatives();
        let mut target = negative_target(positives, cfg.negative_ratio);
        let mut clamped = false;
        if target > available {
            if !cfg.clamp {
                return Err(Error::InsufficientNegatives {
                    requested: target,
                    available,
                });
            }
            log::warn!("only {available} negatives available, wanted {target}; taking all of them");
            target = available;
            clamped = true;
        }
        let counts: Vec<(String, u64)> = census
            .batches
            .iter()
            .map(|b| (b.batch_id.clone(), b.negatives))
            .collect();
        let quota = allocate_negative_quota(&counts, target)?;
        Ok(SamplePlan {
            per_batch_negative_quota: quota,
            total_positives: positives,
            total_negatives_target: target,
            clamped,
        })
    }

    pub fn quota(&self, batch_id: &str) -> u64 {
        self.per_batch_negative_quota
            .iter()
            .find(|(b, _)| b == batch_id)
            .map(|(_, q)| *q)
            .unwrap_or(0)
    }
}

/// Uniform fixed-size sample of a stream (Algorithm R).
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    capacity: usize,
    seen: u64,
    items: Vec<T>,
    rng: Pcg32,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Reservoir {
            capacity,
            seen: 0,
            items: Vec::with_capacity(capacity.min(1 << 20)),
            rng: Pcg32::seeded(seed),
        }
    }

    pub fn offer(&mut self, item: T) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else if self.capacity > 0 {
            let j = self.rng.below(self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn into_items(self) -> Vec<T> {
        self.items
    }
}

pub fn batch_seed(seed: u64, batch_id: &str) -> u64 {
    derive_seed(seed, &format!("negatives:{batch_id}"))
}

/// Sampling state for one batch: all positives plus a reservoir of negatives.
pub struct BatchSampler {
    position: u64,
    positives: Vec<(u64, RevisionRecord)>,
    negatives: Reservoir<(u64, RevisionRecord)>,
    unlabeled: u64,
}

impl BatchSampler {
    pub fn new(batch_id: &str, quota: u64, seed: u64) -> Self {
        BatchSampler {
            position: 0,
            positives: Vec::new(),
            negatives: Reservoir::new(quota as usize, batch_seed(seed, batch_id)),
            unlabeled: 0,
        }
    }

    pub fn offer(&mut self, record: RevisionRecord) {
        let pos = self.position;
        self.position += 1;
        match record.label {
            Some(true) => self.positives.push((pos, record)),
            Some(false) => self.negatives.offer((pos, record)),
            None => self.unlabeled += 1,
        }
    }

    /// Sampled records in their original within-batch order.
    pub fn finish(self) -> Vec<RevisionRecord> {
        let mut all = self.positives;
        all.extend(self.negatives.into_items());
        all.sort_by_key(|(p, _)| *p);
        all.into_iter().map(|(_, r)| r).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct SampledDataset {
    pub records: Vec<RevisionRecord>,
    pub unlabeled_dropped: u64,
}

/// Second pass: keeps every positive and `plan`'s quota of negatives per batch.
///
/// The output lists batches in plan order, records within a batch in stream order.
pub fn subsample<I>(records: I, plan: &SamplePlan, cfg: &SampleConfig) -> Result<SampledDataset>
where
    I: IntoIterator<Item = Result<RevisionRecord>>,
{
    let mut samplers: HashMap<String, BatchSampler> = HashMap::new();
    for rec in records {
        let rec = rec?;
        let sampler = samplers
            .entry(rec.batch_id.clone())
            .or_insert_with(|| BatchSampler::new(&rec.batch_id, plan.quota(&rec.batch_id), cfg.seed));
        sampler.offer(rec);
    }
    let mut out = SampledDataset::default();
    for (batch_id, _) in &plan.per_batch_negative_quota {
        if let Some(sampler) = samplers.remove(batch_id) {
            out.unlabeled_dropped += sampler.unlabeled;
            out.records.extend(sampler.finish());
        }
    }
    // batches the plan never saw carry no negatives but their positives still count
    let mut rest: Vec<_> = samplers.into_iter().collect();
    rest.sort_by(|a, b| a.0.cmp(&b.0));
    for (_, sampler) in rest {
        out.unlabeled_dropped += sampler.unlabeled;
        out.records.extend(sampler.finish());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Validation,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Validation => "validation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEntry {
    pub row_id: String,
    pub role: Role,
    /// Cross-validation fold, train rows only.
    pub fold: Option<usize>,
}

/// Role and fold for every sampled row, in dataset order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitAssignment {
    pub entries: Vec<SplitEntry>,
}

impl SplitAssignment {
    pub fn train_count(&self) -> usize {
        self.entries.iter().filter(|e| e.role == Role::Train).count()
    }

    pub fn validation_count(&self) -> usize {
        self.entries.len() - self.train_count()
    }

    /// `row_id<TAB>role<TAB>fold` lines; validation rows carry `-` as fold.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let fold = e.fold.map(|f| f.to_string()).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "{}\t{}\t{}", e.row_id, e.role.as_str(), fold);
        }
        out
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::SchemaMismatch(format!("split line {}: `{line}`", i + 1));
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(bad());
            }
            let role = match cols[1] {
                "train" => Role::Train,
                "validation" => Role::Validation,
                _ => return Err(bad()),
            };
            let fold = match cols[2] {
                "-" => None,
                f => Some(f.parse().map_err(|_| bad())?),
            };
            if (role == Role::Train) != fold.is_some() {
                return Err(bad());
            }
            entries.push(SplitEntry {
                row_id: cols[0].to_string(),
                role,
                fold,
            });
        }
        Ok(SplitAssignment { entries })
    }
}

/// Indices of `row_ids` in ascending id order, then shuffled; the result only
/// depends on the multiset of ids, not on their input order.
fn keyed_permutation(row_ids: &[&str], seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row_ids.len()).collect();
    idx.sort_by(|&a, &b| row_ids[a].cmp(row_ids[b]).then(a.cmp(&b)));
    Pcg32::seeded(seed).shuffle(&mut idx);
    idx
}

/// Uniform random (not stratified) train/validation split.
///
/// `|train| = round(train_fraction * n)`. Returns one role per input row.
pub fn train_val_split(row_ids: &[&str], cfg: &SampleConfig) -> Result<Vec<Role>> {
    let n = row_ids.len();
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    if n == 0 || n_train == 0 || n_train >= n {
        return Err(Error::DegenerateSplit {
            n,
            fraction: cfg.train_fraction,
        });
    }
    let perm = keyed_permutation(row_ids, derive_seed(cfg.seed, "split"));
    let mut roles = vec![Role::Validation; n];
    for &i in &perm[..n_train] {
        roles[i] = Role::Train;
    }
    Ok(roles)
}

/// Stratified fold ids in `0..k`, one per row.
///
/// Within each class the fold sizes differ by at most one. Negatives start
/// where positives left off so overall fold sizes also stay balanced.
pub fn kfold_assign(rows: &[(&str, bool)], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::InvalidSampleConfig(format!(
            "k_folds must be at least 2, got {k}"
        )));
    }
    let positives = rows.iter().filter(|r| r.1).count();
    let minority = positives.min(rows.len() - positives);
    if minority < k {
        return Err(Error::TooFewMinoritySamples { k, available: minority });
    }
    let mut folds = vec![0usize; rows.len()];
    let mut offset = 0;
    for (class, tag) in [(true, "folds:positive"), (false, "folds:negative")] {
        let members: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].1 == class).collect();
        let ids: Vec<&str> = members.iter().map(|&i| rows[i].0).collect();
        let perm = keyed_permutation(&ids, derive_seed(seed, tag));
        for (rank, &j) in perm.iter().enumerate() {
            folds[members[j]] = (offset + rank) % k;
        }
        offset = (offset + members.len()) % k;
    }
    Ok(folds)
}

/// Runs [`train_val_split`] and [`kfold_assign`] over a labeled dataset.
pub fn assign_splits(records: &[RevisionRecord], cfg: &SampleConfig) -> Result<SplitAssignment> {
    cfg.validate()?;
    let ids: Vec<&str> = records.iter().map(|r| r.revision_id.as_str()).collect();
    let roles = train_val_split(&ids, cfg)?;
    let train: Vec<(usize, (&str, bool))> = records
        .iter()
        .enumerate()
        .filter(|(i, _)| roles[*i] == Role::Train)
        .map(|(i, r)| {
            let label = r.label.ok_or_else(|| Error::UnlabeledRow(r.revision_id.clone()))?;
            Ok((i, (r.revision_id.as_str(), label)))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(&str, bool)> = train.iter().map(|(_, p)| *p).collect();
    let folds = kfold_assign(&pairs, cfg.k_folds, derive_seed(cfg.seed, "kfold"))?;
    let mut fold_of = vec![None; records.len()];
    for ((i, _), f) in train.iter().zip(folds) {
        fold_of[*i] = Some(f);
    }
    Ok(SplitAssignment {
        entries: records
            .iter()
            .zip(roles)
            .zip(fold_of)
            .map(|((r, role), fold)| SplitEntry {
                row_id: r.revision_id.clone(),
                role,
                fold,
            })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Value;

    fn quota(counts: &[(&str, u64)], target: u64) -> Vec<(String, u64)> {
        let counts: Vec<_> = counts.iter().map(|(b, c)| (b.to_string(), *c)).collect();
        allocate_negative_quota(&counts, target).unwrap()
    }

    fn rec(id: &str, batch: &str, label: Option<bool>) -> RevisionRecord {
        RevisionRecord {
            revision_id: id.into(),
            batch_id: batch.into(),
            values: vec![Value::Numeric(0.0)],
            label,
        }
    }

    #[test]
    fn quota_exact_proportions() {
        assert_eq!(
            quota(&[("b1", 30), ("b2", 70)], 10),
            vec![("b1".into(), 3), ("b2".into(), 7)]
        );
        assert_eq!(quota(&[("b1", 5)], 5), vec![("b1".into(), 5)]);
    }

    #[test]
    fn quota_largest_remainder_tie_break() {
        // Hand enumeration: 10/3 = 3 rem 1 for every batch; the single
        // leftover unit goes to the lowest batch id.
        assert_eq!(
            quota(&[("b1", 1), ("b2", 1), ("b3", 1)], 10),
            vec![("b1".into(), 4), ("b2".into(), 3), ("b3".into(), 3)]
        );
        // tie-break is by id, not by position
        assert_eq!(
            quota(&[("b3", 1), ("b1", 1), ("b2", 1)], 10),
            vec![("b3".into(), 3), ("b1".into(), 4), ("b2".into(), 3)]
        );
    }

    #[test]
    fn negative_target_rounds_half_up() {
        assert_eq!(negative_target(100, 2.5), 250);
        assert_eq!(negative_target(174_427, 2.5), 436_068);
        assert_eq!(negative_target(3, 2.5), 8);
        assert_eq!(negative_target(1, 0.5), 1);
    }

    #[test]
    fn plan_requires_enough_negatives() {
        let mut recs: Vec<_> = (0..10).map(|i| rec(&format!("p{i}"), "b", Some(true))).collect();
        recs.extend((0..5).map(|i| rec(&format!("n{i}"), "b", Some(false))));
        let census = LabelCensus::from_records(&recs);
        let cfg = SampleConfig::default();
        assert!(matches!(
            SamplePlan::build(&census, &cfg),
            Err(Error::InsufficientNegatives {
                requested: 25,
                available: 5
            })
        ));
        let clamp = SampleConfig { clamp: true, ..cfg };
        let plan = SamplePlan::build(&census, &clamp).unwrap();
        assert!(plan.clamped);
        let out = subsample(recs.into_iter().map(Ok), &plan, &clamp).unwrap();
        assert_eq!(out.records.len(), 15);
    }

    #[test]
    fn subsample_keeps_ratio() {
        let mut recs: Vec<_> = (0..100).map(|i| rec(&format!("p{i}"), "b1", Some(true))).collect();
        recs.extend((0..10_000).map(|i| rec(&format!("n{i}"), if i % 3 == 0 { "b1" } else { "b2" }, Some(false))));
        recs.push(rec("u", "b2", None));
        let census = LabelCensus::from_records(&recs);
        let cfg = SampleConfig::default();
        let plan = SamplePlan::build(&census, &cfg).unwrap();
        let out = subsample(recs.into_iter().map(Ok), &plan, &cfg).unwrap();
        let pos = out.records.iter().filter(|r| r.label == Some(true)).count();
        let neg = out.records.iter().filter(|r| r.label == Some(false)).count();
        assert_eq!((pos, neg), (100, 250));
        assert_eq!(out.unlabeled_dropped, 1);
    }

    #[test]
    fn reservoir_inclusion_is_uniform() {
        // 1000 items, capacity 100, 2000 seeded runs: inclusion ~ Binomial(2000, 0.1).
        let runs = 2000u64;
        let mut hits = vec![0u32; 1000];
        for run in 0..runs {
            let mut r = Reservoir::new(100, derive_seed(run, "uniformity"));
            for i in 0..1000usize {
                r.offer(i);
            }
            for i in r.into_items() {
                hits[i] += 1;
            }
        }
        let p = 0.1;
        let se = (p * (1.0 - p) / runs as f64).sqrt();
        for (i, &h) in hits.iter().enumerate() {
            let freq = h as f64 / runs as f64;
            assert!((freq - p).abs() <= 4.0 * se, "item {i}: frequency {freq}");
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ids: Vec<String> = (0..10).map(|i| format!("r{i}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let cfg = SampleConfig {
            seed: 11,
            ..Default::default()
        };
        let a = train_val_split(&refs, &cfg).unwrap();
        assert_eq!(a.iter().filter(|r| **r == Role::Train).count(), 8);
        assert_eq!(a, train_val_split(&refs, &cfg).unwrap());
        assert!(matches!(
            train_val_split(&["x"], &cfg),
            Err(Error::DegenerateSplit { n: 1, .. })
        ));
    }

    #[test]
    fn folds_are_stratified() {
        let ids: Vec<String> = (0..35).map(|i| format!("r{i:02}")).collect();
        let rows: Vec<(&str, bool)> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i < 10)).collect();
        let folds = kfold_assign(&rows, 5, 3).unwrap();
        for f in 0..5 {
            let pos = rows.iter().zip(&folds).filter(|(r, &g)| r.1 && g == f).count();
            let neg = rows.iter().zip(&folds).filter(|(r, &g)| !r.1 && g == f).count();
            assert_eq!((pos, neg), (2, 5), "fold {f}");
        }
    }

    #[test]
    fn folds_need_enough_minority_rows() {
        let rows: Vec<(&str, bool)> = vec![
            ("a", true),
            ("b", true),
            ("c", true),
            ("d", true),
            ("e", false),
            ("f", false),
            ("g", false),
            ("h", false),
            ("i", false),
        ];
        assert!(matches!(
            kfold_assign(&rows, 5, 0),
            Err(Error::TooFewMinoritySamples { k: 5, available: 4 })
        ));
    }

    #[test]
    fn folds_follow_row_ids_not_input_order() {
        let ids: Vec<String> = (0..40).map(|i| format!("id{i}")).collect();
        let rows: Vec<(&str, bool)> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i % 4 == 0)).collect();
        let folds = kfold_assign(&rows, 5, 99).unwrap();
        let by_id: HashMap<&str, usize> = rows.iter().map(|r| r.0).zip(folds.iter().copied()).collect();

        let mut shuffled = rows.clone();
        Pcg32::seeded(5).shuffle(&mut shuffled);
        let folds2 = kfold_assign(&shuffled, 5, 99).unwrap();
        for (r, f) in shuffled.iter().zip(folds2) {
            assert_eq!(by_id[r.0], f);
        }
    }

    #[test]
    fn split_tsv_round_trip() {
        let recs: Vec<_> = (0..30).map(|i| rec(&format!("r{i}"), "b", Some(i % 3 == 0))).collect();
        let split = assign_splits(
            &recs,
            &SampleConfig {
                seed: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(split.train_count(), 24);
        let back = SplitAssignment::parse_tsv(&split.to_tsv()).unwrap();
        assert_eq!(back, split);
    }
}
