//! Reading revision feature tables, truth files and feature schemas.
//!
//! Feature rows are tab separated: the revision id followed by one column per
//! schema declaration, in schema order. The literal token `NA` and the empty
//! string both mean "missing". Lines starting with `#` are comments. Truth
//! files hold `revision_id<TAB>true|false`.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MISSING_TOKEN: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
    Dropped,
}

impl FeatureKind {
    pub fn parse(token: &str) -> Option<Self> {
        match token {
            "num" | "numeric" => Some(FeatureKind::Numeric),
            "cat" | "categorical" => Some(FeatureKind::Categorical),
            "drop" | "dropped" => Some(FeatureKind::Dropped),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Numeric => "num",
            FeatureKind::Categorical => "cat",
            FeatureKind::Dropped => "drop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    pub kind: FeatureKind,
    /// Position among the feature columns (the revision id column is not counted).
    pub source_index: usize,
}

/// Ordered column declarations of a raw feature table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    decls: Vec<FeatureDecl>,
}

impl FeatureSchema {
    pub fn new(decls: Vec<(String, FeatureKind)>) -> Result<Self> {
        if decls.is_empty() {
            return Err(Error::EmptySchema);
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(decls.len());
        for (source_index, (name, kind)) in decls.into_iter().enumerate() {
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateFeature(name));
            }
            out.push(FeatureDecl {
                name,
                kind,
                source_index,
            });
        }
        Ok(FeatureSchema { decls: out })
    }

    /// Parses `name<TAB>kind` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut decls = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (name, kind) = match (parts.next(), parts.next(), parts.next()) {
                (Some(n), Some(k), None) => (n.trim(), k.trim()),
                _ => {
                    return Err(Error::MalformedSchemaLine {
                        line: i + 1,
                        text: raw.to_string(),
                    })
                }
            };
            if name.is_empty() {
                return Err(Error::MalformedSchemaLine {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            let kind = FeatureKind::parse(kind).ok_or_else(|| Error::UnknownKind {
                kind: kind.to_string(),
                line: i + 1,
            })?;
            decls.push((name.to_string(), kind));
        }
        Self::new(decls)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        self.decls
            .iter()
            .map(|d| format!("{}\t{}\n", d.name, d.kind.as_str()))
            .collect()
    }

    pub fn decls(&self) -> &[FeatureDecl] {
        &self.decls
    }

    pub fn len(&self) -> usize {
        self.decls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decls.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&FeatureDecl> {
        self.decls.iter().find(|d| d.name == name)
    }

    pub fn count(&self, kind: FeatureKind) -> usize {
        self.decls.iter().filter(|d| d.kind == kind).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Numeric(f64),
    Categorical(String),
    /// Raw token of a column the schema marks as dropped.
    Dropped(String),
    Missing,
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            // `Display` for f64 is the shortest string that parses back to the same value.
            Value::Numeric(x) => write!(f, "{x}"),
            Value::Categorical(s) | Value::Dropped(s) => f.write_str(s),
            Value::Missing => f.write_str(MISSING_TOKEN),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevisionRecord {
    pub revision_id: String,
    pub batch_id: String,
    pub values: Vec<Value>,
    /// `Some(true)` marks vandalism.
    pub label: Option<bool>,
}

impl RevisionRecord {
    /// Feature columns in row format, without the revision id.
    pub fn feature_columns(&self) -> impl Iterator<Item = String> + '_ {
        self.values.iter().map(|v| v.to_string())
    }
}

fn is_missing_token(token: &str) -> bool {
    token.is_empty() || token == MISSING_TOKEN
}

fn parse_value(token: &str, decl: &FeatureDecl) -> Result<Value> {
    if is_missing_token(token) {
        return Ok(Value::Missing);
    }
    match decl.kind {
        FeatureKind::Numeric => {
            let x: f64 = token.parse().map_err(|_| Error::UnparsableNumeric {
                column: decl.name.clone(),
                token: token.to_string(),
            })?;
            if !x.is_finite() {
                return Err(Error::NonFiniteNumeric {
                    column: decl.name.clone(),
                    token: token.to_string(),
                });
            }
            Ok(Value::Numeric(x))
        }
        FeatureKind::Categorical => Ok(Value::Categorical(token.to_string())),
        FeatureKind::Dropped => Ok(Value::Dropped(token.to_string())),
    }
}

/// Parses one feature row into values aligned with `schema`.
pub fn parse_revision_row(line: &str, schema: &FeatureSchema, batch_id: &str) -> Result<RevisionRecord> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut columns = line.split('\t');
    let revision_id = columns.next().unwrap_or_default();
    let rest: Vec<&str> = columns.collect();
    if rest.len() != schema.len() {
        return Err(Error::ColumnCountMismatch {
            expected: schema.len() + 1,
            found: rest.len() + 1,
        });
    }
    if is_missing_token(revision_id) {
        return Err(Error::MissingRevisionId);
    }
    let values = rest
        .iter()
        .zip(schema.decls())
        .map(|(tok, decl)| parse_value(tok, decl))
        .collect::<Result<Vec<_>>>()?;
    Ok(RevisionRecord {
        revision_id: revision_id.to_string(),
        batch_id: batch_id.to_string(),
        values,
        label: None,
    })
}

/// Inverse of [`parse_revision_row`].
pub fn format_revision_row(record: &RevisionRecord) -> String {
    let mut out = record.revision_id.clone();
    for col in record.feature_columns() {
        out.push('\t');
        out.push_str(&col);
    }
    out
}

/// Revision id to vandalism label.
#[derive(Debug, Clone, Default)]
pub struct TruthTable {
    labels: HashMap<String, bool>,
}

impl TruthTable {
    pub fn parse<R: Read>(reader: R) -> Result<Self> {
        let mut labels: HashMap<String, bool> = HashMap::new();
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|e| Error::io("<truth>", e))?;
            let line = line.strip_suffix('\r').unwrap_or(&line);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = || Error::MalformedTruthLine {
                line: i + 1,
                text: line.to_string(),
            };
            let (id, flag) = line.split_once('\t').ok_or_else(malformed)?;
            let flag = match flag.trim() {
                "true" => true,
                "false" => false,
                _ => return Err(malformed()),
            };
            if id.is_empty() {
                return Err(malformed());
            }
            match labels.insert(id.to_string(), flag) {
                Some(prev) if prev != flag => return Err(Error::DuplicateTruthEntry(id.to_string())),
                _ => {}
            }
        }
        Ok(TruthTable { labels })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse(file).map_err(|e| match e {
            Error::Io { source, .. } => Error::io(path, source),
            other => other,
        })
    }

    pub fn get(&self, revision_id: &str) -> Option<bool> {
        self.labels.get(revision_id).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.values().filter(|&&v| v).count()
    }
}

/// Iterator adapter that attaches truth labels and counts misses.
pub struct LabelJoin<'a, I> {
    inner: I,
    truth: &'a TruthTable,
    unlabeled: u64,
}

impl<I> LabelJoin<'_, I> {
    pub fn unlabeled_count(&self) -> u64 {
        self.unlabeled
    }
}

impl<I> Iterator for LabelJoin<'_, I>
where
    I: Iterator<Item = Result<RevisionRecord>>,
{
    type Item = Result<RevisionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let item = self.inner.next()?;
        Some(item.map(|mut rec| {
            rec.label = self.truth.get(&rec.revision_id);
            if rec.label.is_none() {
                self.unlabeled += 1;
            }
            rec
        }))
    }
}

pub fn join_labels<I>(records: I, truth: &TruthTable) -> LabelJoin<'_, I::IntoIter>
where
    I: IntoIterator<Item = Result<RevisionRecord>>,
{
    LabelJoin {
        inner: records.into_iter(),
        truth,
        unlabeled: 0,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchSource {
    pub batch_id: String,
    pub path: PathBuf,
}

impl BatchSource {
    /// Uses the file stem as the batch id.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let batch_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string_lossy().into_owned());
        BatchSource { batch_id, path }
    }

    pub fn list(paths: &[PathBuf]) -> Result<Vec<BatchSource>> {
        let sources: Vec<_> = paths.iter().map(BatchSource::from_path).collect();
        let mut seen = HashSet::new();
        for s in &sources {
            if !seen.insert(s.batch_id.as_str()) {
                return Err(Error::DuplicateBatch(s.batch_id.clone()));
            }
        }
        Ok(sources)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchEntry {
    pub batch_id: String,
    pub path: PathBuf,
    pub row_count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BatchManifest {
    pub batches: Vec<BatchEntry>,
}

impl BatchManifest {
    pub fn total_rows(&self) -> u64 {
        self.batches.iter().map(|b| b.row_count).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RowPolicy {
    #[default]
    Abort,
    SkipAndCount,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScanStats {
    pub skipped_rows: u64,
    /// Rows without a revision id; never usable, always skipped.
    pub unusable_rows: u64,
    /// Largest number of parsed records held inside the scanner at once.
    pub peak_buffered: usize,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ScanOptions {
    pub policy: RowPolicy,
    pub has_header: bool,
}

/// Streams records from batch files in the given order, one line at a time.
pub struct BatchScanner<'a> {
    schema: &'a FeatureSchema,
    sources: Vec<BatchSource>,
    options: ScanOptions,
    next_source: usize,
    current: Option<(BufReader<File>, usize)>,
    line_buf: String,
    manifest: BatchManifest,
    stats: ScanStats,
    failed: bool,
}

impl<'a> BatchScanner<'a> {
    pub fn new(sources: Vec<BatchSource>, schema: &'a FeatureSchema, options: ScanOptions) -> Result<Self> {
        let mut seen = HashSet::new();
        for s in &sources {
            if !seen.insert(s.batch_id.clone()) {
                return Err(Error::DuplicateBatch(s.batch_id.clone()));
            }
        }
        Ok(BatchScanner {
            schema,
            sources,
            options,
            next_source: 0,
            current: None,
            line_buf: String::new(),
            manifest: BatchManifest::default(),
            stats: ScanStats::default(),
            failed: false,
        })
    }

    /// Row counts are final only once the iterator is exhausted.
    pub fn manifest(&self) -> &BatchManifest {
        &self.manifest
    }

    pub fn stats(&self) -> ScanStats {
        self.stats
    }

    pub fn into_parts(self) -> (BatchManifest, ScanStats) {
        (self.manifest, self.stats)
    }

    fn open_next(&mut self) -> Result<bool> {
        let Some(source) = self.sources.get(self.next_source) else {
            return Ok(false);
        };
        self.next_source += 1;
        let file = File::open(&source.path).map_err(|e| Error::io(&source.path, e))?;
        self.manifest.batches.push(BatchEntry {
            batch_id: source.batch_id.clone(),
            path: source.path.clone(),
            row_count: 0,
        });
        self.current = Some((BufReader::new(file), 0));
        if self.options.has_header {
            self.read_line()?;
        }
        Ok(true)
    }

    /// Reads the next raw line of the open file into `line_buf`; false at EOF.
    fn read_line(&mut self) -> Result<bool> {
        let (reader, line_no) = self.current.as_mut().expect("open batch");
        self.line_buf.clear();
        let n = reader
            .read_line(&mut self.line_buf)
            .map_err(|e| Error::io(&self.sources[self.next_source - 1].path, e))?;
        if n == 0 {
            return Ok(false);
        }
        *line_no += 1;
        if self.line_buf.ends_with('\n') {
            self.line_buf.pop();
        }
        Ok(true)
    }

    fn next_record(&mut self) -> Result<Option<RevisionRecord>> {
        loop {
            if self.current.is_none() && !self.open_next()? {
                return Ok(None);
            }
            if !self.read_line()? {
                self.current = None;
                continue;
            }
            if self.line_buf.trim().is_empty() || self.line_buf.starts_with('#') {
                continue;
            }
            let entry = self.manifest.batches.last_mut().expect("open batch");
            let line_no = self.current.as_ref().map(|c| c.1).unwrap_or(0);
            match parse_revision_row(&self.line_buf, self.schema, &entry.batch_id) {
                Ok(rec) => {
                    entry.row_count += 1;
                    self.stats.peak_buffered = self.stats.peak_buffered.max(1);
                    return Ok(Some(rec));
                }
                Err(Error::MissingRevisionId) => {
                    self.stats.unusable_rows += 1;
                }
                Err(e) => match self.options.policy {
                    RowPolicy::SkipAndCount => {
                        log::debug!("skipping {}:{}: {e}", entry.batch_id, line_no);
                        self.stats.skipped_rows += 1;
                    }
                    RowPolicy::Abort => {
                        return Err(Error::Row {
                            batch_id: entry.batch_id.clone(),
                            line: line_no,
                            source: Box::new(e),
                        })
                    }
                },
            }
        }
    }
}

impl Iterator for BatchScanner<'_> {
    type Item = Result<RevisionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(Some(rec)) => Some(Ok(rec)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Scans every batch to the end, returning the manifest and all records.
///
/// Convenience for small inputs; large corpora should drive a [`BatchScanner`]
/// directly.
pub fn scan_batches(
    sources: Vec<BatchSource>,
    schema: &FeatureSchema,
    options: ScanOptions,
) -> Result<(BatchManifest, Vec<RevisionRecord>, ScanStats)> {
    let mut scanner = BatchScanner::new(sources, schema, options)?;
    let records = scanner.by_ref().collect::<Result<Vec<_>>>()?;
    let (manifest, stats) = scanner.into_parts();
    Ok((manifest, records, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn schema3() -> FeatureSchema {
        FeatureSchema::parse("commentLength\tnum\nuserName\tcat\nrevisionId\tdrop\n").unwrap()
    }

    fn write_file(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn schema_counts_kinds() {
        let s = schema3();
        assert_eq!(s.len(), 3);
        assert_eq!(s.count(FeatureKind::Numeric), 1);
        assert_eq!(s.count(FeatureKind::Categorical), 1);
        assert_eq!(s.count(FeatureKind::Dropped), 1);
        assert_eq!(s.decls()[2].source_index, 2);
    }

    #[test]
    fn schema_rejects_duplicates_unknown_and_empty() {
        assert!(matches!(
            FeatureSchema::parse("userName\tcat\nuserName\tcat\n"),
            Err(Error::DuplicateFeature(n)) if n == "userName"
        ));
        assert!(matches!(
            FeatureSchema::parse("x\tfloat\n"),
            Err(Error::UnknownKind { line: 1, .. })
        ));
        assert!(matches!(FeatureSchema::parse(""), Err(Error::EmptySchema)));
    }

    #[test]
    fn parses_row_with_all_kinds() {
        let rec = parse_revision_row("r1\t42.0\tUser1\tx9", &schema3(), "b1").unwrap();
        assert_eq!(rec.revision_id, "r1");
        assert_eq!(rec.batch_id, "b1");
        assert_eq!(
            rec.values,
            vec![
                Value::Numeric(42.0),
                Value::Categorical("User1".into()),
                Value::Dropped("x9".into())
            ]
        );
        assert_eq!(rec.label, None);
    }

    #[test]
    fn na_and_empty_are_missing() {
        let rec = parse_revision_row("r2\tNA\tNA\tx9", &schema3(), "b1").unwrap();
        assert!(rec.values[0].is_missing());
        assert!(rec.values[1].is_missing());
        let rec = parse_revision_row("r2\t\t\tx9", &schema3(), "b1").unwrap();
        assert!(rec.values[0].is_missing() && rec.values[1].is_missing());
    }

    #[test]
    fn row_errors() {
        let s = schema3();
        assert!(matches!(
            parse_revision_row("r3\t1.0", &s, "b"),
            Err(Error::ColumnCountMismatch { expected: 4, found: 2 })
        ));
        for tok in ["inf", "NaN", "-inf"] {
            assert!(matches!(
                parse_revision_row(&format!("r\t{tok}\tu\tx"), &s, "b"),
                Err(Error::NonFiniteNumeric { .. })
            ));
        }
        assert!(matches!(
            parse_revision_row("r\tabc\tu\tx", &s, "b"),
            Err(Error::UnparsableNumeric { .. })
        ));
        assert!(matches!(
            parse_revision_row("NA\t1\tu\tx", &s, "b"),
            Err(Error::MissingRevisionId)
        ));
    }

    #[test]
    fn truth_join_semantics() {
        let truth = TruthTable::parse("r1\ttrue\n".as_bytes()).unwrap();
        let s = schema3();
        let recs = vec![
            parse_revision_row("r1\t1\tu\tx", &s, "b"),
            parse_revision_row("r2\t1\tu\tx", &s, "b"),
        ];
        let mut join = join_labels(recs, &truth);
        let out: Vec<_> = join.by_ref().map(|r| r.unwrap()).collect();
        assert_eq!(out[0].label, Some(true));
        assert_eq!(out[1].label, None);
        assert_eq!(join.unlabeled_count(), 1);

        // joining again does not change anything
        let again: Vec<_> = join_labels(out.clone().into_iter().map(Ok), &truth)
            .map(|r| r.unwrap())
            .collect();
        assert_eq!(again, out);
    }

    #[test]
    fn truth_errors() {
        assert!(matches!(
            TruthTable::parse("r1\ttrue\nr1\tfalse\n".as_bytes()),
            Err(Error::DuplicateTruthEntry(id)) if id == "r1"
        ));
        assert!(matches!(
            TruthTable::parse("r1 yes\n".as_bytes()),
            Err(Error::MalformedTruthLine { line: 1, .. })
        ));
        // agreeing repeats are fine
        assert_eq!(TruthTable::parse("r1\ttrue\nr1\ttrue\n".as_bytes()).unwrap().len(), 1);
        let empty = TruthTable::parse("".as_bytes()).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn scan_counts_rows_per_batch() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema3();
        let b1 = write_file(dir.path(), "b1.tsv", "a\t1\tu\tx\nb\t2\tu\tx\nc\t3\tu\tx\n");
        let body: String = (0..5).map(|i| format!("d{i}\t{i}\tv\tx\n")).collect();
        let b2 = write_file(dir.path(), "b2.tsv", &body);
        let (manifest, recs, _) =
            scan_batches(BatchSource::list(&[b1, b2]).unwrap(), &s, ScanOptions::default()).unwrap();
        assert_eq!(recs.len(), 8);
        let counts: Vec<_> = manifest
            .batches
            .iter()
            .map(|b| (b.batch_id.as_str(), b.row_count))
            .collect();
        assert_eq!(counts, vec![("b1", 3), ("b2", 5)]);
    }

    #[test]
    fn skip_policy_counts_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema3();
        let p = write_file(dir.path(), "b1.tsv", "a\t1\tu\tx\nb\toops\tu\tx\nc\t3\tu\tx\n");
        let err = scan_batches(
            BatchSource::list(std::slice::from_ref(&p)).unwrap(),
            &s,
            ScanOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Row { ref batch_id, line: 2, .. } if batch_id == "b1"));

        let opts = ScanOptions {
            policy: RowPolicy::SkipAndCount,
            ..Default::default()
        };
        let (_, recs, stats) = scan_batches(BatchSource::list(&[p]).unwrap(), &s, opts).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(stats.skipped_rows, 1);
    }

    #[test]
    fn header_line_is_skipped_when_requested() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            dir.path(),
            "b.tsv",
            "revisionId\tcommentLength\tuserName\tx\nr\t1\tu\tx\n",
        );
        let opts = ScanOptions {
            has_header: true,
            ..Default::default()
        };
        let (_, recs, _) = scan_batches(BatchSource::list(&[p]).unwrap(), &schema3(), opts).unwrap();
        assert_eq!(recs.len(), 1);
    }

    #[test]
    fn twenty_one_batches_keep_their_order() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema3();
        let paths: Vec<_> = (0..21)
            .rev()
            .map(|i| write_file(dir.path(), &format!("batch{i:02}.tsv"), &format!("r{i}\t1\tu\tx\n")))
            .collect();
        let (manifest, recs, _) = scan_batches(BatchSource::list(&paths).unwrap(), &s, ScanOptions::default()).unwrap();
        let ids: Vec<_> = manifest.batches.iter().map(|b| b.batch_id.clone()).collect();
        let expected: Vec<_> = (0..21).rev().map(|i| format!("batch{i:02}")).collect();
        assert_eq!(ids, expected);
        assert_eq!(recs[0].revision_id, "r20");
    }

    #[test]
    fn scanner_streams_one_record_at_a_time() {
        let dir = tempfile::tempdir().unwrap();
        let s = schema3();
        let mut body: String = (0..5000).map(|i| format!("r{i}\t{i}\tu\tx\n")).collect();
        body.push_str("bad\tnot-a-number\tu\tx\n");
        let p = write_file(dir.path(), "big.tsv", &body);
        let mut scanner = BatchScanner::new(BatchSource::list(&[p]).unwrap(), &s, ScanOptions::default()).unwrap();
        let mut ok = 0;
        for item in scanner.by_ref() {
            match item {
                Ok(_) => ok += 1,
                Err(e) => {
                    assert!(matches!(e, Error::Row { line: 5001, .. }));
                    break;
                }
            }
        }
        // every good row was handed out before the bad line was even read
        assert_eq!(ok, 5000);
        assert_eq!(scanner.stats().peak_buffered, 1);
    }

    #[test]
    fn unusable_rows_are_counted_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(dir.path(), "b.tsv", "NA\t1\tu\tx\nr\t1\tu\tx\n");
        let (_, recs, stats) =
            scan_batches(BatchSource::list(&[p]).unwrap(), &schema3(), ScanOptions::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(stats.unusable_rows, 1);
    }

    #[test]
    fn duplicate_batch_ids_are_rejected() {
        let paths = [PathBuf::from("a/b1.tsv"), PathBuf::from("c/b1.tsv")];
        assert!(matches!(BatchSource::list(&paths), Err(Error::DuplicateBatch(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn column() -> impl Strategy<Value = (FeatureKind, Value)> {
            let missing = |k| Just((k, Value::Missing));
            prop_oneof![
                missing(FeatureKind::Numeric),
                (-1e12f64..1e12).prop_map(|x| (FeatureKind::Numeric, Value::Numeric(x))),
                missing(FeatureKind::Categorical),
                "[a-zA-Z0-9_]{1,8}".prop_map(|s| (FeatureKind::Categorical, Value::Categorical(s))),
                missing(FeatureKind::Dropped),
                "[a-z0-9]{1,6}".prop_map(|s| (FeatureKind::Dropped, Value::Dropped(s))),
            ]
        }

        proptest! {
            #[test]
            fn row_round_trip(id in "[a-z0-9]{1,10}", cols in prop::collection::vec(column(), 1..8)) {
                let schema = FeatureSchema::new(
                    cols.iter().enumerate().map(|(i, (k, _))| (format!("f{i}"), *k)).collect()
                ).unwrap();
                let values = cols.into_iter().map(|(_, v)| v).collect();
                let rec = RevisionRecord { revision_id: id, batch_id: "b".into(), values, label: None };
                let back = parse_revision_row(&format_revision_row(&rec), &schema, "b").unwrap();
                prop_assert_eq!(back, rec);
            }
        }
    }
}
