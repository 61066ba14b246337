//! Provenance headers and the on-disk formats shared between subcommands.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use wdvd_core::ingest::{format_revision_row, parse_revision_row, FeatureSchema, RevisionRecord};
use wdvd_core::sampling::{Role, SplitAssignment};
use wdvd_core::Error;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

pub const SAMPLE_FILE: &str = "sample.tsv";
pub const SPLIT_FILE: &str = "split.tsv";
pub const SUMMARY_FILE: &str = "summary.tsv";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    /// Seconds since the epoch, from `SOURCE_DATE_EPOCH`, else 0.
    pub created: u64,
}

pub fn creation_time() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(0)
}

impl Provenance {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        Provenance {
            command: command.to_string(),
            seed: cfg.seed,
            config_digest: cfg.digest(),
            created: creation_time(),
        }
    }

    pub fn header(&self) -> String {
        format!(
            "# wdvd {} command={} seed={} config_digest={} created={}",
            env!("CARGO_PKG_VERSION"),
            self.command,
            self.seed,
            self.config_digest,
            self.created
        )
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Writes `body` after the provenance line.
pub fn write_with_header(path: &Path, prov: &Provenance, body: &str) -> CliResult<()> {
    write_file(path, &format!("{}\n{body}", prov.header()))
}

pub fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn sample_header(schema: &FeatureSchema) -> String {
    let mut h = String::from("revision_id\tbatch_id\tlabel");
    for d in schema.decls() {
        h.push('\t');
        h.push_str(&d.name);
    }
    h
}

/// `revision_id, batch_id, label` followed by the raw feature columns.
pub fn format_sample(schema: &FeatureSchema, records: &[RevisionRecord]) -> String {
    let mut out = sample_header(schema);
    out.push('\n');
    for r in records {
        let row = format_revision_row(r);
        let (id, features) = row.split_once('\t').unwrap_or((&row, ""));
        let label = match r.label {
            Some(true) => "1",
            Some(false) => "0",
            None => "NA",
        };
        let _ = writeln!(out, "{id}\t{}\t{label}\t{features}", r.batch_id);
    }
    out
}

pub fn parse_sample(text: &str, schema: &FeatureSchema, path: &Path) -> CliResult<Vec<RevisionRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
    let mismatch = |msg: String| CliError::from(Error::SchemaMismatch(format!("{}: {msg}", path.display())));
    match lines.next() {
        Some((_, h)) if h == sample_header(schema) => {}
        Some((_, h)) => return Err(mismatch(format!("header `{h}` does not match the schema"))),
        None => return Err(mismatch("missing header".into())),
    }
    lines
        .map(|(i, line)| {
            let mut cols = line.splitn(4, '\t');
            let (id, batch, label) = (cols.next(), cols.next(), cols.next());
            let features = cols.next().unwrap_or("");
            let (Some(id), Some(batch), Some(label)) = (id, batch, label) else {
                return Err(mismatch(format!("line {}: too few columns", i + 1)));
            };
            let mut rec = parse_revision_row(&format!("{id}\t{features}"), schema, batch).map_err(|e| {
                CliError::from(Error::Row {
                    batch_id: path.display().to_string(),
                    line: i + 1,
                    source: Box::new(e),
                })
            })?;
            rec.label = match label {
                "1" => Some(true),
                "0" => Some(false),
                _ => return Err(mismatch(format!("line {}: bad label `{label}`", i + 1))),
            };
            Ok(rec)
        })
        .collect()
}

/// Numeric ids compare as numbers, anything else as text after them.
pub fn row_id_order(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// Labeled rows of the sampled dataset split into training rows (with folds) and validation rows.
/// Validation rows are in row-id order, which is also the tie order for average precision.
pub struct SplitData {
    pub train: Vec<RevisionRecord>,
    pub folds: Vec<usize>,
    pub validation: Vec<RevisionRecord>,
}

pub fn sample_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join(SAMPLE_FILE)
}

pub fn load_split_data(cfg: &PipelineConfig, schema: &FeatureSchema) -> CliResult<SplitData> {
    let sample_path = sample_path(cfg);
    let split_path = cfg.output_dir.join(SPLIT_FILE);
    let records = parse_sample(&read_file(&sample_path)?, schema, &sample_path)?;
    let split = SplitAssignment::parse_tsv(&read_file(&split_path)?)?;
    if split.entries.len() != records.len() {
        return Err(Error::SchemaMismatch(format!(
            "{} lists {} rows, {} has {}",
            split_path.display(),
            split.entries.len(),
            sample_path.display(),
            records.len()
        ))
        .into());
    }
    let mut data = SplitData {
        train: Vec::new(),
        folds: Vec::new(),
        validation: Vec::new(),
    };
    for (r, e) in records.into_iter().zip(split.entries) {
        if r.revision_id != e.row_id {
            return Err(Error::SchemaMismatch(format!(
                "split row `{}` does not match sample row `{}`",
                e.row_id, r.revision_id
            ))
            .into());
        }
        match e.role {
            Role::Train => {
                data.train.push(r);
                data.folds.push(e.fold.expect("train rows carry a fold"));
            }
            Role::Validation => data.validation.push(r),
        }
    }
    data.validation
        .sort_by(|a, b| row_id_order(&a.revision_id, &b.revision_id));
    Ok(data)
}

/// Six decimals, kept strictly inside `(0, 1)`.
pub fn format_score(score: f64) -> String {
    format!("{:.6}", score.clamp(0.000_001, 0.999_999))
}

pub fn format_scores(row_ids: &[String], scores: &[f64]) -> String {
    let mut out = String::from("revision_id\tscore\n");
    for (id, s) in row_ids.iter().zip(scores) {
        let _ = writeln!(out, "{id}\t{}", format_score(*s));
    }
    out
}
