//! The five pipeline subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use wdvd_core::evaluation::{
    cross_validate, curve_tsv, curves_svg, evaluate_models, fit_final, CurveKind, CurvePoints,
};
use wdvd_core::features::ExclusionReason;
use wdvd_core::ingest::{
    join_labels, BatchScanner, BatchSource, FeatureSchema, RowPolicy, ScanOptions, ScanStats, TruthTable,
};
use wdvd_core::learners::{Hyperparams, LearnerKind};
use wdvd_core::sampling::{assign_splits, subsample, LabelCensus, SamplePlan};
use wdvd_core::synthetic::{generate, SyntheticSpec};

use crate::artifact::ModelArtifact;
use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};
use crate::output::{
    format_sample, format_scores, load_split_data, read_file, sample_path, write_file, write_with_header, Provenance,
    SplitData, SPLIT_FILE, SUMMARY_FILE,
};

fn scan_options(cfg: &PipelineConfig) -> ScanOptions {
    ScanOptions {
        policy: if cfg.skip_bad_rows {
            RowPolicy::SkipAndCount
        } else {
            RowPolicy::Abort
        },
        has_header: cfg.has_header,
    }
}

fn load_schema(cfg: &PipelineConfig) -> CliResult<FeatureSchema> {
    Ok(FeatureSchema::load(cfg.require_schema()?)?)
}

pub fn artifact_path(dir: &Path, kind: LearnerKind) -> PathBuf {
    dir.join(format!("model_{kind}.artifact"))
}

/// What `sample` wrote, for callers and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSummary {
    pub positives: u64,
    pub negatives: u64,
    pub train_rows: usize,
    pub validation_rows: usize,
    pub scan: ScanStats,
}

pub fn cmd_sample(cfg: &PipelineConfig) -> CliResult<SampleSummary> {
    let schema = load_schema(cfg)?;
    let truth_path = cfg
        .truth
        .as_deref()
        .ok_or_else(|| CliError::Config("`truth` is not set".into()))?;
    if cfg.data.is_empty() {
        return Err(CliError::Config("`data` lists no batch files".into()));
    }
    let truth = TruthTable::load(truth_path)?;
    let sources = BatchSource::list(&cfg.data)?;
    let options = scan_options(cfg);

    let mut census = LabelCensus::default();
    for s in &sources {
        census.ensure_batch(&s.batch_id);
    }
    let mut scanner = BatchScanner::new(sources.clone(), &schema, options)?;
    for rec in join_labels(scanner.by_ref(), &truth) {
        census.observe(&rec?);
    }
    let scan = scanner.stats();
    info!(
        "census: {} positives, {} negatives, {} unlabeled, {} skipped rows",
        census.positives(),
        census.negatives(),
        census.unlabeled(),
        scan.skipped_rows
    );
    let plan = SamplePlan::build(&census, &cfg.sample)?;
    let scanner = BatchScanner::new(sources, &schema, options)?;
    let sampled = subsample(join_labels(scanner, &truth), &plan, &cfg.sample)?;
    let split = assign_splits(&sampled.records, &cfg.sample)?;

    let prov = Provenance::new("sample", cfg);
    write_with_header(&sample_path(cfg), &prov, &format_sample(&schema, &sampled.records))?;
    write_with_header(&cfg.output_dir.join(SPLIT_FILE), &prov, &split.to_tsv())?;

    let mut per_batch: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in &sampled.records {
        let e = per_batch.entry(r.batch_id.as_str()).or_default();
        if r.label == Some(true) {
            e.0 += 1;
        } else {
            e.1 += 1;
        }
    }
    let mut summary = String::new();
    let _ = writeln!(
        summary,
        "# skipped_rows={} unusable_rows={} unlabeled_rows={} clamped={}",
        scan.skipped_rows,
        scan.unusable_rows,
        census.unlabeled(),
        plan.clamped
    );
    summary.push_str(
        "batch_id\trows\tpositives\tnegatives\tunlabeled\tnegative_quota\tsampled_positives\tsampled_negatives\n",
    );
    let mut totals = [0u64; 7];
    for b in &census.batches {
        let (sp, sn) = per_batch.get(b.batch_id.as_str()).copied().unwrap_or_default();
        let row = [
            b.rows,
            b.positives,
            b.negatives,
            b.unlabeled,
            plan.quota(&b.batch_id),
            sp,
            sn,
        ];
        for (t, v) in totals.iter_mut().zip(row) {
            *t += v;
        }
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        let _ = writeln!(summary, "{}\t{}", b.batch_id, cells.join("\t"));
    }
    let cells: Vec<String> = totals.iter().map(u64::to_string).collect();
    let _ = writeln!(summary, "total\t{}", cells.join("\t"));
    write_with_header(&cfg.output_dir.join(SUMMARY_FILE), &prov, &summary)?;

    Ok(SampleSummary {
        positives: census.positives(),
        negatives: plan.total_negatives_target,
        train_rows: split.train_count(),
        validation_rows: split.validation_count(),
        scan,
    })
}

fn training_log(artifact: &ModelArtifact) -> String {
    let mut log = String::new();
    let kind = artifact.model.kind();
    let p = &artifact.pipeline;
    let _ = writeln!(log, "{kind}\thyperparameters\t{}", artifact.provenance.hyperparameters);
    let _ = writeln!(
        log,
        "{kind}\ttrain_rows\t{} ({} positive)",
        artifact.provenance.train_rows, artifact.provenance.train_positives
    );
    for d in &p.retained.features {
        let _ = writeln!(log, "{kind}\tretained\t{}\t{}", d.name, d.kind.as_str());
    }
    for (name, reason) in &p.retained.excluded {
        let why = match reason {
            ExclusionReason::Dropped => "dropped by schema".to_string(),
            ExclusionReason::Missingness(f) => format!("missing in {f} of training rows"),
        };
        let _ = writeln!(log, "{kind}\texcluded\t{name}\t{why}");
    }
    log
}

fn fit_and_save(
    cfg: &PipelineConfig,
    schema: &FeatureSchema,
    data: &SplitData,
    hp: &Hyperparams,
    prov: &Provenance,
) -> CliResult<ModelArtifact> {
    info!("fitting {} ({hp}) on {} rows", hp.kind(), data.train.len());
    let (pipeline, model) = fit_final(hp, &data.train, schema, &cfg.feature, cfg.seed)?;
    let positives = data.train.iter().filter(|r| r.label == Some(true)).count();
    let artifact = ModelArtifact::new(prov, pipeline, model, data.train.len(), positives, hp.to_string());
    write_file(&artifact_path(&cfg.output_dir, hp.kind()), &artifact.to_text())?;
    Ok(artifact)
}

pub fn cmd_train(cfg: &PipelineConfig) -> CliResult<Vec<PathBuf>> {
    let schema = load_schema(cfg)?;
    let data = load_split_data(cfg, &schema)?;
    let prov = Provenance::new("train", cfg);
    let mut log = String::new();
    let mut written = Vec::new();
    for &kind in &cfg.learners {
        let artifact = fit_and_save(cfg, &schema, &data, &cfg.params[&kind], &prov)?;
        log.push_str(&training_log(&artifact));
        written.push(artifact_path(&cfg.output_dir, kind));
    }
    write_with_header(&cfg.output_dir.join("train.log"), &prov, &log)?;
    Ok(written)
}

pub fn cmd_select(cfg: &PipelineConfig) -> CliResult<Vec<PathBuf>> {
    let schema = load_schema(cfg)?;
    let data = load_split_data(cfg, &schema)?;
    let prov = Provenance::new("select", cfg);
    let mut log = String::new();
    let mut written = Vec::new();
    for &kind in &cfg.learners {
        let grid = cfg.grid(kind)?;
        info!(
            "cross-validating {} {kind} configs over {} folds",
            grid.len(),
            cfg.sample.k_folds
        );
        let cv = cross_validate(&grid, &data.train, &data.folds, &schema, &cfg.feature, cfg.seed)?;
        write_with_header(&cfg.output_dir.join(format!("cv_{kind}.tsv")), &prov, &cv.to_tsv())?;
        let best = cv.best_config().clone();
        info!("{kind}: best mean ROC-AUC {} with {best}", cv.entries[cv.best].mean);
        let artifact = fit_and_save(cfg, &schema, &data, &best, &prov)?;
        log.push_str(&training_log(&artifact));
        written.push(artifact_path(&cfg.output_dir, kind));
    }
    write_with_header(&cfg.output_dir.join("train.log"), &prov, &log)?;
    Ok(written)
}

fn unique_tags(artifacts: &[ModelArtifact]) -> Vec<String> {
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    artifacts
        .iter()
        .map(|a| {
            let tag = a.model.kind().tag();
            let n = seen.entry(tag).or_insert(0);
            *n += 1;
            if *n == 1 {
                tag.to_string()
            } else {
                format!("{tag}{n}")
            }
        })
        .collect()
}

fn check_schema(artifact: &ModelArtifact, schema: &FeatureSchema, path: &Path) -> CliResult<()> {
    if &artifact.pipeline.raw_schema != schema {
        return Err(wdvd_core::Error::SchemaMismatch(format!(
            "{} was trained on a different feature schema",
            path.display()
        ))
        .into());
    }
    Ok(())
}

/// Returns the selected model tag.
pub fn cmd_evaluate(cfg: &PipelineConfig, artifact_paths: &[PathBuf]) -> CliResult<String> {
    let paths: Vec<PathBuf> = if artifact_paths.is_empty() {
        cfg.learners
            .iter()
            .map(|&k| artifact_path(&cfg.output_dir, k))
            .collect()
    } else {
        artifact_paths.to_vec()
    };
    let artifacts = paths
        .iter()
        .map(|p| ModelArtifact::load(p))
        .collect::<CliResult<Vec<_>>>()?;
    let schema = load_schema(cfg)?;
    let data = load_split_data(cfg, &schema)?;
    let labels: Vec<bool> = data.validation.iter().map(|r| r.label == Some(true)).collect();
    let tags = unique_tags(&artifacts);
    let prov = Provenance::new("evaluate", cfg);
    let mut models = Vec::new();
    for ((artifact, path), tag) in artifacts.iter().zip(&paths).zip(&tags) {
        check_schema(artifact, &schema, path)?;
        let matrix = artifact.pipeline.transform(&data.validation)?;
        let scored = artifact.model.score(&matrix)?;
        write_with_header(
            &cfg.output_dir.join(format!("scores_{tag}.tsv")),
            &prov,
            &format_scores(&scored.row_ids, &scored.scores),
        )?;
        models.push((tag.clone(), scored.scores));
    }
    let report = evaluate_models(&models, &labels, cfg.threshold)?;
    write_with_header(&cfg.output_dir.join("table1.tsv"), &prov, &report.table1())?;
    write_with_header(&cfg.output_dir.join("table2.tsv"), &prov, &report.table2())?;
    for m in &report.models {
        let tag = &m.row.model_tag;
        write_with_header(
            &cfg.output_dir.join(format!("roc_{tag}.tsv")),
            &prov,
            &curve_tsv(&m.roc),
        )?;
        write_with_header(&cfg.output_dir.join(format!("pr_{tag}.tsv")), &prov, &curve_tsv(&m.pr))?;
    }
    for kind in [CurveKind::Roc, CurveKind::Pr] {
        let curves: Vec<(&str, &CurvePoints)> = report
            .models
            .iter()
            .map(|m| {
                let c = if kind == CurveKind::Roc { &m.roc } else { &m.pr };
                (m.row.model_tag.as_str(), c)
            })
            .collect();
        let svg = curves_svg(kind, &curves);
        // SVG cannot start with `#`, so the provenance line goes in a comment
        write_file(
            &cfg.output_dir.join(format!("{}.svg", kind.as_str())),
            &format!("<!-- {} -->\n{svg}", prov.header()),
        )?;
    }
    Ok(report.selected)
}

/// Path of the report `score --truth` writes next to the score file.
pub fn score_report_path(out: &Path) -> PathBuf {
    out.with_extension("report.tsv")
}

/// Scores raw batch files; returns the number of rows written.
///
/// With `truth`, also writes a report in the test-table layout over the
/// scored rows that have a label.
pub fn cmd_score(
    cfg: &PipelineConfig,
    artifact: &Path,
    inputs: &[PathBuf],
    out: &Path,
    truth: Option<&Path>,
) -> CliResult<usize> {
    let model = ModelArtifact::load(artifact)?;
    let schema = &model.pipeline.raw_schema;
    let sources = BatchSource::list(inputs)?;
    let mut row_ids = Vec::new();
    let mut scores = Vec::new();
    let mut scanner = BatchScanner::new(sources, schema, scan_options(cfg))?;
    // bounded chunks keep memory flat on large inputs
    loop {
        let chunk = scanner.by_ref().take(50_000).collect::<Result<Vec<_>, _>>()?;
        if chunk.is_empty() {
            break;
        }
        let matrix = model.pipeline.transform(&chunk)?;
        let scored = model.model.score(&matrix)?;
        row_ids.extend(scored.row_ids);
        scores.extend(scored.scores);
    }
    let prov = Provenance {
        command: "score".into(),
        seed: model.provenance.seed,
        config_digest: model.provenance.config_digest.clone(),
        created: crate::output::creation_time(),
    };
    write_with_header(out, &prov, &format_scores(&row_ids, &scores))?;
    if let Some(truth) = truth {
        let truth = TruthTable::load(truth)?;
        let (mut labeled, mut labels) = (Vec::new(), Vec::new());
        for (id, &s) in row_ids.iter().zip(&scores) {
            if let Some(y) = truth.get(id) {
                labeled.push(s);
                labels.push(y);
            }
        }
        info!("{} of {} scored rows have a label", labels.len(), row_ids.len());
        let tag = model.model.kind().tag().to_string();
        let report = evaluate_models(&[(tag, labeled)], &labels, cfg.threshold)?;
        write_with_header(&score_report_path(out), &prov, &report.table2())?;
    }
    Ok(row_ids.len())
}

/// Writes a synthetic corpus plus `pipeline.conf` referring to it by relative paths.
pub fn cmd_synth(spec: &SyntheticSpec, dir: &Path) -> CliResult<PathBuf> {
    let corpus = generate(spec)?;
    let paths = corpus.write_to(dir)?;
    let name = |p: &Path| {
        p.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let data: Vec<String> = paths.batches.iter().map(|p| name(p)).collect();
    let conf = format!(
        "schema = {}\ndata = {}\ntruth = {}\nseed = {}\nsample.negative_ratio = 4\n",
        name(&paths.schema),
        data.join(", "),
        name(&paths.truth),
        spec.seed
    );
    let path = dir.join("pipeline.conf");
    write_file(&path, &conf)?;
    Ok(path)
}

/// Reads back a score file written by `evaluate` or `score`.
pub fn read_scores(path: &Path) -> CliResult<Vec<(String, String)>> {
    Ok(read_file(path)?
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "revision_id\tscore")
        .filter_map(|l| l.split_once('\t').map(|(a, b)| (a.to_string(), b.to_string())))
        .collect())
}
