//! Versioned model files.
//!
//! An artifact is one `#` provenance line followed by pretty-printed JSON
//! whose first key is `format_version`. Floats are written in shortest
//! round-trip form, so load→save reproduces the file byte for byte.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wdvd_core::features::FeaturePipeline;
use wdvd_core::learners::Model;

use crate::error::{CliError, CliResult};
use crate::output::Provenance;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactProvenance {
    pub command: String,
    pub seed: u64,
    pub config_digest: String,
    pub created: u64,
    pub train_rows: usize,
    pub train_positives: usize,
    pub hyperparameters: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub provenance: ArtifactProvenance,
    pub pipeline: FeaturePipeline,
    pub model: Model,
}

impl ModelArtifact {
    pub fn new(
        prov: &Provenance,
        pipeline: FeaturePipeline,
        model: Model,
        train_rows: usize,
        train_positives: usize,
        hyperparameters: String,
    ) -> Self {
        ModelArtifact {
            format_version: FORMAT_VERSION,
            provenance: ArtifactProvenance {
                command: prov.command.clone(),
                seed: prov.seed,
                config_digest: prov.config_digest.clone(),
                created: prov.created,
                train_rows,
                train_positives,
                hyperparameters,
            },
            pipeline,
            model,
        }
    }

    pub fn to_text(&self) -> String {
        let p = &self.provenance;
        let json = serde_json::to_string_pretty(self).expect("artifact values are serializable");
        format!(
            "# wdvd {} model={} command={} seed={} config_digest={} created={}\n{json}\n",
            env!("CARGO_PKG_VERSION"),
            self.model.kind(),
            p.command,
            p.seed,
            p.config_digest,
            p.created
        )
    }

    pub fn from_text(text: &str, path: &Path) -> CliResult<Self> {
        let body: String = text
            .lines()
            .skip_while(|l| l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n");
        let value: serde_json::Value =
            serde_json::from_str(&body).map_err(|e| CliError::artifact(path, format!("not a model artifact: {e}")))?;
        match value.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(v) if v == FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(CliError::artifact(
                    path,
                    format!("format_version {v} is not supported (expected {FORMAT_VERSION})"),
                ))
            }
            None => return Err(CliError::artifact(path, "missing format_version")),
        }
        serde_json::from_value(value).map_err(|e| CliError::artifact(path, format!("malformed artifact: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::artifact(path, e.to_string()))?;
        Self::from_text(&text, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use wdvd_core::features::{FeatureConfig, FeaturePipeline};
    use wdvd_core::ingest::{parse_revision_row, FeatureSchema};
    use wdvd_core::learners::LearnerKind;

    fn artifact() -> ModelArtifact {
        let schema = FeatureSchema::parse("a\tnum\nu\tcat\n").unwrap();
        let rows: Vec<_> = (0..20)
            .map(|i| {
                let mut r = parse_revision_row(&format!("{i}\t{}\tv{}", i as f64 * 0.37, i % 3), &schema, "b").unwrap();
                r.label = Some(i % 4 == 0);
                r
            })
            .collect();
        let pipeline = FeaturePipeline::fit(&rows, &schema, &FeatureConfig::default()).unwrap();
        let m = pipeline.transform(&rows).unwrap();
        let model = LearnerKind::Gbt.default_params();
        let model = match model {
            wdvd_core::learners::Hyperparams::Gbt(mut p) => {
                p.rounds = 3;
                wdvd_core::learners::Hyperparams::Gbt(p).fit(&m, 1).unwrap()
            }
            _ => unreachable!(),
        };
        let prov = Provenance {
            command: "train".into(),
            seed: 1,
            config_digest: "d".repeat(64),
            created: 0,
        };
        ModelArtifact::new(&prov, pipeline, model, 20, 5, "rounds=3".into())
    }

    #[test]
    fn save_load_save_is_identical() {
        let a = artifact();
        let text = a.to_text();
        assert!(text.starts_with("# wdvd "));
        assert!(text
            .lines()
            .nth(2)
            .unwrap()
            .trim_start()
            .starts_with("\"format_version\": 1"));
        let back = ModelArtifact::from_text(&text, Path::new("m")).unwrap();
        assert_eq!(back, a);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn version_guard() {
        let text = artifact()
            .to_text()
            .replace("\"format_version\": 1", "\"format_version\": 2");
        let err = ModelArtifact::from_text(&text, Path::new("m")).unwrap_err();
        assert_eq!(err.exit_code(), 5);
        assert!(err.to_string().contains("format_version 2"));
        assert_eq!(
            ModelArtifact::from_text("{}", Path::new("m")).unwrap_err().exit_code(),
            5
        );
        assert_eq!(
            ModelArtifact::from_text("garbage", Path::new("m"))
                .unwrap_err()
                .exit_code(),
            5
        );
    }
}
