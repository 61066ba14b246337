//! Flat `key = value` pipeline configuration.
//!
//! Keys are dotted (`sample.negative_ratio`, `gbt.max_depth`,
//! `grid.ert.n_trees`). Blank lines and `#` comments are ignored; list values
//! are comma separated. Relative paths resolve against the config file's
//! directory. Command-line flags override keys before validation.
//!
//! The digest is the SHA-256 of the canonical effective config: every known
//! key with its effective value, sorted, one `key = value` line each.
//! `output_dir` and `threads` do not change results and are left out.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use wdvd_core::evaluation::{default_axes, expand_grid, Axis};
use wdvd_core::features::FeatureConfig;
use wdvd_core::learners::{Hyperparams, LearnerKind};
use wdvd_core::sampling::SampleConfig;

use crate::error::{CliError, CliResult};

const PLAIN_KEYS: &[&str] = &[
    "schema",
    "data",
    "truth",
    "seed",
    "output_dir",
    "threads",
    "ingest.skip_bad_rows",
    "ingest.has_header",
    "sample.negative_ratio",
    "sample.train_fraction",
    "sample.k_folds",
    "sample.clamp",
    "feature.missingness_threshold",
    "feature.smoothing",
    "learner.kinds",
    "eval.threshold",
];

/// Keys that do not influence any output value.
const UNDIGESTED: &[&str] = &["output_dir", "threads"];

/// Raw key/value pairs plus the directory relative paths resolve against.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
    pub base_dir: PathBuf,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RawConfig {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected `key = value`, got `{line}`", i + 1)))?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(bad(format!("line {}: empty key", i + 1)));
            }
            if entries.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(bad(format!("line {}: duplicate key `{key}`", i + 1)));
            }
        }
        Ok(RawConfig {
            entries,
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &dir)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> CliResult<T> {
    value
        .parse()
        .map_err(|_| bad(format!("`{key}` has invalid value `{value}`")))
}

fn split_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Fully validated settings for one invocation.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub schema: Option<PathBuf>,
    pub data: Vec<PathBuf>,
    pub truth: Option<PathBuf>,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
    pub skip_bad_rows: bool,
    pub has_header: bool,
    pub sample: SampleConfig,
    pub feature: FeatureConfig,
    pub learners: Vec<LearnerKind>,
    pub params: BTreeMap<LearnerKind, Hyperparams>,
    pub grid_axes: BTreeMap<LearnerKind, Vec<Axis>>,
    pub threshold: f64,
    canonical: String,
}

impl PipelineConfig {
    pub fn from_raw(raw: &RawConfig) -> CliResult<Self> {
        let mut params: BTreeMap<LearnerKind, Hyperparams> =
            LearnerKind::ALL.iter().map(|&k| (k, k.default_params())).collect();
        let mut explicit_axes: BTreeMap<LearnerKind, BTreeMap<String, Vec<String>>> = BTreeMap::new();
        for (key, value) in &raw.entries {
            if PLAIN_KEYS.contains(&key.as_str()) {
                continue;
            }
            let parts: Vec<&str> = key.split('.').collect();
            match parts.as_slice() {
                ["grid", kind, name] => {
                    let kind: LearnerKind = kind.parse().map_err(|_| bad(format!("unknown learner in `{key}`")))?;
                    explicit_axes
                        .entry(kind)
                        .or_default()
                        .insert(name.to_string(), split_list(value));
                }
                [kind, name] => {
                    let kind: LearnerKind = kind.parse().map_err(|_| bad(format!("unknown key `{key}`")))?;
                    let hp = params.get_mut(&kind).expect("every kind has params");
                    hp.set(name, value).map_err(|e| bad(format!("`{key}`: {e}")))?;
                }
                _ => return Err(bad(format!("unknown key `{key}`"))),
            }
        }
        // axes follow the learner's own parameter order
        let mut grid_axes = BTreeMap::new();
        for kind in LearnerKind::ALL {
            let axes = match explicit_axes.remove(&kind) {
                None => default_axes(kind),
                Some(mut given) => {
                    let mut axes = Vec::new();
                    for (name, _) in params[&kind].entries() {
                        if let Some(values) = given.remove(name) {
                            axes.push((name.to_string(), values));
                        }
                    }
                    if let Some(name) = given.keys().next() {
                        return Err(bad(format!("`grid.{kind}.{name}` is not a {kind} hyperparameter")));
                    }
                    axes
                }
            };
            expand_grid(&params[&kind], &axes).map_err(|e| bad(format!("grid.{kind}: {e}")))?;
            grid_axes.insert(kind, axes);
        }

        let path = |key: &str| raw.get(key).map(|v| raw.base_dir.join(v));
        let get = |key: &str| raw.get(key);
        let sample_defaults = SampleConfig::default();
        let feature_defaults = FeatureConfig::default();
        let seed = get("seed").map(|v| parse_value("seed", v)).transpose()?.unwrap_or(0);
        let sample = SampleConfig {
            negative_ratio: get("sample.negative_ratio")
                .map(|v| parse_value("sample.negative_ratio", v))
                .transpose()?
                .unwrap_or(sample_defaults.negative_ratio),
            train_fraction: get("sample.train_fraction")
                .map(|v| parse_value("sample.train_fraction", v))
                .transpose()?
                .unwrap_or(sample_defaults.train_fraction),
            k_folds: get("sample.k_folds")
                .map(|v| parse_value("sample.k_folds", v))
                .transpose()?
                .unwrap_or(sample_defaults.k_folds),
            clamp: get("sample.clamp")
                .map(|v| parse_value("sample.clamp", v))
                .transpose()?
                .unwrap_or(false),
            seed,
        };
        sample.validate().map_err(|e| bad(e.to_string()))?;
        let feature = FeatureConfig {
            missingness_threshold: get("feature.missingness_threshold")
                .map(|v| parse_value("feature.missingness_threshold", v))
                .transpose()?
                .unwrap_or(feature_defaults.missingness_threshold),
            smoothing: get("feature.smoothing")
                .map(|v| parse_value("feature.smoothing", v))
                .transpose()?
                .unwrap_or(feature_defaults.smoothing),
        };
        if !(0.0..=1.0).contains(&feature.missingness_threshold) {
            return Err(bad("feature.missingness_threshold must lie in [0, 1]"));
        }
        if !(feature.smoothing >= 0.0 && feature.smoothing.is_finite()) {
            return Err(bad("feature.smoothing must be a finite value >= 0"));
        }
        let learners = match get("learner.kinds") {
            None => LearnerKind::ALL.to_vec(),
            Some(v) => {
                let mut kinds = Vec::new();
                for name in split_list(v) {
                    let kind: LearnerKind = name.parse().map_err(|_| bad(format!("unknown learner `{name}`")))?;
                    if !kinds.contains(&kind) {
                        kinds.push(kind);
                    }
                }
                if kinds.is_empty() {
                    return Err(bad("learner.kinds is empty"));
                }
                kinds
            }
        };
        let threshold = get("eval.threshold")
            .map(|v| parse_value("eval.threshold", v))
            .transpose()?
            .unwrap_or(0.5);
        let threads = get("threads").map(|v| parse_value::<usize>("threads", v)).transpose()?;
        if threads == Some(0) {
            return Err(bad("threads must be at least 1"));
        }

        let mut cfg = PipelineConfig {
            schema: path("schema"),
            data: get("data")
                .map(split_list)
                .unwrap_or_default()
                .iter()
                .map(|p| raw.base_dir.join(p))
                .collect(),
            truth: path("truth"),
            seed,
            output_dir: path("output_dir").unwrap_or_else(|| PathBuf::from(".")),
            threads,
            skip_bad_rows: get("ingest.skip_bad_rows")
                .map(|v| parse_value("ingest.skip_bad_rows", v))
                .transpose()?
                .unwrap_or(false),
            has_header: get("ingest.has_header")
                .map(|v| parse_value("ingest.has_header", v))
                .transpose()?
                .unwrap_or(false),
            sample,
            feature,
            learners,
            params,
            grid_axes,
            threshold,
            canonical: String::new(),
        };
        cfg.canonical = cfg.canonical_text(raw);
        Ok(cfg)
    }

    fn canonical_text(&self, raw: &RawConfig) -> String {
        let mut lines: BTreeMap<String, String> = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            lines.insert(k.to_string(), v);
        };
        for key in ["schema", "data", "truth"] {
            put(key, raw.get(key).map(|v| split_list(v).join(",")).unwrap_or_default());
        }
        put("seed", self.seed.to_string());
        put("ingest.skip_bad_rows", self.skip_bad_rows.to_string());
        put("ingest.has_header", self.has_header.to_string());
        put("sample.negative_ratio", self.sample.negative_ratio.to_string());
        put("sample.train_fraction", self.sample.train_fraction.to_string());
        put("sample.k_folds", self.sample.k_folds.to_string());
        put("sample.clamp", self.sample.clamp.to_string());
        put(
            "feature.missingness_threshold",
            self.feature.missingness_threshold.to_string(),
        );
        put("feature.smoothing", self.feature.smoothing.to_string());
        put(
            "learner.kinds",
            self.learners.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(","),
        );
        put("eval.threshold", self.threshold.to_string());
        for (kind, hp) in &self.params {
            for (name, value) in hp.entries() {
                put(&format!("{kind}.{name}"), value);
            }
        }
        for (kind, axes) in &self.grid_axes {
            for (name, values) in axes {
                put(&format!("grid.{kind}.{name}"), values.join(","));
            }
        }
        debug_assert!(UNDIGESTED.iter().all(|k| !lines.contains_key(*k)));
        lines.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Every effective setting that influences outputs, one sorted line each.
    pub fn canonical(&self) -> &str {
        &self.canonical
    }

    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical.as_bytes()))
    }

    pub fn require_schema(&self) -> CliResult<&Path> {
        self.schema.as_deref().ok_or_else(|| bad("`schema` is not set"))
    }

    pub fn grid(&self, kind: LearnerKind) -> CliResult<Vec<Hyperparams>> {
        expand_grid(&self.params[&kind], &self.grid_axes[&kind]).map_err(|e| bad(e.to_string()))
    }
}
