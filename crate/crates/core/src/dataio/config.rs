use super::{
    generate_synthetic, load_dense, load_graph, load_labels, load_matrix, read_text, DataError,
    DatasetBundle, FeatureStorage, MatrixFormat, Result, SyntheticSpec,
};
use crate::abft::{CheckThreshold, CheckerKind};
use crate::fault_lab::CampaignConfig;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

const CAMPAIGN_KEYS: &[&str] = &[
    "name",
    "source",
    "trials",
    "seed",
    "thresholds",
    "checkers",
    "faults_per_trial",
    "check_threshold",
];
const SYNTHETIC_KEYS: &[&str] = &[
    "nodes",
    "edge_probability",
    "feature_dim",
    "feature_density",
    "hidden_dims",
    "classes",
    "data_seed",
    "feature_storage",
];
const FILE_KEYS: &[&str] = &[
    "graph",
    "features",
    "features_format",
    "weights",
    "weight_checksums",
    "labels",
];

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Files {
        graph: PathBuf,
        features: PathBuf,
        features_format: MatrixFormat,
        weights: Vec<PathBuf>,
        weight_checksums: Option<Vec<PathBuf>>,
        labels: Option<PathBuf>,
    },
}

/// Parsed run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub campaign: CampaignConfig,
    /// Threshold for fault-free checking; the largest campaign threshold
    /// when absent.
    pub check_threshold: Option<CheckThreshold>,
    pub source: DataSource,
    data_seed_explicit: bool,
}

impl RunConfig {
    /// Replaces the master seed. A synthetic source without its own
    /// `data_seed` follows the master seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.campaign.master_seed = seed;
        if let DataSource::Synthetic(spec) = &mut self.source {
            if !self.data_seed_explicit {
                spec.seed = seed;
            }
        }
    }

    pub fn effective_check_threshold(&self) -> CheckThreshold {
        self.check_threshold.unwrap_or_else(|| {
            self.campaign
                .thresholds
                .iter()
                .copied()
                .fold(None, |m: Option<CheckThreshold>, t| {
                    Some(m.map_or(t, |m| if t > m { t } else { m }))
                })
                .expect("validated config has thresholds")
        })
    }

    pub fn load_dataset(&self) -> Result<DatasetBundle> {
        let mut bundle = match &self.source {
            DataSource::Synthetic(spec) => generate_synthetic(spec)?,
            DataSource::Files {
                graph,
                features,
                features_format,
                weights,
                weight_checksums,
                labels,
            } => DatasetBundle {
                name: self.name.clone(),
                graph: load_graph(graph)?,
                features: load_matrix(features, *features_format)?,
                weights: weights
                    .iter()
                    .map(|w| load_dense(w))
                    .collect::<Result<_>>()?,
                weight_checksums: weight_checksums
                    .as_ref()
                    .map(|ws| ws.iter().map(|w| load_dense(w)).collect::<Result<_>>())
                    .transpose()?,
                golden_labels: labels.as_deref().map(load_labels).transpose()?,
            },
        };
        bundle.name = self.name.clone();
        bundle.validate()?;
        Ok(bundle)
    }
}

struct Entries {
    values: BTreeMap<String, String>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn typed<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse().map_err(|_| DataError::TypeError {
                    key: key.into(),
                    value: v.into(),
                    expected: expected.into(),
                })
            })
            .transpose()
    }

    fn list<T: std::str::FromStr>(&self, key: &str, expected: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse().map_err(|_| DataError::TypeError {
                            key: key.into(),
                            value: v.into(),
                            expected: expected.into(),
                        })
                    })
                    .collect()
            })
            .transpose()
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.raw(key)
            .ok_or_else(|| DataError::MissingKey(key.into()))
    }
}

fn type_error(key: &str, value: &str, expected: &str) -> DataError {
    DataError::TypeError {
        key: key.into(),
        value: value.into(),
        expected: expected.into(),
    }
}

fn parse_checkers(value: &str) -> Result<Vec<CheckerKind>> {
    let mut out = Vec::new();
    for item in value.split(',').map(str::trim) {
        let kinds: &[CheckerKind] = match item {
            "split" => &[CheckerKind::Split],
            "fused" => &[CheckerKind::Fused],
            "both" => &CheckerKind::ALL,
            _ => return Err(type_error("checkers", value, "split, fused or both")),
        };
        for k in kinds {
            if !out.contains(k) {
                out.push(*k);
            }
        }
    }
    out.sort();
    Ok(out)
}

fn parse_threshold(key: &str, raw: &str) -> Result<CheckThreshold> {
    raw.trim()
        .parse::<f64>()
        .ok()
        .and_then(|t| CheckThreshold::new(t).ok())
        .ok_or_else(|| type_error(key, raw, "a positive real"))
}

/// Parses a flat `key = value` file. Relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<RunConfig> {
    let mut values = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| DataError::Parse {
            line,
            message: "expected `key = value`".into(),
        })?;
        let key = key.trim();
        if ![CAMPAIGN_KEYS, SYNTHETIC_KEYS, FILE_KEYS]
            .iter()
            .any(|ks| ks.contains(&key))
        {
            return Err(DataError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        if values
            .insert(key.to_string(), value.trim().to_string())
            .is_some()
        {
            return Err(DataError::Parse {
                line,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    let e = Entries { values };

    let defaults = CampaignConfig::default();
    let thresholds = match e.raw("thresholds") {
        Some(raw) => raw
            .split(',')
            .map(|t| parse_threshold("thresholds", t))
            .collect::<Result<Vec<_>>>()?,
        None => defaults.thresholds.clone(),
    };
    let campaign = CampaignConfig {
        trials: e.typed("trials", "a count")?.unwrap_or(defaults.trials),
        master_seed: e
            .typed("seed", "a 64-bit unsigned integer")?
            .unwrap_or(defaults.master_seed),
        thresholds,
        checkers: e
            .raw("checkers")
            .map(parse_checkers)
            .transpose()?
            .unwrap_or(defaults.checkers),
        faults_per_trial: e
            .typed("faults_per_trial", "a count")?
            .unwrap_or(defaults.faults_per_trial),
    };
    campaign
        .validate()
        .map_err(|err| type_error("campaign", &err.to_string(), "a valid campaign"))?;
    let check_threshold = e
        .raw("check_threshold")
        .map(|v| parse_threshold("check_threshold", v))
        .transpose()?;

    let from_files = match e.raw("source") {
        Some("synthetic") => false,
        Some("files") => true,
        Some(other) => return Err(type_error("source", other, "synthetic or files")),
        None => e.raw("graph").is_some(),
    };
    let (foreign, own) = if from_files {
        (SYNTHETIC_KEYS, "files")
    } else {
        (FILE_KEYS, "synthetic")
    };
    if let Some(key) = foreign.iter().find(|k| e.raw(k).is_some()) {
        return Err(DataError::InvalidSpec(format!(
            "key `{key}` does not apply to a {own} source"
        )));
    }

    let data_seed: Option<u64> = e.typed("data_seed", "a 64-bit unsigned integer")?;
    let source = if from_files {
        let path = |key: &str| -> Result<PathBuf> { Ok(base.join(e.required(key)?)) };
        let features_format = match e.raw("features_format").unwrap_or("sparse") {
            "dense" => MatrixFormat::Dense,
            "sparse" => MatrixFormat::Sparse,
            other => return Err(type_error("features_format", other, "dense or sparse")),
        };
        let weights: Vec<String> = e
            .list("weights", "a comma-separated path list")?
            .unwrap_or_default();
        if weights.is_empty() {
            return Err(DataError::MissingKey("weights".into()));
        }
        DataSource::Files {
            graph: path("graph")?,
            features: path("features")?,
            features_format,
            weights: weights.iter().map(|w| base.join(w)).collect(),
            weight_checksums: e
                .list::<String>("weight_checksums", "a comma-separated path list")?
                .map(|ws| ws.iter().map(|w| base.join(w)).collect()),
            labels: e.raw("labels").map(|l| base.join(l)),
        }
    } else {
        let d = SyntheticSpec::default();
        let feature_storage = match e.raw("feature_storage") {
            None | Some("sparse") => FeatureStorage::Sparse,
            Some("dense") => FeatureStorage::Dense,
            Some(other) => return Err(type_error("feature_storage", other, "dense or sparse")),
        };
        let spec = SyntheticSpec {
            num_nodes: e.typed("nodes", "a count")?.unwrap_or(d.num_nodes),
            edge_probability: e
                .typed("edge_probability", "a real")?
                .unwrap_or(d.edge_probability),
            feature_dim: e.typed("feature_dim", "a count")?.unwrap_or(d.feature_dim),
            feature_density: e
                .typed("feature_density", "a real")?
                .unwrap_or(d.feature_density),
            hidden_dims: e
                .list("hidden_dims", "a comma-separated count list")?
                .unwrap_or(d.hidden_dims),
            num_classes: e.typed("classes", "a count")?.unwrap_or(d.num_classes),
            seed: data_seed.unwrap_or(campaign.master_seed),
            feature_storage,
        };
        spec.validate()?;
        DataSource::Synthetic(spec)
    };

    Ok(RunConfig {
        name: e.raw("name").unwrap_or("run").to_string(),
        campaign,
        check_threshold,
        source,
        data_seed_explicit: data_seed.is_some(),
    })
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = read_text(path)?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}
