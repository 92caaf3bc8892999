use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{generate_multigraph, generate_sbm, load_citation, LabeledDataset, MultigraphParams, SbmParams};
use crate::scalar::Scalar;
use crate::search::{SearchConfig, Strategy};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// A file in the line-oriented citation format.
    File,
    Sbm,
    Multigraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    F32,
    F64,
}

/// Run-level settings. The config file is one flat JSON object holding
/// these keys plus every [`SearchConfig`] key; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSettings {
    pub dataset: DatasetKind,
    pub dataset_path: Option<PathBuf>,
    pub sbm: SbmParams,
    pub multigraph: MultigraphParams,
    pub out_dir: PathBuf,
    /// Independent trainings per architecture for mean ± std reporting.
    pub repeats: usize,
    /// Reward threshold of the count-above curve.
    pub curve_threshold: f64,
    pub precision: Precision,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            dataset: DatasetKind::File,
            dataset_path: None,
            sbm: SbmParams::default(),
            multigraph: MultigraphParams::default(),
            out_dir: PathBuf::from("out"),
            repeats: 1,
            curve_threshold: 0.8,
            precision: Precision::F64,
        }
    }
}

const RUN_KEYS: [&str; 8] =
    ["dataset", "dataset_path", "sbm", "multigraph", "out_dir", "repeats", "curve_threshold", "precision"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub run: RunSettings,
    pub search: SearchConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub strategy: Option<String>,
}

/// Deserializes `value` into `T`; on failure retries key by key so the
/// error names the offending field.
fn typed<T: for<'de> Deserialize<'de>>(map: Map<String, Value>, prefix: &str) -> Result<T> {
    match serde_json::from_value(Value::Object(map.clone())) {
        Ok(v) => Ok(v),
        Err(whole) => {
            for (k, v) in map {
                let mut one = Map::new();
                one.insert(k.clone(), v);
                if let Err(e) = serde_json::from_value::<T>(Value::Object(one)) {
                    return Err(Error::config(format!("{prefix}{k}"), e.to_string()));
                }
            }
            Err(Error::config(prefix.trim_end_matches('.'), whole.to_string()))
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("<file>", e.to_string()))?;
        let Value::Object(map) = value else {
            return Err(Error::config("<file>", "expected a JSON object"));
        };
        let (run, search): (Map<String, Value>, Map<String, Value>) =
            map.into_iter().partition(|(k, _)| RUN_KEYS.contains(&k.as_str()));
        let config = RunConfig { run: typed(run, "")?, search: typed(search, "")? };
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Flags override file values.
    pub fn apply(&mut self, o: &Overrides) -> Result<()> {
        if let Some(seed) = o.seed {
            self.search.seed = seed;
        }
        if let Some(out) = &o.out {
            self.run.out_dir = out.clone();
        }
        if let Some(name) = &o.strategy {
            self.search.strategy = Strategy::from_name(name)
                .ok_or_else(|| Error::config("strategy", format!("unknown strategy `{name}`")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.dataset == DatasetKind::File && self.run.dataset_path.is_none() {
            return Err(Error::config("dataset_path", "required when dataset is `file`"));
        }
        if self.run.repeats == 0 {
            return Err(Error::config("repeats", "must be at least 1"));
        }
        self.search.validate()
    }

    pub fn load_dataset<T: Scalar>(&self) -> Result<LabeledDataset<T>> {
        match self.run.dataset {
            DatasetKind::File => {
                let path = self.run.dataset_path.as_ref().ok_or_else(|| Error::config("dataset_path", "missing"))?;
                load_citation(path).map_err(|e| match e {
                    Error::Io(io) => Error::config("dataset_path", format!("{}: {io}", path.display())),
                    other => other,
                })
            }
            DatasetKind::Sbm => generate_sbm(&self.run.sbm),
            DatasetKind::Multigraph => generate_multigraph(&self.run.multigraph),
        }
    }
}
