// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::package::{PackageConfig, PackageSpec};
use crate::scheduler::Objective;
use crate::workload::{build_gpt2_block, build_resnet50, Gpt2Params, ModelGraph, ResNet50Params};

/// A schedule option evaluated per workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScheduleOption {
    Os,
    Ws,
    OsOs,
    OsWs,
    Search,
}

impl ScheduleOption {
    pub const PAPER_SET: [ScheduleOption; 4] = [Self::Os, Self::Ws, Self::OsOs, Self::OsWs];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Os => "os",
            Self::Ws => "ws",
            Self::OsOs => "os-os",
            Self::OsWs => "os-ws",
            Self::Search => "search",
        }
    }
}

impl fmt::Display for ScheduleOption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleOption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "os" => Self::Os,
            "ws" => Self::Ws,
            "os-os" => Self::OsOs,
            "os-ws" => Self::OsWs,
            "search" => Self::Search,
            other => {
                return Err(Error::config(format!(
                    "unknown option label \"{other}\" (expected os, ws, os-os, os-ws or search)"
                )))
            }
        })
    }
}

impl From<ScheduleOption> for String {
    fn from(o: ScheduleOption) -> Self {
        o.as_str().to_string()
    }
}

impl TryFrom<String> for ScheduleOption {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Normalization basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Baseline {
    /// The single-chiplet os schedule of the same package.
    #[serde(rename = "os")]
    Os,
    /// One os chiplet with the PE count and buffer of the whole package.
    #[serde(rename = "monolithic-4x")]
    Monolithic,
}

impl FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "os" => Ok(Baseline::Os),
            "monolithic-4x" => Ok(Baseline::Monolithic),
            other => Err(Error::config(format!(
                "unknown baseline \"{other}\" (expected os or monolithic-4x)"
            ))),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Baseline::Os => "os",
            Baseline::Monolithic => "monolithic-4x",
        })
    }
}

/// `"default"`, a path to a package file, or an inline package object.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum PackageSource {
    Named(String),
    Inline(PackageConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadEntry {
    builtin: Option<String>,
    params: Option<Value>,
    file: Option<PathBuf>,
}

/// Scenario file as written by users; every field is optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ScenarioFile {
    package: Option<PackageSource>,
    workloads: Option<Vec<WorkloadEntry>>,
    options: Option<Vec<String>>,
    objective: Option<Objective>,
    max_stages: Option<usize>,
    baseline: Option<Baseline>,
    seed: Option<u64>,
    out_json: Option<PathBuf>,
    out_csv: Option<PathBuf>,
}

/// Where a workload came from, echoed into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum WorkloadSource {
    Gpt2Block { params: Gpt2Params },
    Resnet50 { params: ResNet50Params },
    File { path: PathBuf },
}

#[derive(Debug, Clone)]
pub struct Workload {
    pub source: WorkloadSource,
    pub graph: ModelGraph,
}

/// Builds one of the named generators; `params` may be partial.
pub fn builtin_workload(name: &str, params: Option<&Value>) -> Result<Workload> {
    let params = params
        .cloned()
        .unwrap_or_else(|| Value::Object(Default::default()));
    let bad = |e: serde_json::Error| Error::config(format!("{name} params: {e}"));
    match name {
        "gpt2-block" => {
            let params: Gpt2Params = serde_json::from_value(params).map_err(bad)?;
            Ok(Workload {
                graph: build_gpt2_block(&params)?,
                source: WorkloadSource::Gpt2Block { params },
            })
        }
        "resnet50" => {
            let params: ResNet50Params = serde_json::from_value(params).map_err(bad)?;
            Ok(Workload {
                graph: build_resnet50(&params)?,
                source: WorkloadSource::Resnet50 { params },
            })
        }
        other => Err(Error::config(format!(
            "unknown workload \"{other}\" (expected gpt2-block or resnet50)"
        ))),
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_workload_file(path: &Path) -> Result<Workload> {
    let graph: ModelGraph = read_json(path)?;
    Ok(Workload {
        source: WorkloadSource::File {
            path: path.to_path_buf(),
        },
        graph,
    })
}

/// A fully resolved scenario.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub package_source: String,
    pub package_config: PackageConfig,
    pub package: PackageSpec,
    pub workloads: Vec<Workload>,
    pub options: Vec<ScheduleOption>,
    pub objective: Objective,
    pub max_stages: usize,
    pub baseline: Baseline,
    pub seed: u64,
    pub out_json: Option<PathBuf>,
    pub out_csv: Option<PathBuf>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioFile::default()
            .resolve(Path::new("."))
            .expect("default scenario resolves")
    }
}

impl ScenarioConfig {
    /// Parses scenario JSON; relative paths resolve against `base_dir`.
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|source| Error::Parse {
            path: PathBuf::from("<scenario>"),
            source,
        })?;
        file.resolve(base_dir)
    }
}

/// Reads and resolves a scenario file, filling every default.
pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let file: ScenarioFile = read_json(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    file.resolve(base)
}

impl ScenarioFile {
    fn resolve(self, base: &Path) -> Result<ScenarioConfig> {
        let (package_source, package_config) = match self.package {
            None => ("default".to_string(), PackageConfig::default()),
            Some(PackageSource::Named(s)) if s == "default" => (s, PackageConfig::default()),
            Some(PackageSource::Named(path)) => {
                let full = base.join(&path);
                let cfg: PackageConfig = read_json(&full)?;
                (path, cfg)
            }
            Some(PackageSource::Inline(cfg)) => ("inline".to_string(), cfg),
        };
        let mut package_config = package_config;
        package_config.dataflow_map = Some(package_config.resolved_dataflow_map());
        let package = package_config.resolve()?;

        let entries = self.workloads.unwrap_or_else(|| {
            ["gpt2-block", "resnet50"]
                .into_iter()
                .map(|b| WorkloadEntry {
                    builtin: Some(b.to_string()),
                    params: None,
                    file: None,
                })
                .collect()
        });
        if entries.is_empty() {
            return Err(Error::config("scenario lists no workloads"));
        }
        let workloads = entries
            .into_iter()
            .map(|w| match (w.builtin, w.file) {
                (Some(name), None) => builtin_workload(&name, w.params.as_ref()),
                (None, Some(path)) => {
                    if w.params.is_some() {
                        return Err(Error::config("`params` only applies to builtin workloads"));
                    }
                    load_workload_file(&base.join(path))
                }
                _ => Err(Error::config(
                    "each workload needs exactly one of `builtin` or `file`",
                )),
            })
            .collect::<Result<Vec<_>>>()?;

        let options = match self.options {
            None => ScheduleOption::PAPER_SET.to_vec(),
            Some(labels) => labels
                .iter()
                .map(|l| l.parse())
                .collect::<Result<Vec<_>>>()?,
        };
        if options.is_empty() {
            return Err(Error::config("scenario lists no options"));
        }
        let max_stages = self.max_stages.unwrap_or(2);
        if max_stages == 0 {
            return Err(Error::config("max_stages must be >= 1"));
        }

        Ok(ScenarioConfig {
            package_source,
            package_config,
            package,
            workloads,
            options,
            objective: self.objective.unwrap_or(Objective::Throughput),
            max_stages,
            baseline: self.baseline.unwrap_or(Baseline::Os),
            seed: self.seed.unwrap_or(0),
            out_json: self.out_json.map(|p| base.join(p)),
            out_csv: self.out_csv.map(|p| base.join(p)),
        })
    }
}
