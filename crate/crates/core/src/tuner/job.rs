//! Tuning job definition and its TOML file format.
//!
//! A job file names the parameter space (inline or in a separate file), the
//! target, the utility expression with its goal, the test budget, and the
//! strategy knobs. Example:
//!
//! ```toml
//! budget = 48
//! set_size = 16
//! seed = 7
//! utility = "ratio(throughput, latency)"
//! goal = "maximize"
//! history = "runs/db.jsonl"
//!
//! [space]
//! parameter = [
//!     { name = "buffer_mb", kind = "int", min = 8, max = 4096 },
//!     { name = "sync_mode", kind = "categorical", categories = ["off", "normal", "full"] },
//! ]
//!
//! [target]
//! kind = "process"
//! test_command = "./bench.sh"
//! timeout_secs = 120
//! declared_metrics = [{ name = "throughput", positive = true }, { name = "latency", positive = true }]
//!
//! [baseline]
//! buffer_mb = 64
//! sync_mode = "normal"
//! ```

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::executor::TargetSpec;
use crate::landscape::get_landscape;
use crate::space::{space_from_toml, ConfigSetting, NativeValue, ParameterSpace};
use crate::utility::{parse_utility, GoalDirection, MetricDecl, UtilitySpec};

pub const DEFAULT_SET_SIZE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerChoice {
    #[default]
    Dds,
    Uniform,
    Lhs,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerChoice {
    #[default]
    Rbs,
    Rrs,
}

impl fmt::Display for SamplerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerChoice::Dds => "dds",
            SamplerChoice::Uniform => "uniform",
            SamplerChoice::Lhs => "lhs",
            SamplerChoice::Grid => "grid",
        })
    }
}

impl fmt::Display for OptimizerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerChoice::Rbs => "rbs",
            OptimizerChoice::Rrs => "rrs",
        })
    }
}

impl FromStr for SamplerChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dds" => Ok(SamplerChoice::Dds),
            "uniform" => Ok(SamplerChoice::Uniform),
            "lhs" => Ok(SamplerChoice::Lhs),
            "grid" => Ok(SamplerChoice::Grid),
            other => Err(Error::JobInvalid {
                detail: format!("unknown sampler `{other}` (expected dds, uniform, lhs, or grid)"),
            }),
        }
    }
}

impl FromStr for OptimizerChoice {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbs" => Ok(OptimizerChoice::Rbs),
            "rrs" => Ok(OptimizerChoice::Rrs),
            other => Err(Error::JobInvalid {
                detail: format!("unknown optimizer `{other}` (expected rbs or rrs)"),
            }),
        }
    }
}

/// A fully validated tuning job.
#[derive(Debug, Clone)]
pub struct TuningJob {
    pub space: ParameterSpace,
    pub target: TargetSpec,
    pub utility: UtilitySpec,
    pub goal: GoalDirection,
    pub budget: u64,
    pub set_size: usize,
    pub seed: Option<u64>,
    pub sampler: SamplerChoice,
    pub optimizer: OptimizerChoice,
    pub history_path: Option<PathBuf>,
    pub baseline: Option<BTreeMap<String, NativeValue>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobDoc {
    budget: u64,
    set_size: Option<usize>,
    seed: Option<u64>,
    sampler: Option<SamplerChoice>,
    optimizer: Option<OptimizerChoice>,
    utility: Option<String>,
    goal: Option<GoalDirection>,
    history: Option<PathBuf>,
    space: Option<toml::Value>,
    space_file: Option<PathBuf>,
    target: TargetSpec,
    baseline: Option<BTreeMap<String, NativeValue>>,
}

impl TuningJob {
    /// Parse a job document. Paths inside the file (`space_file`) resolve
    /// relative to `base_dir`; `history` stays as written.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let doc: JobDoc = toml::from_str(text).map_err(|e| Error::JobParse {
            detail: e.to_string(),
        })?;
        let space = match (doc.space, doc.space_file) {
            (Some(_), Some(_)) => {
                return Err(Error::JobInvalid {
                    detail: "give either an inline [space] or space_file, not both".into(),
                })
            }
            (None, None) => {
                return Err(Error::JobInvalid {
                    detail: "a job needs an inline [space] or a space_file".into(),
                })
            }
            (Some(value), None) => space_from_toml(value)?,
            (None, Some(path)) => {
                let resolved = base_dir.join(path);
                let text = std::fs::read_to_string(&resolved).map_err(|e| Error::JobInvalid {
                    detail: format!("reading space_file {}: {e}", resolved.display()),
                })?;
                crate::space::parse_space_str(&text)?
            }
        };
        let declared = declared_metrics_of(&doc.target)?;
        let utility = match doc.utility {
            Some(expr) => parse_utility(&expr)?,
            None => {
                if declared.len() == 1 {
                    UtilitySpec::Identity(declared[0].name.clone())
                } else {
                    return Err(Error::JobInvalid {
                        detail: format!(
                            "utility is required when the target declares {} metrics",
                            declared.len()
                        ),
                    });
                }
            }
        };
        utility.validate_against(&declared)?;
        let job = TuningJob {
            space,
            target: doc.target,
            utility,
            goal: doc.goal.unwrap_or(GoalDirection::Maximize),
            budget: doc.budget,
            set_size: doc.set_size.unwrap_or(DEFAULT_SET_SIZE),
            seed: doc.seed,
            sampler: doc.sampler.unwrap_or_default(),
            optimizer: doc.optimizer.unwrap_or_default(),
            history_path: doc.history,
            baseline: doc.baseline,
        };
        job.validate()?;
        Ok(job)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::JobInvalid {
            detail: format!("reading job file {}: {e}", path.display()),
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::JobInvalid {
                detail: "budget must be at least 1".into(),
            });
        }
        if self.set_size == 0 {
            return Err(Error::JobInvalid {
                detail: "set_size must be at least 1".into(),
            });
        }
        if let Some(baseline) = &self.baseline {
            self.encode_baseline(baseline)?;
        }
        Ok(())
    }

    /// Baseline values must cover every parameter, by name.
    pub fn encode_baseline(
        &self,
        baseline: &BTreeMap<String, NativeValue>,
    ) -> Result<ConfigSetting> {
        for name in baseline.keys() {
            if !self.space.parameters().iter().any(|p| &p.name == name) {
                return Err(Error::JobInvalid {
                    detail: format!("baseline names unknown parameter `{name}`"),
                });
            }
        }
        let natives = self
            .space
            .parameters()
            .iter()
            .map(|p| {
                baseline.get(&p.name).cloned().ok_or_else(|| Error::JobInvalid {
                    detail: format!("baseline is missing parameter `{}`", p.name),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        self.space.encode_setting(&natives)
    }

    pub fn declared_metrics(&self) -> Result<Vec<MetricDecl>> {
        declared_metrics_of(&self.target)
    }
}

fn declared_metrics_of(target: &TargetSpec) -> Result<Vec<MetricDecl>> {
    match target {
        TargetSpec::Process(proc) => Ok(proc.declared_metrics.clone()),
        TargetSpec::Synthetic { landscape, .. } => Ok(vec![get_landscape(landscape)?.metric_decl()]),
    }
}
