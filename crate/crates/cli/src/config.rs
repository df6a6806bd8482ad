//! Resolved run configuration: defaults, then a TOML file, then `--set`
//! overrides. Keys that do not exist in the defaults are rejected.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pivot_core::controller::ClosedLoopConfig;
use pivot_core::dataset::CollectionPlan;
use pivot_core::eval::{SuiteGrid, ABLATION_WINDOWS};
use pivot_core::filters::KalmanParams;
use pivot_core::nn::{Architecture, Hyper, TrainConfig};
use pivot_core::sim::{Protocol, SimConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub closed_loop: ClosedLoopConfig,
    pub kalman: KalmanParams,
    pub collect: CollectSection,
    pub model: ModelSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectSection {
    pub rotate_to_stop: CollectionPlan,
    pub angle_goal: CollectionPlan,
    /// Angle-goal episodes ending further than this from the goal are dropped, degrees.
    pub goal_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub hyper: Hyper,
    pub train: TrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Training repeats per split in the offline studies.
    pub repeats: usize,
    /// Closed-loop evaluation grid.
    pub grid: SuiteGrid,
    pub windows: Vec<usize>,
    pub finetune: FinetuneSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneSection {
    pub epochs: usize,
    /// Grid the in-loop data is collected on; scenarios are drawn with a
    /// seed distinct from the evaluation grid.
    pub collection: SuiteGrid,
    /// Mix the base model's training sequences into fine-tuning.
    pub replay: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    /// Parameter tables of the reference setup.
    Paper,
    /// Hidden 32, for desk-scale runs.
    Toy,
}

impl RunConfig {
    pub fn defaults(arch: Architecture, scale: Scale) -> Self {
        let hyper = match scale {
            Scale::Paper => Hyper::paper(arch),
            Scale::Toy => Hyper::toy(arch),
        };
        RunConfig {
            sim: SimConfig::default(),
            closed_loop: ClosedLoopConfig::default(),
            kalman: KalmanParams::default(),
            collect: CollectSection {
                rotate_to_stop: CollectionPlan::paper(Protocol::RotateToStop).with_both_variants(),
                angle_goal: CollectionPlan::paper(Protocol::AngleGoal).with_both_variants(),
                goal_tolerance: 10.0,
            },
            model: ModelSection {
                hyper,
                train: TrainConfig::default(),
            },
            eval: EvalSection {
                repeats: 3,
                grid: SuiteGrid::default(),
                windows: ABLATION_WINDOWS.to_vec(),
                finetune: FinetuneSection {
                    epochs: 20,
                    collection: SuiteGrid::default(),
                    replay: false,
                },
            },
        }
    }

    /// Applies a config file and `key=value` overrides on top of `self`.
    pub fn resolve(self, file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = Table::try_from(&self).context("encoding default configuration")?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let user: Table = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            merge(&mut table, user, "").with_context(|| format!("in {}", path.display()))?;
        }
        for o in overrides {
            apply_override(&mut table, o).with_context(|| format!("--set {o}"))?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .context("configuration does not match the expected types")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("encoding configuration")
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn unknown(path: &str, table: &Table) -> anyhow::Error {
    let keys: Vec<&str> = table.keys().map(String::as_str).collect();
    anyhow!("unknown key {path:?}; expected one of: {}", keys.join(", "))
}

fn merge(base: &mut Table, user: Table, prefix: &str) -> Result<()> {
    for (k, v) in user {
        let path = join(prefix, &k);
        let Some(slot) = base.get_mut(&k) else {
            return Err(unknown(&path, base));
        };
        match (slot, v) {
            (Value::Table(b), Value::Table(u)) => merge(b, u, &path)?,
            (slot, v) => *slot = coerce(v, slot),
        }
    }
    Ok(())
}

fn apply_override(table: &mut Table, text: &str) -> Result<()> {
    let (key, raw) = text.split_once('=').ok_or_else(|| anyhow!("expected KEY=VALUE"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    let mut cur = table;
    let mut path = String::new();
    for (i, part) in parts.iter().enumerate() {
        path = join(&path, part);
        if !cur.contains_key(*part) {
            return Err(unknown(&path, cur));
        }
        if i + 1 == parts.len() {
            let slot = cur.get_mut(*part).expect("checked above");
            if slot.is_table() {
                bail!("{path:?} is a section; set one of its keys instead");
            }
            *slot = coerce(parse_value(raw.trim()), slot);
            return Ok(());
        }
        cur = match cur.get_mut(*part) {
            Some(Value::Table(t)) => t,
            _ => bail!("{path:?} is not a section"),
        };
    }
    unreachable!("split yields at least one part")
}

/// A TOML literal, or the raw text as a string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Integers written where the default holds floats become floats.
fn coerce(v: Value, like: &Value) -> Value {
    match (v, like) {
        (Value::Integer(i), Value::Float(_)) => Value::Float(i as f64),
        (Value::Array(items), Value::Array(model)) if !model.is_empty() => {
            Value::Array(items.into_iter().map(|x| coerce(x, &model[0])).collect())
        }
        (v, _) => v,
    }
}
