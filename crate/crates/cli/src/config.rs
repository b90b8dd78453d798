//! Experiment files: TOML with the loop configuration at top level, an
//! optional `name` and an optional `[tune]` section.

use std::path::Path;

use hystloop_core::tuning::{Dimension, Objective, Optimizer, TuneSpec};
use hystloop_core::{Error, LoopConfig};
use serde::Deserialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub space: Vec<Dimension>,
    pub objective: Objective,
    pub optimizer: Optimizer,
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub name: String,
    pub config: LoopConfig,
    pub tune: Option<TuneSection>,
}

impl Experiment {
    pub fn tune_spec(&self) -> Result<TuneSpec, Error> {
        let t = self
            .tune
            .as_ref()
            .ok_or_else(|| Error::Configuration("no [tune] section in the configuration".into()))?;
        Ok(TuneSpec {
            base_config: self.config.clone(),
            search_space: t.space.clone(),
            objective: t.objective.clone(),
            optimizer: t.optimizer.clone(),
            budget: t.budget,
        })
    }
}

pub fn load(path: &Path, overrides: &[String]) -> Result<Experiment, Error> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut table: Table = text
        .parse()
        .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }

    let name = match table.remove("name") {
        Some(Value::String(s)) => s,
        Some(other) => {
            return Err(Error::Configuration(format!(
                "`name` must be a string, got {other}"
            )))
        }
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into()),
    };
    let tune = table
        .remove("tune")
        .map(|v| {
            v.try_into::<TuneSection>()
                .map_err(|e| Error::Configuration(format!("[tune]: {e}")))
        })
        .transpose()?;
    let config: LoopConfig = Value::Table(table)
        .try_into()
        .map_err(|e| Error::Configuration(format!("{}: {e}", path.display())))?;
    Ok(Experiment { name, config, tune })
}

/// Applies `section.key=value`. The value is read as a TOML literal and
/// falls back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> Result<(), Error> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Configuration(format!("override `{spec}` is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(Error::Configuration(format!("override `{spec}` has an empty key")));
    }
    let value = parse_literal(raw.trim());
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            Error::Configuration(format!("override `{spec}`: `{p}` is not a section"))
        })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_literal(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
