//! Experiment configuration files.
//!
//! ```toml
//! [link]
//! main_snr_db = 20.0
//! eve_snr_db = 10.0
//!
//! [scheme]
//! kind = "random_tx"
//! tx_prob = [0.1, 0.35]
//!
//! [targets]
//! budgets = [20.0]
//! ```
//!
//! Unknown keys are rejected. `section.key=value` overrides are applied on
//! top of the file before validation.

use std::path::{Path, PathBuf};

use keyruin_core::finite_time::GridSpec;
use keyruin_core::{ChannelModel, LinkPair, NetUsageGrid, SchemeSpec};
use serde::Deserialize;

use crate::error::{CliError, ConfigError};
use crate::parallel::McOptions;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub link: LinkSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub targets: TargetsSection,
    #[serde(default)]
    pub mc: McSection,
    #[serde(default)]
    pub ultimate: UltimateSection,
    #[serde(default)]
    pub outputs: OutputsSection,
}

/// Mean SNRs in dB of the Rayleigh-faded links.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub main_snr_db: f64,
    pub eve_snr_db: f64,
    /// Data link; defaults to the main link.
    pub tx_snr_db: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    Deterministic,
    RandomTx,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Self::One(v) => vec![*v],
            Self::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    #[serde(default)]
    pub kind: SchemeKind,
    pub tx_prob: Option<OneOrMany>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// Bits between grid points, shared by net usage and budgets.
    pub step: f64,
    pub t_max: usize,
    pub b_min: f64,
    pub b_max: f64,
    /// Explicit net-usage support; both ends or neither.
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            step: 0.01,
            t_max: 30,
            b_min: 0.0,
            b_max: 60.0,
            z_min: None,
            z_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetsSection {
    /// Initial budgets in bits.
    pub budgets: Vec<f64>,
    /// Slots to report; all of `1..=t_max` when absent.
    pub times: Option<Vec<usize>>,
    pub taus: Vec<usize>,
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSection {
    pub trials: u64,
    pub seed: u64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            trials: 1_000_000,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UltimateSection {
    /// Bits between Nyström nodes.
    pub node_spacing: f64,
    /// Horizon of the Monte Carlo stand-in for ultimate ruin.
    pub horizon: usize,
}

impl Default for UltimateSection {
    fn default() -> Self {
        Self {
            node_spacing: 0.1,
            horizon: 150,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsSection {
    pub csv: Option<PathBuf>,
}

/// A parsed configuration together with its source, for error locations.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    origin: String,
    source: String,
    overridden: Vec<String>,
}

/// The command a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Outage,
    Budget,
    Ultimate,
    Moments,
}

impl LoadedConfig {
    pub fn from_file(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let source = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_owned(),
            source,
        })?;
        Ok(Self::from_str(&source, &path.display().to_string(), overrides)?)
    }

    /// Parses `source`, naming it `origin` in messages.
    pub fn from_str(source: &str, origin: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let err = |line, message| ConfigError {
            origin: origin.to_owned(),
            line,
            message,
        };
        let config = if overrides.is_empty() {
            toml::from_str::<ExperimentConfig>(source)
                .map_err(|e| err(span_line(source, e.span()), e.message().to_owned()))?
        } else {
            let mut table: toml::Table =
                toml::from_str(source).map_err(|e| err(span_line(source, e.span()), e.message().to_owned()))?;
            for o in overrides {
                apply_override(&mut table, o).map_err(|m| err(None, m))?;
            }
            ExperimentConfig::deserialize(toml::Value::Table(table))
                .map_err(|e| err(None, format!("{} (after --set overrides)", e.message())))?
        };
        let overridden = overrides
            .iter()
            .filter_map(|o| o.split_once('=').map(|(k, _)| k.trim().to_owned()))
            .collect();
        Ok(Self {
            config,
            origin: origin.to_owned(),
            source: source.to_owned(),
            overridden,
        })
    }

    fn error(&self, section: &str, key: &str, message: impl Into<String>) -> ConfigError {
        let dotted = format!("{section}.{key}");
        let message = message.into();
        if self.overridden.contains(&dotted) {
            return ConfigError {
                origin: self.origin.clone(),
                line: None,
                message: format!("{message} (set by --set {dotted})"),
            };
        }
        ConfigError {
            origin: self.origin.clone(),
            line: locate(&self.source, section, key),
            message,
        }
    }

    /// Checks everything `command` needs before any computation starts.
    pub fn validate(&self, command: Command) -> Result<(), ConfigError> {
        let c = &self.config;
        for (key, v) in [
            ("main_snr_db", Some(c.link.main_snr_db)),
            ("eve_snr_db", Some(c.link.eve_snr_db)),
            ("tx_snr_db", c.link.tx_snr_db),
        ] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return Err(self.error("link", key, format!("link.{key} must be finite")));
                }
            }
        }
        match (c.scheme.kind, &c.scheme.tx_prob) {
            (SchemeKind::Deterministic, Some(_)) => {
                return Err(self.error(
                    "scheme",
                    "tx_prob",
                    "scheme.tx_prob only applies to kind = \"random_tx\"",
                ));
            }
            (SchemeKind::RandomTx, None) => {
                return Err(self.error("scheme", "kind", "kind = \"random_tx\" needs scheme.tx_prob"));
            }
            (SchemeKind::RandomTx, Some(p)) => {
                let p = p.values();
                if p.is_empty() {
                    return Err(self.error("scheme", "tx_prob", "scheme.tx_prob must not be empty"));
                }
                if let Some(bad) = p.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(self.error(
                        "scheme",
                        "tx_prob",
                        format!("transmission probability {bad} outside [0, 1]"),
                    ));
                }
            }
            (SchemeKind::Deterministic, None) => {}
        }
        let g = &c.grid;
        if !(g.step > 0.0) || !g.step.is_finite() {
            return Err(self.error("grid", "step", format!("grid.step must be positive, got {}", g.step)));
        }
        if g.z_min.is_some() != g.z_max.is_some() {
            return Err(self.error(
                "grid",
                if g.z_min.is_some() { "z_min" } else { "z_max" },
                "set both grid.z_min and grid.z_max or neither",
            ));
        }
        if c.mc.trials == 0 {
            return Err(self.error("mc", "trials", "mc.trials must be at least 1"));
        }
        let t = &c.targets;
        match command {
            Command::Outage => {
                if c.scheme.tx_prob.as_ref().is_some_and(|p| p.values().len() != 1) {
                    return Err(self.error("scheme", "tx_prob", "outage takes a single transmission probability"));
                }
                if let Err(e) = GridSpec::new(g.b_min, g.b_max, g.step, g.t_max) {
                    return Err(self.error("grid", "b_max", e.to_string()));
                }
                if t.budgets.is_empty() {
                    return Err(self.error("targets", "budgets", "targets.budgets is empty; nothing to compute"));
                }
                if let Some(b) = t.budgets.iter().find(|b| !(**b >= g.b_min && **b <= g.b_max)) {
                    return Err(self.error(
                        "targets",
                        "budgets",
                        format!("budget {b} outside the grid [{}, {}]", g.b_min, g.b_max),
                    ));
                }
                if let Some(times) = &t.times {
                    if times.is_empty() {
                        return Err(self.error("targets", "times", "targets.times is empty; nothing to compute"));
                    }
                    if let Some(s) = times.iter().find(|s| **s > g.t_max) {
                        return Err(self.error(
                            "targets",
                            "times",
                            format!("slot {s} beyond grid.t_max = {}", g.t_max),
                        ));
                    }
                }
            }
            Command::Budget => {
                if c.scheme.kind != SchemeKind::Deterministic {
                    return Err(self.error("scheme", "kind", "budget requires the deterministic scheme"));
                }
                if t.taus.is_empty() {
                    return Err(self.error("targets", "taus", "targets.taus is empty; nothing to compute"));
                }
                if t.epsilons.is_empty() {
                    return Err(self.error("targets", "epsilons", "targets.epsilons is empty; nothing to compute"));
                }
                if t.taus.contains(&0) {
                    return Err(self.error("targets", "taus", "slots in targets.taus must be at least 1"));
                }
                if let Some(e) = t.epsilons.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
                    return Err(self.error("targets", "epsilons", format!("outage target {e} outside (0, 1)")));
                }
                if let Err(e) = GridSpec::new(g.b_min, g.b_max, g.step, 1) {
                    return Err(self.error("grid", "b_max", e.to_string()));
                }
            }
            Command::Ultimate => {
                if c.scheme.kind != SchemeKind::RandomTx {
                    return Err(self.error("scheme", "kind", "ultimate requires kind = \"random_tx\""));
                }
                if t.budgets.is_empty() {
                    return Err(self.error("targets", "budgets", "targets.budgets is empty; nothing to compute"));
                }
                if let Some(b) = t.budgets.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
                    return Err(self.error(
                        "targets",
                        "budgets",
                        format!("budget {b} must be finite and nonnegative"),
                    ));
                }
                let u = &c.ultimate;
                if !(u.node_spacing > 0.0) || !u.node_spacing.is_finite() {
                    return Err(self.error("ultimate", "node_spacing", "ultimate.node_spacing must be positive"));
                }
                if u.horizon == 0 {
                    return Err(self.error("ultimate", "horizon", "ultimate.horizon must be at least 1"));
                }
            }
            Command::Moments => {}
        }
        Ok(())
    }

    pub fn link(&self) -> Result<LinkPair, CliError> {
        let l = &self.config.link;
        let main = ChannelModel::rayleigh_db(l.main_snr_db)?;
        let eve = ChannelModel::rayleigh_db(l.eve_snr_db)?;
        Ok(match l.tx_snr_db {
            Some(tx) => LinkPair::with_tx(main, eve, ChannelModel::rayleigh_db(tx)?),
            None => LinkPair::new(main, eve),
        })
    }

    /// One scheme per configured transmission probability.
    pub fn schemes(&self) -> Result<Vec<SchemeSpec>, CliError> {
        match (self.config.scheme.kind, &self.config.scheme.tx_prob) {
            (SchemeKind::RandomTx, Some(p)) => Ok(p
                .values()
                .into_iter()
                .map(SchemeSpec::random_tx)
                .collect::<Result<_, _>>()?),
            _ => Ok(vec![SchemeSpec::Deterministic]),
        }
    }

    pub fn net_usage_grid(&self) -> NetUsageGrid {
        let g = &self.config.grid;
        NetUsageGrid {
            step: g.step,
            support: g.z_min.zip(g.z_max),
        }
    }

    pub fn mc_options(&self) -> McOptions {
        McOptions::new(self.config.mc.trials, self.config.mc.seed)
    }
}

/// 1-based line of a byte span.
fn span_line(source: &str, span: Option<std::ops::Range<usize>>) -> Option<usize> {
    span.map(|s| source[..s.start.min(source.len())].matches('\n').count() + 1)
}

/// 1-based line of `key` inside `[section]`, or of the section header.
fn locate(source: &str, section: &str, key: &str) -> Option<usize> {
    let mut in_section = false;
    let mut header = None;
    for (i, line) in source.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('[') {
            in_section = line.trim_matches(|c| c == '[' || c == ']').trim() == section;
            if in_section {
                header = Some(i + 1);
            }
            continue;
        }
        if in_section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// Applies `section.key=value`; the value is read as TOML and falls back to a string.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), String> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| format!("override '{spec}' is not of the form section.key=value"))?;
    let (section, key) = path
        .trim()
        .split_once('.')
        .ok_or_else(|| format!("override key '{}' is not of the form section.key", path.trim()))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    let entry = table
        .entry(section.to_owned())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(section_table) = entry else {
        return Err(format!("'{section}' is not a section"));
    };
    section_table.insert(key.to_owned(), value);
    Ok(())
}
