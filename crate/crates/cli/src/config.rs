//! Run configuration, read from TOML.
//!
//! See the README for the schema. Every section except the one describing the
//! system under study has defaults, and unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use spinpoint::bands::{PeriodicComb, DEFAULT_PROPAGATING_TOL};
use spinpoint::device::{momentum_grid, preset_filter, preset_resonator, Device, Element, FilterParams, Spacing};
use spinpoint::extension::DEFAULT_CURRENT_TOL;
use spinpoint::scattering::{Channel, DEFAULT_SIGMA_X_TOL};
use spinpoint::DefectSpec;

use crate::error::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Scatter,
    Device,
    Bands,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Scatter => "scatter",
            Command::Device => "device",
            Command::Bands => "bands",
        }
    }
}

impl std::fmt::Display for Command {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "layout", rename_all = "snake_case", deny_unknown_fields)]
pub enum DeviceSpec {
    /// Two copies of `defect` a distance `separation` apart.
    Resonator {
        defect: DefectSpec,
        #[serde(default = "default_length")]
        separation: f64,
    },
    Filter {
        #[serde(default = "default_filter_r")]
        r: f64,
        #[serde(default = "default_filter_x1")]
        x1: f64,
        #[serde(default = "default_length")]
        spacing: f64,
    },
    Chain {
        elements: Vec<Element>,
    },
}

fn default_length() -> f64 {
    1.0
}

fn default_filter_r() -> f64 {
    FilterParams::default().r
}

fn default_filter_x1() -> f64 {
    FilterParams::default().x1
}

impl DeviceSpec {
    pub fn build(&self) -> CliResult<Device> {
        let built = match self {
            DeviceSpec::Resonator { defect, separation } => {
                defect.validate().map_err(|e| CliError::domain("device.defect", e))?;
                preset_resonator(defect.clone(), *separation)
            }
            DeviceSpec::Filter { r, x1, spacing } => preset_filter(&FilterParams {
                r: *r,
                x1: *x1,
                spacing: *spacing,
            }),
            DeviceSpec::Chain { elements } => Device::new(elements.clone()),
        };
        built.map_err(|e| match e {
            spinpoint::Error::InvalidElement { index, reason } => {
                let key = match self {
                    DeviceSpec::Chain { .. } => format!("device.elements[{index}]"),
                    DeviceSpec::Resonator { .. } => "device.separation".to_string(),
                    DeviceSpec::Filter { .. } if index % 2 == 1 => "device.spacing".to_string(),
                    DeviceSpec::Filter { .. } if index == 2 => "device.x1".to_string(),
                    DeviceSpec::Filter { .. } => "device.r".to_string(),
                };
                CliError::semantic(key, reason)
            }
            other => CliError::domain("device", other),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CombSpec {
    #[serde(default = "default_length")]
    pub period: f64,
    /// Elements of one unit cell; the remainder of the period is free space.
    pub cell: Vec<Element>,
}

impl CombSpec {
    pub fn build(&self) -> CliResult<PeriodicComb> {
        let cell = Device::new(self.cell.clone()).map_err(|e| match e {
            spinpoint::Error::InvalidElement { index, reason } => {
                CliError::semantic(format!("comb.cell[{index}]"), reason)
            }
            other => CliError::domain("comb.cell", other),
        })?;
        PeriodicComb::new(cell, self.period).map_err(|e| CliError::semantic("comb.period", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    pub k_min: f64,
    pub k_max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Default for Sweep {
    fn default() -> Self {
        Sweep {
            k_min: 0.01,
            k_max: 20.0,
            points: 1000,
            spacing: Spacing::Log,
        }
    }
}

impl Sweep {
    pub fn grid(&self) -> CliResult<Vec<f64>> {
        self.check()?;
        momentum_grid(self.k_min, self.k_max, self.points, self.spacing)
            .map_err(|e| CliError::semantic("sweep", e.to_string()))
    }

    fn check(&self) -> CliResult<()> {
        if !(self.k_min > 0.0 && self.k_min.is_finite()) {
            return Err(CliError::semantic(
                "sweep.k_min",
                format!("must be positive, got {}", self.k_min),
            ));
        }
        if !(self.k_max > self.k_min && self.k_max.is_finite()) {
            return Err(CliError::semantic(
                "sweep.k_max",
                format!("must be finite and exceed k_min = {}, got {}", self.k_min, self.k_max),
            ));
        }
        if self.points < 2 {
            return Err(CliError::semantic(
                "sweep.points",
                format!("need at least 2, got {}", self.points),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Residual allowed in `M†ΣM = Σ` by `check`.
    pub current: f64,
    /// Relative Σx residual allowed for a device transfer matrix.
    pub sigma_x: f64,
    /// `||λ| − 1|` below which a Bloch eigenvalue counts as propagating.
    pub propagating: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            current: DEFAULT_CURRENT_TOL,
            sigma_x: DEFAULT_SIGMA_X_TOL,
            propagating: DEFAULT_PROPAGATING_TOL,
        }
    }
}

impl Tolerances {
    fn check(&self) -> CliResult<()> {
        for (key, value) in [
            ("tolerances.current", self.current),
            ("tolerances.sigma_x", self.sigma_x),
            ("tolerances.propagating", self.propagating),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::semantic(
                    key,
                    format!("must be positive and finite, got {value}"),
                ));
            }
        }
        Ok(())
    }
}

fn default_incident() -> Channel {
    Channel::LeftUp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "default_incident")]
    pub incident: Channel,
    #[serde(default)]
    pub sweep: Sweep,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub defect: Option<DefectSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device: Option<DeviceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comb: Option<CombSpec>,
}

/// What a validated config describes.
#[derive(Debug, Clone)]
pub enum System {
    Defect(DefectSpec),
    Device(Device),
    Comb(PeriodicComb),
}

impl RunConfig {
    /// Checks everything that serde cannot, for the configured command.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::semantic(
                "schema_version",
                format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version),
            ));
        }
        self.tolerances.check()?;
        self.sweep.check()?;
        self.system().map(|_| ())
    }

    /// Builds the system for the configured command.
    pub fn system(&self) -> CliResult<System> {
        let allowed: &[&str] = match self.command {
            Command::Check => &["defect"],
            Command::Scatter => &["defect", "device"],
            Command::Device => &["device"],
            Command::Bands => &["comb"],
        };
        let present = [
            ("defect", self.defect.is_some()),
            ("device", self.device.is_some()),
            ("comb", self.comb.is_some()),
        ];
        let mut given = present.iter().filter(|(_, set)| *set).map(|(key, _)| *key);
        let key = match (given.next(), given.next()) {
            (Some(key), None) => key,
            (None, _) => {
                return Err(CliError::semantic(
                    allowed.join("|"),
                    format!("command `{}` needs one of: {}", self.command, allowed.join(", ")),
                ))
            }
            (Some(a), Some(b)) => {
                return Err(CliError::semantic(
                    b,
                    format!("conflicts with `{a}`; give only one system"),
                ));
            }
        };
        if !allowed.contains(&key) {
            return Err(CliError::semantic(
                key,
                format!(
                    "not used by command `{}` (expected {})",
                    self.command,
                    allowed.join(" or ")
                ),
            ));
        }
        Ok(match key {
            "defect" => {
                let defect = self.defect.clone().expect("present");
                defect.validate().map_err(|e| CliError::domain("defect", e))?;
                match self.command {
                    Command::Check => System::Defect(defect),
                    _ => System::Device(Device::new(vec![defect.into()]).map_err(|e| CliError::domain("defect", e))?),
                }
            }
            "device" => System::Device(self.device.as_ref().expect("present").build()?),
            _ => System::Comb(self.comb.as_ref().expect("present").build()?),
        })
    }
}

/// Parses and validates a TOML config.
pub fn parse_config(text: &str) -> CliResult<RunConfig> {
    let config = parse_config_unchecked(text)?;
    config.validate()?;
    Ok(config)
}

/// Parses a TOML config without the semantic checks of [`RunConfig::validate`].
pub fn parse_config_unchecked(text: &str) -> CliResult<RunConfig> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        CliError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

/// Canonical TOML for a config, with every default written out.
pub fn serialize_config(config: &RunConfig) -> CliResult<String> {
    toml::to_string(config).map_err(|e| CliError::Serialize(e.to_string()))
}

/// 1-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |s| s.chars().count()) + 1;
    (line, column)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
command = "scatter"
defect = { kind = "r_x4", r = 0.5 }
sweep = { k_min = 0.1, k_max = 10, points = 100 }
"#;

    #[test]
    fn minimal_scatter_config_gets_defaults() {
        let config = parse_config(MINIMAL).unwrap();
        assert_eq!(config.command, Command::Scatter);
        assert_eq!(config.defect, Some(DefectSpec::RFlip { r: 0.5 }));
        assert_eq!(config.sweep.k_max, 10.0);
        assert_eq!(config.sweep.points, 100);
        assert_eq!(config.sweep.spacing, Spacing::Log);
        assert_eq!(config.incident, Channel::LeftUp);
        assert_eq!(config.tolerances, Tolerances::default());
        assert_eq!(config.output, None);
    }

    #[test]
    fn serialized_config_parses_back() {
        let config = parse_config(MINIMAL).unwrap();
        let text = serialize_config(&config).unwrap();
        assert_eq!(parse_config(&text).unwrap(), config);
    }

    #[test]
    fn unknown_key_is_reported_with_position() {
        let text = MINIMAL.replace("points = 100", "points = 100, step = 2");
        match parse_config(&text) {
            Err(CliError::Parse { line, message, .. }) => {
                assert_eq!(line, 5);
                assert!(message.contains("step"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_defect_field_is_rejected() {
        let text = MINIMAL.replace("r = 0.5", "r = 0.5, mu = 2.0");
        assert!(matches!(parse_config(&text), Err(CliError::Parse { .. })));
    }

    #[test]
    fn line_column_counts_from_one() {
        assert_eq!(line_column("ab\ncd", 0), (1, 1));
        assert_eq!(line_column("ab\ncd", 4), (2, 2));
    }

    #[test]
    fn negative_mu_is_a_domain_error() {
        let text = MINIMAL
            .replace("scatter", "check")
            .replace(r#"{ kind = "r_x4", r = 0.5 }"#, r#"{ kind = "mass_jump", mu = -1.0 }"#);
        match parse_config(&text) {
            Err(CliError::Domain { key, source }) => {
                assert_eq!(key, "defect");
                assert!(matches!(source, spinpoint::Error::ParameterDomain { name: "mu", .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn system_must_match_command() {
        let text = MINIMAL.replace("scatter", "bands");
        match parse_config(&text) {
            Err(CliError::Semantic { key, .. }) => assert_eq!(key, "defect"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_sweep_names_the_key() {
        let text = MINIMAL.replace("k_min = 0.1", "k_min = 20.0");
        match parse_config(&text) {
            Err(CliError::Semantic { key, .. }) => assert_eq!(key, "sweep.k_max"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_version_is_checked() {
        let text = MINIMAL.replace("schema_version = 1", "schema_version = 2");
        match parse_config(&text) {
            Err(CliError::Semantic { key, .. }) => assert_eq!(key, "schema_version"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn chain_elements_mix_free_segments_and_defects() {
        let text = r#"
schema_version = 1
command = "device"

[device]
layout = "chain"

[[device.elements]]
kind = "r_x4"
r = 0.1

[[device.elements]]
kind = "free"
length = 2.0

[[device.elements]]
kind = "product"
factors = [{ kind = "r_x1", r_tilde = 0.3 }, { kind = "flux", phi = 0.25 }]
"#;
        let config = parse_config(text).unwrap();
        let Some(DeviceSpec::Chain { elements }) = &config.device else {
            panic!("{config:?}")
        };
        assert_eq!(elements[0], Element::Defect(DefectSpec::RFlip { r: 0.1 }));
        assert_eq!(elements[1], Element::free(2.0));
        assert!(matches!(&elements[2], Element::Defect(DefectSpec::Product { factors }) if factors.len() == 2));
        assert_eq!(parse_config(&serialize_config(&config).unwrap()).unwrap(), config);
    }

    #[test]
    fn negative_free_length_names_the_element_index() {
        let text = r#"
schema_version = 1
command = "device"
device = { layout = "chain", elements = [{ kind = "x1", x1 = 1.0 }, { kind = "free", length = -1.0 }] }
"#;
        match parse_config(text) {
            Err(CliError::Semantic { key, .. }) => assert_eq!(key, "device.elements[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn presets_fill_defaults() {
        let text = r#"
schema_version = 1
command = "device"
device = { layout = "resonator", defect = { kind = "r_x4", r = 0.1 } }
"#;
        let config = parse_config(text).unwrap();
        assert_eq!(
            config.device,
            Some(DeviceSpec::Resonator {
                defect: DefectSpec::RFlip { r: 0.1 },
                separation: 1.0
            })
        );
        let filter = parse_config(&text.replace(
            r#"layout = "resonator", defect = { kind = "r_x4", r = 0.1 }"#,
            r#"layout = "filter""#,
        ))
        .unwrap();
        let System::Device(device) = filter.system().unwrap() else {
            panic!()
        };
        assert_eq!(device, preset_filter(&FilterParams::default()).unwrap());
    }
}
