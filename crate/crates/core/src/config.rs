//! Run configuration: TOML group descriptions, engine parameters and the
//! built-in presets.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fuchsian::{build_group, Arc, GeneratorKind, GeneratorSpec, GroupDescription, GroupError, GroupPresentation};
use crate::gdms::{PressureMode, RootOptions};
use crate::mobius::BoundaryPoint;

pub const PRESETS: [&str; 2] = ["gamma2-type", "one-cusp-one-hyperbolic"];
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error{}: {message}", location.map(|(l, c)| format!(" at line {l}, column {c}")).unwrap_or_default())]
    Parse {
        message: String,
        location: Option<(usize, usize)>,
    },
    #[error("{path}: {message}")]
    Field { path: String, message: String },
    #[error("{path}: {source}")]
    Group { path: String, source: GroupError },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// An interval endpoint as written in a config file: a number or `"inf"`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Endpoint {
    Number(f64),
    Text(String),
}

impl Endpoint {
    fn to_point(&self, path: &str) -> Result<BoundaryPoint, ConfigError> {
        match self {
            Endpoint::Number(x) if x.is_finite() => Ok(BoundaryPoint::Finite(*x)),
            Endpoint::Text(s) if matches!(s.as_str(), "inf" | "infinity" | "∞") => Ok(BoundaryPoint::Infinity),
            _ => Err(ConfigError::Field {
                path: path.to_string(),
                message: "expected a finite number or \"inf\"".into(),
            }),
        }
    }

    fn from_point(p: BoundaryPoint) -> Self {
        match p {
            BoundaryPoint::Finite(x) => Endpoint::Number(x),
            BoundaryPoint::Infinity => Endpoint::Text("inf".into()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorEntry {
    pub label: String,
    pub kind: GeneratorKind,
    pub matrix: Vec<f64>,
    pub interval: [Endpoint; 2],
    pub inverse_interval: [Endpoint; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Parabolic exponent cap of the truncated alphabet.
    pub cap: usize,
    /// Caps used by convergence ladders.
    pub cap_ladder: Vec<usize>,
    pub beta_min: f64,
    pub beta_max: f64,
    pub beta_steps: usize,
    /// Chebyshev nodes per pair interval in the transfer operator.
    pub nodes: usize,
    /// Convergence tolerance of the dominant eigenvalue.
    pub pressure_tol: f64,
    /// Largest accepted `|P|` at a free-energy root.
    pub root_tol: f64,
    /// Iteration budget of the root solver.
    pub root_steps: usize,
    /// Add the analytic remainder of the parabolic families beyond the cap.
    pub tail: bool,
}

impl EngineConfig {
    pub fn root_options(&self) -> RootOptions {
        RootOptions {
            residual: self.root_tol,
            power_tol: self.pressure_tol,
            max_steps: self.root_steps,
        }
    }

    pub fn mode(&self) -> PressureMode {
        if self.tail {
            PressureMode::Tail
        } else {
            PressureMode::Truncated
        }
    }
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            cap: 400,
            cap_ladder: vec![25, 50, 100, 200, 400],
            beta_min: -20.0,
            beta_max: 20.0,
            beta_steps: 81,
            nodes: 16,
            pressure_tol: 1e-13,
            root_tol: 1e-11,
            root_steps: 200,
            tail: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(rename = "generator")]
    pub generators: Vec<GeneratorEntry>,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl RunConfig {
    pub fn from_description(name: &str, desc: &GroupDescription) -> Self {
        RunConfig {
            name: Some(name.to_string()),
            seed: DEFAULT_SEED,
            engine: EngineConfig::default(),
            output: OutputConfig::default(),
            generators: desc
                .generators
                .iter()
                .map(|g| GeneratorEntry {
                    label: g.label.clone(),
                    kind: g.kind,
                    matrix: g.matrix.to_vec(),
                    interval: [Endpoint::from_point(g.interval.start), Endpoint::from_point(g.interval.end)],
                    inverse_interval: [
                        Endpoint::from_point(g.inverse_interval.start),
                        Endpoint::from_point(g.inverse_interval.end),
                    ],
                })
                .collect(),
        }
    }

    pub fn description(&self) -> Result<GroupDescription, ConfigError> {
        let mut generators = Vec::new();
        for (i, g) in self.generators.iter().enumerate() {
            let path = format!("generator[{i}]");
            let matrix: [f64; 4] = g.matrix.as_slice().try_into().map_err(|_| ConfigError::Field {
                path: format!("{path}.matrix"),
                message: format!("expected 4 entries, found {}", g.matrix.len()),
            })?;
            if matrix.iter().any(|x| !x.is_finite()) {
                return Err(ConfigError::Field {
                    path: format!("{path}.matrix"),
                    message: "entries must be finite".into(),
                });
            }
            let interval = Arc::new(
                g.interval[0].to_point(&format!("{path}.interval[0]"))?,
                g.interval[1].to_point(&format!("{path}.interval[1]"))?,
            );
            let inverse_interval = Arc::new(
                g.inverse_interval[0].to_point(&format!("{path}.inverse_interval[0]"))?,
                g.inverse_interval[1].to_point(&format!("{path}.inverse_interval[1]"))?,
            );
            generators.push(GeneratorSpec {
                label: g.label.clone(),
                kind: g.kind,
                matrix,
                interval,
                inverse_interval,
            });
        }
        Ok(GroupDescription { generators })
    }

    fn check_engine(&self) -> Result<(), ConfigError> {
        let e = &self.engine;
        let field = |name: &str, message: &str| ConfigError::Field {
            path: format!("engine.{name}"),
            message: message.to_string(),
        };
        if e.cap == 0 {
            return Err(field("cap", "must be at least 1"));
        }
        if e.cap_ladder.contains(&0) {
            return Err(field("cap_ladder", "caps must be at least 1"));
        }
        if e.nodes == 0 {
            return Err(field("nodes", "must be at least 1"));
        }
        if !(e.pressure_tol > 0.0) {
            return Err(field("pressure_tol", "must be positive"));
        }
        if !(e.root_tol > 0.0) {
            return Err(field("root_tol", "must be positive"));
        }
        if e.root_steps == 0 {
            return Err(field("root_steps", "must be positive"));
        }
        if !(e.beta_min.is_finite() && e.beta_max.is_finite()) || e.beta_min >= e.beta_max {
            return Err(field("beta_min", "need finite beta_min < beta_max"));
        }
        if e.beta_steps < 3 {
            return Err(field("beta_steps", "need at least 3 grid points"));
        }
        Ok(())
    }

    /// Build and validate the group; errors carry the offending field path.
    pub fn build(&self) -> Result<GroupPresentation, ConfigError> {
        self.check_engine()?;
        let desc = self.description()?;
        build_group(&desc).map_err(|e| {
            let path = match &e {
                GroupError::NotUnitDeterminant { label, .. } | GroupError::KindMismatch { label, .. } => self
                    .generators
                    .iter()
                    .position(|g| &g.label == label)
                    .map(|i| format!("generator[{i}].matrix"))
                    .unwrap_or_else(|| "generator".into()),
                _ => "generator".into(),
            };
            ConfigError::Group { path, source: e }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| {
        let location = e.span().map(|span| {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
            (line, col)
        });
        ConfigError::Parse {
            message: e.message().to_string(),
            location,
        }
    })?;
    cfg.build()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_config(&text)
}

pub fn preset_config(name: &str) -> Result<RunConfig, ConfigError> {
    let desc = preset(name).ok_or_else(|| ConfigError::UnknownPreset(name.to_string()))?;
    Ok(RunConfig::from_description(name, &desc))
}

fn arc(a: BoundaryPoint, b: BoundaryPoint) -> Arc {
    Arc::new(a, b)
}

/// Built-in group descriptions.
pub fn preset(name: &str) -> Option<GroupDescription> {
    use BoundaryPoint::{Finite as F, Infinity as Inf};
    let translation = GeneratorSpec {
        label: "A".into(),
        kind: GeneratorKind::Parabolic,
        matrix: [1.0, 2.0, 0.0, 1.0],
        interval: arc(F(1.0), Inf),
        inverse_interval: arc(Inf, F(-1.0)),
    };
    match name {
        // principal congruence subgroup of level two: cusps at ∞, 0 and ±1
        "gamma2-type" => Some(GroupDescription {
            generators: vec![
                translation,
                GeneratorSpec {
                    label: "B".into(),
                    kind: GeneratorKind::Parabolic,
                    matrix: [1.0, 0.0, 2.0, 1.0],
                    interval: arc(F(0.0), F(1.0)),
                    inverse_interval: arc(F(-1.0), F(0.0)),
                },
            ],
        }),
        // one cusp at ∞ and a hyperbolic handle, with funnel gaps between
        "one-cusp-one-hyperbolic" => Some(GroupDescription {
            generators: vec![
                translation,
                GeneratorSpec {
                    label: "H".into(),
                    kind: GeneratorKind::Hyperbolic,
                    matrix: [1.25, 0.225, 2.5, 1.25],
                    interval: arc(F(0.1), F(0.9)),
                    inverse_interval: arc(F(-0.9), F(-0.1)),
                },
            ],
        }),
        _ => None,
    }
}
