//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{build_domain, DiscreteDomain, GeometryError, Point, Shape, ShapeKind};
use crate::lagrangian::{LagrangianModel, ModelError, Potential};
use crate::solver::{SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid domain: {0}")]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Catalog name, or `custom` together with `expression`.
    pub name: String,
    #[serde(default)]
    pub parameters: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<String>,
    #[serde(default)]
    pub potential_parameters: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expression: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    /// `disc`, `annulus`, `ellipse` or `rectangle`.
    pub shape: String,
    pub parameters: Vec<f64>,
    #[serde(default)]
    pub center: Point,
    pub spacing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub tensor: bool,
    pub pfunction: bool,
    pub identities: bool,
    pub hypotheses: bool,
    /// Treat a-posteriori hypothesis failures as errors.
    pub strict: bool,
    /// Reference point for the integral identities; defaults to the centroid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Point>,
    pub hypothesis_samples: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            tensor: true,
            pfunction: true,
            identities: true,
            hypotheses: true,
            strict: false,
            x0: None,
            hypothesis_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub domain: DomainConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(src)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let src = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        toml::from_str(&src).map_err(|source| ConfigError::Parse { path: path.into(), source })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration is always representable")
    }

    pub fn build_model(&self) -> Result<LagrangianModel, ConfigError> {
        let m = &self.model;
        if m.name == "custom" {
            let src = m
                .expression
                .as_deref()
                .ok_or_else(|| ConfigError::Invalid("model 'custom' needs an expression".into()))?;
            if m.potential.is_some() || !m.parameters.is_empty() || !m.potential_parameters.is_empty() {
                return Err(ConfigError::Invalid("model 'custom' takes only an expression".into()));
            }
            return Ok(LagrangianModel::custom(src)?);
        }
        if m.expression.is_some() {
            return Err(ConfigError::Invalid(format!("model '{}' does not take an expression", m.name)));
        }
        let potential = match &m.potential {
            Some(name) => Some(Potential::from_name(name, &m.potential_parameters)?),
            None if m.potential_parameters.is_empty() => None,
            None => return Err(ConfigError::Invalid("potential_parameters given without a potential".into())),
        };
        Ok(LagrangianModel::from_name(&m.name, &m.parameters, potential)?)
    }

    pub fn build_shape(&self) -> Result<Shape, ConfigError> {
        let d = &self.domain;
        let want = |n: usize| {
            if d.parameters.len() == n {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!(
                    "shape '{}' takes {n} parameters, got {}",
                    d.shape,
                    d.parameters.len()
                )))
            }
        };
        let p = &d.parameters;
        let kind = match d.shape.as_str() {
            "disc" => {
                want(1)?;
                ShapeKind::Disc { radius: p[0] }
            }
            "annulus" => {
                want(2)?;
                ShapeKind::Annulus { inner: p[0], outer: p[1] }
            }
            "ellipse" => {
                want(2)?;
                ShapeKind::Ellipse { semi_x: p[0], semi_y: p[1] }
            }
            "rectangle" => {
                want(2)?;
                ShapeKind::Rectangle { width: p[0], height: p[1] }
            }
            other => return Err(ConfigError::Invalid(format!("unknown shape '{other}'"))),
        };
        Ok(Shape::new(kind, d.center)?)
    }

    pub fn build_domain(&self) -> Result<DiscreteDomain, ConfigError> {
        Ok(build_domain(self.build_shape()?, self.domain.spacing)?)
    }

    pub fn x0(&self, shape: &Shape) -> Point {
        self.analysis.x0.unwrap_or_else(|| shape.centroid())
    }

    /// Every check that can be made without building the grid.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.build_model()?;
        let shape = self.build_shape()?;
        let h = self.domain.spacing;
        if !(h.is_finite() && h > 0.0) {
            return Err(GeometryError::InvalidSpacing(h).into());
        }
        let (ex, ey) = shape.half_extent();
        if h > ex.min(ey) {
            return Err(ConfigError::Invalid(format!("spacing {h} is coarser than the domain")));
        }
        self.solver.validate()?;
        if let Some(x0) = self.analysis.x0 {
            if !x0.iter().all(|v| v.is_finite()) {
                return Err(ConfigError::Invalid("x0 must be finite".into()));
            }
        }
        if self.analysis.hypothesis_samples == 0 {
            return Err(ConfigError::Invalid("hypothesis_samples must be positive".into()));
        }
        Ok(())
    }
}
