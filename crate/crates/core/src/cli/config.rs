//! Run configuration: one JSON document with optional `theta`, `genus0`,
//! `genus1`, `tau` and `hydro` blocks.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contours::symbolic::{ContourSpec, NamedContour};
use crate::error::{Error, Result};
use crate::genus0::Genus0Config;
use crate::genus1::Genus1Config;
use crate::numerics::ToleranceConfig;
use crate::tauflow::TauConfig;
use crate::theta::LatticeParam;

pub const SCHEMA_VERSION: u32 = 1;

type C = Complex64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaBlock {
    pub tau: Vec<LatticeParam>,
    #[serde(default = "default_theta_samples")]
    pub samples: usize,
}

fn default_theta_samples() -> usize {
    100
}

impl Default for ThetaBlock {
    fn default() -> Self {
        Self {
            tau: vec![
                LatticeParam::new(C::new(0.0, 1.0)).expect("valid"),
                LatticeParam::new(C::new(0.3, 1.2)).expect("valid"),
            ],
            samples: default_theta_samples(),
        }
    }
}

/// Contour triples for extraction, per genus. Missing triples default to the
/// first three contours of the block that do not move with `z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroBlock {
    #[serde(default)]
    pub genus0_triple: Option<[String; 3]>,
    #[serde(default)]
    pub genus1_triple: Option<[String; 3]>,
    /// Factor applied to the first coefficient of each extracted system
    /// before its consistency test; anything but 1 must make that test fail.
    #[serde(default = "one")]
    pub coefficient_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for HydroBlock {
    fn default() -> Self {
        Self {
            genus0_triple: None,
            genus1_triple: None,
            coefficient_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub theta: Option<ThetaBlock>,
    #[serde(default)]
    pub genus0: Option<Genus0Config>,
    #[serde(default)]
    pub genus1: Option<Genus1Config>,
    #[serde(default)]
    pub tau: Option<TauConfig>,
    #[serde(default)]
    pub hydro: Option<HydroBlock>,
}

fn named(name: &str, from: &str, to: &str) -> NamedContour {
    NamedContour {
        name: name.into(),
        spec: ContourSpec::segment(from, to).expect("valid descriptor"),
    }
}

fn small_circle() -> NamedContour {
    NamedContour {
        name: "small".into(),
        spec: ContourSpec::circle("z", 0.01).expect("valid descriptor"),
    }
}

impl ConfigFile {
    /// A complete configuration used when no file is given.
    pub fn builtin() -> Self {
        let c = C::new;
        Self {
            schema_version: SCHEMA_VERSION,
            theta: Some(ThetaBlock::default()),
            genus0: Some(Genus0Config {
                u: vec![c(0.3, 0.8), c(0.7, -0.6)],
                s: vec![0.21, -0.13, 0.17, 0.05],
                contours: vec![
                    named("u1_0", "u1", "0"),
                    named("u2_0", "u2", "0"),
                    named("0_1", "0", "1"),
                    named("u1_1", "u1", "1"),
                    small_circle(),
                ],
                tolerances: ToleranceConfig::default(),
            }),
            genus1: Some(Genus1Config {
                u: vec![c(0.35, 0.3)],
                s: vec![0.3, -0.3],
                a: c(0.13, 0.05),
                b: c(0.2, -0.1),
                tau: LatticeParam::new(c(0.1, 1.05)).expect("valid"),
                contours: vec![
                    named("u1_0", "u1", "0"),
                    named("u1_u1+1", "u1", "u1+1"),
                    named("u1_u1+tau", "u1", "u1+tau"),
                    named("0_1", "0", "1"),
                    small_circle(),
                ],
                tolerances: ToleranceConfig::default(),
            }),
            tau: Some(TauConfig {
                u: vec![c(0.1, 0.2), c(0.6, -0.1), c(0.35, 0.5)],
                s: vec![0.3, 0.45, 0.25],
                a: vec![c(0.2, 0.1), c(-0.15, 0.05), c(0.0, 0.0), c(0.0, 0.0)],
                b: vec![c(0.3, -0.2), c(0.1, 0.1), c(0.0, 0.0), c(0.0, 0.0)],
                partition: vec![2, 1],
                times: 4,
                contours: vec![named("u1_u2", "u1", "u2"), named("u2_u3", "u2", "u3"), small_circle()],
                tolerances: ToleranceConfig::default(),
            }),
            hydro: Some(HydroBlock::default()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Configuration(format!("config line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Configuration(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if let Some(t) = &self.theta {
            if t.tau.is_empty() || t.samples == 0 {
                return Err(Error::Configuration("theta: need at least one tau and one sample".into()));
            }
        }
        if let Some(g) = &self.genus0 {
            g.validate()?;
        }
        if let Some(g) = &self.genus1 {
            g.validate()?;
        }
        if let Some(t) = &self.tau {
            t.validate()?;
        }
        if let Some(h) = &self.hydro {
            if !h.coefficient_scale.is_finite() {
                return Err(Error::Configuration("hydro: coefficient_scale must be finite".into()));
            }
            for (triple, names) in [
                (&h.genus0_triple, self.genus0.as_ref().map(|g| g.contour_names())),
                (&h.genus1_triple, self.genus1.as_ref().map(|g| g.contour_names())),
            ] {
                if let Some(t) = triple {
                    let names = names.ok_or_else(|| {
                        Error::Configuration("hydro: a triple is given for a genus without a config block".into())
                    })?;
                    if let Some(missing) = t.iter().find(|x| !names.contains(x)) {
                        return Err(Error::Configuration(format!("hydro: unknown contour {missing:?} in triple")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies `NAME=VALUE` overrides to every block's tolerances.
    pub fn apply_tolerance(&mut self, name: &str, value: f64) -> Result<()> {
        let mut targets: Vec<&mut ToleranceConfig> = Vec::new();
        if let Some(g) = self.genus0.as_mut() {
            targets.push(&mut g.tolerances);
        }
        if let Some(g) = self.genus1.as_mut() {
            targets.push(&mut g.tolerances);
        }
        if let Some(t) = self.tau.as_mut() {
            targets.push(&mut t.tolerances);
        }
        let mut probe = ToleranceConfig::default();
        probe.set(name, value)?;
        for t in targets {
            t.set(name, value)?;
            t.validate().map_err(|e| Error::Configuration(e.to_string()))?;
        }
        Ok(())
    }
}

/// Parses `NAME=VALUE`.
pub fn parse_override(text: &str) -> Result<(String, f64)> {
    let (name, value) = text
        .split_once('=')
        .ok_or_else(|| Error::Configuration(format!("tolerance override {text:?} must look like NAME=VALUE")))?;
    let v: f64 = value
        .trim()
        .parse()
        .map_err(|_| Error::Configuration(format!("tolerance override {text:?}: {value:?} is not a number")))?;
    Ok((name.trim().to_string(), v))
}
