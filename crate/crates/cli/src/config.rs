//! Run configuration, read from TOML.

use std::path::Path;

use cfhf_core::fitting::lm::LmOptions;
use cfhf_core::fitting::{RefractiveModel, CF_AJ_NAMES, DEFAULT_FIXED};
use cfhf_core::spectra::{IntensityModel, IsotopeConfig, LineShape, PeakShape};
use cfhf_core::{CfParameters, HalfInt, HyperfineConstants, SpinSystem};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub spin: SpinConfig,
    pub crystal_field: CfParameters,
    #[serde(default = "HyperfineConstants::holmium")]
    pub hyperfine: HyperfineConstants,
    /// K
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub isotope: IsotopeConfig,
    #[serde(default)]
    pub fit: FitConfig,
}

fn default_temperature() -> f64 {
    3.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinConfig {
    pub j: HalfInt,
    pub i: HalfInt,
    pub g_j: f64,
}

impl Default for SpinConfig {
    fn default() -> Self {
        SpinConfig {
            j: HalfInt::from_int(8),
            i: HalfInt::from_twice(7),
            g_j: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    /// cm⁻¹
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub shape: PeakShape,
    pub fwhm: f64,
    pub intensity: IntensityModel,
    /// e.g. `["8.1-8.2"]`
    pub transitions: Vec<String>,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            start: 6.0,
            stop: 7.6,
            points: 1601,
            shape: PeakShape::Gaussian,
            fwhm: 0.017,
            intensity: IntensityModel::Unit,
            transitions: vec!["8.1-8.2".into()],
        }
    }
}

impl SpectrumConfig {
    pub fn line_shape(&self) -> LineShape {
        LineShape {
            shape: self.shape,
            fwhm: self.fwhm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub options: LmOptions,
    /// Parameters held at their config value in `cf-aj` mode.
    pub fixed: Vec<String>,
    pub initial_b: f64,
    pub refractive: RefractiveModel,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            options: LmOptions::default(),
            fixed: CF_AJ_NAMES
                .iter()
                .zip(DEFAULT_FIXED)
                .filter(|(_, f)| *f)
                .map(|(n, _)| n.to_string())
                .collect(),
            initial_b: 0.0,
            refractive: RefractiveModel::new(-10.0, 120.0, 2.5),
        }
    }
}

impl FitConfig {
    pub fn fixed_mask(&self) -> std::result::Result<[bool; 8], String> {
        let mut mask = [false; 8];
        for name in &self.fixed {
            let k = CF_AJ_NAMES
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| format!("fit.fixed: unknown parameter {name:?}"))?;
            mask[k] = true;
        }
        Ok(mask)
    }
}

impl RunConfig {
    pub fn reference() -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            spin: SpinConfig::default(),
            crystal_field: CfParameters::lihof4(),
            hyperfine: HyperfineConstants::holmium(),
            temperature: default_temperature(),
            spectrum: SpectrumConfig::default(),
            isotope: IsotopeConfig::default(),
            fit: FitConfig::default(),
        }
    }

    pub fn system(&self) -> Result<SpinSystem> {
        Ok(SpinSystem::new(self.spin.j, self.spin.i)?)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let err = |message: String| CliError::Config {
            path: path.to_path_buf(),
            message,
        };
        let cfg: RunConfig = toml::from_str(text).map_err(|e| err(e.to_string().trim_end().to_string()))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        cfg.validate().map_err(err)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        RunConfig::parse(&text, path)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        SpinSystem::new(self.spin.j, self.spin.i).map_err(|e| format!("spin: {e}"))?;
        self.crystal_field
            .validate()
            .map_err(|e| format!("crystal_field: {e}"))?;
        self.hyperfine.validate().map_err(|e| format!("hyperfine: {e}"))?;
        self.isotope.validate().map_err(|e| format!("isotope: {e}"))?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature: must be positive, got {}", self.temperature));
        }
        if !(self.spin.g_j.is_finite()) {
            return Err("spin.g_j: must be finite".into());
        }
        let s = &self.spectrum;
        if !(s.stop > s.start) || s.points < 2 {
            return Err(format!(
                "spectrum: need stop > start and points ≥ 2, got [{}, {}] with {}",
                s.start, s.stop, s.points
            ));
        }
        if !(s.fwhm > 0.0 && s.fwhm.is_finite()) {
            return Err(format!("spectrum.fwhm: must be positive, got {}", s.fwhm));
        }
        for t in &s.transitions {
            parse_transition(t).map_err(|e| format!("spectrum.transitions: {e}"))?;
        }
        self.fit.fixed_mask()?;
        Ok(())
    }
}

/// `8.3` → `3`
pub fn parse_level(text: &str) -> std::result::Result<usize, String> {
    text.trim()
        .strip_prefix("8.")
        .and_then(|n| n.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| format!("level {text:?} is not of the form 8.n"))
}

/// `8.1-8.2` → `(1, 2)`
pub fn parse_transition(text: &str) -> std::result::Result<(usize, usize), String> {
    let bad = || format!("transition {text:?} is not of the form 8.i-8.f");
    let (a, b) = text.split_once('-').ok_or_else(bad)?;
    match (parse_level(a), parse_level(b)) {
        (Ok(i), Ok(f)) if i != f => Ok((i, f)),
        _ => Err(bad()),
    }
}
