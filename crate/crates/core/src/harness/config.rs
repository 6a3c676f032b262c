//! Run configuration, one TOML file per experiment.

use crate::algo2::{Algo2Config, Algo2Fudge};
use crate::error::{Error, Result};
use crate::noise::{MissingModel, NoiseModel};
use crate::spaces::{GroundTruthSpace, SpaceKind};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub master_seed: u64,
    pub space: GroundTruthSpace,
    #[serde(default = "NoiseModel::exact")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub missing: MissingModel,
    pub algorithm: Algorithm,
    /// Storage type of the large Algorithm 1 tables.
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default)]
    pub limits: Limits,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Pipeline selection with its sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Algorithm {
    Algo1Complete {
        n: usize,
        n0: usize,
        #[serde(default)]
        sample: SampleLayout,
    },
    Algo1Missing {
        n: usize,
        n0: usize,
        #[serde(default)]
        sample: SampleLayout,
        #[serde(default)]
        recovery: MissingRecoveryMode,
        /// Radius handed to the pair-graph recovery; defaults to `r₀` of the missing model.
        #[serde(default)]
        r: Option<f64>,
    },
    Algo2 {
        n1: usize,
        n2: usize,
        n3: usize,
        cluster_size: usize,
        #[serde(rename = "C", default = "one")]
        c: f64,
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default = "default_k_cap")]
        k_cap: usize,
        #[serde(default)]
        fudge: Algo2Fudge,
        /// Size of the validation set used for the covering radius of the centers.
        #[serde(default = "default_validation")]
        validation_points: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_theta() -> f64 {
    0.1
}

fn default_k_cap() -> usize {
    10_000
}

fn default_validation() -> usize {
    4096
}

/// Floating-point type of the noisy and Gram tables.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

/// Placement of `X`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleLayout {
    /// I.i.d. draws from the space measure.
    #[default]
    Random,
    /// Equally spaced circle points in bit-reversed order.
    Grid,
}

/// Recovery used by the missing-data pipeline.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingRecoveryMode {
    /// Complete-data recovery when the comparator has no `+∞` entry, pair graph otherwise.
    #[default]
    Auto,
    /// Always the pair graph.
    Graph,
}

/// Source of the cluster threshold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// The constant from the parameter schedule.
    #[default]
    Schedule,
    /// Swept on a pilot sample against exact distances (complete data only).
    Calibrated,
    /// `value` as given.
    Fixed,
}

/// Cluster threshold and its fudge factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    #[serde(default)]
    pub mode: ThresholdMode,
    /// Multiplies the scheduled or calibrated threshold.
    #[serde(default = "one")]
    pub scale: f64,
    #[serde(default)]
    pub value: Option<f64>,
    /// Seed of the calibration pilot; derived from `master_seed` when absent.
    #[serde(default)]
    pub pilot_seed: Option<u64>,
    #[serde(default = "default_block")]
    pub block_rows: usize,
}

fn default_block() -> usize {
    512
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { mode: ThresholdMode::Schedule, scale: 1.0, value: None, pilot_seed: None, block_rows: default_block() }
    }
}

/// Breach fractions above which a run exits with the contract-violation status.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limits {
    #[serde(default = "default_sandwich")]
    pub max_sandwich_fraction: f64,
    #[serde(default = "default_contract")]
    pub max_contract_fraction: f64,
    /// Comparator contract gap as a multiple of `ε`.
    #[serde(default = "default_gap")]
    pub contract_gap: f64,
    /// Outer sandwich radius as a multiple of `ε`.
    #[serde(default = "default_outer")]
    pub sandwich_outer: f64,
}

fn default_sandwich() -> f64 {
    0.05
}

fn default_contract() -> f64 {
    0.01
}

fn default_gap() -> f64 {
    17.0
}

fn default_outer() -> f64 {
    4.0
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_sandwich_fraction: default_sandwich(),
            max_contract_fraction: default_contract(),
            contract_gap: default_gap(),
            sandwich_outer: default_outer(),
        }
    }
}

/// Artifact locations; nothing is written when `dir` is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    /// Also write the comparator table as a binary dump.
    #[serde(default)]
    pub dump_tables: bool,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.epsilon > 0.0 && self.epsilon < 0.5) {
            return bad(format!("epsilon = {} must lie in (0, 1/2)", self.epsilon));
        }
        self.space.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.noise.validate(&self.space).map_err(|e| Error::Config(e.to_string()))?;
        self.missing.validate().map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.threshold;
        if !(t.scale > 0.0 && t.scale.is_finite()) || t.block_rows == 0 {
            return bad("threshold scale must be positive and block_rows non-zero".into());
        }
        if t.mode == ThresholdMode::Fixed && !t.value.is_some_and(|v| v > 0.0 && v.is_finite()) {
            return bad("fixed threshold needs a positive value".into());
        }
        let l = &self.limits;
        if [l.max_sandwich_fraction, l.max_contract_fraction].iter().any(|v| !(0.0..=1.0).contains(v)) {
            return bad("limit fractions must lie in [0, 1]".into());
        }
        if !(l.contract_gap >= 0.0 && l.sandwich_outer > 0.0) {
            return bad("contract_gap must be non-negative and sandwich_outer positive".into());
        }
        match &self.algorithm {
            Algorithm::Algo1Complete { n, n0, sample } | Algorithm::Algo1Missing { n, n0, sample, .. } => {
                if *n0 == 0 || *n == 0 {
                    return bad("sizes N and N0 must be positive".into());
                }
                if n0 > n {
                    return bad(format!("N0 = {n0} exceeds N = {n}"));
                }
                if *n0 == *n {
                    return bad("N0 = N leaves no cluster members outside the net".into());
                }
                if *sample == SampleLayout::Grid && self.space.kind != SpaceKind::Circle {
                    return bad("grid layout is only defined on the circle".into());
                }
                if let Algorithm::Algo1Complete { .. } = self.algorithm {
                    if self.missing != MissingModel::None {
                        return bad("Algo1Complete needs missing = None".into());
                    }
                }
                if let Algorithm::Algo1Missing { r: Some(r), .. } = self.algorithm {
                    if !(r > 0.0) {
                        return bad("missing-data radius must be positive".into());
                    }
                }
                if self.threshold.mode == ThresholdMode::Calibrated
                    && matches!(self.algorithm, Algorithm::Algo1Missing { .. })
                {
                    return bad("calibrated thresholds are available for complete data only".into());
                }
            }
            Algorithm::Algo2 { n1, n2, n3, cluster_size, c, theta, validation_points, .. } => {
                if *n1 < 2 || *n2 == 0 || *n3 == 0 || *cluster_size == 0 || *validation_points == 0 {
                    return bad("Algo2 sizes must be positive with n1 ≥ 2".into());
                }
                if !(*c > 0.0) || !(*theta > 0.0 && *theta < 1.0) {
                    return bad("Algo2 needs C > 0 and θ ∈ (0, 1)".into());
                }
                if self.missing != MissingModel::None {
                    return bad("Algo2 is defined for complete data only".into());
                }
            }
        }
        Ok(())
    }

    /// Total sample size `|X|`.
    pub fn sample_size(&self) -> usize {
        match self.algorithm {
            Algorithm::Algo1Complete { n, .. } | Algorithm::Algo1Missing { n, .. } => n,
            Algorithm::Algo2 { n1, n2, n3, .. } => n1 + n2 + n3,
        }
    }

    /// The Algo2 run parameters, when Algo2 is selected.
    pub fn algo2(&self) -> Option<Algo2Config> {
        match self.algorithm {
            Algorithm::Algo2 { n1, n2, n3, cluster_size, c, theta, k_cap, fudge, .. } => Some(Algo2Config {
                epsilon: self.epsilon,
                c,
                theta,
                n1,
                n2,
                n3,
                cluster_size,
                k_cap,
                fudge,
                master_seed: self.master_seed,
            }),
            _ => None,
        }
    }
}
