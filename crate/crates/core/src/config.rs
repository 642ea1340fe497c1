//! Run configuration, read from and written as TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{default_ba_thresholds, default_cnt_thresholds, ColumnMap, Schema, Season};
use crate::error::{Error, Result};
use crate::geo::GeoConfig;
use crate::neighborhoods::NeighborhoodSpec;
use crate::rules::{RuleSwitches, DEFAULT_WATER_TARGET};
use crate::scoring::{default_weights, ScoreConfig};
use crate::synth::SyntheticSpec;
use crate::tuning::TuningGrid;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub input: Option<PathBuf>,
    /// Hidden values (`variable,index,value`); enables the score stage.
    pub truth: Option<PathBuf>,
    /// TOML file with `cnt = [...]` and `ba = [...]` score weights.
    pub weights: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    pub cnt: Vec<f64>,
    pub ba: Vec<f64>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            cnt: default_cnt_thresholds(),
            ba: default_ba_thresholds(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Spatial,
    Temporal,
    Cluster,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spatial" => Ok(Variant::Spatial),
            "temporal" => Ok(Variant::Temporal),
            "cluster" => Ok(Variant::Cluster),
            _ => Err(Error::Config(format!(
                "unknown neighbourhood variant {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub k1_cnt: f64,
    pub k1_ba: f64,
    pub k2_ba: f64,
    pub year_half_width: u32,
    pub cluster_covariate: usize,
    pub min_fit: usize,
    pub min_exceed: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::Spatial,
            k1_cnt: 150.0,
            k1_ba: 150.0,
            k2_ba: 0.5,
            year_half_width: 1,
            cluster_covariate: 0,
            min_fit: 10,
            min_exceed: 10,
        }
    }
}

impl ModelConfig {
    pub fn spec(&self, radius_km: f64) -> NeighborhoodSpec {
        match self.variant {
            Variant::Spatial => NeighborhoodSpec::Spatial { radius_km },
            Variant::Temporal => NeighborhoodSpec::Temporal {
                radius_km,
                year_half_width: self.year_half_width,
            },
            Variant::Cluster => NeighborhoodSpec::Cluster {
                radius_km,
                covariate: self.cluster_covariate,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub enabled: bool,
    pub radii: Vec<f64>,
    pub quantiles: Vec<f64>,
}

impl Default for TuningConfig {
    fn default() -> Self {
        let g = TuningGrid::default();
        TuningConfig {
            enabled: true,
            radii: g.radii,
            quantiles: g.quantiles,
        }
    }
}

impl TuningConfig {
    pub fn grid(&self) -> TuningGrid {
        TuningGrid {
            radii: self.radii.clone(),
            quantiles: self.quantiles.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulesConfig {
    pub pair: bool,
    pub water: bool,
    pub saturation: bool,
    /// Fixed water cut; calibrated from the data when absent.
    pub water_cut: Option<f64>,
    pub water_target: f64,
}

impl Default for RulesConfig {
    fn default() -> Self {
        let s = RuleSwitches::default();
        RulesConfig {
            pair: s.pair,
            water: s.water,
            saturation: s.saturation,
            water_cut: None,
            water_target: DEFAULT_WATER_TARGET,
        }
    }
}

impl RulesConfig {
    pub fn switches(&self) -> RuleSwitches {
        RuleSwitches {
            pair: self.pair,
            water: self.water,
            saturation: self.saturation,
        }
    }

    pub fn disable(&mut self) {
        self.pair = false;
        self.water = false;
        self.saturation = false;
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub cnt: Option<Vec<f64>>,
    pub ba: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; all available cores when absent. Does not affect output.
    pub workers: Option<usize>,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: 1,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub columns: ColumnMap,
    pub season: Season,
    pub thresholds: Thresholds,
    pub geo: GeoConfig,
    pub model: ModelConfig,
    pub tuning: TuningConfig,
    pub rules: RulesConfig,
    pub weights: WeightsConfig,
    pub run: RunSection,
    pub synth: SyntheticSpec,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    pub fn schema(&self) -> Schema {
        Schema {
            columns: self.columns.clone(),
            season: self.season,
        }
    }

    /// Weight vectors from the weights file when given, else the inline or default ones.
    pub fn score_config(&self) -> Result<ScoreConfig> {
        let w = match &self.paths.weights {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                toml::from_str::<WeightsConfig>(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => self.weights.clone(),
        };
        ScoreConfig::new(
            w.cnt
                .unwrap_or_else(|| default_weights(self.thresholds.cnt.len())),
            w.ba.unwrap_or_else(|| default_weights(self.thresholds.ba.len())),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.model.k2_ba > 0.0 && self.model.k2_ba < 1.0) {
            return Err(Error::Config(format!(
                "k2_ba {} outside (0, 1)",
                self.model.k2_ba
            )));
        }
        if !(self.model.k1_cnt >= 0.0 && self.model.k1_ba >= 0.0) {
            return Err(Error::Config("radii must be >= 0".into()));
        }
        if self.run.workers == Some(0) {
            return Err(Error::Config("workers must be >= 1".into()));
        }
        if self.tuning.enabled {
            self.tuning.grid().validate()?;
        }
        if let Some(path) = &self.paths.input {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "input {} does not exist",
                    path.display()
                )));
            }
        }
        for path in [&self.paths.truth, &self.paths.weights]
            .into_iter()
            .flatten()
        {
            if !path.exists() {
                return Err(Error::Config(format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}
