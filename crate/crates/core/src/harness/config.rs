//! Experiment configuration: TOML in, effective TOML out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env_suite::{env_spec, ActionKind, Quality};
use crate::error::{Error, Result};
use crate::federation::{Algorithm, DeviceConfig, FederationConfig, LocalTrainConfig, ServerConfig};
use crate::offline_core::LocalLossConfig;
use crate::rectifier::RectifierConfig;
use crate::verify::TabularForlerConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_env")]
    pub env_id: String,
    /// T.
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    /// Used when the command line gives no seeds.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub local: LocalTrainConfig,
    #[serde(default)]
    pub loss: LocalLossConfig,
    #[serde(default)]
    pub rectifier: RectifierConfig,
    #[serde(default)]
    pub server: ServerConfig,
    #[serde(default)]
    pub ablation: AblationConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

fn default_algorithm() -> Algorithm {
    Algorithm::Forler
}
fn default_env() -> String {
    "pointmass-2d".into()
}
fn default_rounds() -> u64 {
    30
}
fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}
fn default_eval_episodes() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            env_id: default_env(),
            rounds: default_rounds(),
            hidden: default_hidden(),
            eval_episodes: default_eval_episodes(),
            seeds: default_seeds(),
            data: DataConfig::default(),
            local: LocalTrainConfig::default(),
            loss: LocalLossConfig::default(),
            rectifier: RectifierConfig::default(),
            server: ServerConfig::default(),
            ablation: AblationConfig::default(),
            verify: VerifyConfig::default(),
        }
    }
}

/// Device and server dataset layout.
///
/// Dataset seeds derive from the run seed: device `k` of run seed `s` uses
/// `1000 s + k + 1`, the server uses `1000 s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// K.
    #[serde(default = "default_devices")]
    pub n_devices: usize,
    #[serde(default = "default_quality")]
    pub device_quality: Quality,
    #[serde(default = "default_size")]
    pub device_size: usize,
    /// Per-device override of `device_quality`; empty or exactly K entries.
    #[serde(default)]
    pub qualities: Vec<Quality>,
    #[serde(default = "default_quality")]
    pub server_quality: Quality,
    #[serde(default = "default_size")]
    pub server_size: usize,
    /// Directory of pre-generated `.ford` files. Datasets are generated in
    /// memory when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_devices() -> usize {
    4
}
fn default_quality() -> Quality {
    Quality::Medium
}
fn default_size() -> usize {
    20_000
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_devices: default_devices(),
            device_quality: default_quality(),
            device_size: default_size(),
            qualities: Vec::new(),
            server_quality: default_quality(),
            server_size: default_size(),
            dir: None,
        }
    }
}

/// One dataset to materialize.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetSpec {
    pub quality: Quality,
    pub size: usize,
    pub seed: u64,
}

impl DataConfig {
    pub fn device_specs(&self, run_seed: u64) -> Vec<DatasetSpec> {
        (0..self.n_devices)
            .map(|k| DatasetSpec {
                quality: self.qualities.get(k).copied().unwrap_or(self.device_quality),
                size: self.device_size,
                seed: run_seed.wrapping_mul(1000).wrapping_add(k as u64 + 1),
            })
            .collect()
    }

    pub fn server_spec(&self, run_seed: u64) -> DatasetSpec {
        DatasetSpec {
            quality: self.server_quality,
            size: self.server_size,
            seed: run_seed.wrapping_mul(1000),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    DeltaSweep,
    RectificationOnoff,
    Pollution,
    AlphaGrid,
    DeviceCount,
}

impl Study {
    pub const ALL: [Study; 5] = [
        Study::DeltaSweep,
        Study::RectificationOnoff,
        Study::Pollution,
        Study::AlphaGrid,
        Study::DeviceCount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Study::DeltaSweep => "delta_sweep",
            Study::RectificationOnoff => "rectification_onoff",
            Study::Pollution => "pollution",
            Study::AlphaGrid => "alpha_grid",
            Study::DeviceCount => "device_count",
        }
    }
}

impl std::str::FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Study::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown study '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<Study>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<u64>,
    #[serde(default = "default_alpha_1_grid")]
    pub alpha_1_grid: Vec<f64>,
    #[serde(default = "default_alpha_2_grid")]
    pub alpha_2_grid: Vec<f64>,
    #[serde(default = "default_device_counts")]
    pub device_counts: Vec<usize>,
    #[serde(default = "default_high_quality")]
    pub pollution_high_quality: Quality,
    #[serde(default = "default_high")]
    pub pollution_high: usize,
    #[serde(default = "default_low")]
    pub pollution_low: usize,
}

fn default_deltas() -> Vec<u64> {
    vec![1, 2, 5, 10, 20]
}
fn default_alpha_1_grid() -> Vec<f64> {
    vec![0.1, 1.0, 10.0]
}
fn default_alpha_2_grid() -> Vec<f64> {
    vec![0.01, 0.1, 1.0]
}
fn default_device_counts() -> Vec<usize> {
    vec![2, 4, 6]
}
fn default_high_quality() -> Quality {
    Quality::Expert
}
fn default_high() -> usize {
    4
}
fn default_low() -> usize {
    2
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            study: None,
            deltas: default_deltas(),
            alpha_1_grid: default_alpha_1_grid(),
            alpha_2_grid: default_alpha_2_grid(),
            device_counts: default_device_counts(),
            pollution_high_quality: default_high_quality(),
            pollution_high: default_high(),
            pollution_low: default_low(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_verify_env")]
    pub env_id: String,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    #[serde(default = "default_quality")]
    pub dataset_quality: Quality,
    #[serde(default = "default_verify_size")]
    pub dataset_size: usize,
    /// η used for the degenerate-coefficient cell.
    #[serde(default = "default_tiny_eta")]
    pub degenerate_eta: f64,
    #[serde(default)]
    pub tabular: TabularForlerConfig,
}

fn default_verify_env() -> String {
    "chain-3".into()
}
fn default_alphas() -> Vec<f64> {
    vec![0.1, 1.0]
}
fn default_etas() -> Vec<f64> {
    vec![0.1, 0.5]
}
fn default_verify_size() -> usize {
    2000
}
fn default_tiny_eta() -> f64 {
    1e-9
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            env_id: default_verify_env(),
            alphas: default_alphas(),
            etas: default_etas(),
            dataset_quality: default_quality(),
            dataset_size: default_verify_size(),
            degenerate_eta: default_tiny_eta(),
            tabular: TabularForlerConfig::default(),
        }
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Every field spelled out, defaults included.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format {
            what: "config",
            reason: e.to_string(),
        })
    }

    /// Checks everything a run would check, reporting failures as config errors.
    pub fn validate(&self) -> Result<()> {
        let spec = env_spec(&self.env_id).map_err(config_err)?;
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be non-empty and positive".into()));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be at least 1".into()));
        }
        if self.data.n_devices == 0 {
            return Err(Error::Config("n_devices must be at least 1".into()));
        }
        if !self.data.qualities.is_empty() && self.data.qualities.len() != self.data.n_devices {
            return Err(Error::Config(format!(
                "qualities lists {} entries for {} devices",
                self.data.qualities.len(),
                self.data.n_devices
            )));
        }
        if self.data.device_size == 0 || self.data.server_size == 0 {
            return Err(Error::Config("dataset sizes must be positive".into()));
        }
        if self.algorithm == Algorithm::FedTd3bc && spec.action_kind == ActionKind::Discrete {
            return Err(Error::Config("fed_td3bc needs a continuous-action environment".into()));
        }
        self.local.validate().map_err(config_err)?;
        self.loss.validate().map_err(config_err)?;
        self.rectifier.validate().map_err(config_err)?;
        self.server.validate().map_err(config_err)?;
        let a = &self.ablation;
        if a.deltas.contains(&0) {
            return Err(Error::Config("ablation deltas must be at least 1".into()));
        }
        if a.device_counts.contains(&0) {
            return Err(Error::Config("ablation device counts must be at least 1".into()));
        }
        if a.pollution_high + a.pollution_low == 0 {
            return Err(Error::Config("pollution study needs at least one device".into()));
        }
        if a.alpha_1_grid.iter().chain(&a.alpha_2_grid).any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("alpha grids must be finite and non-negative".into()));
        }
        let v = &self.verify;
        let vspec = env_spec(&v.env_id).map_err(config_err)?;
        if vspec.action_kind != ActionKind::Discrete {
            return Err(Error::Config(format!("verify needs a tabular environment, got {}", v.env_id)));
        }
        if v.alphas.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("verify alphas must be finite and non-negative".into()));
        }
        if v.etas.iter().chain([&v.degenerate_eta]).any(|x| !(*x > 0.0 && *x < 1.0)) {
            return Err(Error::Config("verify etas must lie in (0, 1)".into()));
        }
        if v.dataset_size == 0 {
            return Err(Error::Config("verify dataset_size must be positive".into()));
        }
        Ok(())
    }

    pub fn federation_config(&self, seed: u64) -> FederationConfig {
        FederationConfig {
            env_id: self.env_id.clone(),
            rounds: self.rounds,
            device: DeviceConfig {
                loss: self.loss.clone(),
                rectifier: self.rectifier.clone(),
                train: self.local.clone(),
            },
            server: self.server.clone(),
            hidden: self.hidden.clone(),
            eval_episodes: self.eval_episodes,
            seed,
        }
    }
}

/// Parses a comma-separated seed list such as `0,1,2`.
pub fn parse_seeds(list: &str) -> Result<Vec<u64>> {
    let seeds = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().map_err(|_| Error::Config(format!("bad seed '{s}'"))))
        .collect::<Result<Vec<_>>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.local.local_steps, 200);
        assert_eq!(cfg.data.device_size, 20_000);
    }

    #[test]
    fn effective_config_round_trip_is_idempotent() {
        let text = "rounds = 3\n[data]\nn_devices = 2\nqualities = [\"expert\", \"random\"]\n[ablation]\nstudy = \"pollution\"\n";
        let first = ExperimentConfig::from_toml(text).unwrap().to_toml().unwrap();
        let again = ExperimentConfig::from_toml(&first).unwrap();
        assert_eq!(again.to_toml().unwrap(), first);
        assert_eq!(again.data.qualities, vec![Quality::Expert, Quality::Random]);
        assert_eq!(again.ablation.study, Some(Study::Pollution));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["colour = 1\n", "[rectifier]\nsigma = 1\n", "[data]\nsizes = 3\n"] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "env_id = \"cartpole\"\n",
            "[rectifier]\ndelta = 0\n",
            "[data]\nn_devices = 2\nqualities = [\"expert\"]\n",
            "algorithm = \"fed_td3bc\"\nenv_id = \"chain-3\"\n",
            "[verify]\nenv_id = \"pointmass-2d\"\n",
            "[verify]\netas = [1.0]\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn dataset_seeds_are_distinct_per_device() {
        let data = DataConfig {
            n_devices: 3,
            qualities: vec![Quality::Expert, Quality::Expert, Quality::Random],
            ..Default::default()
        };
        let specs = data.device_specs(2);
        assert_eq!(specs.iter().map(|s| s.seed).collect::<Vec<_>>(), vec![2001, 2002, 2003]);
        assert_eq!(specs[2].quality, Quality::Random);
        assert_eq!(data.server_spec(2).seed, 2000);
    }

    #[test]
    fn seed_lists_parse() {
        assert_eq!(parse_seeds("0, 1,2").unwrap(), vec![0, 1, 2]);
        assert!(parse_seeds("").is_err());
        assert!(parse_seeds("1,x").is_err());
    }
}
