use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chanae_core::experiment::{StudyKind, SweepConfig, TrainConfig};
use chanae_core::modem::NetworkSpec;
use chanae_core::Network;
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default = "default_examples")]
    pub n_examples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_examples() -> usize {
    10_000
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            n_examples: default_examples(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub kind: StudyKind,
    pub grid: Vec<f64>,
}

fn default_train() -> TrainConfig {
    TrainConfig::desk(0)
}

fn default_sweep() -> SweepConfig {
    SweepConfig::new(vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0], 0)
}

/// One JSON document describing a run.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkSpec,
    #[serde(default)]
    pub init_seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default = "default_train")]
    pub train: TrainConfig,
    #[serde(default = "default_sweep")]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub study: Option<StudyConfig>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// JSON pointers of seeds absent from the document.
    #[serde(skip)]
    pub missing_seeds: Vec<&'static str>,
}

const SEED_KEYS: [&str; 4] = ["/init_seed", "/data/seed", "/train/seed", "/sweep/seed"];

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let mut cfg: RunConfig = serde_path_to_error::deserialize(raw.clone()).map_err(|e| {
            let path = e.path().to_string();
            anyhow::anyhow!("at key \"{path}\": {}", e.into_inner())
        })?;
        cfg.missing_seeds = SEED_KEYS.into_iter().filter(|k| raw.pointer(k).is_none()).collect();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Fills seeds the document left out, from `--seed` or with 0.
    pub fn resolve_seeds(&mut self, flag: Option<u64>, used: &[&str]) {
        for key in self.missing_seeds.clone() {
            let value = match flag {
                Some(s) => s,
                None => {
                    if used.contains(&key) {
                        eprintln!("warning: seed {key} not set, using 0");
                    }
                    0
                }
            };
            match key {
                "/init_seed" => self.init_seed = value,
                "/data/seed" => self.data.seed = value,
                "/train/seed" => self.train.seed = value,
                _ => self.sweep.seed = value,
            }
        }
        self.missing_seeds.clear();
    }

    fn validate(&self) -> Result<()> {
        let keyed = |key: &str, r: chanae_core::Result<()>| r.with_context(|| format!("key \"{key}\""));
        keyed("network.arch", self.network.arch.validate())?;
        keyed("network.channel", self.network.channel.validate())?;
        keyed("network.loss", self.network.loss.validate())?;
        keyed("train", self.train.validate())?;
        keyed("sweep", self.sweep.validate())?;
        if self.data.n_examples < 10 {
            bail!("key \"data.n_examples\": need at least 10 examples, got {}", self.data.n_examples);
        }
        if let Some(s) = &self.study {
            if s.grid.is_empty() {
                bail!("key \"study.grid\": grid is empty");
            }
        }
        keyed("network", Network::build(self.network.clone(), 0).map(|_| ()))?;
        Ok(())
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> Result<PathBuf> {
        match flag.map(Path::to_path_buf).or_else(|| self.out.clone()) {
            Some(p) => Ok(p),
            None => bail!("no output directory: set \"out\" in the config or pass --out"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "network": {
            "arch": {"kind": "cnn", "n_bits": 16, "filters": 4, "kernel_len": 3},
            "channel": {"snr_db": 5.0},
            "loss": {"function": "mse"}
        }
    }"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.train.epochs, 20);
        assert_eq!(cfg.data.n_examples, 10_000);
        assert_eq!(cfg.missing_seeds.len(), 4);
    }

    #[test]
    fn errors_name_the_key() {
        let bad = MINIMAL.replacen('{', r#"{"train": {"epochs": -3},"#, 1);
        let msg = format!("{:#}", RunConfig::parse(&bad).unwrap_err());
        assert!(msg.contains("train.epochs"), "{msg}");
        let bad = MINIMAL.replacen('{', r#"{"trian": {},"#, 1);
        let msg = format!("{:#}", RunConfig::parse(&bad).unwrap_err());
        assert!(msg.contains("trian"), "{msg}");
        let bad = MINIMAL.replacen('{', r#"{"train": {"epochs": 0},"#, 1);
        let msg = format!("{:#}", RunConfig::parse(&bad).unwrap_err());
        assert!(msg.contains("epochs"), "{msg}");
    }

    #[test]
    fn seed_flag_fills_only_missing_seeds() {
        let text = MINIMAL.replacen('{', r#"{"init_seed": 9,"#, 1);
        let mut cfg = RunConfig::parse(&text).unwrap();
        cfg.resolve_seeds(Some(4), &[]);
        assert_eq!((cfg.init_seed, cfg.data.seed, cfg.train.seed, cfg.sweep.seed), (9, 4, 4, 4));
    }
}
