//! Flat TOML run configuration with `key=value` command-line overrides.

use std::path::Path;

use linkpred::baseline::BaselineConfig;
use linkpred::model::{ArchitectureConfig, ConvStage, PredictConfig, TrainConfig};
use linkpred::nn::NadamConfig;
use linkpred::synthetic::SyntheticConfig;
use linkpred::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Evaluation input year; training runs on `input_year - 3 -> input_year`.
    pub input_year: Option<i32>,
    pub n_pairs: usize,
    pub seed: u64,
    pub workers: usize,

    pub sort_k: usize,
    pub gcn_channels: Vec<usize>,
    /// Comma-separated filter counts, `M` for max pooling.
    pub conv_stack: String,
    pub conv_kernel: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
    pub dense_sizes: Vec<usize>,
    pub l_max: u32,
    pub hops: usize,
    pub keep_fraction: f64,

    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub type2_zero: bool,

    pub baseline_hidden: usize,
    pub baseline_learning_rate: f64,
    pub baseline_epochs: usize,

    pub n_per_label: usize,

    pub synthetic_nodes: usize,
    pub synthetic_communities: usize,
}

impl Default for Config {
    fn default() -> Self {
        let arch = ArchitectureConfig::paper(200);
        let train = TrainConfig::default();
        let opt = train.optimizer;
        let base = BaselineConfig::default();
        let syn = SyntheticConfig::default();
        Self {
            input_year: None,
            n_pairs: 2000,
            seed: 0,
            workers: 1,
            sort_k: arch.sort_k,
            gcn_channels: arch.gcn_channels,
            conv_stack: join(&arch.conv_stack),
            conv_kernel: arch.conv_kernel,
            pool_window: arch.pool_window,
            pool_stride: arch.pool_stride,
            dense_sizes: arch.dense_sizes,
            l_max: arch.l_max,
            hops: arch.hops,
            keep_fraction: arch.keep_fraction,
            learning_rate: opt.learning_rate,
            beta1: opt.beta1,
            beta2: opt.beta2,
            epsilon: opt.epsilon,
            batch_size: train.batch_size,
            epochs: train.epochs,
            patience: train.patience,
            validation_fraction: train.validation_fraction,
            type2_zero: false,
            baseline_hidden: base.hidden,
            baseline_learning_rate: base.learning_rate,
            baseline_epochs: base.epochs,
            n_per_label: 100,
            synthetic_nodes: syn.num_nodes,
            synthetic_communities: syn.communities,
        }
    }
}

fn join(stack: &[ConvStage]) -> String {
    stack.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

/// Parses an override value as TOML, falling back to a bare string.
fn override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

impl Config {
    /// Reads `path` (if any) and applies `key=value` overrides on top.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                })?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {}", p.display(), e.message())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            table.insert(key.trim().to_string(), override_value(raw.trim()));
        }
        let config: Config = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        self.architecture()?.plan()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.baseline_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("beta1 and beta2 must be in [0, 1)".into()));
        }
        if self.batch_size != 1 {
            return Err(Error::Config(format!("batch_size must be 1, got {}", self.batch_size)));
        }
        Ok(())
    }

    pub fn input_year(&self) -> Result<i32> {
        self.input_year
            .ok_or_else(|| Error::Config("missing config key `input_year`".into()))
    }

    pub fn architecture(&self) -> Result<ArchitectureConfig> {
        let conv_stack = self
            .conv_stack
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<ConvStage>>>()?;
        Ok(ArchitectureConfig {
            gcn_channels: self.gcn_channels.clone(),
            sort_k: self.sort_k,
            conv_stack,
            conv_kernel: self.conv_kernel,
            pool_window: self.pool_window,
            pool_stride: self.pool_stride,
            dense_sizes: self.dense_sizes.clone(),
            l_max: self.l_max,
            hops: self.hops,
            keep_fraction: self.keep_fraction,
        })
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: NadamConfig {
                learning_rate: self.learning_rate,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }

    pub fn predict_config(&self) -> PredictConfig {
        PredictConfig {
            seed: self.seed,
            type2_zero: self.type2_zero,
            workers: self.workers,
        }
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        BaselineConfig {
            hidden: self.baseline_hidden,
            learning_rate: self.baseline_learning_rate,
            epochs: self.baseline_epochs,
            seed: self.seed,
        }
    }

    pub fn synthetic_config(&self) -> Result<SyntheticConfig> {
        Ok(SyntheticConfig {
            num_nodes: self.synthetic_nodes,
            communities: self.synthetic_communities,
            input_year: self.input_year()?,
            seed: self.seed,
            ..SyntheticConfig::default()
        })
    }
}
